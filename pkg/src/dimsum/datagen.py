"""Seeded synthetic retail transactions with seasonality and promotion months."""

from __future__ import annotations

import csv
import random
from datetime import date, timedelta
from pathlib import Path

REGIONS = ("North America", "Europe", "Asia Pacific", "Latin America")
CATEGORIES = ("Electronics", "Clothing", "Home", "Sports", "Toys")

# category -> (unit price, typical units per transaction)
BASE = {
    "Electronics": (420.0, 3),
    "Clothing": (45.0, 6),
    "Home": (85.0, 4),
    "Sports": (60.0, 5),
    "Toys": (30.0, 7),
}

SEASONALITY = {1: 0.85, 2: 0.8, 3: 0.9, 4: 0.95, 5: 1.0, 6: 1.05, 7: 1.0, 8: 1.0, 9: 0.95, 10: 1.05, 11: 1.35, 12: 1.5}
SEASON_NOTES = {11: "holiday season ramp-up", 12: "holiday peak", 1: "post-holiday slowdown", 2: "late-winter lull"}

# category -> {month: promotion name}
PROMOTIONS = {
    "Electronics": {2: "President's Day sale", 11: "Black Friday"},
    "Clothing": {7: "summer clearance", 1: "winter clearance"},
    "Home": {5: "spring refresh event"},
    "Sports": {6: "outdoor season kickoff"},
    "Toys": {12: "holiday toy drive"},
}

COLUMNS = ["region", "product_category", "date", "sales_revenue", "units_sold", "discount_percent", "marketing_spend"]


def generate_rows(rows: int, seed: int, start: date = date(2023, 1, 1), months: int = 24) -> list:
    if rows <= 0:
        raise ValueError("rows must be positive")
    rng = random.Random(seed)
    end = date(start.year + (start.month - 1 + months) // 12, (start.month - 1 + months) % 12 + 1, 1)
    span = (end - start).days
    region_factor = {r: rng.uniform(0.7, 1.3) for r in REGIONS}
    out = []
    for _ in range(rows):
        region = rng.choice(REGIONS)
        category = rng.choice(CATEGORIES)
        day = start + timedelta(days=rng.randrange(span))
        price, typical = BASE[category]
        promo = PROMOTIONS[category].get(day.month)
        discount = rng.uniform(15, 30) if promo else rng.uniform(0, 8)
        lift = SEASONALITY[day.month] * region_factor[region] * (1.4 if promo else 1.0)
        units = max(1, round(rng.gauss(typical * lift, typical * 0.4)))
        unit_price = price * rng.uniform(0.85, 1.15) * (1 - discount / 100)
        revenue = round(units * unit_price, 2)
        spend = round(revenue * rng.uniform(0.03, 0.08) * (1.5 if promo else 1.0), 2)
        out.append((region, category, day.isoformat(), revenue, units, round(discount, 2), spend))
    out.sort(key=lambda r: r[2])
    return out


def context_signals(start: date = date(2023, 1, 1), months: int = 24) -> list:
    """Rows for the context store matching the generator's built-in seasonality and promotions."""
    out = []
    y, m = start.year, start.month
    for _ in range(months):
        period = f"{y:04d}-{m:02d}"
        for region in REGIONS:
            for category in CATEGORIES:
                if m in SEASON_NOTES:
                    out.append((period, region, category, "seasonality", SEASON_NOTES[m]))
                promo = PROMOTIONS[category].get(m)
                if promo:
                    out.append((period, region, category, "promotion", promo))
        m += 1
        if m > 12:
            y, m = y + 1, 1
    return out


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def gen_data(rows: int, seed: int, out, context_out=None) -> Path:
    path = write_csv(out, COLUMNS, generate_rows(rows, seed))
    if context_out is not None:
        write_csv(context_out, ["period", "region", "product_category", "kind", "payload"], context_signals())
    return path
