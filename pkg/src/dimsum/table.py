"""Dimensional tables: loading, slicing, monthly aggregation and relative deltas."""

from __future__ import annotations

import csv
import io
import math
import os
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

from dimsum.errors import (
    CellTypeError,
    ConsistencyError,
    CsvParseError,
    NumericDomainError,
    SchemaError,
    SliceSpecError,
)

DEFAULT_EPSILON = 1e-9

KINDS = ("dimension", "measure", "date")
VALUE_TYPES = ("text", "decimal", "integer", "calendar-date")

MONTH_NAMES = {
    name.lower(): i
    for i, name in enumerate(
        [
            "January", "February", "March", "April", "May", "June",
            "July", "August", "September", "October", "November", "December",
        ],
        start=1,
    )
}


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str
    value_type: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.value_type not in VALUE_TYPES:
            raise SchemaError(f"column {self.name!r}: unknown value type {self.value_type!r}")
        if self.kind == "date" and self.value_type != "calendar-date":
            raise SchemaError(f"date column {self.name!r} must be calendar-date")
        if self.kind == "measure" and self.value_type not in ("decimal", "integer"):
            raise SchemaError(f"measure column {self.name!r} must be decimal or integer")


def validate_schema(schema: Sequence[ColumnSchema]) -> None:
    names = [c.name for c in schema]
    if len(set(names)) != len(names):
        raise SchemaError(f"duplicate column names in {names}")
    kinds = [c.kind for c in schema]
    if kinds.count("date") != 1:
        raise SchemaError("schema needs exactly one date column")
    if "dimension" not in kinds or "measure" not in kinds:
        raise SchemaError("schema needs at least one dimension and one measure column")


# Reference dataset layout: region, product_category, date, sales_revenue, units_sold.
REFERENCE_SCHEMA = (
    ColumnSchema("region", "dimension", "text"),
    ColumnSchema("product_category", "dimension", "text"),
    ColumnSchema("date", "date", "calendar-date"),
    ColumnSchema("sales_revenue", "measure", "decimal"),
    ColumnSchema("units_sold", "measure", "integer"),
)

EXTENDED_SCHEMA = REFERENCE_SCHEMA + (
    ColumnSchema("discount_percent", "measure", "decimal"),
    ColumnSchema("marketing_spend", "measure", "decimal"),
)


@dataclass(frozen=True, order=True)
class Period:
    """A calendar month."""

    year: int
    month: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValueError(f"month out of range: {self.month}")

    @classmethod
    def parse(cls, text: str) -> "Period":
        try:
            year, month = text.strip().split("-")
            return cls(int(year), int(month))
        except ValueError:
            raise ValueError(f"expected a YYYY-MM period, got {text!r}") from None

    @classmethod
    def of(cls, day: date) -> "Period":
        return cls(day.year, day.month)

    @property
    def ordinal(self) -> int:
        return self.year * 12 + self.month - 1

    def contains(self, day: date) -> bool:
        return day.year == self.year and day.month == self.month

    def __str__(self):
        return f"{self.year:04d}-{self.month:02d}"


def prev_month(period: Period) -> Period:
    if period.month == 1:
        return Period(period.year - 1, 12)
    return Period(period.year, period.month - 1)


@dataclass(frozen=True)
class SliceSpec:
    """Dimension assignments plus the compared periods (``current`` is t2, ``previous`` is t1)."""

    assignments: tuple
    current: Period
    previous: Period

    def __post_init__(self):
        object.__setattr__(self, "assignments", tuple((str(k), str(v)) for k, v in self.assignments))
        names = [k for k, _ in self.assignments]
        if len(set(names)) != len(names):
            raise SliceSpecError(f"duplicate dimension names in slice: {names}")
        if self.current == self.previous:
            raise SliceSpecError(f"current and previous period are both {self.current}")

    @classmethod
    def build(cls, current, previous=None, **assignments) -> "SliceSpec":
        if isinstance(current, str):
            current = Period.parse(current)
        if previous is None:
            previous = prev_month(current)
        elif isinstance(previous, str):
            previous = Period.parse(previous)
        return cls(tuple(assignments.items()), current, previous)

    def get(self, name, default=None):
        for k, v in self.assignments:
            if k == name:
                return v
        return default

    def validate(self, schema: Sequence[ColumnSchema]) -> None:
        dims = {c.name for c in schema if c.kind == "dimension"}
        for name, _ in self.assignments:
            if name not in dims:
                raise SliceSpecError(f"unknown dimension {name!r}; known: {sorted(dims)}")

    @property
    def label(self) -> str:
        parts = [v for _, v in self.assignments]
        return "/".join(parts + [f"{self.current} vs {self.previous}"])


@dataclass(frozen=True, eq=False)
class Table:
    schema: tuple
    rows: tuple

    def __post_init__(self):
        object.__setattr__(self, "schema", tuple(self.schema))
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))
        validate_schema(self.schema)
        d = len(self.schema)
        for i, row in enumerate(self.rows):
            if len(row) != d:
                raise SchemaError(f"row {i} has {len(row)} cells, schema has {d}")

    @property
    def n(self) -> int:
        return len(self.rows)

    @property
    def d(self) -> int:
        return len(self.schema)

    @property
    def names(self) -> list:
        return [c.name for c in self.schema]

    def index_of(self, name: str) -> int:
        for i, c in enumerate(self.schema):
            if c.name == name:
                return i
        raise SchemaError(f"no column named {name!r}")

    @property
    def date_index(self) -> int:
        return next(i for i, c in enumerate(self.schema) if c.kind == "date")

    @property
    def measures(self) -> list:
        return [c for c in self.schema if c.kind == "measure"]

    @property
    def dimensions(self) -> list:
        return [c for c in self.schema if c.kind == "dimension"]

    def column(self, name: str) -> list:
        i = self.index_of(name)
        return [row[i] for row in self.rows]

    def take(self, indices: Iterable[int]) -> "Table":
        return Table(self.schema, [self.rows[i] for i in indices])

    @cached_property
    def _index(self):
        # (column position, value) -> row indices; (None, period ordinal) for months
        index = defaultdict(list)
        dims = [i for i, c in enumerate(self.schema) if c.kind == "dimension"]
        di = self.date_index
        for r, row in enumerate(self.rows):
            for i in dims:
                index[(i, row[i])].append(r)
            day = row[di]
            index[(None, day.year * 12 + day.month - 1)].append(r)
        return index


@dataclass(frozen=True, eq=False)
class RowSet:
    """A subset of a table's rows, kept in table order."""

    table: Table
    indices: tuple

    @property
    def rows(self) -> list:
        return [self.table.rows[i] for i in self.indices]

    def __iter__(self):
        return iter(self.rows)

    def __len__(self):
        return len(self.indices)

    def as_table(self) -> Table:
        return self.table.take(self.indices)


class AggregatedMetrics(NamedTuple):
    period: Period
    values: dict
    row_count: int

    @property
    def empty(self) -> bool:
        return self.row_count == 0


class MetricDelta(NamedTuple):
    measure: str
    current: float
    previous: float
    delta: float
    baseline_zero: bool


class DeltaValue(NamedTuple):
    delta: float
    baseline_zero: bool


def _parse_cell(col: ColumnSchema, text: str, line: int, month_year=None):
    if text == "":
        if col.kind in ("dimension", "date"):
            raise CellTypeError(col.name, line, text, f"non-empty {col.value_type}")
    vt = col.value_type
    if vt == "text":
        return text
    if vt == "calendar-date":
        if month_year is not None:
            month = MONTH_NAMES.get(text.strip().lower())
            if month is None:
                raise CellTypeError(col.name, line, text, "month name")
            return date(month_year, month, 1)
        try:
            return date.fromisoformat(text.strip())
        except ValueError:
            raise CellTypeError(col.name, line, text, "YYYY-MM-DD date") from None
    if vt == "integer":
        try:
            return int(text.strip())
        except ValueError:
            raise CellTypeError(col.name, line, text, "integer") from None
    try:
        value = float(text.strip())
    except ValueError:
        raise CellTypeError(col.name, line, text, "decimal") from None
    if not math.isfinite(value):
        raise CellTypeError(col.name, line, text, "finite decimal")
    return value


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8"), True
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"), newline=""), True
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return io.StringIO(data, newline=""), True


def _read(source, schema, month_year=None) -> Table:
    schema = tuple(schema)
    validate_schema(schema)
    fh, close = _open_text(source)
    try:
        reader = csv.reader(fh, strict=True)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError("missing header row", 1) from None
        except csv.Error as exc:
            raise CsvParseError(str(exc), reader.line_num) from None
        header = [h.strip() for h in header]
        missing = [c.name for c in schema if c.name not in header]
        if missing:
            raise SchemaError(f"CSV header lacks schema columns {missing}")
        extra = [h for h in header if h not in {c.name for c in schema}]
        if extra:
            warnings.warn(f"ignoring CSV columns not in schema: {extra}", stacklevel=3)
        positions = [header.index(c.name) for c in schema]
        width = len(header)
        rows = []
        while True:
            try:
                record = next(reader)
            except StopIteration:
                break
            except csv.Error as exc:
                raise CsvParseError(str(exc), reader.line_num) from None
            line = reader.line_num
            if not record:
                continue
            if len(record) != width:
                raise CsvParseError(f"expected {width} fields, got {len(record)}", line)
            rows.append(
                tuple(
                    _parse_cell(col, record[p], line, month_year if col.kind == "date" else None)
                    for col, p in zip(schema, positions)
                )
            )
    finally:
        if close:
            fh.close()
    return Table(schema, rows)


def load_table(source, schema: Sequence[ColumnSchema] = REFERENCE_SCHEMA) -> Table:
    """Parse CSV text (path, bytes or file object) into a typed table.

    Dates must be ISO ``YYYY-MM-DD``. Columns absent from ``schema`` are dropped
    with a warning; row order is preserved.
    """
    return _read(source, schema)


def load_month_table(source, schema: Sequence[ColumnSchema], year: int) -> Table:
    """Load a fixture whose date column holds month names ("January") for a given year.

    Each month name becomes the first day of that month.
    """
    if not isinstance(year, int):
        raise TypeError("year must be given explicitly as an int")
    return _read(source, schema, month_year=year)


def slice_table(table: Table, spec: SliceSpec) -> tuple:
    """Return ``(previous_rows, current_rows)`` matching every assignment in ``spec``."""
    spec.validate(table.schema)
    index = table._index
    candidates = None
    for name, value in spec.assignments:
        hits = index.get((table.index_of(name), value), ())
        candidates = set(hits) if candidates is None else candidates & set(hits)
    out = []
    for period in (spec.previous, spec.current):
        in_month = index.get((None, period.ordinal), ())
        if candidates is None:
            chosen = tuple(in_month)
        else:
            chosen = tuple(r for r in in_month if r in candidates)
        out.append(RowSet(table, chosen))
    return out[0], out[1]


def aggregate(rows: Iterable[Sequence], schema: Sequence[ColumnSchema], period: Period) -> AggregatedMetrics:
    measures = [(i, c.name) for i, c in enumerate(schema) if c.kind == "measure"]
    columns = {name: [] for _, name in measures}
    count = 0
    for row in rows:
        count += 1
        for i, name in measures:
            columns[name].append(row[i])
    values = {name: math.fsum(vals) if vals else 0.0 for name, vals in columns.items()}
    return AggregatedMetrics(period, values, count)


def compute_delta(current: float, previous: float, epsilon: float = DEFAULT_EPSILON) -> DeltaValue:
    """Relative change ``(current - previous) / (previous + epsilon)``.

    The ratio is always evaluated; ``baseline_zero`` marks a zero previous value,
    where the ratio is numerically meaningless.
    """
    for name, value in (("current", current), ("previous", previous), ("epsilon", epsilon)):
        if not math.isfinite(value):
            raise NumericDomainError(f"{name} is not finite: {value!r}")
    if epsilon < 0:
        raise NumericDomainError(f"epsilon must be non-negative, got {epsilon}")
    denominator = previous + epsilon
    if denominator == 0:
        raise NumericDomainError("previous + epsilon is zero")
    return DeltaValue((current - previous) / denominator, previous == 0)


def compute_all_deltas(
    current: AggregatedMetrics, previous: AggregatedMetrics, epsilon: float = DEFAULT_EPSILON
) -> list:
    if list(current.values) != list(previous.values):
        raise ConsistencyError(
            f"measure sets differ: {list(current.values)} vs {list(previous.values)}"
        )
    out = []
    for name, cur in current.values.items():
        prev = previous.values[name]
        d = compute_delta(cur, prev, epsilon)
        out.append(MetricDelta(name, cur, prev, d.delta, d.baseline_zero))
    return out
