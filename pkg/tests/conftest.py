import io
import random
from datetime import date

import pytest
from hypothesis import settings

from dimsum.fixtures import sample_spec, sample_table
from dimsum.table import REFERENCE_SCHEMA, Period, SliceSpec, Table

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")

REGIONS = ["North America", "Europe", "Asia Pacific"]
CATEGORIES = ["Electronics", "Toys", "Home"]


@pytest.fixture
def fixture_table():
    return sample_table()


@pytest.fixture
def fixture_spec():
    return sample_spec()


def random_table(n, seed, months=6):
    rng = random.Random(seed)
    rows = []
    for _ in range(n):
        m = rng.randrange(months)
        day = date(2024 + m // 12, m % 12 + 1, rng.randint(1, 28))
        rows.append(
            (rng.choice(REGIONS), rng.choice(CATEGORIES), day, round(rng.uniform(1, 5000), 2), rng.randint(1, 40))
        )
    return Table(REFERENCE_SCHEMA, rows)


def random_spec(rng, months=6):
    cur = rng.randrange(months)
    prev = rng.randrange(months)
    while prev == cur:
        prev = rng.randrange(months)
    as_period = lambda m: Period(2024 + m // 12, m % 12 + 1)  # noqa: E731
    assignments = {}
    if rng.random() < 0.9:
        assignments["region"] = rng.choice(REGIONS + ["EMEA"])
    if rng.random() < 0.8:
        assignments["product_category"] = rng.choice(CATEGORIES)
    return SliceSpec(tuple(assignments.items()), as_period(cur), as_period(prev))


@pytest.fixture(scope="session")
def big_table():
    return random_table(10_000, seed=1234)


class CountingBackend:
    def __init__(self, inner):
        self.inner = inner
        self.calls = 0
        self.prompts = []

    def generate(self, request):
        self.calls += 1
        self.prompts.append(request.prompt)
        return self.inner.generate(request)


def as_csv_bytes(text):
    return io.BytesIO(text.encode("utf-8"))


_acceptance = []


def record_criterion(line):
    _acceptance.append(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance:
            terminalreporter.write_line(line)
