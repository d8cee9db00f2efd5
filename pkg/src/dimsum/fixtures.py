"""The two-row North America / Electronics sample used as golden data."""

from importlib import resources

from dimsum.table import REFERENCE_SCHEMA, SliceSpec, Table, load_month_table

SAMPLE_YEAR = 2024


def sample_table() -> Table:
    with resources.files("dimsum").joinpath("data/sample_slice.csv").open("rb") as fh:
        return load_month_table(fh, REFERENCE_SCHEMA, SAMPLE_YEAR)


def sample_spec(**overrides) -> SliceSpec:
    assignments = {"region": "North America", "product_category": "Electronics"}
    assignments.update(overrides)
    return SliceSpec.build("2024-02", "2024-01", **assignments)
