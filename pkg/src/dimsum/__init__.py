"""Multi-dimensional table summarization with a chain of small agents."""

from dimsum.table import (
    AggregatedMetrics,
    ColumnSchema,
    MetricDelta,
    Period,
    RowSet,
    SliceSpec,
    Table,
    aggregate,
    compute_all_deltas,
    compute_delta,
    load_table,
    prev_month,
    slice_table,
)

__all__ = [
    "AggregatedMetrics",
    "ColumnSchema",
    "MetricDelta",
    "Period",
    "RowSet",
    "SliceSpec",
    "Table",
    "aggregate",
    "compute_all_deltas",
    "compute_delta",
    "load_table",
    "prev_month",
    "slice_table",
]

__version__ = "0.1.0"
