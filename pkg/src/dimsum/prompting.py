"""Structured prompt construction, its canonical JSON form, and the two baselines."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

from dimsum.errors import ConsistencyError
from dimsum.table import AggregatedMetrics, MetricDelta, RowSet, SliceSpec

PROFILE_A_INSTRUCTIONS = (
    "Please quantify numbers for units_sold and sales_revenue provided in metrics. "
    "Focus on comparison with previous month."
)

FLAT_INSTRUCTIONS = (
    "Given the following structured summary task,\n"
    "write a concise business insight highlighting\n"
    "the numbers passed in the prompt."
)

FLAT_LABELS = {"sales_revenue": "Revenue", "units_sold": "Units"}


@dataclass(frozen=True)
class SerializationProfile:
    variant: str
    delta_decimals: int = 2
    value_decimals: int = 2
    tone: str = "executive"

    def __post_init__(self):
        if self.variant not in ("A", "B"):
            raise ValueError(f"profile variant must be A or B, got {self.variant!r}")

    @property
    def task(self) -> str:
        return "summarize_sales_data" if self.variant == "A" else "summarize_table_slice"

    @property
    def context_key(self) -> str:
        return "context" if self.variant == "A" else "dimension_context"

    @property
    def includes_deltas(self) -> bool:
        return self.variant == "B"


PROFILE_A = SerializationProfile("A")
PROFILE_B = SerializationProfile("B")


def get_profile(name) -> SerializationProfile:
    if isinstance(name, SerializationProfile):
        return name
    return {"A": PROFILE_A, "B": PROFILE_B}[str(name).upper()]


@dataclass
class PromptEnvelope:
    task: str
    context_key: str
    dimension_context: dict
    metrics: dict
    trailer_key: str
    trailer: str
    context_signals: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {
            "task": self.task,
            self.context_key: dict(self.dimension_context),
            "metrics": {k: dict(v) for k, v in self.metrics.items()},
        }
        if self.context_signals:
            out["context_signals"] = list(self.context_signals)
        out[self.trailer_key] = self.trailer
        return out


def format_number(value) -> str:
    """Shortest faithful text for a number; integral values lose their ``.0``."""
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return repr(value) if isinstance(value, float) else str(value)


def _round(value: float, places: int):
    r = round(value, places)
    if isinstance(r, float) and r.is_integer():
        return int(r)
    return r


def _dimension_context(spec: SliceSpec) -> dict:
    ctx = {}
    for key in ("region", "product_category"):
        value = spec.get(key)
        if value is not None:
            ctx[key] = value
    for key, value in spec.assignments:
        if key not in ctx:
            ctx[key] = value
    ctx["time_period"] = f"{spec.current} vs {spec.previous}"
    return ctx


def build_prompt(
    source,
    spec: SliceSpec,
    signals: Sequence[str] = (),
    profile: SerializationProfile = PROFILE_B,
    variance_enabled: bool = True,
) -> PromptEnvelope:
    """Assemble the prompt envelope.

    ``source`` is either the list of ``MetricDelta`` from the variance step, or a
    ``(previous, current)`` pair of ``AggregatedMetrics`` when no deltas exist.
    """
    profile = get_profile(profile)
    if isinstance(source, tuple) and len(source) == 2 and isinstance(source[0], AggregatedMetrics):
        previous, current = source
        if profile.includes_deltas and variance_enabled:
            raise ConsistencyError("profile B with variance enabled needs deltas, got aggregates")
        rows = [(name, current.values[name], previous.values[name], None) for name in current.values]
    else:
        rows = []
        for md in source:
            if not isinstance(md, MetricDelta):
                raise TypeError(f"expected MetricDelta, got {type(md).__name__}")
            keep = profile.includes_deltas and not md.baseline_zero
            rows.append((md.measure, md.current, md.previous, md.delta if keep else None))

    metrics = {}
    for name, cur, prev, delta in rows:
        entry = {
            "current": _round(cur, profile.value_decimals),
            "previous": _round(prev, profile.value_decimals),
        }
        if delta is not None:
            entry["delta_percent"] = _round(delta, profile.delta_decimals)
        metrics[name] = entry

    if profile.variant == "A":
        trailer_key, trailer = "instructions", PROFILE_A_INSTRUCTIONS
    else:
        trailer_key, trailer = "expected_tone", profile.tone
    return PromptEnvelope(
        task=profile.task,
        context_key=profile.context_key,
        dimension_context=_dimension_context(spec),
        metrics=metrics,
        trailer_key=trailer_key,
        trailer=trailer,
        context_signals=list(signals),
    )


def _canonical(value):
    if isinstance(value, dict):
        return {str(k): _canonical(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite number in prompt: {value}")
        return int(value) if value.is_integer() else value
    return value


def canonical_json(obj) -> str:
    return json.dumps(_canonical(obj), indent=2, ensure_ascii=False)


def serialize_prompt(envelope: PromptEnvelope) -> str:
    return canonical_json(envelope.to_dict())


def build_flat_prompt(slice_pair, spec: SliceSpec) -> str:
    """Flat baseline: every sliced row as a text line plus a generic instruction."""
    previous, current = slice_pair
    if isinstance(previous, RowSet) and isinstance(current, RowSet):
        table = previous.table
        rows = [table.rows[i] for i in sorted(set(previous.indices) | set(current.indices))]
        schema = table.schema
    else:
        raise TypeError("slice_pair must be two RowSets from slice_table")
    names = [c.name for c in schema]
    di = next(i for i, c in enumerate(schema) if c.kind == "date")
    ri = names.index("region") if "region" in names else None
    measures = [(i, c.name) for i, c in enumerate(schema) if c.kind == "measure"]
    lines = ["Table:"]
    for row in rows:
        region = row[ri] if ri is not None else spec.get("region", "")
        day = row[di]
        cells = ", ".join(
            f"{FLAT_LABELS.get(name, name.replace('_', ' ').capitalize())}: {format_number(row[i])}"
            for i, name in measures
        )
        lines.append(f"{region} | {day.month:02d}/{day.year:04d} | {cells}")
    return "\n".join(lines) + "\n\n" + FLAT_INSTRUCTIONS


def measure_label(name: str) -> str:
    return name.replace("_", " ").capitalize()


def template_nlg(deltas: Sequence[MetricDelta], spec: SliceSpec) -> str:
    """Template baseline: one fixed sentence per measure, filled from computed deltas."""
    where = " ".join(v for _, v in spec.assignments)
    when = f"({spec.current} vs {spec.previous})"
    sentences = []
    for md in deltas:
        label = measure_label(md.measure)
        if md.baseline_zero:
            sentences.append(f"{label} started from zero at {format_number(_round(md.current, 2))} in {where} {when}.")
            continue
        if md.delta > 0:
            verb = "increased"
        elif md.delta < 0:
            verb = "decreased"
        else:
            verb = "was unchanged"
        sentences.append(f"{label} {verb} by {abs(md.delta) * 100:.1f}% in {where} {when}.")
    return " ".join(sentences)
