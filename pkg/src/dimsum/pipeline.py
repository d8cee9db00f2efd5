"""Agent graph over a write-once run state: slice -> variance -> context -> summary."""

from __future__ import annotations

import csv
import io
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from dimsum.backends import GenerationRequest
from dimsum.errors import BackendError, DimsumError, PipelineError, WriteOnceError
from dimsum.prompting import PROFILE_B, build_prompt, get_profile, serialize_prompt
from dimsum.table import (
    DEFAULT_EPSILON,
    Period,
    SliceSpec,
    Table,
    aggregate,
    compute_all_deltas,
    slice_table,
)

RUNNING = "running"
COMPLETED = "completed"
SKIPPED_EMPTY = "skipped-empty-slice"
FAILED = "failed"

SIGNAL_KINDS = ("seasonality", "promotion", "marketing-spend", "anomaly", "free-text")


@dataclass
class TraceEntry:
    node: str
    outcome: str  # ok | skipped | disabled | failed
    duration: float = 0.0
    detail: dict = field(default_factory=dict)

    def to_dict(self, timings=True) -> dict:
        out = {"node": self.node, "outcome": self.outcome}
        if timings:
            out["duration"] = self.duration
        if self.detail:
            out["detail"] = self.detail
        return out


class PipelineState:
    """Keyed store where every key is written at most once per run."""

    def __init__(self):
        self._data = {}
        self.status = RUNNING
        self.trace = []

    def __contains__(self, key):
        return key in self._data

    def __getitem__(self, key):
        return self._data[key]

    def get(self, key, default=None):
        return self._data.get(key, default)

    def set(self, key, value):
        if key in self._data:
            raise WriteOnceError(f"state key {key!r} already written")
        self._data[key] = value

    def keys(self):
        return list(self._data)

    def __len__(self):
        return len(self._data)


def new_state() -> PipelineState:
    return PipelineState()


@dataclass(frozen=True)
class ContextSignal:
    period: Period
    region: str
    product_category: str
    kind: str
    payload: str

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise ValueError(f"unknown signal kind {self.kind!r}")

    def render(self) -> str:
        return f"{self.period} {self.kind}: {self.payload}"


def load_context_store(source) -> list:
    """Read a context CSV with columns period, region, product_category, kind, payload."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return load_context_store(fh)
    if isinstance(source, bytes):
        source = io.StringIO(source.decode("utf-8"))
    reader = csv.DictReader(source)
    need = {"period", "region", "product_category", "kind", "payload"}
    if reader.fieldnames is None or not need <= set(reader.fieldnames):
        raise DimsumError(f"context store needs columns {sorted(need)}")
    return [
        ContextSignal(
            Period.parse(row["period"]), row["region"], row["product_category"], row["kind"], row["payload"]
        )
        for row in reader
    ]


def check_context_store(store: Sequence[ContextSignal], table: Table) -> list:
    """Signals whose region/category never occur in ``table``."""
    names = table.names
    regions = set(table.column("region")) if "region" in names else None
    cats = set(table.column("product_category")) if "product_category" in names else None
    bad = []
    for s in store:
        if (regions is not None and s.region not in regions) or (cats is not None and s.product_category not in cats):
            bad.append(s)
    return bad


@dataclass(frozen=True)
class AblationConfig:
    variance_enabled: bool = True
    context_enabled: bool = True

    @property
    def disabled(self) -> set:
        out = set()
        if not self.variance_enabled:
            out.add("variance")
        if not self.context_enabled:
            out.add("context")
        return out

    @property
    def label(self) -> str:
        if self.variance_enabled and self.context_enabled:
            return "full"
        return "+".join(f"no-{name}" for name in sorted(self.disabled))


FULL = AblationConfig()
NO_CONTEXT = AblationConfig(context_enabled=False)
NO_VARIANCE = AblationConfig(variance_enabled=False)


# -- agents ------------------------------------------------------------------


def _require_running(state: PipelineState):
    if state.status != RUNNING:
        raise PipelineError(f"state is {state.status}, expected running")


def slice_agent(state: PipelineState, table: Table, spec: SliceSpec) -> PipelineState:
    if "slice_spec" in state:
        raise WriteOnceError("state already holds a slice; start a new state per run")
    _require_running(state)
    state.set("slice_spec", spec)
    previous, current = slice_table(table, spec)
    state.set("slice_pair", (previous, current))
    state.set("aggregates", (aggregate(previous, table.schema, spec.previous), aggregate(current, table.schema, spec.current)))
    if len(previous) == 0 and len(current) == 0:
        state.status = SKIPPED_EMPTY
    return state


def variance_agent(state: PipelineState, epsilon: float = DEFAULT_EPSILON) -> PipelineState:
    _require_running(state)
    if "aggregates" not in state:
        raise PipelineError("variance needs aggregates; run the slice agent first")
    previous, current = state["aggregates"]
    state.set("deltas", compute_all_deltas(current, previous, epsilon))
    return state


def context_agent(state: PipelineState, store: Sequence[ContextSignal]) -> PipelineState:
    _require_running(state)
    if "slice_spec" not in state:
        raise PipelineError("context needs a slice spec")
    spec = state["slice_spec"]
    region, category = spec.get("region"), spec.get("product_category")
    found = []
    for period in (spec.current, spec.previous):
        found += [s for s in store if s.period == period and s.region == region and s.product_category == category]
    state.set("context_signals", found)
    return state


def summary_agent(state: PipelineState, backend, profile=PROFILE_B, max_tokens: int = 512) -> PipelineState:
    _require_running(state)
    spec = state["slice_spec"]
    variance_ran = "deltas" in state
    source = state["deltas"] if variance_ran else state["aggregates"]
    signals = [s.render() for s in state.get("context_signals", [])]
    envelope = build_prompt(source, spec, signals, get_profile(profile), variance_enabled=variance_ran)
    state.set("prompt_envelope", envelope)
    text = serialize_prompt(envelope)
    state.set("prompt_text", text)
    response = backend.generate(GenerationRequest(text, max_tokens))
    state.set("summary", response.text)
    state.set("backend_attempts", response.attempts)
    state.status = COMPLETED
    return state


# -- graph -------------------------------------------------------------------


@dataclass
class RunInputs:
    table: Table
    spec: SliceSpec
    context_store: Sequence[ContextSignal] = ()
    backend: object = None
    profile: object = PROFILE_B
    epsilon: float = DEFAULT_EPSILON
    max_tokens: int = 512


@dataclass
class AgentNode:
    name: str
    transform: Callable[[PipelineState, RunInputs], PipelineState]
    guard: Optional[Callable[[PipelineState], bool]] = None


def is_running(state: PipelineState) -> bool:
    return state.status == RUNNING


@dataclass
class PipelineGraph:
    nodes: list = field(default_factory=list)

    @property
    def names(self) -> list:
        return [n.name for n in self.nodes]

    def register(self, node: AgentNode, position: Optional[int] = None) -> "PipelineGraph":
        return register_node(self, node, position)


def register_node(graph: PipelineGraph, node: AgentNode, position: Optional[int] = None) -> PipelineGraph:
    """Insert ``node`` at ``position`` (default: append). Names must be unique."""
    if node.name in graph.names:
        raise PipelineError(f"a node named {node.name!r} is already registered")
    if position is None:
        graph.nodes.append(node)
    else:
        graph.nodes.insert(position, node)
    return graph


def default_graph() -> PipelineGraph:
    graph = PipelineGraph()
    graph.register(AgentNode("slice", lambda s, r: slice_agent(s, r.table, r.spec)))
    graph.register(AgentNode("variance", lambda s, r: variance_agent(s, r.epsilon), guard=is_running))
    graph.register(AgentNode("context", lambda s, r: context_agent(s, r.context_store), guard=is_running))
    graph.register(
        AgentNode("summary", lambda s, r: summary_agent(s, r.backend, r.profile, r.max_tokens), guard=is_running)
    )
    return graph


@dataclass
class RunResult:
    status: str
    summary: Optional[str]
    state: PipelineState
    error: Optional[str] = None

    @property
    def trace(self) -> list:
        return self.state.trace

    @property
    def prompt(self) -> Optional[str]:
        return self.state.get("prompt_text")

    def report(self) -> str:
        if self.status == COMPLETED:
            return self.summary
        if self.status == SKIPPED_EMPTY:
            spec = self.state.get("slice_spec")
            return f"empty slice: no rows for {spec.label if spec else 'the requested slice'}; summary skipped"
        return f"pipeline failed: {self.error}"

    def trace_dict(self, timings=True) -> list:
        return [e.to_dict(timings) for e in self.trace]


def run_pipeline(
    graph: Optional[PipelineGraph],
    table: Table,
    spec: SliceSpec,
    context_store: Sequence[ContextSignal] = (),
    backend=None,
    ablation: AblationConfig = FULL,
    profile=PROFILE_B,
    epsilon: float = DEFAULT_EPSILON,
    state: Optional[PipelineState] = None,
) -> RunResult:
    """Run every registered node in order and return the summary (or why there is none)."""
    graph = graph or default_graph()
    inputs = RunInputs(table, spec, context_store, backend, profile, epsilon)
    state = state if state is not None else new_state()
    disabled = ablation.disabled
    error = None
    for node in graph.nodes:
        if node.name in disabled:
            state.trace.append(TraceEntry(node.name, "disabled"))
            continue
        if node.guard is not None and not node.guard(state):
            state.trace.append(TraceEntry(node.name, "skipped"))
            continue
        start = time.perf_counter()
        try:
            node.transform(state, inputs)
        except (DimsumError, ValueError, KeyError) as exc:
            detail = {"error": f"{type(exc).__name__}: {exc}"}
            if isinstance(exc, BackendError):
                detail["attempts"] = exc.attempts
            state.trace.append(TraceEntry(node.name, "failed", time.perf_counter() - start, detail))
            state.status = FAILED
            error = detail["error"]
            break
        detail = {}
        if node.name == "summary" and "backend_attempts" in state:
            detail["attempts"] = state["backend_attempts"]
        state.trace.append(TraceEntry(node.name, "ok", time.perf_counter() - start, detail))
    if state.status == RUNNING and error is None:
        # graph ended without a summary node completing the run
        state.status = COMPLETED if "summary" in state else FAILED
        if state.status == FAILED:
            error = "graph finished without producing a summary"
    return RunResult(state.status, state.get("summary"), state, error)
