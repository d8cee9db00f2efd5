"""Faithfulness, coverage and relevance scoring plus the batch and ablation harnesses."""

from __future__ import annotations

import bisect
import csv
import io
import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

from dimsum.backends import ConstantJudge, GenerationRequest
from dimsum.errors import DimsumError, JudgeFormatError
from dimsum.pipeline import (
    COMPLETED,
    FULL,
    NO_CONTEXT,
    NO_VARIANCE,
    SKIPPED_EMPTY,
    AblationConfig,
    default_graph,
    run_pipeline,
)
from dimsum.prompting import PROFILE_B, build_flat_prompt, canonical_json, template_nlg
from dimsum.table import DEFAULT_EPSILON, MetricDelta, SliceSpec, Table, aggregate, compute_all_deltas, slice_table

INCREASE_WORDS = frozenset(
    "increase increased increases increasing rose rise rises rising grew grow grows growing "
    "up gained gain gains higher jumped climbed".split()
)
DECREASE_WORDS = frozenset(
    "decrease decreased decreases decreasing fell fall falls falling declined decline declines declining "
    "down dropped drop drops lower lost shrank slipped".split()
)
SIGN_WINDOW = 4

_DATE_LIKE = re.compile(r"\b\d{4}-\d{2}(?:-\d{2})?\b|\b\d{1,2}/\d{4}\b")
_NUMBER = re.compile(
    r"(?<![\w.])(?P<sign>[+\-−])?"
    r"(?P<num>\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?)"
    r"(?P<pct>\s?%|\s?percent\b)?"
)
_SENTENCE_END = re.compile(r"[.!?;](?:\s|$)")
_WORD = re.compile(r"[A-Za-z]+")


@dataclass(frozen=True)
class NumericFact:
    text: str
    start: int
    end: int
    value: float
    form: str  # absolute | percent
    sign: str  # increase | decrease | neutral


def _word_sign(prefix: str) -> str:
    for word in reversed(_WORD.findall(prefix)[-SIGN_WINDOW:]):
        w = word.lower()
        if w in INCREASE_WORDS:
            return "increase"
        if w in DECREASE_WORDS:
            return "decrease"
    return "neutral"


def extract_numeric_facts(summary: str) -> list:
    """Every number in ``summary`` with its form and the direction words just before it.

    Calendar tokens (``2024-02``, ``01/2024``) are not facts.
    """
    masked = _DATE_LIKE.sub(lambda m: " " * len(m.group()), summary)
    bounds = [m.end() for m in _SENTENCE_END.finditer(masked)]
    facts = []
    for m in _NUMBER.finditer(masked):
        raw = m.group("num").replace(",", "")
        value = float(raw)
        sign_char = m.group("sign")
        if sign_char in ("-", "−"):
            value = -value
        form = "percent" if m.group("pct") else "absolute"
        if sign_char and form == "percent":
            sign = "increase" if sign_char == "+" else "decrease"
        else:
            i = bisect.bisect_right(bounds, m.start())
            sign = _word_sign(masked[bounds[i - 1] if i else 0 : m.start()])
        facts.append(NumericFact(summary[m.start() : m.end()], m.start(), m.end(), value, form, sign))
    return facts


@dataclass(frozen=True)
class Tolerances:
    absolute_rel: float = 0.005
    percent_points: float = 0.5
    slack: float = 1e-9


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True)
class KeyDeltaPolicy:
    threshold: float = 0.05

    def __post_init__(self):
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")


def _sign_ok(sign: str, delta: float) -> bool:
    if sign == "neutral" or delta == 0:
        return True
    return (sign == "increase") == (delta > 0)


def _abs_match(fact: NumericFact, target: float, tol: Tolerances) -> bool:
    return abs(fact.value - target) <= tol.absolute_rel * abs(target) + tol.slack


def _pct_match(fact: NumericFact, md: MetricDelta, tol: Tolerances) -> bool:
    return abs(abs(fact.value) - abs(md.delta) * 100) <= tol.percent_points + tol.slack and _sign_ok(
        fact.sign, md.delta
    )


def fact_aligned(fact: NumericFact, truth: Sequence[MetricDelta], tol: Tolerances = DEFAULT_TOLERANCES) -> bool:
    if fact.form == "percent":
        return any(_pct_match(fact, md, tol) for md in truth)
    return any(_abs_match(fact, md.current, tol) or _abs_match(fact, md.previous, tol) for md in truth)


@dataclass
class FaithfulnessResult:
    score: float
    total: int
    aligned: int
    flagged: list
    vacuous: bool = False


def faithfulness(facts: Sequence[NumericFact], truth: Sequence[MetricDelta], tolerances: Tolerances = DEFAULT_TOLERANCES) -> FaithfulnessResult:
    if not truth:
        raise ValueError("ground truth is empty")
    if not facts:
        return FaithfulnessResult(1.0, 0, 0, [], vacuous=True)
    flagged = [f for f in facts if not fact_aligned(f, truth, tolerances)]
    aligned = len(facts) - len(flagged)
    return FaithfulnessResult(aligned / len(facts), len(facts), aligned, flagged)


@dataclass
class CoverageResult:
    score: float
    key: list
    mentioned: list
    vacuous: bool = False


def _mentioned(md: MetricDelta, facts, summary: str, tol: Tolerances) -> bool:
    if not md.baseline_zero and any(f.form == "percent" and _pct_match(f, md, tol) for f in facts):
        return True
    absolutes = [f for f in facts if f.form == "absolute"]
    cur = [f for f in absolutes if _abs_match(f, md.current, tol)]
    prev = [f for f in absolutes if _abs_match(f, md.previous, tol)]
    if md.baseline_zero:
        # no ratio to state: the current level plus an explicit zero start counts
        return bool(cur) and (bool(prev) or re.search(r"\bzero\b", summary, re.I) is not None)
    for c in cur:
        for p in prev:
            if c is p:
                continue
            if any(f.sign != "neutral" and _sign_ok(f.sign, md.delta) for f in (c, p)):
                return True
    return False


def coverage(
    summary: str,
    truth: Sequence[MetricDelta],
    policy: KeyDeltaPolicy = KeyDeltaPolicy(),
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> CoverageResult:
    """Share of key deltas (|delta| >= threshold) that the summary states.

    A delta counts when the text carries its percentage (right direction) or both
    of its levels with a direction word attached.
    """
    key = [md for md in truth if md.baseline_zero or abs(md.delta) >= policy.threshold]
    if not key:
        return CoverageResult(1.0, [], [], vacuous=True)
    facts = extract_numeric_facts(summary)
    mentioned = [md.measure for md in key if _mentioned(md, facts, summary, tolerances)]
    return CoverageResult(len(mentioned) / len(key), [md.measure for md in key], mentioned)


RELEVANCE_RUBRIC = """You are grading a business summary for decision usefulness.

Slice facts:
{facts}

Summary:
{summary}

Rate how useful the summary is to an executive on a 1-5 scale:
1 = no usable insight or wrong emphasis
2 = mentions data but misses the main changes
3 = states the main changes without interpretation
4 = states the main changes and explains their business meaning
5 = precise, prioritized, actionable insight grounded in the facts

Reply with a single integer from 1 to 5."""

_SCORE = re.compile(r"(?<![\d.])([1-5])(?![\d.])")


def parse_judge_score(reply: str) -> int:
    m = _SCORE.search(reply)
    if m is None:
        raise JudgeFormatError(f"no 1-5 score in judge reply {reply[:80]!r}")
    return int(m.group(1))


def relevance(summary: str, context, judge) -> int:
    facts = context if isinstance(context, str) else canonical_json(context)
    prompt = RELEVANCE_RUBRIC.format(facts=facts, summary=summary)
    return parse_judge_score(judge.generate(GenerationRequest(prompt)).text)


def truth_facts(spec: SliceSpec, truth: Sequence[MetricDelta]) -> dict:
    return {
        "slice": spec.label,
        "metrics": {md.measure: {"current": md.current, "previous": md.previous, "delta": md.delta} for md in truth},
    }


# -- batch harness -------------------------------------------------------------

METHODS = ("agents", "flat", "template")


@dataclass
class CellResult:
    method: str
    slice: str
    status: str  # ok | skipped | failed
    faithfulness: Optional[float] = None
    relevance: Optional[float] = None
    coverage: Optional[float] = None
    faithfulness_vacuous: bool = False
    coverage_vacuous: bool = False
    flagged: list = field(default_factory=list)
    summary: Optional[str] = None
    prompt: Optional[str] = None
    error: Optional[str] = None
    structure_ok: Optional[bool] = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MethodSummary:
    method: str
    cells: int
    scored: int
    faithfulness: Optional[float]
    relevance: Optional[float]
    coverage: Optional[float]


@dataclass
class Report:
    title: str
    cells: list
    order: list

    def summaries(self) -> list:
        out = []
        for method in self.order:
            rows = [c for c in self.cells if c.method == method]
            ok = [c for c in rows if c.status == "ok"]

            def mean(attr):
                vals = [getattr(c, attr) for c in ok if getattr(c, attr) is not None]
                return math.fsum(vals) / len(vals) if vals else None

            out.append(MethodSummary(method, len(rows), len(ok), mean("faithfulness"), mean("relevance"), mean("coverage")))
        return out

    def summary_for(self, method: str) -> MethodSummary:
        return next(s for s in self.summaries() if s.method == method)

    @property
    def all_failed(self) -> bool:
        return bool(self.cells) and all(c.status == "failed" for c in self.cells)

    def to_text(self) -> str:
        header = ("Method", "F (%)", "R (5pt)", "C (%)", "n")
        rows = []
        for s in self.summaries():
            rows.append(
                (
                    s.method,
                    "-" if s.faithfulness is None else f"{s.faithfulness * 100:.1f}",
                    "-" if s.relevance is None else f"{s.relevance:.2f}",
                    "-" if s.coverage is None else f"{s.coverage * 100:.1f}",
                    str(s.scored),
                )
            )
        widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
        lines = [self.title, "  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
        lines.append("  ".join("-" * w for w in widths))
        lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", "cells", "scored", "faithfulness_pct", "relevance", "coverage_pct"])
        for s in self.summaries():
            writer.writerow(
                [
                    s.method,
                    s.cells,
                    s.scored,
                    "" if s.faithfulness is None else f"{s.faithfulness * 100:.2f}",
                    "" if s.relevance is None else f"{s.relevance:.3f}",
                    "" if s.coverage is None else f"{s.coverage * 100:.2f}",
                ]
            )
        return buf.getvalue()

    def to_json(self) -> str:
        body = {
            "title": self.title,
            "summary": [asdict(s) for s in self.summaries()],
            "cells": [c.to_dict() for c in self.cells],
        }
        return json.dumps(body, indent=2, default=str)


@dataclass
class EvalSettings:
    backend: object
    judge: object = None
    policy: KeyDeltaPolicy = KeyDeltaPolicy()
    tolerances: Tolerances = DEFAULT_TOLERANCES
    context_store: Sequence = ()
    profile: object = PROFILE_B
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if self.judge is None:
            self.judge = ConstantJudge()


def _score(cell: CellResult, summary: str, spec: SliceSpec, truth, settings: EvalSettings) -> CellResult:
    facts = extract_numeric_facts(summary)
    f = faithfulness(facts, truth, settings.tolerances)
    c = coverage(summary, truth, settings.policy, settings.tolerances)
    cell.summary = summary
    cell.faithfulness = f.score
    cell.faithfulness_vacuous = f.vacuous
    cell.flagged = [fact.text for fact in f.flagged]
    cell.coverage = c.score
    cell.coverage_vacuous = c.vacuous
    try:
        cell.relevance = float(relevance(summary, truth_facts(spec, truth), settings.judge))
    except JudgeFormatError as exc:
        cell.status = "failed"
        cell.error = str(exc)
        return cell
    cell.status = "ok"
    return cell


def _run_method(label, method, table, spec, truth, pair, settings, ablation=FULL) -> CellResult:
    cell = CellResult(label, spec.label, "failed")
    try:
        if method == "agents":
            result = run_pipeline(
                default_graph(), table, spec, settings.context_store, settings.backend, ablation,
                settings.profile, settings.epsilon,
            )
            cell.prompt = result.prompt
            if result.status == SKIPPED_EMPTY:
                cell.status = "skipped"
                return cell
            if result.status != COMPLETED:
                cell.error = result.error
                return cell
            summary = result.summary
        elif method == "flat":
            cell.prompt = build_flat_prompt(pair, spec)
            summary = settings.backend.generate(GenerationRequest(cell.prompt)).text
        elif method == "template":
            summary = template_nlg(truth, spec)
        else:
            raise ValueError(f"unknown method {method!r}")
        return _score(cell, summary, spec, truth, settings)
    except (DimsumError, ValueError) as exc:
        cell.error = f"{type(exc).__name__}: {exc}"
        return cell


def _truth(table: Table, spec: SliceSpec, epsilon: float):
    pair = slice_table(table, spec)
    prev = aggregate(pair[0], table.schema, spec.previous)
    cur = aggregate(pair[1], table.schema, spec.current)
    return pair, compute_all_deltas(cur, prev, epsilon)


def _cells_for_spec(table, spec, jobs, settings) -> list:
    """``jobs`` is a list of (label, method, ablation) triples."""
    try:
        pair, truth = _truth(table, spec, settings.epsilon)
    except DimsumError as exc:
        return [CellResult(label, spec.label, "failed", error=str(exc)) for label, _, _ in jobs]
    if len(pair[0]) == 0 and len(pair[1]) == 0:
        return [CellResult(label, spec.label, "skipped") for label, _, _ in jobs]
    return [_run_method(label, m, table, spec, truth, pair, settings, a) for label, m, a in jobs]


def _run_jobs(table, specs, jobs, settings, workers) -> list:
    if not specs:
        raise ValueError("at least one slice spec is required")
    work = lambda spec: _cells_for_spec(table, spec, jobs, settings)  # noqa: E731
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            grouped = list(pool.map(work, specs))
    else:
        grouped = [work(spec) for spec in specs]
    return [cell for group in grouped for cell in group]


def evaluate_batch(
    table: Table,
    specs: Sequence[SliceSpec],
    methods: Sequence[str] = METHODS,
    backend=None,
    policy: KeyDeltaPolicy = KeyDeltaPolicy(),
    judge=None,
    context_store: Sequence = (),
    profile=PROFILE_B,
    epsilon: float = DEFAULT_EPSILON,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    workers: int = 1,
) -> Report:
    """Score every (method, slice) pair; per-cell failures are recorded, not raised."""
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    settings = EvalSettings(backend, judge, policy, tolerances, context_store, profile, epsilon)
    cells = _run_jobs(table, list(specs), [(m, m, FULL) for m in methods], settings, workers)
    return Report("Comparison across summarization methods", cells, list(methods))


ABLATIONS = (FULL, NO_CONTEXT, NO_VARIANCE)


def check_structure(prompt: Optional[str], config: AblationConfig) -> bool:
    if prompt is None:
        return True
    payload = json.loads(prompt)
    metrics = payload.get("metrics", {})
    if not config.variance_enabled and any("delta_percent" in m for m in metrics.values()):
        return False
    if not config.context_enabled and "context_signals" in payload:
        return False
    return True


def run_ablation(
    table: Table,
    specs: Sequence[SliceSpec],
    configs: Sequence[AblationConfig] = ABLATIONS,
    backend=None,
    policy: KeyDeltaPolicy = KeyDeltaPolicy(),
    judge=None,
    context_store: Sequence = (),
    profile=PROFILE_B,
    epsilon: float = DEFAULT_EPSILON,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    workers: int = 1,
) -> Report:
    """Agents pipeline under each ablation config, with prompt-structure checks per cell."""
    settings = EvalSettings(backend, judge, policy, tolerances, context_store, profile, epsilon)
    jobs = [(c.label, "agents", c) for c in configs]
    cells = _run_jobs(table, list(specs), jobs, settings, workers)
    by_label = {c.label: c for c in configs}
    for cell in cells:
        config = by_label[cell.method]
        ok = check_structure(cell.prompt, config)
        cell.structure_ok = ok
        if not ok:
            cell.status = "failed"
            cell.error = f"prompt structure violates {config.label} ablation"
    return Report("Ablation study", cells, [c.label for c in configs])
