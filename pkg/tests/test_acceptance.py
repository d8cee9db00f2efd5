"""Exit criteria. Each test records one PASS/FAIL line shown in the terminal summary."""

import contextlib
import json
import random
import time
from pathlib import Path

import pytest

from conftest import CountingBackend, random_spec, random_table, record_criterion
from dimsum.backends import CorruptingBackend, EchoBackend
from dimsum.cli import main
from dimsum.datagen import CATEGORIES, REGIONS
from dimsum.evaluation import KeyDeltaPolicy, coverage, extract_numeric_facts, faithfulness, run_ablation
from dimsum.pipeline import SKIPPED_EMPTY, run_pipeline
from dimsum.prompting import PROFILE_A, PROFILE_B, build_flat_prompt, build_prompt, serialize_prompt, template_nlg
from dimsum.pipeline import ContextSignal
from dimsum.table import Period, SliceSpec, aggregate, compute_all_deltas, compute_delta, slice_table
from oracles import brute_force_slice, exact_delta

GOLDEN = Path(__file__).parent / "golden"
FIXTURE_CSV = """region,product_category,date,sales_revenue,units_sold
North America,Electronics,2024-01-01,7999.9,10
North America,Electronics,2024-02-01,2899.9,12
"""


@contextlib.contextmanager
def criterion(number, name):
    try:
        yield
    except BaseException:
        record_criterion(f"FAIL  AC{number:<2} {name}")
        raise
    record_criterion(f"PASS  AC{number:<2} {name}")


def test_ac01_golden_deltas():
    with criterion(1, "golden deltas (-0.64, 0.20), < 1 ms"):
        start = time.perf_counter()
        rev = compute_delta(2899.9, 7999.9, 1e-9)
        units = compute_delta(12, 10, 1e-9)
        elapsed = time.perf_counter() - start
        assert round(rev.delta, 2) == -0.64
        assert round(units.delta, 2) == 0.20
        assert elapsed < 1e-3


def test_ac02_delta_oracle():
    with criterion(2, "delta vs exact oracle, 1000 pairs within 1e-12; identity on 100 x; < 1 s"):
        rng = random.Random(2024)
        start = time.perf_counter()
        for _ in range(1000):
            c = rng.uniform(-1e6, 1e6)
            p = rng.choice([-1, 1]) * 10 ** rng.uniform(-6, 6)
            got, want = compute_delta(c, p, 1e-9).delta, exact_delta(c, p, 1e-9)
            assert got == want or abs(got - want) <= 1e-12 * abs(want)
        for _ in range(100):
            x = rng.uniform(-1e9, 1e9)
            assert compute_delta(x, x, 1e-9).delta == 0
        assert time.perf_counter() - start < 1.0


def test_ac03_slice_oracle():
    with criterion(3, "slice == brute force on 10k rows for 50 specs, < 5 s"):
        table = random_table(10_000, seed=3)
        rng = random.Random(3)
        start = time.perf_counter()
        for _ in range(50):
            spec = random_spec(rng)
            prev, cur = slice_table(table, spec)
            bp, bc = brute_force_slice(table, spec)
            assert set(prev.indices) == set(bp) and set(cur.indices) == set(bc)
        assert time.perf_counter() - start < 5.0


def test_ac04_aggregation_additivity():
    with criterion(4, "partition sums equal whole sums within 1e-9, 20 partitions"):
        table = random_table(5_000, seed=4)
        rng = random.Random(4)
        done = 0
        while done < 20:
            spec = random_spec(rng)
            _, cur = slice_table(table, spec)
            rows = cur.rows
            if not rows:
                continue
            parts = rng.randint(2, 8)
            labels = [rng.randrange(parts) for _ in rows]
            whole = aggregate(rows, table.schema, spec.current)
            pieces = [aggregate([r for r, l in zip(rows, labels) if l == k], table.schema, spec.current) for k in range(parts)]
            for m, v in whole.values.items():
                assert abs(sum(p.values[m] for p in pieces) - v) <= 1e-9
            done += 1


def test_ac05_guard(fixture_table, tmp_path):
    with criterion(5, "empty slice: 0 backend calls, skipped-empty-slice, exit 2"):
        backend = CountingBackend(EchoBackend())
        spec = SliceSpec.build("2024-02", region="EMEA", product_category="Electronics")
        result = run_pipeline(None, fixture_table, spec, backend=backend)
        assert backend.calls == 0
        assert result.status == SKIPPED_EMPTY
        data = tmp_path / "fixture.csv"
        data.write_text(FIXTURE_CSV)
        code = main(["summarize", "--data", str(data), "--region", "EMEA", "--category", "Electronics",
                     "--month", "2024-02", "--backend", "echo", "--out", str(tmp_path / "o")])
        assert code == 2


def test_ac06_prompt_goldens(fixture_table, fixture_spec):
    with criterion(6, "profile-B golden bytes; profile-A has no delta_percent and the fixed instruction ending"):
        deltas = run_pipeline(None, fixture_table, fixture_spec, backend=EchoBackend()).state["deltas"]
        b = serialize_prompt(build_prompt(deltas, fixture_spec, profile=PROFILE_B))
        assert b.encode() == (GOLDEN / "prompt_profile_b.json").read_bytes()
        assert '"delta_percent": -0.64' in b and '"delta_percent": 0.2' in b
        a = serialize_prompt(build_prompt(deltas, fixture_spec, profile=PROFILE_A))
        assert "delta_percent" not in a
        assert json.loads(a)["instructions"].endswith("Focus on comparison with previous month.")


def test_ac07_echo_soundness(fixture_table, fixture_spec):
    with criterion(7, "echo F = C = 1.00 at tau 0.05; corrupting F < 1 with one flagged fact"):
        result = run_pipeline(None, fixture_table, fixture_spec, backend=EchoBackend())
        truth = result.state["deltas"]
        assert faithfulness(extract_numeric_facts(result.summary), truth).score == 1.0
        assert coverage(result.summary, truth, KeyDeltaPolicy(0.05)).score == 1.0
        bad = run_pipeline(None, fixture_table, fixture_spec, backend=CorruptingBackend(seed=11))
        f = faithfulness(extract_numeric_facts(bad.summary), truth)
        assert f.score < 1.0
        assert len(f.flagged) == 1


def test_ac08_baselines(fixture_table, fixture_spec):
    with criterion(8, "template F = 1.00; flat prompt rows match the reference row format"):
        pair = slice_table(fixture_table, fixture_spec)
        prev = aggregate(pair[0], fixture_table.schema, fixture_spec.previous)
        cur = aggregate(pair[1], fixture_table.schema, fixture_spec.current)
        truth = compute_all_deltas(cur, prev)
        assert faithfulness(extract_numeric_facts(template_nlg(truth, fixture_spec)), truth).score == 1.0
        lines = build_flat_prompt(pair, fixture_spec).splitlines()
        assert lines[1] == "North America | 01/2024 | Revenue: 7999.9, Units: 10"
        assert lines[2] == "North America | 02/2024 | Revenue: 2899.9, Units: 12"


def test_ac09_ablation_structure(fixture_table, fixture_spec):
    with criterion(9, "no-variance: no delta fields and lower coverage; no-context: no context signals"):
        store = [ContextSignal(Period(2024, 2), "North America", "Electronics", "promotion", "President's Day sale")]
        report = run_ablation(fixture_table, [fixture_spec], backend=EchoBackend(), context_store=store)
        cells = {c.method: c for c in report.cells}
        assert "delta_percent" not in cells["no-variance"].prompt
        assert "context_signals" in cells["full"].prompt
        assert "context_signals" not in cells["no-context"].prompt
        assert report.summary_for("no-variance").coverage < report.summary_for("full").coverage
        assert all(c.structure_ok for c in report.cells)


def test_ac10_determinism(tmp_path):
    with criterion(10, "repeated commands with equal seeds are byte-identical"):
        outputs = []
        for run in ("a", "b"):
            d = tmp_path / run
            d.mkdir()
            assert main(["gen-data", "--rows", "3000", "--seed", "9", "--out", str(d / "data.csv"),
                         "--context-out", str(d / "ctx.csv")]) == 0
            (d / "specs.csv").write_text("region,category,month\nEurope,Toys,2024-03\nNorth America,Electronics,2024-02\n")
            common = ["--data", str(d / "data.csv"), "--context", str(d / "ctx.csv"), "--backend", "echo", "--out", str(d / "out")]
            assert main(["evaluate", "--specs", str(d / "specs.csv"), *common]) == 0
            assert main(["ablate", "--specs", str(d / "specs.csv"), *common]) == 0
            assert main(["summarize", "--region", "Europe", "--category", "Toys", "--month", "2024-03", *common]) == 0
            outputs.append({p.name: p.read_bytes() for p in sorted((d / "out").iterdir())})
            outputs[-1]["data.csv"] = (d / "data.csv").read_bytes()
        assert outputs[0] == outputs[1]
        assert {"summary.txt", "prompt.json", "evaluation.json", "ablation.json"} <= set(outputs[0])


@pytest.mark.slow
def test_ac11_scale_smoke(tmp_path):
    with criterion(11, "100k-row generation + 50-spec evaluate with echo in < 60 s"):
        start = time.perf_counter()
        data = tmp_path / "sales.csv"
        assert main(["gen-data", "--rows", "100000", "--seed", "11", "--out", str(data)]) == 0
        assert sum(1 for _ in data.open()) == 100_001
        rng = random.Random(11)
        lines = ["region,category,month"]
        for _ in range(50):
            lines.append(f"{rng.choice(REGIONS)},{rng.choice(CATEGORIES)},{rng.choice([2023, 2024])}-{rng.randint(1, 12):02d}")
        specs = tmp_path / "specs.csv"
        specs.write_text("\n".join(lines) + "\n")
        assert main(["evaluate", "--data", str(data), "--specs", str(specs), "--backend", "echo", "--out", str(tmp_path / "o")]) == 0
        elapsed = time.perf_counter() - start
        report = json.loads((tmp_path / "o" / "evaluation.json").read_text())
        assert sum(c["status"] == "ok" for c in report["cells"]) == 150
        assert elapsed < 60.0
