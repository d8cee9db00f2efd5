import json
import warnings

import pytest

from dimsum.cli import build_config, main, read_config_file
from dimsum.datagen import CATEGORIES, REGIONS, context_signals, generate_rows
from dimsum.table import EXTENDED_SCHEMA, load_table

FIXTURE_CSV = """region,product_category,date,sales_revenue,units_sold
North America,Electronics,2024-01-01,7999.9,10
North America,Electronics,2024-02-01,2899.9,12
"""


@pytest.fixture
def fixture_csv(tmp_path):
    p = tmp_path / "fixture.csv"
    p.write_text(FIXTURE_CSV)
    return p


@pytest.fixture
def specs_csv(tmp_path):
    p = tmp_path / "specs.csv"
    p.write_text("region,category,month\nNorth America,Electronics,2024-02\n")
    return p


def summarize(fixture_csv, out, *extra):
    return main(
        ["summarize", "--data", str(fixture_csv), "--region", "North America", "--category", "Electronics",
         "--month", "2024-02", "--backend", "echo", "--out", str(out), *extra]
    )


def test_summarize_fixture(fixture_csv, tmp_path, capsys):
    assert summarize(fixture_csv, tmp_path / "o") == 0
    out = capsys.readouterr().out
    assert "-64%" in out and "+20%" in out
    trace = json.loads((tmp_path / "o" / "trace.json").read_text())
    assert trace["status"] == "completed"
    assert [e["node"] for e in trace["trace"]] == ["slice", "variance", "context", "summary"]
    assert '"time_period": "2024-02 vs 2024-01"' in (tmp_path / "o" / "prompt.json").read_text()


def test_summarize_empty_slice(fixture_csv, tmp_path, capsys):
    code = main(
        ["summarize", "--data", str(fixture_csv), "--region", "EMEA", "--category", "Electronics",
         "--month", "2024-02", "--backend", "echo", "--out", str(tmp_path / "o")]
    )
    assert code == 2
    assert "empty slice" in capsys.readouterr().err
    assert not (tmp_path / "o" / "prompt.json").exists()


def test_summarize_unreachable_backend(fixture_csv, tmp_path, monkeypatch):
    monkeypatch.setenv("LLM_API_KEY", "k")
    code = summarize(
        fixture_csv, tmp_path / "o", "--backend", "http", "--endpoint", "http://127.0.0.1:9/", "--max-retries", "1"
    )
    assert code == 1
    trace = json.loads((tmp_path / "o" / "trace.json").read_text())
    assert trace["trace"][-1]["detail"]["attempts"] == 2


def test_previous_override_and_profile(fixture_csv, tmp_path):
    assert summarize(fixture_csv, tmp_path / "o", "--previous", "2023-12", "--profile", "A") == 0
    prompt = (tmp_path / "o" / "prompt.json").read_text()
    assert "2024-02 vs 2023-12" in prompt and "delta_percent" not in prompt


def test_config_file_and_override(fixture_csv, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# demo\ndata = {fixture_csv}\nbackend = corrupt\nseed = 3\nprofile = B\ntau = 0.1\n")
    values = read_config_file(cfg)
    assert values["seed"] == "3"
    rc = build_config(values, {"backend": "echo"})
    assert rc.backend == "echo" and rc.seed == 3 and rc.tau == 0.1
    assert main(["summarize", "--config", str(cfg), "--region", "North America", "--category", "Electronics",
                 "--month", "2024-02", "--out", str(tmp_path / "o")]) == 0


def test_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("profile = C\n")
    assert main(["summarize", "--config", str(cfg), "--region", "a", "--category", "b", "--month", "2024-02"]) == 1
    assert "profile" in capsys.readouterr().err


def test_evaluate(fixture_csv, specs_csv, tmp_path):
    out = tmp_path / "o"
    assert main(["evaluate", "--data", str(fixture_csv), "--specs", str(specs_csv), "--backend", "echo", "--out", str(out)]) == 0
    rows = (out / "evaluation.csv").read_text().splitlines()
    assert rows[1].startswith("agents,1,1,100.00,")
    assert rows[1].endswith(",100.00")
    assert (out / "evaluation.txt").read_text().startswith("Comparison across summarization methods")
    assert len(json.loads((out / "evaluation.json").read_text())["cells"]) == 3


def test_ablate(fixture_csv, specs_csv, tmp_path):
    out = tmp_path / "o"
    assert main(["ablate", "--data", str(fixture_csv), "--specs", str(specs_csv), "--backend", "echo", "--out", str(out)]) == 0
    summary = {s["method"]: s for s in json.loads((out / "ablation.json").read_text())["summary"]}
    assert summary["no-variance"]["coverage"] < summary["full"]["coverage"]


def test_missing_specs_file(fixture_csv, tmp_path):
    assert main(["evaluate", "--data", str(fixture_csv), "--specs", str(tmp_path / "nope.csv")]) == 1


def test_total_failure_exit(fixture_csv, specs_csv, tmp_path):
    code = main(["evaluate", "--data", str(fixture_csv), "--specs", str(specs_csv), "--backend", "echo",
                 "--judge", "http", "--endpoint", "http://127.0.0.1:9/", "--max-retries", "0",
                 "--out", str(tmp_path / "o")])
    # every cell fails at the unreachable judge
    assert code == 1


def test_cli_is_deterministic(fixture_csv, specs_csv, tmp_path):
    for name in ("a", "b"):
        main(["evaluate", "--data", str(fixture_csv), "--specs", str(specs_csv), "--backend", "corrupt",
              "--seed", "4", "--out", str(tmp_path / name)])
    for f in ("evaluation.csv", "evaluation.txt", "evaluation.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


# -- data generation ---------------------------------------------------------------


def test_gen_data_deterministic(tmp_path):
    for name in ("a.csv", "b.csv"):
        assert main(["gen-data", "--rows", "1000", "--seed", "42", "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        table = load_table(tmp_path / "a.csv", EXTENDED_SCHEMA)
    assert table.n == 1000


def test_gen_data_rejects_zero_rows(tmp_path):
    assert main(["gen-data", "--rows", "0", "--out", str(tmp_path / "x.csv")]) == 1


def test_generator_shape():
    rows = generate_rows(2000, 7)
    assert {r[0] for r in rows} <= set(REGIONS)
    assert {r[1] for r in rows} <= set(CATEGORIES)
    assert "EMEA" not in REGIONS
    assert all(r[4] >= 1 and r[3] > 0 for r in rows)
    assert [r[2] for r in rows] == sorted(r[2] for r in rows)
    promo_discounts = [r[5] for r in rows if r[1] == "Electronics" and r[2][5:7] == "11"]
    other = [r[5] for r in rows if r[1] == "Electronics" and r[2][5:7] == "09"]
    assert min(promo_discounts) > max(other)


def test_context_rows_cover_promotions():
    rows = context_signals()
    assert ("2024-02", "North America", "Electronics", "promotion", "President's Day sale") in rows
    assert all(kind in ("promotion", "seasonality") for _, _, _, kind, _ in rows)
