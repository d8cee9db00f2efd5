"""Command line: gen-data, summarize, evaluate, ablate.

Exit codes: 0 success, 2 empty slice skipped, 1 any failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path

from dimsum.backends import BackendConfig, ConstantJudge, HTTPBackend, make_backend
from dimsum.datagen import gen_data
from dimsum.errors import DimsumError
from dimsum.evaluation import KeyDeltaPolicy, evaluate_batch, run_ablation
from dimsum.pipeline import (
    COMPLETED,
    SKIPPED_EMPTY,
    AblationConfig,
    default_graph,
    load_context_store,
    run_pipeline,
)
from dimsum.prompting import get_profile
from dimsum.table import (
    DEFAULT_EPSILON,
    EXTENDED_SCHEMA,
    REFERENCE_SCHEMA,
    ColumnSchema,
    Period,
    SliceSpec,
    load_table,
)

EXIT_OK, EXIT_FAIL, EXIT_SKIP = 0, 1, 2

log = logging.getLogger("dimsum")


@dataclass
class RunConfig:
    data: str = ""
    schema: str = "auto"
    context: str = ""
    profile: str = "B"
    epsilon: float = DEFAULT_EPSILON
    tau: float = 0.05
    backend: str = "echo"
    seed: int = 0
    out: str = "out"
    variance_enabled: bool = True
    context_enabled: bool = True
    endpoint: str = ""
    model: str = ""
    api_key_env: str = "LLM_API_KEY"
    timeout: float = 30.0
    max_retries: int = 3
    backoff_ms: float = 500.0
    judge: str = "constant"
    judge_score: int = 3
    workers: int = 1
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.profile.upper() not in ("A", "B"):
            raise DimsumError(f"profile must be A or B, got {self.profile!r}")


def _coerce(value: str, kind):
    if kind is bool:
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise DimsumError(f"not a boolean: {value!r}")
    return kind(value)


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DimsumError(f"{path}:{n}: expected key = value")
            key, value = (p.strip() for p in line.split("=", 1))
            out[key.replace("-", "_")] = value.strip('"').strip("'")
    return out


def build_config(file_values: dict, overrides: dict) -> RunConfig:
    types = {f.name: f.type for f in fields(RunConfig)}
    kinds = {"float": float, "int": int, "bool": bool, "str": str}
    values, extra = {}, {}
    for key, raw in file_values.items():
        if key not in types or key == "extra":
            extra[key] = raw
            continue
        values[key] = _coerce(raw, kinds[types[key]])
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(extra=extra, **values)


def resolve_schema(spec: str, data_path: str) -> tuple:
    if spec == "reference":
        return REFERENCE_SCHEMA
    if spec == "extended":
        return EXTENDED_SCHEMA
    if spec == "auto":
        with open(data_path, newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh), [])
        extras = [c for c in EXTENDED_SCHEMA[len(REFERENCE_SCHEMA):] if c.name in header]
        return REFERENCE_SCHEMA + tuple(extras)
    with open(spec, encoding="utf-8") as fh:
        cols = json.load(fh)
    return tuple(ColumnSchema(c["name"], c["kind"], c.get("type") or c["value_type"]) for c in cols)


def _load_inputs(cfg: RunConfig):
    if not cfg.data:
        raise DimsumError("no data file given (--data or data = ... in config)")
    schema = resolve_schema(cfg.schema, cfg.data)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        table = load_table(cfg.data, schema)
    store = load_context_store(cfg.context) if cfg.context else []
    return table, store


def _backend(cfg: RunConfig):
    if cfg.backend == "http":
        return HTTPBackend(_http_config(cfg))
    return make_backend(cfg.backend, cfg.seed)


def _http_config(cfg: RunConfig) -> BackendConfig:
    return BackendConfig.from_env(
        endpoint=cfg.endpoint or None,
        model=cfg.model or None,
        api_key_env=cfg.api_key_env,
        timeout=cfg.timeout,
        max_retries=cfg.max_retries,
        backoff_ms=cfg.backoff_ms,
    )


def _judge(cfg: RunConfig):
    if cfg.judge == "constant":
        return ConstantJudge(cfg.judge_score)
    if cfg.judge == "http":
        return HTTPBackend(_http_config(cfg))
    raise DimsumError(f"unknown judge {cfg.judge!r}")


def read_specs(path) -> list:
    """CSV with columns region, category (or product_category), month and optional previous."""
    specs = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            category = row.get("category") or row.get("product_category")
            month = Period.parse(row["month"])
            previous = row.get("previous") or None
            specs.append(SliceSpec.build(month, previous, region=row["region"], product_category=category))
    if not specs:
        raise DimsumError(f"{path} holds no slice specs")
    return specs


def _write(out_dir: Path, name: str, text: str):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(text, encoding="utf-8")


def cmd_gen_data(args) -> int:
    path = gen_data(args.rows, args.seed, args.out, args.context_out)
    print(f"wrote {args.rows} rows to {path}")
    return EXIT_OK


def cmd_summarize(args, cfg: RunConfig) -> int:
    table, store = _load_inputs(cfg)
    spec = SliceSpec.build(args.month, args.previous, region=args.region, product_category=args.category)
    ablation = AblationConfig(cfg.variance_enabled, cfg.context_enabled)
    result = run_pipeline(
        default_graph(), table, spec, store, _backend(cfg), ablation, get_profile(cfg.profile), cfg.epsilon
    )
    out = Path(cfg.out)
    _write(out, "trace.json", json.dumps({"status": result.status, "trace": result.trace_dict(timings=False)}, indent=2) + "\n")
    if result.prompt is not None:
        _write(out, "prompt.json", result.prompt + "\n")
    if result.status == COMPLETED:
        _write(out, "summary.txt", result.summary + "\n")
        print(result.summary)
        return EXIT_OK
    print(result.report(), file=sys.stderr)
    return EXIT_SKIP if result.status == SKIPPED_EMPTY else EXIT_FAIL


def _emit(report, cfg: RunConfig, stem: str) -> int:
    out = Path(cfg.out)
    _write(out, f"{stem}.csv", report.to_csv())
    _write(out, f"{stem}.txt", report.to_text())
    _write(out, f"{stem}.json", report.to_json() + "\n")
    print(report.to_text(), end="")
    return EXIT_FAIL if report.all_failed else EXIT_OK


def _eval_kwargs(cfg: RunConfig, store) -> dict:
    return dict(
        backend=_backend(cfg),
        policy=KeyDeltaPolicy(cfg.tau),
        judge=_judge(cfg),
        context_store=store,
        profile=get_profile(cfg.profile),
        epsilon=cfg.epsilon,
        workers=cfg.workers,
    )


def cmd_evaluate(args, cfg: RunConfig) -> int:
    specs = read_specs(args.specs)
    table, store = _load_inputs(cfg)
    return _emit(evaluate_batch(table, specs, **_eval_kwargs(cfg, store)), cfg, "evaluation")


def cmd_ablate(args, cfg: RunConfig) -> int:
    specs = read_specs(args.specs)
    table, store = _load_inputs(cfg)
    return _emit(run_ablation(table, specs, **_eval_kwargs(cfg, store)), cfg, "ablation")


def _run_flags(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--data")
    p.add_argument("--schema", help="auto | reference | extended | path to a JSON column list")
    p.add_argument("--context", help="context store CSV")
    p.add_argument("--profile", choices=["A", "B"])
    p.add_argument("--epsilon", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--backend", choices=["http", "echo", "corrupt"])
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.add_argument("--max-retries", dest="max_retries", type=int)
    p.add_argument("--timeout", type=float)
    p.add_argument("--judge", choices=["constant", "http"])
    p.add_argument("--workers", type=int)
    p.add_argument("--no-variance", dest="variance_enabled", action="store_const", const=False)
    p.add_argument("--no-context", dest="context_enabled", action="store_const", const=False)


RUN_KEYS = (
    "data", "schema", "context", "profile", "epsilon", "tau", "backend", "seed", "out",
    "endpoint", "model", "max_retries", "timeout", "judge", "workers", "variance_enabled", "context_enabled",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dimsum", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic retail CSV")
    p.add_argument("--rows", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.add_argument("--context-out", help="also write a matching context store CSV")

    p = sub.add_parser("summarize", help="summarize one slice")
    _run_flags(p)
    p.add_argument("--region", required=True)
    p.add_argument("--category", required=True)
    p.add_argument("--month", required=True, help="current period, YYYY-MM")
    p.add_argument("--previous", help="previous period (default: the month before)")

    for name, help_ in (("evaluate", "score agents, flat and template methods"), ("ablate", "run the ablation configs")):
        p = sub.add_parser(name, help=help_)
        _run_flags(p)
        p.add_argument("--specs", required=True, help="CSV of region,category,month[,previous]")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        if args.command == "gen-data":
            if args.rows <= 0:
                raise DimsumError("--rows must be positive")
            return cmd_gen_data(args)
        file_values = read_config_file(args.config) if args.config else {}
        cfg = build_config(file_values, {k: getattr(args, k, None) for k in RUN_KEYS})
        handler = {"summarize": cmd_summarize, "evaluate": cmd_evaluate, "ablate": cmd_ablate}[args.command]
        return handler(args, cfg)
    except (DimsumError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
