"""Generate a synthetic table, evaluate random slices with the echo backend and report timings."""

import argparse
import random
import tempfile
import time
from pathlib import Path

from dimsum.backends import EchoBackend
from dimsum.datagen import CATEGORIES, REGIONS, gen_data
from dimsum.evaluation import evaluate_batch, run_ablation
from dimsum.pipeline import load_context_store
from dimsum.table import EXTENDED_SCHEMA, SliceSpec, load_table


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rows", type=int, default=100_000)
    ap.add_argument("--specs", type=int, default=50)
    ap.add_argument("--seed", type=int, default=11)
    args = ap.parse_args(argv)

    with tempfile.TemporaryDirectory() as tmp:
        data, ctx = Path(tmp) / "sales.csv", Path(tmp) / "context.csv"
        t0 = time.perf_counter()
        gen_data(args.rows, args.seed, data, ctx)
        t1 = time.perf_counter()
        table = load_table(data, EXTENDED_SCHEMA)
        store = load_context_store(ctx)
        rng = random.Random(args.seed)
        specs = [
            SliceSpec.build(f"{rng.choice([2023, 2024])}-{rng.randint(1, 12):02d}",
                            region=rng.choice(REGIONS), product_category=rng.choice(CATEGORIES))
            for _ in range(args.specs)
        ]
        report = evaluate_batch(table, specs, backend=EchoBackend(), context_store=store)
        t2 = time.perf_counter()
        ablation = run_ablation(table, specs, backend=EchoBackend(), context_store=store)
        t3 = time.perf_counter()

    print(report.to_text())
    print()
    print(ablation.to_text())
    print()
    print(f"generate {t1 - t0:.2f}s  evaluate {t2 - t1:.2f}s  ablate {t3 - t2:.2f}s")


if __name__ == "__main__":
    main()
