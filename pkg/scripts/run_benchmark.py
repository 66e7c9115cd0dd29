#!/usr/bin/env python3
"""Run the error-vs-time benchmark and print a per-(solver, n) table.

Examples:
    python3 scripts/run_benchmark.py --kinds reflections --solvers ours ours-64 gd image
    python3 scripts/run_benchmark.py --batch 200 --fp-iters 4 --out results.csv
"""

import argparse
import sys

from fermatpath import BenchConfig, Kinds, Precision, run_bench, write_records


def parse_args():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=500)
    p.add_argument("--n", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    p.add_argument("--kinds", choices=[k.value for k in Kinds], default="mixed")
    p.add_argument(
        "--solvers", nargs="+", default=["ours", "ours-64", "gd", "newton"]
    )
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--fp-iters", type=int, default=1)
    p.add_argument("--precision", choices=["single", "double"], default="single")
    p.add_argument("--reps", type=int, default=5, help="timing repetitions")
    p.add_argument("--out", type=str, default=None, help="also write a CSV here")
    return p.parse_args()


def main():
    args = parse_args()
    config = BenchConfig(
        seed=args.seed,
        batch=args.batch,
        n_range=tuple(args.n),
        kinds=Kinds(args.kinds),
        solvers=tuple(args.solvers),
        iterations=args.iterations,
        fixed_point_iters=args.fp_iters,
        precision=Precision(args.precision),
    )
    records = run_bench(config, timing_reps=args.reps)

    print(f"{'solver':>8} {'n':>2} {'mean_error':>12} {'wall_ms':>10}")
    for r in records:
        print(f"{r.solver:>8} {r.n:>2} {r.mean_error:>12.3e} {r.wall_time_ms:>10.2f}")

    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_records(records, fh)
        print(f"wrote {len(records)} records to {args.out}", file=sys.stderr)


if __name__ == "__main__":
    main()
