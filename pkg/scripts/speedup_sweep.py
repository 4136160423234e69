"""Median solve time, speedup and time breakdown over mesh sizes and worker counts.

    python scripts/speedup_sweep.py --ne 15 25 --threads 1 2 4 [--restarts 5]
"""

import argparse

from pgmres.cli import BenchmarkSpec, cmd_speedup
from pgmres.parallel import available_cores


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--ne", type=int, nargs="+", default=[15, 25])
    ap.add_argument("--threads", type=int, nargs="+", default=[1, 2, 4])
    ap.add_argument("--m", type=int, default=50)
    ap.add_argument("--restarts", type=int, default=5)
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--out", default="results/speedup.csv")
    args = ap.parse_args()
    print(f"{available_cores()} core(s) available")
    spec = BenchmarkSpec(
        "speedup", ne=args.ne, threads=args.threads, m=args.m, restarts=args.restarts, reps=args.reps, out=args.out
    )
    print(f"{'dof':>8} {'p':>3} {'median s':>9} {'S_p':>6} {'comp%':>6} {'local%':>7} {'global%':>8}")
    for r in cmd_speedup(spec):
        print(
            f"{r['dof']:>8} {r['p']:>3} {r['median_s']:>9.3f} {r['speedup']:>6.2f} "
            f"{r['compute_pct']:>6.1f} {r['local_comm_pct']:>7.1f} {r['global_comm_pct']:>8.1f}"
        )


if __name__ == "__main__":
    main()
