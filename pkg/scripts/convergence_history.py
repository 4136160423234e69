"""Explicit residual per restart, with and without deflation, on the first Newton system.

    python scripts/convergence_history.py [--ne 25] [--restarts 100]

Writes a CSV (restart, explicit_residual, variant) and prints every tenth restart.
"""

import argparse
from collections import defaultdict

from pgmres.cli import BenchmarkSpec, cmd_convergence


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--ne", type=int, default=25)
    ap.add_argument("--m", type=int, default=50)
    ap.add_argument("--restarts", type=int, default=100)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="results/convergence.csv")
    args = ap.parse_args()
    spec = BenchmarkSpec("convergence", ne=[args.ne], m=args.m, restarts=args.restarts, threads=[args.threads], out=args.out)
    hist = defaultdict(list)
    for row in cmd_convergence(spec):
        hist[row["variant"]].append(row["explicit_residual"])
    r0 = hist["plain"][0]
    print(f"{'restart':>7} {'deflated':>10} {'plain':>10}")
    for j in range(0, len(hist["plain"]), 10):
        d = hist["deflated"][j] / r0 if j < len(hist["deflated"]) else float("nan")
        print(f"{j:>7} {d:>10.3e} {hist['plain'][j] / r0:>10.3e}")


if __name__ == "__main__":
    main()
