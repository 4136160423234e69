"""Sparsity and CSR memory for the nine benchmark mesh sizes.

    python scripts/sparsity_table.py [--out results/sparsity.csv]
"""

import argparse

from pgmres.cli import BENCHMARK_SIZES, BenchmarkSpec, cmd_sparsity

REFERENCE = {
    15: (1.60e6, 19), 25: (7.72e6, 88), 30: (1.33e7, 153), 35: (2.13e7, 245), 40: (3.06e7, 380),
    45: (4.55e7, 524), 50: (6.26e7, 720), 55: (8.35e7, 961), 60: (1.06e8, 1249),
}  # fmt: skip


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results/sparsity.csv")
    ap.add_argument("--ne", type=int, nargs="*", default=list(BENCHMARK_SIZES))
    args = ap.parse_args()
    rows = cmd_sparsity(BenchmarkSpec("sparsity", ne=args.ne, out=args.out))
    print(f"{'n_e':>4} {'dof':>9} {'nnz':>11} {'ref nnz':>9} {'sparsity':>9} {'MiB':>8} {'ref MiB':>7}")
    for n_e, r in zip(args.ne, rows):
        ref_nnz, ref_mib = REFERENCE.get(n_e, (float("nan"),) * 2)
        print(f"{n_e:>4} {r['dof']:>9} {r['nnz']:>11} {ref_nnz:>9.3g} {r['sparsity']:>9.2e} {r['memory_mib']:>8.1f} {ref_mib:>7}")


if __name__ == "__main__":
    main()
