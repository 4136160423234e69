"""Spectrum of A M^-1 for diag(1..n) as the deflation basis grows restart by restart.

    python scripts/deflation_spectrum.py [--n 50] [--m 20] [--restarts 5]
"""

import argparse

import numpy as np

from pgmres.deflation import Deflator, apply
from pgmres.krylov import GmresConfig, gmres_restarted


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=50)
    ap.add_argument("--m", type=int, default=20)
    ap.add_argument("--restarts", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    A = np.diag(np.arange(1.0, args.n + 1))
    op = lambda v: A @ v
    b = np.random.default_rng(args.seed).normal(size=args.n)
    for k in range(1, args.restarts + 1):
        defl = Deflator(args.n)
        cfg = GmresConfig(m=args.m, max_restarts=k, tol=1e-15, fixed_iterations=True)
        gmres_restarted(op, defl, b, cfg=cfg, deflator_hook=defl.hook(op))
        Minv = np.array([apply(defl, e) for e in np.eye(args.n)]).T
        lam = np.sort(np.abs(np.linalg.eigvals(A @ Minv)))
        print(f"restarts={k} r={defl.r} |mu|={abs(defl.mu):.3f} smallest |eig(A M^-1)| = {np.round(lam[:6], 3)}")


if __name__ == "__main__":
    main()
