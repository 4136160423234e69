"""Benchmark command line: sparsity, convergence, speedup and solve.

Exit status: 0 success, 1 solver failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .assembly import assemble_jacobian, assemble_residual, symbolic_pattern
from .deflation import Deflator
from .krylov import GmresConfig, GmresError, gmres_restarted
from .mesh import build_mesh
from .nonlinear import NewtonConfig, NewtonError, newton_solve
from .parallel import ParallelKernels, TimingBreakdown, partition_rows, timed_run, write_breakdown_csv
from .sparse import CsrMatrix, memory_footprint

log = logging.getLogger("pgmres")

EXIT_OK, EXIT_SOLVER, EXIT_USAGE = 0, 1, 2
BENCHMARK_SIZES = (15, 25, 30, 35, 40, 45, 50, 55, 60)


@dataclass
class BenchmarkSpec:
    subcommand: str
    ne: list[int] = field(default_factory=lambda: list(BENCHMARK_SIZES))
    lam: float = 6.8
    m: int = 50
    restarts: int = 100
    rmax: int = 20
    threads: list[int] = field(default_factory=lambda: [1])
    deterministic: bool = True
    out: str | None = None
    reps: int = 3
    fixed_iterations: bool = True
    continuation: bool = False
    tol: float = 1e-8
    gmres_tol: float = 1e-10
    json: bool = False

    def __post_init__(self):
        if any(n < 1 for n in self.ne):
            raise ValueError("--ne sizes must be positive")
        if any(p < 1 for p in self.threads):
            raise ValueError("--threads counts must be positive")
        if self.m < 1 or self.restarts < 1 or self.rmax < 1 or self.reps < 1:
            raise ValueError("m, restarts, rmax and reps must be positive")


# -- output helpers ----------------------------------------------------------


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_rows(path, columns, rows, spec: BenchmarkSpec | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])
    if spec is not None and spec.json:
        payload = {"config": asdict(spec), "columns": list(columns), "rows": rows}
        path.with_suffix(".json").write_text(json.dumps(payload, indent=2, default=float))


def read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_solution(path, u: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(np.int64(u.shape[0]).astype("<i8").tobytes())
        fh.write(np.ascontiguousarray(u, dtype="<f8").tobytes())


def read_solution(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    dof = int(np.frombuffer(raw[:8], dtype="<i8")[0])
    u = np.frombuffer(raw[8:], dtype="<f8")
    if u.shape[0] != dof:
        raise ValueError(f"solution file declares {dof} values but holds {u.shape[0]}")
    return u.copy()


def _available_bytes() -> int | None:
    try:
        return os.sysconf("SC_AVPHYS_PAGES") * os.sysconf("SC_PAGE_SIZE")
    except (ValueError, OSError, AttributeError):
        return None


# -- subcommands ---------------------------------------------------------------


SPARSITY_COLUMNS = ["dof", "matrix_elements", "nnz", "sparsity", "memory_mib"]


def sparsity_row(n_e: int) -> dict:
    mesh = build_mesh(n_e)
    dof = mesh.n_nodes
    row = {"dof": dof, "matrix_elements": dof * dof, "nnz": math.nan, "sparsity": math.nan, "memory_mib": math.nan}
    # ~64 entries per row; int32 indices plus generation temporaries
    need = 64 * dof * 4 * 2
    avail = _available_bytes()
    if avail is not None and need > avail:
        log.error("n_e=%d: pattern needs ~%.0f MiB, only %.0f MiB available; skipped", n_e, need / 2**20, avail / 2**20)
        return row
    try:
        pat = symbolic_pattern(mesh)
    except MemoryError as exc:
        log.error("n_e=%d: allocation failed (%s); skipped", n_e, exc)
        return row
    shell = CsrMatrix(n=dof, row_ptr=pat.row_ptr, col_idx=pat.col_idx, values=np.empty(0))
    row.update(nnz=pat.nnz, sparsity=pat.nnz / dof**2, memory_mib=memory_footprint(shell) / 2**20)
    return row


def cmd_sparsity(spec: BenchmarkSpec) -> list[dict]:
    rows = [sparsity_row(n) for n in spec.ne]
    write_rows(spec.out or "sparsity.csv", SPARSITY_COLUMNS, rows, spec)
    return rows


def first_newton_system(n_e: int, lam: float):
    mesh = build_mesh(n_e)
    u = np.zeros(mesh.n_nodes)
    return mesh, assemble_jacobian(mesh, u, lam), -assemble_residual(mesh, u, lam)


def run_benchmark_gmres(A, b, kernels: ParallelKernels, m: int, restarts: int, rmax: int | None, fixed: bool = True, tol: float = 1e-12):
    """GMRES(m) on ``A x = b``; ``rmax=None`` disables deflation."""
    kernels.set_matrix(A)
    cfg = GmresConfig(m=m, max_restarts=restarts, tol=tol, fixed_iterations=fixed)
    defl = Deflator(A.n, r_max=rmax) if rmax is not None else None
    hook = defl.hook(kernels.spmv) if defl is not None else None
    x, rep = gmres_restarted(kernels.spmv, defl, b, None, cfg, hook, kernels)
    return x, rep, defl


CONVERGENCE_COLUMNS = ["restart", "explicit_residual", "variant"]


def cmd_convergence(spec: BenchmarkSpec) -> list[dict]:
    n_e = spec.ne[0]
    mesh, A, b = first_newton_system(n_e, spec.lam)
    rows = []
    with ParallelKernels(A, partition_rows(mesh, spec.threads[0]), spec.deterministic) as kern:
        for variant, rmax in (("deflated", spec.rmax), ("plain", None)):
            _, rep, _ = run_benchmark_gmres(A, b, kern, spec.m, spec.restarts, rmax, spec.fixed_iterations, spec.gmres_tol)
            for j, res in enumerate(rep.explicit_residuals()):
                rows.append({"restart": j, "explicit_residual": float(res), "variant": variant})
            log.info("%s: final relative error %.3e", variant, rep.final_relative_error)
    write_rows(spec.out or "convergence.csv", CONVERGENCE_COLUMNS, rows, spec)
    return rows


SPEEDUP_COLUMNS = [
    "dof", "p", "median_s", "speedup", "relative_speed",
    "compute_s", "local_comm_s", "global_comm_s",
    "compute_pct", "local_comm_pct", "global_comm_pct",
]  # fmt: skip


def measure(n_e: int, p: int, spec: BenchmarkSpec, system=None):
    """Median-of-reps wall time of one benchmark solve, warm-up discarded."""
    mesh, A, b = system or first_newton_system(n_e, spec.lam)
    runs = []
    with ParallelKernels(A, partition_rows(mesh, p), spec.deterministic) as kern:
        for rep in range(spec.reps + 1):
            _, tb = timed_run(lambda: run_benchmark_gmres(A, b, kern, spec.m, spec.restarts, spec.rmax), kern)
            if rep > 0:
                runs.append(tb)
    runs.sort(key=lambda t: t.total_s)
    return runs[len(runs) // 2]


def cmd_speedup(spec: BenchmarkSpec) -> list[dict]:
    threads = sorted(set(spec.threads) | {1})
    rows = []
    for n_e in spec.ne:
        system = first_newton_system(n_e, spec.lam)
        dof = system[0].n_nodes
        block = []
        for p in threads:
            if p > system[0].n_axis:
                log.warning("p=%d exceeds %d node planes at n_e=%d; skipped", p, system[0].n_axis, n_e)
                continue
            tb = measure(n_e, p, spec, system)
            c, l, g = tb.percentages()
            block.append({
                "dof": dof, "p": p, "median_s": tb.total_s,
                "compute_s": tb.compute_s, "local_comm_s": tb.local_comm_s, "global_comm_s": tb.global_comm_s,
                "compute_pct": c, "local_comm_pct": l, "global_comm_pct": g,
            })  # fmt: skip
            log.info("dof=%d p=%d median %.3fs", dof, p, tb.total_s)
        t1 = block[0]["median_s"]
        slowest = max(r["median_s"] for r in block)
        for r in block:
            r["speedup"] = t1 / r["median_s"]
            r["relative_speed"] = slowest / r["median_s"]
        rows.extend(block)
    out = Path(spec.out or "speedup.csv")
    write_rows(out, SPEEDUP_COLUMNS, rows, spec)
    write_breakdown_csv(
        [(r["dof"], r["p"], TimingBreakdown(r["compute_s"], r["local_comm_s"], r["global_comm_s"])) for r in rows],
        out.with_name(out.stem + "_breakdown.csv"),
    )
    return rows


def cmd_solve(spec: BenchmarkSpec) -> int:
    n_e = spec.ne[0]
    mesh = build_mesh(n_e)
    cfg = NewtonConfig(
        lam=spec.lam,
        update_norm_tol=spec.tol,
        gmres=GmresConfig(m=spec.m, max_restarts=spec.restarts, tol=spec.gmres_tol),
        r_max=spec.rmax,
        continuation=spec.continuation,
        threads=spec.threads[0],
        deterministic=spec.deterministic,
    )
    out = Path(spec.out or "solution.bin")
    out.parent.mkdir(parents=True, exist_ok=True)
    trace_path = out.with_name(out.name + ".trace.csv")
    try:
        u, trace = newton_solve(mesh, cfg)
    except (NewtonError, GmresError) as exc:
        log.error("solve failed: %s", exc)
        trace = getattr(exc, "trace", None)
        if trace is not None:
            trace.to_csv(trace_path)
        return EXIT_SOLVER
    write_solution(out, u)
    trace.to_csv(trace_path)
    return EXIT_OK


# -- argument handling ---------------------------------------------------------


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


_BOOL_KEYS = {"deterministic", "fixed_iterations", "continuation", "json"}


def read_config(path) -> dict:
    """key=value lines; '#' starts a comment. Keys use flag names."""
    cfg = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key == "lambda":
            key = "lam"
        cfg[key] = val
    return cfg


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file; flags override it")
    common.add_argument("--ne", type=_int_list, help="elements per axis (comma list)")
    common.add_argument("--lambda", dest="lam", type=float, default=6.8)
    common.add_argument("--m", type=int, default=50, help="GMRES restart length")
    common.add_argument("--restarts", type=int, default=100)
    common.add_argument("--rmax", type=int, default=20)
    common.add_argument("--threads", type=_int_list, default=[1])
    common.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=True)
    common.add_argument("--out")
    common.add_argument("--reps", type=int, default=3)
    common.add_argument("--fixed-iterations", action=argparse.BooleanOptionalAction, default=True)
    common.add_argument("--continuation", action="store_true")
    common.add_argument("--tol", type=float, default=1e-8, help="Newton update tolerance (inf-norm)")
    common.add_argument("--gmres-tol", type=float, default=1e-10)
    common.add_argument("--json", action="store_true", help="also write a JSON mirror")

    parser = argparse.ArgumentParser(prog="pgmres", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    sub.add_parser("sparsity", parents=[common], help="CSR sparsity and memory table")
    sub.add_parser("convergence", parents=[common], help="residual history with and without deflation")
    sub.add_parser("speedup", parents=[common], help="parallel timing and speedup sweep")
    sub.add_parser("solve", parents=[common], help="Newton solve, writes solution and trace")
    return parser


_DEFAULT_NE = {"sparsity": list(BENCHMARK_SIZES), "convergence": [25], "speedup": [15, 25], "solve": [8]}


def parse_spec(argv=None) -> BenchmarkSpec:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            file_cfg = read_config(args.config)
        except (OSError, ValueError) as exc:
            parser.error(str(exc))
        # re-parse with file values as defaults so explicit flags still win
        sub = parser._subparsers._group_actions[0].choices[args.subcommand]
        known = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, val in file_cfg.items():
            if key not in known or key in ("config", "help"):
                parser.error(f"unknown config key {key!r}")
            act = known[key]
            if key in _BOOL_KEYS:
                defaults[key] = val.lower() in ("1", "true", "yes", "on")
            elif act.type is not None:
                try:
                    defaults[key] = act.type(val)
                except (ValueError, argparse.ArgumentTypeError) as exc:
                    parser.error(f"config key {key!r}: {exc}")
            else:
                defaults[key] = val
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    ne = args.ne or _DEFAULT_NE[args.subcommand]
    try:
        return BenchmarkSpec(
            subcommand=args.subcommand, ne=ne, lam=args.lam, m=args.m, restarts=args.restarts, rmax=args.rmax,
            threads=args.threads, deterministic=args.deterministic, out=args.out, reps=args.reps,
            fixed_iterations=args.fixed_iterations, continuation=args.continuation, tol=args.tol,
            gmres_tol=args.gmres_tol, json=args.json,
        )  # fmt: skip
    except ValueError as exc:
        parser.error(str(exc))


def main(argv=None) -> int:
    try:
        spec = parse_spec(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        if spec.subcommand == "sparsity":
            cmd_sparsity(spec)
        elif spec.subcommand == "convergence":
            cmd_convergence(spec)
        elif spec.subcommand == "speedup":
            cmd_speedup(spec)
        else:
            return cmd_solve(spec)
    except (GmresError, NewtonError) as exc:
        log.error("%s", exc)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
