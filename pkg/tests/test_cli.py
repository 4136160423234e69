import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import brute_force_pattern
from pgmres.cli import EXIT_OK, EXIT_SOLVER, EXIT_USAGE, main, parse_spec, read_rows, read_solution
from pgmres.mesh import build_mesh


def test_sparsity_rows(tmp_path):
    out = tmp_path / "sp.csv"
    assert main(["sparsity", "--ne", "1,2,3", "--out", str(out)]) == EXIT_OK
    rows = read_rows(out)
    assert [int(r["dof"]) for r in rows] == [(2 * n + 1) ** 3 for n in (1, 2, 3)]
    assert int(rows[0]["nnz"]) == len(brute_force_pattern(1))
    for r in rows:
        dof, nnz = int(r["dof"]), int(r["nnz"])
        assert int(r["matrix_elements"]) == dof * dof
        assert float(r["sparsity"]) == pytest.approx(nnz / dof**2, rel=1e-9)
        assert float(r["memory_mib"]) == pytest.approx((12 * nnz + 4 * (dof + 1)) / 2**20, rel=1e-9)


def test_sparsity_table_row(tmp_path):
    out = tmp_path / "sp.csv"
    assert main(["sparsity", "--ne", "15", "--out", str(out)]) == EXIT_OK
    (row,) = read_rows(out)
    assert int(row["dof"]) == 29791
    assert float(row["sparsity"]) == pytest.approx(1.80e-3, rel=0.05)


def test_convergence_tiny_system(tmp_path):
    out = tmp_path / "conv.csv"
    assert main(["convergence", "--ne", "2", "--restarts", "4", "--out", str(out)]) == EXIT_OK
    rows = read_rows(out)
    by = {v: [float(r["explicit_residual"]) for r in rows if r["variant"] == v] for v in ("deflated", "plain")}
    r0 = by["plain"][0]
    assert by["deflated"][0] == r0
    # the Krylov space becomes invariant inside the first cycle, which ends the run
    assert len(by["deflated"]) == len(by["plain"]) == 2
    assert by["deflated"][1] < 1e-13 * r0 and by["plain"][1] < 1e-13 * r0


def test_speedup_small_sweep(tmp_path):
    out = tmp_path / "speed.csv"
    args = ["speedup", "--ne", "2,3", "--threads", "2", "--m", "5", "--restarts", "2", "--reps", "1", "--out", str(out)]
    assert main(args) == EXIT_OK
    rows = read_rows(out)
    assert [(int(r["dof"]), int(r["p"])) for r in rows] == [(125, 1), (125, 2), (343, 1), (343, 2)]
    base = {int(r["dof"]): float(r["median_s"]) for r in rows if r["p"] == "1"}
    for r in rows:
        t = float(r["median_s"])
        assert float(r["speedup"]) == pytest.approx(base[int(r["dof"])] / t, rel=1e-9)
        parts = [float(r[c]) for c in ("compute_s", "local_comm_s", "global_comm_s")]
        assert sum(parts) == pytest.approx(t, rel=1e-9)
        pct = [float(r[c]) for c in ("compute_pct", "local_comm_pct", "global_comm_pct")]
        assert pct == pytest.approx([100 * x / t for x in parts], rel=1e-9, abs=1e-9)
        assert sum(pct) == pytest.approx(100.0, abs=0.1)
    assert [float(r["speedup"]) for r in rows if r["p"] == "1"] == [1.0, 1.0]
    breakdown = read_rows(tmp_path / "speed_breakdown.csv")
    assert len(breakdown) == 4 and set(breakdown[0]) == {"dof", "p", "compute_pct", "local_comm_pct", "global_comm_pct"}


def test_solve_zero_load(tmp_path):
    out = tmp_path / "u.bin"
    assert main(["solve", "--ne", "2", "--lambda", "0", "--out", str(out)]) == EXIT_OK
    u = read_solution(out)
    assert u.shape == (125,) and np.all(u == 0.0)
    assert (tmp_path / "u.bin.trace.csv").exists()


def test_solve_writes_z_invariant_solution(tmp_path):
    out = tmp_path / "u.bin"
    assert main(["solve", "--ne", "8", "--out", str(out)]) == EXIT_OK
    u = read_solution(out)
    mesh = build_mesh(8)
    g = u.reshape(mesh.n_axis, mesh.n_axis, mesh.n_axis)
    assert (g.max(axis=0) - g.min(axis=0)).max() < 1e-8
    assert np.all(u[mesh.dirichlet] == 0.0)


def test_solver_failure_exit_status(tmp_path):
    out = tmp_path / "u.bin"
    code = main(["solve", "--ne", "4", "--m", "1", "--restarts", "1", "--gmres-tol", "1e-14", "--out", str(out)])
    assert code == EXIT_SOLVER
    assert not out.exists()
    trace = read_rows(tmp_path / "u.bin.trace.csv")
    assert len(trace) == 1


@pytest.mark.parametrize("argv", [["sparsity", "--ne", "x"], ["bogus"], ["solve", "--nope"], ["sparsity", "--ne", "0"], []])
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE


def test_config_file_overridden_by_flags(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# benchmark settings\nm = 30\nrestarts=7\nlambda = 5.0\ndeterministic = false\n")
    spec = parse_spec(["convergence", "--config", str(cfg), "--m", "12"])
    assert spec.m == 12
    assert spec.restarts == 7
    assert spec.lam == 5.0
    assert spec.deterministic is False


def test_bad_config_key(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("colour = blue\n")
    assert main(["sparsity", "--config", str(cfg)]) == EXIT_USAGE


def test_json_mirror_carries_config(tmp_path):
    out = tmp_path / "sp.csv"
    assert main(["sparsity", "--ne", "2", "--json", "--out", str(out)]) == EXIT_OK
    payload = json.loads((tmp_path / "sp.json").read_text())
    assert payload["config"]["ne"] == [2]
    assert payload["config"]["subcommand"] == "sparsity"
    assert payload["rows"][0]["dof"] == 125


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "pgmres", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "sparsity" in res.stdout
