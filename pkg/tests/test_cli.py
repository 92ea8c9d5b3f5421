import math
import subprocess
import sys

import numpy as np
import pytest

from wgbiharm.cli import main, read_config, sample_field
from wgbiharm.mesh import build_polygonal, load_mesh, save_mesh


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_solve_case1(capsys):
    code, out, _ = run(capsys, "solve", "--case", "case1", "--n", "4", "--k", "2",
                       "--flavor", "algorithm2")
    assert code == 0
    assert "err_H2 = 2.5683e-01" in out
    assert "err_L2 = 3.3304e-02" in out


def test_k_cap(capsys):
    code, _, err = run(capsys, "solve", "--case", "case1", "--n", "4", "--k", "5")
    assert code == 2 and "--orthonormal" in err
    code, out, _ = run(capsys, "solve", "--case", "case2", "--n", "2", "--k", "5", "--orthonormal")
    assert code == 0


def test_solve_on_voronoi_file(capsys, tmp_path):
    path = tmp_path / "vor.poly"
    save_mesh(build_polygonal(64, lloyd_iters=3, rng_seed=7), path)
    code, out, _ = run(capsys, "solve", "--mesh", path, "--case", "case1",
                       "--matrix", tmp_path / "A.mtx", "--field", tmp_path / "u.csv")
    assert code == 0 and "err_H2" in out
    assert (tmp_path / "A.mtx").read_text().startswith("%%MatrixMarket matrix coordinate real symmetric")
    rows = (tmp_path / "u.csv").read_text().splitlines()
    assert rows[0] == "x,y,u" and len(rows) > 100


def test_convergence_case2(capsys, tmp_path):
    csv = tmp_path / "t.csv"
    code, out, _ = run(capsys, "convergence", "--case", "case2", "--n", "4,8", "--csv", csv)
    assert code == 0
    assert "2.4536e+01" in out and "1.2794e+01" in out and "8.5298e-01" in out
    lines = csv.read_text().splitlines()
    assert lines[0] == "h,err_h2,order_h2,err_l2,order_l2"
    assert lines[1].endswith(",") and len(lines) == 3


def test_single_level_has_blank_orders(capsys, tmp_path):
    csv = tmp_path / "one.csv"
    assert run(capsys, "convergence", "--n", "4", "--csv", csv)[0] == 0
    h, e2, o2, el, ol = csv.read_text().splitlines()[1].split(",")
    assert o2 == "" and ol == ""


def test_csv_is_deterministic(capsys, tmp_path):
    outs = []
    for i in range(2):
        csv = tmp_path / f"run{i}.csv"
        run(capsys, "convergence", "--polygonal", "16,32", "--seed", "3", "--csv", csv, "--quiet")
        outs.append(csv.read_bytes())
    assert outs[0] == outs[1]
    field = []
    for i in range(2):
        f = tmp_path / f"field{i}.csv"
        run(capsys, "solve", "--polygonal", "20", "--seed", "3", "--field", f, "--quiet")
        field.append(f.read_bytes())
    assert field[0] == field[1]


def test_quiet_keeps_files(capsys, tmp_path):
    csv = tmp_path / "q.csv"
    code, out, _ = run(capsys, "convergence", "--n", "2,4", "--csv", csv, "--quiet")
    assert code == 0 and out == "" and csv.exists()
    code, out, _ = run(capsys, "mesh-check", "--quiet")
    assert code == 0 and out == ""


def test_mesh_check(capsys, tmp_path):
    code, out, _ = run(capsys, "mesh-check", "--uniform", "8")
    assert code == 0
    assert f"{1 / math.sqrt(2):.4e}" in out

    sliver = tmp_path / "sliver.poly"
    sliver.write_text("polymesh 2 4 2\n0 0\n1 0\n1 1\n0 1e-3\n3 0 1 3\n3 1 2 3\n")
    code, _, err = run(capsys, "mesh-check", "--mesh", sliver)
    assert code == 1 and "rho_v" in err

    saved = tmp_path / "v.poly"
    assert run(capsys, "mesh-check", "--polygonal", "30", "--save-mesh", saved)[0] == 0
    assert load_mesh(saved).n_elements == 30


def test_ineq_check(capsys, tmp_path):
    csv = tmp_path / "ineq.csv"
    code, out, _ = run(capsys, "ineq-check", "--trace", "--uniform", "2,4,8", "--csv", csv)
    assert code == 0
    vals = [float(line.split(",")[-1]) for line in csv.read_text().splitlines()[1:]]
    assert len(vals) == 3 and max(vals) - min(vals) <= 1e-10 * max(vals)
    code, out, _ = run(capsys, "ineq-check", "--uniform", "2,4", "--samples", "20")
    assert code == 0
    for kind in ("trace", "inverse", "lp", "domain"):
        assert kind in out
    code, _, err = run(capsys, "ineq-check", "--lp", "--uniform", "2", "--p", "1", "--r", "2")
    assert code == 2


def test_ineq_check_spread_failure(capsys):
    code, _, err = run(capsys, "ineq-check", "--inverse", "--polygonal", "8,64",
                       "--samples", "20", "--max-spread", "1.0000001")
    assert code == 1 and "max/min" in err


def test_config_file(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    csv = tmp_path / "c.csv"
    cfg.write_text(f"# case 2 table, first rows\ncase = case2\nn = 4,8\nquiet = true\ncsv = {csv}\n")
    code, out, _ = run(capsys, "convergence", "--config", cfg)
    assert code == 0 and out == ""
    assert len(csv.read_text().splitlines()) == 3
    # explicit flags win over the file
    code, out, _ = run(capsys, "convergence", "--config", cfg, "--n", "4")
    assert len(csv.read_text().splitlines()) == 2
    assert read_config(cfg)[:4] == ["--case", "case2", "--n", "4,8"]

    bad = tmp_path / "bad.cfg"
    bad.write_text("case case1\n")
    assert run(capsys, "solve", "--config", bad)[0] == 2
    bad.write_text("colour = blue\n")
    assert run(capsys, "solve", "--config", bad)[0] == 2


@pytest.mark.parametrize("argv", [
    ["solve", "--case", "nosuch"],
    ["solve", "--tol", "2"],
    ["solve", "--k", "1"],
    ["solve", "--n", "0"],
    ["solve", "--flavor", "three"],
    ["solve", "--mesh", "/nonexistent/mesh.poly"],
    ["solve", "--n", "4", "--polygonal", "8"],
    ["frobnicate"],
    [],
])
def test_usage_errors(capsys, argv):
    assert main(argv) == 2


def test_bad_mesh_file(capsys, tmp_path):
    path = tmp_path / "broken.poly"
    path.write_text("polymesh 2 3 1\n0 0\n1 0\n")
    assert run(capsys, "solve", "--mesh", path)[0] == 2


@pytest.mark.parametrize("kind", ["uniform", "voronoi"])
def test_sample_field_reproduces_polynomial(uniform, kind):
    from wgbiharm.analysis import solve_problem
    from wgbiharm.problems import problem_from_expression

    mesh = uniform(4) if kind == "uniform" else build_polygonal(20, lloyd_iters=2, rng_seed=1)
    p = problem_from_expression("1 + x*y - y**2")  # patch test: u_h = Q_h u
    u_h, _ = solve_problem(mesh, p)
    pts, vals = sample_field(mesh, 2, u_h)
    if kind == "uniform":
        assert len(pts) == 13 * 13  # 3 samples per edge length 1/4
    assert np.abs(vals - p.u(*pts.T)).max() < 1e-10


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "wgbiharm", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("solve", "convergence", "mesh-check", "ineq-check"):
        assert cmd in res.stdout
