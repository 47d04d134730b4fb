import numpy as np
import pytest

from vvflow import cli
from vvflow.io import read_csv


def run(tmp_path, *args, cfg=None):
    argv = list(args) + ["--out", str(tmp_path / "out")]
    if cfg is not None:
        p = tmp_path / "run.cfg"
        p.write_text(cfg)
        argv += ["--config", str(p)]
    return cli.main(argv), tmp_path / "out"


def vtk_vectors(path, name):
    lines = path.read_text().splitlines()
    n = int(lines[4].split()[1])
    k = lines.index(f"VECTORS {name} double")
    return np.array([[float(t) for t in ln.split()] for ln in lines[k + 1:k + 1 + n]])


def test_solve_with_zero_forcing_gives_zero_fields(tmp_path):
    code, out = run(tmp_path, "solve", "--mesh", "2", "2", "2", cfg="forcing = zero\n")
    assert code == 0
    assert not np.any(vtk_vectors(out / "fields.vtk", "velocity"))
    assert not np.any(vtk_vectors(out / "fields.vtk", "vorticity"))
    report = (out / "report.txt").read_text()
    assert report.startswith("# provenance\nvvflow ")
    assert "[config]" in report and "[mesh]" in report and "[tolerances]" in report
    assert "status = converged" in report and "all_pass = True" in report


def test_solve_manufactured_outputs(tmp_path):
    code, out = run(tmp_path, "solve", "--mesh", "2", "2", "2", "--nu", "0.5", "--seed", "3")
    assert code == 0
    header, rows = read_csv(out / "trace.csv")
    assert header[:3] == ["iteration", "lam", "increment"] and len(rows) >= 2
    assert "[errors]" in (out / "report.txt").read_text()


def test_solver_failure_exit_1(tmp_path):
    code, out = run(tmp_path, "solve", "--mesh", "2", "2", "2", "--max-iter", "1")
    assert code == 1
    assert (out / "trace.csv").exists()
    assert "status = failed" in (out / "report.txt").read_text()


def test_config_errors_exit_2(tmp_path, capsys):
    assert run(tmp_path, "solve", cfg="nu = 1\nwhat = 2\n")[0] == 2
    assert "what (line 2)" in capsys.readouterr().err
    assert cli.main(["bogus"]) == 2
    assert cli.main(["solve", "--quad-degree", "5"]) == 2
    assert run(tmp_path, "study", cfg="forcing = zero\n")[0] == 2


def test_study_writes_three_row_rate_table(tmp_path):
    code, out = run(tmp_path, "study", "--mesh", "2", "2", "2", "--nu", "0.5")
    assert code == 0
    header, rows = read_csv(out / "rates.csv")
    assert len(rows) == 3 and header[:3] == ["n", "h", "u_L2"]
    assert [r[0] for r in rows] == ["2", "4", "8"]
    assert rows[0][header.index("order_u_H1")] == ""


def test_stokes_nonstd_and_decompose(tmp_path):
    code, out = run(tmp_path, "stokes-nonstd", "--mesh", "2", "2", "2", "--alpha", "1",
                    cfg="convection = 0, 0, 0\n")
    assert code == 0 and "linear_residual" in (out / "report.txt").read_text()
    code, out = run(tmp_path, "decompose", "--mesh", "2", "2", "2",
                    cfg="forcing = 2 * x, z, y\n")
    assert code == 0
    text = (out / "report.txt").read_text()
    orth = float(text.split("orthogonality = ")[1].split()[0])
    assert orth < 1e-12
    assert run(tmp_path, "decompose", cfg="forcing = zero\n")[0] == 2


def test_verify_exit_codes(tmp_path, monkeypatch):
    code, out = run(tmp_path, "verify", "--mesh", "2", "2", "2")
    assert code == 0 and "passed = True" in (out / "report.txt").read_text()
    from vvflow import verify
    real = verify.run_invariant_suite

    def failing(**kw):
        rep = real(**kw)
        rep.checks.append(verify.Check("forced failure", 2.0, 1.0, False))
        return rep

    monkeypatch.setattr(verify, "run_invariant_suite", failing)
    assert run(tmp_path, "verify", "--mesh", "2", "2", "2")[0] == 1


def test_identical_runs_give_identical_csv(tmp_path):
    cfg = "nu = 0.5\nmesh = 2 2 2\nseed = 11\n"
    a = run(tmp_path / "a", "solve", cfg=cfg)
    b = run(tmp_path / "b", "solve", cfg=cfg)
    assert a[0] == b[0] == 0
    for name in ("trace.csv", "velocity_coefficients.csv"):
        assert (a[1] / name).read_bytes() == (b[1] / name).read_bytes()


@pytest.fixture(autouse=True)
def _mkdirs(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
