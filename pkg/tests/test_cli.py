import csv
import io
import shutil
from pathlib import Path

import numpy as np
import pytest

from quantcurve.cli import main

GOLDEN = Path(__file__).parent / "golden"


def read_rows(path):
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


@pytest.fixture
def linear_fixture(tmp_path):
    x = np.linspace(-1, 1, 41)
    p = tmp_path / "lin.csv"
    p.write_text("x1,y\n" + "".join(f"{a!r},{2 + 3 * a!r}\n" for a in x.tolist()))
    return p


@pytest.fixture
def noisy_fixture(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, 3000)
    y = np.sin(2 * x) + rng.standard_normal(3000)
    p = tmp_path / "sin.csv"
    p.write_text("x1,y\n" + "".join(f"{a!r},{b!r}\n" for a, b in zip(x.tolist(), y.tolist())))
    return p


def write_cfg(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return str(p)


def test_fit_linear_fixture(tmp_path, linear_fixture, capsys):
    out = tmp_path / "fit.csv"
    cfg = write_cfg(tmp_path, f"command = fit\ninput = {linear_fixture}\noutput = {out}\nalpha = 0.5\n"
                              "alpha = 0.3\nh = 0.3\nx_min = -0.6\nx_max = 0.6\nx_count = 5\n")
    assert main(["--config", cfg]) == 0
    assert "fit: 10 cells, 10 ok" in capsys.readouterr().out
    text = out.read_text()
    assert text.startswith("# basis ordering (graded-lexicographic): (0) (1)\n")
    rows = read_rows(out)
    assert list(rows[0]) == ["alpha", "h", "x1", "b_0", "b_1", "status", "active_points", "boundary"]
    assert [r["alpha"] for r in rows] == ["0.5"] * 5 + ["0.29999999999999999"] * 5
    for r in rows:
        x = float(r["x1"])
        assert float(r["b_0"]) == pytest.approx(2 + 3 * x, abs=1e-8)
        assert float(r["b_1"]) == pytest.approx(3, abs=1e-8)
        assert r["status"] == "optimal" and r["boundary"] == "false"


def test_fit_records_failed_cells(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("x1,y\n0,1\n0.05,2\n0.1,3\n")
    out = tmp_path / "f.csv"
    assert main(["fit", "--set", f"input={data}", "--set", f"output={out}", "--set", "alpha=0.5",
                 "--set", "h=0.2", "--set", "x=0", "--set", "x=0.9"]) == 0
    rows = read_rows(out)
    assert rows[1]["b_0"] == "nan" and rows[1]["status"].startswith("failed")
    assert "1 failed" in capsys.readouterr().out


def test_invalid_alpha_exit_one(tmp_path, linear_fixture, capsys):
    cfg = write_cfg(tmp_path, f"command = fit\ninput = {linear_fixture}\noutput = {tmp_path / 'o.csv'}\n"
                              "alpha = 1.2\nh = 0.3\nx = 0\n")
    assert main(["--config", cfg]) == 1
    assert "alpha" in capsys.readouterr().err
    assert not (tmp_path / "o.csv").exists()


@pytest.mark.parametrize(
    "override,field",
    [("h=-1", "h"), ("kernel=box", "kernel"), ("p=11", "p"), ("input=/no/such/file", "input"), ("x=0,0", "x")],
)
def test_validation_errors_name_field(tmp_path, linear_fixture, capsys, override, field):
    args = ["fit", "--set", f"input={linear_fixture}", "--set", f"output={tmp_path / 'o.csv'}",
            "--set", "alpha=0.5", "--set", "h=0.3", "--set", "x=0", "--set", override]
    assert main(args) == 1
    assert capsys.readouterr().err.startswith(f"error: {field}")


def test_runtime_failure_exit_two(tmp_path, linear_fixture, capsys):
    out = tmp_path / "is_a_dir"
    out.mkdir()
    (out / "keep").write_text("x")
    args = ["fit", "--set", f"input={linear_fixture}", "--set", f"output={out}",
            "--set", "alpha=0.5", "--set", "h=0.3", "--set", "x=0"]
    assert main(args) == 2
    assert "runtime error" in capsys.readouterr().err


def test_echo_round_trip(tmp_path, noisy_fixture):
    out = tmp_path / "echo.csv"
    assert main(["echo", "--set", f"input={noisy_fixture}", "--set", f"output={out}"]) == 0
    a = np.loadtxt(noisy_fixture, delimiter=",", skiprows=1)
    b = np.loadtxt(out, delimiter=",", skiprows=1)
    np.testing.assert_array_equal(a, b)
    out2 = tmp_path / "echo2.csv"
    assert main(["echo", "--set", f"input={out}", "--set", f"output={out2}"]) == 0
    assert out.read_bytes() == out2.read_bytes()


def test_qdensity_fallback_and_variance(tmp_path, noisy_fixture):
    out = tmp_path / "qd.csv"
    args = ["qdensity", "--set", f"input={noisy_fixture}", "--set", f"output={out}", "--set", "alpha=0.03",
            "--set", "alpha=0.5", "--set", "h=0.4", "--set", "h_q=0.1", "--set", "x=0",
            "--set", "variance=true", "--set", "bahadur=true"]
    assert main(args) == 0
    text = out.read_text()
    assert "up to the proportionality constant" in text and "plug-in, no oracle" in text
    rows = read_rows(out)
    assert rows[0]["scheme"] == "forward(fallback)" and rows[1]["scheme"] == "central"
    assert all(r["status"] == "ok" for r in rows)
    assert float(rows[1]["asymptotic_variance"]) > 0
    assert 1 / float(rows[1]["q_hat"]) == pytest.approx(0.3989, rel=0.25)


def test_auction(tmp_path, noisy_fixture):
    out = tmp_path / "auc.csv"
    args = ["auction", "--set", f"input={noisy_fixture}", "--set", f"output={out}", "--set", "alpha=0.5",
            "--set", "h=0.4", "--set", "x=0", "--set", "bidders=3"]
    assert main(args) == 0
    r = read_rows(out)[0]
    assert float(r["Q_value"]) == pytest.approx(float(r["Q_bid"]) + 0.5 * float(r["q_bid"]) / 2, rel=1e-15)
    assert main(args[:-1] + ["bidders=1"]) == 1


def test_experiment_matches_golden(tmp_path, capsys):
    for run in ("first", "second"):
        out = tmp_path / run / "tiny.csv"
        assert main(["experiment", "--set", f"experiment={GOLDEN / 'tiny_experiment.cfg'}",
                     "--set", f"output={out}"]) == 0
        assert out.read_bytes() == (GOLDEN / "tiny_experiment.csv").read_bytes()
        assert out.with_suffix(".json").read_bytes() == (GOLDEN / "tiny_experiment.json").read_bytes()


def test_experiment_bad_field(tmp_path, capsys):
    assert main(["experiment", "--set", f"experiment={GOLDEN / 'tiny_experiment.cfg'}",
                 "--set", f"output={tmp_path / 'o.csv'}", "--set", "replications=0"]) == 1
    assert "replications" in capsys.readouterr().err


def test_missing_command(tmp_path, capsys):
    assert main(["--set", "input=x"]) == 1
    assert "command" in capsys.readouterr().err
