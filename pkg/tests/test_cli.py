import csv
import io
import json
import math

import numpy as np
import pytest

from steklov_layer.ball import richardson_limit
from steklov_layer.cli import main, parse_eps_grid
from steklov_layer.config import RunConfig, load_config
from steklov_layer.errors import ConfigError, FitError
from steklov_layer.fitting import fit_slope, fit_two_term, observed_orders
from steklov_layer.mesh import read_msh

DISK = {"curve": {"kind": "disk", "r": 1.0}, "mass_M": math.pi, "j": 1, "k": 5,
        "eps_list": [0.04, 0.02, 0.01], "mesh": {"n_tangential": 96, "n_layer": 4},
        "disk_mode": True}
ELLIPSE = {"curve": {"kind": "ellipse", "a": 1.3, "b": 0.8}, "mass_M": math.pi, "j": 1, "k": 4,
           "eps_list": [0.05, 0.025], "mesh": {"n_tangential": 96, "n_layer": 2}}


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def read_csv(text):
    lines = text.splitlines()
    assert lines[0].startswith("# steklov_layer 0.1.0 config=")
    return list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


# ------------------------------------------------------------------ fitting

def test_fit_exact_quadratic():
    eps = [0.1, 0.05, 0.025, 0.0125]
    fit = fit_two_term([(e, 3 + 2 * e + 5 * e * e) for e in eps], 3.0, 2.0)
    assert fit.slope == pytest.approx(2.0, abs=1e-10)
    assert fit.intercept == pytest.approx(math.log(5), abs=1e-9)
    assert fit.half_width < 1e-9


def test_fit_roundoff_remainders():
    with pytest.raises(FitError) as info:
        fit_two_term([(e, 3 + 2 * e) for e in (0.1, 0.05, 0.025)], 3.0, 2.0)
    assert "remainder" in info.value.diagnostics


def test_fit_mixed_signs_and_too_few_rows():
    rows = [(0.1, 3.2 + 1e-3), (0.05, 3.1 - 1e-4), (0.025, 3.05 + 1e-5)]
    with pytest.raises(FitError, match="change sign"):
        fit_two_term(rows, 3.0, 2.0)
    with pytest.raises(FitError):
        fit_two_term(rows[:2], 3.0, 2.0)


def test_fit_slope_half_width():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    y = x ** 1.5 * np.array([1.0, 1.01, 0.99, 1.0])
    slope, _, hw = fit_slope(x, y)
    # reference standard error from the textbook formula
    lx, ly = np.log(x), np.log(y)
    b = np.polyfit(lx, ly, 1)
    r = ly - np.polyval(b, lx)
    se = math.sqrt(r @ r / 2 / np.sum((lx - lx.mean()) ** 2))
    assert slope == pytest.approx(b[0], abs=1e-12)
    assert hw == pytest.approx(2 * se, rel=1e-10)
    assert observed_orders([0.1, 0.05], [1e-2, 2.5e-3])[0] == pytest.approx(2.0)


# ------------------------------------------------------------------ config

def test_config_validation(tmp_path):
    bad = dict(DISK, eps_list=[0.01, 0.02])
    with pytest.raises(ConfigError, match="eps_list must be strictly decreasing"):
        load_config(write_cfg(tmp_path, bad))
    with pytest.raises(ConfigError, match="unknown config keys"):
        load_config(write_cfg(tmp_path, dict(DISK, colour="red")))
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    with pytest.raises(ConfigError):
        RunConfig(curve={"kind": "disk"}, mass_M=math.pi, eps_list=[0.95]).build_curve()
    with pytest.raises(ConfigError):
        RunConfig(curve={"kind": "disk"}, mass_M=-1)


def test_tolerance_override_and_digest():
    a = RunConfig(**DISK)
    b = RunConfig(**DISK).override(["min_slope=1.9"])
    assert b.tolerances["min_slope"] == 1.9
    assert a.digest() != b.digest()
    assert a.digest() == RunConfig(**DISK).digest()
    with pytest.raises(ConfigError):
        a.override(["bogus=1"])
    with pytest.raises(ConfigError):
        a.override(["min_slope=high"])


def test_eps_grid():
    assert parse_eps_grid("0.1:0.5:0.1") == [0.1, 0.2, 0.3, 0.4]
    assert len(parse_eps_grid("0.005:1:0.005")) == 199
    with pytest.raises(ConfigError):
        parse_eps_grid("0.1:0.5")
    with pytest.raises(ConfigError):
        parse_eps_grid("0.5:0.1:0.1")


# ------------------------------------------------------------------ commands

def test_ascending_eps_exit_code(tmp_path, capsys):
    cfg = write_cfg(tmp_path, dict(DISK, eps_list=[0.01, 0.02, 0.04]))
    code, out, err = run(capsys, "steklov", "--config", cfg)
    assert code == 2
    msg = json.loads(err.strip().splitlines()[-1])
    assert msg["exit_code"] == 2 and msg["error"] == "ConfigError"
    assert "eps_list must be strictly decreasing" in msg["message"]


def test_bad_arguments_exit_code(capsys):
    code, _, err = run(capsys, "ball", "--kmax", "two")
    assert code == 2
    code, _, err = run(capsys, "ball", "--kmax", "2")
    assert code == 2 and "--M" in err


def test_steklov_command(tmp_path, capsys):
    cfg = write_cfg(tmp_path, DISK)
    code, out, _ = run(capsys, "steklov", "--config", cfg)
    assert code == 0
    rows = read_csv(out)
    assert [int(r["index"]) for r in rows] == [0, 1, 2, 3, 4]
    assert float(rows[1]["mu"]) == pytest.approx(2.0, rel=0.01)
    assert float(rows[3]["mu"]) == pytest.approx(4.0, rel=0.01)


def test_output_is_reproducible(tmp_path, capsys):
    cfg = write_cfg(tmp_path, ELLIPSE)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["steklov", "--config", cfg, "--out", str(a)]) == 0
    assert main(["steklov", "--config", cfg, "--out", str(b), "--threads", "1"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert RunConfig(**ELLIPSE).digest() in a.read_text().splitlines()[0]


def test_neumann_command(tmp_path, capsys):
    cfg = write_cfg(tmp_path, ELLIPSE)
    code, out, _ = run(capsys, "neumann", "--config", cfg)
    assert code == 0
    rows = read_csv(out)
    assert list(rows[0]) == ["eps", "j", "lambda", "mu", "predicted", "remainder"]
    lam = [float(r["lambda"]) for r in rows]
    assert lam[0] > lam[1] > float(rows[0]["mu"])
    for r in rows:
        assert float(r["remainder"]) == pytest.approx(float(r["lambda"]) - float(r["predicted"]),
                                                      abs=1e-12)


def test_expand_command(tmp_path, capsys):
    cfg = write_cfg(tmp_path, dict(DISK, mesh={"n_tangential": 192, "n_layer": 2}))
    code, out, _ = run(capsys, "expand", "--config", cfg)
    assert code == 0
    rep = json.loads(out)
    assert rep["mu1"] == pytest.approx(7 / 3, rel=0.01)
    assert rep["compatibility_residual"] < 1e-6
    assert rep["uj1_condition"]["error"] < 1e-8


def test_mesh_command(tmp_path, capsys):
    cfg = write_cfg(tmp_path, ELLIPSE)
    target = tmp_path / "m.msh"
    assert main(["mesh", "--config", cfg, "--out", str(target)]) == 0
    m = read_msh(target)
    m.validate()
    assert main(["mesh", "--config", cfg]) == 2


def test_quasimode_command(tmp_path, capsys):
    cfg = write_cfg(tmp_path, dict(DISK, eps_list=[0.1, 0.05, 0.025, 0.0125],
                                   mesh={"n_tangential": 96, "n_layer": 2}))
    code, out, _ = run(capsys, "quasimode", "--config", cfg, "--order", "0")
    assert code == 0
    rows = read_csv(out)
    assert len(rows) == 4
    res = [float(r["residual"]) for r in rows]
    assert res[0] > res[-1]


def test_converge_command(tmp_path, capsys):
    cfg = write_cfg(tmp_path, DISK)
    code, out, _ = run(capsys, "converge", "--config", cfg)
    assert code == 0
    rep = json.loads(out)
    assert rep["slope"] >= 1.7
    assert len(rep["oracle"]) == 3
    assert rep["oracle_slope"] == pytest.approx(2.0, abs=0.15)
    assert all(r["oleinik_pass"] for r in rep["rows"])
    code, out, _ = run(capsys, "converge", "--config", cfg, "--tol-override", "min_slope=3")
    assert code == 4


def test_numerics_exit_code(tmp_path, capsys):
    cfg = write_cfg(tmp_path, dict(ELLIPSE, k=400))
    code, _, err = run(capsys, "steklov", "--config", cfg)
    assert code == 2
    cfg = write_cfg(tmp_path, dict(DISK, j=1, disk_mode=False, eps_list=[0.04, 0.02, 0.01]))
    code, _, err = run(capsys, "expand", "--config", cfg)
    assert code == 3
    assert json.loads(err.strip().splitlines()[-1])["error"] == "DegeneracyError"


def test_ball_small(tmp_path, capsys):
    out = tmp_path / "ball.csv"
    code = main(["ball", "--M", str(math.pi), "--kmax", "2", "--lmax", "1",
                 "--eps-grid", "0.005:0.2:0.005", "--out", str(out)])
    assert code == 0
    rows = read_csv(out.read_text())
    k1 = [(float(r["eps"]), float(r["lambda"])) for r in rows if r["k"] == "1"]
    eps, lam = np.array(k1[:6]).T
    assert richardson_limit(eps, lam) == pytest.approx(2.0, abs=1e-6)
    assert {r["l"] for r in rows} == {"1"}
