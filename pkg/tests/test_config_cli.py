import json
import textwrap

import numpy as np
import pytest

from semilin.app import (
    EXIT_CERTIFICATE,
    EXIT_INVALID,
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    run_convergence_study,
    run_kernel_check,
    run_solve,
)
from semilin.cli import main
from semilin.config import ConfigError, config_from_dict, parse_config, write_config
from semilin.grid import BoxDomain, read_csv


def write_toml(path, body):
    path.write_text(textwrap.dedent(body))
    return path


def base(tmp_path, **extra):
    data = {
        "domain": {"dim": 1, "cells": 64},
        "equation": {"k": 1.0},
        "nonlinearity": {"builtin": "cubic_shift"},
        "output": {"directory": str(tmp_path / "out"), "figures": False},
    }
    for sec, vals in extra.items():
        data.setdefault(sec, {}).update(vals)
    return data


def test_minimal_config_fills_defaults(tmp_path):
    path = write_toml(tmp_path / "c.toml", """
        [domain]
        dim = 1
        cells = [128]
        [equation]
        k = 1.0
        [nonlinearity]
        builtin = "cubic_shift"
    """)
    cfg = parse_config(path)
    assert cfg.domain == BoxDomain((1.0,), (128,))
    assert cfg.solver.theta == 0.5 and cfg.solver.max_iter == 500
    assert cfg.output.directory == "out" and cfg.output.figures
    assert cfg.certificates.residual_tol == 1e-8
    assert cfg.kernel.sources == 5 and cfg.kernel.slack == 0.05


def test_k_zero_rejected(tmp_path):
    with pytest.raises(ConfigError) as exc:
        config_from_dict(base(tmp_path, equation={"k": 0.0}))
    assert "k must be positive" in exc.value.errors


def test_discontinuity_outside_band_rejected(tmp_path):
    data = base(tmp_path)
    data["nonlinearity"] = {
        "a": 1.0,
        "table": [[-2.0, -8.0], [2.0, 8.0]],
        "discontinuities": [{"u": 2.0, "left": 7.0, "right": 9.0}],
    }
    with pytest.raises(ConfigError) as exc:
        config_from_dict(data)
    assert any("outside" in e for e in exc.value.errors)


def test_every_error_is_collected(tmp_path):
    data = base(tmp_path, equation={"k": -1.0}, solver={"theta": 3.0, "bogus": 1})
    data["nonlinearity"] = {"builtin": "nope"}
    data["extra"] = {}
    with pytest.raises(ConfigError) as exc:
        config_from_dict(data)
    assert len(exc.value.errors) >= 5


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        parse_config("/nonexistent/config.toml")


def test_malformed_toml(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(write_toml(tmp_path / "bad.toml", "[domain\n"))


@pytest.mark.parametrize("name", ["cubic_shift_1d", "cubic_step_2d", "piecewise_jump_1d", "kernel_3d"])
def test_round_trip_shipped_configs(tmp_path, name):
    from pathlib import Path

    cfg = parse_config(Path(__file__).parents[1] / "configs" / f"{name}.toml")
    assert parse_config(write_config(cfg, tmp_path / "rt.toml")) == cfg


def test_round_trip_full(tmp_path):
    data = base(tmp_path, solver={"anderson_depth": 2, "initial_guess": 0.25},
                certificates={"tol_amp": 1e-3}, kernel={"seed": 7})
    data["nonlinearity"] = {
        "a": 1.0,
        "label": "t",
        "table": [[-2.0, -9.0], [0.0, -1.25], [2.0, 7.25]],
        "discontinuities": [{"u": 0.25, "left": -1.0, "right": -0.5}],
    }
    cfg = config_from_dict(data)
    assert parse_config(write_config(cfg, tmp_path / "rt.toml")) == cfg


def test_solve_cubic_shift_exit_zero(tmp_path):
    cfg = config_from_dict(base(tmp_path, domain={"cells": 128}, output={"figures": True}))
    rep = run_solve(cfg)
    assert rep.exit_code == EXIT_OK
    assert rep.certificates.passed
    out = tmp_path / "out"
    for name in ("solution.csv", "residuals.csv", "report.json", "solution.png", "residuals.png"):
        assert (out / name).is_file()
    data = json.loads((out / "report.json").read_text())
    for key in ("config", "solve", "certificates", "timings", "hash", "version", "exit_code"):
        assert key in data
    for key in ("residual", "apriori_sup", "amplitude", "energy", "max_principle"):
        assert set(data["certificates"][key]) == {"pass", "margin", "details"}
    assert open(out / "solution.csv").readline().strip() == "x,u"


def test_solution_csv_round_trip(tmp_path):
    cfg = config_from_dict(base(tmp_path, domain={"dim": 2, "cells": [8, 12], "lengths": [1.0, 1.5]}))
    rep = run_solve(cfg)
    coords, vals = read_csv(cfg.output.solution_csv)
    assert coords.shape == (9 * 13, 2)
    assert vals.size == 9 * 13
    assert coords[:, 0].max() == 1.0 and coords[:, 1].max() == 1.5
    np.testing.assert_array_equal(np.sort(vals), np.sort(rep.solution.full().ravel()))


def test_sign_violation_aborts_with_witness(tmp_path):
    data = base(tmp_path)
    data["nonlinearity"] = {"a": 1.0, "table": [[-10.0, 10.0], [10.0, -10.0]], "label": "minus_u"}
    rep = run_solve(config_from_dict(data))
    assert rep.exit_code == EXIT_INVALID
    assert rep.solve is None
    assert "witness" in rep.message
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["sign_condition"]["pass"] is False
    assert abs(report["sign_condition"]["witness"]) >= 1.0


def test_sinh_writes_zero_solution(tmp_path):
    data = base(tmp_path)
    data["nonlinearity"] = {"builtin": "sinh"}
    rep = run_solve(config_from_dict(data))
    assert rep.exit_code == EXIT_OK
    vals = np.loadtxt(tmp_path / "out" / "solution.csv", delimiter=",", skiprows=1)
    assert np.all(vals[:, 1] == 0.0)


def test_non_convergence_exit_code(tmp_path):
    rep = run_solve(config_from_dict(base(tmp_path, solver={"max_iter": 1})))
    assert rep.exit_code == EXIT_NOT_CONVERGED
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["solve"]["status"] == "max_iter_reached"


def test_certificate_failure_exit_code(tmp_path):
    rep = run_solve(config_from_dict(base(tmp_path, certificates={"residual_tol": 0.0})))
    assert rep.solve.converged
    assert rep.exit_code == EXIT_CERTIFICATE


def test_run_hash_deterministic(tmp_path):
    cfg = config_from_dict(base(tmp_path, solver={"anderson_depth": 3}))
    h1 = run_solve(cfg, write=False).run_hash
    h2 = run_solve(cfg, write=False).run_hash
    assert h1 == h2 and len(h1) == 64
    other = config_from_dict(base(tmp_path, equation={"k": 2.0}))
    assert run_solve(other, write=False).run_hash != h1


def test_convergence_study(tmp_path):
    cfg = config_from_dict(base(tmp_path, domain={"cells": 32}, output={"figures": True}))
    study = run_convergence_study(cfg, levels=4)
    assert study.complete
    assert [c[0] for c in study.cells] == [32, 64, 128, 256]
    for p in study.orders:
        assert p == pytest.approx(2.0, abs=0.2)
    assert all(o <= t for o, t in zip(study.overshoot, study.tol_amp))
    assert all(b <= a for a, b in zip(study.overshoot, study.overshoot[1:]))
    for name in ("study.json", "study.csv", "convergence.png"):
        assert (tmp_path / "out" / name).is_file()


def test_study_needs_three_levels(tmp_path):
    with pytest.raises(ValueError):
        run_convergence_study(config_from_dict(base(tmp_path)), levels=2)


def test_kernel_check_unsupported_dim():
    with pytest.raises(NotImplementedError):
        run_kernel_check(BoxDomain((1.0, 1.0), (8, 8)), 1.0)


def test_kernel_check_mass_k2(tmp_path):
    rep = run_kernel_check(BoxDomain((1.0,) * 3, (8, 8, 8)), 2.0, sources=2, output_dir=tmp_path)
    assert rep.yukawa_mass == pytest.approx(0.25, abs=1e-3)
    assert rep.passed
    assert (tmp_path / "kernel_report.json").is_file()
    assert (tmp_path / "kernel_profile.png").is_file()


# command line ------------------------------------------------------------

def cli_config(tmp_path, body):
    return str(write_toml(tmp_path / "c.toml", body.replace("OUT", str(tmp_path / "out"))))


def test_cli_solve(tmp_path, capsys):
    path = cli_config(tmp_path, """
        [domain]
        dim = 1
        cells = 64
        [equation]
        k = 1.0
        [nonlinearity]
        builtin = "exp_shift"
        [output]
        directory = "OUT"
    """)
    assert main(["solve", "--config", path]) == 0
    assert "converged" in capsys.readouterr().out


def test_cli_invalid_config(tmp_path, capsys):
    path = cli_config(tmp_path, """
        [domain]
        dim = 1
        cells = 64
        [equation]
        k = 0.0
        [nonlinearity]
        builtin = "cubic_shift"
    """)
    assert main(["solve", "--config", path]) == 1
    assert "k must be positive" in capsys.readouterr().err
    assert main(["solve", "--config", str(tmp_path / "missing.toml")]) == 1


def test_cli_study_levels(tmp_path):
    path = cli_config(tmp_path, """
        [domain]
        dim = 1
        cells = 16
        [equation]
        k = 1.0
        [nonlinearity]
        builtin = "cubic_shift"
        [output]
        directory = "OUT"
        figures = false
    """)
    assert main(["study", "--config", path, "--levels", "2"]) == 1
    assert main(["study", "--config", path, "--levels", "3"]) == 0


def test_cli_kernel_check(tmp_path, capsys):
    body = """
        [domain]
        dim = DIM
        cells = 8
        [equation]
        k = 1.0
        [nonlinearity]
        builtin = "cubic_shift"
        [output]
        directory = "OUT"
        figures = false
        [kernel]
        sources = 2
    """
    assert main(["kernel-check", "--config", cli_config(tmp_path, body.replace("DIM", "2"))]) == 1
    assert main(["kernel-check", "--config", cli_config(tmp_path, body.replace("DIM", "3"))]) == 0
    assert "yukawa mass" in capsys.readouterr().out


def test_cli_catalog(capsys):
    assert main(["catalog"]) == 0
    out = capsys.readouterr().out
    for label in ("cubic_shift", "sinh", "exp_shift", "cubic_step"):
        assert label in out
    assert "u=0.25" in out
