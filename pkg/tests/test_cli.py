"""Command line interface: config parsing, subcommands, exit codes."""

import numpy as np
import pytest

from pinhomog.cli import (experiment_from_values, main, parse_config,
                          write_config)
from pinhomog.errors import ConfigError
from pinhomog.experiments import default_config

TINY = """
[experiment]
name = bvp1
p = 1.5
x1c = 1.2
eps_values = 0.5,0.25
capacity_value = 1.602

[mesh]
h = 0.125
resolve_factor = 3.0

[solver]
grad_tol = 1e-7
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY)
    return path


def test_parse_config_types(tiny_config):
    values = parse_config(str(tiny_config))
    assert values["experiment"]["p"] == 1.5
    assert values["experiment"]["eps_values"] == (0.5, 0.25)
    assert values["mesh"]["h"] == 0.125
    assert values["solver"]["grad_tol"] == 1e-7


def test_parse_config_rejects_unknown_key(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[experiment]\nname = bvp1\nwhat = 3\n")
    with pytest.raises(ConfigError):
        parse_config(str(path))


def test_parse_config_rejects_unknown_section(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[nonsense]\nfoo = 1\n")
    with pytest.raises(ConfigError):
        parse_config(str(path))


def test_parse_config_missing_file():
    with pytest.raises(ConfigError):
        parse_config("/nonexistent/file.ini")


def test_overrides(tiny_config):
    values = parse_config(str(tiny_config), ["mesh.h=0.25", "grad_tol=1e-6"])
    assert values["mesh"]["h"] == 0.25
    assert values["solver"]["grad_tol"] == 1e-6
    with pytest.raises(ConfigError):
        parse_config(str(tiny_config), ["p=1.4"])  # ambiguous: experiment or capacity
    with pytest.raises(ConfigError):
        parse_config(str(tiny_config), ["nonsense=1"])
    with pytest.raises(ConfigError):
        parse_config(str(tiny_config), ["mesh.h"])  # not KEY=VALUE


def test_experiment_round_trip(tmp_path):
    cfg = default_config("bvp2", h=1.0 / 16, eps_values=(0.5,))
    path = tmp_path / "rt.ini"
    write_config(cfg, path)
    values = parse_config(str(path))
    back = experiment_from_values(values)
    assert back == cfg


def test_experiment_from_values_requires_name():
    with pytest.raises(ConfigError):
        experiment_from_values({"experiment": {"p": 1.5}})


def test_main_config_error_exit_code(tmp_path, capsys):
    code = main(["--config", str(tmp_path / "missing.ini"),
                 "--out", str(tmp_path), "ladder"])
    assert code == 1
    assert "configuration error" in capsys.readouterr().err


def test_main_solve_writes_fields(tiny_config, tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["--config", str(tiny_config), "--out", str(out), "solve"])
    assert code == 0
    assert (out / "bvp1_limit.vtk").exists()
    assert (out / "bvp1_limit_trace.csv").exists()
    assert (out / "run.log").exists()
    assert "energy=" in capsys.readouterr().out


def test_main_solve_eps_entry(tiny_config, tmp_path):
    out = tmp_path / "out"
    code = main(["--config", str(tiny_config), "--out", str(out),
                 "solve", "--eps", "0.5"])
    assert code == 0
    assert (out / "bvp1_eps0.5.vtk").exists()


def test_main_solve_eps_off_ladder(tiny_config, tmp_path):
    code = main(["--config", str(tiny_config), "--out", str(tmp_path),
                 "solve", "--eps", "0.3"])
    assert code == 1


def test_main_ladder(tiny_config, tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["--config", str(tiny_config), "--out", str(out), "ladder"])
    assert code == 0
    assert (out / "bvp1_report.csv").exists()
    assert (out / "bvp1_limit.vtk").exists()
    assert "[limit]" in capsys.readouterr().out


def test_main_validate(tiny_config, tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["--config", str(tiny_config), "--out", str(out), "validate"])
    assert code == 0
    assert (out / "validate.csv").exists()
    assert "OK" in capsys.readouterr().out


def test_main_capacity_disk(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["--out", str(out), "--set", "capacity.r=1.0",
                 "capacity", "--shape", "disk", "--p", "1.5"])
    assert code == 0
    assert (out / "capacity.csv").exists()
    line = capsys.readouterr().out
    phi = float(line.split("phi=")[1].split()[0])
    assert phi == pytest.approx(2 * np.pi, rel=0.01)


def test_main_capacity_unknown_shape(tmp_path):
    code = main(["--out", str(tmp_path), "capacity", "--shape", "torus"])
    assert code == 1
