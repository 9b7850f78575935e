"""Experiment configuration, construction, and ladder reports."""

import math

import numpy as np
import pytest

from pinhomog.errors import ConfigError
from pinhomog.experiments import (ExperimentConfig, build_experiment,
                                  capacity_constant, default_config,
                                  error_metric, interior_ball_constant,
                                  run_ladder, solve_case, solve_limit)
from pinhomog.mesh import build_square_mesh
from pinhomog.minimize import DisplacementField


def test_default_config_names():
    for name in ("bvp1", "bvp2", "bvp3", "bvp4", "bulk_pin", "neo_hookean"):
        cfg = default_config(name)
        assert cfg.experiment == name
    with pytest.raises(ConfigError):
        default_config("bvp9")


def test_config_validation():
    with pytest.raises(ConfigError):
        default_config("bvp1", eps_values=(0.25, 0.5))  # not decreasing
    with pytest.raises(ConfigError):
        ExperimentConfig("bvp1", p=1.5)  # missing x1c
    with pytest.raises(ConfigError):
        default_config("bvp1", capacity_source="wrong")
    with pytest.raises(ConfigError):
        ExperimentConfig("bvp1", p=1.5, x1c=1.2, capacity_source="literal")


def test_interior_ball_constant():
    # unit-diameter disk pin: pi (2q)^(p-1) with q = (2-p)/(p-1), equal to
    # the radial oracle 2 pi q^(p-1) r^(2-p) at r = 1/2
    assert interior_ball_constant(1.5) == pytest.approx(math.pi * math.sqrt(2.0),
                                                        rel=1e-12)
    assert interior_ball_constant(4.0 / 3.0) == pytest.approx(
        math.pi * 4.0 ** (1.0 / 3.0), rel=1e-12)
    q = (2.0 - 1.5) / (1.5 - 1.0)
    radial = 2 * math.pi * q ** 0.5 * 0.5 ** 0.5
    assert interior_ball_constant(1.5) == pytest.approx(radial, rel=1e-12)


def test_capacity_constant_sources():
    cfg = default_config("bvp1")
    assert capacity_constant(cfg) == pytest.approx(1.602)
    cfg3 = default_config("bvp3")
    assert capacity_constant(cfg3) == pytest.approx(math.pi * 4 ** (1 / 3), rel=1e-12)


def test_build_bvp1_scaling_and_layout():
    cfg = default_config("bvp1", eps_values=(0.5, 0.25))
    built = build_experiment(cfg)
    assert len(built.cases) == 2
    for eps, delta, mesh, layout in built.cases:
        assert delta == pytest.approx(eps ** 2)  # (d-1)/(d-p) = 2 at p = 3/2
        sites = np.array([el.site for el in layout.elements])
        assert np.allclose(sites[:, 0], 1.0)  # right edge


def test_build_neo_hookean_exponential_scaling():
    cfg = default_config("neo_hookean", eps_values=(0.25,))
    built = build_experiment(cfg)
    eps, delta, mesh, layout = built.cases[0]
    assert delta == pytest.approx(math.exp(-1.9 / eps ** 2), rel=1e-12)


def test_delta_floor_rejected():
    cfg = default_config("bvp1", eps_values=(1e-4,))
    with pytest.raises(ConfigError):
        build_experiment(cfg)


def test_error_metric_zero_on_identical_fields():
    mesh = build_square_mesh(1.0, 0.25)
    u = DisplacementField(mesh, np.random.default_rng(0).normal(size=(mesh.n_vertices(), 2)))
    assert error_metric(u, u) == 0.0


def test_error_metric_constant_offset():
    mesh = build_square_mesh(1.0, 0.25)
    z = np.zeros((mesh.n_vertices(), 2))
    ua = DisplacementField(mesh, z)
    ub = DisplacementField(mesh, z + np.array([0.3, 0.4]))
    # |(0.3, 0.4)| = 0.5 over the unit square
    assert error_metric(ua, ub) == pytest.approx(0.5, rel=1e-12)


@pytest.fixture(scope="module")
def tiny_ladder(tmp_path_factory):
    out = tmp_path_factory.mktemp("ladder")
    cfg = default_config("bvp1", h=1.0 / 8, eps_values=(0.5, 0.25),
                         resolve_factor=3.0, grad_tol=1e-7)
    report = run_ladder(cfg, out_dir=str(out))
    return cfg, report, out


def test_tiny_ladder_rows(tiny_ladder):
    cfg, report, out = tiny_ladder
    assert not report.partial
    assert len(report.rows) == 3  # two eps entries plus the limit row
    assert report.rows[-1]["status"] == "limit"
    assert all(r["status"] == "ok" for r in report.rows[:-1])
    assert (out / "bvp1_report.csv").exists()


def test_tiny_ladder_gap_decreases(tiny_ladder):
    cfg, report, out = tiny_ladder
    gaps = [r["gap"] for r in report.rows[:-1]]
    assert gaps[1] < gaps[0]


def test_report_deterministic_except_seconds(tiny_ladder):
    cfg, report, out = tiny_ladder
    report2 = run_ladder(cfg)
    strip = lambda rows: [[c for j, c in enumerate(r) if j != 7] for r in rows]
    assert strip(report.csv_rows()) == strip(report2.csv_rows())


def test_solve_limit_and_case_agree_with_ladder(tiny_ladder):
    cfg, report, out = tiny_ladder
    built = build_experiment(cfg)
    lim = solve_limit(built)
    assert lim.energy == pytest.approx(report.rows[-1]["energy"], abs=1e-14)
    res = solve_case(built, 0)
    assert res.energy == pytest.approx(report.rows[0]["energy"], abs=1e-14)
