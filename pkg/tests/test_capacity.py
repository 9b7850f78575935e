"""Cell problems, ladder extrapolation, and capacity oracles."""

import math

import numpy as np
import pytest

from pinhomog.capacity import (CapacityEstimate, CellProblem, cell_mesh,
                               disk_capacity, extrapolate, run_r_ladder,
                               solve_cell, write_ladder_csv)
from pinhomog.errors import DataError, InvalidArgumentError


def test_cell_problem_validation():
    with pytest.raises(InvalidArgumentError):
        CellProblem("full_ball", ("disk", 1.0), 1.5, 1.5, np.array([1.0]))
    with pytest.raises(InvalidArgumentError):
        CellProblem("full_ball", ("segment", 1.0), 8.0, 1.5, np.array([1.0]))
    with pytest.raises(InvalidArgumentError):
        CellProblem("full_ball", ("half_disk", 1.0), 8.0, 1.5, np.array([1.0]))
    with pytest.raises(InvalidArgumentError):
        CellProblem("full_ball", ("disk", 1.0), 8.0, 1.0, np.array([1.0]))
    with pytest.raises(InvalidArgumentError):
        CellProblem("cube", ("disk", 1.0), 8.0, 1.5, np.array([1.0]))


def test_extrapolate_recovers_power_law():
    # synthetic ladder phi_R = 5 + 3 * R^(-1/2) on a geometric ladder
    R = np.array([8.0, 16.0, 32.0])
    vals = 5.0 + 3.0 * R ** -0.5
    est = extrapolate(R, vals)
    assert est.value == pytest.approx(5.0, abs=1e-12)
    assert est.beta == pytest.approx(0.5, abs=1e-12)


def test_extrapolate_near_constant_path():
    R = np.array([8.0, 16.0, 32.0])
    vals = np.array([2.0, 2.0 + 1e-14, 2.0 - 1e-14])
    est = extrapolate(R, vals)
    assert est.beta is None
    assert est.value == pytest.approx(2.0, abs=1e-12)


def test_extrapolate_rejects_non_monotone():
    R = np.array([8.0, 16.0, 32.0])
    with pytest.raises(DataError):
        extrapolate(R, np.array([1.0, 2.0, 1.5]))
    with pytest.raises(DataError):
        extrapolate(R, np.array([1.0, 1.1, 1.4]))  # growing differences


def test_annulus_exact_solution():
    # p = 3/2 annulus 1 <= rho <= R with u(1) = 0, u(R) = 1: the minimizer is
    # radial with |u'| ~ rho^(-2(2-p)/(p-1)) = rho^(-2) here, giving
    # phi_R = 2 pi q^(p-1) (1 - 1/R)^(1-p) with q = (2-p)/(p-1) = 1
    R = 8.0
    prob = CellProblem("full_ball", ("disk", 1.0), R, 1.5, np.array([1.0]))
    phi, res = solve_cell(prob)
    exact = 2 * math.pi * (1 - 1 / R) ** -0.5
    assert res.converged
    assert phi == pytest.approx(exact, rel=5e-3)


def test_disk_capacity_oracle():
    # exact whole-plane limit 2 pi q^(p-1) r^(2-p); p = 3/2, r = 1: 2 pi
    est = disk_capacity(1.5, 1.0)
    assert est.value == pytest.approx(2 * math.pi, rel=0.01)
    assert est.beta is not None and est.beta > 0


def test_r_monotonicity():
    # truncated capacities decrease toward the limit as R grows
    vals = []
    for R in (6.0, 12.0, 24.0):
        prob = CellProblem("full_ball", ("disk", 1.0), R, 1.5, np.array([1.0]))
        phi, _ = solve_cell(prob)
        vals.append(phi)
    assert vals[0] > vals[1] > vals[2] - 1e-10


def test_half_ball_mesh_stays_in_upper_plane():
    prob = CellProblem("half_ball", ("segment", 1.0), 8.0, 1.5, np.array([1.0]))
    mesh = cell_mesh(prob)
    mesh.validate()
    assert np.all(mesh.vertices[:, 1] >= -1e-12)


def test_ladder_csv(tmp_path):
    est = CapacityEstimate(2.0, 0.5, np.array([8.0, 16.0]),
                           np.array([2.2, 2.1]), 0.1)
    path = tmp_path / "ladder.csv"
    write_ladder_csv(path, est)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "R,phi_R,fitted_beta,phi_inf,err"
    assert len(lines) == 3
