"""Constrained minimization of the discrete functionals."""

import numpy as np
import pytest

from pinhomog.constraints import PenaltyDensity, PointTarget
from pinhomog.errors import IllPosedError
from pinhomog.materials import p_norm
from pinhomog.mesh import build_square_mesh
from pinhomog.minimize import (DiscreteFunctional, HardConstraintGroup,
                               SolveOptions, boundary_penalty_term,
                               dirichlet_from_tags, edges_on_vertical_line,
                               solve)


def full_boundary_dirichlet(mesh, fn):
    idx = mesh.boundary_vertex_indices()
    vals = np.array([fn(x) for x in mesh.vertices[idx]])
    return idx, vals


def test_harmonic_reproduces_linear_fields():
    # p = 2 minimizers with linear boundary data are the linear fields
    # themselves, exactly, for any conforming P1 mesh
    mesh = build_square_mesh(1.0, 1.0 / 8)
    idx, vals = full_boundary_dirichlet(mesh, lambda x: np.array([x[0] - 0.5 * x[1], x[1]]))
    fn = DiscreteFunctional(mesh, p_norm(2.0), 2, idx, vals)
    res = solve(fn, SolveOptions(grad_tol=1e-12))
    assert res.converged
    exact = np.column_stack([mesh.vertices[:, 0] - 0.5 * mesh.vertices[:, 1],
                             mesh.vertices[:, 1]])
    assert np.max(np.abs(res.u.values - exact)) <= 1e-8


def test_energy_of_linear_field_is_exact():
    mesh = build_square_mesh(1.0, 0.25)
    model = p_norm(1.5, eta=1e-12)
    u = np.column_stack([0.3 * mesh.vertices[:, 0], np.zeros(mesh.n_vertices())])
    fn = DiscreteFunctional(mesh, model, 2, np.array([], dtype=int), np.zeros((0, 2)))
    # constant gradient (0.3, 0; 0, 0): density 0.3^1.5 over the unit square
    assert fn.energy(u) == pytest.approx(0.3 ** 1.5, rel=1e-9)


def test_p_laplacian_converges_with_preconditioner():
    mesh = build_square_mesh(1.0, 1.0 / 8)
    idx, vals = full_boundary_dirichlet(
        mesh, lambda x: np.array([np.sin(np.pi * x[0]) * x[1], 0.0]))
    fn = DiscreteFunctional(mesh, p_norm(1.5), 2, idx, vals)
    res = solve(fn, SolveOptions())
    assert res.converged
    assert res.grad_norm <= 1e-6


def test_hard_constraint_is_satisfied():
    mesh = build_square_mesh(1.0, 0.25)
    idx, vals = full_boundary_dirichlet(mesh, lambda x: np.zeros(2))
    center = int(np.argmin(np.linalg.norm(mesh.vertices - 0.5, axis=1)))
    target = np.array([0.3, 0.0])
    grp = HardConstraintGroup(np.array([center]), mesh.vertices[center],
                              PointTarget(target))
    fn = DiscreteFunctional(mesh, p_norm(1.5), 2, idx, vals, hard=[grp])
    res = solve(fn)
    assert res.converged
    assert np.allclose(res.u.values[center], target, atol=1e-12)
    assert fn.constraint_residual(res.u.values) <= 1e-12
    assert res.energy > 0


def test_penalty_pulls_toward_target():
    mesh = build_square_mesh(1.0, 0.25)
    idx, vals = dirichlet_from_tags(mesh, 2, {"left": np.zeros(2)})
    dens = PenaltyDensity(50.0, 1.5, PointTarget(np.array([0.2, 0.0])))
    term = boundary_penalty_term(mesh, ["right"], dens)
    fn = DiscreteFunctional(mesh, p_norm(1.5), 2, idx, vals, penalties=[term])
    res = solve(fn)
    assert res.converged
    right = mesh.boundary_vertex_indices("right")
    mean_u1 = res.u.values[right, 0].mean()
    assert 0.05 < mean_u1 < 0.2


def test_unconstrained_problem_is_ill_posed():
    mesh = build_square_mesh(1.0, 0.5)
    fn = DiscreteFunctional(mesh, p_norm(1.5), 2, np.array([], dtype=int),
                            np.zeros((0, 2)))
    with pytest.raises(IllPosedError):
        solve(fn)


def test_dirichlet_from_tags_callable_and_constant():
    mesh = build_square_mesh(1.0, 0.25)
    idx, vals = dirichlet_from_tags(mesh, 2, {
        "left": lambda x: np.array([x[1], 0.0]),
        "bottom": np.array([1.0, 2.0]),
    })
    assert len(idx) == len(vals)
    for i, v in zip(idx, vals):
        x = mesh.vertices[i]
        if x[0] == 0.0 and x[1] > 0:
            assert np.allclose(v, [x[1], 0.0])


def test_edges_on_vertical_line():
    mesh = build_square_mesh(1.0, 0.25)
    edges = edges_on_vertical_line(mesh, 1.0, 0.0, 1.0)
    assert len(edges) > 0
    for a, b in edges:
        assert mesh.vertices[a, 0] == pytest.approx(1.0)
        assert mesh.vertices[b, 0] == pytest.approx(1.0)


def test_solve_is_deterministic():
    mesh = build_square_mesh(1.0, 0.25)
    idx, vals = full_boundary_dirichlet(
        mesh, lambda x: np.array([x[0] * x[1], 0.0]))

    def run():
        fn = DiscreteFunctional(mesh, p_norm(1.5), 2, idx, vals)
        return solve(fn).u.values

    a, b = run(), run()
    assert np.array_equal(a, b)


def test_trace_records_monotone_energy():
    mesh = build_square_mesh(1.0, 0.25)
    idx, vals = full_boundary_dirichlet(
        mesh, lambda x: np.array([np.sin(np.pi * x[0]), 0.0]))
    fn = DiscreteFunctional(mesh, p_norm(1.5), 2, idx, vals)
    res = solve(fn)
    energies = [row[1] for row in res.trace]
    assert all(b <= a + 1e-12 * (1 + abs(a)) for a, b in zip(energies, energies[1:]))
