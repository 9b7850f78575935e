"""Nonlinear capacity densities from truncated cell problems.

The density phi(x, z) is the infimum of the energy of fields that equal z
far from the pinned set K and are admissible on K.  It is approximated on
balls (or half-balls, for boundary pins) of increasing radius R with the
datum imposed on the outer circle, followed by Richardson extrapolation of
the ladder phi_R = phi_inf + a R^(-beta).  In the borderline p = d case the
ladder variable is log T and log T * m_T is extrapolated instead.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .constraints import ConstraintSet, PointTarget
from .errors import DataError, InvalidArgumentError
from .materials import p_norm
from .mesh import (Mesh, build_polar_mesh, geometric_radii, reflect_half_mesh)
from .minimize import DiscreteFunctional, HardConstraintGroup, SolveOptions, solve


@dataclass(frozen=True)
class CellProblem:
    """One truncated cell problem.

    geometry : "full_ball" or "half_ball" (half-balls model boundary pins;
        the pinned set sits on the flat face and the flat face is traction
        free by reflection symmetry)
    pin : ("disk", r) | ("half_disk", r) | ("segment", L), the shape of K
    datum : value imposed on the outer circle (length m)
    constraint : admissible set on K; defaults to {0}
    """

    geometry: str
    pin: tuple
    R: float
    p: float
    datum: np.ndarray
    constraint: ConstraintSet | None = None
    n_theta: int = 64
    ring_ratio: float = 1.18
    tip_rings: int = 10

    def __post_init__(self):
        if self.geometry not in ("full_ball", "half_ball"):
            raise InvalidArgumentError(f"unknown cell geometry {self.geometry!r}")
        kind, size = self.pin
        if kind not in ("disk", "half_disk", "segment") or size <= 0:
            raise InvalidArgumentError(f"bad pin spec {self.pin!r}")
        if kind == "segment" and self.geometry != "half_ball":
            raise InvalidArgumentError("segment pins live on the flat face of a half ball")
        if kind == "half_disk" and self.geometry != "half_ball":
            raise InvalidArgumentError("half-disk pins require half-ball geometry")
        if self.R <= 2 * self._pin_radius():
            raise InvalidArgumentError("truncation radius too close to the pinned set")
        if self.p <= 1:
            raise InvalidArgumentError("growth exponent must exceed 1")
        object.__setattr__(self, "datum", np.atleast_1d(np.asarray(self.datum, float)))

    def _pin_radius(self) -> float:
        kind, size = self.pin
        return 0.5 * size if kind == "segment" else size

    @property
    def m(self) -> int:
        return len(self.datum)


@dataclass
class CapacityEstimate:
    value: float               # extrapolated phi
    beta: float | None         # fitted decay rate, None on the constant path
    ladder: np.ndarray         # truncation radii (or log T values)
    raw: np.ndarray            # phi_R along the ladder
    error_estimate: float      # |phi - last ladder value|

    def rows(self):
        """Report rows (R, phi_R, beta, phi_inf, err) for CSV output."""
        b = float("nan") if self.beta is None else self.beta
        return [(float(r), float(v), b, self.value, self.error_estimate)
                for r, v in zip(self.ladder, self.raw)]


def _cell_radii(problem: CellProblem) -> np.ndarray:
    kind, size = problem.pin
    if kind == "segment":
        half = 0.5 * size
        gaps = half * 0.55 ** np.arange(1, problem.tip_rings + 1)
        inner = np.sort(half - gaps)
        inner = inner[inner > 0.05 * half]
        outer = half + np.sort(gaps)
        far = geometric_radii(outer[-1], problem.R, problem.ring_ratio)[1:]
        return np.concatenate([inner, [half], outer, far])
    return geometric_radii(size, problem.R, problem.ring_ratio)


def cell_mesh(problem: CellProblem) -> Mesh:
    return build_polar_mesh(_cell_radii(problem), problem.n_theta,
                            half=problem.geometry == "half_ball")


def _pinned_vertices(problem: CellProblem, mesh: Mesh) -> np.ndarray:
    v = mesh.vertices
    rho = np.hypot(v[:, 0], v[:, 1])
    kind, size = problem.pin
    tol = 1e-9 * max(1.0, problem.R)
    if kind == "segment":
        flat = set(mesh.boundary_vertex_indices("flat").tolist())
        idx = [i for i in range(len(v))
               if i in flat and rho[i] <= 0.5 * size + tol]
        return np.array(idx, dtype=int)
    return np.nonzero(rho <= size + tol)[0]


def solve_cell(problem: CellProblem, options: SolveOptions | None = None) -> tuple[float, object]:
    """Energy of the truncated cell problem and the solver result."""
    mesh = cell_mesh(problem)
    m = problem.m
    outer = mesh.boundary_vertex_indices("outer")
    didx = np.asarray(outer, dtype=int)
    dvals = np.broadcast_to(problem.datum, (len(didx), m)).copy()
    constraint = problem.constraint or PointTarget(np.zeros(m))
    pinned = _pinned_vertices(problem, mesh)
    groups = [HardConstraintGroup(pinned, np.zeros(2), constraint)]
    fn = DiscreteFunctional(mesh, p_norm(problem.p), m, didx, dvals, hard=groups)
    u0 = np.broadcast_to(problem.datum, (mesh.n_vertices(), m)).copy()
    res = solve(fn, options, u0)
    return res.energy, res


def extrapolate(ladder, values, noise: float = 1e-10) -> CapacityEstimate:
    """Fit phi_R = phi_inf + a R^(-beta) through the last three ladder points.

    The consecutive differences must be monotone decreasing in magnitude and
    of one sign; otherwise DataError.  Near-constant ladders (differences
    under the noise floor, relative to the mean) short-circuit to the mean
    of the last two values with beta = None.
    """
    ladder = np.asarray(ladder, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(ladder) != len(values) or len(values) < 2:
        raise InvalidArgumentError("need matching ladders with at least 2 entries")
    if np.any(np.diff(ladder) <= 0):
        raise InvalidArgumentError("ladder must be strictly increasing")

    diffs = np.diff(values)
    scale = max(1.0, abs(float(values.mean())))
    if np.max(np.abs(diffs)) <= noise * scale:
        val = float(values[-2:].mean())
        return CapacityEstimate(val, None, ladder, values,
                                abs(val - float(values[-1])))
    if len(values) == 2:
        return CapacityEstimate(float(values[-1]), None, ladder, values,
                                abs(float(diffs[-1])))

    r1, r2, r3 = ladder[-3:]
    v1, v2, v3 = values[-3:]
    d1, d2 = v2 - v1, v3 - v2
    if d1 * d2 <= 0 or abs(d2) >= abs(d1):
        raise DataError("ladder values are not monotone with decaying differences; "
                        "refine the meshes or extend the ladder")
    # with a geometric ladder the difference ratio identifies beta
    rho = (r3 / r2) if abs(r3 / r2 - r2 / r1) < 1e-9 else None
    if rho is not None:
        beta = -math.log(abs(d2 / d1)) / math.log(rho)
    else:
        beta = -math.log(abs(d2 / d1)) / math.log((r3 - r2) / (r2 - r1) * r3 / r2)
    a = d2 / (r3 ** -beta - r2 ** -beta)
    phi = v3 - a * r3 ** -beta
    return CapacityEstimate(float(phi), float(beta), ladder, values,
                            abs(float(phi - v3)))


def run_r_ladder(base: CellProblem, R_values=(8.0, 16.0, 32.0),
                 noise: float = 1e-10,
                 options: SolveOptions | None = None) -> CapacityEstimate:
    """Solve the cell problem along a truncation ladder and extrapolate."""
    vals = []
    for R in R_values:
        prob = CellProblem(base.geometry, base.pin, float(R), base.p, base.datum,
                           base.constraint, base.n_theta, base.ring_ratio,
                           base.tip_rings)
        phi, _ = solve_cell(prob, options)
        vals.append(phi)
    return extrapolate(np.asarray(R_values, float), np.array(vals), noise)


def disk_capacity(p: float, r: float, datum=(1.0,),
                  R_values=(8.0, 16.0, 32.0), n_theta: int = 64,
                  constraint: ConstraintSet | None = None) -> CapacityEstimate:
    """phi for a disk pin of radius r in the full plane."""
    base = CellProblem("full_ball", ("disk", r), float(R_values[0]), p,
                       np.asarray(datum, float), constraint, n_theta=n_theta)
    return run_r_ladder(base, R_values)


def boundary_segment_capacity(p: float = 1.5, datum=(1.0,),
                              R_values=(8.0, 16.0, 32.0),
                              n_theta: int = 96,
                              tip_rings: int = 12) -> CapacityEstimate:
    """phi-bar for a unit boundary segment pinned to {0} on a flat boundary."""
    base = CellProblem("half_ball", ("segment", 1.0), float(R_values[0]), p,
                       np.asarray(datum, float), None, n_theta=n_theta,
                       tip_rings=tip_rings)
    return run_r_ladder(base, R_values)


def half_space_factor(p: float, r: float = 1.0, datum=(1.0,),
                      R_values=(8.0, 16.0, 32.0), n_theta: int = 64) -> float:
    """Ratio of the half-ball to full-ball capacity for the same disk pin.

    For reflection-symmetric convex densities the ratio is exactly 1/2.
    """
    full = disk_capacity(p, r, datum, R_values, n_theta)
    half = CellProblem("half_ball", ("half_disk", r), float(R_values[0]), p,
                       np.asarray(datum, float), n_theta=n_theta)
    half_est = run_r_ladder(half, R_values)
    return half_est.value / full.value


def critical_case_density(kappa: float, datum=(1.0,),
                          T_values=(16.0, 64.0, 256.0),
                          n_theta: int = 64,
                          constraint: ConstraintSet | None = None,
                          noise: float = 1e-3) -> CapacityEstimate:
    """Borderline p = d = 2 density for exponentially small pins.

    Solves the quadratic annulus problems m_T on 1 <= rho <= T and
    extrapolates log T * m_T over the ladder variable log T; the returned
    value is already divided by kappa.
    """
    if kappa <= 0:
        raise InvalidArgumentError("kappa must be positive")
    logs, vals = [], []
    for T in T_values:
        prob = CellProblem("full_ball", ("disk", 1.0), float(T), 2.0,
                           np.asarray(datum, float), constraint, n_theta=n_theta,
                           ring_ratio=1.25)
        mT, _ = solve_cell(prob)
        logs.append(math.log(T))
        vals.append(math.log(T) * mT)
    est = extrapolate(np.array(logs), np.array(vals), noise)
    return CapacityEstimate(est.value / kappa, est.beta, est.ladder, est.raw,
                            est.error_estimate / kappa)


def mirror_energy_identity(p: float, r: float = 1.0, R: float = 8.0,
                           n_theta: int = 64) -> tuple[float, float]:
    """Energies (2 * half-ball, full reflected ball) of the mirrored field.

    Solves the half-ball problem, reflects the minimizer across the flat
    face, and evaluates the full-ball energy of the reflected field.  For a
    reflection-invariant density the two numbers agree to roundoff.
    """
    prob = CellProblem("half_ball", ("half_disk", r), R, p, np.array([1.0]),
                       n_theta=n_theta)
    mesh = cell_mesh(prob)
    phi_half, res = solve_cell(prob)
    full = reflect_half_mesh(mesh)
    u_full = np.empty((full.n_vertices(), 1))
    u_full[:mesh.n_vertices()] = res.u.values
    # mirrored vertices append in the order of the originals off the face
    v = mesh.vertices
    off_face = np.abs(v[:, 1]) >= 1e-9 * max(1.0, np.abs(v).max())
    u_full[mesh.n_vertices():] = res.u.values[off_face]
    fn = DiscreteFunctional(full, p_norm(p), 1,
                            dirichlet_idx=full.boundary_vertex_indices(),
                            dirichlet_values=u_full[full.boundary_vertex_indices()])
    return 2.0 * phi_half, fn.energy(u_full)


def write_ladder_csv(path, estimate: CapacityEstimate) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["R", "phi_R", "fitted_beta", "phi_inf", "err"])
        for row in estimate.rows():
            w.writerow([f"{x:.17g}" for x in row])
