"""Piecewise-affine discretization and constrained energy minimization.

The discrete energy is the one-point-rule quadrature of the bulk density
plus midpoint-rule penalty integrals on cells, boundary edges, or interior
curve edges.  Minimization uses limited-memory quasi-Newton with an Armijo
backtracking line search; Dirichlet values are eliminated, hard constraints
are enforced by closed-form projection after every trial step, and the
convergence test uses the tangent-projected gradient.  A factorized linear
stiffness matrix serves as the initial inverse-Hessian approximation, which
keeps iteration counts roughly mesh-independent.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .constraints import ConstraintSet, PenaltyDensity
from .errors import (ConvergenceError, IllPosedError, InadmissibleStateError,
                     InvalidArgumentError)
from .materials import EnergyModel, density_value_and_grad, density as density_eval
from .mesh import Mesh

log = logging.getLogger("pinhomog")


@dataclass
class DisplacementField:
    mesh: Mesh
    values: np.ndarray  # (n_vertices, m)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.values) != self.mesh.n_vertices():
            raise InvalidArgumentError("one value per mesh vertex required")
        if not np.all(np.isfinite(self.values)):
            raise InvalidArgumentError("field values must be finite")

    @property
    def m(self) -> int:
        return self.values.shape[1]


@dataclass
class HardConstraintGroup:
    """All vertices of one perforation element, sharing site and F."""

    vertex_idx: np.ndarray
    site: np.ndarray
    constraint: ConstraintSet


@dataclass
class PenaltyTerm:
    """Quadrature of a penalty density over cells, edges, or curve edges."""

    points: np.ndarray       # (q, 2) quadrature positions x
    weights: np.ndarray      # (q,) measure * density weight rho
    vertex_idx: np.ndarray   # (q, k) dofs entering the interpolated value
    vertex_w: np.ndarray     # (q, k) interpolation weights
    density: PenaltyDensity


@dataclass
class SolveOptions:
    grad_tol: float = 1e-8
    max_iter: int = 3000
    memory: int = 20
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60
    use_preconditioner: bool = True
    precond_refresh: int = 25
    record_trace: bool = True
    stall_limit: int = 30

    def __post_init__(self):
        if self.grad_tol <= 0:
            raise InvalidArgumentError("gradient tolerance must be positive")


@dataclass
class SolveResult:
    u: DisplacementField
    energy: float
    iterations: int
    grad_norm: float
    converged: bool
    trace: list = field(default_factory=list)  # rows (iter, energy, gnorm, step)


class DiscreteFunctional:
    """Energy model + Dirichlet data + hard constraints + penalty terms."""

    def __init__(self, mesh: Mesh, model: EnergyModel, m: int,
                 dirichlet_idx: np.ndarray | None = None,
                 dirichlet_values: np.ndarray | None = None,
                 hard: Sequence[HardConstraintGroup] = (),
                 penalties: Sequence[PenaltyTerm] = (),
                 grad_offset: np.ndarray | None = None):
        self.mesh = mesh
        self.model = model
        self.m = m
        self.dirichlet_idx = (np.zeros(0, dtype=int) if dirichlet_idx is None
                              else np.asarray(dirichlet_idx, dtype=int))
        self.dirichlet_values = (np.zeros((0, m)) if dirichlet_values is None
                                 else np.asarray(dirichlet_values, dtype=float))
        if len(self.dirichlet_idx) != len(self.dirichlet_values):
            raise InvalidArgumentError("Dirichlet index/value length mismatch")
        dset = set(self.dirichlet_idx.tolist())
        self.hard = []
        for grp in hard:
            keep = np.array([v for v in np.asarray(grp.vertex_idx, dtype=int)
                             if v not in dset], dtype=int)
            if len(keep):
                self.hard.append(HardConstraintGroup(keep, np.asarray(grp.site, float),
                                                     grp.constraint))
        self.penalties = list(penalties)
        self.grad_offset = grad_offset
        self._splu = None

    # -- assembly --------------------------------------------------------

    def _grad_field(self, u: np.ndarray) -> np.ndarray:
        tris = self.mesh.triangles
        gN = self.mesh.hat_gradients()
        G = np.einsum("tkm,tkd->tmd", u[tris], gN)
        if self.grad_offset is not None:
            G = G + self.grad_offset
        return G

    def energy(self, u: np.ndarray) -> float:
        areas = self.mesh.areas()
        E = float(areas @ np.atleast_1d(density_eval(self.model, self._grad_field(u))))
        for term in self.penalties:
            z = np.einsum("qk,qkm->qm", term.vertex_w, u[term.vertex_idx])
            val, _ = term.density.value_and_grad(term.points, z)
            E += float(term.weights @ val)
        return E

    def assemble(self, u: np.ndarray) -> tuple[float, np.ndarray]:
        """Discrete energy and its exact gradient (Dirichlet rows zeroed)."""
        mesh, tris = self.mesh, self.mesh.triangles
        areas, gN = mesh.areas(), mesh.hat_gradients()
        G = self._grad_field(u)
        val, dsig = density_value_and_grad(self.model, G)
        E = float(areas @ np.atleast_1d(val))
        S = areas[:, None, None] * dsig
        grad = np.zeros_like(u)
        for k in range(3):
            np.add.at(grad, tris[:, k], np.einsum("tmd,td->tm", S, gN[:, k, :]))
        for term in self.penalties:
            z = np.einsum("qk,qkm->qm", term.vertex_w, u[term.vertex_idx])
            pval, pgrad = term.density.value_and_grad(term.points, z)
            E += float(term.weights @ pval)
            wp = term.weights[:, None] * pgrad
            for k in range(term.vertex_idx.shape[1]):
                np.add.at(grad, term.vertex_idx[:, k], term.vertex_w[:, k][:, None] * wp)
        grad[self.dirichlet_idx] = 0.0
        return E, grad

    # -- constraints -----------------------------------------------------

    def apply_constraints(self, u: np.ndarray) -> np.ndarray:
        out = u.copy()
        out[self.dirichlet_idx] = self.dirichlet_values
        for grp in self.hard:
            sites = np.broadcast_to(grp.site, (len(grp.vertex_idx), len(grp.site)))
            out[grp.vertex_idx] = grp.constraint._project(sites, out[grp.vertex_idx])
        return out

    def project_gradient(self, u: np.ndarray, g: np.ndarray) -> np.ndarray:
        pg = g.copy()
        pg[self.dirichlet_idx] = 0.0
        for grp in self.hard:
            sites = np.broadcast_to(grp.site, (len(grp.vertex_idx), len(grp.site)))
            pg[grp.vertex_idx] = grp.constraint._tangent(sites, u[grp.vertex_idx],
                                                         pg[grp.vertex_idx])
        return pg

    def constraint_residual(self, u: np.ndarray) -> float:
        worst = 0.0
        for grp in self.hard:
            sites = np.broadcast_to(grp.site, (len(grp.vertex_idx), len(grp.site)))
            worst = max(worst, float(grp.constraint._dist(sites, u[grp.vertex_idx]).max()))
        return worst

    # -- preconditioner --------------------------------------------------

    def build_preconditioner(self, u: np.ndarray | None = None) -> None:
        """Factorize the linearized stiffness at u (unit weights if None).

        The weight per triangle is the isotropic part of the energy Hessian,
        p(|G|^2 + eta^2)^{(p-2)/2} for the p_norm model, so the factorization
        tracks the degenerate/singular curvature of p != 2 problems.
        """
        mesh = self.mesh
        tris, areas, gN = mesh.triangles, mesh.areas(), mesh.hat_gradients()
        n = mesh.n_vertices()
        if u is None or self.model.kind != "p_norm":
            w = np.ones(len(tris))
            if self.model.kind == "neo_hookean":
                w *= self.model.mu
        else:
            G = self._grad_field(u)
            n2 = np.sum(G * G, axis=(-2, -1))
            p, e = self.model.p, self.model.eta
            w = p * (n2 + e * e) ** (0.5 * p - 1.0)
        rows, cols, vals = [], [], []
        wa = areas * w
        for a in range(3):
            for b in range(3):
                rows.append(tris[:, a])
                cols.append(tris[:, b])
                vals.append(wa * np.einsum("td,td->t", gN[:, a, :], gN[:, b, :]))
        K = sp.coo_matrix((np.concatenate(vals),
                           (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n)).tocsr()
        # diagonal estimate of the penalty curvature; without it the
        # near-rigid modes of Dirichlet-free problems are misscaled
        if self.penalties:
            diag = np.zeros(n)
            for term in self.penalties:
                dens = term.density
                if u is None:
                    curv = np.full(len(term.points), dens.c * dens.p)
                else:
                    z = np.einsum("qk,qkm->qm", term.vertex_w, u[term.vertex_idx])
                    gd = dens.constraint._dist(*dens.constraint._broadcast(term.points, z))
                    curv = dens.c * dens.p * (gd * gd + dens.eta ** 2) ** (0.5 * dens.p - 1.0)
                wq = term.weights * curv
                for k in range(term.vertex_idx.shape[1]):
                    np.add.at(diag, term.vertex_idx[:, k], wq * term.vertex_w[:, k] ** 2)
            K = K + sp.diags(diag)
        # hard-constrained vertices are treated like Dirichlet rows: the
        # preconditioned direction then never drags the pins along, so it
        # survives the feasibility projection in the line search
        free = np.ones(n)
        free[self.dirichlet_idx] = 0.0
        for grp in self.hard:
            free[grp.vertex_idx] = 0.0
        P = sp.diags(free)
        fixed = sp.diags(1.0 - free)
        K = P @ K @ P + fixed
        # small mass shift keeps the matrix definite as a last resort
        if len(self.dirichlet_idx) == 0 and not self.penalties and not self.hard:
            K = K + 1e-8 * sp.eye(n)
        self._splu = spla.splu(K.tocsc())

    def apply_h0(self, g: np.ndarray) -> np.ndarray:
        if self._splu is None:
            self.build_preconditioner()
        lu = self._splu
        out = np.empty_like(g)
        for j in range(g.shape[1]):
            out[:, j] = lu.solve(g[:, j])
        return out


def solve(functional: DiscreteFunctional, options: SolveOptions | None = None,
          u0: np.ndarray | None = None) -> SolveResult:
    """Minimize the discrete functional; see module docstring for the method.

    Raises ConvergenceError at the iteration cap (carrying the last iterate)
    and IllPosedError if the energy falls below -1e12.
    """
    opts = options or SolveOptions()
    fn = functional
    n, m = fn.mesh.n_vertices(), fn.m
    if len(fn.dirichlet_idx) == 0 and not fn.hard and not fn.penalties:
        raise IllPosedError("functional has no Dirichlet data, constraints, or penalties")

    u = np.zeros((n, m)) if u0 is None else np.array(u0, dtype=float)
    u = fn.apply_constraints(u)
    E, g = fn.assemble(u)
    pg = fn.project_gradient(u, g)

    S: list[np.ndarray] = []
    Y: list[np.ndarray] = []
    trace: list[tuple] = []
    step = 0.0
    stall = 0
    polish = False
    use_pc = opts.use_preconditioner

    def two_loop(q):
        alphas = []
        q = q.copy()
        for s, y in reversed(list(zip(S, Y))):
            rho = 1.0 / float(np.sum(s * y))
            a = rho * float(np.sum(s * q))
            q -= a * y
            alphas.append((a, rho))
        if use_pc:
            q = fn.apply_h0(q)
        elif S:
            s, y = S[-1], Y[-1]
            q *= float(np.sum(s * y)) / float(np.sum(y * y))
        for (a, rho), (s, y) in zip(reversed(alphas), zip(S, Y)):
            b = rho * float(np.sum(y * q))
            q += (a - b) * s
        return q

    it = 0
    for it in range(opts.max_iter):
        gnorm = float(np.linalg.norm(pg))
        if opts.record_trace:
            trace.append((it, E, gnorm, step))
        if gnorm <= opts.grad_tol:
            return SolveResult(DisplacementField(fn.mesh, u), E, it, gnorm, True, trace)
        if E < -1e12:
            raise IllPosedError("energy unbounded below (fell under -1e12)")

        if use_pc and it > 0 and it % opts.precond_refresh == 0:
            fn.build_preconditioner(u)
        # tangent-project the direction at active hard constraints so the
        # directional derivative matches the projected line-search path
        d = -fn.project_gradient(u, two_loop(pg))
        gd = float(np.sum(pg * d))
        if gd >= 0.0:
            S.clear()
            Y.clear()
            d = -fn.project_gradient(u, fn.apply_h0(pg) if use_pc else pg)
            gd = float(np.sum(pg * d))
        if gd >= 0.0:
            d = -pg
            gd = float(np.sum(pg * d))

        # Armijo backtracking; once energy differences fall into roundoff
        # (the noise floor below) the iteration switches permanently to a
        # polish phase that accepts steps only when they reduce the projected
        # gradient norm, which stays accurate to ~1e-15 long after energy
        # comparisons have lost meaning.
        t = 1.0
        accepted = False
        noise = 1e-13 * (1.0 + abs(E))
        if -gd <= 1e3 * noise:
            polish = True
        u_try, E_try = u, E
        assembled = None
        best = None  # (gn_cand, t, cand, E_cand, g_cand, pg_cand)
        polish_evals = 0
        for _ in range(opts.max_backtracks):
            cand = fn.apply_constraints(u + t * d)
            try:
                E_cand = fn.energy(cand)
            except InadmissibleStateError:
                t *= opts.backtrack
                continue
            if not polish and E_cand < E and E_cand <= E + opts.armijo * t * gd:
                u_try, E_try, accepted = cand, E_cand, True
                break
            if polish and polish_evals >= 12:
                break
            if polish and E_cand <= E + noise:
                polish_evals += 1
                E_cand, g_cand = fn.assemble(cand)
                pg_cand = fn.project_gradient(cand, g_cand)
                gn_cand = float(np.linalg.norm(pg_cand))
                if best is None or gn_cand < best[0]:
                    best = (gn_cand, t, cand, E_cand, g_cand, pg_cand)
                if gn_cand <= 0.99 * gnorm:
                    u_try, E_try, accepted = cand, E_cand, True
                    assembled = (E_cand, g_cand, pg_cand)
                    break
            t *= opts.backtrack
        if not accepted and best is not None and best[0] < gnorm:
            _, t, u_try, E_try, g_cand, pg_cand = best
            assembled = (E_try, g_cand, pg_cand)
            accepted = True
        if not accepted and S:
            # a corrupted curvature memory (active-set changes make the
            # projected gradient discontinuous) can poison the direction;
            # restart from steepest descent before declaring failure
            S.clear()
            Y.clear()
            if use_pc:
                fn.build_preconditioner(u)
            continue
        if not accepted:
            # stagnation: in the polish phase energy differences sit at the
            # roundoff floor and the projected gradient cannot be pushed
            # lower in double precision, so the iterate is a numerical
            # minimizer; outside it the line search genuinely failed
            if polish or gnorm <= 100 * opts.grad_tol:
                return SolveResult(DisplacementField(fn.mesh, u), E, it, gnorm, True, trace)
            raise ConvergenceError(
                f"line search failed at iteration {it} (|pg|={gnorm:.3e})",
                last_iterate=u, grad_norm=gnorm, energy=E)

        assert E_try <= E + 1e-12 * (1.0 + abs(E)), "line search accepted an ascent step"
        step = t
        if assembled is not None:
            E_new, g_new, pg_new = assembled
        else:
            E_new, g_new = fn.assemble(u_try)
            pg_new = fn.project_gradient(u_try, g_new)
        s = (u_try - u).ravel()
        y = (pg_new - pg).ravel()
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s.reshape(u.shape))
            Y.append(y.reshape(u.shape))
            if len(S) > opts.memory:
                S.pop(0)
                Y.pop(0)
        # consecutive accepted steps whose decrease sits at the roundoff
        # floor mean the energy is converged; the projected gradient of a
        # curved hard constraint can then decay arbitrarily slowly, so stop
        stall = stall + 1 if E - E_new <= noise else 0
        u, E, g, pg = u_try, E_new, g_new, pg_new
        if stall >= opts.stall_limit:
            gnorm = float(np.linalg.norm(pg))
            return SolveResult(DisplacementField(fn.mesh, u), E, it + 1, gnorm,
                               True, trace)

    gnorm = float(np.linalg.norm(pg))
    raise ConvergenceError(
        f"no convergence in {opts.max_iter} iterations (|pg|={gnorm:.3e})",
        last_iterate=u, grad_norm=gnorm, energy=E, trace=trace)


# ---------------------------------------------------------------------------
# functional construction helpers


def dirichlet_from_tags(mesh: Mesh, m: int,
                        values_by_tag: dict[str, Callable | np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Vertex indices and values for Dirichlet data given per boundary tag.

    Values may be constant vectors or callables x -> vector.
    """
    idx: list[int] = []
    vals: list[np.ndarray] = []
    seen = set()
    for tag, value in values_by_tag.items():
        for v in mesh.boundary_vertex_indices(tag):
            if v in seen:
                continue
            seen.add(int(v))
            x = mesh.vertices[v]
            val = value(x) if callable(value) else value
            idx.append(int(v))
            vals.append(np.asarray(val, dtype=float))
    if not idx:
        return np.zeros(0, dtype=int), np.zeros((0, m))
    return np.array(idx, dtype=int), np.array(vals)


def boundary_penalty_term(mesh: Mesh, tags: Sequence[str], density: PenaltyDensity,
                          rho: Callable[[np.ndarray], np.ndarray] | float = 1.0) -> PenaltyTerm:
    mask = np.isin(mesh.boundary_tags, list(tags))
    edges = mesh.boundary_edges[mask]
    return _edge_term(mesh, edges, density, rho)


def edge_penalty_term(mesh: Mesh, edges: np.ndarray, density: PenaltyDensity,
                      rho: Callable[[np.ndarray], np.ndarray] | float = 1.0) -> PenaltyTerm:
    return _edge_term(mesh, np.asarray(edges, dtype=int), density, rho)


def _edge_term(mesh, edges, density, rho) -> PenaltyTerm:
    if len(edges) == 0:
        raise InvalidArgumentError("penalty term over an empty edge set")
    a, b = mesh.vertices[edges[:, 0]], mesh.vertices[edges[:, 1]]
    mids = 0.5 * (a + b)
    lengths = np.hypot(*(b - a).T)
    w = rho(mids) if callable(rho) else np.full(len(mids), float(rho))
    return PenaltyTerm(mids, lengths * w, edges,
                       np.full((len(edges), 2), 0.5), density)


def cell_penalty_term(mesh: Mesh, density: PenaltyDensity,
                      rho: Callable[[np.ndarray], np.ndarray] | float = 1.0) -> PenaltyTerm:
    mids = mesh.barycenters()
    w = rho(mids) if callable(rho) else np.full(len(mids), float(rho))
    return PenaltyTerm(mids, mesh.areas() * w, mesh.triangles,
                       np.full((len(mesh.triangles), 3), 1.0 / 3.0), density)


def edges_on_vertical_line(mesh: Mesh, x1: float, lo: float, hi: float,
                           tol: float = 1e-9) -> np.ndarray:
    """Mesh edges lying on the segment {x1} x (lo, hi)."""
    v = mesh.vertices
    on = (np.abs(v[:, 0] - x1) < tol) & (v[:, 1] > lo - tol) & (v[:, 1] < hi + tol)
    all_edges = mesh.edges()
    keep = on[all_edges[:, 0]] & on[all_edges[:, 1]]
    return all_edges[keep]


# ---------------------------------------------------------------------------
# perforated solves


def hard_groups_from_layout(mesh: Mesh, layout,
                            dirichlet_idx: np.ndarray | None = None,
                            drop_margin: float | None = None) -> list[HardConstraintGroup]:
    """Assign every mesh vertex inside a perforation element to that
    element's constraint at the element's site.

    Elements whose site lies within drop_margin (default: the lattice
    period) of a Dirichlet vertex are dropped, mirroring how boundary data
    incompatible with the constraint is handled; the count is logged.  An
    element too small to contain any vertex falls back to its single
    nearest vertex (point pinning; relevant for exponentially small sizes).
    """
    groups: list[HardConstraintGroup] = []
    margin = layout.epsilon if drop_margin is None else drop_margin
    dverts = (mesh.vertices[dirichlet_idx]
              if dirichlet_idx is not None and len(dirichlet_idx) else None)
    dropped = 0
    for el in layout.elements:
        if dverts is not None:
            if float(np.min(np.hypot(dverts[:, 0] - el.site[0],
                                     dverts[:, 1] - el.site[1]))) < margin - 1e-12:
                dropped += 1
                continue
        inside = np.nonzero(el.contains(mesh.vertices, tol=1e-9))[0]
        if el.kind == "boundary_segment":
            bverts = set(np.unique(mesh.boundary_edges).tolist())
            inside = np.array([i for i in inside if i in bverts], dtype=int)
        if len(inside) == 0:
            d = np.hypot(mesh.vertices[:, 0] - el.site[0], mesh.vertices[:, 1] - el.site[1])
            inside = np.array([int(np.argmin(d))])
        groups.append(HardConstraintGroup(inside, el.site, el.constraint))
    if dropped:
        log.info("dropped %d perforation elements within %g of Dirichlet data",
                 dropped, margin)
    return groups


def solve_perforated(mesh: Mesh, layout, model: EnergyModel, m: int,
                     dirichlet: tuple[np.ndarray, np.ndarray],
                     options: SolveOptions | None = None,
                     u0: np.ndarray | None = None,
                     grad_offset: np.ndarray | None = None) -> SolveResult:
    """Minimize with the constraint enforced pointwise on the perforation."""
    didx, dvals = dirichlet
    groups = hard_groups_from_layout(mesh, layout, didx)
    fn = DiscreteFunctional(mesh, model, m, didx, dvals, hard=groups,
                            grad_offset=grad_offset)
    return solve(fn, options, u0)
