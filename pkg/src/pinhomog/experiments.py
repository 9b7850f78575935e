"""The catalog of boundary-value problems and their epsilon-ladders.

Six experiments on the unit square (0, ell)^2:

  bvp1  left edge clamped, right edge pinned to the vertical line x1 = x1c
  bvp2  all four edges pinned to a circle, no Dirichlet data
  bvp3  top/bottom clamped, disks along three interior vertical curves pinned
        to a cylinder in (z1, z2, z3) space
  bvp4  left edge clamped, right edge unilaterally constrained to a half plane
  bulk_pin   interior lattice of point pins toward a smooth target field
  neo_hookean  bvp1 geometry with a compressible neo-Hookean energy and
        exponentially small pins (borderline p = d = 2 scaling); exploratory

Each experiment pairs a ladder of perforated problems (hard constraints on
small regions) with one penalized limit problem, and the ladder report
tracks the energy gap and the L2 distance outside the pinned neighborhoods.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import io as pio
from .capacity import boundary_segment_capacity, critical_case_density
from .constraints import (Circle, ConstraintSet, Cylinder, HalfPlane,
                          PenaltyDensity, PointTarget, VerticalLine)
from .errors import (ConfigError, ConvergenceError, InvalidArgumentError,
                     PinhomogError)
from .layout import (PerforationLayout, boundary_perforation, bulk_perforation,
                     interior_perforation_on_curve, power_exponent)
from .materials import EnergyModel, neo_hookean, p_norm
from .mesh import (Mesh, SegmentRegion, build_square_mesh,
                   conforming_refine_to_layout)
from .minimize import (DiscreteFunctional, SolveOptions, SolveResult,
                       boundary_penalty_term, cell_penalty_term,
                       dirichlet_from_tags, edge_penalty_term,
                       edges_on_vertical_line, hard_groups_from_layout, solve)

EXPERIMENTS = ("bvp1", "bvp2", "bvp3", "bvp4", "bulk_pin", "neo_hookean")

SEGMENT_CAPACITY_P32 = 1.602  # unit boundary segment, p = 3/2

_DELTA_FLOOR = 1e-6  # smallest pin size the mesh refiner will resolve


@dataclass
class ExperimentConfig:
    experiment: str
    p: float
    ell: float = 1.0
    h: float = 1.0 / 32
    eps_values: tuple = (0.5, 0.25, 0.125, 0.0625)
    x1c: float | None = None
    x2c: float | None = None
    radius: float | None = None
    x2a: float | None = None
    kappa: float | None = None
    mu: float = 1.0
    lam: float = 1.0
    capacity_source: str = "literal"   # analytic | computed | literal
    capacity_value: float | None = None
    step_sharpness: float = 1e4
    u3_seed: float = 1e-3
    amplitude: float = 0.05            # bulk_pin target magnitude
    grad_tol: float = 1e-8
    max_iter: int = 3000
    resolve_factor: float = 6.0
    max_vertices: int = 600_000
    out_dir: str = "."

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        eps = tuple(float(e) for e in self.eps_values)
        if len(eps) == 0 or any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("eps_values must be a strictly decreasing ladder")
        object.__setattr__(self, "eps_values", eps)
        need = {"bvp1": ("x1c",), "bvp2": ("x1c", "x2c", "radius"),
                "bvp3": ("x2a", "radius"), "bvp4": (),
                "bulk_pin": (), "neo_hookean": ("x1c", "kappa")}
        for key in need[self.experiment]:
            if getattr(self, key) is None:
                raise ConfigError(f"experiment {self.experiment} requires key {key}")
        if self.capacity_source not in ("analytic", "computed", "literal"):
            raise ConfigError(f"unknown capacity_source {self.capacity_source!r}")
        if self.capacity_source == "literal" and self.capacity_value is None:
            raise ConfigError("capacity_source=literal requires capacity_value")
        if not 0 < self.p:
            raise ConfigError("p must be positive")

    @property
    def m(self) -> int:
        return 3 if self.experiment == "bvp3" else 2

    def solver_options(self) -> SolveOptions:
        return SolveOptions(grad_tol=self.grad_tol, max_iter=self.max_iter)


def default_config(name: str, **overrides) -> ExperimentConfig:
    """Paper-default parameter sets for each experiment."""
    base = {
        "bvp1": dict(p=1.5, x1c=1.2, capacity_value=SEGMENT_CAPACITY_P32),
        "bvp2": dict(p=1.5, x1c=0.5, x2c=0.5, radius=1.0,
                     capacity_value=SEGMENT_CAPACITY_P32),
        "bvp3": dict(p=4.0 / 3.0, h=1.0 / 20,
                     eps_values=(0.2, 0.1, 1.0 / 15, 0.05),
                     x2a=0.5, radius=0.5, capacity_source="analytic"),
        "bvp4": dict(p=1.5, capacity_value=SEGMENT_CAPACITY_P32),
        "bulk_pin": dict(p=1.5, eps_values=(0.5, 1.0 / 3, 0.25),
                         capacity_source="analytic"),
        "neo_hookean": dict(p=2.0, eps_values=(0.25, 1.0 / 6, 0.125),
                            x1c=1.2, kappa=1.9, capacity_source="analytic"),
    }
    if name not in base:
        raise ConfigError(f"unknown experiment {name!r}")
    kw = dict(base[name])
    kw.update(overrides)
    return ExperimentConfig(experiment=name, **kw)


def interior_ball_constant(p: float) -> float:
    """Analytic phi constant for a unit-diameter disk pin, d = 2."""
    if not 1 < p < 2:
        raise InvalidArgumentError("analytic ball constant needs 1 < p < 2")
    return math.pi * (2.0 * (2.0 - p) / (p - 1.0)) ** (p - 1.0)


class _TargetField(ConstraintSet):
    """Pointwise target F_x = {v(x)}; used by the bulk_pin limit penalty."""

    def __init__(self, v: Callable[[np.ndarray], np.ndarray], m: int = 2):
        self.v = v
        self.m = m

    def _values(self, x):
        return np.array([self.v(row) for row in x])

    def _dist(self, x, z):
        return np.linalg.norm(z - self._values(x), axis=1)

    def _project(self, x, z):
        return self._values(x)

    def _tangent(self, x, z, g):
        return np.zeros_like(g)


@dataclass
class BuiltExperiment:
    config: ExperimentConfig
    base_mesh: Mesh
    limit_functional: DiscreteFunctional
    cases: list  # (eps, delta, mesh, layout)
    capacity_c: float
    penalty_p: float

    def dirichlet(self, mesh: Mesh):
        return _dirichlet(self.config, mesh)


def _dirichlet(config: ExperimentConfig, mesh: Mesh):
    m = config.m
    zero = np.zeros(m)
    tags = {"bvp1": ("left",), "bvp2": (), "bvp3": ("bottom", "top"),
            "bvp4": ("left",), "bulk_pin": ("left", "right", "bottom", "top"),
            "neo_hookean": ("left",)}[config.experiment]
    return dirichlet_from_tags(mesh, m, {t: zero for t in tags})


def _scaling(config: ExperimentConfig):
    """(rule, delta(eps)) for the experiment's critical scaling."""
    p, d = config.p, 2
    if config.experiment == "neo_hookean":
        kappa = config.kappa
        return ("exponential", kappa), lambda e: math.exp(-kappa / e ** 2)
    codim = 0 if config.experiment == "bulk_pin" else 1
    q = power_exponent(d, p, codim)
    return ("power", q), lambda e: e ** q


def capacity_constant(config: ExperimentConfig) -> float:
    src = config.capacity_source
    if src == "literal":
        return float(config.capacity_value)
    if config.experiment in ("bvp3", "bulk_pin"):
        if src == "computed":
            # analytic constant is exact here; "computed" re-derives it from
            # the cell-problem ladder as a cross-check
            from .capacity import disk_capacity
            return disk_capacity(config.p, 0.5).value
        return interior_ball_constant(config.p)
    if config.experiment == "neo_hookean":
        if src == "computed":
            return 0.5 * config.mu * critical_case_density(config.kappa).value
        return 0.5 * config.mu * 2.0 * math.pi / config.kappa
    # boundary-segment experiments (bvp1/2/4)
    if src == "computed":
        return boundary_segment_capacity(config.p).value
    raise ConfigError(f"no analytic capacity for {config.experiment}; use "
                      "capacity_source=computed or literal")


def _bulk_target(config: ExperimentConfig) -> Callable[[np.ndarray], np.ndarray]:
    a = config.amplitude
    return lambda x: a * np.array([math.sin(math.pi * x[0] / config.ell),
                                   math.sin(math.pi * x[1] / config.ell)])


def _constraint_family(config: ExperimentConfig):
    ell = config.ell
    if config.experiment in ("bvp1", "neo_hookean"):
        return lambda site: VerticalLine(config.x1c)
    if config.experiment == "bvp2":
        return lambda site: Circle(np.array([config.x1c, config.x2c]), config.radius)
    if config.experiment == "bvp3":
        return lambda site: Cylinder(config.x2a, config.radius)
    if config.experiment == "bvp4":
        n = np.array([1.0, 1.0]) / math.sqrt(2.0)
        return lambda site: HalfPlane(n, 1.5 * ell / math.sqrt(2.0))
    return lambda site: PointTarget(_bulk_target(config)(site))


def _layout_for(config: ExperimentConfig, mesh: Mesh, eps: float,
                rule, delta: float) -> PerforationLayout:
    fam = _constraint_family(config)
    ell = config.ell
    if config.experiment in ("bvp1", "bvp4", "neo_hookean"):
        return boundary_perforation(mesh, "right", eps, delta, fam, scaling=rule)
    if config.experiment == "bvp2":
        layouts = [boundary_perforation(mesh, tag, eps, delta, fam, scaling=rule)
                   for tag in ("left", "right", "bottom", "top")]
        els = [el for lay in layouts for el in lay.elements]
        return PerforationLayout(els, eps, delta, rule)
    if config.experiment == "bvp3":
        els = []
        for x1 in (ell / 10, ell / 2, 9 * ell / 10):
            lay = interior_perforation_on_curve(
                mesh, lambda t, x1=x1: np.array([x1, t]),
                (ell / 10, 9 * ell / 10), eps, delta, fam, scaling=rule)
            els.extend(lay.elements)
        return PerforationLayout(els, eps, delta, rule)
    return bulk_perforation(mesh, lambda a, b: np.array([a, b]), eps, delta,
                            fam, scaling=rule)


def _limit_functional(config: ExperimentConfig, mesh: Mesh, c: float) -> DiscreteFunctional:
    m, p, ell = config.m, config.p, config.ell
    didx, dvals = _dirichlet(config, mesh)
    model = (neo_hookean(config.mu, config.lam)
             if config.experiment == "neo_hookean" else p_norm(p))
    offset = np.eye(2) if config.experiment == "neo_hookean" else None
    penalty_p = 2.0 if config.experiment == "neo_hookean" else p
    fam = _constraint_family(config)

    if config.experiment in ("bvp1", "neo_hookean"):
        terms = [boundary_penalty_term(mesh, ("right",),
                                       PenaltyDensity(c, penalty_p, fam(None)))]
    elif config.experiment == "bvp2":
        terms = [boundary_penalty_term(mesh, ("left", "right", "bottom", "top"),
                                       PenaltyDensity(c, penalty_p, fam(None)))]
    elif config.experiment == "bvp3":
        terms = []
        for x1 in (ell / 10, ell / 2, 9 * ell / 10):
            edges = edges_on_vertical_line(mesh, x1, ell / 10, 9 * ell / 10)
            terms.append(edge_penalty_term(mesh, edges,
                                           PenaltyDensity(c, penalty_p, fam(None))))
    elif config.experiment == "bvp4":
        # the paper's step acts on the unnormalized combination
        # (3 ell / 2 - z1 - x1 - z2 - x2), which is -sqrt(2) times the signed
        # distance the density sees, so the sharpness carries the sqrt(2)
        density = PenaltyDensity(c, penalty_p, fam(None),
                                 step_sharpness=config.step_sharpness * math.sqrt(2.0))
        terms = [boundary_penalty_term(mesh, ("right",), density)]
    else:  # bulk_pin
        target = _TargetField(_bulk_target(config), m)
        terms = [cell_penalty_term(mesh, PenaltyDensity(c, penalty_p, target))]

    return DiscreteFunctional(mesh, model, m, didx, dvals, penalties=terms,
                              grad_offset=offset)


def _refinement_zones(config: ExperimentConfig):
    """Graded zones for the base mesh.

    The bvp3 limit field kinks along the three interior penalty curves, so
    the mesh is graded there; otherwise the limit energy carries a
    resolution error larger than the small-eps ladder gaps.
    """
    if config.experiment != "bvp3":
        return ()
    ell = config.ell
    return [(SegmentRegion(x1, ell / 10, x1, 9 * ell / 10), config.h / 4)
            for x1 in (ell / 10, ell / 2, 9 * ell / 10)]


def build_experiment(config: ExperimentConfig) -> BuiltExperiment:
    """Base mesh, limit functional, and one refined (mesh, layout) per eps.

    For power scalings, a pin size below the resolvable floor raises
    ConfigError (use a larger eps or coarser ladder).  Exponentially small
    pins are never resolvable and deliberately fall back to single-vertex
    pinning on the base mesh.
    """
    rule, delta_of = _scaling(config)
    mesh = build_square_mesh(config.ell, config.h, _refinement_zones(config),
                             max_vertices=config.max_vertices)
    c = capacity_constant(config)
    penalty_p = 2.0 if config.experiment == "neo_hookean" else config.p

    cases = []
    for eps in config.eps_values:
        delta = delta_of(eps)
        if rule[0] == "power" and delta < _DELTA_FLOOR * config.ell:
            raise ConfigError(
                f"delta = {delta:.3g} at eps = {eps:g} is below the mesh floor; "
                "use a larger eps or a coarser ladder")
        layout = _layout_for(config, mesh, eps, rule, delta)
        if rule[0] == "power":
            fine = conforming_refine_to_layout(mesh, layout, config.resolve_factor,
                                               config.max_vertices)
        else:
            fine = mesh  # vertex pinning fallback for exponential pins
        cases.append((eps, delta, fine, layout))

    return BuiltExperiment(config, mesh, _limit_functional(config, mesh, c),
                           cases, c, penalty_p)


def _initial_guess(config: ExperimentConfig, mesh: Mesh) -> np.ndarray:
    u0 = np.zeros((mesh.n_vertices(), config.m))
    if config.experiment == "bvp3":
        u0[:, 2] = config.u3_seed
    return u0


def solve_limit(built: BuiltExperiment, options: SolveOptions | None = None) -> SolveResult:
    config = built.config
    u0 = _initial_guess(config, built.base_mesh)
    return solve(built.limit_functional, options or config.solver_options(), u0)


def solve_case(built: BuiltExperiment, index: int,
               options: SolveOptions | None = None,
               u0: np.ndarray | None = None) -> SolveResult:
    """Solve the perforated problem for ladder entry `index`."""
    config = built.config
    eps, delta, mesh, layout = built.cases[index]
    didx, dvals = _dirichlet(config, mesh)
    groups = hard_groups_from_layout(mesh, layout, didx)
    model = (neo_hookean(config.mu, config.lam)
             if config.experiment == "neo_hookean" else p_norm(config.p))
    offset = np.eye(2) if config.experiment == "neo_hookean" else None
    fn = DiscreteFunctional(mesh, model, config.m, didx, dvals, hard=groups,
                            grad_offset=offset)
    if u0 is None:
        u0 = _initial_guess(config, mesh)
    return solve(fn, options or config.solver_options(), u0)


# ---------------------------------------------------------------------------
# error metric and ladder reports


def _interpolate(field, points: np.ndarray) -> np.ndarray:
    """Evaluate a piecewise-affine field at points, per component."""
    import matplotlib.tri as mtri
    mesh = field.mesh
    tri = mtri.Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1],
                             mesh.triangles)
    out = np.empty((len(points), field.m))
    for j in range(field.m):
        interp = mtri.LinearTriInterpolator(tri, field.values[:, j])
        vals = interp(points[:, 0], points[:, 1])
        filled = np.ma.filled(vals, np.nan)
        miss = np.isnan(filled)
        if np.any(miss):
            # roundoff outside the hull: nearest vertex value
            for i in np.nonzero(miss)[0]:
                d = np.hypot(mesh.vertices[:, 0] - points[i, 0],
                             mesh.vertices[:, 1] - points[i, 1])
                filled[i] = field.values[int(np.argmin(d)), j]
        out[:, j] = filled
    return out


def error_metric(u_a, u_b, exclusions=(), margin: float = 0.0) -> float:
    """L2 distance of two fields over the domain minus exclusion regions.

    Regions are any objects with dist(points); triangles whose barycenter
    lies within `margin` of a region are dropped.  The integral runs over
    the finer of the two meshes (one-point rule), interpolating the other
    field there.
    """
    if u_a.m != u_b.m:
        raise InvalidArgumentError("fields have different target dimensions")
    fine, coarse = ((u_a, u_b) if u_a.mesh.n_vertices() >= u_b.mesh.n_vertices()
                    else (u_b, u_a))
    mesh = fine.mesh
    bary = mesh.barycenters()
    keep = np.ones(len(bary), dtype=bool)
    for region in exclusions:
        keep &= region.dist(bary) > margin
    va = fine.values[mesh.triangles].mean(axis=1)
    vb = (va if coarse.mesh is mesh else _interpolate(coarse, bary))
    if coarse.mesh is not mesh:
        diff = va - vb
    else:
        diff = va - coarse.values[mesh.triangles].mean(axis=1)
    sq = np.sum(diff * diff, axis=1)
    return float(math.sqrt(np.sum(mesh.areas()[keep] * sq[keep])))


REPORT_HEADER = ["experiment", "eps", "delta", "energy", "energy_limit_gap",
                 "l2_error", "iters", "seconds", "status"]


@dataclass
class ConvergenceReport:
    config: ExperimentConfig
    capacity_c: float
    rows: list = field(default_factory=list)  # dict rows, limit row last
    partial: bool = False

    def csv_rows(self):
        out = []
        for r in self.rows:
            out.append([r["experiment"], float(r["eps"]), float(r["delta"]),
                        float(r["energy"]), float(r["gap"]), float(r["l2"]),
                        int(r["iters"]), float(r["seconds"]), r["status"]])
        return out

    def write_csv(self, path):
        pio.write_report_csv(path, REPORT_HEADER, self.csv_rows())


def run_ladder(config: ExperimentConfig, out_dir: str | None = None,
               write_fields: bool = False) -> ConvergenceReport:
    """Solve the limit problem and every ladder entry; never raises on a
    failed entry, which is instead flagged in the report."""
    built = build_experiment(config)
    report = ConvergenceReport(config, built.capacity_c)

    t0 = time.perf_counter()
    limit = solve_limit(built)
    t_limit = time.perf_counter() - t0

    prev = None
    for i, (eps, delta, mesh, layout) in enumerate(built.cases):
        t0 = time.perf_counter()
        ref = limit
        u0 = None
        if config.experiment == "neo_hookean":
            u0 = prev  # continuation keeps J > 0 down the ladder
        elif mesh is not built.base_mesh:
            # warm start from the limit solution: the perforated minimizer is
            # a perturbation of it, and the zero guess can sit near a saddle
            # of the non-convex constraint variants
            u0 = _interpolate(limit.u, mesh.vertices)
        try:
            if u0 is not None and mesh is not built.base_mesh:
                # reference: the limit problem discretized on this entry's
                # mesh, so the gap and field comparisons are free of the
                # background discretization error (which differs per entry
                # and can exceed the small-eps gaps themselves)
                ref = solve(_limit_functional(config, mesh, built.capacity_c),
                            config.solver_options(), u0)
            res = solve_case(built, i, u0=u0)
        except (ConvergenceError, PinhomogError) as exc:
            report.partial = True
            report.rows.append(dict(experiment=config.experiment, eps=eps,
                                    delta=delta, energy=math.nan, gap=math.nan,
                                    l2=math.nan, iters=0,
                                    seconds=time.perf_counter() - t0,
                                    status=f"failed: {exc}"))
            continue
        seconds = time.perf_counter() - t0
        err = error_metric(res.u, ref.u, exclusions=layout.elements,
                           margin=2 * delta)
        report.rows.append(dict(experiment=config.experiment, eps=eps,
                                delta=delta, energy=res.energy,
                                gap=abs(res.energy - ref.energy), l2=err,
                                iters=res.iterations, seconds=seconds,
                                status="ok"))
        if write_fields and out_dir is not None:
            _write_field(out_dir, config, f"eps_{i}", res)
        prev = res.u.values
    report.rows.append(dict(experiment=config.experiment, eps=0.0, delta=0.0,
                            energy=limit.energy, gap=0.0, l2=0.0,
                            iters=limit.iterations, seconds=t_limit,
                            status="limit"))
    if write_fields and out_dir is not None:
        _write_field(out_dir, config, "limit", limit)
    if out_dir is not None:
        report.write_csv(f"{out_dir}/{config.experiment}_report.csv")
    return report


def _write_field(out_dir, config, tag, res: SolveResult):
    vals = res.u.values
    data = {"displacement": vals if vals.shape[1] in (2, 3) else vals[:, 0]}
    pio.write_vtk(f"{out_dir}/{config.experiment}_{tag}.vtk", res.u.mesh, data)
