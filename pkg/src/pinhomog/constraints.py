"""Admissible-set family F_x and the relaxed penalty densities.

Each constraint variant is a closed set in displacement space, parameterized
by the material point x of the perforation site.  Variants expose a
Euclidean distance, the closest-point projection, and a tangent projection
used by the constrained minimizer.  Penalty densities are stored in the
normal form c * dist(F_x, z)^p (with a smoothed unit step for the unilateral
variant), regularized near dist = 0 so they stay differentiable for p < 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidArgumentError

PENALTY_ETA = 1e-8


def _atleast_rows(x, dim):
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.shape[1] != dim:
        raise InvalidArgumentError(f"expected vectors of dimension {dim}, got {a.shape}")
    return a


class ConstraintSet:
    """Base class; subclasses implement the vectorized _dist/_project/_tangent."""

    m: int = 2  # target dimension

    def distance(self, x, z):
        """Euclidean distance of displacement z at site x from the admissible set."""
        x1, z1 = self._broadcast(x, z)
        d = self._dist(x1, z1)
        return float(d[0]) if np.asarray(z).ndim == 1 else d

    def project(self, x, z):
        """Closest admissible displacement."""
        x1, z1 = self._broadcast(x, z)
        p = self._project(x1, z1)
        return p[0] if np.asarray(z).ndim == 1 else p

    def tangent_project(self, x, z, g):
        """Project a gradient onto the feasible directions at an admissible z."""
        x1, z1 = self._broadcast(x, z)
        g1 = _atleast_rows(g, self.m)
        t = self._tangent(x1, z1, g1)
        return t[0] if np.asarray(g).ndim == 1 else t

    def _broadcast(self, x, z):
        z1 = _atleast_rows(z, self.m)
        x1 = np.asarray(x, dtype=float)
        if x1.ndim == 1:
            x1 = np.broadcast_to(x1, (len(z1), len(x1)))
        return x1, z1

    # serialization for experiment configs -------------------------------

    def to_record(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_record(rec: dict) -> "ConstraintSet":
        kind = rec["variant"]
        cls = _VARIANTS[kind]
        return cls._from_record(rec)


@dataclass
class PointTarget(ConstraintSet):
    """F_x = {v}: the displacement is prescribed."""

    v: np.ndarray

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float)
        self.m = len(self.v)

    def _dist(self, x, z):
        return np.linalg.norm(z - self.v, axis=1)

    def _project(self, x, z):
        return np.broadcast_to(self.v, z.shape).copy()

    def _tangent(self, x, z, g):
        return np.zeros_like(g)

    def to_record(self):
        return {"variant": "point_target", **{f"v{i+1}": float(c) for i, c in enumerate(self.v)}}

    @classmethod
    def _from_record(cls, rec):
        comps = sorted(k for k in rec if k.startswith("v") and k[1:].isdigit())
        return cls(np.array([rec[k] for k in comps]))


@dataclass
class VerticalLine(ConstraintSet):
    """Deformed first coordinate pinned: z1 + x1 = x1c, z2 free."""

    x1c: float

    def _dist(self, x, z):
        return np.abs(z[:, 0] + x[:, 0] - self.x1c)

    def _project(self, x, z):
        out = z.copy()
        out[:, 0] = self.x1c - x[:, 0]
        return out

    def _tangent(self, x, z, g):
        out = g.copy()
        out[:, 0] = 0.0
        return out

    def to_record(self):
        return {"variant": "vertical_line", "x1c": float(self.x1c)}

    @classmethod
    def _from_record(cls, rec):
        return cls(rec["x1c"])


@dataclass
class Circle(ConstraintSet):
    """Deformed position constrained to a circle of radius R."""

    center: np.ndarray
    radius: float
    degenerate_projection: bool = field(default=False, compare=False)

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if self.radius <= 0:
            raise InvalidArgumentError("circle radius must be positive")

    def _radial(self, x, z):
        w = z + x - self.center
        r = np.hypot(w[:, 0], w[:, 1])
        return w, r

    def _dist(self, x, z):
        _, r = self._radial(x, z)
        return np.abs(r - self.radius)

    def _project(self, x, z):
        w, r = self._radial(x, z)
        deg = r < 1e-14
        if np.any(deg):
            # deformed point at the center: tie broken along the first axis
            self.degenerate_projection = True
            w = w.copy()
            w[deg] = [1.0, 0.0]
            r = np.where(deg, 1.0, r)
        return self.center + w * (self.radius / r)[:, None] - x

    def _tangent(self, x, z, g):
        w, r = self._radial(x, z)
        r = np.maximum(r, 1e-14)
        what = w / r[:, None]
        return g - (np.sum(g * what, axis=1))[:, None] * what

    def to_record(self):
        return {"variant": "circle", "x1c": float(self.center[0]),
                "x2c": float(self.center[1]), "radius": float(self.radius)}

    @classmethod
    def _from_record(cls, rec):
        return cls(np.array([rec["x1c"], rec["x2c"]]), rec["radius"])


@dataclass
class Cylinder(ConstraintSet):
    """m=3 variant: (z2 + x2 - x2a)^2 + z3^2 = R^2, z1 free."""

    x2a: float
    radius: float
    m: int = 3
    degenerate_projection: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.radius <= 0:
            raise InvalidArgumentError("cylinder radius must be positive")

    def _radial(self, x, z):
        w = np.column_stack([z[:, 1] + x[:, 1] - self.x2a, z[:, 2]])
        r = np.hypot(w[:, 0], w[:, 1])
        return w, r

    def _dist(self, x, z):
        _, r = self._radial(x, z)
        return np.abs(r - self.radius)

    def _project(self, x, z):
        w, r = self._radial(x, z)
        deg = r < 1e-14
        if np.any(deg):
            self.degenerate_projection = True
            w = w.copy()
            w[deg] = [1.0, 0.0]
            r = np.where(deg, 1.0, r)
        w = w * (self.radius / r)[:, None]
        out = z.copy()
        out[:, 1] = self.x2a - x[:, 1] + w[:, 0]
        out[:, 2] = w[:, 1]
        return out

    def _tangent(self, x, z, g):
        w, r = self._radial(x, z)
        r = np.maximum(r, 1e-14)
        what = w / r[:, None]
        gr = g[:, 1] * what[:, 0] + g[:, 2] * what[:, 1]
        out = g.copy()
        out[:, 1] -= gr * what[:, 0]
        out[:, 2] -= gr * what[:, 1]
        return out

    def to_record(self):
        return {"variant": "cylinder", "x2a": float(self.x2a), "radius": float(self.radius)}

    @classmethod
    def _from_record(cls, rec):
        return cls(rec["x2a"], rec["radius"])


@dataclass
class HalfPlane(ConstraintSet):
    """Admissible iff <n, z + x> >= b with unit inward normal n."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        self.normal = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(self.normal) - 1.0) > 1e-12:
            raise InvalidArgumentError("half-plane normal must be a unit vector")

    def _slack(self, x, z):
        return (z + x) @ self.normal - self.offset

    def _dist(self, x, z):
        return np.maximum(-self._slack(x, z), 0.0)

    def _project(self, x, z):
        s = self._slack(x, z)
        return z - np.minimum(s, 0.0)[:, None] * self.normal

    def _tangent(self, x, z, g):
        s = self._slack(x, z)
        gn = g @ self.normal
        active = (s <= 1e-12) & (gn > 0)  # descent along -g would leave the set
        return g - np.where(active, gn, 0.0)[:, None] * self.normal

    def to_record(self):
        return {"variant": "half_plane", "n1": float(self.normal[0]),
                "n2": float(self.normal[1]), "offset": float(self.offset)}

    @classmethod
    def _from_record(cls, rec):
        return cls(np.array([rec["n1"], rec["n2"]]), rec["offset"])


@dataclass
class Cone(ConstraintSet):
    """Second-order cone: <axis, w> >= aperture * |w| with w = z + x - apex."""

    apex: np.ndarray
    axis: np.ndarray
    aperture: float

    def __post_init__(self):
        self.apex = np.asarray(self.apex, dtype=float)
        self.axis = np.asarray(self.axis, dtype=float)
        self.m = len(self.apex)
        if abs(np.linalg.norm(self.axis) - 1.0) > 1e-12:
            raise InvalidArgumentError("cone axis must be a unit vector")
        if not 0 <= self.aperture < 1:
            raise InvalidArgumentError("cone aperture must lie in [0, 1)")

    def _split(self, x, z):
        w = z + x - self.apex
        t = w @ self.axis
        perp = w - t[:, None] * self.axis
        return w, t, np.linalg.norm(perp, axis=1), perp

    def _project(self, x, z):
        w, t, r, perp = self._split(x, z)
        k = self.aperture
        alpha = k / math.sqrt(1.0 - k * k) if k > 0 else 0.0
        inside = t >= alpha * r - 1e-15
        polar = (alpha * t + r) <= 1e-15 if alpha > 0 else (r <= 1e-15) & (t <= 0)
        if alpha == 0.0:
            # half-space t >= 0
            proj_w = w - np.minimum(t, 0.0)[:, None] * self.axis
        else:
            s = np.maximum((r + alpha * t) / (1.0 + alpha * alpha), 0.0)
            rhat = np.divide(perp, np.maximum(r, 1e-300)[:, None])
            proj_w = s[:, None] * rhat + (alpha * s)[:, None] * self.axis
            proj_w[inside] = w[inside]
            proj_w[polar] = 0.0
        return proj_w + self.apex - x

    def _dist(self, x, z):
        return np.linalg.norm(z - self._project(x, z), axis=1)

    def _tangent(self, x, z, g):
        # feasible-direction projection via a small projected step
        tau = 1e-7 * (1.0 + np.linalg.norm(z, axis=1, keepdims=True))
        stepped = self._project(x, z - tau * g)
        return (z - stepped) / tau

    def to_record(self):
        rec = {"variant": "cone", "aperture": float(self.aperture)}
        for i, c in enumerate(self.apex):
            rec[f"apex{i+1}"] = float(c)
        for i, c in enumerate(self.axis):
            rec[f"axis{i+1}"] = float(c)
        return rec

    @classmethod
    def _from_record(cls, rec):
        apex = np.array([rec[k] for k in sorted(rec) if k.startswith("apex")])
        axis = np.array([rec[k] for k in sorted(rec) if k.startswith("axis")])
        return cls(apex, axis, rec["aperture"])


_VARIANTS = {
    "point_target": PointTarget,
    "vertical_line": VerticalLine,
    "circle": Circle,
    "cylinder": Cylinder,
    "half_plane": HalfPlane,
    "cone": Cone,
}


# ---------------------------------------------------------------------------
# penalty densities


def smooth_step(tau, k: float):
    """Smoothed unit step (1 + tanh(k*tau))/2."""
    if k <= 0:
        raise InvalidArgumentError("step sharpness k must be positive")
    return 0.5 * (1.0 + np.tanh(k * np.asarray(tau, dtype=float)))


@dataclass
class PenaltyDensity:
    """Relaxed constraint density in normal form c * dist(F_x, z)^p.

    For the unilateral half-plane variant the density carries the smoothed
    step factor H_k applied to the signed violation.  boundary_flag records
    whether the half-space convention (factor 1/2 relative to the full-space
    cell value) is already baked into c.
    """

    c: float
    p: float
    constraint: ConstraintSet
    boundary_flag: bool = False
    step_sharpness: float | None = None
    eta: float = PENALTY_ETA

    def __post_init__(self):
        if self.c <= 0:
            raise InvalidArgumentError("capacity constant must be positive")
        if self.step_sharpness is not None and self.step_sharpness <= 0:
            raise InvalidArgumentError("step sharpness must be positive")

    def _power(self, g):
        e2 = self.eta * self.eta
        return (g * g + e2) ** (0.5 * self.p) - self.eta ** self.p

    def _power_deriv_over_g(self, g):
        e2 = self.eta * self.eta
        return self.p * (g * g + e2) ** (0.5 * self.p - 1.0)

    def value(self, x, z):
        x1, z1 = self.constraint._broadcast(x, z)
        v = self._value(x1, z1)
        return float(v[0]) if np.asarray(z).ndim == 1 else v

    def value_and_grad(self, x, z):
        """Vectorized density and z-gradient at rows of (x, z)."""
        x1, z1 = self.constraint._broadcast(x, z)
        return self._value_and_grad(x1, z1)

    def _value(self, x, z):
        return self._value_and_grad(x, z)[0]

    def _value_and_grad(self, x, z):
        F = self.constraint
        if isinstance(F, HalfPlane) and self.step_sharpness is not None:
            k = self.step_sharpness
            s = F._slack(x, z)
            H = 0.5 * (1.0 + np.tanh(-k * s))
            dH = -0.5 * k * (1.0 - np.tanh(-k * s) ** 2)
            pw = self._power(s)
            dpw = self._power_deriv_over_g(s) * s
            val = self.c * H * pw
            coef = self.c * (dH * pw + H * dpw)
            return val, coef[:, None] * np.broadcast_to(F.normal, z.shape)
        g = F._dist(x, z)
        resid = z - F._project(x, z)
        val = self.c * self._power(g)
        grad = self.c * self._power_deriv_over_g(g)[:, None] * resid
        return val, grad


# ---------------------------------------------------------------------------
# family validation (spot checks of the structural conditions on x -> F_x)


@dataclass
class FamilyReport:
    sites: np.ndarray
    selection: np.ndarray          # s(x) = projection of 0, per site
    selection_bound: float         # max |s(x)|
    selection_lipschitz: float     # observed Lipschitz constant of s
    translation_defect: float      # worst admissibility defect of the natural map
    violations: list[str]

    def ok(self) -> bool:
        return not self.violations


def validate_family(constraint_family: Callable[[np.ndarray], ConstraintSet],
                    sites: Sequence[np.ndarray],
                    n_samples: int = 16,
                    selection_bound: float = 100.0,
                    lipschitz_bound: float = 100.0,
                    seed: int = 0) -> FamilyReport:
    """Numerically spot-check that the family admits a bounded Lipschitz
    selection and that translating admissible points between nearby sites
    stays near-admissible."""
    sites = [np.asarray(s, dtype=float) for s in sites]
    if len(sites) < 2:
        raise InvalidArgumentError("need at least 2 sample sites")
    rng = np.random.default_rng(seed)

    sets = [constraint_family(s) for s in sites]
    m = sets[0].m
    sel = np.array([F.project(s, np.zeros(m)) for F, s in zip(sets, sites)])
    violations = []

    bound = float(np.max(np.linalg.norm(sel, axis=1)))
    if bound > selection_bound:
        violations.append(f"selection unbounded: |s(x)| reaches {bound:g}")

    lip = 0.0
    for i in range(len(sites)):
        for j in range(i + 1, len(sites)):
            dx = np.linalg.norm(sites[i] - sites[j])
            if dx < 1e-12:
                continue
            lip = max(lip, float(np.linalg.norm(sel[i] - sel[j])) / dx)
    if lip > lipschitz_bound:
        violations.append(f"selection Lipschitz constant {lip:g} exceeds bound")

    # natural translation map between sites: z -> z + s(x2) - s(x1)
    defect = 0.0
    samples = rng.normal(scale=1.0, size=(n_samples, m))
    for i in range(len(sites)):
        for j in range(len(sites)):
            if i == j:
                continue
            adm = np.array([sets[i].project(sites[i], s) for s in samples])
            moved = adm + (sel[j] - sel[i])
            d = np.array([sets[j].distance(sites[j], zz) for zz in moved])
            dx = np.linalg.norm(sites[i] - sites[j])
            defect = max(defect, float(d.max()) / max(dx, 1e-12))
    if defect > lipschitz_bound:
        violations.append(f"translation map admissibility defect rate {defect:g}")

    return FamilyReport(np.array(sites), sel, bound, lip, defect, violations)
