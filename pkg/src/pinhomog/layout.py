"""Perforation layouts: lattices of small pinned regions at critical scalings.

Boundary perforations are segments of length delta centered at the lattice
images on a tagged edge; interior ones are disks of diameter delta centered
on a curve or on the image of the bulk lattice under a diffeomorphism.
Site densities are the inverse Jacobian of the lattice map, evaluated by
central finite differences.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .constraints import ConstraintSet
from .errors import InvalidArgumentError, LayoutError, ScalingError
from .mesh import Mesh

_SCALING_TOL = 1e-12


@dataclass(frozen=True)
class PerforationElement:
    """One pinned region: a boundary segment or an interior disk.

    site is the lattice image the constraint is parameterized by; extent is
    the segment length or disk diameter; density_weight is the local inverse
    Jacobian of the lattice map (1 for a plain lattice).
    """

    kind: str  # boundary_segment | interior_disk | interior_point_disk | boundary_arc
    site: np.ndarray
    extent: float
    constraint: ConstraintSet
    density_weight: float = 1.0
    tangent: np.ndarray | None = None  # unit tangent for boundary segments

    def __post_init__(self):
        if self.extent <= 0:
            raise InvalidArgumentError("perforation extent must be positive")
        if self.density_weight <= 0:
            raise InvalidArgumentError("density weight must be positive")
        object.__setattr__(self, "site", np.asarray(self.site, dtype=float))

    def endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind != "boundary_segment":
            raise InvalidArgumentError("endpoints only defined for boundary segments")
        h = 0.5 * self.extent * self.tangent
        return self.site - h, self.site + h

    def contains(self, pts: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        pts = np.atleast_2d(pts)
        if self.kind == "boundary_segment":
            a, b = self.endpoints()
            ab = b - a
            denom = float(ab @ ab)
            if denom == 0.0:  # extent below floating point resolution
                return (np.hypot(pts[:, 0] - a[0], pts[:, 1] - a[1]) <= tol)
            t = ((pts - a) @ ab) / denom
            off = pts - (a + t[:, None] * ab)
            return (t >= -tol) & (t <= 1 + tol) & (np.hypot(off[:, 0], off[:, 1]) <= tol)
        d = np.hypot(pts[:, 0] - self.site[0], pts[:, 1] - self.site[1])
        return d <= 0.5 * self.extent + tol

    def dist(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        if self.kind == "boundary_segment":
            a, b = self.endpoints()
            ab = b - a
            denom = float(ab @ ab)
            if denom == 0.0:  # extent below floating point resolution
                return np.hypot(pts[:, 0] - a[0], pts[:, 1] - a[1])
            t = np.clip(((pts - a) @ ab) / denom, 0.0, 1.0)
            proj = a + t[:, None] * ab
            return np.hypot(pts[:, 0] - proj[:, 0], pts[:, 1] - proj[:, 1])
        d = np.hypot(pts[:, 0] - self.site[0], pts[:, 1] - self.site[1])
        return np.maximum(d - 0.5 * self.extent, 0.0)


@dataclass
class PerforationLayout:
    elements: list[PerforationElement]
    epsilon: float
    delta: float
    scaling_rule: tuple | None = None  # ('power', q) or ('exponential', kappa)

    def __post_init__(self):
        if self.scaling_rule is not None:
            kind, value = self.scaling_rule
            if kind == "power":
                expected = self.epsilon ** value
                if abs(self.delta - expected) > _SCALING_TOL * max(1.0, expected):
                    raise ScalingError(
                        f"delta={self.delta:g} does not match eps^{value:g}={expected:g}")
            elif kind == "exponential":
                expected = math.exp(-value / self.epsilon ** 2)
                if abs(self.delta - expected) > _SCALING_TOL * max(1.0, expected):
                    raise ScalingError(
                        f"delta={self.delta:g} does not match exp(-kappa/eps^2)={expected:g}")
            else:
                raise InvalidArgumentError(f"unknown scaling rule {kind!r}")
        self._check_disjoint()

    def _check_disjoint(self):
        els = self.elements
        for i in range(len(els)):
            for j in range(i + 1, len(els)):
                a, b = els[i], els[j]
                gap = np.linalg.norm(a.site - b.site) - 0.5 * (a.extent + b.extent)
                if a.kind == "boundary_segment" and b.kind == "boundary_segment":
                    # use distance between segments along their common line
                    gap = float(b.dist(a.site[None, :])[0]) - 0.5 * a.extent
                if gap < -1e-12:
                    raise LayoutError(f"perforation elements {i} and {j} overlap")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "x1", "x2", "delta", "weight"])
            for el in self.elements:
                w.writerow([el.kind, f"{el.site[0]:.17g}", f"{el.site[1]:.17g}",
                            f"{el.extent:.17g}", f"{el.density_weight:.17g}"])


# ---------------------------------------------------------------------------
# finite-difference Jacobians


def _jacobian_det(psi: Callable, t: np.ndarray, step: float) -> float:
    """|det D(psi)| at parameter t by second-order central differences."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    dim = len(t)
    cols = []
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = step
        fp = np.asarray(psi(*(t + e)) if dim > 1 else psi(t[0] + step), dtype=float)
        fm = np.asarray(psi(*(t - e)) if dim > 1 else psi(t[0] - step), dtype=float)
        cols.append((fp - fm) / (2 * step))
    J = np.column_stack(cols)
    if dim == 1:
        return float(np.linalg.norm(J[:, 0]))  # arclength stretch of a curve
    return abs(float(np.linalg.det(J)))


# ---------------------------------------------------------------------------
# layout constructors


def boundary_perforation(mesh: Mesh, edge_tag: str, eps: float, delta: float,
                         constraint_family: Callable[[np.ndarray], ConstraintSet],
                         scaling: tuple | None = None,
                         corner_margin: float | None = None) -> PerforationLayout:
    """Segments of length delta centered at parameter values eps*i along the
    tagged (straight) boundary edge; elements within eps of a domain corner
    are dropped."""
    if delta >= eps:
        raise ScalingError(f"delta={delta:g} must be smaller than eps={eps:g}")
    be = mesh.boundary_edges[mesh.boundary_tags == edge_tag]
    if len(be) == 0:
        raise InvalidArgumentError(f"no boundary edges tagged {edge_tag!r}")
    pts = mesh.vertices[np.unique(be)]
    # the edge is a straight axis-aligned or oblique segment: take its extremes
    i0 = int(np.argmin(pts[:, 0] + 1e-6 * pts[:, 1]))
    i1 = int(np.argmax(pts[:, 0] + 1e-6 * pts[:, 1]))
    a, b = pts[i0], pts[i1]
    length = float(np.linalg.norm(b - a))
    if length < eps:
        raise InvalidArgumentError("tagged edge shorter than the lattice period")
    tang = (b - a) / length
    margin = eps if corner_margin is None else corner_margin

    elements = []
    i = 1
    while i * eps < length - _SCALING_TOL:
        s = i * eps
        i += 1
        if s - 0.5 * delta < -_SCALING_TOL or s + 0.5 * delta > length + _SCALING_TOL:
            continue
        if s < margin - _SCALING_TOL or s > length - margin + _SCALING_TOL:
            continue
        site = a + s * tang
        elements.append(PerforationElement("boundary_segment", site, delta,
                                           constraint_family(site), 1.0, tangent=tang))
    return PerforationLayout(elements, eps, delta, scaling)


def interior_perforation_on_curve(mesh: Mesh, psi: Callable[[float], np.ndarray],
                                  param_range: tuple[float, float],
                                  eps: float, delta: float,
                                  constraint_family: Callable[[np.ndarray], ConstraintSet],
                                  scaling: tuple | None = None,
                                  kind: str = "interior_disk") -> PerforationLayout:
    """Disks of diameter delta centered at psi(eps*i) for eps*i within the
    parameter range (endpoints included when they are lattice points);
    weights are the inverse arclength stretch of psi."""
    t0, t1 = param_range
    fd = 1e-5 * eps
    elements = []
    i = int(math.floor(t0 / eps))
    while i * eps <= t1 + _SCALING_TOL:
        t = i * eps
        i += 1
        if t < t0 - _SCALING_TOL or t > t1 + _SCALING_TOL:
            continue
        site = np.asarray(psi(t), dtype=float)
        _require_inside(mesh, site, 0.5 * delta)
        stretch = _jacobian_det(psi, np.array([t]), fd)
        if stretch < 1e-10:
            raise LayoutError(f"degenerate curve parameterization at t={t:g}")
        elements.append(PerforationElement(kind, site, delta,
                                           constraint_family(site), 1.0 / stretch))
    return PerforationLayout(elements, eps, delta, scaling)


def bulk_perforation(mesh: Mesh, psi: Callable[[float, float], np.ndarray],
                     eps: float, delta: float,
                     constraint_family: Callable[[np.ndarray], ConstraintSet],
                     scaling: tuple | None = None,
                     kind: str = "interior_point_disk") -> PerforationLayout:
    """Disks of diameter delta at the images of the eps-lattice under psi,
    kept only where the whole disk fits inside the domain."""
    v = mesh.vertices
    lo, hi = v.min(axis=0), v.max(axis=0)
    fd = 1e-5 * eps
    elements = []
    # search a conservative index box around the preimage of the domain
    span = max(hi - lo) / eps + 2
    n = int(span * 3) + 2
    for i in range(-n, n + 1):
        for j in range(-n, n + 1):
            t = np.array([i * eps, j * eps])
            site = np.asarray(psi(t[0], t[1]), dtype=float)
            if np.any(site - 0.5 * delta < lo - _SCALING_TOL) or \
               np.any(site + 0.5 * delta > hi + _SCALING_TOL):
                continue
            if not _strictly_inside(mesh, site, 0.5 * delta):
                continue
            det = _jacobian_det(psi, t, fd)
            if det < 1e-10:
                raise LayoutError(f"degenerate lattice map at lattice point ({i},{j})")
            elements.append(PerforationElement(kind, site, delta,
                                               constraint_family(site), 1.0 / det))
    return PerforationLayout(elements, eps, delta, scaling)


def _require_inside(mesh: Mesh, site: np.ndarray, radius: float) -> None:
    if not _strictly_inside(mesh, site, radius):
        raise LayoutError(f"disk at {site} of radius {radius:g} overlaps the boundary")


def _strictly_inside(mesh: Mesh, site: np.ndarray, radius: float) -> bool:
    v = mesh.vertices
    lo, hi = v.min(axis=0), v.max(axis=0)
    return bool(np.all(site - radius >= lo - _SCALING_TOL)
                and np.all(site + radius <= hi + _SCALING_TOL)
                and np.all(site - radius > lo - _SCALING_TOL)
                and np.all(site + radius < hi + _SCALING_TOL))


def power_exponent(d: int, p: float, codim: int = 0) -> float:
    """Critical size exponent: d/(d-p) for bulk, (d-1)/(d-p) for hypersurface
    and boundary perforations."""
    if not 0 < p < d:
        raise InvalidArgumentError(f"need 0 < p < d, got p={p}, d={d}")
    return (d - codim) / (d - p)
