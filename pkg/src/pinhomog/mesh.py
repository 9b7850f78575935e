"""Conforming triangulations of planar domains with local refinement.

Square domains are meshed with a crossed structured grid (4 triangles per
cell, symmetric under the dihedral group of the square).  Local refinement
uses longest-edge (Rivara) bisection with propagation, so the mesh stays
conforming at every step.  Disk and half-disk domains for cell problems are
meshed in polar rings with a user-supplied radius ladder.
"""

from __future__ import annotations

import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InvalidArgumentError, MeshError, ResourceBudgetError

_GEOM_TOL = 1e-9


# ---------------------------------------------------------------------------
# refinement regions


@dataclass(frozen=True)
class BoxRegion:
    """Axis-aligned box; dist() is 0 inside, Euclidean distance outside."""

    x0: float
    x1: float
    y0: float
    y1: float

    def dist(self, pts: np.ndarray) -> np.ndarray:
        dx = np.maximum(np.maximum(self.x0 - pts[:, 0], pts[:, 0] - self.x1), 0.0)
        dy = np.maximum(np.maximum(self.y0 - pts[:, 1], pts[:, 1] - self.y1), 0.0)
        return np.hypot(dx, dy)


@dataclass(frozen=True)
class DiskRegion:
    cx: float
    cy: float
    r: float

    def dist(self, pts: np.ndarray) -> np.ndarray:
        d = np.hypot(pts[:, 0] - self.cx, pts[:, 1] - self.cy) - self.r
        return np.maximum(d, 0.0)


@dataclass(frozen=True)
class SegmentRegion:
    ax: float
    ay: float
    bx: float
    by: float

    def dist(self, pts: np.ndarray) -> np.ndarray:
        a = np.array([self.ax, self.ay])
        b = np.array([self.bx, self.by])
        ab = b - a
        denom = float(ab @ ab)
        if denom == 0.0:
            return np.hypot(pts[:, 0] - a[0], pts[:, 1] - a[1])
        t = np.clip(((pts - a) @ ab) / denom, 0.0, 1.0)
        proj = a + t[:, None] * ab
        return np.hypot(pts[:, 0] - proj[:, 0], pts[:, 1] - proj[:, 1])


# ---------------------------------------------------------------------------
# mesh container


@dataclass
class Mesh:
    """Immutable conforming triangulation.

    vertices : (n, 2) float array
    triangles : (t, 3) int array, counterclockwise
    boundary_edges : (b, 2) int array
    boundary_tags : (b,) object array of tag strings
    local_size : optional (n,) per-vertex target edge length
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    local_size: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # -- derived quantities (cached) --

    def areas(self) -> np.ndarray:
        if "areas" not in self._cache:
            p = self.vertices[self.triangles]
            d1 = p[:, 1] - p[:, 0]
            d2 = p[:, 2] - p[:, 0]
            self._cache["areas"] = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        return self._cache["areas"]

    def hat_gradients(self) -> np.ndarray:
        """(t, 3, 2) gradients of the three nodal hat functions per triangle."""
        if "grads" not in self._cache:
            p = self.vertices[self.triangles]
            a2 = 2.0 * self.areas()
            g = np.empty((len(self.triangles), 3, 2))
            for k in range(3):
                e = p[:, (k + 2) % 3] - p[:, (k + 1) % 3]
                g[:, k, 0] = -e[:, 1] / a2
                g[:, k, 1] = e[:, 0] / a2
            self._cache["grads"] = g
        return self._cache["grads"]

    def barycenters(self) -> np.ndarray:
        if "bary" not in self._cache:
            self._cache["bary"] = self.vertices[self.triangles].mean(axis=1)
        return self._cache["bary"]

    def edges(self) -> np.ndarray:
        """All unique edges as sorted (e, 2) index pairs."""
        if "edges" not in self._cache:
            t = self.triangles
            e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
            e.sort(axis=1)
            self._cache["edges"] = np.unique(e, axis=0)
        return self._cache["edges"]

    def n_vertices(self) -> int:
        return len(self.vertices)

    def boundary_vertex_indices(self, tag: str | None = None) -> np.ndarray:
        be = self.boundary_edges
        if tag is not None:
            be = be[self.boundary_tags == tag]
        return np.unique(be)

    def validate(self) -> None:
        """Raise MeshError on any violated mesh invariant."""
        if np.any(self.areas() <= 0):
            bad = int(np.argmin(self.areas()))
            raise MeshError(f"triangle {bad} has non-positive area {self.areas()[bad]:g}")
        counts: dict[tuple[int, int], int] = defaultdict(int)
        for t in self.triangles:
            for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
                counts[(min(a, b), max(a, b))] += 1
        boundary = {tuple(sorted(e)) for e in self.boundary_edges.tolist()}
        for e, c in counts.items():
            if c > 2:
                raise MeshError(f"edge {e} shared by {c} triangles")
            if c == 1 and e not in boundary:
                raise MeshError(f"hanging boundary edge {e} missing from boundary_edges")
            if c == 2 and e in boundary:
                raise MeshError(f"interior edge {e} wrongly tagged as boundary")
        # boundary edges must form closed loops: every boundary vertex has
        # exactly two incident boundary edges
        deg: dict[int, int] = defaultdict(int)
        for a, b in self.boundary_edges:
            deg[int(a)] += 1
            deg[int(b)] += 1
        for v, c in deg.items():
            if c != 2:
                raise MeshError(f"boundary vertex {v} has {c} boundary edges (expected 2)")

    def with_vertices(self, vertices: np.ndarray) -> "Mesh":
        return Mesh(vertices, self.triangles, self.boundary_edges,
                    self.boundary_tags, self.local_size)


def _extract_boundary(triangles: np.ndarray) -> np.ndarray:
    counts: dict[tuple[int, int], int] = defaultdict(int)
    for t in triangles:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            counts[(min(a, b), max(a, b))] += 1
    return np.array(sorted(e for e, c in counts.items() if c == 1), dtype=int).reshape(-1, 2)


def _square_tagger(side: float) -> Callable[[np.ndarray], str]:
    def tag(mid: np.ndarray) -> str:
        if abs(mid[0]) < _GEOM_TOL:
            return "left"
        if abs(mid[0] - side) < _GEOM_TOL:
            return "right"
        if abs(mid[1]) < _GEOM_TOL:
            return "bottom"
        if abs(mid[1] - side) < _GEOM_TOL:
            return "top"
        return "boundary"
    return tag


def _finish_mesh(vertices: np.ndarray, triangles: np.ndarray,
                 tagger: Callable[[np.ndarray], str]) -> Mesh:
    be = _extract_boundary(triangles)
    tags = np.array([tagger(0.5 * (vertices[a] + vertices[b])) for a, b in be],
                    dtype=object)
    return Mesh(np.ascontiguousarray(vertices, dtype=float),
                np.ascontiguousarray(triangles, dtype=int), be, tags)


# ---------------------------------------------------------------------------
# square domain


def build_square_mesh(side: float, h: float,
                      refinement_zones: Sequence[tuple[object, float]] = (),
                      max_vertices: int = 600_000) -> Mesh:
    """Crossed structured triangulation of (0, side)^2 with graded zones.

    refinement_zones is a list of (region, local_h) pairs; any region object
    with a dist(points) -> distances method works.  Edge lengths inside each
    zone are driven below local_h by longest-edge bisection.
    """
    if side <= 0 or h <= 0 or h >= side:
        raise InvalidArgumentError(f"need 0 < h < side, got h={h}, side={side}")
    for _, lh in refinement_zones:
        if lh <= 0:
            raise InvalidArgumentError("refinement zone sizes must be positive")

    n = max(2, int(math.ceil(side / h)))
    xs = np.linspace(0.0, side, n + 1)
    grid = np.array([(x, y) for y in xs for x in xs])
    centers = np.array([(0.5 * (xs[i] + xs[i + 1]), 0.5 * (xs[j] + xs[j + 1]))
                        for j in range(n) for i in range(n)])
    verts = np.vstack([grid, centers])

    def gid(i, j):
        return j * (n + 1) + i

    tris = []
    for j in range(n):
        for i in range(n):
            c = len(grid) + j * n + i
            v00, v10 = gid(i, j), gid(i + 1, j)
            v01, v11 = gid(i, j + 1), gid(i + 1, j + 1)
            tris += [(v00, v10, c), (v10, v11, c), (v11, v01, c), (v01, v00, c)]
    mesh = _finish_mesh(verts, np.array(tris), _square_tagger(side))

    if refinement_zones:
        mesh = refine_to_sizes(mesh, list(refinement_zones), tagger=_square_tagger(side),
                               max_vertices=max_vertices)
    return mesh


# ---------------------------------------------------------------------------
# polar (disk / half-disk) domains for cell problems


def build_polar_mesh(radii: Sequence[float], n_theta: int, half: bool = False) -> Mesh:
    """Concentric-ring triangulation of a disk (or upper half-disk).

    radii is the strictly increasing ladder of ring radii; the mesh always
    contains the center point.  For half=True the flat face lies on x2=0 and
    is tagged 'flat'; the outer circle is tagged 'outer'.
    """
    radii = np.asarray(radii, dtype=float)
    if np.any(np.diff(radii) <= 0) or radii[0] <= 0:
        raise InvalidArgumentError("radii must be positive and strictly increasing")
    if n_theta < 4:
        raise InvalidArgumentError("n_theta must be at least 4")

    if half:
        thetas = np.linspace(0.0, math.pi, n_theta + 1)
    else:
        thetas = np.linspace(0.0, 2 * math.pi, n_theta, endpoint=False)
    npt = len(thetas)
    verts = np.concatenate([np.zeros((1, 2)),
                            *(np.column_stack([r * np.cos(thetas), r * np.sin(thetas)])
                              for r in radii)])

    def ring(k, j):  # vertex index of node j on ring k (k from 0)
        return 1 + k * npt + (j if half else j % npt)

    tris = []
    nseg = n_theta  # angular segments in both cases
    for j in range(nseg):
        tris.append((0, ring(0, j), ring(0, j + 1)))
    for k in range(len(radii) - 1):
        for j in range(nseg):
            a, b = ring(k, j), ring(k, j + 1)
            c, d = ring(k + 1, j), ring(k + 1, j + 1)
            tris.append((a, d, c))
            tris.append((a, b, d))
    tris = np.array(tris)
    # enforce CCW
    p = verts[tris]
    a2 = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) \
        - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    flip = a2 < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    rmax = radii[-1]

    def tagger(mid):
        if half and abs(mid[1]) < _GEOM_TOL * max(1.0, rmax):
            return "flat"
        return "outer"

    return _finish_mesh(verts, tris, tagger)


def reflect_half_mesh(mesh: Mesh) -> Mesh:
    """Mirror a half-disk mesh across x2=0 into a full disk.

    Vertices on the flat face are shared, so the result is conforming and
    exactly mirror-symmetric.
    """
    v = mesh.vertices
    on_face = np.abs(v[:, 1]) < _GEOM_TOL * max(1.0, np.abs(v).max())
    new_index = np.full(len(v), -1, dtype=int)
    extra = []
    for i in range(len(v)):
        if on_face[i]:
            new_index[i] = i
        else:
            new_index[i] = len(v) + len(extra)
            extra.append((v[i, 0], -v[i, 1]))
    verts = np.vstack([v, np.array(extra).reshape(-1, 2)])
    mirrored = new_index[mesh.triangles][:, [0, 2, 1]]  # reflection flips orientation
    tris = np.vstack([mesh.triangles, mirrored])
    return _finish_mesh(verts, tris, lambda mid: "outer")


def geometric_radii(r0: float, r1: float, ratio: float) -> np.ndarray:
    """Strictly increasing radii from r0 to r1 with approximately the given ratio."""
    if not (0 < r0 < r1) or ratio <= 1:
        raise InvalidArgumentError("need 0 < r0 < r1 and ratio > 1")
    n = max(1, int(math.ceil(math.log(r1 / r0) / math.log(ratio))))
    return r0 * (r1 / r0) ** (np.arange(n + 1) / n)


# ---------------------------------------------------------------------------
# longest-edge bisection refinement


class _Editable:
    """Mutable triangulation used during Rivara bisection."""

    def __init__(self, mesh: Mesh, max_vertices: int):
        self.verts: list[tuple[float, float]] = [tuple(p) for p in mesh.vertices]
        self.tris: list[tuple[int, int, int] | None] = [tuple(t) for t in mesh.triangles]
        self.e2t: dict[tuple[int, int], set[int]] = defaultdict(set)
        self.max_vertices = max_vertices
        for ti, t in enumerate(self.tris):
            self._register(ti)

    def _register(self, ti: int) -> None:
        t = self.tris[ti]
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            self.e2t[(min(a, b), max(a, b))].add(ti)

    def _unregister(self, ti: int) -> None:
        t = self.tris[ti]
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            self.e2t[(min(a, b), max(a, b))].discard(ti)

    def _len2(self, e: tuple[int, int]) -> float:
        pa, pb = self.verts[e[0]], self.verts[e[1]]
        return (pa[0] - pb[0]) ** 2 + (pa[1] - pb[1]) ** 2

    def longest_edge(self, ti: int) -> tuple[int, int]:
        t = self.tris[ti]
        edges = [(min(a, b), max(a, b)) for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0]))]
        # deterministic tie-break by vertex indices
        return max(edges, key=lambda e: (self._len2(e), -e[0], -e[1]))

    def neighbor(self, ti: int, e: tuple[int, int]) -> int | None:
        others = self.e2t[e] - {ti}
        return next(iter(others)) if others else None

    def _split_tri(self, ti: int, e: tuple[int, int], mid: int) -> list[int]:
        t = self.tris[ti]
        (a, b) = e
        c = next(v for v in t if v not in e)
        self._unregister(ti)
        self.tris[ti] = None
        new = []
        for child in ((a, mid, c), (mid, b, c)):
            pa, pb, pc = (self.verts[v] for v in child)
            area2 = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pb[1] - pa[1]) * (pc[0] - pa[0])
            if area2 < 0:
                child = (child[0], child[2], child[1])
            self.tris.append(child)
            idx = len(self.tris) - 1
            self._register(idx)
            new.append(idx)
        return new

    def split_edge(self, e: tuple[int, int]) -> list[int]:
        if len(self.verts) >= self.max_vertices:
            raise ResourceBudgetError(
                f"refinement exceeded the vertex budget of {self.max_vertices}")
        incident = list(self.e2t[e])
        pa, pb = self.verts[e[0]], self.verts[e[1]]
        mid = len(self.verts)
        self.verts.append((0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])))
        new = []
        for ti in incident:
            new += self._split_tri(ti, e, mid)
        return new

    def lepp_refine(self, t0: int) -> list[int]:
        """Bisect t0 (propagating as needed); returns all triangles created."""
        created: list[int] = []
        guard = 0
        while self.tris[t0] is not None:
            guard += 1
            if guard > 100_000:
                raise MeshError("longest-edge propagation failed to terminate")
            path = [t0]
            seen = {t0}
            while True:
                t = path[-1]
                e = self.longest_edge(t)
                nb = self.neighbor(t, e)
                if nb is None or self.longest_edge(nb) == e or nb in seen:
                    created += self.split_edge(e)
                    break
                path.append(nb)
                seen.add(nb)
        return created

    def alive(self) -> list[int]:
        return [i for i, t in enumerate(self.tris) if t is not None]

    def to_mesh(self, tagger: Callable[[np.ndarray], str]) -> Mesh:
        verts = np.array(self.verts)
        tris = np.array([t for t in self.tris if t is not None])
        return _finish_mesh(verts, tris, tagger)


def refine_to_sizes(mesh: Mesh, zones: Sequence[tuple[object, float]],
                    tagger: Callable[[np.ndarray], str] | None = None,
                    margins: Sequence[float] | None = None,
                    max_vertices: int = 600_000) -> Mesh:
    """Bisect until, in each zone (inflated by its margin), edges are below
    the zone's target length."""
    if tagger is None:
        # tag refined boundary edges by the nearest original boundary edge
        be = mesh.boundary_edges
        mids = 0.5 * (mesh.vertices[be[:, 0]] + mesh.vertices[be[:, 1]])
        btags = list(mesh.boundary_tags)

        def tagger(mid):
            d = np.hypot(mids[:, 0] - mid[0], mids[:, 1] - mid[1])
            return btags[int(np.argmin(d))]

    if margins is None:
        margins = [0.0] * len(zones)
    ed = _Editable(mesh, max_vertices)

    def needs(ti: int) -> bool:
        t = ed.tris[ti]
        pts = np.array([ed.verts[v] for v in t])
        probe = np.vstack([pts, pts.mean(axis=0, keepdims=True)])
        lmax2 = max(ed._len2((min(a, b), max(a, b)))
                    for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])))
        for (region, target), margin in zip(zones, margins):
            if lmax2 > target * target and float(region.dist(probe).min()) <= margin:
                return True
        return False

    work = deque(ed.alive())
    while work:
        ti = work.popleft()
        if ed.tris[ti] is None or not needs(ti):
            continue
        work.extend(ed.lepp_refine(ti))
    return ed.to_mesh(tagger)


# ---------------------------------------------------------------------------
# layout-conforming refinement (imports layout lazily to avoid a cycle)


def conforming_refine_to_layout(mesh: Mesh, layout, resolve_factor: float = 3.0,
                                max_vertices: int = 600_000) -> Mesh:
    """Refine so each perforation element is resolved by the mesh.

    Local edge lengths near each element are driven below delta/resolve_factor
    and nearby vertices are snapped onto the element boundary (segment
    endpoints; disk circles).  Returns the input mesh unchanged for an empty
    layout.
    """
    if resolve_factor < 2:
        raise InvalidArgumentError("resolve_factor must be >= 2")
    if not layout.elements:
        return mesh

    zones, margins = [], []
    for el in layout.elements:
        target = el.extent / resolve_factor
        if el.kind == "boundary_segment":
            a, b = el.endpoints()
            zones.append((SegmentRegion(a[0], a[1], b[0], b[1]), target))
        else:
            zones.append((DiskRegion(el.site[0], el.site[1], 0.5 * el.extent), target))
        margins.append(0.5 * el.extent)

    refined = refine_to_sizes(mesh, zones, margins=margins, max_vertices=max_vertices)
    verts = refined.vertices.copy()

    # snap nearest vertices onto element boundaries
    for el in layout.elements:
        target = el.extent / resolve_factor
        if el.kind == "boundary_segment":
            a, b = el.endpoints()
            for q in (a, b):
                d = np.hypot(verts[:, 0] - q[0], verts[:, 1] - q[1])
                i = int(np.argmin(d))
                if 0 < d[i] <= 0.75 * target:
                    verts[i] = q
        else:
            c, r = el.site, 0.5 * el.extent
            rad = np.hypot(verts[:, 0] - c[0], verts[:, 1] - c[1])
            close = np.nonzero((np.abs(rad - r) <= 0.35 * target) & (rad > 1e-14))[0]
            for i in close:
                verts[i] = c + (verts[i] - c) * (r / rad[i])

    snapped = refined.with_vertices(verts)
    while True:
        # revert snaps that inverted triangles; reverting one vertex of a
        # triangle can leave it inverted by another snap, so iterate (the
        # snapped vertex set shrinks monotonically)
        bad = snapped.areas() <= 0
        if not np.any(bad):
            break
        for i in np.unique(snapped.triangles[bad]):
            verts[i] = refined.vertices[i]
        snapped = refined.with_vertices(verts)
    snapped.validate()
    return snapped
