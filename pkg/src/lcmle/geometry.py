"""Convex geometry in low dimension: hulls, triangulations, volumes,
membership, inner/outer facet-budget approximations, and a plain-text
polytope format.

Conventions used throughout:

- a point is a 1-d float array of length d; point sets are (n, d) arrays;
- a simplex is identified by d+1 vertex indices into a vertex store;
- halfspaces are pairs (a, b) with unit normal a meaning a.x <= b, and all
  membership tests use the closed convention (boundary counts as inside);
- degeneracy is handled by tolerances relative to the bounding-box scale
  (COPLANARITY_RTOL), never by exact arithmetic.

Hulls are computed with Qhull (incremental quickhull with conflict lists)
through scipy; everything downstream depends only on the contracts here.
Dimensions 1 through 5 are supported (5 only as the lifted space of 4-d
triangulations).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, Delaunay, HalfspaceIntersection, QhullError

from .errors import DegenerateInput, DimensionMismatch, InfeasibleBudget

MAX_DIM = 5
COPLANARITY_RTOL = 1e-10
CONTAINS_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Facet:
    """One facet: its vertex indices plus the supporting hyperplane a.x <= b."""

    vertex_indices: tuple[int, ...]
    normal: np.ndarray
    offset: float


@dataclass(frozen=True, eq=False)
class PolytopeV:
    """Bounded convex polytope in vertex representation.

    ``vertices`` is minimal (every row is an extreme point).  ``facets``
    carry outward unit normals; together they give the H-representation.
    """

    vertices: np.ndarray
    facets: tuple[Facet, ...]

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    def halfspaces(self) -> "PolytopeH":
        normals = np.array([f.normal for f in self.facets])
        offsets = np.array([f.offset for f in self.facets])
        return PolytopeH(normals, offsets, bounded=True)

    def contains(self, x: np.ndarray, tol: float = CONTAINS_TOL) -> np.ndarray | bool:
        return self.halfspaces().contains(x, tol=tol)


@dataclass(frozen=True, eq=False)
class PolytopeH:
    """Halfspace representation: rows a_i with a_i . x <= b_i."""

    normals: np.ndarray
    offsets: np.ndarray
    bounded: bool = True

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    def contains(self, x: np.ndarray, tol: float = CONTAINS_TOL) -> np.ndarray | bool:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = x[None, :] if single else x
        if pts.shape[1] != self.dim:
            raise DimensionMismatch(f"point dim {pts.shape[1]} != polytope dim {self.dim}")
        scale = 1.0 + np.abs(self.offsets)
        inside = np.all(pts @ self.normals.T <= self.offsets + tol * scale, axis=1)
        return bool(inside[0]) if single else inside


@dataclass(frozen=True, eq=False)
class Triangulation:
    """Simplices over a shared vertex store; interiors pairwise disjoint."""

    points: np.ndarray
    simplices: np.ndarray  # (m, d+1) int indices

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def simplex_vertices(self, i: int) -> np.ndarray:
        return self.points[self.simplices[i]]

    def volumes(self) -> np.ndarray:
        verts = self.points[self.simplices]  # (m, d+1, d)
        edges = verts[:, 1:, :] - verts[:, :1, :]
        d = self.dim
        dets = np.linalg.det(edges) if d > 0 else np.ones(len(verts))
        return np.abs(dets) / math.factorial(d)


@dataclass(frozen=True, eq=False)
class ApproxResult:
    """A facet-budget approximation and its measured volume gap vs the body."""

    polytope: "PolytopeV | PolytopeH"
    volume_gap: float
    vertex_form: PolytopeV


def _points_array(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise DegenerateInput("expected a nonempty (n, d) array of points")
    if not np.all(np.isfinite(pts)):
        raise DegenerateInput("points must be finite")
    if pts.shape[1] > MAX_DIM:
        raise DimensionMismatch(f"dimension {pts.shape[1]} above supported maximum {MAX_DIM}")
    return pts


def affine_rank(points: np.ndarray, rtol: float = COPLANARITY_RTOL) -> int:
    """Dimension of the affine span of the points, using a scaled tolerance."""
    pts = _points_array(points)
    centered = pts - pts.mean(axis=0)
    scale = max(1.0, float(np.abs(centered).max()))
    s = np.linalg.svd(centered, compute_uv=False)
    return int(np.sum(s > rtol * scale * len(pts)))


def _facets_from_qhull(hull: ConvexHull, index_map: dict[int, int]) -> tuple[Facet, ...]:
    """Merge Qhull's triangulated facets into planar facets with vertex sets."""
    eqs = hull.equations  # rows [normal, c] with normal.x + c <= 0 inside
    scale = max(1.0, float(np.abs(hull.points).max()))
    keys = np.round(np.column_stack([eqs[:, :-1], eqs[:, -1] / scale]), 9)
    groups: dict[tuple, list[int]] = {}
    for row, key in enumerate(map(tuple, keys)):
        groups.setdefault(key, []).append(row)
    facets = []
    for rows in groups.values():
        verts: set[int] = set()
        for r in rows:
            verts.update(int(v) for v in hull.simplices[r])
        normal = eqs[rows[0], :-1].copy()
        offset = -float(eqs[rows[0], -1])
        facets.append(
            Facet(tuple(sorted(index_map[v] for v in verts)), normal, offset)
        )
    facets.sort(key=lambda f: f.vertex_indices)
    return tuple(facets)


def convex_hull(points) -> PolytopeV:
    """Convex hull with a minimal vertex set.

    Requires at least d+1 points spanning R^d affinely; raises
    DegenerateInput otherwise.
    """
    pts = _points_array(points)
    n, d = pts.shape
    if n < d + 1 or affine_rank(pts) < d:
        raise DegenerateInput(f"points do not span R^{d} affinely")
    if d == 1:
        lo, hi = float(pts.min()), float(pts.max())
        verts = np.array([[lo], [hi]])
        facets = (
            Facet((0,), np.array([-1.0]), -lo),
            Facet((1,), np.array([1.0]), hi),
        )
        return PolytopeV(verts, facets)
    try:
        hull = ConvexHull(pts)
    except QhullError:
        hull = ConvexHull(pts, qhull_options="QJ")
    order = hull.vertices  # CCW in 2-d
    index_map = {int(old): new for new, old in enumerate(order)}
    verts = pts[order].copy()
    facets = _facets_from_qhull(hull, index_map)
    return PolytopeV(verts, facets)


def upper_hull_triangulation(points, heights) -> Triangulation:
    """Triangulation carrying the least concave majorant of the heights.

    The facets of the upper convex hull of the lifted points (x_i, y_i)
    project to simplices whose linear interpolant is the smallest concave
    function dominating all heights.  Vertex indices refer to the input
    point order.  If the lifted points are coplanar (heights affine in x)
    any triangulation of the base hull works and a Delaunay fallback is
    used.
    """
    pts = _points_array(points)
    y = np.asarray(heights, dtype=float)
    n, d = pts.shape
    if y.shape != (n,):
        raise DimensionMismatch("need one height per base point")
    if not np.all(np.isfinite(y)):
        raise DegenerateInput("heights must be finite")
    if n < d + 1 or affine_rank(pts) < d:
        raise DegenerateInput(f"base points do not span R^{d} affinely")
    if d == 1:
        return _upper_hull_1d(pts, y)
    if n == d + 1:
        return Triangulation(pts, np.arange(d + 1, dtype=int)[None, :])
    lifted = np.column_stack([pts, y])
    hull = None
    if affine_rank(lifted) == d + 1:
        try:
            hull = ConvexHull(lifted)
        except QhullError:
            hull = None
    if hull is None:
        tri = Delaunay(pts, qhull_options="Qbb Qc Qz Q12")
        simplices = _nondegenerate(pts, tri.simplices)
        return Triangulation(pts, simplices)
    up = hull.equations[:, d] > 1e-12
    simplices = _nondegenerate(pts, hull.simplices[up])
    if len(simplices) == 0:
        raise DegenerateInput("no upper facets found")
    return Triangulation(pts, simplices)


def _nondegenerate(pts: np.ndarray, simplices: np.ndarray) -> np.ndarray:
    verts = pts[simplices]
    edges = verts[:, 1:, :] - verts[:, :1, :]
    vols = np.abs(np.linalg.det(edges))
    scale = max(1.0, float(np.abs(pts).max())) ** pts.shape[1]
    return np.array(sorted(map(tuple, simplices[vols > 1e-12 * scale])), dtype=int)


def _upper_hull_1d(pts: np.ndarray, y: np.ndarray) -> Triangulation:
    """Monotone-chain upper hull; cells are consecutive active intervals."""
    order = np.argsort(pts[:, 0], kind="stable")
    xs = pts[order, 0]
    ys = y[order]
    stack: list[int] = []
    for i in range(len(xs)):
        while len(stack) >= 2:
            i0, i1 = stack[-2], stack[-1]
            # keep the chain concave: new point must not see i1 above it
            cross = (xs[i1] - xs[i0]) * (ys[i] - ys[i0]) - (xs[i] - xs[i0]) * (ys[i1] - ys[i0])
            if cross >= 0.0:
                stack.pop()
            else:
                break
        if stack and xs[stack[-1]] == xs[i]:
            if ys[i] > ys[stack[-1]]:
                stack.pop()
            else:
                continue
        stack.append(i)
    active = [int(order[i]) for i in stack]
    simplices = np.array([[active[k], active[k + 1]] for k in range(len(active) - 1)], dtype=int)
    return Triangulation(pts, simplices)


def majorant_planes(tri: Triangulation, heights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Affine pieces (gradients g_c, intercepts b_c) of the majorant per cell.

    On its cell the majorant equals g_c . x + b_c; globally it is the
    pointwise minimum over cells (valid inside the support hull).
    """
    pts = tri.points
    d = tri.dim
    verts = pts[tri.simplices]  # (m, d+1, d)
    h = np.asarray(heights, dtype=float)[tri.simplices]  # (m, d+1)
    A = np.concatenate([verts, np.ones((len(verts), d + 1, 1))], axis=2)
    coef = np.linalg.solve(A, h[..., None])[..., 0]
    return coef[:, :d], coef[:, d]


def majorant_evaluate(
    tri: Triangulation, heights: np.ndarray, x: np.ndarray, chunk: int = 65536
) -> np.ndarray:
    """Evaluate the least concave majorant at points inside the support hull."""
    grads, icepts = majorant_planes(tri, heights)
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.empty(len(pts))
    for lo in range(0, len(pts), chunk):
        block = pts[lo : lo + chunk]
        out[lo : lo + chunk] = (block @ grads.T + icepts).min(axis=1)
    return out


def polytope_volume(p: "PolytopeV | Triangulation") -> float:
    """Volume as a sum of simplex volumes |det E| / d!."""
    if isinstance(p, Triangulation):
        return float(p.volumes().sum())
    if isinstance(p, PolytopeV):
        return float(triangulate_polytope(p).volumes().sum())
    raise TypeError(f"cannot take the volume of {type(p).__name__}")


def triangulate_polytope(p: PolytopeV) -> Triangulation:
    """Fan triangulation from the centroid over (triangulated) facets."""
    verts = p.vertices
    d = p.dim
    if d == 1:
        return Triangulation(verts, np.array([[0, 1]]))
    centroid = verts.mean(axis=0)
    points = np.vstack([verts, centroid[None, :]])
    c_idx = len(verts)
    simplices = []
    hull = ConvexHull(verts)
    for facet in hull.simplices:
        simplices.append([int(v) for v in facet] + [c_idx])
    tri = Triangulation(points, np.array(simplices, dtype=int))
    keep = tri.volumes() > 0.0
    return Triangulation(points, tri.simplices[keep])


def contains(p: "PolytopeH | PolytopeV", x: np.ndarray, tol: float = CONTAINS_TOL):
    """Closed-convention membership test; accepts a single point or a batch."""
    return p.contains(x, tol=tol)


def halfspaces_to_vertices(h: PolytopeH) -> PolytopeV:
    """Vertex enumeration of a bounded halfspace intersection."""
    d = h.dim
    if d == 1:
        ub = np.inf
        lb = -np.inf
        for a, b in zip(h.normals[:, 0], h.offsets):
            if a > 0:
                ub = min(ub, b / a)
            elif a < 0:
                lb = max(lb, b / a)
        if not (np.isfinite(lb) and np.isfinite(ub)) or lb > ub:
            raise DegenerateInput("halfspace intersection empty or unbounded")
        return convex_hull(np.array([[lb], [ub]]))
    # Chebyshev center as a strictly interior point
    norms = np.linalg.norm(h.normals, axis=1)
    A = np.column_stack([h.normals, norms])
    c = np.zeros(d + 1)
    c[-1] = -1.0
    res = linprog(c, A_ub=A, b_ub=h.offsets, bounds=[(None, None)] * d + [(0, None)], method="highs")
    if not res.success or res.x[-1] <= 1e-12:
        raise DegenerateInput("halfspace intersection empty, unbounded, or degenerate")
    interior = res.x[:d]
    hs = np.column_stack([h.normals, -h.offsets])
    inter = HalfspaceIntersection(hs, interior)
    return convex_hull(inter.intersections)


def farthest_point_subset(points: np.ndarray, count: int, start: int = 0) -> np.ndarray:
    """Greedy max-min-distance subset of the rows; deterministic tie-break
    (lowest index).  Returns indices into ``points``."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    count = min(count, n)
    chosen = [start]
    dist = np.linalg.norm(pts - pts[start], axis=1)
    for _ in range(count - 1):
        nxt = int(np.argmax(dist))
        if dist[nxt] <= 0.0:
            break
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(pts - pts[nxt], axis=1))
    return np.array(chosen, dtype=int)


def inner_approx(k: PolytopeV, budget: int) -> ApproxResult:
    """Inscribed polytope with at most ``budget`` facets.

    Support vertices are chosen by farthest-point greedy on the body's
    vertices; the vertex count is reduced until the hull respects the facet
    budget.  Exact when the budget covers all facets of ``k``.
    """
    d = k.dim
    if budget < d + 1:
        raise InfeasibleBudget(f"need at least {d + 1} facets in dimension {d}")
    if budget >= len(k.facets):
        return ApproxResult(k, 0.0, k)
    m = min(budget if d <= 2 else budget * d, len(k.vertices))
    vol_k = polytope_volume(k)
    while True:
        idx = farthest_point_subset(k.vertices, m)
        try:
            cand = convex_hull(k.vertices[idx])
        except DegenerateInput:
            m += d
            continue
        if len(cand.facets) <= budget:
            return ApproxResult(cand, vol_k - polytope_volume(cand), cand)
        m = max(d + 1, m - max(1, m // 8))


def outer_approx(k: PolytopeV, budget: int) -> ApproxResult:
    """Circumscribed polytope with at most ``budget`` facets.

    Directions are chosen by farthest-point greedy on the body's facet
    normals; offsets are the support function of ``k``, so containment is
    structural.  Exact when the budget covers all facets of ``k``.
    """
    d = k.dim
    if budget < d + 1:
        raise InfeasibleBudget(f"need at least {d + 1} facets in dimension {d}")
    if budget >= len(k.facets):
        return ApproxResult(k.halfspaces(), 0.0, k)
    normals = np.array([f.normal for f in k.facets])
    idx = farthest_point_subset(normals, budget)
    dirs = normals[idx]
    offsets = (k.vertices @ dirs.T).max(axis=0)
    h = PolytopeH(dirs, offsets, bounded=True)
    vert_form = halfspaces_to_vertices(h)
    excess = polytope_volume(vert_form) - polytope_volume(k)
    return ApproxResult(h, excess, vert_form)


def regular_polygon(num_vertices: int, radius: float = 1.0, center=(0.0, 0.0)) -> PolytopeV:
    """Regular polygon, vertex 0 at angle 0; high counts proxy the disk."""
    angles = 2.0 * np.pi * np.arange(num_vertices) / num_vertices
    pts = np.column_stack([np.cos(angles), np.sin(angles)]) * radius + np.asarray(center)
    return convex_hull(pts)


# ---------------------------------------------------------------------------
# Fast 2-d polygon helpers (vertices in CCW order)
# ---------------------------------------------------------------------------


def polygon_area(verts: np.ndarray) -> float:
    """Shoelace area of a CCW polygon."""
    v = np.asarray(verts, dtype=float)
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def clip_polygon(verts: np.ndarray, normals: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex CCW polygon by halfspaces a.x <= b."""
    poly = [np.asarray(p, dtype=float) for p in verts]
    for a, b in zip(np.atleast_2d(normals), np.atleast_1d(offsets)):
        if not poly:
            return np.zeros((0, 2))
        out = []
        prev = poly[-1]
        prev_in = float(prev @ a) <= b
        for cur in poly:
            cur_in = float(cur @ a) <= b
            if cur_in != prev_in:
                t = (b - prev @ a) / ((cur - prev) @ a)
                out.append(prev + t * (cur - prev))
            if cur_in:
                out.append(cur)
            prev, prev_in = cur, cur_in
        poly = out
    return np.array(poly) if poly else np.zeros((0, 2))


def polygon_contains(verts: np.ndarray, points: np.ndarray, tol: float = CONTAINS_TOL) -> np.ndarray:
    """Vectorized membership in a convex CCW polygon via wedge location.

    O(log V) per query point: locate the angular wedge around an interior
    point, then one halfplane test against that edge.
    """
    v = np.asarray(verts, dtype=float)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(v) == 0:
        return np.zeros(len(pts), dtype=bool)
    if len(v) == 1:
        return np.all(np.abs(pts - v[0]) <= tol, axis=1)
    if len(v) == 2:
        e = v[1] - v[0]
        t = (pts - v[0]) @ e / max(float(e @ e), 1e-300)
        proj = v[0] + np.clip(t, 0, 1)[:, None] * e
        return np.linalg.norm(pts - proj, axis=1) <= tol * (1 + np.abs(v).max())
    center = v.mean(axis=0)
    rel = v - center
    ang = np.arctan2(rel[:, 1], rel[:, 0])
    order = np.argsort(ang)
    v_sorted = v[order]
    ang_sorted = ang[order]
    q = pts - center
    qa = np.arctan2(q[:, 1], q[:, 0])
    pos = np.searchsorted(ang_sorted, qa)
    lo = (pos - 1) % len(v)
    hi = pos % len(v)
    a, b = v_sorted[lo], v_sorted[hi]
    edge = b - a
    cross = edge[:, 0] * (pts[:, 1] - a[:, 1]) - edge[:, 1] * (pts[:, 0] - a[:, 0])
    scale = 1.0 + np.abs(v).max()
    return cross >= -tol * scale * np.maximum(1.0, np.linalg.norm(edge, axis=1))


def polygon_from_halfspaces(
    normals: np.ndarray, offsets: np.ndarray, bound: float = 1e9
) -> np.ndarray:
    """Vertices (CCW) of a bounded 2-d halfspace intersection via box clipping."""
    box = np.array([[-bound, -bound], [bound, -bound], [bound, bound], [-bound, bound]])
    return clip_polygon(box, normals, offsets)


def polygon_to_polytope(verts: np.ndarray) -> PolytopeV:
    """PolytopeV from CCW polygon vertices (deduplicates collinear runs)."""
    return convex_hull(verts)


# ---------------------------------------------------------------------------
# Plain-text serialization
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def polytope_to_text(p: PolytopeV) -> str:
    """Serialize: header ``d <dim> v <count> f <count>``, vertex rows, then
    facet rows (normal components, offset, vertex indices).  Floats carry 17
    significant digits, so round-trips are bit-exact."""
    out = io.StringIO()
    out.write(f"d {p.dim} v {len(p.vertices)} f {len(p.facets)}\n")
    for row in p.vertices:
        out.write(" ".join(_fmt(x) for x in row) + "\n")
    for f in p.facets:
        parts = [_fmt(x) for x in f.normal] + [_fmt(f.offset)]
        parts += [str(i) for i in f.vertex_indices]
        out.write(" ".join(parts) + "\n")
    return out.getvalue()


def polytope_from_text(text: str) -> PolytopeV:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    head = lines[0].split()
    if head[0] != "d" or head[2] != "v" or head[4] != "f":
        raise ValueError("bad polytope header")
    d, nv, nf = int(head[1]), int(head[3]), int(head[5])
    verts = np.array([[float(x) for x in lines[1 + i].split()] for i in range(nv)])
    if verts.shape != (nv, d):
        raise ValueError("vertex block has wrong shape")
    facets = []
    for i in range(nf):
        parts = lines[1 + nv + i].split()
        normal = np.array([float(x) for x in parts[:d]])
        offset = float(parts[d])
        idx = tuple(int(x) for x in parts[d + 1 :])
        facets.append(Facet(idx, normal, offset))
    return PolytopeV(verts, tuple(facets))
