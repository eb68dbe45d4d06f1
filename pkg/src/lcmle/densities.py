"""Log-concave density models: reference families plus tent densities.

Every model exposes vectorized ``log_eval``, exact ``sample``, its maximum
value ``max_density``, and a bounding box holding essentially all mass.
One-dimensional models additionally expose a closed-form ``cdf`` used by
exact discrepancy scans.  Superlevel-set volumes are closed form for the
reference families and polytope-exact for tents in d <= 3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.special import gammaln, ndtr

from .errors import (
    DegenerateInput,
    DimensionMismatch,
    UnsupportedDensity,
)
from .geometry import (
    PolytopeV,
    Triangulation,
    convex_hull,
    majorant_evaluate,
    majorant_planes,
    polygon_contains,
    polytope_volume,
    triangulate_polytope,
    upper_hull_triangulation,
)
from .simplex_integrals import exp_affine_integral_batch

MASS_RTOL = 1e-6


def _as_batch(x, dim: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.shape[1] != dim:
        raise DimensionMismatch(f"points have dimension {arr.shape[1]}, model has {dim}")
    return arr, single


class DensityModel:
    """Interface shared by all density families."""

    dim: int

    def log_eval(self, x) -> np.ndarray | float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        raise NotImplementedError

    @property
    def max_density(self) -> float:
        raise NotImplementedError

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def cdf(self, t: float) -> float:
        raise UnsupportedDensity(f"{type(self).__name__} has no closed-form cdf")

    def density(self, x) -> np.ndarray | float:
        out = self.log_eval(x)
        return np.exp(out) if isinstance(out, np.ndarray) else math.exp(out)


@dataclass(frozen=True, eq=False)
class Gaussian(DensityModel):
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (len(mean), len(mean)):
            raise DimensionMismatch("covariance shape does not match mean")
        if not np.allclose(cov, cov.T):
            raise DegenerateInput("covariance must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise DegenerateInput("covariance must be positive definite") from exc
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "_logdet", 2.0 * float(np.sum(np.log(np.diag(chol)))))

    @property
    def dim(self) -> int:
        return len(self.mean)

    def log_eval(self, x):
        pts, single = _as_batch(x, self.dim)
        sol = np.linalg.solve(self._chol, (pts - self.mean).T)
        quad = np.sum(sol**2, axis=0)
        out = -0.5 * (self.dim * math.log(2.0 * math.pi) + self._logdet + quad)
        return float(out[0]) if single else out

    def sample(self, rng, count):
        z = rng.standard_normal(size=(count, self.dim))
        return self.mean + z @ self._chol.T

    @property
    def max_density(self) -> float:
        return math.exp(-0.5 * (self.dim * math.log(2.0 * math.pi) + self._logdet))

    def bounding_box(self):
        sd = np.sqrt(np.diag(self.cov))
        return self.mean - 10.0 * sd, self.mean + 10.0 * sd

    def cdf(self, t: float) -> float:
        if self.dim != 1:
            raise UnsupportedDensity("cdf is one-dimensional only")
        return float(ndtr((t - self.mean[0]) / math.sqrt(self.cov[0, 0])))

    def superlevel_volume(self, y: float) -> float:
        if y > self.max_density:
            return 0.0
        if y <= 0.0:
            return math.inf
        w = math.log(self.max_density / y)
        d = self.dim
        unit_ball = math.exp(0.5 * d * math.log(math.pi) - gammaln(0.5 * d + 1))
        return unit_ball * (2.0 * w) ** (0.5 * d) * math.exp(0.5 * self._logdet)


@dataclass(frozen=True, eq=False)
class UniformPolytope(DensityModel):
    polytope: PolytopeV

    def __post_init__(self):
        vol = polytope_volume(self.polytope)
        if vol <= 0.0:
            raise DegenerateInput("polytope has zero volume")
        object.__setattr__(self, "_volume", vol)
        object.__setattr__(self, "_tri", None)

    @property
    def dim(self) -> int:
        return self.polytope.dim

    @property
    def volume(self) -> float:
        return self._volume

    def log_eval(self, x):
        pts, single = _as_batch(x, self.dim)
        inside = self.polytope.contains(pts)
        out = np.where(inside, -math.log(self._volume), -math.inf)
        return float(out[0]) if single else out

    def _triangulation(self) -> Triangulation:
        if self._tri is None:
            object.__setattr__(self, "_tri", triangulate_polytope(self.polytope))
        return self._tri

    def sample(self, rng, count):
        tri = self._triangulation()
        vols = tri.volumes()
        probs = vols / vols.sum()
        cells = rng.choice(len(probs), size=count, p=probs)
        w = rng.standard_exponential(size=(count, self.dim + 1))
        w /= w.sum(axis=1, keepdims=True)
        verts = tri.points[tri.simplices[cells]]  # (count, d+1, d)
        return np.einsum("nk,nkd->nd", w, verts)

    @property
    def max_density(self) -> float:
        return 1.0 / self._volume

    def bounding_box(self):
        return self.polytope.vertices.min(axis=0), self.polytope.vertices.max(axis=0)

    def cdf(self, t: float) -> float:
        if self.dim != 1:
            raise UnsupportedDensity("cdf is one-dimensional only")
        lo = float(self.polytope.vertices.min())
        hi = float(self.polytope.vertices.max())
        return float(np.clip((t - lo) / (hi - lo), 0.0, 1.0))

    def superlevel_volume(self, y: float) -> float:
        return self._volume if y <= self.max_density else 0.0


@dataclass(frozen=True, eq=False)
class ProductLaplace(DensityModel):
    scales: np.ndarray

    def __post_init__(self):
        scales = np.atleast_1d(np.asarray(self.scales, dtype=float))
        if np.any(scales <= 0.0):
            raise DegenerateInput("scales must be positive")
        object.__setattr__(self, "scales", scales)

    @property
    def dim(self) -> int:
        return len(self.scales)

    def log_eval(self, x):
        pts, single = _as_batch(x, self.dim)
        out = -np.sum(np.abs(pts) / self.scales, axis=1) - float(
            np.sum(np.log(2.0 * self.scales))
        )
        return float(out[0]) if single else out

    def sample(self, rng, count):
        return rng.laplace(loc=0.0, scale=self.scales, size=(count, self.dim))

    @property
    def max_density(self) -> float:
        return math.exp(-float(np.sum(np.log(2.0 * self.scales))))

    def bounding_box(self):
        width = 40.0 * self.scales
        return -width, width

    def cdf(self, t: float) -> float:
        if self.dim != 1:
            raise UnsupportedDensity("cdf is one-dimensional only")
        b = self.scales[0]
        if t < 0:
            return 0.5 * math.exp(t / b)
        return 1.0 - 0.5 * math.exp(-t / b)

    def superlevel_volume(self, y: float) -> float:
        if y > self.max_density:
            return 0.0
        w = math.log(self.max_density / y)
        d = self.dim
        return (2.0 * w) ** d / math.factorial(d) * float(np.prod(self.scales))


@dataclass(frozen=True, eq=False)
class TentDensity(DensityModel):
    """Piecewise log-linear density exp(concave majorant - log_normalizer)
    supported on the hull of its base points."""

    support: PolytopeV
    base_points: np.ndarray
    heights: np.ndarray
    cells: Triangulation
    log_normalizer: float = 0.0

    @classmethod
    def from_points(cls, points, heights, normalize: bool = True) -> "TentDensity":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        y = np.asarray(heights, dtype=float)
        support = convex_hull(pts)
        cells = upper_hull_triangulation(pts, y)
        tent = cls(support, pts, y, cells, 0.0)
        if normalize:
            mass = tent.total_mass()
            tent = cls(support, pts, y, cells, math.log(mass))
        return tent

    @property
    def dim(self) -> int:
        return self.base_points.shape[1]

    def _planes(self):
        if not hasattr(self, "_planes_cache"):
            grads, icepts = majorant_planes(self.cells, self.heights)
            object.__setattr__(self, "_planes_cache", (grads, icepts))
        return self._planes_cache

    def cell_integrals(self) -> np.ndarray:
        vols = self.cells.volumes()
        vals = self.heights[self.cells.simplices] - self.log_normalizer
        return exp_affine_integral_batch(vols, vals)

    def total_mass(self) -> float:
        return float(self.cell_integrals().sum())

    def log_eval(self, x):
        pts, single = _as_batch(x, self.dim)
        inside = self.support.contains(pts)
        out = np.full(len(pts), -math.inf)
        if np.any(inside):
            grads, icepts = self._planes()
            sel = pts[inside]
            vals = np.empty(len(sel))
            chunk = 65536
            for lo in range(0, len(sel), chunk):
                block = sel[lo : lo + chunk]
                vals[lo : lo + chunk] = (block @ grads.T + icepts).min(axis=1)
            out[inside] = vals - self.log_normalizer
        return float(out[0]) if single else out

    @property
    def max_density(self) -> float:
        active = np.unique(self.cells.simplices)
        return math.exp(float(self.heights[active].max()) - self.log_normalizer)

    def bounding_box(self):
        return self.base_points.min(axis=0), self.base_points.max(axis=0)

    def _sampling_leaves(self):
        if hasattr(self, "_leaves_cache"):
            return self._leaves_cache
        verts = [self.cells.points[s] for s in self.cells.simplices]
        hts = [self.heights[s] - self.log_normalizer for s in self.cells.simplices]
        leaves = []
        stack = list(zip(verts, hts, [0] * len(verts)))
        while stack:
            V, h, depth = stack.pop()
            vols = np.array([_simplex_vol(V)])
            integral = float(exp_affine_integral_batch(vols, h[None, :])[0])
            bound = vols[0] * math.exp(float(h.max()))
            if integral <= 0.0:
                continue
            if depth < 40 and integral / bound < 0.01:
                # acceptance under 1%: bisect the longest edge
                pairs = list(combinations(range(len(h)), 2))
                lengths = [np.linalg.norm(V[a] - V[b]) for a, b in pairs]
                a, b = pairs[int(np.argmax(lengths))]
                mid = 0.5 * (V[a] + V[b])
                hmid = 0.5 * (h[a] + h[b])
                for drop in (a, b):
                    V2 = V.copy()
                    h2 = h.copy()
                    V2[drop] = mid
                    h2[drop] = hmid
                    stack.append((V2, h2, depth + 1))
                continue
            leaves.append((V, h, integral, float(h.max())))
        arr_v = np.array([l[0] for l in leaves])
        arr_h = np.array([l[1] for l in leaves])
        arr_i = np.array([l[2] for l in leaves])
        arr_m = np.array([l[3] for l in leaves])
        object.__setattr__(self, "_leaves_cache", (arr_v, arr_h, arr_i, arr_m))
        return self._leaves_cache

    def sample(self, rng, count):
        verts, hts, integrals, hmax = self._sampling_leaves()
        # proposals must follow the ENVELOPE mass per leaf (vol * e^hmax);
        # acceptance exp(h - hmax) then yields the density itself
        vols = np.abs(np.linalg.det(verts[:, 1:, :] - verts[:, :1, :])) / math.factorial(self.dim)
        envelope = vols * np.exp(hmax)
        probs = envelope / envelope.sum()
        out = np.empty((count, self.dim))
        filled = 0
        while filled < count:
            todo = count - filled
            cells = rng.choice(len(probs), size=todo, p=probs)
            w = rng.standard_exponential(size=(todo, self.dim + 1))
            w /= w.sum(axis=1, keepdims=True)
            x = np.einsum("nk,nkd->nd", w, verts[cells])
            h = np.einsum("nk,nk->n", w, hts[cells])
            accept = rng.random(todo) < np.exp(h - hmax[cells])
            taken = int(accept.sum())
            out[filled : filled + taken] = x[accept]
            filled += taken
        return out

    def cdf(self, t: float) -> float:
        if self.dim != 1:
            raise UnsupportedDensity("cdf is one-dimensional only")
        total = 0.0
        for simplex in self.cells.simplices:
            i, j = sorted(simplex, key=lambda k: self.cells.points[k, 0])
            a, b = float(self.cells.points[i, 0]), float(self.cells.points[j, 0])
            ha = float(self.heights[i]) - self.log_normalizer
            hb = float(self.heights[j]) - self.log_normalizer
            if t >= b:
                vols = np.array([b - a])
                vals = np.array([[ha, hb]])
            elif t > a:
                ht = ha + (hb - ha) * (t - a) / (b - a)
                vols = np.array([t - a])
                vals = np.array([[ha, ht]])
            else:
                continue
            total += float(exp_affine_integral_batch(vols, vals)[0])
        return min(total, 1.0)

    def cdf_1d(self, t: float) -> float:
        return self.cdf(t)

    def superlevel_volume(self, y: float) -> float:
        if y <= 0.0:
            return math.inf
        t = math.log(y) + self.log_normalizer
        idx = np.unique(self.cells.simplices)
        vals = self.heights
        pts: list[np.ndarray] = [self.cells.points[i] for i in idx if vals[i] >= t - 1e-12]
        for simplex in self.cells.simplices:
            for a, b in combinations(simplex, 2):
                ha, hb = vals[a], vals[b]
                if (ha - t) * (hb - t) < 0.0:
                    lam = (t - ha) / (hb - ha)
                    pts.append(self.cells.points[a] + lam * (self.cells.points[b] - self.cells.points[a]))
        if len(pts) < self.dim + 1:
            return 0.0
        try:
            return polytope_volume(convex_hull(np.array(pts)))
        except DegenerateInput:
            return 0.0


def _simplex_vol(V: np.ndarray) -> float:
    d = V.shape[1]
    return abs(float(np.linalg.det(V[1:] - V[0]))) / math.factorial(d)


class CircleUniform:
    """Uniform measure on the unit circle (a degenerate, non-log-concave
    input accepted only by the convex discrepancy machinery)."""

    dim = 2

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        theta = rng.uniform(0.0, 2.0 * math.pi, size=count)
        return np.column_stack([np.cos(theta), np.sin(theta)])

    def polygon_measure(self, polygon_vertices: np.ndarray, resolution: int = 200_000) -> float:
        """Arc measure of {theta : (cos, sin) in polygon}, on a fine grid.

        Strictly-inside test (negative tolerance): grid points grazing a
        chord or vertex of an inscribed polygon do not count, so hulls of
        finitely many circle points measure exactly zero.
        """
        theta = (np.arange(resolution) + 0.5) * (2.0 * math.pi / resolution)
        pts = np.column_stack([np.cos(theta), np.sin(theta)])
        inside = polygon_contains(polygon_vertices, pts, tol=-1e-9)
        return float(inside.mean())


@dataclass(frozen=True, eq=False)
class LevelSetQuery:
    density: DensityModel
    threshold: float


def superlevel_volume(query: LevelSetQuery) -> float:
    """Volume of {x : f(x) >= y}; closed form per family, polytope-exact
    for tents in d <= 3 (Monte Carlo fallback above)."""
    model, y = query.density, query.threshold
    if y < 0.0:
        raise DegenerateInput("threshold must be nonnegative")
    if isinstance(model, TentDensity) and model.dim > 3:
        return _superlevel_volume_mc(model, y)
    fn = getattr(model, "superlevel_volume", None)
    if fn is None:
        raise UnsupportedDensity(f"no level-set volume for {type(model).__name__}")
    return fn(y)


def _superlevel_volume_mc(model: TentDensity, y: float, draws: int = 200_000) -> float:
    rng = np.random.Generator(np.random.Philox(20_000_101))
    lo, hi = model.bounding_box()
    box = rng.uniform(lo, hi, size=(draws, model.dim))
    inside = model.density(box) >= y
    vol_box = float(np.prod(hi - lo))
    return vol_box * float(np.mean(inside))


def mass_monte_carlo(
    model: DensityModel, rng: np.random.Generator, draws: int = 100_000
) -> tuple[float, float]:
    """Monte Carlo estimate of the total mass, with standard error."""
    lo, hi = model.bounding_box()
    pts = rng.uniform(lo, hi, size=(draws, model.dim))
    vals = np.asarray(model.density(pts), dtype=float)
    vol = float(np.prod(hi - lo))
    est = vol * float(vals.mean())
    stderr = vol * float(vals.std(ddof=1)) / math.sqrt(draws)
    return est, stderr
