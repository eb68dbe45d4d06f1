"""Maximum likelihood estimation over tent densities.

``fit_mle`` minimizes the convex surrogate

    sigma(y) = -sum_i w_i y_i + integral exp(concave majorant of (X_i, y_i))

over height vectors y, where w_i are sample multiplicities.  At the minimum
the first-order conditions force unit mass and the exponentiated majorant
is the maximum likelihood log-concave density for the sample.  The solver
is projection-free subgradient descent with Polyak-style steps against the
best objective seen so far, with the triangulation recomputed every
iteration and iterate averaging when the objective oscillates.

``truncate_renormalize`` applies the floor-and-renormalize transform
g = alpha * max(p_min, fhat) * 1_S used when relating empirical and
population likelihoods; the floored integral is computed exactly by
clipping each tent cell against the floor plane.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from itertools import combinations

import numpy as np

from .bounds import ScheduleParams
from .densities import DensityModel, TentDensity, UniformPolytope
from .errors import DegenerateInput, DimensionMismatch, RegionTooSmall
from .geometry import (
    PolytopeV,
    Triangulation,
    affine_rank,
    convex_hull,
    polytope_volume,
    triangulate_polytope,
    upper_hull_triangulation,
)
from .simplex_integrals import (
    exp_affine_gradient_batch,
    exp_affine_integral_batch,
    exp_dd_batch,
)


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-6  # subgradient norm target
    max_iterations: int = 4000
    objective_window: int = 50
    # windowed relative-objective stop; None resolves per dimension (1e-9 on
    # the line where Newton makes it cheap, 1e-6 in d >= 2 where the
    # measured gap-to-optimum at the stop is already ~1e-4 and statistically
    # negligible)
    objective_rtol: float | None = None
    initial_gap: float = 1e-3
    max_step_height: float = 15.0
    newton_budget: int = 200
    # force the subgradient finishing stage even when the damped-Newton
    # stage reports an objective stall; used for oracle-grade small fits
    polish: bool = False

    @classmethod
    def high_precision(cls) -> "SolverOptions":
        return cls(
            tolerance=1e-10,
            max_iterations=30_000,
            objective_rtol=1e-14,
            polish=True,
        )


@dataclass(frozen=True, eq=False)
class MleSolution:
    density: TentDensity
    objective: float
    iterations: int
    subgradient_norm: float
    total_mass: float
    wall_time: float
    converged: bool
    damping_events: int


@dataclass(frozen=True, eq=False)
class TruncatedDensity(DensityModel):
    """alpha * max(p_min, fhat) on S, zero outside."""

    base: TentDensity
    p_min: float
    region: PolytopeV
    alpha: float
    p_min_vol: float

    @property
    def dim(self) -> int:
        return self.base.dim

    def log_eval(self, x):
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        single = np.asarray(x).ndim == 1
        inside = self.region.contains(pts)
        base_log = self.base.log_eval(pts)
        floored = np.maximum(base_log, math.log(self.p_min))
        out = np.where(inside, math.log(self.alpha) + floored, -math.inf)
        return float(out[0]) if single else out

    @property
    def max_density(self) -> float:
        return self.alpha * max(self.p_min, self.base.max_density)

    def bounding_box(self):
        return self.region.vertices.min(axis=0), self.region.vertices.max(axis=0)

    def sample(self, rng, count):
        proposal = UniformPolytope(self.region)
        bound = math.log(self.max_density)
        out = np.empty((count, self.dim))
        filled = 0
        while filled < count:
            todo = max(count - filled, 64)
            x = proposal.sample(rng, todo)
            accept = np.log(rng.random(todo) + 1e-300) < self.log_eval(x) - bound
            taken = min(int(accept.sum()), count - filled)
            out[filled : filled + taken] = x[accept][:taken]
            filled += taken
        return out


def _merge_duplicates(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    uniq, counts = np.unique(samples, axis=0, return_counts=True)
    return uniq, counts / counts.sum()


def _cells_1d(order: np.ndarray, xs: list, ys: np.ndarray) -> np.ndarray:
    """Upper concave chain over presorted abscissas; returns cell index pairs."""
    yl = ys.tolist()
    stack: list[int] = []
    for i in range(len(xs)):
        xi = xs[i]
        yi = yl[i]
        while len(stack) >= 2:
            i1 = stack[-1]
            i0 = stack[-2]
            if (xs[i1] - xs[i0]) * (yi - yl[i0]) - (xi - xs[i0]) * (yl[i1] - yl[i0]) >= 0.0:
                stack.pop()
            else:
                break
        stack.append(i)
    act = order[np.array(stack, dtype=int)]
    return np.column_stack([act[:-1], act[1:]])


class _SurrogateProblem:
    """sigma(y), a subgradient, the sparse Hessian, and the triangulation."""

    def __init__(self, points: np.ndarray, weights: np.ndarray):
        self.points = points
        self.weights = weights
        self.d = points.shape[1]
        if self.d == 1:
            self.order = np.argsort(points[:, 0], kind="stable")
            self.xs_sorted = points[self.order, 0].tolist()

    def cells(self, y: np.ndarray) -> np.ndarray:
        if self.d == 1:
            return _cells_1d(self.order, self.xs_sorted, y[self.order])
        return upper_hull_triangulation(self.points, y).simplices

    def _cell_volumes(self, simplices: np.ndarray) -> np.ndarray:
        verts = self.points[simplices]
        edges = verts[:, 1:, :] - verts[:, :1, :]
        return np.abs(np.linalg.det(edges)) / math.factorial(self.d)

    def objective(self, y: np.ndarray) -> float:
        simplices = self.cells(y)
        vols = self._cell_volumes(simplices)
        with np.errstate(over="ignore", invalid="ignore"):
            integrals = exp_affine_integral_batch(vols, y[simplices])
        if not np.all(np.isfinite(integrals)):
            return math.inf
        return -float(self.weights @ y) + float(integrals.sum())

    def evaluate(self, y: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        simplices = self.cells(y)
        vols = self._cell_volumes(simplices)
        vals = y[simplices]
        with np.errstate(over="ignore", invalid="ignore"):
            integrals = exp_affine_integral_batch(vols, vals)
            if not np.all(np.isfinite(integrals)):
                return math.inf, -self.weights.copy(), simplices
            grads = exp_affine_gradient_batch(vols, vals)
        sigma = -float(self.weights @ y) + float(integrals.sum())
        g = -self.weights.copy()
        np.add.at(g, simplices.ravel(), grads.ravel())
        return sigma, g, simplices

    def majorant_at_points(self, y: np.ndarray, simplices: np.ndarray) -> np.ndarray:
        from .geometry import majorant_planes

        tri = Triangulation(self.points, simplices)
        grads, icepts = majorant_planes(tri, y)
        return (self.points @ grads.T + icepts).min(axis=1)

    def hessian(self, y: np.ndarray, simplices: np.ndarray):
        """Sparse Hessian of the integral term (the linear term has none).

        d2/dv_a dv_b [vol * d! * exp[vals]] = vol * d! * exp[vals, v_a, v_b].
        """
        from scipy import sparse

        vols = self._cell_volumes(simplices)
        vals = y[simplices]
        kp1 = vals.shape[1]
        fact = math.factorial(self.d)
        rows, cols, data = [], [], []
        for a in range(kp1):
            for b in range(a, kp1):
                ext = np.concatenate(
                    [vals, vals[:, a : a + 1], vals[:, b : b + 1]], axis=1
                )
                entry = vols * fact * exp_dd_batch(ext)
                rows.append(simplices[:, a])
                cols.append(simplices[:, b])
                data.append(entry)
                if a != b:
                    rows.append(simplices[:, b])
                    cols.append(simplices[:, a])
                    data.append(entry)
        m = len(y)
        return sparse.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(m, m),
        ).tocsc()


def _newton_phase(
    problem: _SurrogateProblem,
    y: np.ndarray,
    opts: SolverOptions,
) -> tuple[np.ndarray, float, np.ndarray, bool, int]:
    """Levenberg-Marquardt damped Newton on the surrogate.

    Inactive heights are first lifted onto the majorant (a free objective
    improvement that also keeps the sparse Hessian populated).  The damping
    parameter grows on rejected steps and shrinks on accepted ones, giving
    quadratic tail convergence away from kinks; a stall of three successive
    sub-tolerance improvements counts as convergence (optima at activity
    kinks never drive the selection gradient to zero).
    """
    from scipy.sparse import identity
    from scipy.sparse.linalg import spsolve

    evals = 0
    sigma, g, simplices = problem.evaluate(y)
    evals += 1
    converged = False
    strikes = 0
    lam = 1e-6
    eye = identity(len(y), format="csc")
    for _ in range(opts.newton_budget):
        maj = problem.majorant_at_points(y, simplices)
        lifted = np.maximum(y, maj)
        if float(np.max(lifted - y)) > 1e-15:
            y = lifted
            sigma, g, simplices = problem.evaluate(y)
            evals += 1
        if float(np.linalg.norm(g)) <= opts.tolerance:
            converged = True
            break
        H = problem.hessian(y, simplices)
        scale = max(float(H.diagonal().mean()), 1e-30)
        accepted = False
        for _boost in range(30):
            try:
                p = spsolve(H + lam * scale * eye, -g)
            except Exception:
                p = None
            if p is None or not np.all(np.isfinite(p)) or float(g @ p) >= 0.0:
                lam *= 10.0
                continue
            overshoot = float(np.abs(p).max())
            if overshoot > opts.max_step_height:
                p *= opts.max_step_height / overshoot
            cand = y + p
            sig_c = problem.objective(cand)
            evals += 1
            if sig_c < sigma - 1e-12 * (1.0 + abs(sigma)) or sig_c <= sigma + 0.25 * float(
                g @ p
            ):
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            break
        lam = max(lam / 3.0, 1e-12)
        y = cand
        prev_sigma = sigma
        sigma, g, simplices = problem.evaluate(y)
        evals += 1
        if prev_sigma - sigma <= opts.objective_rtol * (1.0 + abs(sigma)):
            strikes += 1
            if strikes >= 3:
                converged = True
                break
        else:
            strikes = 0
    return y, sigma, g, converged, evals


def _lbfgs_phase(
    problem: _SurrogateProblem,
    y: np.ndarray,
    opts: SolverOptions,
    window_rtol: float,
) -> tuple[np.ndarray, float, np.ndarray, bool, int]:
    """Continuous quasi-Newton descent; the windowed relative-change stop is
    mapped onto the per-step relative-reduction tolerance (window tolerance
    spread over the window length)."""
    from scipy.optimize import minimize

    evals = 0

    def fun(yv: np.ndarray) -> tuple[float, np.ndarray]:
        nonlocal evals
        evals += 1
        s, grad, _ = problem.evaluate(yv)
        return s, grad

    res = minimize(
        fun,
        y,
        jac=True,
        method="L-BFGS-B",
        options={
            "maxiter": opts.max_iterations,
            "maxfun": 3 * opts.max_iterations,
            "ftol": max(2.3e-16, window_rtol / opts.objective_window),
            "gtol": 0.3 * opts.tolerance / math.sqrt(len(y)),
            "maxcor": 20,
        },
    )
    sigma, g, _ = problem.evaluate(res.x)
    evals += 1
    norm = float(np.linalg.norm(g))
    msg = str(res.message)
    converged = norm <= opts.tolerance or (
        bool(res.success) and ("REL_REDUCTION" in msg or "CONVERGENCE" in msg)
    )
    return res.x, sigma, g, converged, evals


def _polyak_phase(
    problem: _SurrogateProblem,
    y: np.ndarray,
    sigma: float,
    g: np.ndarray,
    opts: SolverOptions,
) -> tuple[float, np.ndarray, bool, int, int]:
    """Subgradient finishing stage: Polyak steps against the best objective
    so far with an adaptive gap, iterate averaging on oscillation, and
    termination on a tiny relative-objective change over a window."""
    best_sigma, best_y = sigma, y.copy()
    prev_y = y.copy()
    gap = opts.initial_gap
    window_best = sigma
    damping = 0
    converged = False
    it = 0
    history: list[float] = [sigma]
    for it in range(1, opts.max_iterations + 1):
        norm2 = float(g @ g)
        if math.sqrt(norm2) <= opts.tolerance:
            converged = True
            break
        step = (sigma - (best_sigma - gap)) / norm2
        delta = step * g
        overshoot = float(np.abs(delta).max())
        if overshoot > opts.max_step_height:
            delta *= opts.max_step_height / overshoot
        y = y - delta
        sigma_new, g_new, _ = problem.evaluate(y)
        if sigma_new > sigma:
            # objective oscillation: average the last two iterates and back
            # off the gap (the step target was too optimistic)
            damping += 1
            y = 0.5 * (y + prev_y)
            sigma_new, g_new, _ = problem.evaluate(y)
            gap = max(gap * 0.7, 1e-16)
        elif sigma_new < best_sigma:
            gap = min(gap * 1.05, opts.initial_gap)
        prev_y = y.copy()
        sigma, g = sigma_new, g_new
        if sigma < best_sigma:
            best_sigma, best_y = sigma, y.copy()
        history.append(best_sigma)
        # shrink the gap when progress stalls relative to it
        if it % 25 == 0:
            if window_best - best_sigma < 0.3 * gap:
                gap = max(gap * 0.5, 1e-16)
            window_best = best_sigma
        w = opts.objective_window
        if len(history) > w:
            stale_tol = opts.objective_rtol * (1.0 + abs(best_sigma))
            if history[-w - 1] - best_sigma <= stale_tol:
                if gap > stale_tol:
                    # accuracy tracks the gap; force it down before declaring
                    # the stall a convergence
                    gap = max(gap * 0.25, 1e-16)
                    history = [best_sigma]
                    window_best = best_sigma
                else:
                    converged = True
                    break
    return best_sigma, best_y, converged, it, damping


def fit_mle(samples, options: SolverOptions | None = None) -> MleSolution:
    """Fit the log-concave MLE; returns a normalized tent density.

    Requires at least d+1 affinely spanning sample points.  The surrogate is
    C1 away from activity boundaries, so a quasi-Newton descent does the
    bulk of the work; Polyak-style subgradient steps against the best seen
    objective finish off optima that sit on a kink.  On hitting the
    iteration cap the best iterate is returned with ``converged=False``.
    """
    t_start = time.perf_counter()
    opts = options or SolverOptions()
    pts = np.asarray(samples, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n, d = pts.shape
    if n < d + 1:
        raise DegenerateInput(f"need at least {d + 1} samples in dimension {d}")
    if affine_rank(pts) < d:
        raise DegenerateInput("samples do not span the ambient dimension")
    points, weights = _merge_duplicates(pts)

    # moment-matched Gaussian initialization, strictly feasible and
    # scale-aware
    mean = weights @ points
    centered = points - mean
    cov = (weights[:, None] * centered).T @ centered
    cov += np.eye(d) * (1e-9 * max(1.0, float(np.trace(cov))))
    chol = np.linalg.cholesky(cov)
    sol = np.linalg.solve(chol, centered.T)
    y = -0.5 * (d * math.log(2 * math.pi) + 2 * np.log(np.diag(chol)).sum() + (sol**2).sum(axis=0))

    if opts.objective_rtol is None:
        opts = replace(opts, objective_rtol=1e-9 if d == 1 else 1e-6)
    problem = _SurrogateProblem(points, weights)
    if d == 1:
        # flips are rare on the line: damped Newton converges quadratically
        y, sigma, g, converged, evals = _newton_phase(problem, y, opts)
    else:
        # flip boundaries dominate in d >= 2: continuous quasi-Newton with
        # the windowed relative-objective-change stop
        y, sigma, g, converged, evals = _lbfgs_phase(
            problem, y, opts, window_rtol=opts.objective_rtol
        )
    best_sigma, best_y = sigma, y.copy()
    damping = 0
    it = 0
    if not converged or opts.polish:
        best_sigma, best_y, polyak_conv, it, damping = _polyak_phase(
            problem, y, sigma, g, opts
        )
        converged = converged or polyak_conv

    # normalize to unit mass and rebuild the tent at the best iterate
    tri = Triangulation(points, problem.cells(best_y))
    vols = tri.volumes()
    mass = float(exp_affine_integral_batch(vols, best_y[tri.simplices]).sum())
    y_final = best_y - math.log(mass)
    support = convex_hull(points)
    cells = Triangulation(points, problem.cells(y_final))
    tent = TentDensity(support, points, y_final, cells, 0.0)
    total_mass = tent.total_mass()
    sigma_fin, g_fin, _ = problem.evaluate(y_final)
    objective = float(weights @ y_final)
    return MleSolution(
        density=tent,
        objective=objective,
        iterations=evals + it,
        subgradient_norm=float(np.linalg.norm(g_fin)),
        total_mass=total_mass,
        wall_time=time.perf_counter() - t_start,
        converged=converged,
        damping_events=damping,
    )


def empirical_log_likelihood(model: DensityModel, samples) -> float:
    """Mean log density over the samples; -inf if any lies outside support."""
    pts = np.asarray(samples, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    vals = np.asarray(model.log_eval(pts), dtype=float)
    return float(np.mean(vals))


def _clip_simplex_above(
    verts: np.ndarray, grad: np.ndarray, icept: float, t: float
) -> list[np.ndarray]:
    """Sub-simplices of {x in simplex : grad.x + icept >= t}."""
    vals = verts @ grad + icept
    if np.all(vals >= t):
        return [verts]
    if np.all(vals <= t):
        return []
    pts = [verts[i] for i in range(len(verts)) if vals[i] >= t]
    for i, j in combinations(range(len(verts)), 2):
        if (vals[i] - t) * (vals[j] - t) < 0.0:
            lam = (t - vals[i]) / (vals[j] - vals[i])
            pts.append(verts[i] + lam * (verts[j] - verts[i]))
    arr = np.array(pts)
    try:
        piece = convex_hull(arr)
    except DegenerateInput:
        return []
    tri = triangulate_polytope(piece)
    return [tri.points[s] for s in tri.simplices]


def truncate_renormalize(
    sol: MleSolution, p_min: float, region: PolytopeV
) -> TruncatedDensity:
    """Floor the fitted density at ``p_min`` on ``region`` and renormalize.

    ``region`` must contain the support of the fit.  The normalizer alpha
    satisfies alpha <= 1; the slack term p_min * vol(region) is reported on
    the result.
    """
    if p_min <= 0.0:
        raise DegenerateInput("p_min must be positive")
    tent = sol.density
    if region.dim != tent.dim:
        raise DimensionMismatch("region dimension does not match fit")
    if not bool(np.all(region.contains(tent.support.vertices))):
        raise RegionTooSmall("region does not contain the support of the fit")
    t = math.log(p_min)
    vol_region = polytope_volume(region)
    vol_support = polytope_volume(tent.support)
    total = p_min * (vol_region - vol_support)
    from .geometry import majorant_planes

    grads, icepts = majorant_planes(tent.cells, tent.heights)
    for c, simplex in enumerate(tent.cells.simplices):
        verts = tent.cells.points[simplex]
        edges = verts[1:] - verts[0]
        vol_cell = abs(float(np.linalg.det(edges))) / math.factorial(tent.dim)
        grad = grads[c]
        icept = icepts[c] - tent.log_normalizer
        pieces = _clip_simplex_above(verts, grad, icept, t)
        vol_above = 0.0
        for piece in pieces:
            pvals = piece @ grad + icept
            pvols = np.array([abs(float(np.linalg.det(piece[1:] - piece[0])))])
            pvols = pvols / math.factorial(tent.dim)
            total += float(exp_affine_integral_batch(pvols, pvals[None, :])[0])
            vol_above += float(pvols[0])
        total += p_min * max(vol_cell - vol_above, 0.0)
    alpha = min(1.0, 1.0 / total)
    return TruncatedDensity(
        base=tent,
        p_min=p_min,
        region=region,
        alpha=alpha,
        p_min_vol=p_min * vol_region,
    )


def max_value_guard(
    sol: MleSolution,
    schedule: ScheduleParams,
    ref_max_density: float | None = None,
    p_min: float | None = None,
) -> dict:
    """Check ln(max fitted density / p_min) against the 4z threshold.

    ``p_min`` defaults to the schedule floor ratio applied to
    ``ref_max_density`` (or, absent that, to the fitted maximum itself).
    """
    m_hat = sol.density.max_density
    if p_min is None:
        base = ref_max_density if ref_max_density is not None else m_hat
        p_min = base * schedule.density_floor_ratio
    ln_ratio = math.log(m_hat) - math.log(p_min)
    threshold = 4.0 * schedule.tail_log_factor
    return {
        "ln_ratio": ln_ratio,
        "threshold": threshold,
        "violated": ln_ratio >= threshold,
    }
