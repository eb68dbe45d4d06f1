"""Exact integrals of exp(affine function) over simplices.

For a simplex S with vertices p_0..p_d and an affine function taking values
v_0..v_d at the vertices, the Hermite-Genocchi identity gives

    integral_S exp(affine) dx = d! * vol(S) * exp[v_0, ..., v_d]

where exp[...] is the divided difference of exp at the vertex values.
Divided differences of exp are evaluated with a cancellation-safe scheme:
any contiguous sorted block of values with spread below ``SERIES_THRESHOLD``
is evaluated by a truncated symmetric-function series, wider blocks by the
quotient recurrence.  The series term ratio is bounded by (W/2)^j / j!
independent of the node count, so ``SERIES_ORDER`` terms suffice for any
block narrower than the threshold.  Repeated values are handled naturally
(ties fall into the series branch), which also yields exact gradients:
d/dv_i of the integral appends a repeated node v_i.

``simplex_quadrature`` is an independent order-escalating Gauss-Legendre
check used by the test suite; it shares no code with the closed form.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DegenerateSimplex

# Blocks narrower than this use the series; at width 1.0 the quotient
# recurrence no longer suffers compounding cancellation, and 24 series terms
# bound the truncation by 0.5^24/24! relative to the leading term.
SERIES_THRESHOLD = 1.0
SERIES_ORDER = 24

_FACTORIALS = np.array([math.factorial(k) for k in range(SERIES_ORDER + 8)], dtype=float)


def simplex_volume(vertices: np.ndarray) -> float:
    """Volume of the simplex spanned by the rows of ``vertices`` ((d+1, d))."""
    verts = np.asarray(vertices, dtype=float)
    d = verts.shape[1]
    if verts.shape[0] != d + 1:
        raise DegenerateSimplex(f"need {d + 1} vertices in dimension {d}, got {verts.shape[0]}")
    edges = verts[1:] - verts[0]
    return abs(float(np.linalg.det(edges))) / math.factorial(d)


def exp_dd_batch(values: np.ndarray) -> np.ndarray:
    """Row-wise divided differences of exp; ``values`` has shape (m, k+1).

    Rows may contain repeated values.  Values must be finite.
    """
    v = np.sort(np.asarray(values, dtype=float), axis=1)
    if v.ndim != 2:
        raise ValueError("values must be a 2-d array")
    m, kp1 = v.shape
    k = kp1 - 1
    shift = v.mean(axis=1)
    c = v - shift[:, None]
    if k == 0:
        return np.exp(shift)
    table = np.exp(c)
    for length in range(1, kp1):
        new = np.empty((m, kp1 - length))
        for i in range(kp1 - length):
            j = i + length
            block = c[:, i : j + 1]
            spread = block[:, -1] - block[:, 0]
            tight = spread < SERIES_THRESHOLD
            denom = np.where(tight, 1.0, spread)
            new[:, i] = (table[:, i + 1] - table[:, i]) / denom
            if np.any(tight):
                rows = np.nonzero(tight)[0]
                sub = block[rows]
                bmean = sub.mean(axis=1)
                centered = sub - bmean[:, None]
                # complete homogeneous symmetric polynomials h_j via the
                # node-by-node recurrence; h[j-1] is already updated for the
                # current node when h[j] uses it
                h = np.zeros((len(rows), SERIES_ORDER + 1))
                h[:, 0] = 1.0
                for col in range(length + 1):
                    cc = centered[:, col]
                    for jj in range(1, SERIES_ORDER + 1):
                        h[:, jj] += cc * h[:, jj - 1]
                series = h @ (1.0 / _FACTORIALS[length : length + SERIES_ORDER + 1])
                new[rows, i] = series * np.exp(bmean)
        table = new
    return table[:, 0] * np.exp(shift)


def exp_divided_difference(values: np.ndarray) -> float:
    """Divided difference of exp at the given nodes (repeats allowed)."""
    vals = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("divided difference requires finite values")
    return float(exp_dd_batch(vals[None, :])[0])


def exp_affine_integral(vertices: np.ndarray, values: np.ndarray) -> float:
    """Exact integral of exp(affine interpolant of values) over a simplex."""
    verts = np.asarray(vertices, dtype=float)
    vals = np.asarray(values, dtype=float)
    d = verts.shape[1]
    vol = simplex_volume(verts)
    if vol <= 0.0:
        raise DegenerateSimplex("simplex has zero volume")
    if not np.all(np.isfinite(vals)):
        raise ValueError("vertex values must be finite")
    return vol * math.factorial(d) * exp_divided_difference(vals)


def exp_affine_integral_batch(volumes: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Integrals for a batch of simplices; ``values`` has shape (m, d+1)."""
    vols = np.asarray(volumes, dtype=float)
    d = values.shape[1] - 1
    return vols * math.factorial(d) * exp_dd_batch(values)


def exp_affine_gradient_batch(volumes: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Row-wise gradients of the batch integral w.r.t. each vertex value.

    d/dv_i [vol * d! * exp[v_0..v_d]] = vol * d! * exp[v_0..v_d, v_i].
    """
    vals = np.asarray(values, dtype=float)
    vols = np.asarray(volumes, dtype=float)
    m, kp1 = vals.shape
    d = kp1 - 1
    grad = np.empty((m, kp1))
    for i in range(kp1):
        extended = np.concatenate([vals, vals[:, i : i + 1]], axis=1)
        grad[:, i] = vols * math.factorial(d) * exp_dd_batch(extended)
    return grad


# ---------------------------------------------------------------------------
# Independent quadrature check
# ---------------------------------------------------------------------------


def _duffy_points(d: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre nodes/weights mapped onto the standard simplex.

    Duffy map: lam_i = u_i * prod_{j<i}(1 - u_j), with jacobian
    prod_{j<d-1} (1 - u_j)^(d-1-j); the map is smooth, so Gauss-Legendre
    converges spectrally.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    grids = np.meshgrid(*([x] * d), indexing="ij")
    wgrids = np.meshgrid(*([w] * d), indexing="ij")
    u = np.stack([g.ravel() for g in grids], axis=1)
    weight = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    lam = np.empty_like(u)
    remaining = np.ones(u.shape[0])
    for axis in range(d):
        lam[:, axis] = u[:, axis] * remaining
        remaining = remaining * (1.0 - u[:, axis])
    jac = np.ones(u.shape[0])
    for axis in range(d - 1):
        jac *= (1.0 - u[:, axis]) ** (d - 1 - axis)
    return lam, weight * jac


def simplex_quadrature(
    vertices: np.ndarray,
    values: np.ndarray,
    rel_tol: float = 1e-13,
    orders: tuple[int, ...] | None = None,
) -> float:
    """Order-escalating Gauss-Legendre quadrature of exp(affine) over a simplex.

    Escalates through tensor orders until two successive estimates agree to
    ``rel_tol``; serves as an independent oracle for the closed form.
    Tensor grids grow as order**d, so defaults shrink with dimension.
    """
    verts = np.asarray(vertices, dtype=float)
    vals = np.asarray(values, dtype=float)
    d = verts.shape[1]
    if orders is None:
        orders = {1: (16, 24, 32, 48), 2: (16, 24, 32, 48), 3: (12, 16, 24, 32)}.get(
            d, (8, 12, 16, 20)
        )
    edges = verts[1:] - verts[0]
    detE = abs(float(np.linalg.det(edges)))
    if detE == 0.0:
        raise DegenerateSimplex("simplex has zero volume")
    shift = float(np.max(vals))
    est = math.nan
    prev = None
    for order in orders:
        lam, w = _duffy_points(d, order)
        exponent = vals[0] + lam @ (vals[1:] - vals[0]) - shift
        est = detE * math.exp(shift) * float(np.dot(w, np.exp(exponent)))
        if prev is not None and abs(est - prev) <= rel_tol * abs(est):
            return est
        prev = est
    return est
