import math

import numpy as np
import pytest
from scipy import integrate

from lcmle.errors import DegenerateSimplex
from lcmle.simplex_integrals import (
    SERIES_THRESHOLD,
    exp_affine_gradient_batch,
    exp_affine_integral,
    exp_affine_integral_batch,
    exp_divided_difference,
    simplex_quadrature,
    simplex_volume,
)

UNIT_INTERVAL = np.array([[0.0], [1.0]])


def test_constant_values_give_volume_times_exp():
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert exp_affine_integral(UNIT_INTERVAL, [0.0, 0.0]) == pytest.approx(1.0, rel=1e-14)
    assert exp_affine_integral(tri, [2.0, 2.0, 2.0]) == pytest.approx(0.5 * math.e**2, rel=1e-13)


def test_unit_interval_zero_one():
    got = exp_affine_integral(UNIT_INTERVAL, [0.0, 1.0])
    assert got == pytest.approx(math.e - 1.0, rel=1e-14)


def test_near_degenerate_values_no_cancellation():
    got = exp_affine_integral(UNIT_INTERVAL, [0.0, 1e-9])
    # Taylor oracle: integral of e^(a x) = 1 + a/2 + a^2/6 + ...
    a = 1e-9
    expected = 1.0 + a / 2.0 + a * a / 6.0
    assert got == pytest.approx(expected, rel=1e-15)


def test_matches_scipy_quad_1d():
    rng = np.random.default_rng(7)
    for _ in range(20):
        lo, hi = np.sort(rng.normal(scale=2.0, size=2))
        if hi - lo < 1e-3:
            continue
        va, vb = rng.normal(scale=3.0, size=2)
        got = exp_affine_integral(np.array([[lo], [hi]]), [va, vb])
        f = lambda x: math.exp(va + (vb - va) * (x - lo) / (hi - lo))
        ref, err = integrate.quad(f, lo, hi, epsabs=1e-13, epsrel=1e-13)
        assert got == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_matches_gauss_legendre_random(d):
    rng = np.random.default_rng(100 + d)
    for _ in range(60):
        verts = rng.normal(size=(d + 1, d))
        if simplex_volume(verts) < 1e-4:
            continue
        spread = rng.choice([1e-10, 1e-6, 1e-3, 0.5, 2.0, 20.0])
        vals = rng.normal(scale=spread, size=d + 1) + rng.normal()
        got = exp_affine_integral(verts, vals)
        ref = simplex_quadrature(verts, vals)
        assert got == pytest.approx(ref, rel=1e-10)


def test_branch_agreement_at_threshold():
    # the series branch agrees with a direct quotient evaluation of the same
    # nodes at the switch width, where the quotient has no cancellation issue
    rng = np.random.default_rng(11)
    for _ in range(200):
        base = rng.normal()
        w = SERIES_THRESHOLD * (1 - 1e-9)
        mid = base + w * rng.uniform(0.3, 0.7)
        nodes = np.array([base, mid, base + w])
        series_side = exp_divided_difference(nodes)
        first = [
            (math.exp(nodes[i + 1]) - math.exp(nodes[i])) / (nodes[i + 1] - nodes[i])
            for i in range(2)
        ]
        quotient_side = (first[1] - first[0]) / (nodes[2] - nodes[0])
        assert series_side == pytest.approx(quotient_side, rel=1e-12)


def test_repeated_nodes_supported():
    a = exp_divided_difference([0.3, 0.3])
    assert a == pytest.approx(math.exp(0.3), rel=1e-14)
    b = exp_divided_difference([0.0, 0.0, 1.0])
    # exp[0,0,1] = (exp[0,1] - exp[0,0]) / 1 = (e - 1) - 1
    assert b == pytest.approx(math.e - 2.0, rel=1e-13)


def test_batch_matches_scalar():
    rng = np.random.default_rng(3)
    vals = rng.normal(size=(40, 4), scale=2.0)
    vols = np.abs(rng.normal(size=40)) + 0.05
    batch = exp_affine_integral_batch(vols, vals)
    for i in range(40):
        scalar = vols[i] * math.factorial(3) * exp_divided_difference(vals[i])
        assert batch[i] == pytest.approx(scalar, rel=1e-14)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    for d in (1, 2, 3):
        verts = rng.normal(size=(d + 1, d))
        if simplex_volume(verts) < 1e-3:
            verts = np.eye(d + 1, d) * 2.0
        vals = rng.normal(size=d + 1)
        vol = simplex_volume(verts)
        grad = exp_affine_gradient_batch(np.array([vol]), vals[None, :])[0]
        eps = 1e-6
        for i in range(d + 1):
            vp, vm = vals.copy(), vals.copy()
            vp[i] += eps
            vm[i] -= eps
            fd = (exp_affine_integral(verts, vp) - exp_affine_integral(verts, vm)) / (2 * eps)
            assert grad[i] == pytest.approx(fd, rel=1e-7, abs=1e-10)


def test_degenerate_simplex_rejected():
    flat = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(DegenerateSimplex):
        exp_affine_integral(flat, [0.0, 0.0, 0.0])


def test_volume_basics():
    assert simplex_volume(UNIT_INTERVAL) == pytest.approx(1.0)
    tet = np.vstack([np.zeros(3), np.eye(3)])
    assert simplex_volume(tet) == pytest.approx(1.0 / 6.0)
