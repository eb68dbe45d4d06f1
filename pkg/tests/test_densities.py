import math

import numpy as np
import pytest

from lcmle.densities import (
    CircleUniform,
    Gaussian,
    LevelSetQuery,
    ProductLaplace,
    TentDensity,
    UniformPolytope,
    mass_monte_carlo,
    superlevel_volume,
)
from lcmle.errors import DegenerateInput, DimensionMismatch
from lcmle.geometry import convex_hull

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def std_gaussian(d=1):
    return Gaussian(np.zeros(d), np.eye(d))


def uniform_tent():
    return TentDensity.from_points([0.0, 1.0], [0.0, 0.0])


class TestLogEval:
    def test_standard_gaussian_at_zero(self):
        assert std_gaussian().log_eval(np.zeros(1)) == pytest.approx(
            -0.5 * math.log(2 * math.pi), abs=1e-12
        )

    def test_tent_uniform(self):
        tent = uniform_tent()
        assert tent.log_eval(np.array([0.5])) == pytest.approx(0.0, abs=1e-12)
        assert tent.log_eval(np.array([2.0])) == -math.inf

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            std_gaussian(2).log_eval(np.zeros(3))

    def test_gaussian_requires_spd(self):
        with pytest.raises(DegenerateInput):
            Gaussian(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))


class TestSampling:
    def test_uniform_polytope_samples_inside(self):
        model = UniformPolytope(convex_hull(SQUARE))
        rng = np.random.default_rng(0)
        pts = model.sample(rng, 500)
        assert bool(np.all(model.polytope.contains(pts)))

    def test_gaussian_clt(self):
        model = std_gaussian(2)
        rng = np.random.default_rng(1)
        n = 10_000
        pts = model.sample(rng, n)
        assert np.all(np.abs(pts.mean(axis=0)) < 4.0 / math.sqrt(n))

    def test_tent_uniform_ks(self):
        tent = uniform_tent()
        rng = np.random.default_rng(2)
        n = 5000
        xs = np.sort(tent.sample(rng, n)[:, 0])
        grid = (np.arange(n) + 1) / n
        ks = max(
            float(np.max(np.abs(grid - xs))),
            float(np.max(np.abs(grid - 1.0 / n - xs))),
        )
        assert ks < 1.63 / math.sqrt(n)

    def test_peaked_tent_sampling_matches_cdf(self):
        tent = TentDensity.from_points([0.0, 0.25, 1.0], [0.0, 2.0, -1.0])
        rng = np.random.default_rng(3)
        n = 20_000
        xs = tent.sample(rng, n)[:, 0]
        for t in (0.1, 0.25, 0.5, 0.9):
            emp = float(np.mean(xs <= t))
            assert emp == pytest.approx(tent.cdf_1d(t), abs=4.0 / math.sqrt(n) + 0.01)

    def test_laplace_medians(self):
        model = ProductLaplace(np.array([1.0, 3.0]))
        rng = np.random.default_rng(4)
        pts = model.sample(rng, 20_000)
        assert np.all(np.abs(np.median(pts, axis=0)) < 0.1)


class TestSuperlevel:
    def test_gaussian_d1(self):
        g = std_gaussian()
        y = g.max_density * math.exp(-2.0)
        assert superlevel_volume(LevelSetQuery(g, y)) == pytest.approx(4.0, rel=1e-12)

    def test_uniform_full_or_empty(self):
        u = UniformPolytope(convex_hull(np.array([[0.0], [1.0]])))
        assert superlevel_volume(LevelSetQuery(u, 0.5)) == 1.0
        assert superlevel_volume(LevelSetQuery(u, 1.0)) == 1.0
        assert superlevel_volume(LevelSetQuery(u, 1.5)) == 0.0

    def test_above_max_is_empty(self):
        for model in (std_gaussian(), ProductLaplace(np.ones(1)), uniform_tent()):
            assert superlevel_volume(LevelSetQuery(model, model.max_density * 1.01)) == 0.0

    @pytest.mark.parametrize("w", [1.0, 2.0, 4.0, 8.0])
    def test_level_set_volume_bound(self, w):
        # vol(L_f(M e^-w)) <= e * w^d / M for every implemented family; the
        # factor e is necessary (standard Gaussian at w=1 gives 2*sqrt(2) >
        # 1/M, a peaked tent at w=2 exceeds the bare w^d/M form as well)
        models = [
            std_gaussian(1),
            std_gaussian(2),
            Gaussian(np.array([1.0, -1.0]), np.array([[2.0, 0.3], [0.3, 0.5]])),
            ProductLaplace(np.array([1.0])),
            ProductLaplace(np.array([0.5, 2.0])),
            UniformPolytope(convex_hull(SQUARE)),
            uniform_tent(),
            TentDensity.from_points([0.0, 0.3, 1.0], [0.0, 1.5, -0.5]),
            TentDensity.from_points(
                np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]),
                np.array([0.0, 0.5, -0.5, 0.2]),
            ),
        ]
        for model in models:
            m = model.max_density
            vol = superlevel_volume(LevelSetQuery(model, m * math.exp(-w)))
            assert vol <= math.e * w**model.dim / m + 1e-9

    def test_monotone_in_threshold(self):
        tent = TentDensity.from_points([0.0, 0.4, 1.0], [0.0, 1.0, -2.0])
        ys = np.linspace(1e-3, tent.max_density, 25)
        vols = [superlevel_volume(LevelSetQuery(tent, float(y))) for y in ys]
        assert all(a >= b - 1e-12 for a, b in zip(vols, vols[1:]))

    def test_tent_level_volume_against_mc(self):
        tent = TentDensity.from_points(
            np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [1.5, 1.5]]),
            np.array([1.0, 0.0, -1.0, 0.5]),
        )
        rng = np.random.default_rng(7)
        box = rng.uniform(0.0, 2.0, size=(200_000, 2))
        for frac in (0.3, 0.6, 0.9):
            y = tent.max_density * frac
            exact = superlevel_volume(LevelSetQuery(tent, y))
            mc = 4.0 * float(np.mean(tent.density(box) >= y))
            assert exact == pytest.approx(mc, abs=0.02)


class TestMass:
    @pytest.mark.parametrize(
        "model",
        [
            std_gaussian(1),
            std_gaussian(2),
            ProductLaplace(np.array([1.0])),
            UniformPolytope(convex_hull(SQUARE)),
            uniform_tent(),
            TentDensity.from_points([0.0, 0.3, 1.0], [0.5, 1.5, -0.5]),
        ],
    )
    def test_monte_carlo_mass_is_one(self, model):
        rng = np.random.default_rng(11)
        est, stderr = mass_monte_carlo(model, rng, draws=100_000)
        assert abs(est - 1.0) <= 3.0 * stderr + 1e-9

    def test_tent_normalization(self):
        tent = TentDensity.from_points([0.0, 0.2, 0.9], [3.0, 4.0, 1.0])
        assert tent.total_mass() == pytest.approx(1.0, rel=1e-9)


class TestTentStructure:
    def test_concavity_on_chords(self):
        rng = np.random.default_rng(5)
        pts = rng.normal(size=(30, 2))
        heights = -np.sum(pts**2, axis=1) + rng.normal(scale=0.1, size=30)
        tent = TentDensity.from_points(pts, heights)
        interior = 0.3 * pts[rng.integers(0, 30, 100)] + 0.7 * pts[rng.integers(0, 30, 100)]
        a = rng.integers(0, 100, 100)
        b = rng.integers(0, 100, 100)
        mid = 0.5 * (interior[a] + interior[b])
        lv = tent.log_eval(interior)
        assert np.all(tent.log_eval(mid) >= 0.5 * (lv[a] + lv[b]) - 1e-9)

    def test_max_density_at_base_point(self):
        tent = TentDensity.from_points([0.0, 0.25, 1.0], [0.0, 2.0, -1.0])
        assert tent.max_density == pytest.approx(
            float(np.exp(tent.heights - tent.log_normalizer).max()), rel=1e-12
        )


def test_circle_measure_of_inscribed_hull_is_zero():
    circle = CircleUniform()
    rng = np.random.default_rng(13)
    pts = circle.sample(rng, 100)
    hull = convex_hull(pts)
    assert circle.polygon_measure(hull.vertices) == 0.0
    big = convex_hull(np.array([[-2.0, -2.0], [2.0, -2.0], [2.0, 2.0], [-2.0, 2.0]]))
    assert circle.polygon_measure(big.vertices) == 1.0
