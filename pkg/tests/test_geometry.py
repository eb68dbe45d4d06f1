import math

import numpy as np
import pytest
from scipy.optimize import linprog

from lcmle.errors import DegenerateInput, InfeasibleBudget
from lcmle.geometry import (
    PolytopeH,
    clip_polygon,
    contains,
    convex_hull,
    farthest_point_subset,
    halfspaces_to_vertices,
    inner_approx,
    majorant_evaluate,
    outer_approx,
    polygon_area,
    polygon_contains,
    polygon_from_halfspaces,
    polytope_from_text,
    polytope_to_text,
    polytope_volume,
    regular_polygon,
    triangulate_polytope,
    upper_hull_triangulation,
)

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
DIAMOND = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])


def in_hull_of_others(point, others):
    """LP feasibility: is ``point`` a convex combination of ``others``?"""
    n = len(others)
    A_eq = np.vstack([others.T, np.ones(n)])
    b_eq = np.concatenate([point, [1.0]])
    res = linprog(np.zeros(n), A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * n, method="highs")
    return res.success


class TestConvexHull:
    def test_square_center_excluded(self):
        pts = np.vstack([SQUARE, [[0.5, 0.5]]])
        hull = convex_hull(pts)
        assert len(hull.vertices) == 4
        assert sorted(map(tuple, hull.vertices)) == sorted(map(tuple, SQUARE))

    def test_1d_interval(self):
        hull = convex_hull(np.array([[3.0], [1.0], [2.0]]))
        assert hull.vertices.tolist() == [[1.0], [3.0]]
        assert polytope_volume(hull) == pytest.approx(2.0)

    def test_cross_polytope(self):
        hull = convex_hull(DIAMOND)
        assert len(hull.facets) == 4
        assert polytope_volume(hull) == pytest.approx(2.0, rel=1e-12)

    def test_degenerate_rejected(self):
        with pytest.raises(DegenerateInput):
            convex_hull(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]))

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(30, 3))
        hull = convex_hull(pts)
        again = convex_hull(hull.vertices)
        assert sorted(map(tuple, again.vertices)) == sorted(map(tuple, hull.vertices))

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_against_lp_oracle(self, d):
        rng = np.random.default_rng(42 + d)
        for _ in range(8):
            pts = rng.normal(size=(8, d))
            hull = convex_hull(pts)
            expected = {
                tuple(p) for i, p in enumerate(pts)
                if not in_hull_of_others(p, np.delete(pts, i, axis=0))
            }
            assert {tuple(v) for v in hull.vertices} == expected

    def test_all_points_inside(self):
        rng = np.random.default_rng(9)
        pts = rng.normal(size=(40, 3))
        hull = convex_hull(pts)
        assert bool(np.all(hull.contains(pts)))


class TestUpperHull:
    def test_already_concave(self):
        tri = upper_hull_triangulation(np.array([[0.0], [0.5], [1.0]]), [0.0, 1.0, 0.0])
        assert sorted(map(tuple, map(sorted, tri.simplices))) == [(0, 1), (1, 2)]

    def test_dominated_middle_point(self):
        tri = upper_hull_triangulation(np.array([[0.0], [0.5], [1.0]]), [0.0, -1.0, 0.0])
        assert sorted(map(tuple, map(sorted, tri.simplices))) == [(0, 2)]
        val = majorant_evaluate(tri, np.array([0.0, -1.0, 0.0]), np.array([[0.5]]))
        assert val[0] == pytest.approx(0.0, abs=1e-12)

    def test_three_points_2d_single_triangle(self):
        tri = upper_hull_triangulation(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), [1.0, 2.0, 3.0])
        assert tri.simplices.shape == (1, 3)

    def test_affine_heights_fallback(self):
        rng = np.random.default_rng(2)
        pts = rng.normal(size=(20, 2))
        heights = 2 * pts[:, 0] - pts[:, 1] + 3.0
        tri = upper_hull_triangulation(pts, heights)
        hull_vol = polytope_volume(convex_hull(pts))
        assert tri.volumes().sum() == pytest.approx(hull_vol, rel=1e-9)
        vals = majorant_evaluate(tri, heights, pts)
        assert np.allclose(vals, heights, atol=1e-9)

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_majorant_properties(self, d):
        rng = np.random.default_rng(17 + d)
        pts = rng.normal(size=(24, d))
        heights = rng.normal(size=24)
        tri = upper_hull_triangulation(pts, heights)
        # dominates all input heights
        vals = majorant_evaluate(tri, heights, pts)
        assert np.all(vals >= heights - 1e-9)
        # interpolates hull-active points
        active = np.unique(tri.simplices)
        assert np.allclose(vals[active], heights[active], atol=1e-9)
        # concavity along random chords
        hull = convex_hull(pts)
        vol = polytope_volume(hull)
        assert tri.volumes().sum() == pytest.approx(vol, rel=1e-9)
        a_idx = rng.integers(0, 24, size=100)
        b_idx = rng.integers(0, 24, size=100)
        mids = 0.5 * (pts[a_idx] + pts[b_idx])
        mid_vals = majorant_evaluate(tri, heights, mids)
        end_vals = 0.5 * (vals[a_idx] + vals[b_idx])
        assert np.all(mid_vals >= end_vals - 1e-9)


class TestVolumesAndMembership:
    def test_unit_square(self):
        assert polytope_volume(convex_hull(SQUARE)) == pytest.approx(1.0)

    def test_standard_simplex_3d(self):
        simp = convex_hull(np.vstack([np.zeros(3), np.eye(3)]))
        assert polytope_volume(simp) == pytest.approx(1.0 / 6.0)

    def test_triangulation_additivity(self):
        rng = np.random.default_rng(3)
        pts = rng.normal(size=(30, 3))
        hull = convex_hull(pts)
        tri = triangulate_polytope(hull)
        assert tri.volumes().sum() == pytest.approx(polytope_volume(hull), rel=1e-9)

    def test_contains_closed_convention(self):
        square = convex_hull(SQUARE).halfspaces()
        assert contains(square, np.array([0.5, 0.5]))
        assert not contains(square, np.array([2.0, 0.0]))
        assert contains(square, np.array([1.0, 0.5]))

    def test_halfspaces_to_vertices_roundtrip(self):
        h = convex_hull(SQUARE).halfspaces()
        v = halfspaces_to_vertices(h)
        assert sorted(map(tuple, np.round(v.vertices, 9))) == sorted(map(tuple, SQUARE))


class TestApproximations:
    def test_triangle_budget_exact(self):
        tri = convex_hull(np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]))
        res = inner_approx(tri, 3)
        assert res.volume_gap == 0.0
        assert len(res.polytope.facets) == 3

    def test_square_budgets_exact(self):
        sq = convex_hull(SQUARE)
        assert inner_approx(sq, 4).volume_gap == 0.0
        out = outer_approx(sq, 4)
        assert out.volume_gap == 0.0

    def test_outer_budget_infeasible(self):
        sq = convex_hull(SQUARE)
        with pytest.raises(InfeasibleBudget):
            outer_approx(sq, 2)
        with pytest.raises(InfeasibleBudget):
            inner_approx(sq, 2)

    def test_disk_proxy_octagon(self):
        disk = regular_polygon(4096)
        res = inner_approx(disk, 8)
        area = polytope_volume(res.polytope)
        # inscribed regular octagon
        assert area >= (8 / 2) * math.sin(2 * math.pi / 8) - 1e-3
        out = outer_approx(disk, 8)
        out_area = polytope_volume(out.vertex_form)
        assert out_area <= 8 * math.tan(math.pi / 8) + 1e-3

    def test_sandwich_membership(self):
        rng = np.random.default_rng(5)
        disk = regular_polygon(256)
        for budget in (5, 9, 17):
            inner = inner_approx(disk, budget)
            outer = outer_approx(disk, budget)
            assert bool(np.all(disk.contains(inner.polytope.vertices)))
            assert bool(np.all(outer.polytope.contains(disk.vertices)))
            probes = rng.uniform(-1.2, 1.2, size=(2000, 2))
            in_inner = inner.polytope.contains(probes)
            in_disk = disk.contains(probes)
            in_outer = outer.polytope.contains(probes)
            assert not np.any(in_inner & ~in_disk)
            assert not np.any(in_disk & ~in_outer)

    def test_deficit_scaling_matches_quadratic_rate(self):
        disk = regular_polygon(4096)
        target = 2 * math.pi**3 / 3
        for budget in (16, 32, 64, 128):
            res = inner_approx(disk, budget)
            scaled = res.volume_gap * budget**2
            assert abs(scaled - target) / target < 0.10

    def test_3d_budget_loop(self):
        rng = np.random.default_rng(11)
        body = convex_hull(rng.normal(size=(60, 3)))
        res = inner_approx(body, 10)
        assert len(res.polytope.facets) <= 10
        assert res.volume_gap >= 0.0
        assert bool(np.all(body.contains(res.polytope.vertices)))


class TestPolygonHelpers:
    def test_clip_and_area(self):
        clipped = clip_polygon(SQUARE, np.array([[1.0, 0.0]]), np.array([0.5]))
        assert polygon_area(clipped) == pytest.approx(0.5)

    def test_polygon_contains_matches_halfspaces(self):
        rng = np.random.default_rng(8)
        poly = regular_polygon(64, radius=2.0, center=(0.3, -0.2))
        pts = rng.uniform(-3, 3, size=(4000, 2))
        fast = polygon_contains(poly.vertices, pts)
        slow = poly.contains(pts)
        assert np.array_equal(fast, slow)

    def test_polygon_from_halfspaces(self):
        h = convex_hull(SQUARE).halfspaces()
        verts = polygon_from_halfspaces(h.normals, h.offsets)
        assert polygon_area(verts) == pytest.approx(1.0)


class TestSerialization:
    def test_roundtrip_bit_exact(self):
        rng = np.random.default_rng(21)
        for d in (1, 2, 3):
            hull = convex_hull(rng.normal(size=(12, d)) * math.pi)
            text = polytope_to_text(hull)
            back = polytope_from_text(text)
            assert np.array_equal(back.vertices, hull.vertices)
            assert len(back.facets) == len(hull.facets)
            for f1, f2 in zip(back.facets, hull.facets):
                assert f1.vertex_indices == f2.vertex_indices
                assert np.array_equal(f1.normal, f2.normal)
                assert f1.offset == f2.offset
            assert polytope_to_text(back) == text


def test_farthest_point_uniform_on_circle():
    disk = regular_polygon(4096)
    idx = farthest_point_subset(disk.vertices, 8)
    angles = np.sort(np.arctan2(disk.vertices[idx, 1], disk.vertices[idx, 0]))
    gaps = np.diff(np.concatenate([angles, [angles[0] + 2 * np.pi]]))
    assert np.allclose(gaps, np.pi / 4, atol=1e-9)
