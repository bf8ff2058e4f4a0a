import numpy as np
import pytest

from dualpart.field import (
    GrayImage,
    PreFilter,
    SampleGrid,
    alpha,
    alpha_deriv,
    glyph_occupancy_exact,
    glyph_occupancy_exact_many,
    glyph_occupancy_soft,
    glyph_occupancy_soft_many,
    glyph_udf_approx,
    glyph_udf_approx_many,
    image_udf,
    rasterize_soft,
)
from dualpart.geom import ClosedPath, DualPartGlyph, path_winding_many

from test_geom import circle_path, square_path


def far_negative(m=4):
    """Tiny negative path parked far outside the canvas (no effect)."""
    return ClosedPath(square_path(half=0.01, center=(50.0, 50.0)).ctrl if m == 4
                      else circle_path(0.01, center=(50.0, 50.0), m=m).ctrl)


def annulus_glyph(outer=0.8, inner=0.3, m=8):
    return DualPartGlyph([(circle_path(outer, m=m), circle_path(inner, m=m))])


class TestAlpha:
    F = PreFilter(0.01)

    def test_boundary_half(self):
        assert alpha(0.0, self.F) == pytest.approx(0.5, abs=1e-15)

    def test_saturation(self):
        assert alpha(self.F.radius, self.F) == pytest.approx(1.0, abs=1e-15)
        assert alpha(-self.F.radius, self.F) == pytest.approx(0.0, abs=1e-15)

    def test_quarter_point(self):
        # u = 0.25 -> u^2 (3 - 2u) = 0.15625
        assert alpha(-self.F.radius / 2, self.F) == pytest.approx(0.15625, abs=1e-15)

    def test_monotone_continuous(self):
        s = np.linspace(-0.03, 0.03, 2001)
        a = alpha(s, self.F)
        assert np.all(np.diff(a) >= 0)
        assert np.max(np.abs(np.diff(a))) < 0.01

    def test_c1_at_support_edges(self):
        # derivative tends to 0 approaching +-r from inside, and is 0 outside
        r = self.F.radius
        eps = 1e-9
        assert alpha_deriv(r - eps, self.F) < 1e-3
        assert alpha_deriv(-r + eps, self.F) < 1e-3
        assert alpha_deriv(r + eps, self.F) == 0.0
        assert alpha_deriv(-r - eps, self.F) == 0.0

    def test_deriv_matches_fd(self):
        s = np.linspace(-0.009, 0.009, 37)
        h = 1e-7
        fd = (alpha(s + h, self.F) - alpha(s - h, self.F)) / (2 * h)
        assert np.allclose(alpha_deriv(s, self.F), fd, atol=1e-5)


class TestOccupancyExact:
    def test_hole_and_annulus(self):
        g = DualPartGlyph([(square_path(0.8), square_path(0.3))])
        assert glyph_occupancy_exact(g, (0.0, 0.0)) == 0
        assert glyph_occupancy_exact(g, (0.55, 0.0)) == 1

    def test_two_part_matches_formula_composition(self):
        # direct double-loop composition of the union-of-differences rule
        g = DualPartGlyph([
            (circle_path(0.6, center=(-0.2, 0.0), m=4), circle_path(0.2, center=(-0.2, 0.0), m=4)),
            (circle_path(0.5, center=(0.3, 0.1), m=4), circle_path(0.15, center=(0.3, 0.1), m=4)),
        ])
        grid = SampleGrid(256)
        pts = grid.points()
        got = glyph_occupancy_exact_many(g, pts)
        want = np.zeros(pts.shape[0], dtype=bool)
        for pos, neg in g.parts:
            in_pos = path_winding_many(pos, pts) != 0
            in_neg = path_winding_many(neg, pts) != 0
            want |= np.minimum(in_pos, ~in_neg)
        assert np.array_equal(got, want.astype(np.int64))


class TestOccupancySoft:
    def test_deep_inside_saturates(self):
        g = DualPartGlyph([(circle_path(0.7, m=8), circle_path(0.05, center=(0.0, -0.55), m=8))])
        f = PreFilter(0.02)
        assert glyph_occupancy_soft(g, (0.0, 0.35), f) == pytest.approx(1.0, abs=1e-12)

    def test_on_boundary_half(self):
        g = DualPartGlyph([(square_path(0.5), far_negative())])
        f = PreFilter(0.02)
        assert glyph_occupancy_soft(g, (0.5, 0.0), f) == pytest.approx(0.5, abs=1e-9)

    def test_soft_vs_exact_bound_and_agreement(self):
        rng = np.random.default_rng(7)
        g = DualPartGlyph([
            (circle_path(0.5, center=(-0.1, 0.0), m=4), circle_path(0.2, center=(-0.1, 0.0), m=4)),
            (circle_path(0.4, center=(0.3, 0.2), m=4), circle_path(0.1, center=(0.3, 0.2), m=4)),
        ])
        f = PreFilter(0.02)
        pts = rng.uniform(-1, 1, size=(4000, 2))
        soft = glyph_occupancy_soft_many(g, pts, f)
        exact = glyph_occupancy_exact_many(g, pts)
        assert np.all(np.abs(soft - exact) <= 0.5 + 1e-12)
        # identical beyond one filter radius from every path boundary
        from dualpart.field import glyph_distances

        dist, _, _ = glyph_distances(g, pts)
        far = dist.min(axis=0) > f.radius
        assert np.array_equal(soft[far] > 0.5, exact[far] == 1)
        assert np.allclose(soft[far], exact[far], atol=1e-12)

    def test_converges_to_exact_as_radius_shrinks(self):
        g = annulus_glyph()
        rng = np.random.default_rng(8)
        pts = rng.uniform(-1, 1, size=(500, 2))
        exact = glyph_occupancy_exact_many(g, pts)
        prev_err = None
        for k in range(4, 10):
            f = PreFilter(2.0 ** -k)
            soft = glyph_occupancy_soft_many(g, pts, f)
            from dualpart.field import glyph_distances

            dist, _, _ = glyph_distances(g, pts)
            off = dist.min(axis=0) > 2.0 ** -k
            err = np.abs(soft[off] - exact[off]).max() if off.any() else 0.0
            assert err <= 1e-12
            prev_err = err


class TestUdf:
    def test_zero_inside_dual_part(self):
        g = annulus_glyph()
        assert glyph_udf_approx(g, (0.5, 0.0)) == pytest.approx(0.0, abs=1e-12)

    def test_outside_reduces_to_positive_distance(self):
        g = DualPartGlyph([(circle_path(0.5, m=8), circle_path(0.01, center=(40.0, 40.0), m=8))])
        p = (0.9, 0.0)
        from dualpart.geom import path_distance_many

        d, _, _ = path_distance_many(g.parts[0][0], np.asarray(p)[None, :])
        assert glyph_udf_approx(g, p) == pytest.approx(float(d[0]), abs=1e-12)

    def test_zero_exactly_where_occupied(self):
        g = DualPartGlyph([
            (circle_path(0.5, center=(-0.2, -0.1), m=4), circle_path(0.22, center=(-0.2, -0.1), m=4)),
            (circle_path(0.35, center=(0.4, 0.3), m=4), circle_path(0.1, center=(0.4, 0.3), m=4)),
        ])
        grid = SampleGrid(512)
        pts = grid.points()
        u = glyph_udf_approx_many(g, pts)
        occ = glyph_occupancy_exact_many(g, pts)
        assert np.all(u >= 0.0)
        on = occ == 1
        assert np.all(u[on] <= 1e-9)
        assert np.all(u[~on] > 0.0)

    def test_union_udf_is_min_of_member_udfs(self):
        # two disjoint annuli: the composite equals the pointwise min of the
        # members, and matches a supersampled distance oracle off-grid error
        a = (circle_path(0.35, center=(-0.5, 0.0), m=8), circle_path(0.18, center=(-0.5, 0.0), m=8))
        b = (circle_path(0.3, center=(0.45, 0.1), m=8), circle_path(0.12, center=(0.45, 0.1), m=8))
        g = DualPartGlyph([a, b])
        ga = DualPartGlyph([a])
        gb = DualPartGlyph([b])
        rng = np.random.default_rng(9)
        pts = rng.uniform(-1, 1, size=(2000, 2))
        u = glyph_udf_approx_many(g, pts)
        ua = glyph_udf_approx_many(ga, pts)
        ub = glyph_udf_approx_many(gb, pts)
        assert np.allclose(u, np.minimum(ua, ub), atol=1e-12)

        # oracle: distance to the nearest occupied sample of a fine raster
        res = 1024
        grid = SampleGrid(res)
        occ = glyph_occupancy_exact_many(g, grid.points()).reshape(res, res).astype(bool)
        occ_pts = grid.points()[occ.ravel()]
        outside = glyph_occupancy_exact_many(g, pts) == 0
        for p, u_val in zip(pts[outside][:200], u[outside][:200]):
            d = np.sqrt(np.sum((occ_pts - p) ** 2, axis=1)).min()
            assert abs(u_val - d) < 3.0 * grid.pitch


class TestRasterize:
    def test_degenerate_parts_render_empty(self):
        tiny = ClosedPath(np.full((8, 2), 0.123))
        g = DualPartGlyph([(tiny, tiny)])
        img = rasterize_soft(g, SampleGrid(32))
        # degenerate point paths have no interior; only kernel-width speckle
        assert img.data.max() <= 0.5 + 1e-9

    def test_full_canvas_square(self):
        g = DualPartGlyph([(square_path(0.999), far_negative())])
        img = rasterize_soft(g, SampleGrid(64))
        interior = img.data[2:-2, 2:-2]
        assert np.all(interior >= 1.0 - 1e-9)

    def test_ring_matches_supersampled_oracle(self):
        g = annulus_glyph()
        res = 128
        img = rasterize_soft(g, SampleGrid(res))
        # 8x supersampled exact occupancy
        fine = SampleGrid(res * 8)
        occ = glyph_occupancy_exact_many(g, fine.points()).reshape(res * 8, res * 8)
        oracle = occ.reshape(res, 8, res, 8).mean(axis=(1, 3))
        inter = np.minimum(img.data, oracle).sum()
        union = np.maximum(img.data, oracle).sum()
        assert inter / union >= 0.99

    def test_row_zero_is_top(self):
        # ink only in the upper half-plane must land in the upper image rows
        g = DualPartGlyph([(square_path(0.3, center=(0.0, 0.6)), far_negative())])
        img = rasterize_soft(g, SampleGrid(64))
        assert img.data[:32].sum() > 100 * img.data[32:].sum()


class TestImageUdf:
    def test_all_ink(self):
        img = GrayImage(np.ones((8, 8)))
        assert np.array_equal(image_udf(img), np.zeros((8, 8)))

    def test_single_center_pixel(self):
        data = np.zeros((3, 3))
        data[1, 1] = 1.0
        pitch = 2.0 / 3
        u = image_udf(GrayImage(data), pitch=pitch)
        assert u[0, 0] == pytest.approx(np.sqrt(2) * pitch, abs=1e-12)
        assert u[0, 1] == pytest.approx(pitch, abs=1e-12)
        assert u[1, 1] == 0.0

    def test_matches_brute_force_scan(self):
        rng = np.random.default_rng(10)
        data = (rng.uniform(size=(24, 24)) > 0.8).astype(float)
        if not data.any():
            data[5, 7] = 1.0
        pitch = 2.0 / 24
        u = image_udf(GrayImage(data), pitch=pitch)
        ink = np.argwhere(data >= 0.5)
        for r in range(24):
            for c in range(24):
                d = np.sqrt(((ink - [r, c]) ** 2).sum(axis=1)).min() * pitch
                assert u[r, c] == pytest.approx(d, abs=1e-12)

    def test_all_background_inf_and_warns(self):
        with pytest.warns(UserWarning):
            u = image_udf(GrayImage(np.zeros((4, 4))))
        assert np.all(np.isinf(u))

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            image_udf(GrayImage(np.ones((4, 4))), threshold=1.5)


class TestGrid:
    def test_points_row_major_and_centers(self):
        grid = SampleGrid(2, frame=((0.0, 0.0), (2.0, 2.0)))
        pts = grid.points()
        # row 0 = top (y-up frame): y = 1.5 first
        assert np.allclose(pts, [[0.5, 1.5], [1.5, 1.5], [0.5, 0.5], [1.5, 0.5]])

    def test_y_down_frame(self):
        grid = SampleGrid(2, frame=((0.0, 0.0), (2.0, 2.0)), y_down=True)
        pts = grid.points()
        assert np.allclose(pts, [[0.5, 0.5], [1.5, 0.5], [0.5, 1.5], [1.5, 1.5]])

    def test_validation(self):
        with pytest.raises(ValueError):
            SampleGrid(0)
        with pytest.raises(ValueError):
            GrayImage(np.full((2, 2), 1.5))
        with pytest.raises(ValueError):
            PreFilter(0.0)
