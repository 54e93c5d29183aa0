import numpy as np
import pytest

from covillm.filters import FilterParams
from covillm.frames import DepthFrame
from covillm.localize import (BinaryMask, LocalizationParams, Rect,
                              SurfaceNotFound, create_binary_mask,
                              contour_centroid, extract_objects,
                              find_contours, histogram_mode, localize)
from covillm.synth import Footprint, SceneComponent, SceneSpec, synthesize_frame
from covillm import cases

from oracles import flood_fill_regions, histogram_mode_oracle


def mask_of(bits) -> BinaryMask:
    arr = np.asarray(bits, dtype=bool)
    return BinaryMask(arr.shape[1], arr.shape[0], arr)


class TestHistogramMode:
    def test_dominant_surface(self):
        values = np.array([400] * 1000 + [380] * 50)
        assert histogram_mode(values, 1.0) == 400

    def test_singleton(self):
        assert histogram_mode(np.array([100]), 1.0) == 100

    def test_tie_breaks_toward_smaller_depth(self):
        values = np.array([380.0] * 5 + [400.0] * 5)
        assert histogram_mode(values, 1.0) == 380

    def test_matches_counting_oracle_on_random_samples(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            values = rng.uniform(150, 800, size=10_000)
            bw = float(rng.choice([0.5, 1.0, 2.0, 5.0]))
            assert histogram_mode(values, bw) == histogram_mode_oracle(values, bw)

    def test_empty_rejected(self):
        with pytest.raises(SurfaceNotFound):
            histogram_mode(np.array([]), 1.0)


class TestCreateBinaryMask:
    def test_flat_frame_all_false(self):
        f = DepthFrame.constant(100, 80, 400)
        mask, d_s = create_binary_mask(f, LocalizationParams(h_m=10))
        assert d_s == 400
        assert not mask.bits.any()

    def test_block_interior_detected(self, intr):
        comp = SceneComponent(category="b",
                              footprint=Footprint("rect", w_mm=40, h_mm=40),
                              height_mm=20, x_mm=0, y_mm=0)
        scene = SceneSpec(surface_depth_mm=400, components=(comp,))
        f = synthesize_frame(scene, intr, seed=0)
        mask, d_s = create_binary_mask(f, LocalizationParams())
        assert d_s == 400
        expected = f.data == 380
        assert np.array_equal(mask.bits, expected)

    def test_object_below_height_threshold_ignored(self, intr):
        comp = SceneComponent(category="b",
                              footprint=Footprint("rect", w_mm=40, h_mm=40),
                              height_mm=5, x_mm=0, y_mm=0)
        scene = SceneSpec(surface_depth_mm=400, components=(comp,))
        f = synthesize_frame(scene, intr, seed=0)
        mask, _ = create_binary_mask(f, LocalizationParams(h_m=10))
        assert not mask.bits.any()

    def test_pixels_outside_roi_false(self):
        f = DepthFrame.constant(100, 80, 400)
        f.data[0, 0] = 300  # above-threshold pixel outside the ROI
        mask, _ = create_binary_mask(f, LocalizationParams())
        assert not mask.bits[0, 0]

    def test_no_valid_samples_raises(self):
        f = DepthFrame.constant(60, 60, 0)
        with pytest.raises(SurfaceNotFound):
            create_binary_mask(f, LocalizationParams())

    def test_mask_predicate_holds_everywhere(self):
        rng = np.random.default_rng(4)
        data = rng.integers(100, 500, size=(60, 70)).astype(np.uint16)
        f = DepthFrame(70, 60, data)
        lp = LocalizationParams()
        mask, d_s = create_binary_mask(f, lp)
        ys, xs = np.nonzero(mask.bits)
        for y, x in zip(ys, xs):
            d = data[y, x]
            assert d < d_s - lp.h_m and lp.d_min < d < lp.d_max


class TestFindContours:
    def test_empty_mask(self):
        assert find_contours(mask_of(np.zeros((5, 5)))) == []

    def test_filled_square(self):
        bits = np.zeros((30, 30), dtype=bool)
        bits[5:15, 10:20] = True
        (c,) = find_contours(mask_of(bits))
        assert c.area == 100
        assert c.bbox == (10, 5, 10, 10)

    def test_boundary_closed_and_8_connected(self):
        bits = np.zeros((20, 20), dtype=bool)
        bits[3:9, 4:12] = True
        bits[9:12, 6:8] = True  # L-ish blob
        (c,) = find_contours(mask_of(bits))
        pts = c.boundary
        assert len(pts) >= 4
        for a, b in zip(pts, pts[1:] + pts[:1]):
            assert max(abs(a[0] - b[0]), abs(a[1] - b[1])) <= 1

    def test_ordering_by_bbox_top_left(self):
        bits = np.zeros((20, 20), dtype=bool)
        bits[10:12, 2:4] = True
        bits[2:4, 10:12] = True
        bits[10:12, 14:16] = True
        cs = find_contours(mask_of(bits))
        assert [(c.bbox[1], c.bbox[0]) for c in cs] == [(2, 10), (10, 2), (10, 14)]

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_flood_fill_oracle(self, seed):
        rng = np.random.default_rng(seed)
        bits = rng.random((40, 50)) < 0.35
        regions = flood_fill_regions(bits)
        contours = find_contours(mask_of(bits))
        assert len(contours) == len(regions)
        assert sorted(c.area for c in contours) == sorted(len(r) for r in regions)


class TestContourCentroid:
    def test_filled_square_symmetry(self):
        bits = np.zeros((40, 40), dtype=bool)
        bits[20:30, 10:20] = True
        m = mask_of(bits)
        (c,) = find_contours(m)
        assert contour_centroid(c, m) == (14.5, 24.5)

    def test_single_pixel(self):
        bits = np.zeros((10, 10), dtype=bool)
        bits[7, 3] = True
        m = mask_of(bits)
        (c,) = find_contours(m)
        assert contour_centroid(c, m) == (3.0, 7.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_coordinate_mean_oracle(self, seed):
        rng = np.random.default_rng(100 + seed)
        bits = rng.random((30, 30)) < 0.4
        m = mask_of(bits)
        regions = {frozenset(r) for r in flood_fill_regions(bits)}
        for c in find_contours(m):
            cx, cy = contour_centroid(c, m)
            region = next(r for r in regions
                          if (c._rows[0], c._cols[0]) in r)
            xs = [p[1] for p in region]
            ys = [p[0] for p in region]
            assert cx == pytest.approx(np.mean(xs), abs=1e-12)
            assert cy == pytest.approx(np.mean(ys), abs=1e-12)


class TestExtractObjects:
    def _frame_with_block(self, intr, w_mm=40, h_mm=40, height=20):
        comp = SceneComponent(category="b",
                              footprint=Footprint("rect", w_mm=w_mm, h_mm=h_mm),
                              height_mm=height, x_mm=0, y_mm=0)
        scene = SceneSpec(surface_depth_mm=400, components=(comp,))
        return synthesize_frame(scene, intr, seed=0)

    def test_block_becomes_candidate(self, intr):
        f = self._frame_with_block(intr)
        lp = LocalizationParams()
        mask, d_s = create_binary_mask(f, lp)
        (cand,) = extract_objects(mask, f, d_s, lp)
        assert cand.z == 380
        assert cand.c_x == pytest.approx(intr.p_x, abs=1.0)
        assert cand.c_y == pytest.approx(intr.p_y, abs=1.0)

    def test_sliver_rejected_by_aspect(self):
        bits = np.zeros((120, 200), dtype=bool)
        bits[50:54, 40:140] = True  # 100x4
        f = DepthFrame.constant(200, 120, 400)
        f.data[bits] = 380
        lp = LocalizationParams(alpha_max=4.0, roi=Rect(0, 0, 199, 119))
        mask = BinaryMask(200, 120, bits)
        assert extract_objects(mask, f, 400.0, lp) == []

    def test_speck_rejected_by_area(self):
        bits = np.zeros((60, 60), dtype=bool)
        bits[30, 30:35] = True  # 5 px
        f = DepthFrame.constant(60, 60, 400)
        lp = LocalizationParams(a_min=50, roi=Rect(0, 0, 59, 59))
        assert extract_objects(BinaryMask(60, 60, bits), f, 400.0, lp) == []

    def test_candidate_z_below_surface(self, intr):
        f = self._frame_with_block(intr)
        lp = LocalizationParams()
        mask, d_s = create_binary_mask(f, lp)
        for cand in extract_objects(mask, f, d_s, lp):
            assert cand.z < d_s


class TestLocalize:
    def test_case1_scene_two_candidates(self):
        bundle = cases.product_bundle(1, 1, seed=2)
        assert len(bundle.candidates) == 2

    def test_case3_scene_four_candidates(self):
        bundle = cases.product_bundle(3, 1, seed=2)
        assert len(bundle.candidates) == 4

    def test_empty_table(self, intr):
        scene = SceneSpec(surface_depth_mm=400)
        f = synthesize_frame(scene, intr, seed=0)
        cands, d_s = localize([f], FilterParams(), LocalizationParams())
        assert cands == []
        assert d_s == 400

    def test_deterministic(self, intr):
        scene = cases.build_scene(cases.PRODUCTS[2][0], seed=9,
                                  noise_sigma_mm=2.0, dropout_rate=0.02)
        f = synthesize_frame(scene, intr, seed=9)
        a = localize([f], FilterParams(), LocalizationParams())
        b = localize([f], FilterParams(), LocalizationParams())
        assert a == b
