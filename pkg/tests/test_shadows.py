import numpy as np
import pytest

from helios import shadows as sh
from helios.geometry import GeometryError
from helios.scene import generator_samples
from helios.shadows import (
    ShadingMask,
    build_depth_map,
    cell_shaded_fractions,
    classify,
    classify_positions,
    default_depth_bias,
    depth_map_to_pgm16,
    mask_to_csv,
    ray_cast_many,
    ray_cast_shaded,
)

from .conftest import two_substring_generator
from .shadow_harness import (
    FOOTPRINT,
    agreement_case,
    agreement_stats,
    random_occluders,
    random_samples,
    random_sun,
)

UP = np.array([0.0, 0.0, 1.0])
UNIT_FOOTPRINT = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)


def left_half_quad(depth_z=1.0):
    """Occluder covering exactly x < 0.5 over the unit footprint."""
    return np.array(
        [
            [[-1, -1, depth_z], [0.5, -1, depth_z], [0.5, 2, depth_z]],
            [[-1, -1, depth_z], [0.5, 2, depth_z], [-1, 2, depth_z]],
        ]
    )


class TestBuildDepthMap:
    def test_no_occluders_all_infinite(self):
        dm = build_depth_map(np.zeros((0, 3, 3)), UP, UNIT_FOOTPRINT, 32)
        assert np.all(np.isinf(dm.depth))

    def test_constant_depth_plane(self):
        tri = np.array([[[-5, -5, 2], [10, -5, 2], [0, 15, 2]]], dtype=float)
        dm = build_depth_map(tri, UP, UNIT_FOOTPRINT, 32)
        assert np.allclose(dm.depth, -2.0, atol=1e-9)

    def test_min_depth_wins_for_overlapping_quads(self):
        near = left_half_quad(2.5)
        far = left_half_quad(1.0)
        dm = build_depth_map(np.concatenate([near, far]), UP, UNIT_FOOTPRINT, 32)
        finite = dm.depth[np.isfinite(dm.depth)]
        assert np.allclose(finite, -2.5)

    def test_rejects_non_unit_sun(self):
        with pytest.raises(GeometryError, match="unit"):
            build_depth_map(np.zeros((0, 3, 3)), np.array([0, 0, 2.0]), UNIT_FOOTPRINT, 8)

    def test_rejects_downward_sun(self):
        with pytest.raises(GeometryError, match="sky"):
            build_depth_map(np.zeros((0, 3, 3)), np.array([0, 0, -1.0]), UNIT_FOOTPRINT, 8)

    def test_window_inflated_beyond_footprint(self):
        dm = build_depth_map(np.zeros((0, 3, 3)), UP, UNIT_FOOTPRINT, 100)
        u0, v0 = dm.origin_uv
        assert u0 < min(UNIT_FOOTPRINT @ dm.axis_u)
        assert v0 < min(UNIT_FOOTPRINT @ dm.axis_v)


class TestClassify:
    def test_empty_map_all_unshaded(self):
        dm = build_depth_map(np.zeros((0, 3, 3)), UP, UNIT_FOOTPRINT, 32)
        pts = random_samples(np.random.default_rng(0), 50) * 0.1 + 0.5
        assert not classify_positions(dm, pts, 0.0).any()

    def test_left_half_occluder_exact_split(self):
        # analytic fixture: uniform sample row avoiding the boundary texels
        dm = build_depth_map(left_half_quad(), UP, UNIT_FOOTPRINT, 256)
        xs = np.linspace(0.05, 0.95, 19)
        pts = np.array([[x, 0.5, 0.0] for x in xs])
        got = classify_positions(dm, pts, 1e-6)
        assert np.array_equal(got, xs < 0.5)

    def test_samples_outside_window_unshaded(self):
        dm = build_depth_map(left_half_quad(), UP, UNIT_FOOTPRINT, 64)
        out = classify_positions(dm, np.array([[50.0, 50.0, 0.0]]), 0.0)
        assert not out[0]

    def test_negative_bias_rejected(self):
        dm = build_depth_map(np.zeros((0, 3, 3)), UP, UNIT_FOOTPRINT, 8)
        with pytest.raises(ValueError):
            classify_positions(dm, np.zeros((1, 3)), -1.0)

    def test_classify_builds_mask_from_sample_points(self):
        gen = two_substring_generator(origin=(0.0, 0.0, 0.0), tilt_deg=0.0)
        samples = generator_samples(gen)
        dm = build_depth_map(
            left_half_quad(), UP, np.array([s.position for s in samples]), 128
        )
        mask = classify(dm, samples, 1e-6)
        assert mask.generator_id == "g1"
        assert mask.shaded.size == gen.sample_count
        fr = cell_shaded_fractions(mask, gen)
        assert fr.shape == (1, 36)


class TestRayCast:
    def test_no_geometry_sunward(self):
        assert not ray_cast_shaded(np.zeros((0, 3, 3)), UP, np.zeros(3))

    def test_point_below_triangle(self):
        tri = np.array([[[-1, -1, 1], [1, -1, 1], [0, 1, 1]]], dtype=float)
        assert ray_cast_shaded(tri, UP, np.zeros(3))

    def test_edge_hit_counts_once_deterministically(self):
        # two triangles sharing the edge x=0: a ray through the shared edge
        tris = np.array(
            [
                [[0, -1, 1], [1, -1, 1], [0, 1, 1]],
                [[0, -1, 1], [0, 1, 1], [-1, -1, 1]],
            ],
            dtype=float,
        )
        assert ray_cast_shaded(tris, UP, np.array([0.0, 0.0, 0.0]))

    def test_epsilon_skips_self_intersection(self):
        tri = np.array([[[-1, -1, 0], [1, -1, 0], [0, 1, 0]]], dtype=float)
        assert not ray_cast_shaded(tri, UP, np.array([0.0, 0.0, 0.0]))


class TestCellFractions:
    def _mask(self, flags):
        return ShadingMask("g", None, np.asarray(flags, bool), 1, 2, 9)

    def test_all_unshaded_zero(self):
        assert np.all(self._mask([False] * 18).cell_fractions() == 0.0)

    def test_four_of_nine(self):
        flags = [True] * 4 + [False] * 5 + [False] * 9
        fr = self._mask(flags).cell_fractions()
        assert fr[0, 0] == pytest.approx(4 / 9)
        assert fr[0, 1] == 0.0

    def test_all_shaded_one(self):
        assert np.all(self._mask([True] * 18).cell_fractions() == 1.0)

    def test_layout_mismatch_rejected(self):
        gen = two_substring_generator(subdivision=2)
        with pytest.raises(ValueError, match="does not match"):
            cell_shaded_fractions(self._mask([False] * 18), gen)


class TestOracleAgreement:
    def test_randomized_scenes_agree_off_silhouette(self):
        rng = np.random.default_rng(42)
        total_far = agree_far = 0
        worst = 0.0
        for _ in range(8):
            tris = random_occluders(rng, int(rng.integers(20, 200)))
            samples = random_samples(rng, 400)
            for _ in range(6):
                sun = random_sun(rng)
                mask, oracle, dist, _ = agreement_case(tris, sun, samples, 512)
                n_far, n_agree, w = agreement_stats(mask, oracle, dist)
                total_far += n_far
                agree_far += n_agree
                worst = max(worst, w)
        assert total_far > 0
        assert agree_far / total_far >= 0.999
        assert worst <= 3.0  # any disagreement sits within 3 texels of an edge

    def test_monotonicity_adding_occluders(self):
        rng = np.random.default_rng(7)
        tris = random_occluders(rng, 120)
        samples = random_samples(rng, 500)
        sun = random_sun(rng)
        dm_half = build_depth_map(tris[:60], sun, FOOTPRINT, 256)
        dm_full = build_depth_map(tris, sun, FOOTPRINT, 256)
        bias = default_depth_bias(dm_half.texel_world_size, abs(float(sun[2])))
        a = classify_positions(dm_half, samples, bias)
        b = classify_positions(dm_full, samples, bias)
        assert not np.any(a & ~b)

    def test_resolution_refinement_does_not_worsen_agreement(self):
        rng = np.random.default_rng(11)
        deltas = []
        for _ in range(20):
            tris = random_occluders(rng, 80)
            samples = random_samples(rng, 300)
            sun = random_sun(rng)
            counts = []
            for res in (128, 256):
                mask, oracle, _, _ = agreement_case(tris, sun, samples, res)
                counts.append(int((mask != oracle).sum()))
            deltas.append(counts[1] - counts[0])
        assert np.median(deltas) <= 0

    def test_translation_invariance(self):
        rng = np.random.default_rng(3)
        tris = random_occluders(rng, 100)
        samples = random_samples(rng, 400)
        sun = random_sun(rng)
        shift = np.array([123.4, -56.7, 8.9])
        mask_a, _, _, _ = agreement_case(tris, sun, samples, 256)
        dm = build_depth_map(tris + shift, sun, FOOTPRINT + shift, 256)
        bias = default_depth_bias(dm.texel_world_size, abs(float(sun[2])))
        mask_b = classify_positions(dm, samples + shift, bias)
        assert np.array_equal(mask_a, mask_b)

    def test_no_self_shadowing_bare_plane(self):
        # a bare generator has no occluders (its own surface is excluded from
        # its occluder set) so any sun angle yields an all-unshaded mask
        gen = two_substring_generator(origin=(0.0, 0.0, 1.0))
        from helios.scene import sample_positions

        pos = sample_positions(gen)
        rng = np.random.default_rng(5)
        for _ in range(6):
            sun = random_sun(rng, max_zenith=84.0)
            dm = build_depth_map(np.zeros((0, 3, 3)), sun, pos, 256)
            bias = default_depth_bias(dm.texel_world_size, abs(float(sun[2])))
            assert not classify_positions(dm, pos, bias).any()

    def test_no_acne_from_roof_plane_under_panel(self):
        # coplanar nearby geometry is the real acne hazard: a roof plane
        # 5 cm beneath the panel must not falsely shade it
        gen = two_substring_generator(origin=(0.0, 0.0, 1.0))
        from helios.scene import generator_plane_axes, sample_positions

        _, _, n = generator_plane_axes(gen)
        pos = sample_positions(gen)
        lo, hi = pos.min(axis=0) - 2.0, pos.max(axis=0) + 2.0
        roof = np.array(
            [
                [[lo[0], lo[1], 0], [hi[0], lo[1], 0], [hi[0], hi[1], 0]],
                [[lo[0], lo[1], 0], [hi[0], hi[1], 0], [lo[0], hi[1], 0]],
            ]
        )
        # project the roof onto the plane 5 cm behind the panel
        roof = roof - ((roof - (gen.origin_m - 0.05 * n)) @ n)[..., None] * n
        rng = np.random.default_rng(6)
        for _ in range(12):
            sun = random_sun(rng, max_zenith=84.0)
            cos_inc = abs(float(sun @ n))
            dm = build_depth_map(roof, sun, pos, 256)
            bias = default_depth_bias(dm.texel_world_size, cos_inc)
            assert not classify_positions(dm, pos, bias).any()


class TestKernelPaths:
    def test_numba_and_python_rasterizers_identical(self):
        rng = np.random.default_rng(0)
        tris = random_occluders(rng, 60)
        sun = random_sun(rng)
        dm_fast = build_depth_map(tris, sun, FOOTPRINT, 128)
        orig = sh._raster_kernel
        sh._raster_kernel = sh._raster_kernel_py
        try:
            dm_slow = build_depth_map(tris, sun, FOOTPRINT, 128)
        finally:
            sh._raster_kernel = orig
        assert np.array_equal(dm_fast.depth, dm_slow.depth)

    def test_numba_and_python_raycast_identical(self):
        rng = np.random.default_rng(1)
        tris = random_occluders(rng, 60)
        sun = random_sun(rng)
        pts = random_samples(rng, 300)
        fast = ray_cast_many(tris, sun, pts)
        orig = sh._raycast_kernel
        sh._raycast_kernel = sh._raycast_kernel_py
        try:
            slow = ray_cast_many(tris, sun, pts)
        finally:
            sh._raycast_kernel = orig
        assert np.array_equal(fast, slow)


class TestDumps:
    def test_pgm16_header_and_size(self):
        dm = build_depth_map(left_half_quad(), UP, UNIT_FOOTPRINT, 32)
        data = depth_map_to_pgm16(dm)
        assert data.startswith(b"P5\n32 32\n65535\n")
        assert len(data) == len(b"P5\n32 32\n65535\n") + 32 * 32 * 2

    def test_mask_csv_shape(self):
        mask = ShadingMask("gX", None, np.array([True, False] * 9), 1, 2, 9)
        text = mask_to_csv(mask)
        lines = text.strip().split("\n")
        assert lines[0] == "generator,module,cell,sub,shaded"
        assert len(lines) == 19
        assert lines[1] == "gX,0,0,0,1"


def test_default_depth_bias_slope_and_cap():
    assert default_depth_bias(1.0, 1.0) == 2.0
    assert default_depth_bias(1.0, 0.5) == 4.0
    assert default_depth_bias(1.0, 0.01) == 4.0  # capped
    assert default_depth_bias(1.0, 0.8) == pytest.approx(2.5)
