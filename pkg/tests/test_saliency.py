import numpy as np
import pytest

from voxcorr.saliency import (LeafStrategy, build_octree, build_saliency,
                              compute_saliency, octree_from_arrays,
                              octree_to_arrays, smooth_saliency)
from voxcorr.volume import normalize_attr

from oracles import saliency_oracle
from test_volume import make_vol


class TestSaliency:
    def test_constant_volume_zero(self):
        vol = make_vol([np.full((6, 6, 6), 0.4), np.full((6, 6, 6), 0.9)])
        assert np.all(compute_saliency(vol) == 0.0)

    def test_identical_copies_scale(self, rng):
        g = rng.random((6, 6, 6))
        v1 = make_vol([g, g])
        v3 = make_vol([g, g, g])
        np.testing.assert_allclose(compute_saliency(v3),
                                   1.5 * compute_saliency(v1), atol=1e-12)

    def test_matches_oracle(self, rng):
        grids = [rng.random((7, 6, 8)) for _ in range(3)]
        vol = make_vol(grids)
        np.testing.assert_allclose(compute_saliency(vol),
                                   saliency_oracle(vol.attrs), atol=1e-6)

    def test_nonnegative(self, rng):
        vol = make_vol([rng.random((5, 5, 5)) for _ in range(2)])
        s = build_saliency(vol, radius=2)
        assert np.all(s.raw >= 0.0) and np.all(s.filtered >= 0.0)


class TestSmooth:
    def test_radius_zero_identity(self, rng):
        s = rng.random((5, 5, 5))
        np.testing.assert_array_equal(smooth_saliency(s, 0), s)

    def test_impulse_box(self):
        s = np.zeros((7, 7, 7))
        s[3, 3, 3] = 1.0
        f = smooth_saliency(s, 1)
        support = f[2:5, 2:5, 2:5]
        np.testing.assert_allclose(support, 1.0 / 27.0, atol=1e-12)
        assert f[0, 0, 0] == 0.0

    def test_interior_impulse_sum_preserved(self):
        s = np.zeros((11, 11, 11))
        s[5, 5, 5] = 2.5
        f = smooth_saliency(s, 2)
        assert f.sum() == pytest.approx(2.5, abs=1e-9)


class TestOctree:
    def test_constant_single_homogeneous_root(self):
        s = np.full((16, 16, 16), 0.3)
        tree = build_octree(s, t_s=0.01, t_e=0.001)
        assert tree.root.is_leaf
        assert tree.root.strategy == LeafStrategy.HOMOGENEOUS

    def test_leaf_cover_partition(self, rng):
        s = rng.random((12, 10, 9))
        tree = build_octree(s, t_s=0.3, t_e=0.05, min_node=2)
        hits = np.zeros(s.shape, dtype=int)
        for leaf in tree.leaves():
            x0, y0, z0 = leaf.lo
            x1, y1, z1 = leaf.hi
            hits[x0:x1, y0:y1, z0:z1] += 1
        assert np.all(hits == 1)

    def test_ts_zero_noisy_all_min_leaves(self, rng):
        s = rng.random((16, 16, 16))
        tree = build_octree(s, t_s=0.0, t_e=0.0, min_node=4)
        for leaf in tree.leaves():
            assert max(leaf.size) <= 7  # can't split below 2*min_node
            assert leaf.strategy == LeafStrategy.PER_VOXEL

    def test_leaf_invariant_range_or_min_size(self, rng):
        s = rng.random((32, 32, 32)) * 0.2
        s[10:20, :, :] += 2.0
        tree = build_octree(s, t_s=0.5, t_e=0.01, min_node=4)
        for leaf in tree.leaves():
            assert leaf.value_range <= 0.5 or min(leaf.size) < 8

    def test_monotone_leaf_count_in_ts(self, rng):
        s = rng.random((16, 16, 16))
        counts = [build_octree(s, t_s=t, t_e=0.0).leaf_count()
                  for t in (0.0, 0.2, 0.5, 0.9, 1.1)]
        assert counts == sorted(counts, reverse=True)

    def test_subdivision_concentrates_on_plane(self):
        s = np.zeros((32, 32, 32))
        s[:, :, 16:] = 1.0
        f = smooth_saliency(s, 1)
        tree = build_octree(f, t_s=0.1, t_e=0.001, min_node=4)
        on_plane = [l for l in tree.leaves() if l.lo[2] <= 17 and l.hi[2] >= 15]
        off_plane = [l for l in tree.leaves() if not (l.lo[2] <= 17 and l.hi[2] >= 15)]
        assert on_plane and off_plane
        # away from the plane the field is flat: every leaf is homogeneous,
        # and subdivision (small leaves) concentrates around the jump
        for leaf in off_plane:
            assert leaf.strategy == LeafStrategy.HOMOGENEOUS
        mean_on = np.mean([min(l.size) for l in on_plane])
        mean_off = np.mean([min(l.size) for l in off_plane])
        assert mean_on < mean_off
        assert any(max(l.size) >= 8 for l in off_plane)

    def test_strategy_thresholds(self, rng):
        s = rng.random((8, 8, 8))
        tree = build_octree(s, t_s=2.0, t_e=0.02, min_node=4)
        for leaf in tree.leaves():
            if leaf.variance < 0.02:
                assert leaf.strategy == LeafStrategy.HOMOGENEOUS
            elif leaf.variance <= 2.0:
                assert leaf.strategy == LeafStrategy.INTERPOLATE
            else:
                assert leaf.strategy == LeafStrategy.PER_VOXEL

    def test_invalid_thresholds(self):
        s = np.zeros((8, 8, 8))
        with pytest.raises(ValueError):
            build_octree(s, t_s=0.01, t_e=0.05)
        with pytest.raises(ValueError):
            build_octree(s, t_s=0.1, t_e=0.01, min_node=1)

    def test_non_power_of_two_dims(self, rng):
        s = rng.random((11, 13, 9))
        tree = build_octree(s, t_s=0.0, t_e=0.0, min_node=2)
        hits = np.zeros(s.shape, dtype=int)
        for leaf in tree.leaves():
            x0, y0, z0 = leaf.lo
            x1, y1, z1 = leaf.hi
            hits[x0:x1, y0:y1, z0:z1] += 1
        assert np.all(hits == 1)

    def test_array_roundtrip(self, rng):
        s = rng.random((16, 16, 16))
        tree = build_octree(s, t_s=0.4, t_e=0.02)
        back = octree_from_arrays(octree_to_arrays(tree))
        orig = sorted((l.lo, l.size, int(l.strategy)) for l in tree.leaves())
        got = sorted((l.lo, l.size, int(l.strategy)) for l in back.leaves())
        assert orig == got
        assert back.t_s == tree.t_s and back.t_e == tree.t_e
