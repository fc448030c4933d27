import math

import numpy as np
import pytest

from quatropp.core import PointCloud, rot_z
from quatropp.ground import (
    UNBINNED,
    CzmLayout,
    GroundConfig,
    PlanePatch,
    fit_plane_rgpf,
    ground_likelihood,
    partition_czm,
    segment_ground,
)

LAYOUT = CzmLayout()


def make_scene(rng, n_plane=10000, n_boxes=5, pts_per_box=400, z_ground=-1.7):
    """Flat ground disk plus tall boxes; returns (cloud, true ground labels)."""
    radius = rng.uniform(2.0, 40.0, n_plane)
    azim = rng.uniform(0.0, 2.0 * math.pi, n_plane)
    ground = np.column_stack(
        [radius * np.cos(azim), radius * np.sin(azim), np.full(n_plane, z_ground)]
    )
    ground[:, 2] += rng.normal(0.0, 0.01, n_plane)
    boxes = []
    for _ in range(n_boxes):
        cx, cy = rng.uniform(-25.0, 25.0, 2)
        w, h = rng.uniform(2.0, 4.0), rng.uniform(3.0, 5.0)
        side = rng.uniform(0.0, 1.0, pts_per_box)
        face = rng.integers(0, 4, pts_per_box)
        x = np.where(face < 2, cx + (face * 2 - 1) * w / 2, cx + (side - 0.5) * w)
        y = np.where(face < 2, cy + (side - 0.5) * w, cy + ((face - 2) * 2 - 1) * w / 2)
        z = z_ground + rng.uniform(0.0, h, pts_per_box)
        boxes.append(np.column_stack([x, y, z]))
    pts = np.concatenate([ground] + boxes)
    labels = np.zeros(len(pts), dtype=bool)
    labels[:n_plane] = True
    return PointCloud(pts), labels


class TestCzmLayout:
    def test_defaults(self):
        assert LAYOUT.num_zones == 4
        assert LAYOUT.rings == (2, 4, 4, 4)
        assert LAYOUT.sectors == (16, 32, 54, 32)

    def test_rejects_nonincreasing_ranges(self):
        with pytest.raises(ValueError):
            CzmLayout(zone_ranges=(1.0, 12.0, 12.0, 40.0, 60.0))

    def test_rejects_zero_rings(self):
        with pytest.raises(ValueError):
            CzmLayout(rings=(0, 4, 4, 4))


class TestPartitionCzm:
    def test_boundary_point_first_bin(self):
        eps = 1e-9
        cloud = PointCloud([[LAYOUT.min_range + eps, 0.0, -1.0]])
        bins = partition_czm(cloud, LAYOUT)
        assert bins[0] == 0  # zone 0, ring 0, sector 0

    def test_beyond_max_range_unbinned(self):
        cloud = PointCloud([[LAYOUT.max_range + 1.0, 0.0, 0.0]])
        assert partition_czm(cloud, LAYOUT)[0] == UNBINNED

    def test_below_min_range_unbinned(self):
        cloud = PointCloud([[0.5 * LAYOUT.min_range, 0.0, 0.0]])
        assert partition_czm(cloud, LAYOUT)[0] == UNBINNED

    def test_ring_of_points_analytic_bins(self):
        # fixed radius inside zone 1; bins must follow the analytic
        # arithmetic on the points' own polar coordinates
        radius = 15.0
        n = 48
        azim = (np.arange(n) + 0.37) * 2.0 * math.pi / n  # off the sector edges
        cloud = PointCloud(
            np.column_stack([radius * np.cos(azim), radius * np.sin(azim), np.zeros(n)])
        )
        bins = partition_czm(cloud, LAYOUT)
        lo, hi = LAYOUT.zone_ranges[1], LAYOUT.zone_ranges[2]
        ring = int((radius - lo) / (hi - lo) * LAYOUT.rings[1])
        offset = LAYOUT.bin_offsets()[1]
        oracle_azim = np.mod(np.arctan2(cloud.xyz[:, 1], cloud.xyz[:, 0]), 2 * math.pi)
        expected_sector = np.floor(oracle_azim / (2 * math.pi) * LAYOUT.sectors[1]).astype(int)
        expected = offset + ring * LAYOUT.sectors[1] + expected_sector
        assert np.array_equal(bins, expected)
        # all on one ring, sectors spread across the full circle
        assert len(np.unique(expected_sector)) == LAYOUT.sectors[1]

    def test_every_inrange_point_has_one_bin(self, rng):
        cloud = PointCloud(rng.uniform(-50, 50, (500, 3)))
        bins = partition_czm(cloud, LAYOUT)
        rngs = np.hypot(cloud.xyz[:, 0], cloud.xyz[:, 1])
        inside = (rngs >= LAYOUT.min_range) & (rngs < LAYOUT.max_range)
        assert np.all(bins[inside] >= 0)
        assert np.all(bins[~inside] == UNBINNED)
        assert bins.max() < LAYOUT.num_bins()


class TestFitPlaneRgpf:
    def test_exact_plane(self, rng):
        pts = np.column_stack(
            [rng.uniform(-2, 2, 50), rng.uniform(-2, 2, 50), np.full(50, -1.7)]
        )
        patch = fit_plane_rgpf(pts)
        assert patch is not None
        assert np.allclose(patch.normal, [0, 0, 1], atol=1e-9)
        assert patch.flatness < 1e-12
        assert abs(patch.centroid[2] + 1.7) < 1e-9

    def test_plane_with_outliers_vs_pca_oracle(self, rng):
        n_in, n_out = 90, 10
        inliers = np.column_stack(
            [rng.uniform(-3, 3, n_in), rng.uniform(-3, 3, n_in), -1.7 + rng.normal(0, 0.01, n_in)]
        )
        outliers = np.column_stack(
            [rng.uniform(-3, 3, n_out), rng.uniform(-3, 3, n_out), np.full(n_out, 2.0)]
        )
        patch = fit_plane_rgpf(np.concatenate([inliers, outliers]))
        # oracle: PCA on the true inlier subset alone
        centered = inliers - inliers.mean(axis=0)
        _, vecs = np.linalg.eigh(centered.T @ centered / n_in)
        oracle_normal = vecs[:, 0] if vecs[2, 0] > 0 else -vecs[:, 0]
        angle = math.degrees(math.acos(np.clip(abs(patch.normal @ oracle_normal), -1, 1)))
        assert angle < 2.0

    def test_two_points_no_patch(self):
        assert fit_plane_rgpf(np.array([[0.0, 0, 0], [1, 0, 0]])) is None


class TestGroundLikelihood:
    def test_vertical_wall_rejected(self):
        patch = PlanePatch(np.array([5.0, 0, -1.0]), np.array([1.0, 0, 0]), 0.001, 50)
        assert not ground_likelihood(patch, 0)

    def test_flat_low_patch_accepted(self):
        # synthetic vehicle-height ground: z_th(0) = -1.2, centroid below it
        patch = PlanePatch(np.array([3.0, 0, -1.7]), np.array([0.0, 0, 1.0]), 0.001, 80)
        assert ground_likelihood(patch, 0)

    def test_elevated_patch_rejected(self):
        # z_th(0) = -1.2 + 0.2*0; +0.5 is far above
        patch = PlanePatch(np.array([3.0, 0, 0.5]), np.array([0.0, 0, 1.0]), 0.001, 80)
        assert not ground_likelihood(patch, 0)

    def test_elevation_threshold_scales_with_zone(self):
        cfg = GroundConfig()
        z = cfg.elevation_base + cfg.elevation_step * 3 - 0.01
        patch = PlanePatch(np.array([45.0, 0, z]), np.array([0.0, 0, 1.0]), 0.001, 80)
        assert ground_likelihood(patch, 3, cfg)
        assert not ground_likelihood(patch, 0, cfg)

    def test_rough_patch_rejected(self):
        patch = PlanePatch(np.array([3.0, 0, -1.7]), np.array([0.0, 0, 1.0]), 0.5, 80)
        assert not ground_likelihood(patch, 0)


class TestSegmentGround:
    def test_synthetic_scene_accuracy(self, rng):
        cloud, truth = make_scene(rng)
        labels = segment_ground(cloud)
        plane_hit = labels[truth].mean()
        box_clean = (~labels[~truth]).mean()
        assert plane_hit >= 0.95
        assert box_clean >= 0.95

    def test_precision_recall(self, rng):
        for seed in (1, 2, 3):
            cloud, truth = make_scene(np.random.default_rng(seed))
            labels = segment_ground(cloud)
            tp = np.count_nonzero(labels & truth)
            precision = tp / max(np.count_nonzero(labels), 1)
            recall = tp / max(np.count_nonzero(truth), 1)
            assert precision >= 0.9
            assert recall >= 0.9

    def test_empty_cloud(self):
        assert segment_ground(PointCloud.empty()).shape == (0,)

    def test_all_wall_cloud(self, rng):
        z = rng.uniform(-1.7, 3.0, 2000)
        y = rng.uniform(-20.0, 20.0, 2000)
        cloud = PointCloud(np.column_stack([np.full(2000, 8.0), y, z]))
        labels = segment_ground(cloud)
        assert labels.sum() == 0

    def test_label_length_matches_cloud(self, rng):
        cloud, _ = make_scene(rng, n_plane=500, n_boxes=1, pts_per_box=50)
        assert segment_ground(cloud).shape[0] == len(cloud)

    def test_deterministic(self, rng):
        cloud, _ = make_scene(rng, n_plane=2000, n_boxes=2)
        a = segment_ground(cloud)
        b = segment_ground(cloud)
        assert np.array_equal(a, b)

    def test_z_rotation_keeps_label_counts(self, rng):
        cloud, _ = make_scene(rng, n_plane=4000, n_boxes=3)
        labels = segment_ground(cloud)
        rotated = PointCloud(cloud.xyz @ rot_z(37.0).T)
        labels_rot = segment_ground(rotated)
        # sector boundaries shift, so allow 1% churn in the label multiset
        assert abs(labels.sum() - labels_rot.sum()) <= 0.01 * len(cloud)
