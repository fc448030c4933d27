import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation as ScipyRotation

from conftest import random_motion, random_rotation
from quatropp.core import (
    CorrespondenceSet,
    Point3,
    PointCloud,
    QuatroConfig,
    RegistrationReport,
    RigidMotion,
    compose,
    geodesic_angle,
    rot_x,
    rot_y,
    rot_z,
    transform_cloud,
)


class TestPoint3:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            Point3(0.0, float("nan"), 0.0)

    def test_rejects_inf(self):
        with pytest.raises(ValueError):
            Point3(float("inf"), 0.0, 0.0)


class TestRigidMotion:
    def test_rejects_non_orthonormal(self):
        bad = np.eye(3)
        bad[0, 1] = 1e-3  # residual far above 1e-6
        with pytest.raises(ValueError):
            RigidMotion(bad, np.zeros(3))

    def test_rejects_reflection(self):
        with pytest.raises(ValueError):
            RigidMotion(np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_identity_orthonormal_within_1e9(self):
        m = RigidMotion.identity()
        assert np.abs(m.rotation.T @ m.rotation - np.eye(3)).max() < 1e-9
        assert abs(np.linalg.det(m.rotation) - 1.0) < 1e-9

    def test_inverse_round_trip(self, rng):
        for _ in range(20):
            m = random_motion(rng)
            r = compose(m, m.inverse())
            assert np.allclose(r.rotation, np.eye(3), atol=1e-12)
            assert np.allclose(r.translation, 0.0, atol=1e-12)


class TestCompose:
    def test_identity_case(self):
        ident = RigidMotion.identity()
        assert compose(ident, ident) == ident

    def test_group_closure_yaws(self):
        a = RigidMotion(rot_z(90.0), np.zeros(3))
        b = compose(a, a)
        assert np.allclose(b.rotation, rot_z(180.0), atol=1e-15)

    def test_matches_matrix_oracle(self, rng):
        # oracle: 4x4 homogeneous matrix product
        for _ in range(25):
            a, b = random_motion(rng), random_motion(rng)
            expected = a.matrix() @ b.matrix()
            got = compose(a, b).matrix()
            assert np.allclose(got, expected, atol=1e-12)

    def test_applies_b_then_a(self, rng):
        a, b = random_motion(rng), random_motion(rng)
        p = rng.normal(size=(5, 3))
        assert np.allclose(compose(a, b).apply(p), a.apply(b.apply(p)), atol=1e-12)


class TestGeodesicAngle:
    def test_identity_is_zero(self):
        assert geodesic_angle(np.eye(3)) == 0.0

    def test_yaw_30(self):
        assert abs(geodesic_angle(rot_z(30.0)) - 30.0) < 1e-12

    def test_roll_pitch_composition_vs_quaternion_oracle(self):
        rot = rot_x(5.0) @ rot_y(3.0)
        oracle = math.degrees(ScipyRotation.from_matrix(rot).magnitude())
        assert abs(geodesic_angle(rot) - oracle) < 1e-9

    def test_random_rotations_vs_oracle(self, rng):
        for _ in range(50):
            rot = random_rotation(rng)
            oracle = math.degrees(ScipyRotation.from_matrix(rot).magnitude())
            assert abs(geodesic_angle(rot) - oracle) < 1e-7

    def test_clamps_trace_overshoot(self):
        # accumulated rounding can push the trace of R R^T slightly past 3
        rot = rot_z(1e-9) @ rot_x(1e-9)
        assert 0.0 <= geodesic_angle(rot) <= 1e-5

    def test_range_is_0_180(self, rng):
        for _ in range(20):
            a = geodesic_angle(random_rotation(rng))
            assert 0.0 <= a <= 180.0


class TestTransformCloud:
    def test_identity_keeps_cloud(self, rng):
        cloud = PointCloud(rng.normal(size=(30, 3)), rng.random(30))
        out = transform_cloud(cloud, RigidMotion.identity())
        assert out == cloud

    def test_axis_symmetry(self):
        cloud = PointCloud([[1.0, 0.0, 0.0]])
        out = transform_cloud(cloud, RigidMotion(rot_z(90.0), np.zeros(3)))
        assert np.allclose(out.xyz[0], [0.0, 1.0, 0.0], atol=1e-12)

    def test_round_trip_oracle(self, rng):
        cloud = PointCloud(rng.uniform(-20, 20, (100, 3)))
        m = random_motion(rng)
        back = transform_cloud(transform_cloud(cloud, m), m.inverse())
        assert np.allclose(back.xyz, cloud.xyz, atol=1e-9)

    def test_isometry(self, rng):
        pts = rng.uniform(-5, 5, (40, 3))
        cloud = PointCloud(pts)
        m = random_motion(rng)
        moved = transform_cloud(cloud, m).xyz
        d_before = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
        d_after = np.linalg.norm(moved[:, None] - moved[None, :], axis=2)
        assert np.abs(d_before - d_after).max() < 1e-9

    def test_geodesic_of_round_trip_is_zero(self, rng):
        for _ in range(10):
            m = random_motion(rng)
            assert geodesic_angle(compose(m, m.inverse()).rotation) < 1e-9


class TestCorrespondenceSet:
    def test_rejects_duplicates(self):
        with pytest.raises(ValueError):
            CorrespondenceSet([(0, 1), (0, 1)])

    def test_canonical_order(self):
        cs = CorrespondenceSet([(3, 0), (1, 2), (1, 0)])
        assert [(c.src_idx, c.tgt_idx) for c in cs] == [(1, 0), (1, 2), (3, 0)]

    def test_bounds_validation(self):
        cs = CorrespondenceSet([(0, 5)])
        with pytest.raises(IndexError):
            cs.validate_bounds(3, 3)


class TestQuatroConfig:
    def test_defaults_valid(self):
        cfg = QuatroConfig()
        assert cfg.noise_bound == 0.3
        assert cfg.max_iters == 50
        assert cfg.gnc_factor == 1.4
        assert cfg.sigma_ij == 1.0

    def test_radius_relation_enforced(self):
        with pytest.raises(ValueError):
            QuatroConfig(voxel_size=0.5, normal_radius=0.4, fpfh_radius=0.65)
        with pytest.raises(ValueError):
            QuatroConfig(voxel_size=0.3, normal_radius=0.7, fpfh_radius=0.65)

    def test_gnc_factor_must_exceed_one(self):
        with pytest.raises(ValueError):
            QuatroConfig(gnc_factor=1.0)

    def test_noise_bound_positive(self):
        with pytest.raises(ValueError):
            QuatroConfig(noise_bound=0.0)

    def test_text_round_trip(self):
        cfg = QuatroConfig(noise_bound=0.4, max_iters=77, voxel_size=0.2, normal_radius=0.55)
        again = QuatroConfig.from_text(cfg.to_text())
        assert again == cfg

    def test_text_keys_are_field_names(self):
        text = QuatroConfig().to_text()
        for key in ("noise_bound", "max_iters", "gnc_factor", "voxel_size", "sigma_ij"):
            assert f"{key} = " in text

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError):
            QuatroConfig.from_text("bogus = 3\n")

    def test_comments_and_blanks_ignored(self):
        cfg = QuatroConfig.from_text("# comment\n\nnoise_bound = 0.5\n")
        assert cfg.noise_bound == 0.5


class TestRegistrationReport:
    def test_count_nesting_enforced(self):
        with pytest.raises(ValueError):
            RegistrationReport(
                motion=RigidMotion.identity(),
                num_raw_pairs=5,
                num_pruned_pairs=6,
                num_final_inliers=0,
            )
        with pytest.raises(ValueError):
            RegistrationReport(
                motion=RigidMotion.identity(),
                num_raw_pairs=5,
                num_pruned_pairs=3,
                num_final_inliers=4,
            )


@settings(max_examples=50, deadline=None)
@given(
    yaw=st.floats(-180.0, 180.0),
    tx=st.floats(-10.0, 10.0),
    ty=st.floats(-10.0, 10.0),
)
def test_compose_inverse_property(yaw, tx, ty):
    m = RigidMotion(rot_z(yaw), np.array([tx, ty, 0.0]))
    r = compose(m, m.inverse())
    assert np.allclose(r.matrix(), np.eye(4), atol=1e-12)
