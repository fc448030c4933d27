import numpy as np
import pytest

from quatropp.core import PointCloud
from quatropp.io import (
    FormatError,
    read_kitti_bin,
    read_kitti_poses,
    read_ply_ascii,
    write_kitti_bin,
    write_ply_ascii,
)


class TestKittiBin:
    def test_two_records(self, tmp_path):
        path = tmp_path / "a.bin"
        data = np.array([[1, 2, 3, 0.5], [4, 5, 6, 0.25]], dtype="<f4")
        path.write_bytes(data.tobytes())
        cloud = read_kitti_bin(path)
        assert len(cloud) == 2
        assert np.allclose(cloud.xyz, [[1, 2, 3], [4, 5, 6]])
        assert np.allclose(cloud.intensity, [0.5, 0.25])

    def test_empty_file(self, tmp_path):
        path = tmp_path / "e.bin"
        path.write_bytes(b"")
        assert len(read_kitti_bin(path)) == 0

    def test_divisibility_error(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"\x00" * 17)
        with pytest.raises(FormatError, match="offset"):
            read_kitti_bin(path)

    def test_write_read_round_trip(self, tmp_path, rng):
        cloud = PointCloud(rng.uniform(-50, 50, (64, 3)), rng.random(64))
        path = tmp_path / "rt.bin"
        write_kitti_bin(cloud, path)
        again = read_kitti_bin(path)
        assert np.allclose(again.xyz, cloud.xyz, atol=1e-4)

    def test_deterministic(self, tmp_path, rng):
        path = tmp_path / "d.bin"
        write_kitti_bin(PointCloud(rng.normal(size=(10, 3))), path)
        a = read_kitti_bin(path)
        b = read_kitti_bin(path)
        assert np.array_equal(a.xyz, b.xyz)


class TestPly:
    def test_round_trip_100_points(self, tmp_path, rng):
        cloud = PointCloud(rng.uniform(-10, 10, (100, 3)))
        path = tmp_path / "c.ply"
        write_ply_ascii(cloud, path)
        again = read_ply_ascii(path)
        assert len(again) == 100
        assert np.abs(again.xyz - cloud.xyz).max() < 1e-5

    def test_intensity_round_trip(self, tmp_path, rng):
        cloud = PointCloud(rng.uniform(-1, 1, (8, 3)), rng.random(8))
        path = tmp_path / "i.ply"
        write_ply_ascii(cloud, path)
        again = read_ply_ascii(path)
        assert np.abs(again.intensity - cloud.intensity).max() < 1e-6

    def test_extra_properties_ignored(self, tmp_path):
        path = tmp_path / "ext.ply"
        path.write_text(
            "ply\nformat ascii 1.0\nelement vertex 2\n"
            "property float x\nproperty float y\nproperty float z\n"
            "property float curvature\nend_header\n"
            "1 2 3 9.9\n4 5 6 8.8\n"
        )
        cloud = read_ply_ascii(path)
        assert np.allclose(cloud.xyz, [[1, 2, 3], [4, 5, 6]])
        assert cloud.intensity is None

    def test_header_count_mismatch(self, tmp_path):
        path = tmp_path / "bad.ply"
        path.write_text(
            "ply\nformat ascii 1.0\nelement vertex 3\n"
            "property float x\nproperty float y\nproperty float z\nend_header\n"
            "1 2 3\n"
        )
        with pytest.raises(FormatError, match="declares 3"):
            read_ply_ascii(path)

    def test_missing_header_element(self, tmp_path):
        path = tmp_path / "no_end.ply"
        path.write_text("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n1\n")
        with pytest.raises(FormatError):
            read_ply_ascii(path)

    def test_missing_xyz_property(self, tmp_path):
        path = tmp_path / "no_z.ply"
        path.write_text(
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property float x\nproperty float y\nend_header\n1 2\n"
        )
        with pytest.raises(FormatError, match="'z'"):
            read_ply_ascii(path)


class TestKittiPoses:
    def test_identity_line(self, tmp_path):
        path = tmp_path / "poses.txt"
        path.write_text("1 0 0 0 0 1 0 0 0 0 1 0\n")
        traj = read_kitti_poses(path)
        assert len(traj) == 1
        assert np.allclose(traj.poses[0].matrix(), np.eye(4))

    def test_two_lines(self, tmp_path):
        path = tmp_path / "poses.txt"
        path.write_text("1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 5 0 1 0 0 0 0 1 0\n")
        traj = read_kitti_poses(path)
        assert len(traj) == 2
        assert np.allclose(traj.poses[1].translation, [5, 0, 0])
        assert np.array_equal(traj.timestamps, [0.0, 1.0])

    def test_non_numeric_token_reports_line(self, tmp_path):
        path = tmp_path / "poses.txt"
        path.write_text("1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 x 0 1 0 0 0 0 1 0\n")
        with pytest.raises(FormatError, match=":2"):
            read_kitti_poses(path)

    def test_wrong_token_count(self, tmp_path):
        path = tmp_path / "poses.txt"
        path.write_text("1 0 0 0 0 1 0\n")
        with pytest.raises(FormatError, match="12"):
            read_kitti_poses(path)

    def test_small_residual_reorthonormalized(self, tmp_path):
        path = tmp_path / "poses.txt"
        path.write_text("1 0.0001 0 0 0 1 0 0 0 0 1 0\n")
        traj = read_kitti_poses(path)
        rot = traj.poses[0].rotation
        assert np.abs(rot.T @ rot - np.eye(3)).max() < 1e-12

    def test_large_residual_rejected(self, tmp_path):
        path = tmp_path / "poses.txt"
        path.write_text("1 0.1 0 0 0 1 0 0 0 0 1 0\n")
        with pytest.raises(FormatError, match="residual"):
            read_kitti_poses(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "poses.txt"
        path.write_text("")
        with pytest.raises(FormatError):
            read_kitti_poses(path)
