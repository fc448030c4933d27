import numpy as np
import pytest

from quatropp.core import PointCloud, RigidMotion, rot_x, rot_y, rot_z


def random_rotation(rng) -> np.ndarray:
    """Uniform-ish random rotation via QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_motion(rng, t_scale: float = 10.0) -> RigidMotion:
    return RigidMotion(random_rotation(rng), rng.uniform(-t_scale, t_scale, 3))


def yaw_motion(yaw_deg: float, t) -> RigidMotion:
    return RigidMotion(rot_z(yaw_deg), np.asarray(t, dtype=float))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
