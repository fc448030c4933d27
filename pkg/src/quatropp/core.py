"""Domain types and geometry primitives shared by every pipeline stage.

Conventions used throughout the package:

* points are float64 arrays of shape (N, 3), meters, sensor frame
* rotations are 3x3 orthonormal matrices with det +1
* a motion maps source-frame points into the target frame: q = R p + t
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Point3",
    "PointCloud",
    "RigidMotion",
    "Correspondence",
    "CorrespondenceSet",
    "QuatroConfig",
    "RegistrationReport",
    "compose",
    "geodesic_angle",
    "transform_cloud",
    "rot_x",
    "rot_y",
    "rot_z",
]

ORTHONORMALITY_TOL = 1e-6


def _as_points(array) -> np.ndarray:
    pts = np.asarray(array, dtype=np.float64)
    if pts.size == 0:
        return pts.reshape(0, 3)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected (N, 3) point array, got shape {pts.shape}")
    return pts


@dataclass(frozen=True)
class Point3:
    """A single 3D point in meters; all components must be finite."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError(f"point components must be finite, got ({self.x}, {self.y}, {self.z})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)


class PointCloud:
    """Ordered collection of 3D points with optional per-point intensity.

    Wraps an (N, 3) float64 array. Index order is stable: serialization
    round-trips preserve it, and all per-point outputs (labels, normals,
    descriptors) are addressed by position in this array.
    """

    __slots__ = ("xyz", "intensity")

    def __init__(self, xyz, intensity=None):
        pts = _as_points(xyz)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        if intensity is not None:
            intensity = np.asarray(intensity, dtype=np.float64).reshape(-1)
            if intensity.shape[0] != pts.shape[0]:
                raise ValueError("intensity length does not match point count")
        self.xyz = pts
        self.intensity = intensity

    def __len__(self) -> int:
        return self.xyz.shape[0]

    def __getitem__(self, idx) -> np.ndarray:
        return self.xyz[idx]

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointCloud):
            return NotImplemented
        if self.xyz.shape != other.xyz.shape or not np.array_equal(self.xyz, other.xyz):
            return False
        if (self.intensity is None) != (other.intensity is None):
            return False
        return self.intensity is None or np.array_equal(self.intensity, other.intensity)

    def __repr__(self) -> str:
        return f"PointCloud({len(self)} points{', with intensity' if self.intensity is not None else ''})"

    @staticmethod
    def empty() -> "PointCloud":
        return PointCloud(np.zeros((0, 3)))


def _check_rotation(rotation: np.ndarray) -> np.ndarray:
    rot = np.asarray(rotation, dtype=np.float64)
    if rot.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {rot.shape}")
    residual = np.abs(rot.T @ rot - np.eye(3)).max()
    if residual > ORTHONORMALITY_TOL:
        raise ValueError(f"rotation is not orthonormal (residual {residual:.3e})")
    if np.linalg.det(rot) < 0.0:
        raise ValueError("rotation has negative determinant (reflection)")
    return rot


@dataclass(frozen=True)
class RigidMotion:
    """Rigid motion (R, t): maps a point p to R p + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = _check_rotation(self.rotation)
        trans = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(trans)):
            raise ValueError("translation must be finite")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @staticmethod
    def identity() -> "RigidMotion":
        return RigidMotion(np.eye(3), np.zeros(3))

    def inverse(self) -> "RigidMotion":
        rot_inv = self.rotation.T
        return RigidMotion(rot_inv, -rot_inv @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = _as_points(points)
        return pts @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        mat = np.eye(4)
        mat[:3, :3] = self.rotation
        mat[:3, 3] = self.translation
        return mat

    def __eq__(self, other) -> bool:
        if not isinstance(other, RigidMotion):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )


def compose(a: RigidMotion, b: RigidMotion) -> RigidMotion:
    """Motion equivalent to applying ``b`` first, then ``a``."""
    return RigidMotion(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def geodesic_angle(rotation: np.ndarray) -> float:
    """Rotation magnitude acos((tr(R) - 1) / 2) in degrees, in [0, 180].

    Evaluated as atan2(sin, cos) with the sine taken from the skew part
    of R: the same angle, but well conditioned where the clamped-acos
    form loses half the significant digits (near 0 and 180 degrees).
    """
    rot = np.asarray(rotation, dtype=np.float64)
    cos_term = (np.trace(rot) - 1.0) / 2.0
    axial = 0.5 * np.array(
        [rot[2, 1] - rot[1, 2], rot[0, 2] - rot[2, 0], rot[1, 0] - rot[0, 1]]
    )
    sin_term = float(np.linalg.norm(axial))
    return math.degrees(math.atan2(sin_term, cos_term))


def transform_cloud(cloud: PointCloud, motion: RigidMotion) -> PointCloud:
    """Apply a rigid motion pointwise; order and intensity are preserved."""
    return PointCloud(motion.apply(cloud.xyz), cloud.intensity)


def rot_x(angle_deg: float) -> np.ndarray:
    a = math.radians(angle_deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle_deg: float) -> np.ndarray:
    a = math.radians(angle_deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle_deg: float) -> np.ndarray:
    a = math.radians(angle_deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, order=True)
class Correspondence:
    """Index pair (i, j): the i-th source point matches the j-th target point."""

    src_idx: int
    tgt_idx: int


class CorrespondenceSet:
    """Ordered, duplicate-free tuple of correspondences.

    Canonical order is (src_idx, tgt_idx) ascending, which fixes the chain
    order used downstream when building paired difference vectors.
    """

    __slots__ = ("pairs",)

    def __init__(self, pairs: Iterable):
        seen = set()
        norm = []
        for p in pairs:
            c = p if isinstance(p, Correspondence) else Correspondence(int(p[0]), int(p[1]))
            key = (c.src_idx, c.tgt_idx)
            if key in seen:
                raise ValueError(f"duplicate correspondence {key}")
            seen.add(key)
            norm.append(c)
        norm.sort()
        self.pairs = tuple(norm)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __getitem__(self, idx) -> Correspondence:
        return self.pairs[idx]

    def __eq__(self, other) -> bool:
        if not isinstance(other, CorrespondenceSet):
            return NotImplemented
        return self.pairs == other.pairs

    def __repr__(self) -> str:
        return f"CorrespondenceSet({len(self.pairs)} pairs)"

    def as_arrays(self):
        """Return (src_indices, tgt_indices) as int64 arrays."""
        if not self.pairs:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        arr = np.array([(c.src_idx, c.tgt_idx) for c in self.pairs], dtype=np.int64)
        return arr[:, 0], arr[:, 1]

    def validate_bounds(self, n_src: int, n_tgt: int):
        for c in self.pairs:
            if not (0 <= c.src_idx < n_src and 0 <= c.tgt_idx < n_tgt):
                raise IndexError(f"correspondence {c} out of bounds ({n_src}, {n_tgt})")


@dataclass
class QuatroConfig:
    """Parameters of the registration back-end and the feature front-end.

    ``voxel_size < normal_radius < fpfh_radius`` must hold; the defaults are
    the 64-channel spinning-sensor preset.
    """

    noise_bound: float = 0.3
    max_iters: int = 50
    gnc_factor: float = 1.4
    voxel_size: float = 0.3
    normal_radius: float = 0.5
    fpfh_radius: float = 0.65
    sigma_ij: float = 1.0
    clique_time_budget: float = 200.0
    cost_tolerance: float = 1e-10

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.noise_bound > 0.0:
            raise ValueError("noise_bound must be positive")
        if not self.gnc_factor > 1.0:
            raise ValueError("gnc_factor must be > 1")
        if not (0.0 < self.voxel_size < self.normal_radius < self.fpfh_radius):
            raise ValueError(
                "radii must satisfy voxel_size < normal_radius < fpfh_radius, got "
                f"{self.voxel_size} / {self.normal_radius} / {self.fpfh_radius}"
            )
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.sigma_ij <= 0.0:
            raise ValueError("sigma_ij must be positive")

    def to_text(self) -> str:
        """Serialize as flat ``key = value`` lines, keys matching field names."""
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            lines.append(f"{f.name} = {value!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "QuatroConfig":
        known = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, _, val = line.partition("=")
            key = key.strip()
            if key not in known:
                raise ValueError(f"line {lineno}: unknown config key {key!r}")
            val = val.strip()
            values[key] = int(val) if key == "max_iters" else float(val)
        return cls(**values)


@dataclass
class RegistrationReport:
    """Result of one registration: estimated motion plus diagnostics.

    ``degenerate`` is set when fewer than 3 correspondences survive as
    inliers; the yaw-only estimate is still usable down to a single pair.
    ``stage_timings`` maps stage name to milliseconds.
    """

    motion: RigidMotion
    num_raw_pairs: int = 0
    num_pruned_pairs: int = 0
    num_final_inliers: int = 0
    converged: bool = False
    degenerate: bool = False
    stage_timings: dict = field(default_factory=dict)
    mse_fitness: float | None = None

    def __post_init__(self):
        if not (self.num_final_inliers <= self.num_pruned_pairs <= self.num_raw_pairs):
            raise ValueError(
                "inlier counts must be nested: "
                f"{self.num_final_inliers} <= {self.num_pruned_pairs} <= {self.num_raw_pairs}"
            )

    def to_json_dict(self) -> dict:
        return {
            "rotation": self.motion.rotation.tolist(),
            "translation": self.motion.translation.tolist(),
            "num_raw_pairs": self.num_raw_pairs,
            "num_pruned_pairs": self.num_pruned_pairs,
            "num_final_inliers": self.num_final_inliers,
            "converged": self.converged,
            "degenerate": self.degenerate,
            "stage_timings_ms": dict(self.stage_timings),
            "mse_fitness": self.mse_fitness,
        }
