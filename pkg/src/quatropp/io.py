"""Readers and writers for point clouds and trajectories.

Supported formats: KITTI velodyne ``.bin`` (little-endian float32 x/y/z/
intensity records), ASCII PLY, and KITTI pose files (12 reals per line,
row-major 3x4). All readers are deterministic: identical bytes produce
identical in-memory values.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import PointCloud, RigidMotion

__all__ = [
    "FormatError",
    "Trajectory",
    "read_kitti_bin",
    "write_kitti_bin",
    "read_ply_ascii",
    "write_ply_ascii",
    "read_kitti_poses",
]


class FormatError(ValueError):
    """Raised when an input file does not match its declared format."""


@dataclass
class Trajectory:
    """Ordered (timestamp, pose) sequence; timestamps fall back to frame index."""

    timestamps: np.ndarray
    poses: list

    def __post_init__(self):
        if len(self.poses) == 0:
            raise ValueError("trajectory must contain at least one pose")
        if len(self.timestamps) != len(self.poses):
            raise ValueError("timestamp/pose count mismatch")

    def __len__(self) -> int:
        return len(self.poses)

    def positions(self) -> np.ndarray:
        """(N, 3) array of pose translations."""
        return np.array([p.translation for p in self.poses])


def read_kitti_bin(path) -> PointCloud:
    """Read a KITTI velodyne scan: packed little-endian float32 (x, y, z, i)."""
    data = Path(path).read_bytes()
    if len(data) % 16 != 0:
        raise FormatError(
            f"{path}: byte length {len(data)} is not a multiple of 16 "
            f"(truncated record starts at byte offset {len(data) - len(data) % 16})"
        )
    if not data:
        return PointCloud.empty()
    records = np.frombuffer(data, dtype="<f4").reshape(-1, 4).astype(np.float64)
    return PointCloud(records[:, :3], records[:, 3])


def write_kitti_bin(cloud: PointCloud, path):
    intensity = cloud.intensity if cloud.intensity is not None else np.zeros(len(cloud))
    records = np.hstack([cloud.xyz, intensity.reshape(-1, 1)]).astype("<f4")
    Path(path).write_bytes(records.tobytes())


def read_ply_ascii(path) -> PointCloud:
    """Read an ASCII PLY vertex cloud.

    Float properties x, y, z are required; a property named ``intensity``
    is kept if present; any other properties are ignored.
    """
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise FormatError(f"{path}: missing 'ply' magic line")

    n_vertices = None
    properties = []
    in_vertex_element = False
    body_start = None
    saw_format = False
    for lineno, line in enumerate(lines[1:], start=2):
        tokens = line.split()
        if not tokens:
            continue
        if tokens[0] == "format":
            if tokens[1] != "ascii":
                raise FormatError(f"{path}: only ascii PLY is supported, got {tokens[1]}")
            saw_format = True
        elif tokens[0] == "element":
            in_vertex_element = tokens[1] == "vertex"
            if in_vertex_element:
                n_vertices = int(tokens[2])
        elif tokens[0] == "property" and in_vertex_element:
            properties.append(tokens[-1])
        elif tokens[0] == "end_header":
            body_start = lineno
            break
    if body_start is None or not saw_format:
        raise FormatError(f"{path}: incomplete PLY header")
    if n_vertices is None:
        raise FormatError(f"{path}: header has no vertex element")
    for required in ("x", "y", "z"):
        if required not in properties:
            raise FormatError(f"{path}: vertex element lacks property '{required}'")

    body = [ln for ln in lines[body_start:] if ln.strip()]
    if len(body) != n_vertices:
        raise FormatError(f"{path}: header declares {n_vertices} vertices, body has {len(body)}")
    if n_vertices == 0:
        return PointCloud.empty()
    try:
        values = np.array([[float(tok) for tok in ln.split()] for ln in body])
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric vertex data ({exc})") from None
    if values.shape[1] != len(properties):
        raise FormatError(
            f"{path}: vertex rows have {values.shape[1]} columns, header declares {len(properties)}"
        )
    cols = {name: values[:, k] for k, name in enumerate(properties)}
    xyz = np.column_stack([cols["x"], cols["y"], cols["z"]])
    return PointCloud(xyz, cols.get("intensity"))


def write_ply_ascii(cloud: PointCloud, path):
    """Write an ASCII PLY; coordinates keep at least 6 significant digits."""
    with_intensity = cloud.intensity is not None
    header = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
    ]
    if with_intensity:
        header.append("property float intensity")
    header.append("end_header")
    rows = []
    for k in range(len(cloud)):
        x, y, z = cloud.xyz[k]
        row = f"{x:.8g} {y:.8g} {z:.8g}"
        if with_intensity:
            row += f" {cloud.intensity[k]:.8g}"
        rows.append(row)
    Path(path).write_text("\n".join(header + rows) + "\n")


def _nearest_orthogonal(mat: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(mat)
    rot = u @ vt
    if np.linalg.det(rot) < 0:
        u[:, -1] *= -1.0
        rot = u @ vt
    return rot


def read_kitti_poses(path) -> Trajectory:
    """Read KITTI-style poses: 12 whitespace-separated reals per line.

    Rotations with orthonormality residual below 1e-3 are snapped to the
    nearest orthogonal matrix; larger residuals are rejected. Timestamps
    are frame indices (pose files carry none).
    """
    poses = []
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) != 12:
                raise FormatError(f"{path}:{lineno}: expected 12 values, got {len(tokens)}")
            try:
                vals = np.array([float(t) for t in tokens])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric token") from None
            mat = vals.reshape(3, 4)
            rot = mat[:, :3]
            residual = np.abs(rot.T @ rot - np.eye(3)).max()
            if residual >= 1e-3:
                raise FormatError(
                    f"{path}:{lineno}: rotation residual {residual:.2e} exceeds 1e-3"
                )
            poses.append(RigidMotion(_nearest_orthogonal(rot), mat[:, 3]))
    if not poses:
        raise FormatError(f"{path}: no poses found")
    return Trajectory(np.arange(len(poses), dtype=np.float64), poses)
