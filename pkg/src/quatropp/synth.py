"""Synthetic urban-block scans with exact ground-truth labels and poses.

A scene is a flat ground plane plus axis-aligned building boxes and pole
cylinders. Scans emulate a spinning sensor: the ground is sampled along
concentric rings whose radii follow the beam elevation angles, structure
surfaces are sampled by area and thinned with range so that density
drops with distance, and buildings cast 2D shadows on the ground behind
them. Everything is driven by seeded generators, so a fixed seed
reproduces scenes bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import PointCloud, RigidMotion, rot_z
from .io import Trajectory

__all__ = ["SceneSpec", "Scene", "build_scene", "make_path", "scan_at", "generate_sequence"]


@dataclass
class SceneSpec:
    """Geometry and sampling parameters of a synthetic urban block."""

    extent: float = 45.0            # half-size of the block, m
    n_buildings: int = 6
    building_size_min: tuple = (6.0, 6.0, 4.0)
    building_size_max: tuple = (14.0, 14.0, 9.0)
    n_boxes: int = 24               # car/bin-scale obstacles with visible tops
    box_size_min: tuple = (1.2, 1.2, 0.8)
    box_size_max: tuple = (3.5, 2.2, 1.9)
    n_poles: int = 14
    pole_radius: float = 0.15
    pole_height_range: tuple = (3.0, 6.0)
    ground_z: float = -1.7
    clearance: float = 5.0          # keep structures this far from the path

    n_ground_rings: int = 24
    fov_down_deg: float = -24.0
    fov_up_deg: float = 2.5
    azimuth_step_deg: float = 0.8
    max_range: float = 55.0
    noise_sigma: float = 0.02
    wall_density: float = 25.0      # points per m^2 at the reference range
    box_density: float = 60.0
    pole_density: float = 120.0
    thinning_ref: float = 12.0      # keep prob = min(1, (ref / range)^power)
    thinning_power: float = 1.2

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SceneSpec":
        data = json.loads(text)
        for key in ("building_size_min", "building_size_max", "pole_height_range"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


@dataclass
class Scene:
    """Placed geometry: buildings and boxes as (xmin, xmax, ymin, ymax,
    height) rows, poles as (x, y, height) rows."""

    spec: SceneSpec
    buildings: np.ndarray
    boxes: np.ndarray
    poles: np.ndarray


def make_path(kind: str, n_frames: int, spacing: float = 1.0, offset: float = 4.0) -> Trajectory:
    """Ground-truth sensor trajectory.

    ``line`` drives along +x. ``loop`` drives out along +x, shifts
    laterally by ``offset`` meters and drives back, so revisit pairs with
    a large index gap sit ``offset``-and-up meters apart.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    poses = []
    if kind == "line":
        for k in range(n_frames):
            poses.append(RigidMotion(rot_z(0.0), np.array([k * spacing, 0.0, 0.0])))
    elif kind == "loop":
        half = (n_frames + 1) // 2
        for k in range(n_frames):
            if k < half:
                poses.append(RigidMotion(rot_z(0.0), np.array([k * spacing, 0.0, 0.0])))
            else:
                back = k - half
                x = (half - 1 - back) * spacing
                poses.append(RigidMotion(rot_z(180.0), np.array([x, offset, 0.0])))
    else:
        raise ValueError(f"unknown path kind {kind!r}")
    return Trajectory(np.arange(n_frames, dtype=np.float64), poses)


def build_scene(spec: SceneSpec, seed: int, path: Trajectory | None = None) -> Scene:
    """Place buildings and poles, keeping them clear of the path."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=[seed, 0xB11D]))
    anchors = path.positions()[:, :2] if path is not None else np.zeros((1, 2))

    def clear_of_path(x, y, margin):
        d = np.hypot(anchors[:, 0] - x, anchors[:, 1] - y)
        return bool(np.min(d) > margin)

    buildings = []
    attempts = 0
    while len(buildings) < spec.n_buildings and attempts < 400:
        attempts += 1
        w = rng.uniform(spec.building_size_min[0], spec.building_size_max[0])
        l = rng.uniform(spec.building_size_min[1], spec.building_size_max[1])
        h = rng.uniform(spec.building_size_min[2], spec.building_size_max[2])
        cx = rng.uniform(-spec.extent, spec.extent)
        cy = rng.uniform(-spec.extent, spec.extent)
        if not clear_of_path(cx, cy, spec.clearance + 0.5 * max(w, l)):
            continue
        buildings.append((cx - w / 2, cx + w / 2, cy - l / 2, cy + l / 2, h))
    boxes = []
    attempts = 0
    while len(boxes) < spec.n_boxes and attempts < 600:
        attempts += 1
        w = rng.uniform(spec.box_size_min[0], spec.box_size_max[0])
        l = rng.uniform(spec.box_size_min[1], spec.box_size_max[1])
        h = rng.uniform(spec.box_size_min[2], spec.box_size_max[2])
        cx = rng.uniform(-spec.extent, spec.extent)
        cy = rng.uniform(-spec.extent, spec.extent)
        if not clear_of_path(cx, cy, 2.0 + 0.5 * max(w, l)):
            continue
        box = (cx - w / 2, cx + w / 2, cy - l / 2, cy + l / 2, h)
        if buildings and _overlaps_any(box, np.array(buildings)):
            continue
        boxes.append(box)
    poles = []
    attempts = 0
    while len(poles) < spec.n_poles and attempts < 400:
        attempts += 1
        x = rng.uniform(-spec.extent, spec.extent)
        y = rng.uniform(-spec.extent, spec.extent)
        if not clear_of_path(x, y, 1.5):
            continue
        poles.append((x, y, rng.uniform(*spec.pole_height_range)))
    return Scene(
        spec,
        np.array(buildings).reshape(-1, 5),
        np.array(boxes).reshape(-1, 5),
        np.array(poles).reshape(-1, 3),
    )


def _overlaps_any(box, others: np.ndarray) -> bool:
    xmin, xmax, ymin, ymax, _ = box
    return bool(
        np.any(
            (others[:, 0] <= xmax)
            & (others[:, 1] >= xmin)
            & (others[:, 2] <= ymax)
            & (others[:, 3] >= ymin)
        )
    )


def _inside_footprint(xy: np.ndarray, buildings: np.ndarray) -> np.ndarray:
    inside = np.zeros(xy.shape[0], dtype=bool)
    for xmin, xmax, ymin, ymax, _ in buildings:
        inside |= (
            (xy[:, 0] >= xmin) & (xy[:, 0] <= xmax) & (xy[:, 1] >= ymin) & (xy[:, 1] <= ymax)
        )
    return inside


def _shadowed(origin: np.ndarray, xy: np.ndarray, buildings: np.ndarray) -> np.ndarray:
    """True where the 2D ray origin->point crosses a building footprint
    strictly before reaching the point (slab method per box)."""
    shadow = np.zeros(xy.shape[0], dtype=bool)
    d = xy - origin[None, :]
    for xmin, xmax, ymin, ymax, _ in buildings:
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (np.array([xmin, ymin]) - origin) / np.where(d != 0.0, d, np.nan)
            t2 = (np.array([xmax, ymax]) - origin) / np.where(d != 0.0, d, np.nan)
        t_lo = np.fmin(t1, t2)
        t_hi = np.fmax(t1, t2)
        enter = np.nanmax(t_lo, axis=1)
        exit_ = np.nanmin(t_hi, axis=1)
        # entering the box within (0, 1) means the box sits between
        # origin and point
        shadow |= (enter < exit_) & (enter > 0.0) & (enter < 1.0)
    return shadow


def _ground_points(scene: Scene, position: np.ndarray, rng) -> np.ndarray:
    spec = scene.spec
    height = -spec.ground_z  # sensor above ground
    elevations = np.linspace(
        math.radians(spec.fov_down_deg), math.radians(-1.0), spec.n_ground_rings
    )
    pts = []
    for elev in elevations:
        radius = height / math.tan(-elev)
        if radius > spec.max_range:
            continue
        n_az = max(8, int(round(360.0 / spec.azimuth_step_deg)))
        azim = np.arange(n_az) * (2.0 * math.pi / n_az) + rng.uniform(0.0, 2.0 * math.pi)
        x = position[0] + radius * np.cos(azim)
        y = position[1] + radius * np.sin(azim)
        pts.append(np.column_stack([x, y, np.full(n_az, spec.ground_z)]))
    if not pts:
        return np.zeros((0, 3))
    ground = np.concatenate(pts)
    keep = (np.abs(ground[:, 0]) <= spec.extent) & (np.abs(ground[:, 1]) <= spec.extent)
    ground = ground[keep]
    if scene.buildings.size:
        ground = ground[~_shadowed(position[:2], ground[:, :2], scene.buildings)]
    for aabbs in (scene.buildings, scene.boxes):
        if aabbs.size:
            ground = ground[~_inside_footprint(ground[:, :2], aabbs)]
    return ground


def _thinning_keep(ranges: np.ndarray, spec: SceneSpec, rng) -> np.ndarray:
    prob = np.minimum(1.0, (spec.thinning_ref / np.maximum(ranges, 1e-6)) ** spec.thinning_power)
    return rng.random(ranges.shape[0]) < prob


def _aabb_points(
    scene: Scene, aabbs: np.ndarray, position: np.ndarray, rng, density: float, tops: bool
) -> np.ndarray:
    """Sample visible side faces (and optionally top faces) of boxes."""
    spec = scene.spec
    chunks = []
    z_lo = spec.ground_z
    for xmin, xmax, ymin, ymax, h in aabbs:
        # four side faces: (axis, fixed coordinate, outward sign, span)
        faces = (
            (0, xmin, -1.0, (ymin, ymax)),
            (0, xmax, +1.0, (ymin, ymax)),
            (1, ymin, -1.0, (xmin, xmax)),
            (1, ymax, +1.0, (xmin, xmax)),
        )
        for axis, coord, sign, (lo, hi) in faces:
            facing = (position[axis] - coord) * sign
            if facing <= 0.0:
                continue  # back face
            if axis == 0:
                center = np.array([coord, 0.5 * (lo + hi)])
            else:
                center = np.array([0.5 * (lo + hi), coord])
            dist = float(np.hypot(*(center - position[:2])))
            if dist > spec.max_range:
                continue
            # cap the visible height by the upward field of view
            z_hi = min(z_lo + h, dist * math.tan(math.radians(spec.fov_up_deg)))
            if z_hi <= z_lo:
                continue
            area = (hi - lo) * (z_hi - z_lo)
            n_pts = rng.poisson(density * area)
            if n_pts == 0:
                continue
            along = rng.uniform(lo, hi, n_pts)
            z = rng.uniform(z_lo, z_hi, n_pts)
            if axis == 0:
                pts = np.column_stack([np.full(n_pts, coord), along, z])
            else:
                pts = np.column_stack([along, np.full(n_pts, coord), z])
            ranges = np.linalg.norm(pts[:, :2] - position[None, :2], axis=1)
            pts = pts[_thinning_keep(ranges, spec, rng) & (ranges <= spec.max_range)]
            chunks.append(pts)
        if tops:
            top_z = z_lo + h
            center = np.array([0.5 * (xmin + xmax), 0.5 * (ymin + ymax)])
            dist = float(np.hypot(*(center - position[:2])))
            if dist > spec.max_range or top_z >= 0.0:  # sensor below the lid
                continue
            area = (xmax - xmin) * (ymax - ymin)
            n_pts = rng.poisson(density * area)
            if n_pts == 0:
                continue
            pts = np.column_stack(
                [
                    rng.uniform(xmin, xmax, n_pts),
                    rng.uniform(ymin, ymax, n_pts),
                    np.full(n_pts, top_z),
                ]
            )
            ranges = np.linalg.norm(pts[:, :2] - position[None, :2], axis=1)
            pts = pts[_thinning_keep(ranges, spec, rng) & (ranges <= spec.max_range)]
            chunks.append(pts)
    return np.concatenate(chunks) if chunks else np.zeros((0, 3))


def _pole_points(scene: Scene, position: np.ndarray, rng) -> np.ndarray:
    spec = scene.spec
    chunks = []
    for x, y, h in scene.poles:
        dist = float(np.hypot(x - position[0], y - position[1]))
        if dist > spec.max_range:
            continue
        area = 2.0 * math.pi * spec.pole_radius * h
        n_pts = rng.poisson(spec.pole_density * area)
        if n_pts == 0:
            continue
        azim = rng.uniform(0.0, 2.0 * math.pi, n_pts)
        z = rng.uniform(spec.ground_z, spec.ground_z + h, n_pts)
        pts = np.column_stack(
            [x + spec.pole_radius * np.cos(azim), y + spec.pole_radius * np.sin(azim), z]
        )
        # keep the half facing the sensor
        toward = position[None, :2] - np.array([[x, y]])
        facing = (pts[:, :2] - np.array([[x, y]])) @ toward.T
        pts = pts[facing[:, 0] > 0.0]
        ranges = np.linalg.norm(pts[:, :2] - position[None, :2], axis=1)
        pts = pts[_thinning_keep(ranges, spec, rng)]
        chunks.append(pts)
    return np.concatenate(chunks) if chunks else np.zeros((0, 3))


def scan_at(scene: Scene, pose: RigidMotion, rng) -> tuple:
    """Simulate one scan from ``pose``; returns (cloud, ground_labels).

    The cloud is expressed in the sensor frame (pose maps sensor frame to
    world). Labels are exact by construction.
    """
    position = pose.translation
    ground = _ground_points(scene, position, rng)
    walls = _aabb_points(scene, scene.buildings, position, rng, scene.spec.wall_density, tops=False)
    boxes = _aabb_points(scene, scene.boxes, position, rng, scene.spec.box_density, tops=True)
    poles = _pole_points(scene, position, rng)
    world = np.concatenate([ground, walls, boxes, poles])
    labels = np.zeros(world.shape[0], dtype=bool)
    labels[: ground.shape[0]] = True
    if scene.spec.noise_sigma > 0.0:
        world = world + rng.normal(0.0, scene.spec.noise_sigma, world.shape)
    local = (world - position[None, :]) @ pose.rotation
    return PointCloud(local), labels


def generate_sequence(spec: SceneSpec, traj: Trajectory, seed: int):
    """Yield (cloud, labels) per trajectory frame, deterministically."""
    scene = build_scene(spec, seed, traj)
    for frame, pose in enumerate(traj.poses):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=[seed, 1 + frame]))
        yield scan_at(scene, pose, rng)
