"""End-to-end registration: optional ground removal, feature matching,
graph pruning, decoupled pose estimation, and an optional ICP fine stage
seeded by the coarse result (coarse-to-fine mode).
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import features, pruning, solver
from .core import (
    PointCloud,
    QuatroConfig,
    RegistrationReport,
    RigidMotion,
    compose,
    geodesic_angle,
)
from .ground import GroundConfig, segment_ground

__all__ = [
    "PipelineMode",
    "register",
    "register_c2f",
    "icp_point_to_point",
    "mse_fitness",
    "COARSE_STAGES",
]

# stage order of the coarse pipeline; "ground" only appears when enabled
COARSE_STAGES = ("ground", "voxel", "normals", "fpfh", "reciprocal", "prune", "tims", "gnc", "cote")


@dataclass
class PipelineMode:
    """Switches of one registration run.

    ``ins`` is an optional (roll, pitch) pair in degrees used to
    pre-rotate the source cloud; ``sensor`` selects a feature-radius
    preset overriding the config radii; ``deterministic`` replaces the
    clique wall-clock budget with a node-expansion budget.
    """

    ground_seg: bool = True
    ins: tuple | None = None
    fine_align: bool = False
    sensor: str | None = None
    deterministic: bool = False
    clique_node_budget: int = pruning.DEFAULT_NODE_BUDGET
    ground: GroundConfig = field(default_factory=GroundConfig)

    def __post_init__(self):
        if self.ins is not None:
            roll, pitch = self.ins
            if not (math.isfinite(roll) and math.isfinite(pitch)):
                raise ValueError("INS roll/pitch must be finite")
        if self.sensor is not None and self.sensor not in features.SENSOR_PRESETS:
            raise ValueError(f"unknown sensor preset {self.sensor!r}")


def _apply_sensor_preset(config: QuatroConfig, mode: PipelineMode) -> QuatroConfig:
    if mode.sensor is None:
        return config
    voxel, r_normal, r_fpfh = features.SENSOR_PRESETS[mode.sensor]
    return dataclasses.replace(
        config, voxel_size=voxel, normal_radius=r_normal, fpfh_radius=r_fpfh
    )


def _failure_report(timings: dict, num_raw: int = 0) -> RegistrationReport:
    return RegistrationReport(
        motion=RigidMotion.identity(),
        num_raw_pairs=num_raw,
        num_pruned_pairs=0,
        num_final_inliers=0,
        converged=False,
        degenerate=True,
        stage_timings=timings,
    )


def register(
    src: PointCloud,
    tgt: PointCloud,
    config: QuatroConfig | None = None,
    mode: PipelineMode | None = None,
) -> RegistrationReport:
    """Coarse global registration of ``src`` onto ``tgt``.

    Stage order: ground (optional) -> voxel -> normals -> fpfh ->
    reciprocal -> prune -> tims -> gnc -> cote; ``stage_timings`` carries
    exactly these keys in milliseconds. Zero correspondences yield a
    failure report (identity motion, not converged) rather than an
    exception.
    """
    if len(src) == 0 or len(tgt) == 0:
        raise ValueError("register requires non-empty clouds")
    config = config or QuatroConfig()
    mode = mode or PipelineMode()
    config = _apply_sensor_preset(config, mode)
    timings: dict = {}

    ins_rot = None
    if mode.ins is not None:
        roll, pitch = mode.ins
        src = solver.ins_compensate(src, roll, pitch)
        ins_rot = solver.ins_rotation(roll, pitch)

    work_src, work_tgt = src, tgt
    if mode.ground_seg:
        t0 = time.perf_counter()
        src_labels = segment_ground(src, mode.ground)
        tgt_labels = segment_ground(tgt, mode.ground)
        work_src = PointCloud(src.xyz[~src_labels])
        work_tgt = PointCloud(tgt.xyz[~tgt_labels])
        timings["ground"] = (time.perf_counter() - t0) * 1e3
        if len(work_src) == 0 or len(work_tgt) == 0:
            return _failure_report(timings)

    t0 = time.perf_counter()
    down_src = features.voxel_downsample(work_src, config.voxel_size)
    down_tgt = features.voxel_downsample(work_tgt, config.voxel_size)
    timings["voxel"] = (time.perf_counter() - t0) * 1e3
    if len(down_src) == 0 or len(down_tgt) == 0:
        return _failure_report(timings)

    t0 = time.perf_counter()
    normals_src = features.estimate_normals(down_src, config.normal_radius)
    normals_tgt = features.estimate_normals(down_tgt, config.normal_radius)
    timings["normals"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    desc_src = features.compute_fpfh(down_src, normals_src, config.fpfh_radius)
    desc_tgt = features.compute_fpfh(down_tgt, normals_tgt, config.fpfh_radius)
    timings["fpfh"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    raw = features.match_reciprocal(desc_src, desc_tgt)
    timings["reciprocal"] = (time.perf_counter() - t0) * 1e3
    if len(raw) == 0:
        return _failure_report(timings)

    t0 = time.perf_counter()
    pruned = pruning.prune(
        raw,
        down_src,
        down_tgt,
        config,
        deterministic=mode.deterministic,
        node_budget=mode.clique_node_budget,
    )
    timings["prune"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    tims = solver.build_tims(down_src, down_tgt, pruned)
    timings["tims"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    gnc = solver.gnc_rotation(tims, config)
    timings["gnc"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    translation = solver.cote(down_src, down_tgt, pruned, gnc.rotation, config)
    timings["cote"] = (time.perf_counter() - t0) * 1e3

    rotation = gnc.rotation if ins_rot is None else gnc.rotation @ ins_rot
    if len(pruned) == 1:
        num_inliers = 1
    else:
        num_inliers = int(np.count_nonzero(gnc.weights > 0.5))
    num_inliers = min(num_inliers, len(pruned))
    return RegistrationReport(
        motion=RigidMotion(rotation, translation),
        num_raw_pairs=len(raw),
        num_pruned_pairs=len(pruned),
        num_final_inliers=num_inliers,
        converged=gnc.converged,
        degenerate=gnc.degenerate or num_inliers < 3,
        stage_timings=timings,
    )


def _procrustes(src_pts: np.ndarray, tgt_pts: np.ndarray) -> RigidMotion:
    """Least-squares rigid fit src -> tgt for paired points (SVD)."""
    mu_s = src_pts.mean(axis=0)
    mu_t = tgt_pts.mean(axis=0)
    h = (src_pts - mu_s).T @ (tgt_pts - mu_t)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidMotion(rot, mu_t - rot @ mu_s)


def mse_fitness(
    src: PointCloud, tgt: PointCloud, motion: RigidMotion, max_corr_dist: float = 1.0
) -> float:
    """Mean squared nearest-neighbor distance of the transformed source,
    over points with a neighbor within ``max_corr_dist`` (inf if none)."""
    tree = cKDTree(tgt.xyz)
    dist, _ = tree.query(motion.apply(src.xyz), distance_upper_bound=max_corr_dist)
    valid = np.isfinite(dist)
    if not valid.any():
        return math.inf
    return float(np.mean(dist[valid] ** 2))


def icp_point_to_point(
    src: PointCloud,
    tgt: PointCloud,
    init: RigidMotion | None = None,
    max_iters: int = 50,
    max_corr_dist: float = 1.0,
    tol: float = 1e-6,
):
    """Classic nearest-neighbor + SVD alignment refinement.

    Returns (motion, mse). Iterates until the motion update (rotation
    angle in radians plus translation norm) drops below ``tol``. When no
    correspondence falls within ``max_corr_dist`` the initial motion is
    returned with an infinite fitness.
    """
    motion = init or RigidMotion.identity()
    if len(src) == 0 or len(tgt) == 0:
        return motion, math.inf
    tree = cKDTree(tgt.xyz)
    for _ in range(max_iters):
        moved = motion.apply(src.xyz)
        dist, idx = tree.query(moved, distance_upper_bound=max_corr_dist)
        valid = np.isfinite(dist)
        if np.count_nonzero(valid) < 3:
            return motion, math.inf
        new_motion = _procrustes(src.xyz[valid], tgt.xyz[idx[valid]])
        delta = compose(new_motion, motion.inverse())
        step = math.radians(geodesic_angle(delta.rotation)) + float(
            np.linalg.norm(delta.translation)
        )
        motion = new_motion
        if step < tol:
            break
    return motion, mse_fitness(src, tgt, motion, max_corr_dist)


def register_c2f(
    src: PointCloud,
    tgt: PointCloud,
    config: QuatroConfig | None = None,
    mode: PipelineMode | None = None,
    icp_max_iters: int = 50,
    icp_max_corr_dist: float = 1.0,
) -> RegistrationReport:
    """Coarse-to-fine registration: the coarse result seeds a point-to-
    point ICP refinement and the fitness score is filled in.

    The fine stage runs on the voxel-downsampled full clouds (ground
    included; ICP benefits from the ground plane). A coarse failure
    (no correspondences) is propagated untouched.
    """
    config = config or QuatroConfig()
    mode = mode or PipelineMode()
    report = register(src, tgt, config, mode)
    if report.num_pruned_pairs == 0:
        return report
    eff = _apply_sensor_preset(config, mode)
    fine_src = features.voxel_downsample(src, eff.voxel_size)
    fine_tgt = features.voxel_downsample(tgt, eff.voxel_size)
    t0 = time.perf_counter()
    motion, mse = icp_point_to_point(
        fine_src, fine_tgt, report.motion, max_iters=icp_max_iters, max_corr_dist=icp_max_corr_dist
    )
    report.stage_timings["icp"] = (time.perf_counter() - t0) * 1e3
    report.motion = motion
    report.mse_fitness = mse
    return report
