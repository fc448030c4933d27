"""Evaluation protocol: pair sampling, error metrics, and reporting.

Three samplers produce (source, target) frame pairs with ground-truth
motions: loop pairs (trajectory positions within a distance band and a
minimum index gap), odometry pairs (fixed frame interval), and augmented
pairs (odometry pairs with an extra yaw applied to the target cloud).
A registration counts as a success when the translation error is below
2 m and the rotation error below 10 degrees, both strict.
"""

from __future__ import annotations

import csv
import json
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from . import pipeline
from .core import (
    PointCloud,
    QuatroConfig,
    RegistrationReport,
    RigidMotion,
    compose,
    geodesic_angle,
    rot_z,
    transform_cloud,
)
from .io import Trajectory

__all__ = [
    "PairSpec",
    "EvalRow",
    "relative_motion",
    "sample_loop_pairs",
    "sample_odom_pairs",
    "sample_augmented_pairs",
    "evaluate_pair",
    "run_pairs",
    "compute_metrics",
    "write_csv",
    "summary_dict",
    "CSV_COLUMNS",
    "SUCCESS_T_ERR_M",
    "SUCCESS_R_ERR_DEG",
]

SUCCESS_T_ERR_M = 2.0
SUCCESS_R_ERR_DEG = 10.0

CSV_COLUMNS = (
    "kind,src,tgt,aug_yaw_deg,t_err_m,r_err_deg,success,runtime_ms,"
    "num_raw,num_pruned,num_inliers,degenerate"
)


@dataclass(frozen=True)
class PairSpec:
    """One evaluation pair: frame indices, ground-truth relative motion
    (source frame -> target frame), sampling kind, and the extra yaw (deg)
    applied to the target cloud for augmented pairs."""

    src_idx: int
    tgt_idx: int
    gt_motion: RigidMotion
    kind: str
    aug_yaw: float = 0.0


@dataclass
class EvalRow:
    pair: PairSpec
    motion: RigidMotion
    t_err: float
    r_err: float
    success: bool
    runtime_ms: float
    report: RegistrationReport

    @staticmethod
    def errors(estimate: RigidMotion, gt: RigidMotion):
        t_err = float(np.linalg.norm(estimate.translation - gt.translation))
        r_err = geodesic_angle(estimate.rotation.T @ gt.rotation)
        return t_err, r_err


def relative_motion(traj: Trajectory, src_idx: int, tgt_idx: int) -> RigidMotion:
    """Ground-truth motion mapping source-frame points into the target frame."""
    return compose(traj.poses[tgt_idx].inverse(), traj.poses[src_idx])


def sample_loop_pairs(
    traj: Trajectory,
    r_min: float,
    r_max: float,
    min_gap: int,
    n_sample: int,
    seed: int,
) -> list:
    """Uniformly sample loop pairs without replacement.

    The candidate set holds every ordered pair (s, t) whose positions are
    r_min..r_max meters apart (Euclidean) with |s - t| >= min_gap. At most
    ``n_sample`` pairs are drawn with a seeded generator.
    """
    if not r_min < r_max:
        raise ValueError("r_min must be below r_max")
    if min_gap < 1:
        raise ValueError("min_gap must be >= 1")
    pos = traj.positions()
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    n = len(traj)
    idx = np.arange(n)
    gap_ok = np.abs(idx[:, None] - idx[None, :]) >= min_gap
    mask = (dist >= r_min) & (dist <= r_max) & gap_ok
    cand_s, cand_t = np.nonzero(mask)
    if cand_s.size == 0:
        warnings.warn(
            f"no loop pairs in band [{r_min}, {r_max}] with gap >= {min_gap}", stacklevel=2
        )
        return []
    rng = np.random.default_rng(seed)
    take = min(n_sample, cand_s.size)
    chosen = rng.choice(cand_s.size, size=take, replace=False)
    chosen.sort()
    return [
        PairSpec(int(cand_s[k]), int(cand_t[k]), relative_motion(traj, int(cand_s[k]), int(cand_t[k])), "loop")
        for k in chosen
    ]


def sample_odom_pairs(traj: Trajectory, delta: int) -> list:
    """Pairs (delta*n, delta*(n+1)) in 0-based frames, while both exist."""
    if delta < 1:
        raise ValueError("delta must be >= 1")
    pairs = []
    n = 0
    while delta * (n + 1) <= len(traj) - 1:
        s, t = delta * n, delta * (n + 1)
        pairs.append(PairSpec(s, t, relative_motion(traj, s, t), "odom"))
        n += 1
    return pairs


def sample_augmented_pairs(traj: Trajectory, delta: int, yaw_list) -> list:
    """Odometry pairs crossed with extra target-cloud yaws (degrees).

    The ground truth composes the augmentation on top of the relative
    motion, matching a target cloud rotated at load time.
    """
    base = sample_odom_pairs(traj, delta)
    out = []
    for yaw in yaw_list:
        for pair in base:
            aug = RigidMotion(rot_z(float(yaw)), np.zeros(3))
            out.append(
                PairSpec(
                    pair.src_idx,
                    pair.tgt_idx,
                    compose(aug, pair.gt_motion),
                    "aug" if yaw != 0.0 else "odom",
                    aug_yaw=float(yaw),
                )
            )
    return out


def evaluate_pair(
    pair: PairSpec,
    src: PointCloud,
    tgt: PointCloud,
    config: QuatroConfig | None = None,
    mode: pipeline.PipelineMode | None = None,
    c2f: bool = False,
) -> EvalRow:
    """Register one pair and score it against the ground truth."""
    if pair.aug_yaw != 0.0:
        tgt = transform_cloud(tgt, RigidMotion(rot_z(pair.aug_yaw), np.zeros(3)))
    start = time.perf_counter()
    if c2f:
        report = pipeline.register_c2f(src, tgt, config, mode)
    else:
        report = pipeline.register(src, tgt, config, mode)
    runtime_ms = (time.perf_counter() - start) * 1e3
    t_err, r_err = EvalRow.errors(report.motion, pair.gt_motion)
    success = t_err < SUCCESS_T_ERR_M and r_err < SUCCESS_R_ERR_DEG
    return EvalRow(pair, report.motion, t_err, r_err, success, runtime_ms, report)


def _worker_count() -> int:
    env = os.environ.get("QUATRO_THREADS")
    if env:
        return max(1, int(env))
    return max(1, min(4, os.cpu_count() or 1))


def run_pairs(
    pairs,
    cloud_loader,
    config: QuatroConfig | None = None,
    mode: pipeline.PipelineMode | None = None,
    c2f: bool = False,
    workers: int | None = None,
) -> list:
    """Evaluate pairs on a bounded worker pool; rows keep pair order.

    ``cloud_loader(frame_idx)`` returns the PointCloud of a frame. The
    QUATRO_THREADS environment variable caps the pool size.
    """
    workers = workers or _worker_count()

    def job(pair):
        return evaluate_pair(pair, cloud_loader(pair.src_idx), cloud_loader(pair.tgt_idx), config, mode, c2f)

    if workers == 1:
        return [job(p) for p in pairs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, pairs))


def compute_metrics(rows) -> dict:
    """Aggregate rows: mean squared translation error (and its root),
    mean rotation error in degrees, and the success rate."""
    if not rows:
        raise ValueError("compute_metrics requires at least one row")
    t_sq = np.array([row.t_err**2 for row in rows])
    r = np.array([row.r_err for row in rows])
    success = np.array([row.success for row in rows])
    return {
        "n": len(rows),
        "t_avg_sq": float(t_sq.mean()),
        "t_rmse": float(np.sqrt(t_sq.mean())),
        "r_avg_deg": float(r.mean()),
        "success_rate": float(success.mean()),
    }


def write_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS.split(","))
        for row in rows:
            rep = row.report
            writer.writerow(
                [
                    row.pair.kind,
                    row.pair.src_idx,
                    row.pair.tgt_idx,
                    f"{row.pair.aug_yaw:.3f}",
                    f"{row.t_err:.6f}",
                    f"{row.r_err:.6f}",
                    int(row.success),
                    f"{row.runtime_ms:.3f}",
                    rep.num_raw_pairs,
                    rep.num_pruned_pairs,
                    rep.num_final_inliers,
                    int(rep.degenerate),
                ]
            )


def summary_dict(per_band_rows: dict, config: QuatroConfig, seed: int) -> dict:
    """JSON-ready benchmark summary: config echo, seed, per-band metrics."""
    cfg = {f.name: getattr(config, f.name) for f in fields(config)}
    return {
        "schema_version": 1,
        "seed": seed,
        "config": cfg,
        "bands": {label: compute_metrics(rows) for label, rows in per_band_rows.items() if rows},
    }


def write_summary_json(per_band_rows: dict, config: QuatroConfig, seed: int, path):
    with open(path, "w") as fh:
        json.dump(summary_dict(per_band_rows, config, seed), fh, indent=2)
        fh.write("\n")
