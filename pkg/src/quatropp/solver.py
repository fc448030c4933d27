"""Decoupled pose estimation: paired difference vectors, graduated
non-convexity yaw estimation, and component-wise consensus translation.

Rotation is estimated yaw-only. The closed-form minimizer and all
rotation-stage residuals act on the xy-projection of the difference
vectors, so measurement error along z neither moves the estimate nor
down-weights a pair: such pairs behave as inliers for the rotation and
are dealt with per-axis by the translation stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import CorrespondenceSet, PointCloud, QuatroConfig, RigidMotion, rot_x, rot_y, rot_z

__all__ = [
    "TimSet",
    "GncState",
    "GncResult",
    "ConsensusInterval",
    "build_tims",
    "solve_yaw_fixed_weights",
    "update_weights",
    "gnc_rotation",
    "translation_discrepancies",
    "consensus_candidates",
    "cote_component",
    "cote",
    "ins_compensate",
    "estimate_motion",
]


@dataclass
class TimSet:
    """Paired difference vectors (alpha from source, beta from target) with
    per-pair weights in [0, 1]. ``degenerate`` marks the single-pair case
    where no differences exist and rotation falls back to identity."""

    alpha: np.ndarray
    beta: np.ndarray
    weights: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        if self.alpha.shape != self.beta.shape or self.alpha.shape[0] != self.weights.shape[0]:
            raise ValueError("alpha/beta/weights shapes disagree")
        if self.weights.size and (self.weights.min() < 0.0 or self.weights.max() > 1.0):
            raise ValueError("weights must lie in [0, 1]")

    def __len__(self) -> int:
        return self.alpha.shape[0]


@dataclass(frozen=True)
class GncState:
    """Snapshot of one graduated-non-convexity iteration."""

    mu: float
    iteration: int
    rotation: np.ndarray
    cost: float


@dataclass
class GncResult:
    rotation: np.ndarray
    weights: np.ndarray
    converged: bool
    degenerate: bool
    states: list = field(default_factory=list)


def build_tims(src: PointCloud, tgt: PointCloud, pairs: CorrespondenceSet) -> TimSet:
    """Chained differences of consecutive correspondences.

    Element k pairs correspondence k with k+1 (the last one wraps to the
    first), so the number of measurements equals the number of
    correspondences. All weights start at one. A single correspondence
    yields an empty, degenerate set (rotation stage is skipped).
    """
    k = len(pairs)
    if k == 0:
        raise ValueError("build_tims requires at least one correspondence")
    si, ti = pairs.as_arrays()
    if k == 1:
        empty = np.zeros((0, 3))
        return TimSet(empty, empty.copy(), np.zeros(0), degenerate=True)
    nxt = np.roll(np.arange(k), -1)
    alpha = src.xyz[si[nxt]] - src.xyz[si]
    beta = tgt.xyz[ti[nxt]] - tgt.xyz[ti]
    return TimSet(alpha, beta, np.ones(k))


def solve_yaw_fixed_weights(tims: TimSet, weights: np.ndarray | None = None):
    """Closed-form weighted yaw fit.

    Minimizes sum w_k ||beta_k - R_z(theta) alpha_k||^2; only the xy
    components constrain theta, so the minimizer is
    atan2(sum w (ax by - ay bx), sum w (ax bx + ay by)).

    Returns (rotation, degenerate): degenerate is True when every
    weighted xy-projection vanishes and the identity is returned.
    """
    w = tims.weights if weights is None else weights
    if len(tims) == 0:
        return np.eye(3), True
    ax, ay = tims.alpha[:, 0], tims.alpha[:, 1]
    bx, by = tims.beta[:, 0], tims.beta[:, 1]
    s = float(np.sum(w * (ax * by - ay * bx)))
    c = float(np.sum(w * (ax * bx + ay * by)))
    if s == 0.0 and c == 0.0:
        return np.eye(3), True
    return rot_z(math.degrees(math.atan2(s, c))), False


def _xy_sq_residuals(tims: TimSet, rotation: np.ndarray) -> np.ndarray:
    diff = tims.beta - tims.alpha @ rotation.T
    return diff[:, 0] ** 2 + diff[:, 1] ** 2


def update_weights(tims: TimSet, rotation: np.ndarray, mu: float, noise_bound: float) -> np.ndarray:
    """Truncated-loss weight update.

    With r the squared xy residual of a pair and cb2 the squared noise
    bound: w = 0 for r >= ((mu+1)/mu) cb2, w = cb * sqrt(mu (mu+1) / r) - mu
    on the middle interval, w = 1 below it. Continuous and non-increasing
    in r; the zero branch is checked first.
    """
    if mu <= 0.0:
        raise ValueError("mu must be positive")
    r = _xy_sq_residuals(tims, rotation)
    cb2 = noise_bound * noise_bound
    hi = (mu + 1.0) / mu * cb2
    lo = mu / (mu + 1.0) * cb2
    with np.errstate(divide="ignore", invalid="ignore"):
        middle = noise_bound * np.sqrt(mu * (mu + 1.0) / r) - mu
    w = np.where(r >= hi, 0.0, np.where(r >= lo, middle, 1.0))
    return np.clip(w, 0.0, 1.0)


def gnc_rotation(tims: TimSet, config: QuatroConfig) -> GncResult:
    """Alternating yaw / weight optimization with an annealed truncation.

    mu starts at cb^2 / (max residual - cb^2) and is multiplied by the
    configured factor every iteration (tracked as mu0 * factor^t so the
    schedule is exact). When every initial residual is already within the
    noise bound the annealing is skipped and a single unit-weight fit is
    returned. Stops when the weighted cost changes by less than
    ``cost_tolerance`` or after ``max_iters`` iterations.
    """
    if len(tims) == 0 or tims.degenerate:
        return GncResult(np.eye(3), np.zeros(0), converged=True, degenerate=True)
    cb2 = config.noise_bound * config.noise_bound
    base = TimSet(tims.alpha, tims.beta, np.ones(len(tims)))
    init_residuals = _xy_sq_residuals(base, np.eye(3))
    max_res = float(init_residuals.max())
    if max_res <= cb2:
        rotation, degenerate = solve_yaw_fixed_weights(base)
        return GncResult(rotation, np.ones(len(tims)), converged=True, degenerate=degenerate)

    mu0 = cb2 / (max_res - cb2)
    weights = np.ones(len(tims))
    prev_cost = math.inf
    states = []
    converged = False
    rotation = np.eye(3)
    for t in range(config.max_iters):
        mu = mu0 * config.gnc_factor**t
        rotation, degenerate = solve_yaw_fixed_weights(base, weights)
        if degenerate:
            return GncResult(np.eye(3), weights, converged=False, degenerate=True, states=states)
        weights = update_weights(base, rotation, mu, config.noise_bound)
        cost = float(np.sum(weights * _xy_sq_residuals(base, rotation)))
        states.append(GncState(mu, t, rotation, cost))
        if abs(prev_cost - cost) < config.cost_tolerance:
            converged = True
            break
        prev_cost = cost
    return GncResult(rotation, weights, converged=converged, degenerate=False, states=states)


def translation_discrepancies(
    src: PointCloud, tgt: PointCloud, pairs: CorrespondenceSet, rotation: np.ndarray
) -> np.ndarray:
    """Per-correspondence q_j - R p_i, in the order of the correspondence set."""
    si, ti = pairs.as_arrays()
    return tgt.xyz[ti] - src.xyz[si] @ np.asarray(rotation).T


@dataclass
class ConsensusInterval:
    """Per-component consensus search state: the sorted boundary multiset
    (2 per value), one probe per adjacent-boundary gap, and per-gap
    consensus sizes, candidate solutions and truncated costs (empty
    consensus: size 0, candidate NaN, cost inf)."""

    boundaries: np.ndarray
    probes: np.ndarray
    consensus_sizes: np.ndarray
    candidates: np.ndarray
    costs: np.ndarray


def consensus_candidates(values: np.ndarray, sigma: float, noise_bound: float) -> ConsensusInterval:
    """Evaluate every interval-midpoint candidate of the consensus search."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise ValueError("consensus search requires at least one value")
    half = sigma * noise_bound
    boundaries = np.sort(np.concatenate([v - half, v + half]), kind="stable")
    probes = 0.5 * (boundaries[:-1] + boundaries[1:])

    lo_idx = np.searchsorted(v, probes - half, side="left")
    hi_idx = np.searchsorted(v, probes + half, side="right")
    sizes = hi_idx - lo_idx

    prefix = np.concatenate([[0.0], np.cumsum(v)])
    prefix_sq = np.concatenate([[0.0], np.cumsum(v * v)])
    with np.errstate(invalid="ignore"):
        candidates = np.where(
            sizes > 0, (prefix[hi_idx] - prefix[lo_idx]) / np.maximum(sizes, 1), np.nan
        )

    # truncated cost of each candidate over *all* values, via prefix sums of
    # the values inside the candidate's own inlier window
    cb2 = noise_bound * noise_bound
    inv_sig2 = 1.0 / (sigma * sigma)
    c_lo = np.searchsorted(v, candidates - half, side="left")
    c_hi = np.searchsorted(v, candidates + half, side="right")
    c_lo = np.where(sizes > 0, c_lo, 0)
    c_hi = np.where(sizes > 0, c_hi, 0)
    n_in = c_hi - c_lo
    sum_v = prefix[c_hi] - prefix[c_lo]
    sum_v2 = prefix_sq[c_hi] - prefix_sq[c_lo]
    quad = n_in * candidates**2 - 2.0 * candidates * sum_v + sum_v2
    costs = np.where(
        sizes > 0, quad * inv_sig2 + (v.size - n_in) * cb2, np.inf
    )
    return ConsensusInterval(boundaries, probes, sizes, candidates, costs)


def cote_component(values, sigma: float, noise_bound: float) -> float:
    """Component-wise consensus estimate of a 1D translation.

    Candidates are the consensus means at every gap midpoint of the
    sorted boundary set; the one minimizing the truncated cost over all
    values wins. Ties prefer the larger consensus, then the earlier gap.
    """
    interval = consensus_candidates(values, sigma, noise_bound)
    order = np.lexsort(
        (np.arange(interval.costs.size), -interval.consensus_sizes, interval.costs)
    )
    return float(interval.candidates[order[0]])


def cote(
    src: PointCloud,
    tgt: PointCloud,
    pairs: CorrespondenceSet,
    rotation: np.ndarray,
    config: QuatroConfig,
) -> np.ndarray:
    """Translation vector: independent consensus searches on x, y and z."""
    if len(pairs) == 0:
        raise ValueError("cote requires at least one correspondence")
    v = translation_discrepancies(src, tgt, pairs, rotation)
    return np.array(
        [cote_component(v[:, axis], config.sigma_ij, config.noise_bound) for axis in range(3)]
    )


def ins_compensate(src: PointCloud, roll_deg: float, pitch_deg: float) -> PointCloud:
    """Rotate the source cloud into the roll/pitch-compensated frame.

    The pre-rotation is R_y(pitch) R_x(roll); after solving, the full
    rotation to report is R_z(yaw) R_y(pitch) R_x(roll).
    """
    if not (math.isfinite(roll_deg) and math.isfinite(pitch_deg)):
        raise ValueError("roll/pitch angles must be finite")
    pre = rot_y(pitch_deg) @ rot_x(roll_deg)
    return PointCloud(src.xyz @ pre.T, src.intensity)


def ins_rotation(roll_deg: float, pitch_deg: float) -> np.ndarray:
    return rot_y(pitch_deg) @ rot_x(roll_deg)


def estimate_motion(
    src: PointCloud, tgt: PointCloud, pairs: CorrespondenceSet, config: QuatroConfig
):
    """Run the decoupled solver on pruned correspondences.

    Returns (motion, gnc_result). The motion rotation is yaw-only; with a
    single correspondence the rotation degenerates to identity and the
    translation is still estimated.
    """
    tims = build_tims(src, tgt, pairs)
    result = gnc_rotation(tims, config)
    translation = cote(src, tgt, pairs, result.rotation, config)
    return RigidMotion(result.rotation, translation), result
