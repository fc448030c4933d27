"""Correspondence front-end: voxel downsampling, surface normals, FPFH
descriptors and mutual nearest-neighbor matching.

Neighbor searches use exact k-d trees so results are reproducible;
descriptor distances are L2 and nearest-neighbor ties resolve to the
smallest index.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from . import _kernels
from .core import Correspondence, CorrespondenceSet, PointCloud

__all__ = [
    "SENSOR_PRESETS",
    "NormalCloud",
    "voxel_downsample",
    "estimate_normals",
    "compute_fpfh",
    "match_reciprocal",
]

# (voxel size, normal radius, fpfh radius) in meters per spinning-LiDAR model
SENSOR_PRESETS = {
    "vlp16": (0.1, 0.3, 0.45),
    "hdl64e": (0.3, 0.5, 0.65),
    "os1-64": (0.6, 1.5, 2.25),
}

FPFH_BINS = 11
FPFH_DIM = 3 * FPFH_BINS

_KEY_OFFSET = 1 << 20  # voxel indices are shifted to non-negative before packing


class NormalCloud:
    """Per-point unit normals plus a validity flag for starved neighborhoods."""

    __slots__ = ("normals", "valid")

    def __init__(self, normals: np.ndarray, valid: np.ndarray):
        self.normals = np.asarray(normals, dtype=np.float64)
        self.valid = np.asarray(valid, dtype=bool)
        if self.normals.shape != (self.valid.shape[0], 3):
            raise ValueError("normals must be (N, 3) matching the valid mask")

    def __len__(self) -> int:
        return self.valid.shape[0]


def voxel_downsample(cloud: PointCloud, voxel_size: float) -> PointCloud:
    """One point per occupied voxel: the centroid of its members.

    The voxel key is floor(coord / voxel_size) per axis and the output is
    sorted by key, which makes the operation deterministic.
    """
    if voxel_size <= 0.0:
        raise ValueError("voxel size must be positive")
    n = len(cloud)
    if n == 0:
        return PointCloud.empty()
    keys3 = np.floor(cloud.xyz / voxel_size).astype(np.int64)
    if np.abs(keys3).max() >= _KEY_OFFSET:
        raise ValueError("cloud extent too large for this voxel size")
    packed = (
        (keys3[:, 0] + _KEY_OFFSET) << 42
        | (keys3[:, 1] + _KEY_OFFSET) << 21
        | (keys3[:, 2] + _KEY_OFFSET)
    )
    uniq, inverse, counts = np.unique(packed, return_inverse=True, return_counts=True)
    n_vox = uniq.shape[0]
    centroids = np.column_stack(
        [np.bincount(inverse, weights=cloud.xyz[:, c], minlength=n_vox) for c in range(3)]
    ) / counts[:, None]
    intensity = None
    if cloud.intensity is not None:
        intensity = np.bincount(inverse, weights=cloud.intensity, minlength=n_vox) / counts
    return PointCloud(centroids, intensity)


def estimate_normals(cloud: PointCloud, radius: float, viewpoint=(0.0, 0.0, 0.0)) -> NormalCloud:
    """PCA normals over fixed-radius neighborhoods, oriented toward the viewpoint.

    Points with fewer than 3 neighbors (self included) are flagged invalid
    and get a zero normal.
    """
    if radius <= 0.0:
        raise ValueError("normal radius must be positive")
    n = len(cloud)
    normals = np.zeros((n, 3))
    valid = np.zeros(n, dtype=bool)
    if n == 0:
        return NormalCloud(normals, valid)

    pts = cloud.xyz
    tree = cKDTree(pts)
    pairs = tree.query_pairs(radius, output_type="ndarray")
    # accumulate first and second moments per neighborhood (self included)
    idx = np.concatenate([pairs[:, 0], pairs[:, 1]])
    other = np.concatenate([pairs[:, 1], pairs[:, 0]])
    counts = 1.0 + np.bincount(idx, minlength=n)
    sums = pts.copy()
    sq = np.einsum("ij,ik->ijk", pts, pts)
    for a in range(3):
        sums[:, a] += np.bincount(idx, weights=pts[other, a], minlength=n)
        for b in range(a, 3):
            acc = np.bincount(idx, weights=pts[other, a] * pts[other, b], minlength=n)
            sq[:, a, b] += acc
            if a != b:
                sq[:, b, a] += acc

    valid = counts >= 3
    if valid.any():
        mean = sums[valid] / counts[valid, None]
        cov = sq[valid] / counts[valid, None, None] - np.einsum("ij,ik->ijk", mean, mean)
        cov = 0.5 * (cov + np.transpose(cov, (0, 2, 1)))
        _, vecs = np.linalg.eigh(cov)
        nrm = vecs[:, :, 0]
        to_view = np.asarray(viewpoint, dtype=np.float64) - pts[valid]
        flip = np.einsum("ij,ij->i", nrm, to_view) < 0.0
        nrm[flip] = -nrm[flip]
        normals[valid] = nrm
    return NormalCloud(normals, valid)


def _normalize_blocks(hist: np.ndarray) -> np.ndarray:
    """Scale each 11-bin feature block to sum 100; all-zero blocks stay zero."""
    out = hist.reshape(hist.shape[0], 3, FPFH_BINS).copy()
    sums = out.sum(axis=2, keepdims=True)
    np.divide(out, sums, out=out, where=sums > 0.0)
    return (out * 100.0).reshape(hist.shape[0], FPFH_DIM)


def compute_fpfh(cloud: PointCloud, normals: NormalCloud, radius: float) -> np.ndarray:
    """33-dimensional FPFH descriptors (3 features x 11 bins).

    Two passes: per-point pair-feature histograms over neighbors within
    ``radius``, then each point adds the 1/distance-weighted average of
    its neighbors' histograms. Each feature block of the result sums to
    100, or the descriptor is all-zero (invalid normal / isolated point).
    """
    n = len(cloud)
    if len(normals) != n:
        raise ValueError("normals do not match the cloud")
    desc = np.zeros((n, FPFH_DIM))
    if n == 0:
        return desc

    pts = cloud.xyz
    tree = cKDTree(pts)
    pairs = tree.query_pairs(radius, output_type="ndarray")
    if pairs.size == 0:
        return desc
    spfh_raw, used = _kernels.spfh_bin_counts(
        pts, normals.normals, normals.valid.astype(np.uint8), pairs[:, 0], pairs[:, 1]
    )
    spfh = _normalize_blocks(spfh_raw)

    pi, pj = pairs[used, 0], pairs[used, 1]
    dist = np.linalg.norm(pts[pj] - pts[pi], axis=1)
    inv_d = 1.0 / dist
    rows = np.concatenate([pi, pj])
    cols = np.concatenate([pj, pi])
    weights = np.concatenate([inv_d, inv_d])
    w_mat = sparse.csr_matrix((weights, (rows, cols)), shape=(n, n))
    k = np.bincount(rows, minlength=n).astype(np.float64)

    neighbor_part = np.asarray(w_mat @ spfh)
    has_neighbors = k > 0
    neighbor_part[has_neighbors] /= k[has_neighbors, None]
    fused = spfh + neighbor_part
    fused[~has_neighbors] = 0.0
    fused[~normals.valid] = 0.0
    return _normalize_blocks(fused)


def _nearest_neighbor(queries: np.ndarray, targets: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Index of the L2-nearest target row per query row (ties: lowest index)."""
    sq_t = np.einsum("ij,ij->i", targets, targets)
    out = np.empty(queries.shape[0], dtype=np.int64)
    for start in range(0, queries.shape[0], chunk):
        block = queries[start : start + chunk]
        d = sq_t[None, :] - 2.0 * (block @ targets.T)
        out[start : start + chunk] = np.argmin(d, axis=1)
    return out


def match_reciprocal(desc_src: np.ndarray, desc_tgt: np.ndarray) -> CorrespondenceSet:
    """Mutual nearest-neighbor pairs under L2 descriptor distance.

    All-zero descriptors never participate. Either side empty (or fully
    zero) yields the empty set.
    """
    desc_src = np.asarray(desc_src, dtype=np.float64)
    desc_tgt = np.asarray(desc_tgt, dtype=np.float64)
    if desc_src.size == 0 or desc_tgt.size == 0:
        return CorrespondenceSet([])
    live_src = np.nonzero(np.any(desc_src != 0.0, axis=1))[0]
    live_tgt = np.nonzero(np.any(desc_tgt != 0.0, axis=1))[0]
    if live_src.size == 0 or live_tgt.size == 0:
        return CorrespondenceSet([])

    fwd = _nearest_neighbor(desc_src[live_src], desc_tgt[live_tgt])
    bwd = _nearest_neighbor(desc_tgt[live_tgt], desc_src[live_src])
    src_local = np.arange(live_src.size)
    mutual = bwd[fwd] == src_local
    pairs = [
        Correspondence(int(live_src[s]), int(live_tgt[fwd[s]]))
        for s in src_local[mutual]
    ]
    return CorrespondenceSet(pairs)
