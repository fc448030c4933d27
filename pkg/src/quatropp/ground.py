"""Region-wise ground segmentation.

The cloud is partitioned by a concentric zone model (zones split into
rings and sectors in polar coordinates), a ground plane is fitted per bin
by iterative PCA over low-z seeds, and each fitted patch is validated by
uprightness / elevation / flatness checks before its supporting points
are labeled as ground.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import PointCloud

__all__ = [
    "CzmLayout",
    "GroundConfig",
    "PlanePatch",
    "partition_czm",
    "fit_plane_rgpf",
    "ground_likelihood",
    "segment_ground",
]

UNBINNED = -1


@dataclass(frozen=True)
class CzmLayout:
    """Concentric zone model: zones bounded by ``zone_ranges`` (meters),
    each zone split into ``rings`` radial and ``sectors`` azimuthal bins.

    Bin intervals are half-open [low, high) in both range and azimuth so
    every in-range point lands in exactly one bin.
    """

    zone_ranges: tuple = (1.0, 12.0, 24.0, 40.0, 60.0)
    rings: tuple = (2, 4, 4, 4)
    sectors: tuple = (16, 32, 54, 32)

    def __post_init__(self):
        if len(self.rings) != self.num_zones or len(self.sectors) != self.num_zones:
            raise ValueError("rings/sectors must list one count per zone")
        if any(r < 1 for r in self.rings) or any(s < 1 for s in self.sectors):
            raise ValueError("rings and sectors must be >= 1 in every zone")
        if not all(a < b for a, b in zip(self.zone_ranges, self.zone_ranges[1:])):
            raise ValueError("zone_ranges must be strictly increasing")

    @property
    def num_zones(self) -> int:
        return len(self.zone_ranges) - 1

    @property
    def min_range(self) -> float:
        return self.zone_ranges[0]

    @property
    def max_range(self) -> float:
        return self.zone_ranges[-1]

    def num_bins(self) -> int:
        return int(sum(r * s for r, s in zip(self.rings, self.sectors)))

    def bin_offsets(self) -> np.ndarray:
        """Flat-index offset of each zone's first bin."""
        sizes = [r * s for r, s in zip(self.rings, self.sectors)]
        return np.concatenate([[0], np.cumsum(sizes)])


@dataclass(frozen=True)
class GroundConfig:
    """Thresholds for plane fitting and ground-likelihood validation.

    ``elevation_base`` is the zone-0 ceiling on patch centroid height in
    the sensor frame; raise it (toward 0) for sensors mounted lower than a
    vehicle roof, e.g. hand-held rigs.
    """

    seed_fraction: float = 0.2
    seed_iters: int = 3
    dist_threshold: float = 0.125
    uprightness_deg: float = 30.0
    elevation_base: float = -1.2
    elevation_step: float = 0.2
    flatness_threshold: float = 0.08
    layout: CzmLayout = field(default_factory=CzmLayout)


@dataclass(frozen=True)
class PlanePatch:
    """Fitted plane of one bin: centroid, unit normal (z >= 0), flatness
    (smallest PCA eigenvalue, m^2) and the number of supporting points."""

    centroid: np.ndarray
    normal: np.ndarray
    flatness: float
    num_points: int


def partition_czm(cloud: PointCloud, layout: CzmLayout) -> np.ndarray:
    """Assign each point a flat bin index, or UNBINNED when out of range.

    Range is the 2D polar radius, azimuth is atan2(y, x) mapped to [0, 2pi).
    """
    n = len(cloud)
    bins = np.full(n, UNBINNED, dtype=np.int64)
    if n == 0:
        return bins
    x, y = cloud.xyz[:, 0], cloud.xyz[:, 1]
    rng = np.hypot(x, y)
    azim = np.mod(np.arctan2(y, x), 2.0 * math.pi)
    # guard: atan2 can return exactly 2*pi after mod for tiny negative angles
    azim[azim >= 2.0 * math.pi] = 0.0

    offsets = layout.bin_offsets()
    edges = np.asarray(layout.zone_ranges)
    zone = np.searchsorted(edges, rng, side="right") - 1
    in_range = (zone >= 0) & (zone < layout.num_zones) & (rng < layout.max_range)
    for z in range(layout.num_zones):
        mask = in_range & (zone == z)
        if not mask.any():
            continue
        lo, hi = edges[z], edges[z + 1]
        n_rings, n_sectors = layout.rings[z], layout.sectors[z]
        ring = np.floor((rng[mask] - lo) / (hi - lo) * n_rings).astype(np.int64)
        ring = np.clip(ring, 0, n_rings - 1)
        sector = np.floor(azim[mask] / (2.0 * math.pi) * n_sectors).astype(np.int64)
        sector = np.clip(sector, 0, n_sectors - 1)
        bins[mask] = offsets[z] + ring * n_sectors + sector
    return bins


def _pca_plane(points: np.ndarray):
    centroid = points.mean(axis=0)
    centered = points - centroid
    cov = centered.T @ centered / points.shape[0]
    eigvals, eigvecs = np.linalg.eigh(cov)
    normal = eigvecs[:, 0]
    if normal[2] < 0.0:
        normal = -normal
    return centroid, normal, float(max(eigvals[0], 0.0))


def fit_plane_rgpf(points: np.ndarray, config: GroundConfig = GroundConfig()) -> PlanePatch | None:
    """Iterative PCA plane fit seeded from the lowest-z fraction of a bin.

    Returns None when fewer than 3 points are available at any stage.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.shape[0] < 3:
        return None
    n_seed = max(3, int(math.ceil(config.seed_fraction * points.shape[0])))
    order = np.argsort(points[:, 2], kind="stable")
    subset = points[order[:n_seed]]
    centroid, normal, flatness = _pca_plane(subset)
    for _ in range(config.seed_iters):
        dist = np.abs((points - centroid) @ normal)
        selected = points[dist <= config.dist_threshold]
        if selected.shape[0] < 3:
            break
        subset = selected
        centroid, normal, flatness = _pca_plane(subset)
    return PlanePatch(centroid, normal, flatness, subset.shape[0])


def ground_likelihood(patch: PlanePatch, zone_idx: int, config: GroundConfig = GroundConfig()) -> bool:
    """Accept a patch as ground iff it is upright, low enough, and flat."""
    upright = patch.normal[2] >= math.cos(math.radians(config.uprightness_deg))
    elevation_limit = config.elevation_base + config.elevation_step * zone_idx
    low = patch.centroid[2] <= elevation_limit
    flat = patch.flatness <= config.flatness_threshold
    return bool(upright and low and flat)


def segment_ground(cloud: PointCloud, config: GroundConfig = GroundConfig()) -> np.ndarray:
    """Per-point boolean labels, True for ground.

    A point is ground when it lies within ``dist_threshold`` of the
    accepted ground patch of its own bin; unbinned points and points in
    bins without an accepted patch are non-ground.
    """
    labels = np.zeros(len(cloud), dtype=bool)
    if len(cloud) == 0:
        return labels
    layout = config.layout
    bins = partition_czm(cloud, layout)
    offsets = layout.bin_offsets()
    binned = bins >= 0
    if not binned.any():
        return labels
    order = np.argsort(bins[binned], kind="stable")
    idx_sorted = np.nonzero(binned)[0][order]
    bins_sorted = bins[idx_sorted]
    boundaries = np.nonzero(np.diff(bins_sorted))[0] + 1
    groups = np.split(idx_sorted, boundaries)
    for group in groups:
        bin_id = bins[group[0]]
        zone_idx = int(np.searchsorted(offsets, bin_id, side="right") - 1)
        patch = fit_plane_rgpf(cloud.xyz[group], config)
        if patch is None or not ground_likelihood(patch, zone_idx, config):
            continue
        dist = np.abs((cloud.xyz[group] - patch.centroid) @ patch.normal)
        labels[group[dist <= config.dist_threshold]] = True
    return labels
