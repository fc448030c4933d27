"""Graph-based outlier rejection.

Correspondences are vertices; two correspondences are compatible (edge)
when their source and target inter-point distances agree within twice
the noise bound, which any common rigid motion must satisfy. Inliers are
selected as a heuristic maximal clique: a greedy clique along the
degeneracy order seeds a budgeted branch-and-bound that keeps the best
clique found when the budget expires.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from . import _kernels
from .core import CorrespondenceSet, PointCloud, QuatroConfig

__all__ = [
    "CompatGraph",
    "build_compat_graph",
    "max_clique_heuristic",
    "prune",
    "DEFAULT_NODE_BUDGET",
]

DEFAULT_NODE_BUDGET = 200_000

# above this vertex count the exact degeneracy peel (quadratic) is replaced
# by a static-degree order when seeding the greedy clique
_EXACT_PEEL_LIMIT = 4096

_CHUNK = 256


@dataclass
class CompatGraph:
    """Undirected compatibility graph over correspondences.

    ``neighbors`` holds one sorted int array per vertex; ``bitsets`` is
    the same adjacency packed 64 vertices per uint64 word for the clique
    kernels.
    """

    num_vertices: int
    neighbors: list
    bitsets: np.ndarray

    def has_edge(self, u: int, v: int) -> bool:
        return bool(self.bitsets[u, v >> 6] >> np.uint64(v & 63) & np.uint64(1))

    def degree(self, v: int) -> int:
        return len(self.neighbors[v])


def _pack_rows(adj_bool: np.ndarray, words: int) -> np.ndarray:
    rows, n = adj_bool.shape
    padded = np.zeros((rows, words * 64), dtype=bool)
    padded[:, :n] = adj_bool
    bits = np.packbits(padded, axis=1, bitorder="little")
    return bits.reshape(rows, words, 8).view(np.uint64).reshape(rows, words)


def build_compat_graph(
    src: PointCloud, tgt: PointCloud, pairs: CorrespondenceSet, noise_bound: float
) -> CompatGraph:
    """Edge (k, l) iff | ||p_k - p_l|| - ||q_k - q_l|| | <= 2 * noise_bound."""
    si, ti = pairs.as_arrays()
    pairs.validate_bounds(len(src), len(tgt))
    n = len(pairs)
    if n == 0:
        return CompatGraph(0, [], np.zeros((0, 1), dtype=np.uint64))
    p = src.xyz[si]
    q = tgt.xyz[ti]
    words = max(1, (n + 63) // 64)
    bitsets = np.empty((n, words), dtype=np.uint64)
    neighbors = []
    bound = 2.0 * noise_bound
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        dp = cdist(p[start:stop], p)
        dq = cdist(q[start:stop], q)
        mask = np.abs(dp - dq) <= bound
        mask[np.arange(stop - start), np.arange(start, stop)] = False
        bitsets[start:stop] = _pack_rows(mask, words)
        neighbors.extend(np.nonzero(row)[0] for row in mask)
    return CompatGraph(n, neighbors, bitsets)


def _peel_order(graph: CompatGraph) -> np.ndarray:
    """Degeneracy order: repeatedly remove the minimum-degree vertex."""
    n = graph.num_vertices
    degree = np.array([len(nb) for nb in graph.neighbors], dtype=np.int64)
    if n > _EXACT_PEEL_LIMIT:
        return np.argsort(degree, kind="stable")
    alive = np.ones(n, dtype=bool)
    order = np.empty(n, dtype=np.int64)
    work = degree.copy()
    for k in range(n):
        live = np.nonzero(alive)[0]
        v = live[np.argmin(work[live])]
        order[k] = v
        alive[v] = False
        work[graph.neighbors[v]] -= 1
    return order


def _degeneracy_greedy(graph: CompatGraph) -> list:
    """Greedy clique expansion along the reverse degeneracy order."""
    n = graph.num_vertices
    order = _peel_order(graph)
    clique: list = []
    members = np.zeros(n, dtype=bool)
    for v in order[::-1]:
        if members[graph.neighbors[v]].sum() == len(clique):
            clique.append(int(v))
            members[v] = True
    return sorted(clique)


def max_clique_heuristic(
    graph: CompatGraph,
    time_budget_ms: float | None = 200.0,
    node_budget: int | None = None,
) -> list:
    """Vertices of the best clique found within the budget (sorted).

    A ``node_budget`` replaces the wall-clock budget with a deterministic
    node-expansion budget. With no budget at all the search is exhaustive
    and returns a maximum clique (lexicographically smallest among equal
    sizes). The result is always a valid clique; the empty graph yields
    the empty set.
    """
    if graph.num_vertices == 0:
        return []
    if graph.num_vertices == 1:
        return [0]
    seed = _degeneracy_greedy(graph)
    time_budget_s = None
    if node_budget is None and time_budget_ms is not None:
        time_budget_s = time_budget_ms / 1000.0
    clique, _, _ = _kernels.max_clique(
        graph.bitsets, seed, node_budget=node_budget, time_budget_s=time_budget_s
    )
    return clique


def prune(
    raw_pairs: CorrespondenceSet,
    src: PointCloud,
    tgt: PointCloud,
    config: QuatroConfig,
    deterministic: bool = False,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> CorrespondenceSet:
    """Keep the correspondences selected by the clique, in original order."""
    if len(raw_pairs) == 0:
        raise ValueError("prune requires at least one correspondence")
    if len(raw_pairs) == 1:
        return raw_pairs
    graph = build_compat_graph(src, tgt, raw_pairs, config.noise_bound)
    clique = max_clique_heuristic(
        graph,
        time_budget_ms=None if deterministic else config.clique_time_budget,
        node_budget=node_budget if deterministic else None,
    )
    keep = sorted(clique)
    return CorrespondenceSet([raw_pairs[k] for k in keep])
