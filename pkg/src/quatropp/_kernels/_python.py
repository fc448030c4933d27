"""Pure-Python kernels; same contracts as the compiled versions.

The clique search mirrors the native algorithm step for step (same pivot
rule, same branch order, same expansion counting) so that both backends
return identical cliques under a node budget.
"""

from __future__ import annotations

import math
import time

import numpy as np

BACKEND_NAME = "python"

_TWO_PI = 2.0 * math.pi


def _rows_to_ints(adj_words: np.ndarray) -> list:
    return [int.from_bytes(row.tobytes(), "little") for row in np.ascontiguousarray(adj_words)]


def max_clique(adj_words, init_clique, node_budget=None, time_budget_s=None):
    """Budgeted branch-and-bound maximum-clique search.

    Parameters
    ----------
    adj_words : (n, ceil(n/64)) uint64 adjacency bitsets, no self loops.
    init_clique : incumbent clique (vertex list) used as the initial bound.
    node_budget : stop after this many node expansions (deterministic mode).
    time_budget_s : stop after this wall-clock time in seconds.

    Returns (clique, expansions, completed): the best clique found as a
    sorted list, the number of expansions, and whether the search ran to
    completion. Equal-size cliques tie-break to the lexicographically
    smallest vertex set (guaranteed when the search completes).
    """
    n = adj_words.shape[0]
    if n == 0:
        return [], 0, True
    adj = _rows_to_ints(adj_words)
    best = sorted(init_clique)
    best_size = len(best)
    expansions = 0
    aborted = False
    deadline = time.perf_counter() + time_budget_s if time_budget_s is not None else None

    def expand(r, p):
        nonlocal best, best_size, expansions, aborted
        if aborted:
            return
        expansions += 1
        if node_budget is not None and expansions > node_budget:
            aborted = True
            return
        if deadline is not None and time.perf_counter() > deadline:
            aborted = True
            return
        if len(r) > best_size:
            best = sorted(r)
            best_size = len(r)
        elif len(r) == best_size and best_size > 0:
            cand = sorted(r)
            if cand < best:
                best = cand
        if p == 0:
            return
        # bound: even taking every candidate cannot reach the incumbent size
        if len(r) + p.bit_count() < best_size:
            return
        # pivot = candidate with most candidate-neighbors (ties: lowest index)
        pivot = -1
        pivot_deg = -1
        scan = p
        while scan:
            u = (scan & -scan).bit_length() - 1
            scan &= scan - 1
            deg = (p & adj[u]).bit_count()
            if deg > pivot_deg:
                pivot_deg = deg
                pivot = u
        branch = p & ~adj[pivot]
        while branch:
            v = (branch & -branch).bit_length() - 1
            branch &= branch - 1
            expand(r + [v], p & adj[v])
            if aborted:
                return
            p &= ~(1 << v)

    expand([], (1 << n) - 1)
    return best, expansions, not aborted


def spfh_bin_counts(pts, normals, valid, pairs_i, pairs_j, n_bins=11):
    """Accumulate per-point pair-feature histograms over neighbor pairs.

    For every unordered pair both endpoints receive one count in each of
    the three feature sub-histograms (n_bins each). Pairs with an invalid
    normal, zero separation, or a degenerate local frame are skipped.
    Returns (hist (n, 3*n_bins) float64, pair_used (m,) bool).
    """
    n = pts.shape[0]
    hist = np.zeros((n, 3 * n_bins), dtype=np.float64)
    m = pairs_i.shape[0]
    used = np.zeros(m, dtype=bool)
    if m == 0:
        return hist, used

    pi = pairs_i.astype(np.int64)
    pj = pairs_j.astype(np.int64)
    ok = valid[pi].astype(bool) & valid[pj].astype(bool)

    d = pts[pj] - pts[pi]
    dist = np.linalg.norm(d, axis=1)
    ok &= dist > 0.0
    dhat = np.zeros_like(d)
    np.divide(d, dist[:, None], out=dhat, where=dist[:, None] > 0.0)

    ni = normals[pi]
    nj = normals[pj]
    a1 = np.einsum("ij,ij->i", ni, dhat)
    a2 = np.einsum("ij,ij->i", nj, dhat)
    swap = np.abs(a1) < np.abs(a2)
    n_src = np.where(swap[:, None], nj, ni)
    n_oth = np.where(swap[:, None], ni, nj)
    dhat = np.where(swap[:, None], -dhat, dhat)
    phi = np.einsum("ij,ij->i", n_src, dhat)

    v = np.cross(dhat, n_src)
    v_norm = np.linalg.norm(v, axis=1)
    ok &= v_norm > 1e-12
    vhat = np.zeros_like(v)
    np.divide(v, v_norm[:, None], out=vhat, where=v_norm[:, None] > 1e-12)
    w = np.cross(n_src, vhat)

    alpha = np.einsum("ij,ij->i", vhat, n_oth)
    theta = np.arctan2(np.einsum("ij,ij->i", w, n_oth), np.einsum("ij,ij->i", n_src, n_oth))

    b_alpha = np.clip(np.floor((alpha + 1.0) * 0.5 * n_bins), 0, n_bins - 1).astype(np.int64)
    b_phi = np.clip(np.floor((phi + 1.0) * 0.5 * n_bins), 0, n_bins - 1).astype(np.int64)
    b_theta = np.clip(np.floor((theta + math.pi) / _TWO_PI * n_bins), 0, n_bins - 1).astype(np.int64)

    width = 3 * n_bins
    flat = hist.reshape(-1)
    for endpoint in (pi, pj):
        base = endpoint[ok] * width
        flat_counts = np.bincount(
            np.concatenate(
                [base + b_alpha[ok], base + n_bins + b_phi[ok], base + 2 * n_bins + b_theta[ok]]
            ),
            minlength=n * width,
        )
        flat += flat_counts
    used[:] = ok
    return hist, used
