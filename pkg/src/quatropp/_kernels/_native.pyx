# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: budgeted max-clique search and SPFH pair binning.

Mirrors quatropp._kernels._python exactly (same pivot rule, branch order
and expansion counting) so both backends agree under a node budget.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport atan2, floor, sqrt, M_PI
from libc.stdlib cimport free, malloc
from libc.string cimport memcpy

cnp.import_array()

BACKEND_NAME = "native"

cdef extern from *:
    """
    #include <time.h>
    static inline int qpp_popcount64(unsigned long long x) { return __builtin_popcountll(x); }
    static inline int qpp_ctz64(unsigned long long x) { return __builtin_ctzll(x); }
    static inline double qpp_monotonic(void) {
        struct timespec ts;
        clock_gettime(CLOCK_MONOTONIC, &ts);
        return (double)ts.tv_sec + 1e-9 * (double)ts.tv_nsec;
    }
    """
    int qpp_popcount64(unsigned long long x) nogil
    int qpp_ctz64(unsigned long long x) nogil
    double qpp_monotonic() nogil

ctypedef unsigned long long u64


cdef struct Search:
    u64* adj          # n * words adjacency bitsets
    u64* pstack       # (levels) * words candidate sets
    int* rstack       # current clique, by depth
    int* best         # best clique, sorted
    int* scratch      # sort buffer
    int n
    int words
    int best_size
    long long expansions
    long long node_budget   # < 0: unlimited
    double deadline          # < 0: unlimited
    bint aborted


cdef inline int _popcount_set(u64* s, int words) nogil:
    cdef int k, c = 0
    for k in range(words):
        c += qpp_popcount64(s[k])
    return c


cdef inline int _popcount_and(u64* a, u64* b, int words) nogil:
    cdef int k, c = 0
    for k in range(words):
        c += qpp_popcount64(a[k] & b[k])
    return c


cdef void _record(Search* st, int depth) nogil:
    """Insertion-sort the current clique and keep it if better or lex-smaller."""
    cdef int k, j, v
    cdef bint smaller
    for k in range(depth):
        st.scratch[k] = st.rstack[k]
    for k in range(1, depth):
        v = st.scratch[k]
        j = k - 1
        while j >= 0 and st.scratch[j] > v:
            st.scratch[j + 1] = st.scratch[j]
            j -= 1
        st.scratch[j + 1] = v
    if depth > st.best_size:
        smaller = True
    else:
        smaller = False
        for k in range(depth):
            if st.scratch[k] != st.best[k]:
                smaller = st.scratch[k] < st.best[k]
                break
    if smaller:
        for k in range(depth):
            st.best[k] = st.scratch[k]
        st.best_size = depth


cdef void _expand(Search* st, int depth) nogil:
    cdef int words = st.words
    cdef u64* p = st.pstack + depth * words
    cdef u64* child = st.pstack + (depth + 1) * words
    cdef u64 word, bit
    cdef int k, u, v, deg, pivot, pivot_deg, base

    if st.aborted:
        return
    st.expansions += 1
    if st.node_budget >= 0 and st.expansions > st.node_budget:
        st.aborted = True
        return
    if st.deadline >= 0.0 and (st.expansions & 255) == 0 and qpp_monotonic() > st.deadline:
        st.aborted = True
        return

    if depth > st.best_size or (depth == st.best_size and depth > 0):
        _record(st, depth)

    cdef int remaining = _popcount_set(p, words)
    if remaining == 0:
        return
    if depth + remaining < st.best_size:
        return

    # pivot = candidate with most candidate-neighbors (ties: lowest index)
    pivot = -1
    pivot_deg = -1
    for k in range(words):
        word = p[k]
        base = k << 6
        while word:
            u = base + qpp_ctz64(word)
            word &= word - 1
            deg = _popcount_and(p, st.adj + u * words, words)
            if deg > pivot_deg:
                pivot_deg = deg
                pivot = u

    for k in range(words):
        word = p[k] & ~(st.adj + pivot * words)[k]
        base = k << 6
        while word:
            v = base + qpp_ctz64(word)
            bit = (<u64>1) << (v & 63)
            word &= word - 1
            st.rstack[depth] = v
            for u in range(words):
                child[u] = p[u] & (st.adj + v * words)[u]
            _expand(st, depth + 1)
            if st.aborted:
                return
            p[v >> 6] &= ~bit


def max_clique(adj_words, init_clique, node_budget=None, time_budget_s=None):
    """Budgeted branch-and-bound maximum clique; see the python backend."""
    cdef cnp.ndarray[u64, ndim=2, mode="c"] adj = np.ascontiguousarray(adj_words, dtype=np.uint64)
    cdef int n = adj.shape[0]
    if n == 0:
        return [], 0, True
    cdef int words = adj.shape[1]

    # clique size is bounded by max degree + 1, so is the recursion depth
    cdef int maxdeg = 0, d, i
    for i in range(n):
        d = _popcount_set(&adj[i, 0], words)
        if d > maxdeg:
            maxdeg = d
    cdef int levels = maxdeg + 3

    cdef Search st
    st.adj = &adj[0, 0]
    st.n = n
    st.words = words
    st.expansions = 0
    st.node_budget = -1 if node_budget is None else <long long>node_budget
    st.deadline = -1.0 if time_budget_s is None else qpp_monotonic() + <double>time_budget_s
    st.aborted = False
    st.pstack = <u64*>malloc(<size_t>levels * words * sizeof(u64))
    st.rstack = <int*>malloc(<size_t>levels * sizeof(int))
    st.best = <int*>malloc(<size_t>n * sizeof(int))
    st.scratch = <int*>malloc(<size_t>levels * sizeof(int))
    if st.pstack == NULL or st.rstack == NULL or st.best == NULL or st.scratch == NULL:
        free(st.pstack); free(st.rstack); free(st.best); free(st.scratch)
        raise MemoryError

    init = sorted(init_clique)
    st.best_size = len(init)
    for i in range(st.best_size):
        st.best[i] = init[i]

    cdef int k
    for k in range(words):
        st.pstack[k] = 0
    for i in range(n):
        st.pstack[i >> 6] |= (<u64>1) << (i & 63)

    with nogil:
        _expand(&st, 0)

    result = [st.best[i] for i in range(st.best_size)]
    expansions = int(st.expansions)
    completed = not st.aborted
    free(st.pstack); free(st.rstack); free(st.best); free(st.scratch)
    return result, expansions, completed


def spfh_bin_counts(pts, normals, valid, pairs_i, pairs_j, int n_bins=11):
    """Accumulate per-point pair-feature histograms over neighbor pairs."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] p = np.ascontiguousarray(pts, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] nrm = np.ascontiguousarray(normals, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1, mode="c"] ok = np.ascontiguousarray(valid, dtype=np.uint8)
    cdef cnp.ndarray[cnp.int64_t, ndim=1, mode="c"] pi = np.ascontiguousarray(pairs_i, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1, mode="c"] pj = np.ascontiguousarray(pairs_j, dtype=np.int64)

    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t m = pi.shape[0]
    cdef cnp.ndarray[double, ndim=2, mode="c"] hist = np.zeros((n, 3 * n_bins), dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1, mode="c"] used = np.zeros(m, dtype=np.uint8)
    if m == 0:
        return hist, used.view(np.bool_)

    cdef Py_ssize_t k
    cdef long long a, b
    cdef double dx, dy, dz, dist, inv
    cdef double nax, nay, naz, nbx, nby, nbz, tx, ty, tz
    cdef double a1, a2, phi, vx, vy, vz, vn, wx, wy, wz, alpha, theta
    cdef int b_alpha, b_phi, b_theta
    cdef int width = 3 * n_bins
    cdef double two_pi = 2.0 * M_PI

    with nogil:
        for k in range(m):
            a = pi[k]
            b = pj[k]
            if ok[a] == 0 or ok[b] == 0:
                continue
            dx = p[b, 0] - p[a, 0]
            dy = p[b, 1] - p[a, 1]
            dz = p[b, 2] - p[a, 2]
            dist = sqrt(dx * dx + dy * dy + dz * dz)
            if dist <= 0.0:
                continue
            inv = 1.0 / dist
            dx *= inv; dy *= inv; dz *= inv
            nax = nrm[a, 0]; nay = nrm[a, 1]; naz = nrm[a, 2]
            nbx = nrm[b, 0]; nby = nrm[b, 1]; nbz = nrm[b, 2]
            a1 = nax * dx + nay * dy + naz * dz
            a2 = nbx * dx + nby * dy + nbz * dz
            if (a1 if a1 >= 0 else -a1) < (a2 if a2 >= 0 else -a2):
                tx = nax; ty = nay; tz = naz
                nax = nbx; nay = nby; naz = nbz
                nbx = tx; nby = ty; nbz = tz
                dx = -dx; dy = -dy; dz = -dz
            phi = nax * dx + nay * dy + naz * dz
            vx = dy * naz - dz * nay
            vy = dz * nax - dx * naz
            vz = dx * nay - dy * nax
            vn = sqrt(vx * vx + vy * vy + vz * vz)
            if vn <= 1e-12:
                continue
            inv = 1.0 / vn
            vx *= inv; vy *= inv; vz *= inv
            wx = nay * vz - naz * vy
            wy = naz * vx - nax * vz
            wz = nax * vy - nay * vx
            alpha = vx * nbx + vy * nby + vz * nbz
            theta = atan2(wx * nbx + wy * nby + wz * nbz, nax * nbx + nay * nby + naz * nbz)

            b_alpha = <int>floor((alpha + 1.0) * 0.5 * n_bins)
            if b_alpha < 0: b_alpha = 0
            if b_alpha >= n_bins: b_alpha = n_bins - 1
            b_phi = <int>floor((phi + 1.0) * 0.5 * n_bins)
            if b_phi < 0: b_phi = 0
            if b_phi >= n_bins: b_phi = n_bins - 1
            b_theta = <int>floor((theta + M_PI) / two_pi * n_bins)
            if b_theta < 0: b_theta = 0
            if b_theta >= n_bins: b_theta = n_bins - 1

            hist[a, b_alpha] += 1.0
            hist[a, n_bins + b_phi] += 1.0
            hist[a, 2 * n_bins + b_theta] += 1.0
            hist[b, b_alpha] += 1.0
            hist[b, n_bins + b_phi] += 1.0
            hist[b, 2 * n_bins + b_theta] += 1.0
            used[k] = 1

    return hist, used.view(np.bool_)
