"""Numba kernels for the BFS-heavy structural measures.

Everything here operates on raw CSR arrays (int64 indptr/indices) so the
kernels stay allocation-light and cacheable.  Per-chunk accumulators are
written to distinct rows and merged by the caller in fixed order, which
keeps results bit-identical regardless of how many threads numba uses.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

# sources per work chunk; fixed so chunk boundaries (and therefore the
# float accumulation order) never depend on thread count
CHUNK = 512


@njit(cache=True)
def _brandes_sources(indptr, indices, sources, acc):
    """Accumulate unnormalized dependency scores for one source chunk.

    Standard two-phase sweep per source: a BFS records visit order,
    distances, and shortest-path counts sigma; the reverse sweep pushes
    dependencies delta back toward the source.  acc collects the ordered
    source->target contributions; the caller halves them later.
    """
    n = indptr.shape[0] - 1
    order = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.int64)
    sigma = np.empty(n, dtype=np.float64)
    delta = np.empty(n, dtype=np.float64)

    for si in range(sources.shape[0]):
        s = sources[si]
        dist[:] = -1
        sigma[:] = 0.0
        dist[s] = 0
        sigma[s] = 1.0
        order[0] = s
        head, tail = 0, 1
        while head < tail:
            v = order[head]
            head += 1
            dv = dist[v]
            for ei in range(indptr[v], indptr[v + 1]):
                w = indices[ei]
                if dist[w] < 0:
                    dist[w] = dv + 1
                    order[tail] = w
                    tail += 1
                if dist[w] == dv + 1:
                    sigma[w] += sigma[v]

        delta[:] = 0.0
        for oi in range(tail - 1, 0, -1):
            w = order[oi]
            coeff = (1.0 + delta[w]) / sigma[w]
            dw = dist[w]
            for ei in range(indptr[w], indptr[w + 1]):
                v = indices[ei]
                if dist[v] == dw - 1:
                    delta[v] += sigma[v] * coeff
            acc[w] += delta[w]


@njit(cache=True, parallel=True)
def brandes(indptr, indices, sources):
    """Betweenness accumulation over the given sources (ordered pairs)."""
    n = indptr.shape[0] - 1
    n_chunks = (sources.shape[0] + CHUNK - 1) // CHUNK
    acc = np.zeros((n_chunks, n), dtype=np.float64)
    for c in prange(n_chunks):
        lo = c * CHUNK
        hi = min(lo + CHUNK, sources.shape[0])
        _brandes_sources(indptr, indices, sources[lo:hi], acc[c])
    out = np.zeros(n, dtype=np.float64)
    for c in range(n_chunks):  # fixed merge order
        out += acc[c]
    return out


@njit(cache=True, parallel=True)
def bfs_reach_and_distsum(indptr, indices):
    """Per-node BFS: how many nodes are reachable (incl. self) and the sum
    of shortest-path distances to them.  Rows are written independently, so
    thread scheduling cannot change the result."""
    n = indptr.shape[0] - 1
    reach = np.zeros(n, dtype=np.int64)
    dist_sum = np.zeros(n, dtype=np.int64)
    n_chunks = (n + CHUNK - 1) // CHUNK
    for c in prange(n_chunks):
        order = np.empty(n, dtype=np.int64)
        dist = np.empty(n, dtype=np.int64)
        lo = c * CHUNK
        hi = min(lo + CHUNK, n)
        for s in range(lo, hi):
            dist[:] = -1
            dist[s] = 0
            order[0] = s
            head, tail = 0, 1
            total = 0
            while head < tail:
                v = order[head]
                head += 1
                dv = dist[v]
                total += dv
                for ei in range(indptr[v], indptr[v + 1]):
                    w = indices[ei]
                    if dist[w] < 0:
                        dist[w] = dv + 1
                        order[tail] = w
                        tail += 1
            reach[s] = tail
            dist_sum[s] = total
    return reach, dist_sum


@njit(cache=True, parallel=True)
def triangle_counts(indptr, indices):
    """Per-node triangle counts via sorted-neighborhood intersection.

    For node v, summing |N(v) & N(u)| over neighbors u counts each
    triangle at v twice (once through each of its other corners).
    """
    n = indptr.shape[0] - 1
    tri = np.zeros(n, dtype=np.int64)
    for v in prange(n):
        count = 0
        for ei in range(indptr[v], indptr[v + 1]):
            u = indices[ei]
            i, j = indptr[v], indptr[u]
            iend, jend = indptr[v + 1], indptr[u + 1]
            while i < iend and j < jend:
                a, b = indices[i], indices[j]
                if a == b:
                    count += 1
                    i += 1
                    j += 1
                elif a < b:
                    i += 1
                else:
                    j += 1
        tri[v] = count // 2
    return tri
