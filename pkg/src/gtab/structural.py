"""Structural node features: degree, clustering, triangles, centralities.

Shortest-path measures (betweenness, closeness) run on numba BFS kernels;
PageRank is a plain power iteration on the CSR adjacency.  The graph is
treated as undirected and unweighted throughout.
"""

from __future__ import annotations

import logging

import numpy as np

from .errors import ComputeError, ValidationError
from .graph import Graph

logger = logging.getLogger(__name__)


def local_features(g: Graph) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (degree, clustering, triangles) arrays.

    clustering[v] = triangles[v] / C(deg[v], 2), defined as 0 when
    deg[v] <= 1.
    """
    from . import _kernels

    deg = g.degrees
    tri = _kernels.triangle_counts(g.adj.indptr, g.adj.indices)
    possible = deg * (deg - 1) / 2.0
    clustering = np.zeros(g.num_nodes)
    mask = deg > 1
    clustering[mask] = tri[mask] / possible[mask]
    return deg, clustering, tri


def betweenness(
    g: Graph, sample_sources: int | None = None, seed: int = 0
) -> np.ndarray:
    """Unnormalized shortest-path betweenness over unordered node pairs.

    With ``sample_sources=m`` the accumulation runs from a uniform random
    subset of m sources and is rescaled by N/m; ``m == N`` degenerates to
    the exact computation bit-for-bit.
    """
    from . import _kernels

    n = g.num_nodes
    if sample_sources is None or sample_sources == n:
        sources = np.arange(n, dtype=np.int64)
        scale = 1.0
    else:
        if not 1 <= sample_sources <= n:
            raise ValidationError(
                f"sample_sources must be in [1, {n}], got {sample_sources}"
            )
        rng = np.random.default_rng(seed)
        sources = np.sort(rng.choice(n, size=sample_sources, replace=False))
        sources = sources.astype(np.int64)
        scale = n / sample_sources
    acc = _kernels.brandes(g.adj.indptr, g.adj.indices, sources)
    # ordered source->target accumulation counts each unordered pair twice
    return acc * (0.5 * scale)


def closeness(g: Graph) -> np.ndarray:
    """Component-corrected closeness.

    For node v reaching r nodes (including itself) with distance sum s:
    ((r - 1) / (N - 1)) * ((r - 1) / s); isolated nodes score 0.
    """
    from . import _kernels

    n = g.num_nodes
    reach, dist_sum = _kernels.bfs_reach_and_distsum(g.adj.indptr, g.adj.indices)
    out = np.zeros(n)
    mask = reach > 1
    if n > 1:
        r = reach[mask].astype(np.float64)
        out[mask] = ((r - 1.0) / (n - 1.0)) * ((r - 1.0) / dist_sum[mask])
    return out


def pagerank(
    g: Graph,
    damping: float = 0.85,
    tol: float = 1e-10,
    max_iter: int = 1000,
) -> np.ndarray:
    """PageRank by power iteration with uniform dangling-mass spread.

    Iterates x <- d * (P^T x + dangling/N) + (1-d)/N from a uniform start
    until the L1 change drops below tol.  Raises ComputeError if max_iter
    is exhausted first.
    """
    if not 0.0 < damping < 1.0:
        raise ValidationError(f"damping must be in (0, 1), got {damping}")
    n = g.num_nodes
    deg = g.degrees.astype(np.float64)
    dangling = deg == 0
    inv_deg = np.zeros(n)
    inv_deg[~dangling] = 1.0 / deg[~dangling]
    x = np.full(n, 1.0 / n)
    teleport = (1.0 - damping) / n
    for _ in range(max_iter):
        spread = x[dangling].sum() / n
        x_new = damping * (g.adj @ (x * inv_deg) + spread) + teleport
        change = np.abs(x_new - x).sum()
        x = x_new
        if change < tol:
            return x
    raise ComputeError(
        f"pagerank did not converge in {max_iter} iterations (last L1 change {change:.3e})"
    )
