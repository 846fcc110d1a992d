"""Small deterministic graph and dataset constructors shared by the tests."""

from __future__ import annotations

import numpy as np

from gtab.graph import Graph, from_edges


def path_graph(n: int, **kwargs) -> Graph:
    return from_edges(n, [(i, i + 1) for i in range(n - 1)], **kwargs)


def cycle_graph(n: int, **kwargs) -> Graph:
    return from_edges(n, [(i, (i + 1) % n) for i in range(n)], **kwargs)


def star_graph(leaves: int, **kwargs) -> Graph:
    """Center node 0 connected to `leaves` leaf nodes."""
    return from_edges(leaves + 1, [(0, i + 1) for i in range(leaves)], **kwargs)


def complete_graph(n: int, **kwargs) -> Graph:
    return from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)], **kwargs)


def gnp(n: int, p: float, seed: int, **kwargs) -> Graph:
    """Erdos-Renyi G(n, p), deterministic given seed."""
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(n, k=1)
    mask = rng.random(iu[0].size) < p
    edges = np.stack([iu[0][mask], iu[1][mask]], axis=1)
    return from_edges(n, edges, **kwargs)


def random_tree(n: int, seed: int, **kwargs) -> Graph:
    """Uniform random-attachment tree on n nodes."""
    rng = np.random.default_rng(seed)
    edges = [(int(rng.integers(0, i)), i) for i in range(1, n)]
    return from_edges(n, edges, **kwargs)


def with_isolated(g: Graph, extra: int) -> Graph:
    """Append `extra` isolated nodes to a graph's structure."""
    upper = np.stack(np.nonzero(np.triu(g.adj.toarray())), axis=1)
    return from_edges(g.num_nodes + extra, upper)


def two_gaussians(
    n_per_class: int,
    dim: int,
    distance: float,
    sigma: float,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Two spherical Gaussian clouds whose centers are `distance` apart."""
    rng = np.random.default_rng(seed)
    center = np.zeros(dim)
    center[0] = distance
    x0 = rng.standard_normal((n_per_class, dim)) * sigma
    x1 = rng.standard_normal((n_per_class, dim)) * sigma + center
    x = np.concatenate([x0, x1])
    y = np.repeat(np.array([0, 1], dtype=np.int64), n_per_class)
    return x, y


def labeled_blob_graph(
    n_per_class: int = 20,
    n_classes: int = 3,
    dim: int = 6,
    seed: int = 0,
    p_intra: float = 0.3,
    p_inter: float = 0.02,
) -> Graph:
    """A small attributed graph whose labels are recoverable from both the
    attribute blobs and the community structure; the workhorse fixture for
    classification tests."""
    rng = np.random.default_rng(seed)
    n = n_per_class * n_classes
    labels = np.repeat(np.arange(n_classes, dtype=np.int64), n_per_class)
    centers = rng.standard_normal((n_classes, dim)) * 4.0
    attrs = centers[labels] + rng.standard_normal((n, dim)) * 0.5
    iu = np.triu_indices(n, k=1)
    same = labels[iu[0]] == labels[iu[1]]
    prob = np.where(same, p_intra, p_inter)
    mask = rng.random(iu[0].size) < prob
    edges = np.stack([iu[0][mask], iu[1][mask]], axis=1)
    return from_edges(n, edges, attributes=attrs, labels=labels, num_classes=n_classes)


def even_split(n: int, seed: int = 0, train_frac: float = 0.6, val_frac: float = 0.2):
    """Shuffled train/val/test index arrays in the given proportions."""
    from gtab.graph import SplitSpec

    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_train = int(round(n * train_frac))
    n_val = int(round(n * val_frac))
    return SplitSpec(
        train=np.sort(order[:n_train]).astype(np.int64),
        val=np.sort(order[n_train : n_train + n_val]).astype(np.int64),
        test=np.sort(order[n_train + n_val :]).astype(np.int64),
    )


def pubmed_scale_graph(seed: int = 42) -> Graph:
    """A synthetic graph with the size signature of a citation network:
    19,717 nodes, 44,327 undirected edges, 500 dense attributes."""
    rng = np.random.default_rng(seed)
    n, target = 19717, 44327
    seen: set[tuple[int, int]] = set()
    pairs: list[tuple[int, int]] = []
    while len(pairs) < target:
        u = int(rng.integers(0, n))
        v = int(rng.integers(0, n))
        if u == v:
            continue
        key = (u, v) if u < v else (v, u)
        if key in seen:
            continue
        seen.add(key)
        pairs.append(key)
    attrs = rng.standard_normal((n, 500))
    labels = rng.integers(0, 3, size=n).astype(np.int64)
    return from_edges(n, np.array(pairs, dtype=np.int64), attributes=attrs,
                      labels=labels, num_classes=3)
