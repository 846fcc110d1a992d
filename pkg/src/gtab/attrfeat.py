"""Attribute-derived features: spectral compression and neighborhood smoothing.

truncated_svd is a randomized range-finder SVD (Gaussian sketch, a few
QR-stabilized power iterations, small exact SVD of the projected matrix).
smooth repeatedly multiplies attributes by the self-loop-normalized
adjacency, i.e. parameter-free low-pass filtering.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import ValidationError
from .graph import NormalizedOperators


@dataclasses.dataclass(frozen=True)
class ReducedAttributes:
    """Rank-r spectral compression of an attribute matrix.

    matrix:           (N, r) projected coordinates U_r * diag(s_r)
    singular_values:  (r,) descending
    explained_ratio:  sum(s_r^2) / ||X||_F^2, in [0, 1]
    components:       (r, D) right singular vectors
    """

    matrix: np.ndarray
    singular_values: np.ndarray
    explained_ratio: float
    components: np.ndarray


@dataclasses.dataclass(frozen=True)
class SmoothedAttributes:
    """Attributes after `steps` rounds of normalized-adjacency averaging."""

    matrix: np.ndarray
    steps: int


def truncated_svd(
    x: np.ndarray,
    rank: int,
    seed: int,
    oversample: int = 10,
    power_iters: int = 4,
) -> ReducedAttributes:
    """Best-effort rank-`rank` SVD of x, deterministic given seed.

    When the oversampled sketch covers the full smaller dimension the
    range finder is exact, so the code drops to a dense SVD directly.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError(f"expected a 2-D matrix, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValidationError("attribute matrix contains non-finite values")
    n, d = x.shape
    if not 1 <= rank <= min(n, d):
        raise ValidationError(
            f"rank must be in [1, {min(n, d)}] for shape {x.shape}, got {rank}"
        )

    sketch = rank + oversample
    if sketch >= min(n, d):
        u, s, vt = np.linalg.svd(x, full_matrices=False)
    else:
        rng = np.random.default_rng(seed)
        q, _ = np.linalg.qr(x @ rng.standard_normal((d, sketch)))
        for _ in range(power_iters):
            q, _ = np.linalg.qr(x.T @ q)
            q, _ = np.linalg.qr(x @ q)
        ub, s, vt = np.linalg.svd(q.T @ x, full_matrices=False)
        u = q @ ub

    total = np.sum(x * x)
    kept = float(np.sum(s[:rank] ** 2))
    ratio = min(kept / total, 1.0) if total > 0 else 0.0
    return ReducedAttributes(
        matrix=u[:, :rank] * s[:rank],
        singular_values=s[:rank].copy(),
        explained_ratio=ratio,
        components=vt[:rank].copy(),
    )


def smooth(ops: NormalizedOperators, x: np.ndarray, steps: int) -> SmoothedAttributes:
    """Apply `steps` rounds of gcn_norm averaging to x.

    steps = 0 returns an unchanged copy (bitwise identical values), so a
    zero-step smooth never perturbs downstream numerics.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError(f"expected a 2-D matrix, got shape {x.shape}")
    if steps < 0:
        raise ValidationError(f"steps must be >= 0, got {steps}")
    if x.shape[0] != ops.gcn_norm.shape[0]:
        raise ValidationError(
            f"attribute rows {x.shape[0]} != graph nodes {ops.gcn_norm.shape[0]}"
        )
    out = x.copy()
    for _ in range(steps):
        out = ops.gcn_norm @ out
    return SmoothedAttributes(matrix=out, steps=steps)
