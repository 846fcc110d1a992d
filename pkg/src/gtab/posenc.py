"""Positional encodings: Laplacian eigenvectors and random-walk self-returns.

lap_pe computes the first k non-trivial eigenvectors of the symmetric
normalized Laplacian.  Small graphs go through a dense eigendecomposition;
large graphs use thick-restart Lanczos with full reorthogonalization and
exact deflation of the known nullspace (one sqrt-degree vector per
edge-bearing connected component).  Both paths share the trivial-eigenvalue
filter and the deterministic sign fix, so they agree wherever both apply.

rwse tracks the return probability diag(P^i) of the lazy-free random walk
for i = 1..k without ever forming a dense power of P.
"""

from __future__ import annotations

import dataclasses
import logging

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import ComputeError, ValidationError
from .graph import NormalizedOperators

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class LapPE:
    """Eigenvector block (N, k) with its ascending eigenvalues (k,)."""

    vectors: np.ndarray
    eigenvalues: np.ndarray


@dataclasses.dataclass(frozen=True)
class RWSE:
    """Return probabilities (N, k): column i-1 holds diag(P^i)."""

    probs: np.ndarray


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive.

    Ties on |value| resolve to the lowest node index (np.argmax), making
    the output independent of the eigensolver's sign choices.
    """
    out = vectors.copy()
    for j in range(out.shape[1]):
        i = int(np.argmax(np.abs(out[:, j])))
        if out[i, j] < 0:
            out[:, j] = -out[:, j]
    return out


def _component_nullspace(ops: NormalizedOperators) -> tuple[int, np.ndarray]:
    """Number of connected components and an orthonormal basis for the
    Laplacian nullspace: sqrt(degree) restricted to each component that
    carries at least one edge.  Isolated nodes contribute eigenvalue 1,
    not 0, so they stay out of the basis."""
    n = ops.sym_laplacian.shape[0]
    n_comp, labels = connected_components(ops.rw_transition, directed=False)
    deg = ops.rw_transition.indptr
    deg = np.diff(deg).astype(np.float64)
    cols = []
    for c in range(n_comp):
        members = np.flatnonzero(labels == c)
        if members.size < 2:
            continue
        z = np.zeros(n)
        z[members] = np.sqrt(deg[members])
        cols.append(z / np.linalg.norm(z))
    basis = np.stack(cols, axis=1) if cols else np.zeros((n, 0))
    return n_comp, basis


def lap_pe(
    ops: NormalizedOperators,
    k: int,
    trivial_tol: float = 1e-8,
    *,
    dense_cutoff: int = 2000,
    seed: int = 0,
    resid_tol: float = 1e-9,
) -> LapPE:
    """First k non-trivial Laplacian eigenvectors, ascending eigenvalues.

    Eigenvalues <= trivial_tol are treated as the trivial (per-component
    constant) modes and skipped.  dense_cutoff picks the dense path for
    small graphs; lowering it forces the iterative path (useful for
    cross-checking the two).  seed fixes the Lanczos start vector.
    """
    lap = ops.sym_laplacian
    n = lap.shape[0]
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    n_comp, nullspace = _component_nullspace(ops)
    if k + n_comp > n:
        raise ValidationError(
            f"insufficient non-trivial eigenpairs: k={k} plus {n_comp} "
            f"component(s) exceeds {n} node(s)"
        )

    if n <= dense_cutoff:
        eigvals, eigvecs = np.linalg.eigh(lap.toarray())
    else:
        want = min(k + 2, n - nullspace.shape[1])
        eigvals, eigvecs = _tr_lanczos(
            lap, want, nullspace, seed=seed, resid_tol=resid_tol
        )

    keep = np.flatnonzero(eigvals > trivial_tol)
    if keep.size < k:
        raise ComputeError(
            f"found only {keep.size} eigenvalues above trivial_tol={trivial_tol}, "
            f"need {k}"
        )
    idx = keep[:k]
    return LapPE(vectors=_fix_signs(eigvecs[:, idx]), eigenvalues=eigvals[idx].copy())


def _tr_lanczos(
    lap: sp.csr_array,
    k: int,
    nullspace: np.ndarray,
    seed: int,
    resid_tol: float,
    max_cycles: int = 200,
) -> tuple[np.ndarray, np.ndarray]:
    """Thick-restart Lanczos for the k smallest non-deflated eigenpairs.

    Full reorthogonalization (two-pass classical Gram-Schmidt) against the
    current basis and the deflated nullspace keeps the basis orthonormal to
    machine precision; the projected matrix is assembled from the actual
    orthogonalization coefficients, so restart coupling terms come out
    correct without the arrowhead bookkeeping.  Convergence is accepted
    only after explicitly verifying residual norms.
    """
    n = lap.shape[0]
    zc = nullspace.shape[1]
    m = min(n - zc, max(2 * k + 16, 64))
    rng = np.random.default_rng(seed)

    V = np.zeros((m + 1, n))
    H = np.zeros((m + 1, m + 1))

    def deflate(w: np.ndarray) -> np.ndarray:
        if zc:
            w = w - nullspace @ (nullspace.T @ w)
        return w

    v0 = deflate(rng.standard_normal(n))
    V[0] = v0 / np.linalg.norm(v0)
    j0 = 0

    for cycle in range(max_cycles):
        j = j0
        dead_end = False
        while j < m:
            w = lap @ V[j]
            coeff = V[: j + 1] @ w
            w = w - V[: j + 1].T @ coeff
            w = deflate(w)
            coeff2 = V[: j + 1] @ w
            w = w - V[: j + 1].T @ coeff2
            w = deflate(w)
            col = coeff + coeff2
            H[: j + 1, j] = col
            H[j, : j + 1] = col
            beta = np.linalg.norm(w)
            if beta < 1e-13:
                # invariant subspace: continue from a fresh random direction
                w = deflate(rng.standard_normal(n))
                w = w - V[: j + 1].T @ (V[: j + 1] @ w)
                beta2 = np.linalg.norm(w)
                if beta2 < 1e-10 or j + 1 >= n - zc:
                    m = j + 1
                    dead_end = True
                    break
                V[j + 1] = w / beta2
                H[j + 1, j] = H[j, j + 1] = 0.0
            else:
                V[j + 1] = w / beta
                H[j + 1, j] = H[j, j + 1] = beta
            j += 1

        theta, S = np.linalg.eigh(H[:m, :m])
        est = np.abs(H[m, m - 1] * S[m - 1, :k])
        exhausted = m >= n - zc or dead_end
        if exhausted or est.max() <= 10 * resid_tol:
            vectors = V[:m].T @ S[:, :k]
            values = theta[:k]
            resid = np.linalg.norm(lap @ vectors - vectors * values, axis=0)
            if resid.max() <= resid_tol:
                ortho = np.abs(vectors.T @ vectors - np.eye(k)).max()
                if ortho > 1e-10:
                    raise ComputeError(
                        f"eigenvector basis lost orthogonality ({ortho:.2e})"
                    )
                logger.debug(
                    "lanczos converged: cycles=%d max_resid=%.2e", cycle + 1, resid.max()
                )
                return values.copy(), vectors
            if exhausted:
                raise ComputeError(
                    f"residual {resid.max():.2e} exceeds {resid_tol:.1e} on an "
                    f"exhausted Krylov space"
                )
        # thick restart: keep the best Ritz vectors plus the residual vector
        keep = min(k + 12, m - 2)
        ritz = V[:m].T @ S[:, :keep]
        V[keep] = V[m]
        V[:keep] = ritz.T
        H[:] = 0.0
        H[np.arange(keep), np.arange(keep)] = theta[:keep]
        j0 = keep

    raise ComputeError(
        f"lanczos failed to reach residual {resid_tol:.1e} within "
        f"{max_cycles} restart cycles"
    )


# ---------------------------------------------------------------------------
# random-walk self-return probabilities


# beyond this many stored nonzeros, sparse powers of P are no longer sparse
# enough to be worth it; switch to tracking dense row blocks instead
_FILL_LIMIT = 15_000_000
_DENSE_BLOCK_FLOATS = 20_000_000


def rwse(ops: NormalizedOperators, k: int) -> RWSE:
    """diag(P^i) for i = 1..k, P the random-walk transition matrix.

    Tries sparse matrix powers first; if fill-in explodes, falls back to
    propagating blocks of identity rows through P (exact, just denser
    arithmetic).  Rows of isolated nodes stay all zero.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    p = ops.rw_transition
    n = p.shape[0]
    probs = np.zeros((n, k))
    walk = p.copy()
    probs[:, 0] = walk.diagonal()
    for i in range(1, k):
        walk = walk @ p
        if walk.nnz > _FILL_LIMIT:
            logger.debug("rwse: sparse fill %d too large, using dense blocks", walk.nnz)
            return _rwse_dense_blocks(p, k)
        probs[:, i] = walk.diagonal()
    return RWSE(probs=probs)


def _rwse_dense_blocks(p: sp.csr_array, k: int) -> RWSE:
    n = p.shape[0]
    probs = np.zeros((n, k))
    block = max(1, _DENSE_BLOCK_FLOATS // n)
    for start in range(0, n, block):
        stop = min(start + block, n)
        width = stop - start
        rows = np.zeros((width, n))
        rows[np.arange(width), np.arange(start, stop)] = 1.0
        for i in range(k):
            rows = rows @ p
            probs[start:stop, i] = rows[np.arange(width), np.arange(start, stop)]
    return RWSE(probs=probs)
