"""Undirected attributed graphs: container, disk bundles, normalized operators.

A graph bundle on disk is a directory with::

    meta.json      {"num_nodes": int, "directed": bool, "num_classes": int|null}
    edges.tsv      one "src<TAB>dst" pair per line, '#' comments allowed
    features.csv   optional, one row of floats per node
    labels.csv     optional, one integer per node, -1 means unlabeled
    split.json     optional, {"train": [...], "val": [...], "test": [...]}

Edge lists are symmetrized on load; duplicate edges and self-loops are
dropped with a warning count.  The in-memory adjacency is CSR with unit
weights and sorted indices; int64 throughout so downstream kernels and
fingerprints never depend on scipy's index-dtype heuristics.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError

logger = logging.getLogger(__name__)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclasses.dataclass(frozen=True)
class Graph:
    """Immutable undirected graph with optional node attributes and labels.

    Attributes
    ----------
    num_nodes:
        Node count N; nodes are the integers 0..N-1.
    adj:
        N x N symmetric CSR adjacency, unit weights, no self-loops,
        sorted int64 indices.
    attributes:
        Optional (N, D) float64 node attribute matrix.
    labels:
        Optional (N,) int64 labels, -1 for unlabeled nodes.
    num_classes:
        Optional declared class count (metadata only; not enforced on
        prediction-time class sets).
    """

    num_nodes: int
    adj: sp.csr_array
    attributes: np.ndarray | None = None
    labels: np.ndarray | None = None
    num_classes: int | None = None

    def __post_init__(self) -> None:
        n = self.num_nodes
        if n < 1:
            raise ValidationError(f"graph must have at least one node, got {n}")
        if self.adj.shape != (n, n):
            raise ValidationError(
                f"adjacency shape {self.adj.shape} does not match num_nodes={n}"
            )
        if self.adj.nnz and self.adj.diagonal().any():
            raise ValidationError("adjacency has self-loops")
        if (self.adj != self.adj.T).nnz != 0:
            raise ValidationError("adjacency is not symmetric")
        if self.attributes is not None:
            if self.attributes.shape[0] != n:
                raise ValidationError(
                    f"attribute rows {self.attributes.shape[0]} != num_nodes {n}"
                )
            if not np.isfinite(self.attributes).all():
                raise ValidationError("attributes contain non-finite values")
            _freeze(self.attributes)
        if self.labels is not None:
            if self.labels.shape != (n,):
                raise ValidationError(
                    f"label count {self.labels.shape} != num_nodes {n}"
                )
            if (self.labels < -1).any():
                raise ValidationError("labels must be >= -1")
            if self.num_classes is not None and (self.labels >= self.num_classes).any():
                raise ValidationError(
                    f"label exceeds declared num_classes={self.num_classes}"
                )
            _freeze(self.labels)
        for part in (self.adj.data, self.adj.indices, self.adj.indptr):
            _freeze(part)

    @property
    def degrees(self) -> np.ndarray:
        """Node degrees as int64."""
        return np.diff(self.adj.indptr).astype(np.int64)

    def digest(self) -> bytes:
        """Stable content digest over structure, attributes, and labels."""
        import hashlib

        h = hashlib.sha256()
        h.update(np.int64(self.num_nodes).tobytes())
        h.update(self.adj.indptr.tobytes())
        h.update(self.adj.indices.tobytes())
        if self.attributes is not None:
            h.update(np.ascontiguousarray(self.attributes).tobytes())
        h.update(b"|")
        if self.labels is not None:
            h.update(self.labels.tobytes())
        h.update(b"|")
        h.update(str(self.num_classes).encode())
        return h.digest()


def from_edges(
    num_nodes: int,
    edges: np.ndarray,
    attributes: np.ndarray | None = None,
    labels: np.ndarray | None = None,
    num_classes: int | None = None,
) -> Graph:
    """Build a :class:`Graph` from an edge array of shape (E, 2).

    Directed pairs are symmetrized.  Self-loops and duplicates (including
    reverse duplicates of an already-seen pair) are dropped; a single
    warning reports how many of each were removed.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= num_nodes):
        bad = edges[(edges < 0).any(axis=1) | (edges >= num_nodes).any(axis=1)][0]
        raise ValidationError(
            f"edge ({bad[0]}, {bad[1]}) out of range for num_nodes={num_nodes}"
        )

    loop_mask = edges[:, 0] == edges[:, 1]
    n_loops = int(loop_mask.sum())
    edges = edges[~loop_mask]

    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    pairs = np.unique(np.stack([lo, hi], axis=1), axis=0) if edges.size else edges.reshape(0, 2)
    n_dupes = edges.shape[0] - pairs.shape[0]
    if n_loops or n_dupes:
        logger.warning(
            "dropped %d self-loop(s) and %d duplicate edge(s)", n_loops, n_dupes
        )

    rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
    cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
    adj = sp.coo_array(
        (np.ones(rows.shape[0]), (rows, cols)), shape=(num_nodes, num_nodes)
    ).tocsr()
    adj.sort_indices()
    adj = sp.csr_array(
        (adj.data, adj.indices.astype(np.int64), adj.indptr.astype(np.int64)),
        shape=adj.shape,
    )
    return Graph(num_nodes, adj, attributes, labels, num_classes)


# ---------------------------------------------------------------------------
# bundle I/O


def _parse_int(text: str, where: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ValidationError(f"{where}: expected integer, got {text!r}") from None


def load_graph(bundle_dir: str | Path) -> Graph:
    """Load a graph bundle directory.  Raises ValidationError with the
    offending file and line on malformed input."""
    bundle = Path(bundle_dir)
    meta_path = bundle / "meta.json"
    if not meta_path.is_file():
        raise ValidationError(f"{meta_path}: missing meta.json")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{meta_path}: invalid JSON ({exc})") from None
    if not isinstance(meta, dict) or not isinstance(meta.get("num_nodes"), int):
        raise ValidationError(f"{meta_path}: num_nodes must be an integer")
    num_nodes = meta["num_nodes"]
    num_classes = meta.get("num_classes")
    if num_classes is not None and not isinstance(num_classes, int):
        raise ValidationError(f"{meta_path}: num_classes must be an integer or null")

    edges_path = bundle / "edges.tsv"
    if not edges_path.is_file():
        raise ValidationError(f"{edges_path}: missing edges.tsv")
    src, dst = [], []
    with open(edges_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValidationError(
                    f"{edges_path}:{lineno}: expected 'src<TAB>dst', got {line!r}"
                )
            u = _parse_int(parts[0], f"{edges_path}:{lineno}")
            v = _parse_int(parts[1], f"{edges_path}:{lineno}")
            if not (0 <= u < num_nodes and 0 <= v < num_nodes):
                raise ValidationError(
                    f"{edges_path}:{lineno}: edge ({u}, {v}) out of range "
                    f"for num_nodes={num_nodes}"
                )
            src.append(u)
            dst.append(v)
    edges = np.stack(
        [np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64)], axis=1
    ) if src else np.zeros((0, 2), dtype=np.int64)

    attributes = None
    feat_path = bundle / "features.csv"
    if feat_path.is_file():
        try:
            attributes = np.loadtxt(feat_path, delimiter=",", dtype=np.float64, ndmin=2)
        except ValueError as exc:
            raise ValidationError(f"{feat_path}: {exc}") from None
        if attributes.shape[0] != num_nodes:
            raise ValidationError(
                f"{feat_path}: {attributes.shape[0]} rows for {num_nodes} nodes"
            )

    labels = None
    label_path = bundle / "labels.csv"
    if label_path.is_file():
        raw = []
        with open(label_path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                raw.append(_parse_int(line, f"{label_path}:{lineno}"))
        labels = np.array(raw, dtype=np.int64)
        if labels.shape[0] != num_nodes:
            raise ValidationError(
                f"{label_path}: {labels.shape[0]} labels for {num_nodes} nodes"
            )

    return from_edges(num_nodes, edges, attributes, labels, num_classes)


def save_graph(g: Graph, bundle_dir: str | Path) -> None:
    """Write a bundle directory; load_graph(save_graph(g)) round-trips."""
    bundle = Path(bundle_dir)
    bundle.mkdir(parents=True, exist_ok=True)
    meta = {
        "num_nodes": g.num_nodes,
        "directed": False,
        "num_classes": g.num_classes,
    }
    (bundle / "meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n")

    upper = sp.triu(g.adj, k=1).tocoo()
    order = np.lexsort((upper.col, upper.row))
    lines = [f"{upper.row[i]}\t{upper.col[i]}" for i in order]
    (bundle / "edges.tsv").write_text("\n".join(lines) + ("\n" if lines else ""))

    if g.attributes is not None:
        with open(bundle / "features.csv", "w") as fh:
            for row in g.attributes:
                fh.write(",".join(repr(float(x)) for x in row) + "\n")
    if g.labels is not None:
        with open(bundle / "labels.csv", "w") as fh:
            for y in g.labels:
                fh.write(f"{int(y)}\n")


# ---------------------------------------------------------------------------
# splits


@dataclasses.dataclass(frozen=True)
class SplitSpec:
    """Disjoint train/val/test node index sets, each sorted ascending."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self) -> None:
        for name in ("train", "val", "test"):
            _freeze(getattr(self, name))


def load_split(path: str | Path, num_nodes: int) -> SplitSpec:
    """Load and validate split.json against a node count."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: split must be a JSON object")
    parts = {}
    for name in ("train", "val", "test"):
        vals = raw.get(name, [])
        if not isinstance(vals, list) or not all(isinstance(v, int) for v in vals):
            raise ValidationError(f"{path}: {name} must be a list of integers")
        arr = np.array(sorted(vals), dtype=np.int64)
        if arr.size and (arr[0] < 0 or arr[-1] >= num_nodes):
            raise ValidationError(
                f"{path}: {name} index out of range for num_nodes={num_nodes}"
            )
        if np.unique(arr).size != arr.size:
            raise ValidationError(f"{path}: {name} has repeated indices")
        parts[name] = arr
    if parts["train"].size == 0:
        raise ValidationError(f"{path}: train set is empty")
    for a, b in (("train", "val"), ("train", "test"), ("val", "test")):
        if np.intersect1d(parts[a], parts[b]).size:
            raise ValidationError(f"{path}: {a} and {b} overlap")
    return SplitSpec(parts["train"], parts["val"], parts["test"])


def save_split(split: SplitSpec, path: str | Path) -> None:
    payload = {
        "train": [int(i) for i in split.train],
        "val": [int(i) for i in split.val],
        "test": [int(i) for i in split.test],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# normalized operators


@dataclasses.dataclass(frozen=True)
class NormalizedOperators:
    """The three normalized matrices every downstream stage consumes.

    gcn_norm:       D~^{-1/2} (A + I) D~^{-1/2}  with D~ = D + I
    rw_transition:  D^{-1} A  (rows of isolated nodes are all zero)
    sym_laplacian:  I - D^{-1/2} A D^{-1/2}      (diagonal 1 for isolated nodes)

    All three are exactly symmetric where symmetry applies: off-diagonal
    entries are built as d[u]*d[v] products, which commute in floating
    point, so no symmetrization pass is needed.
    """

    gcn_norm: sp.csr_array
    rw_transition: sp.csr_array
    sym_laplacian: sp.csr_array


def _csr(rows: np.ndarray, cols: np.ndarray, data: np.ndarray, n: int) -> sp.csr_array:
    out = sp.coo_array((data, (rows, cols)), shape=(n, n)).tocsr()
    out.sort_indices()
    for part in (out.data, out.indices, out.indptr):
        part.flags.writeable = False
    return out


def build_operators(g: Graph) -> NormalizedOperators:
    """Construct the gcn_norm / rw_transition / sym_laplacian triple."""
    n = g.num_nodes
    deg = g.degrees.astype(np.float64)
    indptr, indices = g.adj.indptr, g.adj.indices
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    cols = indices.astype(np.int64)

    # gcn_norm over the pattern A + I
    dt = 1.0 / np.sqrt(deg + 1.0)
    loops = np.arange(n, dtype=np.int64)
    g_rows = np.concatenate([rows, loops])
    g_cols = np.concatenate([cols, loops])
    gcn = _csr(g_rows, g_cols, dt[g_rows] * dt[g_cols], n)

    # rw_transition: zero rows for isolated nodes fall out naturally
    nz = deg > 0
    inv_deg = np.zeros(n)
    inv_deg[nz] = 1.0 / deg[nz]
    rw = _csr(rows, cols, inv_deg[rows], n)

    # sym_laplacian = I - D^{-1/2} A D^{-1/2}; isolated nodes keep diagonal 1
    ds = np.zeros(n)
    ds[nz] = 1.0 / np.sqrt(deg[nz])
    l_rows = np.concatenate([rows, loops])
    l_cols = np.concatenate([cols, loops])
    l_data = np.concatenate([-(ds[rows] * ds[cols]), np.ones(n)])
    lap = _csr(l_rows, l_cols, l_data, n)

    return NormalizedOperators(gcn_norm=gcn, rw_transition=rw, sym_laplacian=lap)
