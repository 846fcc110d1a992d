"""Recipe-driven assembly of per-node feature rows, plus matrix I/O.

A FeatureRecipe says which feature families to compute; assemble() turns a
graph plus its normalized operators into one float64 row per node, with
named column groups laid out in a fixed order:

    attr | local | betweenness | closeness | pagerank | lap_pe | rwse | smooth

Matrices round-trip through CSV (header ``group.index``) or a small binary
format (magic ``GTABFM1\\0``, u64 row/column counts, row-major float64
payload, JSON trailer with groups and fingerprint).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import struct
import time
from pathlib import Path

import numpy as np

from . import attrfeat, posenc, structural
from .errors import ValidationError
from .graph import Graph, NormalizedOperators

logger = logging.getLogger(__name__)

SVD_RANKS = (16, 32, 64, 128, 256)
PE_DIMS = (4, 8, 16, 32, 64)
SMOOTH_STEPS = (0, 1, 2)
PE_KINDS = ("lap", "rwse", "both", "none")
GLOBAL_STRUCTURAL = ("betweenness", "closeness", "pagerank")


def _is_int(value) -> bool:
    return type(value) is int


@dataclasses.dataclass(frozen=True)
class FeatureRecipe:
    """Which feature families to build, and with what sizes.

    svd_rank:
        "off" disables raw-attribute features entirely; "none" passes the
        raw attribute matrix through uncompressed; an integer compresses
        attributes (and smoothed attributes) to that rank.
    pe_kind / pe_dim:
        Positional encodings: Laplacian eigenvectors, random-walk return
        probabilities, both, or none; pe_dim columns each.
    local_structural:
        Degree, clustering coefficient, triangle count (3 columns).
    global_structural:
        Any subset of {betweenness, closeness, pagerank}, one column each.
    smooth_steps:
        Rounds of normalized-adjacency attribute smoothing; 0 disables the
        smooth family.
    betweenness_samples:
        Optional source-sampling count for betweenness; None means exact.
    seed:
        Master seed for every randomized stage (SVD sketches, eigensolver
        start vectors, betweenness source sampling).
    norm_stats:
        "all" fits z-normalization statistics on every row, "train" on the
        training rows only.
    override_search_space:
        Permit sizes outside the standard grids above.
    """

    svd_rank: int | str = "off"
    pe_kind: str = "none"
    pe_dim: int = 8
    local_structural: bool = False
    global_structural: frozenset[str] = frozenset()
    smooth_steps: int = 0
    betweenness_samples: int | None = None
    seed: int = 0
    norm_stats: str = "all"
    override_search_space: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "global_structural", frozenset(self.global_structural))
        free = self.override_search_space
        if self.svd_rank not in ("off", "none"):
            if not _is_int(self.svd_rank) or self.svd_rank < 1:
                raise ValidationError(f"svd_rank must be 'off', 'none', or a positive integer, got {self.svd_rank!r}")
            if not free and self.svd_rank not in SVD_RANKS:
                raise ValidationError(f"svd_rank {self.svd_rank} outside the standard grid {SVD_RANKS}")
        if self.pe_kind not in PE_KINDS:
            raise ValidationError(f"pe_kind must be one of {PE_KINDS}, got {self.pe_kind!r}")
        if not _is_int(self.pe_dim) or self.pe_dim < 1:
            raise ValidationError(f"pe_dim must be a positive integer, got {self.pe_dim!r}")
        if not free and self.pe_dim not in PE_DIMS:
            raise ValidationError(f"pe_dim {self.pe_dim} outside the standard grid {PE_DIMS}")
        if not isinstance(self.local_structural, bool):
            raise ValidationError("local_structural must be a boolean")
        bad = self.global_structural - set(GLOBAL_STRUCTURAL)
        if bad:
            raise ValidationError(f"unknown global_structural entries: {sorted(bad)}")
        if not _is_int(self.smooth_steps) or self.smooth_steps < 0:
            raise ValidationError(f"smooth_steps must be a non-negative integer, got {self.smooth_steps!r}")
        if not free and self.smooth_steps not in SMOOTH_STEPS:
            raise ValidationError(f"smooth_steps {self.smooth_steps} outside the standard grid {SMOOTH_STEPS}")
        if self.betweenness_samples is not None and (
            not _is_int(self.betweenness_samples) or self.betweenness_samples < 1
        ):
            raise ValidationError(f"betweenness_samples must be None or a positive integer, got {self.betweenness_samples!r}")
        if not _is_int(self.seed):
            raise ValidationError(f"seed must be an integer, got {self.seed!r}")
        if self.norm_stats not in ("all", "train"):
            raise ValidationError(f"norm_stats must be 'all' or 'train', got {self.norm_stats!r}")

    def to_dict(self) -> dict:
        return {
            "svd_rank": self.svd_rank,
            "pe_kind": self.pe_kind,
            "pe_dim": self.pe_dim,
            "local_structural": self.local_structural,
            "global_structural": sorted(self.global_structural),
            "smooth_steps": self.smooth_steps,
            "betweenness_samples": self.betweenness_samples,
            "seed": self.seed,
            "norm_stats": self.norm_stats,
            "override_search_space": self.override_search_space,
        }

    def canonical_json(self) -> str:
        """Sorted-key compact JSON; the identity used for fingerprints and
        deterministic tie-breaking."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, raw: dict) -> "FeatureRecipe":
        if not isinstance(raw, dict):
            raise ValidationError("recipe must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValidationError(f"unknown recipe fields: {sorted(unknown)}")
        kwargs = dict(raw)
        if kwargs.get("svd_rank", "off") is None:
            kwargs["svd_rank"] = "none"
        if "global_structural" in kwargs:
            gs = kwargs["global_structural"]
            if not isinstance(gs, (list, tuple, set, frozenset)):
                raise ValidationError("global_structural must be a list of names")
            kwargs["global_structural"] = frozenset(gs)
        return cls(**kwargs)


def load_recipe(path: str | Path) -> FeatureRecipe:
    """Read a recipe JSON file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{path}: {exc}") from None
    return FeatureRecipe.from_dict(raw)


@dataclasses.dataclass(frozen=True)
class FeatureMatrix:
    """One float64 feature row per node plus column bookkeeping."""

    data: np.ndarray
    column_groups: tuple[tuple[str, int], ...]
    recipe_fingerprint: str

    def __post_init__(self) -> None:
        if self.data.ndim != 2:
            raise ValidationError(f"feature matrix must be 2-D, got shape {self.data.shape}")
        object.__setattr__(
            self,
            "column_groups",
            tuple((str(name), int(width)) for name, width in self.column_groups),
        )
        total = sum(width for _, width in self.column_groups)
        if total != self.data.shape[1]:
            raise ValidationError(
                f"column groups cover {total} columns but matrix has {self.data.shape[1]}"
            )
        self.data.flags.writeable = False

    @property
    def num_features(self) -> int:
        return self.data.shape[1]


def fingerprint(recipe: FeatureRecipe, g: Graph) -> str:
    """Hex digest binding a recipe to the exact graph content it ran on."""
    h = hashlib.sha256()
    h.update(recipe.canonical_json().encode())
    h.update(b"\x00")
    h.update(g.digest())
    return h.hexdigest()


def assemble(
    g: Graph,
    ops: NormalizedOperators,
    recipe: FeatureRecipe,
    _cache: dict | None = None,
    _timings: dict | None = None,
) -> FeatureMatrix:
    """Compute every enabled feature family and concatenate the blocks.

    _cache, when supplied, memoizes family computations across recipes on
    the same (g, ops) pair; callers own the cache's graph-scoping.
    _timings, when supplied, collects wall seconds actually spent per
    family (cache hits cost ~0).
    """
    cache = _cache if _cache is not None else {}

    def cached(family, key, fn):
        if key not in cache:
            t0 = time.perf_counter()
            cache[key] = fn()
            if _timings is not None:
                _timings[family] = _timings.get(family, 0.0) + time.perf_counter() - t0
        return cache[key]

    blocks: list[tuple[str, np.ndarray]] = []

    if recipe.svd_rank != "off":
        if g.attributes is None:
            raise ValidationError("recipe enables attribute features but the graph has no attributes")
        if recipe.svd_rank == "none":
            blocks.append(("attr", np.array(g.attributes, dtype=np.float64)))
        else:
            red = cached(
                "attr",
                ("svd_attr", recipe.svd_rank, recipe.seed),
                lambda: attrfeat.truncated_svd(g.attributes, recipe.svd_rank, seed=recipe.seed),
            )
            blocks.append(("attr", red.matrix))

    if recipe.local_structural:
        deg, clus, tri = cached("local", ("local",), lambda: structural.local_features(g))
        blocks.append(("local", np.stack([deg, clus, tri], axis=1).astype(np.float64)))

    for name in GLOBAL_STRUCTURAL:
        if name not in recipe.global_structural:
            continue
        if name == "betweenness":
            col = cached(
                name,
                ("betweenness", recipe.betweenness_samples, recipe.seed),
                lambda: structural.betweenness(
                    g, sample_sources=recipe.betweenness_samples, seed=recipe.seed
                ),
            )
        elif name == "closeness":
            col = cached(name, ("closeness",), lambda: structural.closeness(g))
        else:
            col = cached(name, ("pagerank",), lambda: structural.pagerank(g))
        blocks.append((name, col.reshape(-1, 1)))

    if recipe.pe_kind in ("lap", "both"):
        pe = cached(
            "lap_pe",
            ("lap_pe", recipe.pe_dim, recipe.seed),
            lambda: posenc.lap_pe(ops, recipe.pe_dim, seed=recipe.seed),
        )
        blocks.append(("lap_pe", pe.vectors))
    if recipe.pe_kind in ("rwse", "both"):
        rw = cached("rwse", ("rwse", recipe.pe_dim), lambda: posenc.rwse(ops, recipe.pe_dim))
        blocks.append(("rwse", rw.probs))

    if recipe.smooth_steps > 0:
        if g.attributes is None:
            raise ValidationError("recipe enables smoothed features but the graph has no attributes")
        smoothed = cached(
            "smooth",
            ("smoothed", recipe.smooth_steps),
            lambda: attrfeat.smooth(ops, g.attributes, recipe.smooth_steps).matrix,
        )
        if _is_int(recipe.svd_rank):
            red = cached(
                "smooth",
                ("svd_smooth", recipe.smooth_steps, recipe.svd_rank, recipe.seed),
                lambda: attrfeat.truncated_svd(smoothed, recipe.svd_rank, seed=recipe.seed + 1),
            )
            smoothed = red.matrix
        blocks.append(("smooth", smoothed))

    if not blocks:
        raise ValidationError("recipe enables no feature families")

    data = np.concatenate([b for _, b in blocks], axis=1)
    groups = tuple((name, b.shape[1]) for name, b in blocks)
    return FeatureMatrix(
        data=data,
        column_groups=groups,
        recipe_fingerprint=fingerprint(recipe, g),
    )


def z_normalize(fm: FeatureMatrix, stats_nodes: np.ndarray | None = None) -> FeatureMatrix:
    """Columnwise z-scoring; a new matrix, the input is untouched.

    Statistics come from stats_nodes rows when given, otherwise from all
    rows.  Columns whose (population) standard deviation is below 1e-12
    are zeroed outright, so the output never contains NaN or inf.
    """
    ref = fm.data if stats_nodes is None else fm.data[np.asarray(stats_nodes, dtype=np.int64)]
    if ref.shape[0] == 0:
        raise ValidationError("cannot normalize with an empty statistics set")
    mu = ref.mean(axis=0)
    sigma = ref.std(axis=0)
    constant = sigma < 1e-12
    safe_sigma = np.where(constant, 1.0, sigma)
    data = (fm.data - mu) / safe_sigma
    data[:, constant] = 0.0
    if not np.isfinite(data).all():
        raise ValidationError("normalization produced non-finite values")
    return FeatureMatrix(data, fm.column_groups, fm.recipe_fingerprint)


def enforce_budget(fm: FeatureMatrix, max_features: int) -> FeatureMatrix:
    """Trim the matrix to at most max_features columns.

    Only the attr and smooth families shrink (they are ordered most- to
    least-significant, so tails go first); trimming alternates toward
    balance between the two, preferring to cut the currently-wider family
    and attr on ties.  If the untouchable families alone exceed the budget
    the matrix is rejected.
    """
    if max_features < 1:
        raise ValidationError(f"max_features must be >= 1, got {max_features}")
    if fm.num_features <= max_features:
        return fm
    widths = {name: width for name, width in fm.column_groups}
    fixed = sum(w for name, w in widths.items() if name not in ("attr", "smooth"))
    if fixed > max_features:
        raise ValidationError(
            f"structural and positional columns alone ({fixed}) exceed the "
            f"feature budget ({max_features}); shrink the recipe instead"
        )
    attr = widths.get("attr", 0)
    smooth = widths.get("smooth", 0)
    excess = fm.num_features - max_features
    logger.warning(
        "feature budget %d exceeded by %d column(s); trimming attr/smooth tails",
        max_features, excess,
    )
    for _ in range(excess):
        if attr >= smooth and attr > 0:
            attr -= 1
        else:
            smooth -= 1
    new_widths = dict(widths)
    if "attr" in new_widths:
        new_widths["attr"] = attr
    if "smooth" in new_widths:
        new_widths["smooth"] = smooth

    keep: list[np.ndarray] = []
    groups: list[tuple[str, int]] = []
    offset = 0
    for name, width in fm.column_groups:
        target = new_widths[name]
        if target > 0:
            keep.append(np.arange(offset, offset + target))
            groups.append((name, target))
        offset += width
    data = fm.data[:, np.concatenate(keep)]
    return FeatureMatrix(np.ascontiguousarray(data), tuple(groups), fm.recipe_fingerprint)


def pool_graph(fm: FeatureMatrix, node_subset: np.ndarray, mode: str = "mean") -> np.ndarray:
    """Reduce the rows of node_subset to a single feature row."""
    if mode not in ("mean", "sum"):
        raise ValidationError(f"pool mode must be 'mean' or 'sum', got {mode!r}")
    subset = np.asarray(node_subset, dtype=np.int64)
    if subset.size == 0:
        raise ValidationError("cannot pool an empty node subset")
    if subset.min() < 0 or subset.max() >= fm.data.shape[0]:
        raise ValidationError("pool subset index out of range")
    if np.unique(subset).size != subset.size:
        raise ValidationError("pool subset has repeated indices")
    rows = fm.data[subset]
    return rows.mean(axis=0) if mode == "mean" else rows.sum(axis=0)


# ---------------------------------------------------------------------------
# on-disk formats

_MAGIC = b"GTABFM1\x00"


def _header_names(groups: tuple[tuple[str, int], ...]) -> list[str]:
    return [f"{name}.{i}" for name, width in groups for i in range(width)]


def write_feature_matrix(fm: FeatureMatrix, path: str | Path, fmt: str = "csv") -> None:
    """Serialize to ``csv`` (header ``group.index``) or ``bin``."""
    path = Path(path)
    if fmt == "csv":
        with open(path, "w") as fh:
            fh.write(",".join(_header_names(fm.column_groups)) + "\n")
            for row in fm.data:
                fh.write(",".join(repr(float(x)) for x in row) + "\n")
    elif fmt == "bin":
        n, f = fm.data.shape
        trailer = json.dumps(
            {
                "column_groups": [[name, width] for name, width in fm.column_groups],
                "recipe_fingerprint": fm.recipe_fingerprint,
            },
            sort_keys=True,
        ).encode()
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<QQ", n, f))
            fh.write(np.ascontiguousarray(fm.data, dtype="<f8").tobytes())
            fh.write(trailer)
    else:
        raise ValidationError(f"format must be 'csv' or 'bin', got {fmt!r}")


def read_feature_matrix(path: str | Path) -> FeatureMatrix:
    """Load either serialization; the format is sniffed from the magic.

    CSV files carry no fingerprint, so the digest of the file bytes stands
    in as the provenance identity.
    """
    path = Path(path)
    blob = path.read_bytes()
    if blob[: len(_MAGIC)] == _MAGIC:
        return _read_bin(path, blob)
    return _read_csv(path, blob)


def _read_bin(path: Path, blob: bytes) -> FeatureMatrix:
    header_end = len(_MAGIC) + 16
    if len(blob) < header_end:
        raise ValidationError(f"{path}: truncated header")
    n, f = struct.unpack("<QQ", blob[len(_MAGIC) : header_end])
    payload_end = header_end + n * f * 8
    if len(blob) < payload_end:
        raise ValidationError(f"{path}: payload shorter than {n}x{f} float64")
    data = np.frombuffer(blob[header_end:payload_end], dtype="<f8").reshape(n, f).copy()
    try:
        trailer = json.loads(blob[payload_end:].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{path}: bad JSON trailer ({exc})") from None
    groups = trailer.get("column_groups")
    if not isinstance(groups, list):
        raise ValidationError(f"{path}: trailer missing column_groups")
    return FeatureMatrix(
        data,
        tuple((name, width) for name, width in groups),
        str(trailer.get("recipe_fingerprint", "")),
    )


def _read_csv(path: Path, blob: bytes) -> FeatureMatrix:
    text = blob.decode()
    lines = text.splitlines()
    if not lines:
        raise ValidationError(f"{path}: empty file")
    groups: list[tuple[str, int]] = []
    for col, token in enumerate(lines[0].split(",")):
        name, _, idx = token.rpartition(".")
        if not name or not idx.isdigit():
            raise ValidationError(f"{path}: malformed header column {token!r}")
        if groups and groups[-1][0] == name:
            if int(idx) != groups[-1][1]:
                raise ValidationError(f"{path}: non-contiguous indices in group {name!r}")
            groups[-1] = (name, groups[-1][1] + 1)
        else:
            if int(idx) != 0:
                raise ValidationError(f"{path}: group {name!r} does not start at index 0")
            groups.append((name, 1))
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        try:
            rows.append([float(x) for x in parts])
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: non-numeric value") from None
        if len(parts) != sum(w for _, w in groups):
            raise ValidationError(f"{path}:{lineno}: expected {sum(w for _, w in groups)} columns, got {len(parts)}")
    data = np.array(rows, dtype=np.float64).reshape(len(rows), sum(w for _, w in groups))
    return FeatureMatrix(data, tuple(groups), hashlib.sha256(blob).hexdigest())
