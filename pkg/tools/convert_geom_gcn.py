"""Convert a web-graph dataset directory in the `out1_*` text layout into a
graph bundle plus its standard splits.

Expected inputs inside DATASET_DIR:

    out1_graph_edges.txt          header line, then "src<TAB>dst" pairs
    out1_node_feature_label.txt   header line, then "id<TAB>f,f,...<TAB>label"
    *.npz                         one per standard split, boolean masks under
                                  train_mask / val_mask / test_mask

Output: OUT_DIR becomes a bundle directory (meta.json, edges.tsv,
features.csv, labels.csv) with the converted splits under
OUT_DIR/splits/split_<i>.json, numbered in sorted .npz filename order.

Usage: python3 convert_geom_gcn.py DATASET_DIR OUT_DIR
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from gtab.graph import SplitSpec, from_edges, save_graph, save_split


def _read_edges(path: Path) -> np.ndarray:
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if lineno == 1 and not parts[0].lstrip("-").isdigit():
                continue  # header row
            if len(parts) != 2:
                raise SystemExit(f"{path}:{lineno}: expected 'src dst', got {line!r}")
            pairs.append((int(parts[0]), int(parts[1])))
    return np.array(pairs, dtype=np.int64).reshape(len(pairs), 2)


def _read_features_labels(path: Path) -> tuple[np.ndarray, np.ndarray]:
    rows: dict[int, tuple[list[float], int]] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if lineno == 1 and not parts[0].lstrip("-").isdigit():
                continue  # header row
            if len(parts) != 3:
                raise SystemExit(
                    f"{path}:{lineno}: expected 'id<TAB>features<TAB>label', got {line!r}"
                )
            node = int(parts[0])
            feats = [float(x) for x in parts[1].split(",")]
            rows[node] = (feats, int(parts[2]))
    n = len(rows)
    if sorted(rows) != list(range(n)):
        raise SystemExit(f"{path}: node ids are not contiguous 0..{n - 1}")
    features = np.array([rows[v][0] for v in range(n)], dtype=np.float64)
    labels = np.array([rows[v][1] for v in range(n)], dtype=np.int64)
    return features, labels


def _split_from_npz(path: Path, num_nodes: int) -> SplitSpec:
    with np.load(path) as masks:
        parts = {}
        for name in ("train", "val", "test"):
            mask = np.asarray(masks[f"{name}_mask"]).astype(bool)
            if mask.shape != (num_nodes,):
                raise SystemExit(
                    f"{path}: {name}_mask has shape {mask.shape}, "
                    f"expected ({num_nodes},)"
                )
            parts[name] = np.flatnonzero(mask).astype(np.int64)
    for a, b in (("train", "val"), ("train", "test"), ("val", "test")):
        if np.intersect1d(parts[a], parts[b]).size:
            raise SystemExit(f"{path}: {a}_mask and {b}_mask overlap")
    return SplitSpec(train=parts["train"], val=parts["val"], test=parts["test"])


def convert(dataset_dir: Path, out_dir: Path) -> dict:
    edges = _read_edges(dataset_dir / "out1_graph_edges.txt")
    features, labels = _read_features_labels(
        dataset_dir / "out1_node_feature_label.txt"
    )
    n = features.shape[0]
    g = from_edges(
        n, edges, attributes=features, labels=labels,
        num_classes=int(labels.max()) + 1,
    )
    save_graph(g, out_dir)

    split_dir = out_dir / "splits"
    split_dir.mkdir(exist_ok=True)
    npz_files = sorted(dataset_dir.glob("*.npz"))
    for i, npz in enumerate(npz_files):
        save_split(_split_from_npz(npz, n), split_dir / f"split_{i}.json")

    return {
        "nodes": n,
        "edges": int(g.adj.nnz // 2),
        "features": features.shape[1],
        "classes": int(labels.max()) + 1,
        "splits": len(npz_files),
        "out": str(out_dir),
    }


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("dataset_dir", type=Path)
    parser.add_argument("out_dir", type=Path)
    args = parser.parse_args(argv)
    summary = convert(args.dataset_dir, args.out_dir)
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
