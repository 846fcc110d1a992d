"""Convert a multi-graph benchmark directory in the `<DS>_*.txt` layout into
one bundle per graph, ready for `gtab pool`.

Expected inputs inside DATASET_DIR (with <DS> the directory's prefix):

    <DS>_A.txt                "u, v" pairs, 1-indexed global node ids
    <DS>_graph_indicator.txt  one 1-indexed graph id per global node
    <DS>_graph_labels.txt     one integer per graph
    <DS>_node_attributes.txt  optional, comma-separated floats per node
    <DS>_node_labels.txt      optional, one integer per node (one-hot encoded
                              into features.csv when no attribute file exists)

Output: OUT_DIR/g<k> bundle per graph (nodes renumbered locally, sorted by
global id) and OUT_DIR/labels.csv with one graph label per bundle.  Graph
labels are remapped to 0..C-1 by sorted value, so e.g. {-1, 1} becomes
{0, 1}; the mapping is printed in the summary.

Usage: python3 convert_tu.py DATASET_DIR OUT_DIR
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from gtab.graph import from_edges, save_graph


def _find_prefix(dataset_dir: Path) -> str:
    hits = sorted(dataset_dir.glob("*_A.txt"))
    if len(hits) != 1:
        raise SystemExit(f"{dataset_dir}: expected exactly one *_A.txt, found {len(hits)}")
    return hits[0].name[: -len("_A.txt")]


def _read_int_column(path: Path) -> np.ndarray:
    return np.loadtxt(path, dtype=np.int64, ndmin=1)


def convert(dataset_dir: Path, out_dir: Path) -> dict:
    prefix = _find_prefix(dataset_dir)
    edges = np.loadtxt(dataset_dir / f"{prefix}_A.txt", dtype=np.int64,
                       delimiter=",", ndmin=2)
    indicator = _read_int_column(dataset_dir / f"{prefix}_graph_indicator.txt")
    graph_labels_raw = _read_int_column(dataset_dir / f"{prefix}_graph_labels.txt")

    attr_file = dataset_dir / f"{prefix}_node_attributes.txt"
    node_label_file = dataset_dir / f"{prefix}_node_labels.txt"
    attributes = None
    node_labels = None
    if attr_file.is_file():
        attributes = np.loadtxt(attr_file, dtype=np.float64, delimiter=",", ndmin=2)
    if node_label_file.is_file():
        node_labels = _read_int_column(node_label_file)
        if attributes is None:
            # one-hot node labels stand in for missing attributes
            values = np.unique(node_labels)
            attributes = (node_labels[:, None] == values[None, :]).astype(np.float64)

    total_nodes = indicator.shape[0]
    num_graphs = int(indicator.max())
    if graph_labels_raw.shape[0] != num_graphs:
        raise SystemExit(
            f"{prefix}: {graph_labels_raw.shape[0]} graph labels for "
            f"{num_graphs} graphs"
        )
    if edges.min() < 1 or edges.max() > total_nodes:
        raise SystemExit(f"{prefix}: edge endpoint outside 1..{total_nodes}")
    if attributes is not None and attributes.shape[0] != total_nodes:
        raise SystemExit(
            f"{prefix}: {attributes.shape[0]} attribute rows for {total_nodes} nodes"
        )

    # remap graph labels onto 0..C-1 by sorted raw value
    values = np.unique(graph_labels_raw)
    label_map = {int(v): i for i, v in enumerate(values)}
    graph_labels = np.array([label_map[int(v)] for v in graph_labels_raw])

    edges0 = edges - 1          # to 0-indexed global ids
    indicator0 = indicator - 1
    edge_graph = indicator0[edges0[:, 0]]
    if not np.array_equal(edge_graph, indicator0[edges0[:, 1]]):
        raise SystemExit(f"{prefix}: an edge crosses two graphs")

    out_dir.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(num_graphs)))
    for k in range(num_graphs):
        members = np.flatnonzero(indicator0 == k)
        local = {int(v): i for i, v in enumerate(members)}
        mask = edge_graph == k
        local_edges = np.array(
            [[local[int(u)], local[int(v)]] for u, v in edges0[mask]],
            dtype=np.int64,
        ).reshape(mask.sum(), 2)
        # the format lists both directions of every edge; canonicalize so
        # only genuine anomalies (self-loops, true duplicates) get warned on
        lo = np.minimum(local_edges[:, 0], local_edges[:, 1])
        hi = np.maximum(local_edges[:, 0], local_edges[:, 1])
        local_edges = np.unique(np.stack([lo, hi], axis=1), axis=0)
        g = from_edges(
            members.size,
            local_edges,
            attributes=None if attributes is None else attributes[members],
            labels=None if node_labels is None else node_labels[members],
        )
        save_graph(g, out_dir / f"g{k:0{width}d}")

    (out_dir / "labels.csv").write_text(
        "".join(f"{int(y)}\n" for y in graph_labels)
    )
    return {
        "graphs": num_graphs,
        "nodes": total_nodes,
        "classes": values.size,
        "label_map": {str(k): v for k, v in label_map.items()},
        "attributes": None if attributes is None else int(attributes.shape[1]),
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
