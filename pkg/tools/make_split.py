"""Generate a shuffled train/val/test split file for a graph bundle.

Proportions default to the common 60/20/20 transductive protocol; the
test set takes whatever the rounded train and validation counts leave.

Usage: python3 make_split.py --graph BUNDLE_DIR --seed 0 --out split.json
       python3 make_split.py --nodes 183 --seed 3 --out split.json
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from gtab.graph import SplitSpec, save_split


def make_split(n: int, seed: int, train_frac: float, val_frac: float) -> SplitSpec:
    if not 0.0 < train_frac < 1.0 or not 0.0 <= val_frac < 1.0:
        raise SystemExit("fractions must lie in (0, 1)")
    if train_frac + val_frac >= 1.0:
        raise SystemExit("train and val fractions must leave room for the test set")
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(n * train_frac))
    n_val = int(round(n * val_frac))
    if n_train == 0:
        raise SystemExit(f"train fraction {train_frac} rounds to zero nodes of {n}")
    return SplitSpec(
        train=np.sort(order[:n_train]).astype(np.int64),
        val=np.sort(order[n_train : n_train + n_val]).astype(np.int64),
        test=np.sort(order[n_train + n_val :]).astype(np.int64),
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--graph", type=Path, help="bundle directory (reads meta.json)")
    source.add_argument("--nodes", type=int, help="node count, bypassing the bundle")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--train-frac", type=float, default=0.6)
    parser.add_argument("--val-frac", type=float, default=0.2)
    parser.add_argument("--out", type=Path, required=True)
    args = parser.parse_args(argv)

    if args.graph is not None:
        meta = json.loads((args.graph / "meta.json").read_text())
        n = int(meta["num_nodes"])
    else:
        n = args.nodes
    if n < 1:
        raise SystemExit(f"need at least one node, got {n}")

    split = make_split(n, args.seed, args.train_frac, args.val_frac)
    save_split(split, args.out)
    print(json.dumps({
        "nodes": n,
        "train": int(split.train.size),
        "val": int(split.val.size),
        "test": int(split.test.size),
        "seed": args.seed,
        "out": str(args.out),
    }, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
