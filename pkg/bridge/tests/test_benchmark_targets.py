"""Published-benchmark reproduction, gated on heavyweight ingredients.

Every test here needs (a) the pretrained TabPFN package, (b) converted
benchmark bundles with their standard ten splits, pointed to by the
GTAB_BENCH_DIR environment variable (see tools/convert_geom_gcn.py in the
gtab repository for the expected layout), and (c) the gtab toolkit.  Any
missing ingredient skips the test loudly with the reason; nothing here is
mocked or downsized, so a full run takes hours.

Targets (mean test accuracy over the ten standard splits):
  cornell 74.05, texas 80.81, wisconsin 85.10  -> reproduce within 5 points
  chameleon 49.11 vs 45.16, squirrel 46.66 vs 37.51
      -> the full feature recipe must beat raw attributes (direction only)
The selected feature recipes behind the published numbers are not public,
so exact-match is not expected; the grid search re-selects per split on
validation accuracy over the published search space.
"""

import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

pytest.importorskip(
    "tabpfn", reason="pretrained TabPFN is not installed in this environment"
)

BENCH_DIR = os.environ.get("GTAB_BENCH_DIR", "")

# the published hyperparameter search space
FULL_SPACE = {
    "svd_rank": [None, 16, 32, 64, 128, 256],
    "pe_kind": ["lap", "rwse"],
    "pe_dim": [4, 8, 16, 32, 64],
    "local_structural": [True],
    "global_structural": [["betweenness", "pagerank"]],
    "smooth_steps": [0, 1, 2],
}
RAW_ATTRIBUTES_SPACE = {
    "svd_rank": [None],
    "pe_kind": ["none"],
    "local_structural": [False],
    "smooth_steps": [0],
}
BACKEND = f"bridge:{sys.executable} -m tabpfn_bridge --model tabpfn --device cpu"


def _require_dataset(name: str) -> Path:
    if not BENCH_DIR:
        pytest.skip("GTAB_BENCH_DIR is not set; benchmark bundles unavailable")
    root = Path(BENCH_DIR) / name
    if not (root / "meta.json").is_file():
        pytest.skip(f"{root}: no converted bundle for {name!r}")
    splits = sorted((root / "splits").glob("split_*.json"))
    if len(splits) != 10:
        pytest.skip(f"{root}/splits: expected the 10 standard splits, found {len(splits)}")
    probe = subprocess.run([sys.executable, "-c", "import gtab"], capture_output=True)
    if probe.returncode != 0:
        pytest.skip("the gtab toolkit is not installed")
    return root


def _grid_best_test_acc(bundle: Path, split: Path, space: dict, workdir: Path) -> float:
    space_file = workdir / "space.json"
    space_file.write_text(json.dumps(space))
    out = workdir / f"grid_{split.stem}.json"
    proc = subprocess.run(
        [sys.executable, "-m", "gtab.cli", "grid",
         "--graph", str(bundle), "--space", str(space_file),
         "--split", str(split), "--backend", BACKEND,
         "--seeds", "0", "--out", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    return json.loads(out.read_text())["best"]["test_acc_mean"]


def _mean_test_acc(name: str, space: dict, workdir: Path) -> float:
    root = _require_dataset(name)
    accs = [
        _grid_best_test_acc(root, split, space, workdir)
        for split in sorted((root / "splits").glob("split_*.json"))
    ]
    return 100.0 * sum(accs) / len(accs)


@pytest.mark.parametrize("name, target", [
    ("cornell", 74.05),
    ("texas", 80.81),
    ("wisconsin", 85.10),
])
def test_webkb_accuracy_within_five_points(name, target, tmp_path):
    mean = _mean_test_acc(name, FULL_SPACE, tmp_path)
    assert abs(mean - target) <= 5.0, f"{name}: mean test accuracy {mean:.2f} vs {target}"


@pytest.mark.parametrize("name", ["chameleon", "squirrel"])
def test_full_recipe_beats_raw_attributes(name, tmp_path):
    full = _mean_test_acc(name, FULL_SPACE, tmp_path)
    raw = _mean_test_acc(name, RAW_ATTRIBUTES_SPACE, tmp_path)
    assert full > raw, f"{name}: full recipe {full:.2f} <= raw attributes {raw:.2f}"
