"""Command-line front end.

Four subcommands: featurize (graph bundle -> feature matrix file),
classify (features -> accuracy report via a chosen backend), grid (recipe
search over a feature-space file), and pool (per-graph rows for a directory
of bundles).  Human-readable diagnostics go to stderr; stdout carries one
compact JSON event per major step so scripts can scrape progress.

Exit codes: 0 ok, 2 validation failure, 3 compute failure, 4 backend
transport failure.
"""

from __future__ import annotations

import functools
import hashlib
import itertools
import json
import logging
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__, classify as classify_mod, tabularize
from .errors import GtabError, ValidationError
from .graph import build_operators, load_graph, load_split
from .tabularize import FeatureRecipe, load_recipe


def _emit(event: str, **fields) -> None:
    click.echo(json.dumps({"event": event, **fields}, sort_keys=True))


def _cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except GtabError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(exc.exit_code)

    return wrapper


def _parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise ValidationError(f"seeds must be comma-separated integers, got {text!r}") from None
    if not seeds:
        raise ValidationError("need at least one seed")
    return seeds


def _load_labels_file(path: Path, num_rows: int) -> np.ndarray:
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                values.append(int(line))
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: expected integer label") from None
    labels = np.array(values, dtype=np.int64)
    if labels.shape[0] != num_rows:
        raise ValidationError(f"{path}: {labels.shape[0]} labels for {num_rows} rows")
    return labels


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _check_attribute_source(g, recipe: FeatureRecipe, graph_dir: str) -> None:
    """Name the absent bundle file when a recipe needs attribute columns."""
    if (recipe.svd_rank != "off" or recipe.smooth_steps > 0) and g.attributes is None:
        raise ValidationError(
            f"{Path(graph_dir) / 'features.csv'} is missing but the recipe "
            f"needs attribute columns"
        )


@click.group()
@click.version_option(version=__version__, prog_name="gtab")
@click.option("-v", "--verbose", is_flag=True, help="Log debug detail to stderr.")
def main(verbose: bool) -> None:
    """Graph tabularization and in-context node classification."""
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.option("--graph", "graph_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--recipe", "recipe_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["csv", "bin"]), default="csv", show_default=True)
@_cli_errors
def featurize(graph_dir: str, recipe_path: str, out_path: str, fmt: str) -> None:
    """Assemble the recipe's feature families for one graph bundle."""
    started = time.perf_counter()
    g = load_graph(graph_dir)
    ops = build_operators(g)
    recipe = load_recipe(recipe_path)
    _check_attribute_source(g, recipe, graph_dir)
    timings: dict = {}
    fm = tabularize.assemble(g, ops, recipe, _timings=timings)
    tabularize.write_feature_matrix(fm, out_path, fmt=fmt)
    _emit(
        "featurize",
        graph=str(graph_dir),
        nodes=g.num_nodes,
        features=fm.num_features,
        groups=[[name, width] for name, width in fm.column_groups],
        family_seconds={name: round(secs, 6) for name, secs in timings.items()},
        fingerprint=fm.recipe_fingerprint,
        out=str(out_path),
        elapsed_s=round(time.perf_counter() - started, 3),
    )


def _normalize_and_budget(fm, norm_stats, split, max_features):
    stats_nodes = split.train if norm_stats == "train" else None
    fm = tabularize.z_normalize(fm, stats_nodes=stats_nodes)
    if max_features is not None:
        fm = tabularize.enforce_budget(fm, max_features)
    return fm


@main.command(name="classify")
@click.option("--graph", "graph_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--recipe", "recipe_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--table", "table_path", type=click.Path(exists=True, dir_okay=False),
              help="Classify rows of a feature matrix file instead of a graph bundle.")
@click.option("--labels", "labels_path", type=click.Path(exists=True, dir_okay=False),
              help="Label file for --table (one integer per row).")
@click.option("--split", "split_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--backend", "backend_spec", required=True)
@click.option("--seeds", default="0", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--pred-out", "pred_out", type=click.Path(dir_okay=False),
              help="Also write raw predictions (no scores) to this file.")
@click.option("--norm-stats", type=click.Choice(["all", "train"]),
              help="Override where normalization statistics come from.")
@click.option("--max-features", type=int, help="Tighten the feature budget below the backend limit.")
@_cli_errors
def classify_cmd(
    graph_dir, recipe_path, table_path, labels_path, split_path,
    backend_spec, seeds, out_path, pred_out, norm_stats, max_features,
) -> None:
    """Evaluate a backend over a split, one fit_predict per seed."""
    seed_list = _parse_seeds(seeds)
    if table_path is not None:
        if graph_dir is not None or recipe_path is not None:
            raise ValidationError("--table replaces --graph/--recipe; pass one or the other")
        if labels_path is None:
            raise ValidationError("--table needs --labels")
        fm = tabularize.read_feature_matrix(table_path)
        labels = _load_labels_file(Path(labels_path), fm.data.shape[0])
        split = load_split(split_path, fm.data.shape[0])
        stats = norm_stats or "all"
        dataset = Path(table_path).name
    else:
        if graph_dir is None or recipe_path is None:
            raise ValidationError("classify needs --graph and --recipe (or --table and --labels)")
        g = load_graph(graph_dir)
        if g.labels is None:
            raise ValidationError(f"{graph_dir}: bundle has no labels.csv")
        recipe = load_recipe(recipe_path)
        _check_attribute_source(g, recipe, graph_dir)
        ops = build_operators(g)
        fm = tabularize.assemble(g, ops, recipe)
        labels = g.labels
        split = load_split(split_path, g.num_nodes)
        stats = norm_stats or recipe.norm_stats
        dataset = Path(graph_dir).name

    with classify_mod.backend_from_spec(backend_spec) as backend:
        budget = backend.capabilities.max_features
        if max_features is not None:
            budget = min(budget, max_features)
        fm = _normalize_and_budget(fm, stats, split, budget)
        report = classify_mod.evaluate(labels, fm, split, backend, seed_list, dataset=dataset)

    _write_json(Path(out_path), report)
    if pred_out is not None:
        _write_json(
            Path(pred_out),
            {
                "classes": report["classes"],
                "query_indices": [int(i) for i in np.concatenate([split.val, split.test])],
                "predictions": report["predictions"],
            },
        )
    _emit(
        "classify",
        dataset=dataset,
        backend=report["backend"]["name"],
        val_acc_mean=report["val_acc_mean"],
        test_acc_mean=report["test_acc_mean"],
        out=str(out_path),
    )


_SPACE_KEYS = (
    "svd_rank", "pe_kind", "pe_dim", "local_structural", "global_structural",
    "smooth_steps", "betweenness_samples", "seed", "norm_stats", "override_search_space",
)


def _space_recipes(space: dict) -> list[FeatureRecipe]:
    unknown = set(space) - set(_SPACE_KEYS)
    if unknown:
        raise ValidationError(f"unknown search-space fields: {sorted(unknown)}")
    axes: list[list] = []
    for key in _SPACE_KEYS:
        if key in space:
            values = space[key]
            if not isinstance(values, list) or not values:
                raise ValidationError(f"search-space field {key!r} must be a non-empty list")
            axes.append([(key, v) for v in values])
        else:
            axes.append([None])  # absent axis: recipe default
    recipes = []
    for combo in itertools.product(*axes):
        kwargs = dict(kv for kv in combo if kv is not None)
        recipes.append(FeatureRecipe.from_dict(kwargs))
    return recipes


@main.command()
@click.option("--graph", "graph_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--space", "space_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--split", "split_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--backend", "backend_spec", required=True)
@click.option("--seeds", default="0", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@_cli_errors
def grid(graph_dir, space_path, split_path, backend_spec, seeds, out_path) -> None:
    """Try every recipe in a search space; select by validation accuracy.

    Ties prefer fewer features, then the lexicographically smallest
    canonical recipe JSON.  Test accuracy is reported for every trial but
    never drives selection.
    """
    seed_list = _parse_seeds(seeds)
    try:
        space = json.loads(Path(space_path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{space_path}: {exc}") from None
    if not isinstance(space, dict):
        raise ValidationError(f"{space_path}: search space must be a JSON object")
    recipes = _space_recipes(space)

    g = load_graph(graph_dir)
    if g.labels is None:
        raise ValidationError(f"{graph_dir}: bundle has no labels.csv")
    split = load_split(split_path, g.num_nodes)
    if split.val.size == 0:
        raise ValidationError("grid selection needs a non-empty validation set")
    ops = build_operators(g)
    dataset = Path(graph_dir).name

    cache: dict = {}
    trials = []
    with classify_mod.backend_from_spec(backend_spec) as backend:
        for index, recipe in enumerate(recipes):
            _check_attribute_source(g, recipe, graph_dir)
            fm = tabularize.assemble(g, ops, recipe, _cache=cache)
            fm = _normalize_and_budget(fm, recipe.norm_stats, split, backend.capabilities.max_features)
            report = classify_mod.evaluate(labels=g.labels, fm=fm, split=split,
                                           backend=backend, seeds=seed_list, dataset=dataset)
            trial = {
                "recipe": recipe.to_dict(),
                "recipe_canonical": recipe.canonical_json(),
                "num_features": fm.num_features,
                "val_acc_mean": report["val_acc_mean"],
                "val_acc_std": report["val_acc_std"],
                "test_acc_mean": report["test_acc_mean"],
                "test_acc_std": report["test_acc_std"],
            }
            trials.append(trial)
            _emit("trial", index=index, recipe=trial["recipe_canonical"],
                  num_features=trial["num_features"], val_acc_mean=trial["val_acc_mean"])

    best = min(
        trials,
        key=lambda t: (-t["val_acc_mean"], t["num_features"], t["recipe_canonical"]),
    )
    payload = {
        "dataset": dataset,
        "backend": backend_spec,
        "seeds": seed_list,
        "num_trials": len(trials),
        "best": best,
        "trials": trials,
    }
    _write_json(Path(out_path), payload)
    _emit("grid", dataset=dataset, num_trials=len(trials),
          best_val_acc_mean=best["val_acc_mean"], out=str(out_path))


@main.command()
@click.option("--graphs", "graphs_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--recipe", "recipe_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--mode", type=click.Choice(["mean", "sum"]), default="mean", show_default=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "bin"]), default="csv", show_default=True)
@_cli_errors
def pool(graphs_dir, recipe_path, out_path, mode, fmt) -> None:
    """Pool per-node features into one row per graph bundle.

    Bundles are the subdirectories of --graphs (sorted by name) that hold a
    meta.json.  A labels.csv at the top level (one integer per bundle, same
    order) is required and is copied to <out>.labels.csv so the result
    feeds straight into `gtab classify --table`.
    """
    recipe = load_recipe(recipe_path)
    root = Path(graphs_dir)
    bundles = sorted(p for p in root.iterdir() if p.is_dir() and (p / "meta.json").is_file())
    if not bundles:
        raise ValidationError(f"{root}: no bundle subdirectories found")

    rows = []
    groups = None
    fingerprints = []
    for bundle in bundles:
        g = load_graph(bundle)
        ops = build_operators(g)
        fm = tabularize.assemble(g, ops, recipe)
        if groups is None:
            groups = fm.column_groups
        elif groups != fm.column_groups:
            raise ValidationError(
                f"{bundle}: column groups {fm.column_groups} differ from "
                f"{bundles[0]}: {groups}; bundles are not poolable together"
            )
        rows.append(tabularize.pool_graph(fm, np.arange(g.num_nodes), mode=mode))
        fingerprints.append(fm.recipe_fingerprint)

    pooled = tabularize.FeatureMatrix(
        data=np.stack(rows, axis=0),
        column_groups=groups,
        recipe_fingerprint=hashlib.sha256("\n".join(fingerprints).encode()).hexdigest(),
    )
    tabularize.write_feature_matrix(pooled, out_path, fmt=fmt)

    labels_file = root / "labels.csv"
    if not labels_file.is_file():
        raise ValidationError(f"{root}: missing top-level labels.csv (one integer per bundle)")
    labels = _load_labels_file(labels_file, len(bundles))
    labels_out = str(out_path) + ".labels.csv"
    Path(labels_out).write_text("".join(f"{int(y)}\n" for y in labels))

    _emit(
        "pool",
        graphs=len(bundles),
        features=pooled.num_features,
        mode=mode,
        out=str(out_path),
        labels_out=labels_out,
    )


if __name__ == "__main__":
    main()
