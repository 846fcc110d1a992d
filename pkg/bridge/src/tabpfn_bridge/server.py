"""Request loop: newline-delimited JSON frames in, one response frame out.

Every non-blank input line gets exactly one response.  A line that cannot
be parsed, validated, or served answers with an ``error`` frame carrying
the request id when one could be extracted (null otherwise); no input can
crash the loop.  The loop returns only at stdin EOF.
"""

from __future__ import annotations

import json
import logging
import sys

import numpy as np

from .models import CAPABILITIES

logger = logging.getLogger(__name__)


class _BadRequest(Exception):
    """Validation failure whose message goes straight into an error frame."""


def _extract_id(frame) -> int | None:
    rid = frame.get("id") if isinstance(frame, dict) else None
    # bools are ints in Python; a boolean id is not a valid identifier
    return rid if type(rid) is int else None


def _as_float_matrix(value, field: str) -> np.ndarray:
    if not isinstance(value, list) or any(not isinstance(row, list) for row in value):
        raise _BadRequest(f"{field} must be a list of rows")
    widths = {len(row) for row in value}
    if len(widths) > 1:
        raise _BadRequest(f"{field} rows have inconsistent lengths {sorted(widths)}")
    for row in value:
        for cell in row:
            if isinstance(cell, bool) or not isinstance(cell, (int, float)):
                raise _BadRequest(f"{field} contains a non-numeric entry")
    width = widths.pop() if widths else 0
    out = np.asarray(value, dtype=np.float64).reshape(len(value), width)
    if not np.isfinite(out).all():
        raise _BadRequest(f"{field} contains non-finite values")
    return out


def _as_int_vector(value, field: str) -> np.ndarray:
    if not isinstance(value, list) or any(
        isinstance(v, bool) or not isinstance(v, int) for v in value
    ):
        raise _BadRequest(f"{field} must be a list of integers")
    return np.asarray(value, dtype=np.int64)


def _validated_request(frame: dict) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    for field in ("train_x", "train_y", "test_x"):
        if field not in frame:
            raise _BadRequest(f"fit_predict frame is missing {field!r}")
    train_x = _as_float_matrix(frame["train_x"], "train_x")
    train_y = _as_int_vector(frame["train_y"], "train_y")
    test_x = _as_float_matrix(frame["test_x"], "test_x")
    seed = frame.get("seed", 0)
    if type(seed) is not int or seed < 0:
        raise _BadRequest(f"seed must be a non-negative integer, got {seed!r}")
    if train_x.shape[0] == 0:
        raise _BadRequest("train_x is empty")
    if train_y.shape[0] != train_x.shape[0]:
        raise _BadRequest(
            f"train_y length {train_y.shape[0]} does not match "
            f"{train_x.shape[0]} training rows"
        )
    if test_x.shape[0] and test_x.shape[1] != train_x.shape[1]:
        raise _BadRequest(
            f"feature width mismatch: train {train_x.shape[1]}, test {test_x.shape[1]}"
        )

    if train_x.shape[0] > CAPABILITIES["max_samples"]:
        raise _BadRequest(
            f"{train_x.shape[0]} training rows exceed max_samples "
            f"{CAPABILITIES['max_samples']}"
        )
    if train_x.shape[1] > CAPABILITIES["max_features"]:
        raise _BadRequest(
            f"{train_x.shape[1]} features exceed max_features "
            f"{CAPABILITIES['max_features']}"
        )
    n_classes = np.unique(train_y).size
    if n_classes > CAPABILITIES["max_classes"]:
        raise _BadRequest(
            f"{n_classes} training classes exceed max_classes "
            f"{CAPABILITIES['max_classes']}"
        )
    if n_classes < 2:
        raise _BadRequest("training labels contain a single class; need at least 2")
    return train_x, train_y, test_x, seed


def handle_line(model, line: str) -> dict:
    """Turn one raw input line into one response frame."""
    try:
        frame = json.loads(line)
    except json.JSONDecodeError as exc:
        return {"id": None, "error": f"malformed JSON frame: {exc}"}
    rid = _extract_id(frame)
    try:
        if not isinstance(frame, dict):
            raise _BadRequest("frame must be a JSON object")
        if rid is None:
            raise _BadRequest("frame is missing an integer 'id'")
        op = frame.get("op")
        if op == "hello":
            return {
                "id": rid,
                "name": model.name,
                "version": model.version,
                **CAPABILITIES,
            }
        if op == "fit_predict":
            train_x, train_y, test_x, seed = _validated_request(frame)
            if test_x.shape[0] == 0:
                classes = np.unique(train_y)
                proba = np.zeros((0, classes.size))
            else:
                classes, proba = model.fit_predict(train_x, train_y, test_x, seed)
            if not np.isfinite(proba).all():
                raise _BadRequest("model produced non-finite probabilities")
            return {
                "id": rid,
                "classes": [int(c) for c in classes],
                "proba": [[float(p) for p in row] for row in proba],
            }
        raise _BadRequest(f"unknown op {op!r}")
    except _BadRequest as exc:
        return {"id": rid, "error": str(exc)}
    except Exception as exc:  # a single bad request must not kill the loop
        logger.exception("request %s failed", rid)
        return {"id": rid, "error": f"{type(exc).__name__}: {exc}"}


def serve(model, stdin=None, stdout=None) -> None:
    """Answer frames until EOF.  Returns normally; the caller exits 0."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        response = handle_line(model, line)
        stdout.write(json.dumps(response) + "\n")
        stdout.flush()
