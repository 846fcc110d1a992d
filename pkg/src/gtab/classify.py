"""In-context classification backends and the evaluation harness.

Backends never hold fitted state: every fit_predict call carries its own
training context.  Two builtins (multinomial logistic regression, k-NN)
cover debugging and baselines; BridgeBackend drives an external classifier
subprocess over newline-delimited JSON on stdin/stdout.

Wire protocol (one JSON object per line, one response per request, ids echo):

    -> {"id": 1, "op": "hello"}
    <- {"id": 1, "name": ..., "version": ..., "max_samples": ...,
        "max_features": ..., "max_classes": ...}
    -> {"id": 2, "op": "fit_predict", "train_x": [[...]], "train_y": [...],
        "test_x": [[...]], "seed": 0}
    <- {"id": 2, "classes": [...], "proba": [[...]]}
    <- {"id": N, "error": "..."}        (any request may fail)

The subprocess's stderr is logged, never parsed.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import queue
import shlex
import subprocess
import threading

import numpy as np
import scipy.optimize
import scipy.spatial.distance
from scipy.special import logsumexp, softmax

from . import __version__
from .errors import ComputeError, TransportError, ValidationError
from .graph import SplitSpec
from .tabularize import FeatureMatrix

logger = logging.getLogger(__name__)

BRIDGE_TIMEOUT_ENV = "GTAB_BRIDGE_TIMEOUT_SECS"
_UNLIMITED = 2**62


@dataclasses.dataclass(frozen=True)
class Capabilities:
    """Hard limits a backend advertises; enforced before anything is sent."""

    max_samples: int
    max_features: int
    max_classes: int


@dataclasses.dataclass(frozen=True)
class PredictionResult:
    """Class probabilities for one fit_predict call."""

    classes: np.ndarray
    proba: np.ndarray
    backend_name: str
    backend_version: str
    seed: int
    recipe_fingerprint: str


class ClassifierBackend:
    """Interface: subclasses set name/version/capabilities and implement
    _fit_predict(train_x, train_y, query_x, seed) -> (classes, proba)."""

    name: str = "backend"
    version: str = __version__
    capabilities = Capabilities(_UNLIMITED, _UNLIMITED, _UNLIMITED)

    def _fit_predict(self, train_x, train_y, query_x, seed):
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


# ---------------------------------------------------------------------------
# logistic regression


def logreg_loss_grad(
    params: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    l2: float,
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of softmax(x W + b) plus 0.5*l2*||W||^2.

    params stacks W (F*C, column-major by class) then b (C,); the bias is
    not penalized.  Returns (loss, gradient) with the gradient laid out
    like params.
    """
    n, f = x.shape
    w = params[: f * n_classes].reshape(f, n_classes)
    b = params[f * n_classes :]
    z = x @ w + b
    ll = z[np.arange(n), y] - logsumexp(z, axis=1)
    loss = -ll.mean() + 0.5 * l2 * np.sum(w * w)
    p = softmax(z, axis=1)
    p[np.arange(n), y] -= 1.0
    p /= n
    grad_w = x.T @ p + l2 * w
    grad_b = p.sum(axis=0)
    return float(loss), np.concatenate([grad_w.ravel(), grad_b])


class _LogRegBackend(ClassifierBackend):
    """Multinomial logistic regression fit fresh on every call."""

    def __init__(self, l2: float = 0.01, max_iter: int = 500, tol: float = 1e-8, seed: int = 0):
        if l2 < 0:
            raise ValidationError(f"l2 must be >= 0, got {l2}")
        if max_iter < 1:
            raise ValidationError(f"max_iter must be >= 1, got {max_iter}")
        self.l2 = l2
        self.max_iter = max_iter
        self.tol = tol
        self.seed = seed  # kept for provenance; the zero init needs no RNG
        self.name = f"builtin:logreg?l2={l2!r}"

    def _fit_predict(self, train_x, train_y, query_x, seed):
        classes, y_idx = np.unique(train_y, return_inverse=True)
        c = classes.size
        f = train_x.shape[1]
        result = scipy.optimize.minimize(
            logreg_loss_grad,
            np.zeros((f + 1) * c),
            args=(train_x, y_idx, c, self.l2),
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": self.max_iter, "gtol": self.tol, "ftol": 1e-18},
        )
        _, grad = logreg_loss_grad(result.x, train_x, y_idx, c, self.l2)
        gnorm = float(np.abs(grad).max())
        if gnorm > self.tol:
            logger.warning(
                "logreg stopped with gradient norm %.3e > tol %.1e; "
                "returning the probabilities anyway", gnorm, self.tol,
            )
        w = result.x[: f * c].reshape(f, c)
        b = result.x[f * c :]
        proba = softmax(query_x @ w + b, axis=1)
        return classes.astype(np.int64), proba


# ---------------------------------------------------------------------------
# k nearest neighbors


class _KNNBackend(ClassifierBackend):
    """Majority vote over the k nearest training rows (euclidean).

    Distance ties resolve to the lowest training-row index via a stable
    sort, so results never depend on argsort internals.
    """

    def __init__(self, k: int = 5):
        if k < 1:
            raise ValidationError(f"k must be >= 1, got {k}")
        self.k = k
        self.name = f"builtin:knn?k={k}"

    def _fit_predict(self, train_x, train_y, query_x, seed):
        k = self.k
        if k > train_x.shape[0]:
            logger.warning(
                "k=%d exceeds the %d training rows; clamping", k, train_x.shape[0]
            )
            k = train_x.shape[0]
        classes, y_idx = np.unique(train_y, return_inverse=True)
        dist = scipy.spatial.distance.cdist(query_x, train_x)
        nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
        votes = np.zeros((query_x.shape[0], classes.size))
        rows = np.repeat(np.arange(query_x.shape[0]), k)
        np.add.at(votes, (rows, y_idx[nearest].ravel()), 1.0)
        return classes.astype(np.int64), votes / k


# ---------------------------------------------------------------------------
# bridge subprocess


class BridgeBackend(ClassifierBackend):
    """Client for an external classifier speaking the stdio protocol.

    The subprocess is launched once and reused; a handshake at construction
    learns its name, version, and capability limits.  Every request is
    bounded by GTAB_BRIDGE_TIMEOUT_SECS (default 300).
    """

    def __init__(self, command: str | list[str], timeout: float | None = None):
        if timeout is None:
            timeout = float(os.environ.get(BRIDGE_TIMEOUT_ENV, "300"))
        self._timeout = timeout
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not argv:
            raise ValidationError("bridge command is empty")
        self._argv = argv
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
            )
        except OSError as exc:
            raise TransportError(f"could not launch bridge {argv[0]!r}: {exc}") from None
        self._lines: queue.Queue[str | None] = queue.Queue()
        threading.Thread(target=self._pump_stdout, daemon=True).start()
        threading.Thread(target=self._pump_stderr, daemon=True).start()
        self._next_id = 0
        self._closed = False

        hello = self._request({"op": "hello"})
        try:
            self.name = str(hello["name"])
            self.version = str(hello["version"])
            self.capabilities = Capabilities(
                max_samples=int(hello["max_samples"]),
                max_features=int(hello["max_features"]),
                max_classes=int(hello["max_classes"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            self.close()
            raise TransportError(f"bridge handshake frame is missing fields: {exc}") from None

    def _pump_stdout(self) -> None:
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _pump_stderr(self) -> None:
        for line in self._proc.stderr:
            logger.info("bridge stderr: %s", line.rstrip("\n"))

    def _request(self, body: dict) -> dict:
        self._next_id += 1
        rid = self._next_id
        frame = dict(body)
        frame["id"] = rid
        try:
            self._proc.stdin.write(json.dumps(frame) + "\n")
            self._proc.stdin.flush()
        except (OSError, ValueError) as exc:
            raise TransportError(f"bridge stdin write failed: {exc}") from None
        try:
            line = self._lines.get(timeout=self._timeout)
        except queue.Empty:
            raise TransportError(
                f"bridge did not answer within {self._timeout:.0f}s"
            ) from None
        if line is None:
            raise TransportError(
                f"bridge closed stdout before answering request {rid}"
            )
        try:
            resp = json.loads(line)
        except json.JSONDecodeError:
            raise TransportError(f"bridge sent a non-JSON line: {line[:200]!r}") from None
        if not isinstance(resp, dict) or resp.get("id") != rid:
            raise TransportError(
                f"bridge response id {resp.get('id') if isinstance(resp, dict) else '?'} "
                f"does not match request id {rid}"
            )
        if "error" in resp:
            raise ComputeError(f"bridge reported an error: {resp['error']}")
        return resp

    def _fit_predict(self, train_x, train_y, query_x, seed):
        resp = self._request(
            {
                "op": "fit_predict",
                "train_x": train_x.tolist(),
                "train_y": [int(y) for y in train_y],
                "test_x": query_x.tolist(),
                "seed": int(seed),
            }
        )
        try:
            classes = np.array(resp["classes"], dtype=np.int64)
            proba = np.array(resp["proba"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise TransportError(f"bridge fit_predict frame malformed: {exc}") from None
        if proba.ndim != 2 or proba.shape != (query_x.shape[0], classes.size):
            raise TransportError(
                f"bridge proba shape {proba.shape} does not match "
                f"{query_x.shape[0]} queries x {classes.size} classes"
            )
        return classes, proba

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self._proc.stdin.close()
        except OSError:
            pass
        try:
            rc = self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()
            raise TransportError(
                f"bridge {self._argv[0]!r} did not exit after stdin closed"
            )
        if rc != 0:
            raise TransportError(f"bridge {self._argv[0]!r} exited with status {rc}")

    def __del__(self):
        try:
            if not getattr(self, "_closed", True):
                self._proc.kill()
        except Exception:
            pass


# ---------------------------------------------------------------------------
# backend spec strings


def _parse_params(text: str, casts: dict) -> dict:
    out = {}
    if not text:
        return out
    for item in text.split("&"):
        key, sep, value = item.partition("=")
        if not sep or key not in casts:
            raise ValidationError(f"unknown or malformed backend parameter {item!r}")
        try:
            out[key] = casts[key](value)
        except ValueError:
            raise ValidationError(f"bad value for backend parameter {key!r}: {value!r}") from None
    return out


def backend_from_spec(spec: str) -> ClassifierBackend:
    """Build a backend from a spec string.

    ``builtin:logreg[?l2=..&max_iter=..&tol=..&seed=..]``,
    ``builtin:knn[?k=..]``, or ``bridge:<shell command>``.
    """
    kind, sep, rest = spec.partition(":")
    if not sep:
        raise ValidationError(f"backend spec {spec!r} needs a 'builtin:' or 'bridge:' prefix")
    if kind == "bridge":
        if not rest.strip():
            raise ValidationError("bridge backend spec has an empty command")
        return BridgeBackend(rest)
    if kind != "builtin":
        raise ValidationError(f"unknown backend kind {kind!r}")
    name, _, params = rest.partition("?")
    if name == "logreg":
        kwargs = _parse_params(params, {"l2": float, "max_iter": int, "tol": float, "seed": int})
        return _LogRegBackend(**kwargs)
    if name == "knn":
        kwargs = _parse_params(params, {"k": int})
        return _KNNBackend(**kwargs)
    raise ValidationError(f"unknown builtin backend {name!r}")


def builtin_logreg(l2: float = 0.01, max_iter: int = 500, tol: float = 1e-8, seed: int = 0) -> ClassifierBackend:
    return _LogRegBackend(l2=l2, max_iter=max_iter, tol=tol, seed=seed)


def builtin_knn(k: int = 5) -> ClassifierBackend:
    return _KNNBackend(k=k)


# ---------------------------------------------------------------------------
# shared fit/predict entry point


def fit_predict(
    backend: ClassifierBackend,
    train_x: np.ndarray,
    train_y: np.ndarray,
    query_x: np.ndarray,
    *,
    seed: int = 0,
    fingerprint: str = "",
) -> PredictionResult:
    """Validate, enforce capabilities, and run one in-context prediction.

    A single-class training context short-circuits to one-hot rows for
    that class (with a warning) without consulting the backend.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=np.int64)
    query_x = np.asarray(query_x, dtype=np.float64)
    if train_x.ndim != 2 or query_x.ndim != 2:
        raise ValidationError("train_x and query_x must be 2-D")
    if train_y.shape != (train_x.shape[0],):
        raise ValidationError(
            f"train_y length {train_y.shape} does not match {train_x.shape[0]} training rows"
        )
    if train_x.shape[0] == 0:
        raise ValidationError("training context is empty")
    if train_x.shape[1] != query_x.shape[1]:
        raise ValidationError(
            f"feature width mismatch: train {train_x.shape[1]}, query {query_x.shape[1]}"
        )
    if not (np.isfinite(train_x).all() and np.isfinite(query_x).all()):
        raise ValidationError("feature matrices contain non-finite values")

    caps = backend.capabilities
    classes = np.unique(train_y)
    if train_x.shape[0] > caps.max_samples:
        raise ValidationError(
            f"{train_x.shape[0]} training rows exceed backend limit {caps.max_samples}"
        )
    if train_x.shape[1] > caps.max_features:
        raise ValidationError(
            f"{train_x.shape[1]} features exceed backend limit {caps.max_features}"
        )
    if classes.size > caps.max_classes:
        raise ValidationError(
            f"{classes.size} classes exceed backend limit {caps.max_classes}"
        )

    if classes.size == 1:
        logger.warning(
            "training context holds a single class (%d); returning one-hot rows",
            int(classes[0]),
        )
        proba = np.ones((query_x.shape[0], 1))
        return PredictionResult(
            classes=classes.astype(np.int64),
            proba=proba,
            backend_name=backend.name,
            backend_version=backend.version,
            seed=seed,
            recipe_fingerprint=fingerprint,
        )

    out_classes, proba = backend._fit_predict(train_x, train_y, query_x, seed)
    out_classes = np.asarray(out_classes, dtype=np.int64)
    proba = np.asarray(proba, dtype=np.float64)
    if not np.array_equal(out_classes, classes):
        raise ComputeError(
            f"backend returned classes {out_classes.tolist()} but the training "
            f"context holds {classes.tolist()}"
        )
    if proba.shape != (query_x.shape[0], classes.size):
        raise ComputeError(f"backend proba shape {proba.shape} is wrong")
    if not np.isfinite(proba).all() or proba.min() < -1e-9:
        raise ComputeError("backend probabilities are not finite non-negative")
    if query_x.shape[0] and np.abs(proba.sum(axis=1) - 1.0).max() > 1e-6:
        raise ComputeError("backend probability rows do not sum to 1 within 1e-6")
    return PredictionResult(
        classes=out_classes,
        proba=proba,
        backend_name=backend.name,
        backend_version=backend.version,
        seed=seed,
        recipe_fingerprint=fingerprint,
    )


# ---------------------------------------------------------------------------
# evaluation


def evaluate(
    labels: np.ndarray,
    fm: FeatureMatrix,
    split: SplitSpec,
    backend: ClassifierBackend,
    seeds: list[int],
    dataset: str = "",
) -> dict:
    """Run fit_predict once per seed and aggregate a deterministic report.

    The training context is the train rows only; val and test rows ride in
    one query batch per call, so their labels are never visible to the
    backend.  Returns a plain dict ready for sorted-key JSON dumping.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if not seeds:
        raise ValidationError("need at least one seed")
    all_idx = np.concatenate([split.train, split.val, split.test])
    if int(all_idx.max()) >= labels.shape[0] or labels.shape[0] != fm.data.shape[0]:
        raise ValidationError(
            f"split/labels/features disagree: {labels.shape[0]} labels, "
            f"{fm.data.shape[0]} feature rows, max split index {int(all_idx.max())}"
        )
    for part_name, part in (("train", split.train), ("val", split.val), ("test", split.test)):
        if part.size and (labels[part] < 0).any():
            raise ValidationError(f"{part_name} set contains unlabeled nodes")

    x = fm.data
    query_idx = np.concatenate([split.val, split.test])
    n_val = split.val.size
    report_classes = np.unique(labels[np.concatenate([split.train, query_idx])])

    val_accs: list[float] = []
    test_accs: list[float] = []
    digests: list[str] = []
    predictions: dict[str, list[int]] = {}
    confusion = np.zeros((report_classes.size, report_classes.size), dtype=np.int64)
    test_true = labels[split.test]
    per_class_hits = np.zeros(report_classes.size)
    class_pos = {int(c): i for i, c in enumerate(report_classes)}

    for seed in seeds:
        res = fit_predict(
            backend,
            x[split.train],
            labels[split.train],
            x[query_idx],
            seed=seed,
            fingerprint=fm.recipe_fingerprint,
        )
        pred = res.classes[np.argmax(res.proba, axis=1)]
        predictions[str(int(seed))] = [int(p) for p in pred]
        digests.append(
            hashlib.sha256(
                np.ascontiguousarray(res.proba).tobytes() + res.classes.tobytes()
            ).hexdigest()
        )
        val_pred, test_pred = pred[:n_val], pred[n_val:]
        if n_val:
            val_accs.append(float(np.mean(val_pred == labels[split.val])))
        if split.test.size:
            test_accs.append(float(np.mean(test_pred == test_true)))
            for truth, guess in zip(test_true, test_pred):
                confusion[class_pos[int(truth)], class_pos[int(guess)]] += 1
            for i, c in enumerate(report_classes):
                mask = test_true == c
                if mask.any():
                    per_class_hits[i] += float(np.mean(test_pred[mask] == c))

    n_seeds = len(seeds)
    per_class = {
        str(int(c)): per_class_hits[i] / n_seeds
        for i, c in enumerate(report_classes)
        if (test_true == c).any()
    }
    return {
        "dataset": dataset,
        "recipe_fingerprint": fm.recipe_fingerprint,
        "backend": {"name": backend.name, "version": backend.version},
        "seeds": [int(s) for s in seeds],
        "val_acc_mean": float(np.mean(val_accs)) if val_accs else None,
        "val_acc_std": float(np.std(val_accs)) if val_accs else None,
        "test_acc_mean": float(np.mean(test_accs)) if test_accs else None,
        "test_acc_std": float(np.std(test_accs)) if test_accs else None,
        "val_accs": val_accs,
        "test_accs": test_accs,
        "classes": [int(c) for c in report_classes],
        "per_class": per_class,
        "confusion": confusion.tolist(),
        "predictions": predictions,
        "prediction_digests": digests,
    }
