"""The classifiers the service can expose.

Two implementations share one duck type:

    name: str
    version: str
    fit_predict(train_x, train_y, test_x, seed) -> (classes, proba)

``TabPFNModel`` wraps the pretrained TabPFN classifier with every
configuration knob left at the library's defaults; ``CentroidModel`` is a
dependency-free deterministic stand-in (nearest class centroid with a
softmax over negative squared distances) for protocol testing and for
environments without the model weights.
"""

from __future__ import annotations

import numpy as np

from . import __version__

#: Advertised limits, mirroring the wrapped model family's published
#: context-size constraints.  The server rejects requests beyond them
#: before any model code runs.
CAPABILITIES = {
    "max_samples": 10_000,
    "max_features": 500,
    "max_classes": 10,
}


class CentroidModel:
    """Nearest-class-centroid classifier; fully deterministic, seed unused."""

    name = "centroid-bridge"
    version = __version__

    def fit_predict(
        self,
        train_x: np.ndarray,
        train_y: np.ndarray,
        test_x: np.ndarray,
        seed: int,
    ) -> tuple[np.ndarray, np.ndarray]:
        classes = np.unique(train_y)
        centroids = np.stack([train_x[train_y == c].mean(axis=0) for c in classes])
        d2 = (
            (test_x**2).sum(axis=1)[:, None]
            - 2.0 * test_x @ centroids.T
            + (centroids**2).sum(axis=1)[None, :]
        )
        logits = -d2
        logits -= logits.max(axis=1, keepdims=True)
        proba = np.exp(logits)
        proba /= proba.sum(axis=1, keepdims=True)
        return classes, proba


class TabPFNModel:
    """Pretrained TabPFN behind the same duck type.

    Only the device and the per-request seed are set; everything else
    stays at the library's defaults.  Import happens at construction so
    a missing dependency fails the process at startup, not mid-serve.
    """

    name = "tabpfn-bridge"

    def __init__(self, device: str = "cpu"):
        import tabpfn

        self._classifier_cls = tabpfn.TabPFNClassifier
        self.device = "cuda" if device == "gpu" else "cpu"
        self.version = getattr(tabpfn, "__version__", "unknown")

    def fit_predict(
        self,
        train_x: np.ndarray,
        train_y: np.ndarray,
        test_x: np.ndarray,
        seed: int,
    ) -> tuple[np.ndarray, np.ndarray]:
        clf = self._classifier_cls(device=self.device, random_state=seed)
        clf.fit(train_x, train_y)
        proba = np.asarray(clf.predict_proba(test_x), dtype=np.float64)
        classes = np.asarray(clf.classes_, dtype=np.int64)
        return classes, proba


def load_model(kind: str, device: str = "cpu"):
    """Build the model named by the --model flag."""
    if kind == "centroid":
        return CentroidModel()
    if kind == "tabpfn":
        return TabPFNModel(device=device)
    raise ValueError(f"unknown model kind {kind!r}")
