"""Stdio service wrapping an in-context tabular classifier.

The service speaks newline-delimited JSON frames on stdin/stdout:

    -> {"id": 1, "op": "hello"}
    <- {"id": 1, "name": ..., "version": ..., "max_samples": ...,
        "max_features": ..., "max_classes": ...}
    -> {"id": 2, "op": "fit_predict", "train_x": [[...]], "train_y": [...],
        "test_x": [[...]], "seed": 0}
    <- {"id": 2, "classes": [...], "proba": [[...]]}
    <- {"id": N, "error": "..."}        (any request may fail)

One response per request, ids echoed, stderr reserved for logging.  The
loop never exits on a bad frame; it runs until stdin EOF.
"""

__version__ = "0.1.0"
