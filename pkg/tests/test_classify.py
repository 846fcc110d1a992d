import sys
from pathlib import Path

import numpy as np
import pytest

import oracles
from builders import even_split, two_gaussians
from gtab.classify import (
    BRIDGE_TIMEOUT_ENV,
    BridgeBackend,
    Capabilities,
    ClassifierBackend,
    backend_from_spec,
    builtin_knn,
    builtin_logreg,
    evaluate,
    fit_predict,
    logreg_loss_grad,
)
from gtab.errors import ComputeError, TransportError, ValidationError
from gtab.tabularize import FeatureMatrix

FAKE_BRIDGE = Path(__file__).parent / "helpers" / "fake_bridge.py"


def bridge_cmd(*args) -> list[str]:
    return [sys.executable, str(FAKE_BRIDGE), *args]


def _matrix(data):
    data = np.asarray(data, dtype=np.float64)
    return FeatureMatrix(data, (("x", data.shape[1]),), "fp-test")


# ---------------------------------------------------------------------------
# logistic regression


def test_logreg_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    for trial in range(5):
        n, f, c = 12, 4, 3
        x = rng.standard_normal((n, f))
        y = rng.integers(0, c, n)
        params = rng.standard_normal((f + 1) * c) * 0.5
        _, grad = logreg_loss_grad(params, x, y, c, l2=0.1)
        fd = oracles.finite_diff_grad(
            lambda p: logreg_loss_grad(p, x, y, c, 0.1)[0], params
        )
        rel = np.linalg.norm(grad - fd) / max(1.0, np.linalg.norm(fd))
        assert rel <= 1e-6


def test_logreg_symmetric_context_gives_half():
    backend = builtin_logreg()
    res = fit_predict(
        backend,
        np.array([[-1.0], [1.0]]),
        np.array([0, 1]),
        np.array([[0.0]]),
    )
    assert res.proba[0] == pytest.approx([0.5, 0.5], abs=0.02)


def test_logreg_huge_l2_returns_class_priors():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((30, 3))
    y = np.array([0] * 20 + [1] * 10)
    res = fit_predict(builtin_logreg(l2=1e6), x, y, rng.standard_normal((5, 3)))
    assert np.abs(res.proba - [2.0 / 3.0, 1.0 / 3.0]).max() <= 0.01


def test_logreg_duplicate_features_do_not_flip_predictions():
    rng = np.random.default_rng(2)
    n_per = 25
    x = np.concatenate([
        rng.standard_normal((n_per, 4)) * 0.3,
        rng.standard_normal((n_per, 4)) * 0.3 + 3.0,
    ])
    y = np.repeat(np.array([0, 1], dtype=np.int64), n_per)
    q = np.concatenate([
        rng.standard_normal((20, 4)) * 0.3,
        rng.standard_normal((20, 4)) * 0.3 + 3.0,
    ])
    backend = builtin_logreg(l2=0.0)
    base = fit_predict(backend, x, y, q)
    doubled = fit_predict(backend, np.tile(x, 2), y, np.tile(q, 2))
    assert np.array_equal(np.argmax(base.proba, 1), np.argmax(doubled.proba, 1))


def test_logreg_separates_two_gaussians():
    x, y = two_gaussians(60, 4, distance=5.0, sigma=0.1, seed=3)
    qx, qy = two_gaussians(100, 4, distance=5.0, sigma=0.1, seed=4)
    res = fit_predict(builtin_logreg(), x, y, qx)
    acc = np.mean(res.classes[np.argmax(res.proba, 1)] == qy)
    assert acc >= 0.99


def test_logreg_param_validation():
    with pytest.raises(ValidationError):
        builtin_logreg(l2=-1.0)
    with pytest.raises(ValidationError):
        builtin_logreg(max_iter=0)


# ---------------------------------------------------------------------------
# k nearest neighbors


def test_knn_vote_fractions():
    res = fit_predict(
        builtin_knn(k=3),
        np.array([[0.0], [0.1], [5.0]]),
        np.array([0, 0, 1]),
        np.array([[0.05]]),
    )
    assert np.array_equal(res.classes, [0, 1])
    assert res.proba[0] == pytest.approx([2.0 / 3.0, 1.0 / 3.0])


def test_knn_equidistant_tie_takes_lowest_index():
    res = fit_predict(
        builtin_knn(k=1),
        np.array([[-1.0], [1.0]]),
        np.array([1, 0]),
        np.array([[0.0]]),
    )
    # rows 0 and 1 are equidistant; the stable sort keeps row 0 (class 1)
    assert np.array_equal(np.argmax(res.proba, 1), [1])
    assert res.proba[0] == pytest.approx([0.0, 1.0])


def test_knn_clamps_oversized_k_with_warning(caplog):
    import logging

    with caplog.at_level(logging.WARNING, logger="gtab.classify"):
        res = fit_predict(
            builtin_knn(k=10),
            np.array([[0.0], [1.0]]),
            np.array([0, 1]),
            np.array([[0.2]]),
        )
    assert "clamping" in caplog.text
    assert res.proba[0] == pytest.approx([0.5, 0.5])


def test_knn_k_validation():
    with pytest.raises(ValidationError):
        builtin_knn(k=0)


# ---------------------------------------------------------------------------
# fit_predict contract


class _RaisingBackend(ClassifierBackend):
    name = "raising"

    def _fit_predict(self, *args):
        raise AssertionError("backend must not be consulted")


class _ShapedBackend(ClassifierBackend):
    """Returns whatever the test tells it to."""

    name = "shaped"

    def __init__(self, fn):
        self._fn = fn

    def _fit_predict(self, train_x, train_y, query_x, seed):
        return self._fn(train_x, train_y, query_x, seed)


def test_fit_predict_validations():
    backend = builtin_knn(k=1)
    x = np.zeros((3, 2))
    y = np.zeros(3, dtype=np.int64)
    with pytest.raises(ValidationError, match="empty"):
        fit_predict(backend, np.zeros((0, 2)), np.zeros(0, dtype=np.int64), x)
    with pytest.raises(ValidationError, match="2-D"):
        fit_predict(backend, np.zeros(3), y, x)
    with pytest.raises(ValidationError, match="length"):
        fit_predict(backend, x, np.zeros(2, dtype=np.int64), x)
    with pytest.raises(ValidationError, match="width"):
        fit_predict(backend, x, y, np.zeros((2, 5)))
    bad = x.copy()
    bad[0, 0] = np.inf
    with pytest.raises(ValidationError, match="finite"):
        fit_predict(backend, bad, y, x)


def test_fit_predict_enforces_capabilities():
    class Tiny(ClassifierBackend):
        capabilities = Capabilities(max_samples=2, max_features=2, max_classes=2)

        def _fit_predict(self, tx, ty, qx, seed):
            classes = np.unique(ty)
            return classes, np.full((qx.shape[0], classes.size), 1.0 / classes.size)

    t = Tiny()
    ok = fit_predict(t, np.zeros((2, 2)), np.array([0, 1]), np.zeros((1, 2)))
    assert ok.proba.shape == (1, 2)
    with pytest.raises(ValidationError, match="training rows"):
        fit_predict(t, np.zeros((3, 2)), np.array([0, 1, 1]), np.zeros((1, 2)))
    with pytest.raises(ValidationError, match="features"):
        fit_predict(t, np.zeros((2, 3)), np.array([0, 1]), np.zeros((1, 3)))

    class Tiny2(Tiny):
        # three classes need three rows, so relax samples for the class check
        capabilities = Capabilities(max_samples=10, max_features=10, max_classes=2)

    with pytest.raises(ValidationError, match="classes"):
        fit_predict(Tiny2(), np.zeros((3, 2)), np.array([0, 1, 2]), np.zeros((1, 2)))


def test_fit_predict_single_class_short_circuits(caplog):
    import logging

    with caplog.at_level(logging.WARNING, logger="gtab.classify"):
        res = fit_predict(
            _RaisingBackend(),
            np.array([[1.0], [2.0]]),
            np.array([7, 7]),
            np.array([[0.0], [1.0], [2.0]]),
        )
    assert "single class" in caplog.text
    assert np.array_equal(res.classes, [7])
    assert np.array_equal(res.proba, np.ones((3, 1)))


def test_fit_predict_rejects_wrong_class_set():
    backend = _ShapedBackend(lambda tx, ty, qx, s: (np.array([0, 2]), np.full((qx.shape[0], 2), 0.5)))
    with pytest.raises(ComputeError, match="classes"):
        fit_predict(backend, np.zeros((2, 1)), np.array([0, 1]), np.zeros((1, 1)))


def test_fit_predict_rejects_bad_proba():
    def wrong_shape(tx, ty, qx, s):
        return np.array([0, 1]), np.full((qx.shape[0] + 1, 2), 0.5)

    def negative(tx, ty, qx, s):
        p = np.full((qx.shape[0], 2), 0.5)
        p[0, 0] = -0.2
        p[0, 1] = 1.2
        return np.array([0, 1]), p

    def bad_sum(tx, ty, qx, s):
        return np.array([0, 1]), np.full((qx.shape[0], 2), 0.4)

    train = (np.zeros((2, 1)), np.array([0, 1]), np.zeros((3, 1)))
    with pytest.raises(ComputeError, match="shape"):
        fit_predict(_ShapedBackend(wrong_shape), *train)
    with pytest.raises(ComputeError, match="non-negative"):
        fit_predict(_ShapedBackend(negative), *train)
    with pytest.raises(ComputeError, match="sum to 1"):
        fit_predict(_ShapedBackend(bad_sum), *train)


# ---------------------------------------------------------------------------
# backend spec parsing


def test_backend_from_spec_builtin_variants():
    assert backend_from_spec("builtin:logreg").l2 == 0.01
    lr = backend_from_spec("builtin:logreg?l2=0.5&max_iter=50&tol=0.001&seed=2")
    assert lr.l2 == 0.5 and lr.max_iter == 50 and lr.tol == 0.001
    assert backend_from_spec("builtin:knn?k=3").k == 3


def test_backend_from_spec_errors():
    for bad in (
        "logreg",                 # missing kind
        "builtin:forest",         # unknown builtin
        "builtin:knn?k=abc",      # uncastable value
        "builtin:knn?depth=3",    # unknown parameter
        "magic:thing",            # unknown kind
        "bridge:",                # empty command
        "bridge:   ",
    ):
        with pytest.raises(ValidationError):
            backend_from_spec(bad)


# ---------------------------------------------------------------------------
# bridge client


def test_bridge_handshake_and_round_trip():
    with BridgeBackend(bridge_cmd("--mode", "uniform")) as backend:
        assert backend.name == "fake-bridge[uniform]"
        assert backend.version == "1.0"
        assert backend.capabilities.max_classes == 10
        res = fit_predict(
            backend,
            np.array([[0.0], [1.0], [2.0]]),
            np.array([0, 1, 1]),
            np.array([[0.5], [1.5]]),
        )
        assert np.array_equal(res.classes, [0, 1])
        assert np.array_equal(res.proba, np.full((2, 2), 0.5))


def test_bridge_capabilities_respected():
    with BridgeBackend(bridge_cmd("--mode", "uniform", "--max-classes", "3")) as backend:
        assert backend.capabilities.max_classes == 3
        x = np.arange(8, dtype=np.float64).reshape(-1, 1)
        y = np.array([0, 1, 2, 3] * 2)
        with pytest.raises(ValidationError, match="classes"):
            fit_predict(backend, x, y, x)


def test_bridge_centroid_mode_is_accurate():
    x, y = two_gaussians(30, 3, distance=6.0, sigma=0.2, seed=5)
    qx, qy = two_gaussians(40, 3, distance=6.0, sigma=0.2, seed=6)
    with BridgeBackend(bridge_cmd("--mode", "centroid")) as backend:
        res = fit_predict(backend, x, y, qx)
    pred = res.classes[np.argmax(res.proba, 1)]
    assert np.mean(pred == qy) == 1.0


def test_bridge_command_string_is_shell_split():
    with BridgeBackend(f"{sys.executable} {FAKE_BRIDGE} --mode uniform") as backend:
        assert backend.name == "fake-bridge[uniform]"


def test_bridge_error_frame_raises_compute_error():
    with BridgeBackend(bridge_cmd("--mode", "error")) as backend:
        with pytest.raises(ComputeError, match="synthetic failure"):
            fit_predict(backend, np.zeros((2, 1)), np.array([0, 1]), np.zeros((1, 1)))


def test_bridge_wrong_id_raises_transport_error():
    with BridgeBackend(bridge_cmd("--mode", "badid")) as backend:
        with pytest.raises(TransportError, match="id"):
            fit_predict(backend, np.zeros((2, 1)), np.array([0, 1]), np.zeros((1, 1)))


def test_bridge_non_json_line_raises_transport_error():
    with BridgeBackend(bridge_cmd("--mode", "malformed")) as backend:
        with pytest.raises(TransportError, match="non-JSON"):
            fit_predict(backend, np.zeros((2, 1)), np.array([0, 1]), np.zeros((1, 1)))


def test_bridge_death_mid_request():
    backend = BridgeBackend(bridge_cmd("--mode", "die"))
    with pytest.raises(TransportError, match="closed stdout"):
        fit_predict(backend, np.zeros((2, 1)), np.array([0, 1]), np.zeros((1, 1)))
    with pytest.raises(TransportError, match="status"):
        backend.close()


def test_bridge_timeout_parameter():
    backend = BridgeBackend(bridge_cmd("--mode", "silent"), timeout=0.8)
    try:
        with pytest.raises(TransportError, match="did not answer"):
            fit_predict(backend, np.zeros((2, 1)), np.array([0, 1]), np.zeros((1, 1)))
    finally:
        backend.close()


def test_bridge_timeout_env_default(monkeypatch):
    monkeypatch.setenv(BRIDGE_TIMEOUT_ENV, "1")
    backend = BridgeBackend(bridge_cmd("--mode", "silent"))
    assert backend._timeout == 1.0
    try:
        with pytest.raises(TransportError, match="within 1s"):
            fit_predict(backend, np.zeros((2, 1)), np.array([0, 1]), np.zeros((1, 1)))
    finally:
        backend.close()


def test_bridge_crash_before_hello():
    with pytest.raises(TransportError):
        BridgeBackend(bridge_cmd("--mode", "crash-hello"))


def test_bridge_unlaunchable_command():
    with pytest.raises(TransportError, match="launch"):
        BridgeBackend(["/definitely/not/a/real/binary"])


# ---------------------------------------------------------------------------
# evaluation harness


class _SeededRandomBackend(ClassifierBackend):
    name = "random-double"

    def _fit_predict(self, train_x, train_y, query_x, seed):
        rng = np.random.default_rng(seed)
        classes = np.unique(train_y)
        p = rng.random((query_x.shape[0], classes.size))
        return classes, p / p.sum(axis=1, keepdims=True)


def _one_hot_problem(n_per_class=30, n_classes=5, seed=0):
    """Features are the labels one-hot encoded, so 1-NN is a perfect oracle."""
    n = n_per_class * n_classes
    labels = np.repeat(np.arange(n_classes, dtype=np.int64), n_per_class)
    rng = np.random.default_rng(seed)
    labels = labels[rng.permutation(n)]
    data = np.eye(n_classes)[labels]
    fm = FeatureMatrix(data, (("x", n_classes),), "fp-onehot")
    return labels, fm, even_split(n, seed=seed)


def test_evaluate_report_structure_and_determinism():
    labels, fm, split = _one_hot_problem()
    backend = builtin_knn(k=1)
    r1 = evaluate(labels, fm, split, backend, seeds=[0, 1], dataset="onehot")
    r2 = evaluate(labels, fm, split, backend, seeds=[0, 1], dataset="onehot")
    assert r1 == r2
    assert r1["dataset"] == "onehot"
    assert r1["recipe_fingerprint"] == "fp-onehot"
    assert r1["backend"]["name"] == "builtin:knn?k=1"
    assert r1["seeds"] == [0, 1]
    assert set(r1) >= {
        "val_acc_mean", "val_acc_std", "test_acc_mean", "test_acc_std",
        "val_accs", "test_accs", "classes", "per_class", "confusion",
        "predictions", "prediction_digests",
    }
    assert len(r1["prediction_digests"]) == 2


def test_evaluate_perfect_backend_scores_one():
    labels, fm, split = _one_hot_problem()
    report = evaluate(labels, fm, split, builtin_knn(k=1), seeds=[0, 1, 2])
    assert report["val_acc_mean"] == 1.0 and report["val_acc_std"] == 0.0
    assert report["test_acc_mean"] == 1.0 and report["test_acc_std"] == 0.0
    assert all(v == 1.0 for v in report["per_class"].values())
    confusion = np.array(report["confusion"])
    assert np.array_equal(confusion, np.diag(confusion.diagonal()))
    assert confusion.sum() == split.test.size * 3


def test_evaluate_random_backend_near_chance():
    labels, fm, split = _one_hot_problem(n_per_class=100, n_classes=5, seed=1)
    report = evaluate(labels, fm, split, _SeededRandomBackend(), seeds=[0, 1, 2, 3])
    n_test = split.test.size
    sigma = np.sqrt(0.2 * 0.8 / n_test)
    assert abs(report["test_acc_mean"] - 0.2) <= 3 * sigma


def test_evaluate_empty_val_reports_none():
    labels, fm, _ = _one_hot_problem()
    from gtab.graph import SplitSpec

    n = labels.shape[0]
    split = SplitSpec(
        train=np.arange(0, n - 20, dtype=np.int64),
        val=np.array([], dtype=np.int64),
        test=np.arange(n - 20, n, dtype=np.int64),
    )
    report = evaluate(labels, fm, split, builtin_knn(k=1), seeds=[0])
    assert report["val_acc_mean"] is None and report["val_acc_std"] is None
    assert report["test_acc_mean"] == 1.0


def test_evaluate_rejects_unlabeled_split_nodes():
    labels, fm, split = _one_hot_problem()
    labels = labels.copy()
    labels[split.test[0]] = -1
    with pytest.raises(ValidationError, match="unlabeled"):
        evaluate(labels, fm, split, builtin_knn(k=1), seeds=[0])


def test_evaluate_rejects_inconsistent_sizes():
    labels, fm, split = _one_hot_problem()
    with pytest.raises(ValidationError, match="disagree"):
        evaluate(labels[:-1], fm, split, builtin_knn(k=1), seeds=[0])
    with pytest.raises(ValidationError):
        evaluate(labels, fm, split, builtin_knn(k=1), seeds=[])


def test_evaluate_prediction_digests_track_probabilities():
    labels, fm, split = _one_hot_problem()
    r_knn = evaluate(labels, fm, split, builtin_knn(k=1), seeds=[0])
    r_lr = evaluate(labels, fm, split, builtin_logreg(), seeds=[0])
    assert r_knn["prediction_digests"] != r_lr["prediction_digests"]
