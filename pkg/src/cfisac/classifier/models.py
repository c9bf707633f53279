"""Source classifiers: nearest centroid, a one-hidden-layer network, and a
synthetic classifier with a prescribed accuracy for parameter sweeps."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

NEAREST_CENTROID = "nearest-centroid"
FEED_FORWARD = "feed-forward"


@dataclass(frozen=True, eq=False)
class ClassifierModel:
    kind: str
    labels: np.ndarray
    mean: np.ndarray             # feature standardization
    scale: np.ndarray
    params: dict = field(default_factory=dict)
    hyperparams: dict = field(default_factory=dict)

    @property
    def n_features(self):
        return len(self.mean)

    def _standardize(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return (X - self.mean) / self.scale

    def scores(self, X):
        Z = self._standardize(X)
        if self.kind == NEAREST_CENTROID:
            W = self.params["whitener"]
            diff = (Z @ W)[:, None, :] - (self.params["centroids"] @ W)[None, :, :]
            return -np.einsum("ijk,ijk->ij", diff, diff)
        hidden = np.tanh(Z @ self.params["W1"] + self.params["b1"])
        return hidden @ self.params["W2"] + self.params["b2"]

    def predict(self, X):
        return self.labels[np.argmax(self.scores(X), axis=1)]

    def to_json(self):
        return json.dumps({
            "version": 1,
            "kind": self.kind,
            "labels": self.labels.tolist(),
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "params": {k: np.asarray(v).tolist() for k, v in self.params.items()},
            "hyperparams": self.hyperparams,
        }, indent=1)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        if doc.get("version") != 1:
            raise ValueError(f"unsupported model version {doc.get('version')}")
        return cls(doc["kind"], np.asarray(doc["labels"], dtype=np.int64), np.asarray(doc["mean"]),
                   np.asarray(doc["scale"]), {k: np.asarray(v, dtype=float) for k, v in doc["params"].items()},
                   doc["hyperparams"])


FFN_DEFAULTS = {
    "width": 32,
    "epochs": 200,
    "learning_rate": 0.05,
    "momentum": 0.9,
    "batch_size": 256,
    "patience": 20,
    "min_improvement": 1e-4,
}


def train(dataset, kind=NEAREST_CENTROID, hyperparams=None, seed=0) -> ClassifierModel:
    """Fit a classifier on the training split of ``dataset``."""
    X, y = dataset.train()
    return fit(X, y, kind, hyperparams, seed)


def fit(X, y, kind=NEAREST_CENTROID, hyperparams=None, seed=0) -> ClassifierModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if len(X) == 0:
        raise ValueError("empty training set")
    labels = np.unique(y)
    if len(labels) < 2:
        raise ValueError("training data needs at least two labels")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    Z = (X - mean) / scale
    target = np.searchsorted(labels, y)
    if kind == NEAREST_CENTROID:
        params = _fit_centroids(Z, target, len(labels))
        hp = {}
    elif kind == FEED_FORWARD:
        hp = {**FFN_DEFAULTS, **(hyperparams or {})}
        params = _fit_ffn(Z, target, len(labels), hp, seed)
    else:
        raise ValueError(f"unknown classifier kind {kind!r}")
    return ClassifierModel(kind, labels, mean, scale, params, hp)


def _fit_centroids(Z, target, k):
    """Class means plus a whitener from the pooled within-class covariance,
    so distances are Mahalanobis distances under a shared covariance."""
    centroids = np.stack([Z[target == c].mean(axis=0) for c in range(k)])
    resid = Z - centroids[target]
    cov = resid.T @ resid / max(len(Z) - k, 1)
    vals, vecs = np.linalg.eigh(cov)
    vals = np.maximum(vals, 1e-12 * max(vals.max(), 1e-300))
    return {"centroids": centroids, "whitener": vecs / np.sqrt(vals)}


def _fit_ffn(Z, target, k, hp, seed):
    """Softmax network with one tanh hidden layer, trained by mini-batch
    gradient descent with momentum; stops early when the epoch loss stalls."""
    rng = np.random.default_rng(seed)
    n, d = Z.shape
    width = int(hp["width"])
    W1 = rng.normal(0, 1 / np.sqrt(d), (d, width))
    b1 = np.zeros(width)
    W2 = rng.normal(0, 1 / np.sqrt(width), (width, k))
    b2 = np.zeros(k)
    vel = [np.zeros_like(p) for p in (W1, b1, W2, b2)]
    onehot = np.eye(k)[target]
    best, stall = np.inf, 0
    lr, mom, bs = float(hp["learning_rate"]), float(hp["momentum"]), int(hp["batch_size"])
    for _ in range(int(hp["epochs"])):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            h = np.tanh(Z[idx] @ W1 + b1)
            logits = h @ W2 + b2
            logits -= logits.max(axis=1, keepdims=True)
            prob = np.exp(logits)
            prob /= prob.sum(axis=1, keepdims=True)
            total += -np.sum(np.log(np.maximum(prob[np.arange(len(idx)), target[idx]], 1e-300)))
            g_logits = (prob - onehot[idx]) / len(idx)
            g_h = (g_logits @ W2.T) * (1 - h * h)
            grads = (Z[idx].T @ g_h, g_h.sum(axis=0), h.T @ g_logits, g_logits.sum(axis=0))
            for p, v, g in zip((W1, b1, W2, b2), vel, grads):
                v *= mom
                v -= lr * g
                p += v
        loss = total / n
        if loss < best - float(hp["min_improvement"]):
            best, stall = loss, 0
        else:
            stall += 1
            if stall >= int(hp["patience"]):
                break
    return {"W1": W1, "b1": b1, "W2": W2, "b2": b2}


def predict(model, sample):
    """Predicted source id for one sample (or a feature vector)."""
    x = getattr(sample, "features", sample)
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("predict takes a single feature vector")
    return int(model.predict(x[None, :])[0])


@dataclass(frozen=True)
class SyntheticClassifier:
    """Correct with probability ``accuracy``, otherwise uniform over the other labels."""
    accuracy: float
    labels: tuple
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.accuracy <= 1:
            raise ValueError("accuracy must lie in [0, 1]")
        if len(self.labels) < 2 and self.accuracy < 1:
            raise ValueError("an imperfect classifier needs at least two labels")
        object.__setattr__(self, "labels", tuple(int(v) for v in self.labels))

    def draws(self, n, rng=None):
        """Uniform draws driving :meth:`decide`; shape ``(n, 2)``."""
        rng = rng if rng is not None else np.random.default_rng(self.seed)
        return rng.random((n, 2))

    def decide(self, true_labels, draws):
        """Labels from precomputed uniforms, so several accuracies can share draws.

        Column 0 decides correctness (``< accuracy``), column 1 picks the wrong
        label. With shared draws, a path classified correctly at one accuracy
        is also correct at any higher accuracy.
        """
        true_labels = np.asarray(true_labels, dtype=np.int64)
        draws = np.asarray(draws, dtype=float).reshape(len(true_labels), 2)
        labels = np.asarray(self.labels)
        out = true_labels.copy()
        wrong = draws[:, 0] >= self.accuracy
        if np.any(wrong):
            pos = np.searchsorted(labels, true_labels[wrong])
            k = np.minimum((draws[wrong, 1] * (len(labels) - 1)).astype(np.int64), len(labels) - 2)
            out[wrong] = labels[np.where(k >= pos, k + 1, k)]
        return out

    def predict_many(self, true_labels, rng=None):
        return self.decide(true_labels, self.draws(len(true_labels), rng))

    def predict(self, true_label, rng=None):
        return int(self.predict_many([true_label], rng)[0])


def _sorted_labels(labels):
    labels = tuple(sorted(int(v) for v in labels))
    return labels


def make_synthetic(accuracy, labels, seed=0):
    return SyntheticClassifier(accuracy, _sorted_labels(labels), seed)


@dataclass(frozen=True, eq=False)
class AccuracyReport:
    accuracy: float
    labels: tuple
    confusion: np.ndarray        # rows: true label, columns: predicted label
    n_test: int

    def to_dict(self):
        return {
            "version": 1,
            "accuracy": self.accuracy,
            "n_test": self.n_test,
            "labels": list(self.labels),
            "confusion": self.confusion.tolist(),
            "per_label_accuracy": {str(lab): float(self.confusion[i, i] / max(self.confusion[i].sum(), 1))
                                   for i, lab in enumerate(self.labels)},
        }

    def table(self):
        width = max(6, max(len(str(v)) for v in self.labels) + 1)
        head = "true\\pred".ljust(10) + "".join(str(v).rjust(width) for v in self.labels)
        lines = [head]
        for i, lab in enumerate(self.labels):
            lines.append(str(lab).ljust(10) + "".join(str(int(c)).rjust(width) for c in self.confusion[i]))
        lines.append(f"accuracy {self.accuracy:.4f} over {self.n_test} test samples")
        return "\n".join(lines)


def confusion_report(true_labels, predicted, labels=None):
    true_labels = np.asarray(true_labels)
    predicted = np.asarray(predicted)
    if len(true_labels) == 0:
        raise ValueError("no test samples to evaluate")
    labels = _sorted_labels(labels if labels is not None else np.union1d(true_labels, predicted))
    index = {lab: i for i, lab in enumerate(labels)}
    conf = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(true_labels, predicted):
        conf[index[int(t)], index[int(p)]] += 1
    return AccuracyReport(float(np.mean(true_labels == predicted)), labels, conf, len(true_labels))


def evaluate(model, dataset, rng=None) -> AccuracyReport:
    """Accuracy and confusion matrix over the test split.

    ``model`` is a trained :class:`ClassifierModel` or a
    :class:`SyntheticClassifier` (which needs the true labels to decide).
    """
    X, y = dataset.test()
    if len(y) == 0:
        raise ValueError("empty test split")
    if isinstance(model, SyntheticClassifier):
        pred = model.predict_many(y, rng)
        labels = model.labels
    else:
        pred = model.predict(X)
        labels = model.labels
    return confusion_report(y, pred, labels)
