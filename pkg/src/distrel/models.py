"""Distortion-classifiers: map a distortion level to a reliable/non-reliable label.

Three families — logistic regression (full-batch gradient descent on weighted
cross-entropy), a CART decision tree (Gini impurity with weighted counts),
and k-NN (weights ignored). All operate on features normalized to the unit
cube; each trained model snapshots the normalization bounds it was fitted
with. Tie conventions are fixed: logistic probability 0.5 maps to label 1,
k-NN vote ties map to label 0, tree leaf ties map to label 0.
"""

import json
import warnings

import numpy as np

from distrel import _kernels
from distrel.rebalance import RebalancedSet
from distrel.space import SearchSpace

KINDS = ("logistic", "tree", "knn")
MODEL_FORMAT_VERSION = 1

LOGISTIC_EPOCHS = 500
LOGISTIC_LR = 0.1
TREE_MAX_DEPTH = 8
TREE_MIN_LEAF = 5
KNN_K = 5


def _sigmoid(s):
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    es = np.exp(s[~pos])
    out[~pos] = es / (1.0 + es)
    return out


def logistic_loss_and_grad(w, x, y, sample_weights):
    """Weighted mean binary cross-entropy and its gradient in w.

    ``x`` already carries the intercept column. Uses logaddexp for the loss so
    large scores cannot overflow.
    """
    s = x @ w
    total = sample_weights.sum()
    loss = float(np.sum(sample_weights * (np.logaddexp(0.0, s) - y * s)) / total)
    grad = x.T @ (sample_weights * (_sigmoid(s) - y)) / total
    return loss, grad


class LogisticModel:
    kind = "logistic"

    def __init__(self, weights, bounds_lower, bounds_upper, hyper, final_grad_norm):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bounds_lower = np.asarray(bounds_lower, dtype=np.float64)
        self.bounds_upper = np.asarray(bounds_upper, dtype=np.float64)
        self.hyper = dict(hyper)
        self.final_grad_norm = float(final_grad_norm)

    def predict_proba(self, levels) -> np.ndarray:
        x = _design_matrix(levels, self.bounds_lower, self.bounds_upper)
        return _sigmoid(x @ self.weights)

    def predict(self, levels) -> np.ndarray:
        return (self.predict_proba(levels) >= 0.5).astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": self.kind,
            "hyper": self.hyper,
            "params": {
                "weights": self.weights.tolist(),
                "final_grad_norm": self.final_grad_norm,
            },
            "bounds": {
                "lower": self.bounds_lower.tolist(),
                "upper": self.bounds_upper.tolist(),
            },
        }


class TreeModel:
    kind = "tree"

    def __init__(self, root, bounds_lower, bounds_upper, hyper):
        self.root = root
        self.bounds_lower = np.asarray(bounds_lower, dtype=np.float64)
        self.bounds_upper = np.asarray(bounds_upper, dtype=np.float64)
        self.hyper = dict(hyper)

    def predict(self, levels) -> np.ndarray:
        z = _normalize(levels, self.bounds_lower, self.bounds_upper)
        out = np.empty(z.shape[0], dtype=np.int64)
        for i in range(z.shape[0]):
            node = self.root
            while "label" not in node:
                if z[i, node["feature"]] <= node["threshold"]:
                    node = node["left"]
                else:
                    node = node["right"]
            out[i] = node["label"]
        return out

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": self.kind,
            "hyper": self.hyper,
            "params": {"root": self.root},
            "bounds": {
                "lower": self.bounds_lower.tolist(),
                "upper": self.bounds_upper.tolist(),
            },
        }


class KnnModel:
    kind = "knn"

    def __init__(self, points, labels, bounds_lower, bounds_upper, hyper):
        self.points = np.asarray(points, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.bounds_lower = np.asarray(bounds_lower, dtype=np.float64)
        self.bounds_upper = np.asarray(bounds_upper, dtype=np.float64)
        self.hyper = dict(hyper)

    def predict(self, levels) -> np.ndarray:
        z = _normalize(levels, self.bounds_lower, self.bounds_upper)
        k = min(int(self.hyper["k"]), self.points.shape[0])
        d = _kernels.pairwise_sq_dists(
            np.ascontiguousarray(z), np.ascontiguousarray(self.points)
        )
        order = np.argsort(d, axis=1, kind="stable")[:, :k]
        votes = self.labels[order].sum(axis=1)
        # strict majority of ones; ties (even k with votes == k/2) go to 0
        return (2 * votes > k).astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": self.kind,
            "hyper": self.hyper,
            "params": {
                "points": self.points.tolist(),
                "labels": self.labels.tolist(),
            },
            "bounds": {
                "lower": self.bounds_lower.tolist(),
                "upper": self.bounds_upper.tolist(),
            },
        }


def _normalize(levels, lower, upper) -> np.ndarray:
    levels = np.atleast_2d(np.asarray(levels, dtype=np.float64))
    if levels.shape[1] != lower.shape[0]:
        raise ValueError(
            f"level dimension {levels.shape[1]} != model dimension {lower.shape[0]}"
        )
    return (levels - lower) / (upper - lower)


def _design_matrix(levels, lower, upper) -> np.ndarray:
    z = _normalize(levels, lower, upper)
    return np.hstack([np.ones((z.shape[0], 1)), z])


def train(kind: str, data: RebalancedSet, space: SearchSpace, hyper: dict = None, seed: int = 0):
    """Train one distortion-classifier kind on a rebalanced set."""
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}; known: {KINDS}")
    counts = data.class_counts()
    if min(counts) == 0:
        raise ValueError(f"training data has a single class (counts {counts})")
    hyper = dict(hyper or {})
    if kind == "logistic":
        return _train_logistic(data, space, hyper)
    if kind == "tree":
        return _train_tree(data, space, hyper)
    return _train_knn(data, space, hyper)


def predict_label(model, level) -> int:
    """Deterministic 0/1 prediction at a single level."""
    return int(model.predict(np.asarray(level, dtype=np.float64)[None, :])[0])


# ---------------------------------------------------------------------------
# Logistic regression
# ---------------------------------------------------------------------------

def _train_logistic(data: RebalancedSet, space: SearchSpace, hyper: dict):
    epochs = int(hyper.pop("epochs", LOGISTIC_EPOCHS))
    lr = float(hyper.pop("learning_rate", LOGISTIC_LR))
    if hyper:
        raise ValueError(f"unknown logistic hyperparameters {sorted(hyper)}")
    x = _design_matrix(data.levels, space.lowers, space.uppers)
    y = data.labels.astype(np.float64)
    sw = data.weights

    weights, grad_norm, ok = _descend(x, y, sw, epochs, lr)
    if not ok:
        # one retry at half the rate before giving up on monotone descent
        weights, grad_norm, ok = _descend(x, y, sw, epochs, lr / 2.0)
        lr = lr / 2.0
        if not ok:
            raise RuntimeError("logistic loss increased even after halving the rate")
    return LogisticModel(
        weights,
        space.lowers,
        space.uppers,
        {"epochs": epochs, "learning_rate": lr},
        grad_norm,
    )


def _descend(x, y, sw, epochs, lr):
    w = np.zeros(x.shape[1])
    prev_loss, grad = logistic_loss_and_grad(w, x, y, sw)
    for _ in range(epochs):
        w = w - lr * grad
        loss, grad = logistic_loss_and_grad(w, x, y, sw)
        if loss > prev_loss + 1e-9:
            return w, float(np.linalg.norm(grad)), False
        prev_loss = loss
    return w, float(np.linalg.norm(grad)), True


# ---------------------------------------------------------------------------
# CART decision tree
# ---------------------------------------------------------------------------

def _train_tree(data: RebalancedSet, space: SearchSpace, hyper: dict):
    max_depth = int(hyper.pop("max_depth", TREE_MAX_DEPTH))
    min_leaf = int(hyper.pop("min_leaf", TREE_MIN_LEAF))
    if hyper:
        raise ValueError(f"unknown tree hyperparameters {sorted(hyper)}")
    z = _normalize(data.levels, space.lowers, space.uppers)
    root = _build_node(z, data.labels, data.weights, 0, max_depth, min_leaf)
    return TreeModel(
        root, space.lowers, space.uppers,
        {"max_depth": max_depth, "min_leaf": min_leaf},
    )


def _leaf(labels, weights) -> dict:
    w1 = float(weights[labels == 1].sum())
    w0 = float(weights[labels == 0].sum())
    return {"label": 1 if w1 > w0 else 0}


def _gini(w0, w1) -> float:
    total = w0 + w1
    if total <= 0.0:
        return 0.0
    p0 = w0 / total
    p1 = w1 / total
    return 1.0 - p0 * p0 - p1 * p1


def _build_node(z, labels, weights, depth, max_depth, min_leaf) -> dict:
    n = z.shape[0]
    if depth >= max_depth or n < 2 * min_leaf or len(np.unique(labels)) == 1:
        return _leaf(labels, weights)

    total_w0 = float(weights[labels == 0].sum())
    total_w1 = float(weights[labels == 1].sum())
    parent = _gini(total_w0, total_w1)
    best_gain = 0.0
    best = None
    for j in range(z.shape[1]):
        order = np.argsort(z[:, j], kind="stable")
        vals = z[order, j]
        w = weights[order]
        lab = labels[order]
        cum_w1 = np.cumsum(w * (lab == 1))
        cum_w = np.cumsum(w)
        # candidate split after position i: left = rows [0..i]
        for i in range(min_leaf - 1, n - min_leaf):
            if vals[i] == vals[i + 1]:
                continue
            lw = cum_w[i]
            lw1 = cum_w1[i]
            rw = cum_w[-1] - lw
            rw1 = cum_w1[-1] - lw1
            frac_l = lw / cum_w[-1]
            child = frac_l * _gini(lw - lw1, lw1) + (1 - frac_l) * _gini(
                rw - rw1, rw1
            )
            gain = parent - child
            if gain > best_gain + 1e-15:
                best_gain = gain
                best = (j, 0.5 * (vals[i] + vals[i + 1]))
    if best is None:
        return _leaf(labels, weights)

    j, threshold = best
    mask = z[:, j] <= threshold
    return {
        "feature": int(j),
        "threshold": float(threshold),
        "left": _build_node(
            z[mask], labels[mask], weights[mask], depth + 1, max_depth, min_leaf
        ),
        "right": _build_node(
            z[~mask], labels[~mask], weights[~mask], depth + 1, max_depth, min_leaf
        ),
    }


# ---------------------------------------------------------------------------
# k-NN
# ---------------------------------------------------------------------------

def _train_knn(data: RebalancedSet, space: SearchSpace, hyper: dict):
    k = int(hyper.pop("k", KNN_K))
    if hyper:
        raise ValueError(f"unknown knn hyperparameters {sorted(hyper)}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not np.allclose(data.weights, 1.0):
        warnings.warn(
            "k-NN ignores sample weights; use logistic or tree for reweighting",
            stacklevel=3,
        )
    z = _normalize(data.levels, space.lowers, space.uppers)
    return KnnModel(z, data.labels, space.lowers, space.uppers, {"k": k})


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def model_from_dict(doc: dict):
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version!r}")
    kind = doc["kind"]
    lower = np.asarray(doc["bounds"]["lower"], dtype=np.float64)
    upper = np.asarray(doc["bounds"]["upper"], dtype=np.float64)
    if kind == "logistic":
        return LogisticModel(
            doc["params"]["weights"], lower, upper, doc["hyper"],
            doc["params"]["final_grad_norm"],
        )
    if kind == "tree":
        return TreeModel(doc["params"]["root"], lower, upper, doc["hyper"])
    if kind == "knn":
        return KnnModel(
            doc["params"]["points"], doc["params"]["labels"], lower, upper,
            doc["hyper"],
        )
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(path, model) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, indent=2, sort_keys=True)


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))
