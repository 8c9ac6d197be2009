"""Gradient-boosted decision trees over histogram features, from scratch.

Second-order boosting in the XGBoost style: per round, multiclass fits one
tree per class on softmax gradients/hessians, regression on squared-error
gradients. Split finding is exact greedy over sorted feature values (the
kernel lives behind `biomech.backend`), with deterministic tie-breaking:
lowest feature index, then lowest threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import backend
from .errors import ConfigError, ContractViolation

_LAMBDA = 1.0  # leaf L2 regularization, fixed (not searched)


@dataclass(frozen=True)
class GBDTConfig:
    rounds: int = 200
    max_depth: int = 3
    shrinkage: float = 0.1
    min_samples_leaf: int = 5
    subsample_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.rounds < 0 or self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ConfigError("rounds, max_depth and min_samples_leaf must be positive")
        if not 0.0 < self.shrinkage <= 1.0:
            raise ConfigError("shrinkage must lie in (0, 1]")
        if not 0.0 < self.subsample_fraction <= 1.0:
            raise ConfigError("subsample_fraction must lie in (0, 1]")


@dataclass
class Tree:
    """Flat-array binary tree; leaves have feature == -1."""

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)

    def add_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Leaf values for each row of x, vectorized level walk."""
        feature = np.asarray(self.feature, dtype=np.int64)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left, dtype=np.int64)
        right = np.asarray(self.right, dtype=np.int64)
        idx = np.zeros(x.shape[0], dtype=np.int64)
        while True:
            f = feature[idx]
            internal = f >= 0
            if not internal.any():
                break
            go_left = np.zeros(x.shape[0], dtype=bool)
            go_left[internal] = x[np.flatnonzero(internal), f[internal]] <= threshold[idx[internal]]
            nxt = np.where(go_left, left[idx], right[idx])
            idx = np.where(internal, nxt, idx)
        return np.asarray(self.value)[idx]

    def max_depth_used(self) -> int:
        def depth(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(depth(self.left[i]), depth(self.right[i]))
        return depth(0)


def _build_tree(values_t: np.ndarray, order: np.ndarray, x: np.ndarray,
                grad: np.ndarray, hess: np.ndarray, root_mask: np.ndarray,
                config: GBDTConfig) -> Tree:
    tree = Tree()

    def grow(mask: np.ndarray, depth: int) -> int:
        node = tree.add_node()
        g_sum = float(grad[mask].sum())
        h_sum = float(hess[mask].sum())
        if depth < config.max_depth:
            f, thr, gain = backend.best_split(values_t, order, mask.astype(np.uint8),
                                              grad, hess, config.min_samples_leaf, _LAMBDA)
            if f >= 0 and gain > 0.0:
                left_mask = mask & (x[:, f] <= thr)
                right_mask = mask & ~ (x[:, f] <= thr)
                tree.feature[node] = int(f)
                tree.threshold[node] = float(thr)
                tree.left[node] = grow(left_mask, depth + 1)
                tree.right[node] = grow(right_mask, depth + 1)
                return node
        tree.value[node] = -g_sum / (h_sum + _LAMBDA)
        return node

    grow(root_mask, 0)
    return tree


@dataclass
class TreeEnsemble:
    objective: str  # "multiclass" | "regression"
    vocabulary: tuple[str, ...] | None
    base_score: np.ndarray  # (C,) class prior logits, or (1,) label mean
    shrinkage: float
    trees: list[list[Tree]]  # rounds x classes (regression: 1 "class")
    n_features: int

    @property
    def rounds(self) -> int:
        return len(self.trees)

    def decision(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out = np.tile(self.base_score, (x.shape[0], 1))
        for round_trees in self.trees:
            for c, tree in enumerate(round_trees):
                out[:, c] += self.shrinkage * tree.predict(x)
        return out

    def predict_value(self, x: np.ndarray) -> np.ndarray:
        if self.objective != "regression":
            raise ContractViolation("predict_value is for regression ensembles")
        return self.decision(x)[:, 0]

    def predict_label(self, x: np.ndarray) -> list[str]:
        if self.objective != "multiclass":
            raise ContractViolation("predict_label is for classification ensembles")
        idx = np.argmax(self.decision(x), axis=1)
        return [self.vocabulary[i] for i in idx]


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def multiclass_log_loss(ensemble: TreeEnsemble, x: np.ndarray, labels: list[str]) -> float:
    p = _softmax(ensemble.decision(x))
    y = np.array([ensemble.vocabulary.index(l) for l in labels])
    return float(-np.mean(np.log(np.maximum(p[np.arange(len(y)), y], 1e-15))))


def _presort(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    values_t = np.ascontiguousarray(x.T)
    order = np.ascontiguousarray(np.argsort(x, axis=0, kind="stable").T.astype(np.int64))
    return values_t, order


def fit_gbdt(features, labels, config: GBDTConfig | None = None,
             objective: str = "multiclass",
             vocabulary: tuple[str, ...] | None = None) -> TreeEnsemble:
    """Fit an ensemble. Deterministic under config.seed.

    Multiclass: one tree per class per round on softmax gradients, base score
    is the (add-one smoothed) class prior logits. Regression: squared-error
    gradients, base score is the label mean.
    """
    config = config or GBDTConfig()
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ContractViolation("features must be a 2-D matrix")
    n = x.shape[0]
    if n != len(labels):
        raise ContractViolation("features and labels must have equal length")
    if n < 2:
        raise ContractViolation("need at least 2 samples to fit")
    if objective not in ("multiclass", "regression"):
        raise ConfigError(f"unknown objective {objective!r}")

    values_t, order = _presort(x)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x6B]))

    if objective == "regression":
        y = np.asarray(labels, dtype=np.float64)
        base = np.array([y.mean()])
        ensemble = TreeEnsemble("regression", None, base, config.shrinkage, [], x.shape[1])
        margin = np.full(n, base[0])
        for _ in range(config.rounds):
            root = _subsample_mask(rng, n, config.subsample_fraction)
            grad = margin - y
            hess = np.ones(n)
            tree = _build_tree(values_t, order, x, grad, hess, root, config)
            margin += config.shrinkage * tree.predict(x)
            ensemble.trees.append([tree])
        return ensemble

    if vocabulary is None:
        vocabulary = tuple(sorted(set(labels)))
    for l in labels:
        if l not in vocabulary:
            raise ContractViolation(f"label {l!r} not in vocabulary")
    c = len(vocabulary)
    y_idx = np.array([vocabulary.index(l) for l in labels])
    onehot = np.zeros((n, c))
    onehot[np.arange(n), y_idx] = 1.0
    counts = onehot.sum(axis=0)
    base = np.log((counts + 1.0) / (n + c))
    ensemble = TreeEnsemble("multiclass", tuple(vocabulary), base, config.shrinkage, [], x.shape[1])
    margins = np.tile(base, (n, 1))
    for _ in range(config.rounds):
        p = _softmax(margins)
        grad_all = p - onehot
        hess_all = p * (1.0 - p)
        root = _subsample_mask(rng, n, config.subsample_fraction)
        round_trees = []
        for cls in range(c):
            tree = _build_tree(values_t, order, x, grad_all[:, cls], hess_all[:, cls],
                               root, config)
            margins[:, cls] += config.shrinkage * tree.predict(x)
            round_trees.append(tree)
        ensemble.trees.append(round_trees)
    return ensemble


def _subsample_mask(rng: np.random.Generator, n: int, fraction: float) -> np.ndarray:
    if fraction >= 1.0:
        return np.ones(n, dtype=bool)
    take = max(2, int(round(fraction * n)))
    mask = np.zeros(n, dtype=bool)
    mask[rng.choice(n, size=take, replace=False)] = True
    return mask


# ---------------------------------------------------------------------------
# Serialization


def ensemble_to_dict(e: TreeEnsemble) -> dict:
    return {
        "format_version": 1,
        "objective": e.objective,
        "vocabulary": list(e.vocabulary) if e.vocabulary else None,
        "base_score": e.base_score.tolist(),
        "shrinkage": e.shrinkage,
        "n_features": e.n_features,
        "trees": [[{"feature": t.feature, "threshold": t.threshold, "left": t.left,
                    "right": t.right, "value": t.value} for t in row] for row in e.trees],
    }


def ensemble_from_dict(d: dict) -> TreeEnsemble:
    if d.get("format_version") != 1:
        raise ContractViolation(f"unsupported ensemble format {d.get('format_version')}")
    trees = [[Tree(feature=t["feature"], threshold=t["threshold"], left=t["left"],
                   right=t["right"], value=t["value"]) for t in row] for row in d["trees"]]
    return TreeEnsemble(
        objective=d["objective"],
        vocabulary=tuple(d["vocabulary"]) if d["vocabulary"] else None,
        base_score=np.asarray(d["base_score"], dtype=np.float64),
        shrinkage=d["shrinkage"],
        trees=trees,
        n_features=d["n_features"],
    )


def save_ensemble(e: TreeEnsemble, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(ensemble_to_dict(e), fh, sort_keys=True)


def load_ensemble(path: Path) -> TreeEnsemble:
    with open(path) as fh:
        return ensemble_from_dict(json.load(fh))
