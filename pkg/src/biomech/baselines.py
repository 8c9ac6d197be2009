"""Token-histogram baselines: features, hyperparameter search, chance floor.

Each trial becomes the normalized histogram of its motion tokens; a boosted
tree ensemble is trained per task on those fixed-length vectors. Chance is
estimated by retraining on uniformly shuffled labels and scoring against the
untouched test split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, EmptyInputError, FoldConstructionError
from .evalmetrics import classification_report
from .gbdt import GBDTConfig, TreeEnsemble, fit_gbdt
from .tokenizer import TokenSequence


def token_histogram(tokens: TokenSequence, k: int) -> np.ndarray:
    """Normalized token usage histogram: values[i] = count(i) / len(tokens)."""
    if not tokens.tokens:
        raise EmptyInputError(f"trial {tokens.trial_id} has no tokens")
    idx = np.asarray(tokens.tokens, dtype=np.int64)
    if idx.min() < 0 or idx.max() >= k:
        raise ContractViolation(f"token index outside [0, {k - 1}]")
    return np.bincount(idx, minlength=k).astype(np.float64) / len(idx)


@dataclass(frozen=True)
class SearchSpace:
    rounds: tuple[int, int] = (100, 300)
    max_depth: tuple[int, int] = (2, 4)
    shrinkage: tuple[float, float] = (0.05, 0.3)
    min_samples_leaf: tuple[int, int] = (2, 10)
    subsample_fraction: tuple[float, float] = (0.7, 1.0)
    n_iterations: int = 8
    seed: int = 0

    def __post_init__(self):
        for name in ("rounds", "max_depth", "shrinkage", "min_samples_leaf", "subsample_fraction"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ContractViolation(f"empty range for {name}: {lo} > {hi}")
        if self.n_iterations < 1:
            raise ContractViolation("n_iterations must be >= 1")

    def candidates(self) -> list[GBDTConfig]:
        """Candidate 0 is always the default configuration."""
        out = [GBDTConfig(seed=self.seed)]
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0xCF]))
        for _ in range(self.n_iterations - 1):
            log_lo, log_hi = math.log(self.shrinkage[0]), math.log(self.shrinkage[1])
            out.append(GBDTConfig(
                rounds=int(rng.integers(self.rounds[0], self.rounds[1] + 1)),
                max_depth=int(rng.integers(self.max_depth[0], self.max_depth[1] + 1)),
                shrinkage=float(math.exp(rng.uniform(log_lo, log_hi))),
                min_samples_leaf=int(rng.integers(self.min_samples_leaf[0],
                                                  self.min_samples_leaf[1] + 1)),
                subsample_fraction=float(rng.uniform(self.subsample_fraction[0],
                                                     self.subsample_fraction[1])),
                seed=self.seed,
            ))
        return out


def stratified_folds(labels, n_folds: int, seed: int) -> np.ndarray:
    """Assign each sample to a fold, stratified by label. Raises if any fold's
    training side (the other folds) would miss a class."""
    labels = list(labels)
    n = len(labels)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF0]))
    fold_of = np.empty(n, dtype=np.int64)
    for cls in sorted(set(labels)):
        idxs = [i for i, l in enumerate(labels) if l == cls]
        rng.shuffle(idxs)
        for j, i in enumerate(idxs):
            fold_of[i] = j % n_folds
    for f in range(n_folds):
        train_classes = {labels[i] for i in range(n) if fold_of[i] != f}
        missing = set(labels) - train_classes
        if missing:
            raise FoldConstructionError(
                f"classes {sorted(missing)} absent from the training side of fold {f}")
    return fold_of


def _score_f1(classifier: TreeEnsemble, x, y_true, vocabulary, positive_label) -> float:
    preds = classifier.predict_label(np.asarray(x))
    _, f1 = classification_report(preds, list(y_true), vocabulary, positive_label)
    return f1


def randomized_search_cv(features, labels, space: SearchSpace | None = None,
                         folds: int = 3, *, vocabulary, positive_label: str | None = None,
                         ) -> tuple[GBDTConfig, float]:
    """Randomized hyperparameter search maximizing cross-validated F1.

    Deterministic under space.seed; folds are stratified by label; the default
    config is always candidate 0, so the winner never scores below it.
    """
    space = space or SearchSpace()
    x = np.asarray(features, dtype=np.float64)
    labels = list(labels)
    fold_of = stratified_folds(labels, folds, space.seed)

    best_config, best_score, best_index = None, -1.0, -1
    for ci, config in enumerate(space.candidates()):
        fold_scores = []
        for f in range(folds):
            train = fold_of != f
            val = ~train
            model = fit_gbdt(x[train], [l for l, m in zip(labels, train) if m],
                             config, "multiclass", vocabulary)
            fold_scores.append(_score_f1(model, x[val],
                                         [l for l, m in zip(labels, val) if m],
                                         vocabulary, positive_label))
        score = float(np.mean(fold_scores))
        if score > best_score:
            best_config, best_score, best_index = config, score, ci
    return best_config, best_score


def chance_baseline(train_features, train_labels, test_features, test_labels,
                    config: GBDTConfig | None = None, seed: int = 0, repeats: int = 10,
                    *, vocabulary, positive_label: str | None = None,
                    permutation=None) -> float:
    """Mean F1 after training on uniformly permuted labels, scored on the
    untouched held-out split.

    `permutation` overrides the shuffle (testing hook); by default each repeat
    draws a fresh uniform permutation of the training labels.
    """
    config = config or GBDTConfig()
    train_x = np.asarray(train_features, dtype=np.float64)
    test_x = np.asarray(test_features, dtype=np.float64)
    train_labels = list(train_labels)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xCE]))
    scores = []
    for _ in range(repeats):
        perm = permutation if permutation is not None else rng.permutation(len(train_labels))
        shuffled = [train_labels[i] for i in perm]
        model = fit_gbdt(train_x, shuffled, config, "multiclass", vocabulary)
        scores.append(_score_f1(model, test_x, list(test_labels), vocabulary, positive_label))
    return float(np.mean(scores))
