"""Strong classifier assembled from binary ensemble weights.

The decision score of a sample is the mean vote of the selected learners,
(1/N) sum_i w_i h_i(x); the published threshold rule maps the sign of the
training-set mean score to T in {-1, 0, +1}.  A real-valued sweepable
threshold over the raw score is used for PR curves.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass

import numpy as np

from . import metrics, qubo as qubo_mod
from .dataset import Dataset, stratified_split
from .learners import (EnsembleConfig, WeakLearner, ensemble_from_json,
                       ensemble_to_json, sub_config, train_ensemble)

logger = logging.getLogger(__name__)

LAMBDA_TUNE_SIZE = 10


@dataclass(frozen=True)
class StrongClassifier:
    ensemble: tuple[WeakLearner, ...]
    weights: np.ndarray
    threshold: float
    n_learners: int

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.int64)
        if w.shape != (len(self.ensemble),):
            raise ValueError("one weight per ensemble member required")
        if not np.all(np.isin(w, (0, 1))):
            raise ValueError("weights must be binary")
        if w.sum() == 0:
            logger.warning("degenerate strong classifier: no learner selected")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "ensemble", tuple(self.ensemble))

    @property
    def degenerate(self) -> bool:
        return int(self.weights.sum()) == 0


def raw_score(ensemble, weights, X: np.ndarray) -> np.ndarray:
    """(1/N) sum_i w_i h_i(x) for each row of X."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = len(ensemble)
    total = np.zeros(X.shape[0])
    for w_i, learner in zip(weights, ensemble):
        if w_i:
            total += learner.predict(X)
    return total / n


def compute_threshold(ensemble, weights, train: Dataset) -> float:
    """Sign of the mean raw score over the training set: -1, 0, or +1."""
    scores = raw_score(ensemble, weights, train.features)
    return float(np.sign(np.mean(scores)))


def build_strong_classifier(ensemble, weights, train: Dataset) -> StrongClassifier:
    t = compute_threshold(ensemble, weights, train)
    return StrongClassifier(ensemble=tuple(ensemble), weights=np.asarray(weights),
                            threshold=t, n_learners=len(ensemble))


def predict(c: StrongClassifier, x: np.ndarray):
    """Labels and margins; a margin of exactly zero maps to +1.

    Accepts a single feature vector or a matrix of rows; returns scalars for
    a vector and arrays for a matrix.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    margins = raw_score(c.ensemble, c.weights, X) - c.threshold
    labels = np.where(margins >= 0.0, 1, -1).astype(np.int64)
    if single:
        return int(labels[0]), float(margins[0])
    return labels, margins


def tune_lambda(config: EnsembleConfig, train: Dataset, grid, seed: int,
                recall_target: float = metrics.DEFAULT_RECALL_TARGET) -> float:
    """Grid-search the regularization at ensemble size 10, then rescale.

    Each grid point runs the full pipeline (train, build QUBO, exact solve,
    threshold, PR interpolation) on an 80/20 stratified split; the winner
    maximizes precision at the recall floor.  For configs larger than 10
    learners the chosen value is scaled by 10/N.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("lambda grid must be non-empty")
    cfg10 = sub_config(config, min(LAMBDA_TUNE_SIZE, config.n_learners))
    fit_part, val_part = stratified_split(train, 0.8, seed)
    ensemble, h_fit = train_ensemble(cfg10, fit_part)

    precisions = []
    for lam in grid:
        q = qubo_mod.build(h_fit, fit_part.labels, lam)
        weights, _ = qubo_mod.brute_force_min(q)
        clf = build_strong_classifier(ensemble, weights, fit_part)
        if clf.degenerate:
            precisions.append(-np.inf)
            continue
        _, margins = predict(clf, val_part.features)
        try:
            curve = metrics.pr_curve(margins, val_part.labels)
            precisions.append(metrics.precision_at_recall(curve, recall_target))
        except ValueError:
            precisions.append(-np.inf)
    best = int(np.argmax(precisions))
    lam10 = float(grid[best])
    if config.n_learners > LAMBDA_TUNE_SIZE:
        return lam10 * LAMBDA_TUNE_SIZE / config.n_learners
    return lam10


def config_hash(config: EnsembleConfig, lam: float) -> str:
    payload = {
        "n_learners": config.n_learners,
        "mix": dict(sorted(config.mix.items())),
        "variant": config.variant,
        "n_subsets": config.n_subsets,
        "hyperparams": config.hyperparams.__dict__,
        "seed": config.seed,
        "lambda": lam,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def save_model(c: StrongClassifier, lam: float, config: EnsembleConfig, path) -> None:
    payload = {
        "ensemble": ensemble_to_json(list(c.ensemble)),
        "weights": c.weights.tolist(),
        "threshold": c.threshold,
        "lambda": lam,
        "config_hash": config_hash(config, lam),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_model(path) -> tuple[StrongClassifier, float]:
    with open(path) as fh:
        payload = json.load(fh)
    ensemble = ensemble_from_json(payload["ensemble"])
    c = StrongClassifier(ensemble=tuple(ensemble),
                         weights=np.asarray(payload["weights"]),
                         threshold=float(payload["threshold"]),
                         n_learners=len(ensemble))
    return c, float(payload["lambda"])


def predictions_to_csv(path, margins, labels) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "margin", "label"])
        for i, (m, lab) in enumerate(zip(margins, labels)):
            writer.writerow([i, repr(float(m)), int(lab)])
