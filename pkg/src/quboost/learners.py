"""Heterogeneous weak-learner ensembles with sequential boosting reweighting.

Four learner kinds are supported: low-depth decision trees, k-nearest
neighbors, Gaussian naive Bayes, and logistic regression.  Fitting is done
with scikit-learn, but the trained state is extracted into plain arrays and
predictions run through our own code so that (a) JSON-serialized models
reproduce predictions exactly and (b) score ties resolve to +1
deterministically.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.naive_bayes import GaussianNB
from sklearn.tree import DecisionTreeClassifier

from ._rng import substream
from .dataset import Dataset, temporal_subsample

KINDS = ("decision_tree", "knn", "gaussian_nb", "logistic_regression")
EPS_CLAMP = 1e-12


@dataclass(frozen=True)
class LearnerHyperparams:
    max_depth: int = 3
    k: int = 5
    logreg_c: float = 1.0
    logreg_max_iter: int = 200


@dataclass(frozen=True)
class EnsembleConfig:
    n_learners: int
    mix: dict
    variant: str = "subsampling"
    n_subsets: int = 4
    hyperparams: LearnerHyperparams = field(default_factory=LearnerHyperparams)
    seed: int = 0

    def __post_init__(self):
        if self.n_learners < 1:
            raise ValueError("n_learners must be >= 1")
        if self.variant not in ("boosting", "subsampling"):
            raise ValueError(f"unknown variant: {self.variant!r}")
        if self.n_subsets < 1:
            raise ValueError("n_subsets must be >= 1")
        for kind, frac in self.mix.items():
            if kind not in KINDS:
                raise ValueError(f"unknown learner kind: {kind!r}")
            if frac < 0:
                raise ValueError("mix fractions must be non-negative")
        total = sum(self.mix.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"mix fractions must sum to 1, got {total}")


@dataclass(frozen=True)
class WeakLearner:
    """A trained base predictor mapping feature vectors to {-1, +1}.

    ``params`` holds plain numpy arrays (or scalars) fully describing the
    trained state; prediction never touches the fitting library again.
    """

    kind: str
    params: dict

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        expected = self.params.get("n_features")
        if expected is not None and X.shape[1] != expected:
            raise ValueError(f"feature dimension {X.shape[1]} != trained dimension {expected}")
        score = self.score(X)
        return np.where(score >= 0.0, 1, -1).astype(np.int64)

    def score(self, X: np.ndarray) -> np.ndarray:
        """Real-valued vote tendency; >= 0 means +1."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if "constant" in self.params:
            return np.full(X.shape[0], float(self.params["constant"]))
        return _SCORERS[self.kind](self.params, X)


def _score_tree(params, X):
    left, right = params["children_left"], params["children_right"]
    feature, threshold = params["feature"], params["threshold"]
    value = params["value"]  # (n_nodes, 2) class-weight sums, columns (-1, +1)
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = left[node] != -1
    while np.any(active):
        rows = np.nonzero(active)[0]
        nodes = node[rows]
        go_left = X[rows, feature[nodes]] <= threshold[nodes]
        node[rows] = np.where(go_left, left[nodes], right[nodes])
        active = left[node] != -1
    leaf = value[node]
    return leaf[:, 1] - leaf[:, 0]


def _score_knn(params, X):
    train_x, train_y, k = params["train_x"], params["train_y"], int(params["k"])
    d2 = ((X[:, None, :] - train_x[None, :, :]) ** 2).sum(axis=2)
    # stable ordering: distance first, training index second
    order = np.lexsort((np.broadcast_to(np.arange(d2.shape[1]), d2.shape), d2), axis=1)
    nearest = order[:, :k]
    return train_y[nearest].mean(axis=1)


def _score_gnb(params, X):
    theta, var, prior = params["theta"], params["var"], params["class_prior"]
    joint = []
    for c in range(2):
        ll = -0.5 * np.sum(np.log(2.0 * np.pi * var[c]))
        ll = ll - 0.5 * ((X - theta[c]) ** 2 / var[c]).sum(axis=1)
        joint.append(ll + np.log(prior[c]))
    return joint[1] - joint[0]


def _score_logreg(params, X):
    return X @ params["coef"] + params["intercept"]


_SCORERS = {
    "decision_tree": _score_tree,
    "knn": _score_knn,
    "gaussian_nb": _score_gnb,
    "logistic_regression": _score_logreg,
}


def fit(kind: str, data: Dataset, sample_weights: np.ndarray,
        hyperparams: LearnerHyperparams = LearnerHyperparams(), seed: int = 0) -> WeakLearner:
    """Fit one weak learner under a sample-weight distribution.

    Trees, naive Bayes, and logistic regression use native sample weights;
    kNN has none, so the training set is resampled proportionally to the
    weights (skipped when they are exactly uniform).  Single-class data
    yields a constant learner rather than an error.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown learner kind: {kind!r}")
    if data.n_rows == 0:
        raise ValueError("cannot fit on an empty dataset")
    w = np.asarray(sample_weights, dtype=np.float64)
    if w.shape != (data.n_rows,):
        raise ValueError("sample_weights length must match the dataset")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-8:
        raise ValueError("sample_weights must form a probability distribution")

    X, y = data.features, data.labels
    base = {"n_features": data.n_features}
    if len(np.unique(y)) == 1:
        return WeakLearner(kind=kind, params={**base, "constant": int(y[0])})

    if kind == "decision_tree":
        clf = DecisionTreeClassifier(max_depth=hyperparams.max_depth, random_state=seed)
        clf.fit(X, y, sample_weight=w * data.n_rows)
        tree = clf.tree_
        params = {
            **base,
            "children_left": tree.children_left.copy(),
            "children_right": tree.children_right.copy(),
            "feature": tree.feature.copy(),
            "threshold": tree.threshold.copy(),
            "value": tree.value[:, 0, :].copy(),
        }
    elif kind == "knn":
        if hyperparams.k > data.n_rows:
            raise ValueError(f"k={hyperparams.k} exceeds the {data.n_rows} training rows")
        uniform = np.allclose(w, 1.0 / data.n_rows, rtol=0.0, atol=1e-15)
        if uniform:
            Xk, yk = X, y
        else:
            rng = substream(seed, "learners/knn_resample")
            idx = rng.choice(data.n_rows, size=data.n_rows, replace=True, p=w)
            Xk, yk = X[idx], y[idx]
            if len(np.unique(yk)) == 1:
                return WeakLearner(kind=kind, params={**base, "constant": int(yk[0])})
        params = {**base, "train_x": Xk.copy(), "train_y": yk.astype(np.float64), "k": hyperparams.k}
    elif kind == "gaussian_nb":
        clf = GaussianNB()
        clf.fit(X, y, sample_weight=w * data.n_rows)
        params = {
            **base,
            "theta": clf.theta_.copy(),
            "var": clf.var_.copy(),
            "class_prior": clf.class_prior_.copy(),  # classes_ sorted: (-1, +1)
        }
    else:
        clf = LogisticRegression(C=hyperparams.logreg_c, max_iter=hyperparams.logreg_max_iter)
        clf.fit(X, y, sample_weight=w * data.n_rows)
        params = {**base, "coef": clf.coef_[0].copy(), "intercept": float(clf.intercept_[0])}
    return WeakLearner(kind=kind, params=params)


def predict_matrix(ensemble: list[WeakLearner], data: Dataset) -> np.ndarray:
    """Prediction matrix H with H[i, s] = h_i(x_s), entries exactly +-1."""
    if not ensemble:
        raise ValueError("ensemble must be non-empty")
    rows = [learner.predict(data.features) for learner in ensemble]
    return np.stack(rows).astype(np.int8)


@dataclass(frozen=True)
class BoostState:
    """Sequential reweighting state: the sample distribution and per-learner
    error rates, log-odds weights, and normalization factors."""

    D: np.ndarray
    epsilons: tuple = ()
    real_weights: tuple = ()
    Z: tuple = ()

    def __post_init__(self):
        d = np.asarray(self.D, dtype=np.float64)
        if np.any(d < 0) or abs(d.sum() - 1.0) > 1e-8:
            raise ValueError("D must be a probability distribution")
        object.__setattr__(self, "D", d)


def initial_boost_state(n_samples: int) -> BoostState:
    return BoostState(D=np.full(n_samples, 1.0 / n_samples))


def boost_step(h_row: np.ndarray, labels: np.ndarray, state: BoostState) -> BoostState:
    """One reweighting update: weighted error, log-odds weight, new distribution.

    The error is the weight mass on misclassified samples (clamped away from
    0 and 1 so the log-odds stays finite); misclassified samples gain weight
    through the exponential update and the distribution is renormalized.
    """
    h = np.asarray(h_row, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if h.shape != state.D.shape or y.shape != state.D.shape:
        raise ValueError("h_row/labels length must match the distribution")
    miss = h != y
    eps = float(np.sum(state.D[miss] * np.abs(h[miss])))
    eps = min(max(eps, EPS_CLAMP), 1.0 - EPS_CLAMP)
    w_i = 0.5 * np.log((1.0 - eps) / eps)
    unnorm = state.D * np.exp(-w_i * y * h)
    z = float(unnorm.sum())
    return BoostState(
        D=unnorm / z,
        epsilons=state.epsilons + (eps,),
        real_weights=state.real_weights + (w_i,),
        Z=state.Z + (z,),
    )


def _counts_from_mix(mix: dict, n: int) -> list[str]:
    kinds = [k for k in KINDS if mix.get(k, 0.0) > 0]
    raw = {k: mix[k] * n for k in kinds}
    counts = {k: int(np.floor(raw[k])) for k in kinds}
    remainder = n - sum(counts.values())
    by_frac = sorted(kinds, key=lambda k: (-(raw[k] - counts[k]), KINDS.index(k)))
    for k in by_frac[:remainder]:
        counts[k] += 1
    out = []
    for k in kinds:
        out.extend([k] * counts[k])
    return out


def train_ensemble(config: EnsembleConfig, train: Dataset) -> tuple[list[WeakLearner], np.ndarray]:
    """Train the ensemble and return it with its prediction matrix on ``train``.

    Learners are distributed round-robin over the temporal subsets.  The
    subsampling variant fits every learner with uniform weights on its
    subset; the boosting variant reweights sequentially within each subset.
    """
    kinds = _counts_from_mix(config.mix, config.n_learners)
    subsets = temporal_subsample(train, config.n_subsets)
    per_subset: list[list[tuple[int, str]]] = [[] for _ in subsets]
    for i, kind in enumerate(kinds):
        per_subset[i % len(subsets)].append((i, kind))

    ensemble: list[WeakLearner | None] = [None] * config.n_learners
    for subset_id, assigned in enumerate(per_subset):
        if not assigned:
            continue
        subset = subsets[subset_id]
        state = initial_boost_state(subset.n_rows)
        for i, kind in assigned:
            seed_i = int(substream(config.seed, f"learners/fit/{i}").integers(0, 2**31 - 1))
            learner = fit(kind, subset, state.D, config.hyperparams, seed=seed_i)
            ensemble[i] = learner
            if config.variant == "boosting":
                state = boost_step(learner.predict(subset.features), subset.labels, state)
    learners = [l for l in ensemble if l is not None]
    return learners, predict_matrix(learners, train)


def _params_to_json(params: dict) -> dict:
    out = {}
    for key, value in params.items():
        out[key] = value.tolist() if isinstance(value, np.ndarray) else value
    return out


_ARRAY_DTYPES = {
    "children_left": np.int64, "children_right": np.int64, "feature": np.int64,
    "threshold": np.float64, "value": np.float64, "train_x": np.float64,
    "train_y": np.float64, "theta": np.float64, "var": np.float64,
    "class_prior": np.float64, "coef": np.float64,
}


def _params_from_json(params: dict) -> dict:
    out = {}
    for key, value in params.items():
        if key in _ARRAY_DTYPES:
            out[key] = np.asarray(value, dtype=_ARRAY_DTYPES[key])
        else:
            out[key] = value
    return out


def ensemble_to_json(ensemble: list[WeakLearner]) -> list[dict]:
    return [{"kind": l.kind, "params": _params_to_json(l.params)} for l in ensemble]


def ensemble_from_json(payload: list[dict]) -> list[WeakLearner]:
    return [WeakLearner(kind=e["kind"], params=_params_from_json(e["params"])) for e in payload]


def save_ensemble(ensemble: list[WeakLearner], path) -> None:
    with open(path, "w") as fh:
        json.dump(ensemble_to_json(ensemble), fh, sort_keys=True)
        fh.write("\n")


def load_ensemble(path) -> list[WeakLearner]:
    with open(path) as fh:
        return ensemble_from_json(json.load(fh))


def sub_config(config: EnsembleConfig, n_learners: int) -> EnsembleConfig:
    """Same mix/variant/hyperparams at a different ensemble size."""
    return replace(config, n_learners=n_learners)
