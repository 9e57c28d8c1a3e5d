"""Comparative analyses: gap-convergence curves and cycles-to-threshold scaling.

Instance sets mirror the evaluation protocol: five QUBOs per size, produced
by repeatedly running the subsampling ensemble pipeline on the same dataset,
so instances within a set share structure (positive off-diagonal entries).
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from . import qubo as qubo_mod
from .dataset import SyntheticSpec, generate_synthetic, rebalance
from .learners import EnsembleConfig, train_ensemble
from .qubo import QuboMatrix
from .solvers import SolveTrace


@dataclass(frozen=True)
class ScalingFit:
    model: str                  # "power_law" or "exponential"
    a: float
    b: float
    r_squared: float
    points: tuple

    def predict(self, n: np.ndarray) -> np.ndarray:
        n = np.asarray(n, dtype=np.float64)
        if self.model == "power_law":
            return self.a * n**self.b
        return self.a * np.exp(self.b * n)


def _linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 and ss_res < 1e-30 else 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return float(slope), float(intercept), r2


def fit_scaling(points) -> ScalingFit:
    """Least-squares fit of cycles-vs-size, choosing between a power law
    (linear in log N / log cycles) and an exponential (linear in N / log
    cycles) by the better coefficient of determination."""
    pts = [(float(n), float(c)) for n, c in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points to fit a scaling law")
    n = np.array([p[0] for p in pts])
    c = np.array([p[1] for p in pts])
    if np.any(n <= 0) or np.any(c <= 0):
        raise ValueError("scaling points must be positive")
    log_c = np.log(c)

    b_pow, loga_pow, r2_pow = _linear_fit(np.log(n), log_c)
    b_exp, loga_exp, r2_exp = _linear_fit(n, log_c)
    if r2_pow >= r2_exp:
        return ScalingFit("power_law", float(np.exp(loga_pow)), b_pow, r2_pow, tuple(pts))
    return ScalingFit("exponential", float(np.exp(loga_exp)), b_exp, r2_exp, tuple(pts))


def gap_convergence(traces: list[SolveTrace], reference_costs) -> tuple[np.ndarray, np.ndarray]:
    """Per-cycle mean and standard deviation of the best gap across instances."""
    if not traces:
        raise ValueError("need at least one trace")
    refs = list(reference_costs)
    if len(refs) != len(traces):
        raise ValueError("one reference cost per trace required")
    lengths = [t.n_cycles for t in traces]
    length = min(lengths)
    if len(set(lengths)) > 1:
        warnings.warn(f"trace lengths differ {sorted(set(lengths))}; truncating to {length}")
    series = np.stack([t.gap_series(r, length) for t, r in zip(traces, refs)])
    mean = np.nanmean(series, axis=0)
    if series.shape[0] == 1:
        std = np.zeros(length)
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            std = np.nanstd(series, axis=0, ddof=1)
    return mean, std


def cycles_to_gap(series_or_trace, threshold: float,
                  reference_cost: float | None = None) -> int | None:
    """First 1-based cycle whose best gap is below threshold, or None."""
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    if isinstance(series_or_trace, SolveTrace):
        if reference_cost is None:
            raise ValueError("reference_cost required when passing a trace")
        series = series_or_trace.gap_series(reference_cost)
    else:
        series = np.asarray(series_or_trace, dtype=np.float64)
    hits = np.nonzero(series < threshold)[0]
    return int(hits[0]) + 1 if len(hits) else None


def ensemble_qubo_set(n: int, n_instances: int, seed: int, lam: float = 0.05,
                      n_rows: int = 600) -> list[QuboMatrix]:
    """Subsampling-pipeline QUBOs sharing one synthetic dataset.

    Instances differ only through the ensemble training seed, mirroring the
    way benchmark sets are produced from one dataset; off-diagonal entries
    are non-negative learner correlations.
    """
    spec = SyntheticSpec(n_rows=n_rows, n_features=8, seed=seed)
    train, _ = generate_synthetic(spec)
    train = rebalance(train, "undersample", seed)
    out = []
    for k in range(n_instances):
        config = EnsembleConfig(
            n_learners=n, mix={"decision_tree": 0.5, "knn": 0.5},
            variant="subsampling", n_subsets=4, seed=seed + 1000 * (k + 1),
        )
        _, h = train_ensemble(config, train)
        out.append(qubo_mod.build(h, train.labels, lam))
    return out


def series_to_csv(path, mean: np.ndarray, std: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cycle", "mean_gap", "std_gap"])
        for i, (m, s) in enumerate(zip(mean, std), start=1):
            writer.writerow([i, repr(float(m)), repr(float(s))])
