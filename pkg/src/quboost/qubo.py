"""QUBO matrices for binary ensemble-weight selection.

A bitstring is represented throughout the package as a 1-D integer array of
0/1 entries.  The basis-state index of a bitstring treats bit 0 as the most
significant bit, so ascending index order equals lexicographic order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

BRUTE_FORCE_CAP = 24
_ENUM_CHUNK = 1 << 16
_SYM_TOL = 1e-12


@dataclass(frozen=True)
class QuboMatrix:
    """Symmetric cost matrix Q with the quadratic form w^T Q w.

    Off-diagonal entries hold learner-learner correlations scaled by 1/N^2,
    diagonal entries hold S/N^2 + lambda - (2/N) * label correlation, so the
    quadratic form reproduces the squared-error ensemble cost up to the
    constant sum of squared labels.
    """

    Q: np.ndarray
    lam: float
    n_samples: int
    n_learners: int = field(default=0)

    def __post_init__(self):
        q = np.asarray(self.Q, dtype=np.float64)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError("Q must be a square matrix")
        if not np.all(np.isfinite(q)):
            raise ValueError("Q entries must be finite")
        if q.shape[0] and np.max(np.abs(q - q.T)) > _SYM_TOL * max(1.0, np.max(np.abs(q))):
            raise ValueError("Q must be symmetric")
        q = q.copy()
        q.flags.writeable = False
        object.__setattr__(self, "Q", q)
        if self.n_learners == 0:
            object.__setattr__(self, "n_learners", q.shape[0])
        elif self.n_learners != q.shape[0]:
            raise ValueError("n_learners does not match Q shape")

    @property
    def n(self) -> int:
        return self.Q.shape[0]


def bits_from_index(index: int | np.ndarray, n: int) -> np.ndarray:
    """Expand basis-state indices into (…, n) arrays of 0/1 bits, bit 0 = MSB."""
    idx = np.asarray(index, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((idx[..., None] >> shifts) & 1).astype(np.uint8)


def index_from_bits(bits: np.ndarray) -> int:
    bits = np.asarray(bits).astype(np.int64)
    n = bits.shape[-1]
    weights = 1 << np.arange(n - 1, -1, -1, dtype=np.int64)
    return int(bits @ weights)


def build(H: np.ndarray, labels: np.ndarray, lam: float) -> QuboMatrix:
    """Assemble the QUBO from a prediction matrix H (N x S, entries +-1).

    Entries: Q_ij = Corr(h_i, h_j) / N^2 off the diagonal and
    Q_ii = S/N^2 + lam - (2/N) Corr(h_i, y), with Corr the plain dot product
    over samples.  With this scaling, w^T Q w equals the squared-error cost
    of the sub-ensemble selected by w minus the constant S.
    """
    H = np.asarray(H, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if H.ndim != 2:
        raise ValueError("prediction matrix must be 2-D (learners x samples)")
    n, s = H.shape
    if labels.shape != (s,):
        raise ValueError(f"label vector length {labels.shape} does not match {s} samples")
    if not np.all(np.abs(H) == 1):
        raise ValueError("prediction matrix entries must be +-1")
    if not np.all(np.abs(labels) == 1):
        raise ValueError("labels must be +-1")

    corr = H @ H.T
    corr_y = H @ labels
    q = corr / n**2
    np.fill_diagonal(q, s / n**2 + lam - 2.0 * corr_y / n)
    return QuboMatrix(Q=q, lam=float(lam), n_samples=s, n_learners=n)


def cost(q: QuboMatrix, w: np.ndarray) -> float:
    """Quadratic form w^T Q w for a 0/1 weight vector."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (q.n,):
        raise ValueError(f"bitstring length {w.shape} does not match QUBO size {q.n}")
    return float(w @ q.Q @ w)


def enumerate_costs(q: QuboMatrix) -> np.ndarray:
    """Costs of all 2^N bitstrings in index order (N <= BRUTE_FORCE_CAP)."""
    n = q.n
    if n > BRUTE_FORCE_CAP:
        raise ValueError(f"enumeration capped at N={BRUTE_FORCE_CAP}; use the SA reference solver")
    total = 1 << n
    out = np.empty(total, dtype=np.float64)
    for start in range(0, total, _ENUM_CHUNK):
        stop = min(start + _ENUM_CHUNK, total)
        bits = bits_from_index(np.arange(start, stop), n).astype(np.float64)
        out[start:stop] = np.einsum("bi,bi->b", bits @ q.Q, bits)
    return out


def brute_force_min(q: QuboMatrix) -> tuple[np.ndarray, float]:
    """Exhaustive global minimum; ties broken by lexicographically smallest bits.

    Hard-capped at N=24.  Larger instances should go through the simulated
    annealing reference protocol in the solvers module.
    """
    n = q.n
    if n > BRUTE_FORCE_CAP:
        raise ValueError(
            f"brute force capped at N={BRUTE_FORCE_CAP}; "
            "use solvers.reference_minimum for larger instances"
        )
    best_cost = np.inf
    best_index = 0
    total = 1 << n
    for start in range(0, total, _ENUM_CHUNK):
        stop = min(start + _ENUM_CHUNK, total)
        bits = bits_from_index(np.arange(start, stop), n).astype(np.float64)
        costs = np.einsum("bi,bi->b", bits @ q.Q, bits)
        k = int(np.argmin(costs))
        if costs[k] < best_cost:
            best_cost = float(costs[k])
            best_index = start + k
    return bits_from_index(best_index, n), best_cost


def gap(q: QuboMatrix, w: np.ndarray, reference: np.ndarray) -> float:
    """Relative cost excess |(cost(w) - cost(ref)) / cost(ref)|."""
    ref_cost = cost(q, reference)
    if ref_cost == 0.0:
        raise ValueError("gap undefined: reference bitstring has zero cost")
    return abs((cost(q, w) - ref_cost) / ref_cost)


def gap_from_costs(value: float, reference_cost: float) -> float:
    if reference_cost == 0.0:
        raise ValueError("gap undefined: reference cost is zero")
    return abs((value - reference_cost) / reference_cost)


def random_qubo(n: int, seed: int, diag_level: float = 0.6, off_low: float = 0.05) -> QuboMatrix:
    """Random instance with positive off-diagonal and negative diagonal entries.

    This mirrors the sign structure produced by correlation-built ensembles:
    pairwise penalties are positive while useful single bits carry negative
    diagonal gains, so optima are non-trivial bit patterns.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    upper = rng.uniform(off_low, 1.0, size=(n, n))
    q = np.triu(upper, 1)
    q = q + q.T
    row = q.sum(axis=1) if n > 1 else np.ones(1)
    diag = -diag_level * row * rng.uniform(0.5, 1.5, size=n)
    np.fill_diagonal(q, diag)
    return QuboMatrix(Q=q, lam=0.0, n_samples=0, n_learners=n)


def save_qubo(q: QuboMatrix, path) -> None:
    """Write the JSON QUBO file: {n, lambda, n_samples, entries}.

    Entries list the upper triangle (including the diagonal) as
    (i, j, value) triples; floats round-trip bit-exactly through JSON.
    """
    entries = []
    for i in range(q.n):
        for j in range(i, q.n):
            entries.append([i, j, q.Q[i, j]])
    payload = {"n": q.n, "lambda": q.lam, "n_samples": q.n_samples, "entries": entries}
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_qubo(path) -> QuboMatrix:
    with open(path) as fh:
        payload = json.load(fh)
    for key in ("n", "lambda", "entries"):
        if key not in payload:
            raise ValueError(f"QUBO file missing key '{key}'")
    n = int(payload["n"])
    q = np.zeros((n, n))
    for i, j, value in payload["entries"]:
        q[i, j] = value
        q[j, i] = value
    return QuboMatrix(
        Q=q,
        lam=float(payload["lambda"]),
        n_samples=int(payload.get("n_samples", 0)),
        n_learners=n,
    )
