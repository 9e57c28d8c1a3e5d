"""Classical and quantum-inspired QUBO solvers with a common trace format.

All solvers are deterministic per seed and report a SolveTrace whose
best-cost sequence is non-increasing.  A "cycle" is one produced bitstring:
a uniform draw, one annealing restart, one measurement shot, or one
imaginary-time step readout.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import qubo as qubo_mod
from ._rng import substream
from .ising import (Register, PulseSequence, Segment, evolve, ground_state,
                    interaction_matrix, sample, STATE_VECTOR_CAP)
from .qubo import QuboMatrix

SA_REFERENCE_TOTAL_SWEEPS = 200_000


@dataclass(frozen=True)
class SaSchedule:
    n_sweeps: int = 1000
    beta_initial: float = 0.1
    beta_final: float = 10.0
    schedule: str = "geometric"

    def __post_init__(self):
        if self.schedule != "geometric":
            raise ValueError(f"unsupported schedule {self.schedule!r}")
        if not 0.0 < self.beta_initial < self.beta_final:
            raise ValueError("need beta_final > beta_initial > 0")
        if self.n_sweeps < 1:
            raise ValueError("n_sweeps must be >= 1")

    def betas(self) -> np.ndarray:
        return np.geomspace(self.beta_initial, self.beta_final, self.n_sweeps)


@dataclass(frozen=True)
class CycleRecord:
    cycle: int                  # 1-based
    atom_count: int
    cost: float | None          # None when the cycle produced no scored bitstring
    best_cost: float | None
    bits: np.ndarray | None = None


@dataclass
class SolveTrace:
    solver: str
    seed: int
    n_cycles: int = 0
    records: list[CycleRecord] = field(default_factory=list)
    best_bits: np.ndarray | None = None
    best_cost: float = np.inf
    raw: list | None = None     # solver-specific per-cycle payloads (e.g. cluster decompositions)

    def add(self, atom_count: int, cost: float | None, bits=None, keep_bits: bool = False) -> None:
        self.n_cycles += 1
        if cost is not None and cost < self.best_cost:
            self.best_cost = float(cost)
            self.best_bits = np.asarray(bits).copy()
        best = self.best_cost if np.isfinite(self.best_cost) else None
        self.records.append(CycleRecord(
            cycle=self.n_cycles, atom_count=atom_count, cost=cost, best_cost=best,
            bits=np.asarray(bits).copy() if (keep_bits and bits is not None) else None,
        ))

    def best_cost_series(self, length: int | None = None) -> np.ndarray:
        """Dense best-so-far costs per cycle (NaN before the first score)."""
        length = self.n_cycles if length is None else length
        out = np.full(length, np.nan)
        current = np.nan
        prev_cycle = 0
        for rec in self.records:
            if rec.cycle > length:
                break
            out[prev_cycle:rec.cycle] = current
            if rec.best_cost is not None:
                current = rec.best_cost
            out[rec.cycle - 1] = current
            prev_cycle = rec.cycle
        out[prev_cycle:length] = current
        return out

    def gap_series(self, reference_cost: float, length: int | None = None) -> np.ndarray:
        series = self.best_cost_series(length)
        if reference_cost == 0.0:
            raise ValueError("gap undefined: reference cost is zero")
        return np.abs((series - reference_cost) / reference_cost)

    def to_csv(self, path, reference_cost: float | None = None) -> None:
        """CSV schema: cycle, atom_count, cost, best_cost, gap."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["cycle", "atom_count", "cost", "best_cost", "gap"])
            for rec in self.records:
                if reference_cost is not None and rec.best_cost is not None:
                    g = repr(abs((rec.best_cost - reference_cost) / reference_cost))
                else:
                    g = ""
                writer.writerow([
                    rec.cycle, rec.atom_count,
                    "" if rec.cost is None else repr(rec.cost),
                    "" if rec.best_cost is None else repr(rec.best_cost),
                    g,
                ])


def uniform_solve(q: QuboMatrix, n_cycles: int, seed: int) -> SolveTrace:
    """Uniformly sampled bitstrings with replacement, scored directly.

    Only improvement cycles are materialized in the record list so that
    multi-million-cycle baselines stay cheap; n_cycles and the best-cost
    series are unaffected.
    """
    if n_cycles < 1:
        raise ValueError("n_cycles must be >= 1")
    rng = substream(seed, "solvers/uniform")
    trace = SolveTrace(solver="uniform", seed=seed)
    n = q.n
    chunk = 1 << 14
    done = 0
    best = np.inf
    while done < n_cycles:
        take = min(chunk, n_cycles - done)
        bits = rng.integers(0, 2, size=(take, n)).astype(np.float64)
        costs = np.einsum("bi,bi->b", bits @ q.Q, bits)
        running = np.minimum.accumulate(costs)
        prev = np.concatenate(([best], running[:-1]))
        hits = np.nonzero(costs < prev)[0]
        for k in hits:
            trace.n_cycles = done + int(k)
            trace.add(n, float(costs[k]), bits[k])
        best = min(best, float(running[-1]))
        done += take
        trace.n_cycles = done
    return trace


def simulated_annealing(q: QuboMatrix, schedule: SaSchedule, n_restarts: int,
                        seed: int, init: str = "random") -> SolveTrace:
    """Single-bit-flip Metropolis under a geometric inverse-temperature ramp.

    Restarts run as a vectorized batch; one trace record per restart carries
    that restart's best bitstring (re-scored through qubo.cost so reported
    values are free of incremental-delta rounding).
    """
    if n_restarts < 1:
        raise ValueError("n_restarts must be >= 1")
    rng = substream(seed, "solvers/sa")
    n = q.n
    Q = q.Q
    diag = np.diag(Q).copy()
    if init == "random":
        w = rng.integers(0, 2, size=(n_restarts, n)).astype(np.float64)
    elif init == "ones":
        w = np.ones((n_restarts, n))
    else:
        raise ValueError(f"unknown init {init!r}")
    g = w @ Q  # local fields, maintained incrementally
    costs = np.einsum("ri,ri->r", g, w)
    best_costs = costs.copy()
    best_bits = w.copy()

    for beta in schedule.betas():
        u = rng.random(size=(n, n_restarts))
        for k in range(n):
            delta = (1.0 - 2.0 * w[:, k]) * (diag[k] + 2.0 * (g[:, k] - diag[k] * w[:, k]))
            accept = (delta <= 0.0) | (u[k] < np.exp(-beta * np.clip(delta, 0.0, 700.0)))
            if not np.any(accept):
                continue
            rows = np.nonzero(accept)[0]
            signs = 1.0 - 2.0 * w[rows, k]
            g[rows] += signs[:, None] * Q[k][None, :]
            w[rows, k] += signs
            costs[rows] += delta[rows]
            improved = rows[costs[rows] < best_costs[rows]]
            if len(improved):
                best_costs[improved] = costs[improved]
                best_bits[improved] = w[improved]

    trace = SolveTrace(solver="sa", seed=seed)
    for r in range(n_restarts):
        bits = best_bits[r].astype(np.uint8)
        trace.add(n, qubo_mod.cost(q, bits), bits, keep_bits=True)
    return trace


def reference_minimum(q: QuboMatrix, seed: int = 0) -> tuple[np.ndarray, float]:
    """Reference optimum: exhaustive search when enumerable, otherwise the
    best of a simulated-annealing run with a 200k total sweep budget."""
    if q.n <= qubo_mod.BRUTE_FORCE_CAP:
        return qubo_mod.brute_force_min(q)
    n_restarts = 200
    schedule = SaSchedule(n_sweeps=SA_REFERENCE_TOTAL_SWEEPS // n_restarts)
    trace = simulated_annealing(q, schedule, n_restarts, seed)
    return trace.best_bits, trace.best_cost


def qaoa_naive(q: QuboMatrix, atoms: Register, n_outer: int, shots_per_iter: int,
               seed: int, pulses: PulseSequence | None = None,
               sigma: np.ndarray | None = None) -> SolveTrace:
    """Derivative-free tuning of the three segment durations on a fixed register.

    Each outer iteration evolves the register once, draws shots_per_iter
    measurement shots, and scores the candidate durations by the mean cost;
    the incumbent is kept when the perturbed durations do not improve it.
    ``sigma`` maps QUBO variables to atom labels (identity when omitted);
    the register stays fixed across iterations.
    """
    n = q.n
    if atoms.n != n:
        raise ValueError(f"register size {atoms.n} does not match QUBO size {n}")
    if n > STATE_VECTOR_CAP:
        raise ValueError(f"register above the {STATE_VECTOR_CAP}-qubit state-vector cap")
    if pulses is None:
        u = interaction_matrix(atoms)
        u_scale = float(u.max()) if n > 1 else 1.0
        pulses = default_pulses(q, u_scale)
    if sigma is None:
        sigma = np.arange(n)

    rng = substream(seed, "solvers/qaoa")
    durations = np.array([s.duration for s in pulses.segments])
    incumbent = durations.copy()
    incumbent_mean = np.inf
    trace = SolveTrace(solver="qaoa", seed=seed)

    for it in range(n_outer):
        if it == 0:
            candidate = incumbent.copy()
        else:
            candidate = incumbent.copy()
            coord = int(rng.integers(0, len(candidate)))
            factor = float(np.exp(rng.normal(0.0, 0.35)))
            candidate[coord] = np.clip(candidate[coord] * factor,
                                       0.1 * durations[coord], 10.0 * durations[coord])
        state = evolve(atoms, pulses.scaled_durations(candidate), ground_state(n))
        shot_seed = int(rng.integers(0, 2**63 - 1))
        shots = sample(state, shots_per_iter, shot_seed)
        cycle_costs = []
        for row in shots:
            bits = row[sigma]
            c = qubo_mod.cost(q, bits)
            cycle_costs.append(c)
            trace.add(n, c, bits)
        mean_cost = float(np.mean(cycle_costs))
        if mean_cost < incumbent_mean:
            incumbent_mean = mean_cost
            incumbent = candidate
    return trace


def default_pulses(q: QuboMatrix, u_scale: float) -> PulseSequence:
    """Three constant segments (rise, sweep, fall) derived from the QUBO.

    The drive strength matches the nearest-neighbor interaction u_scale and
    the final detuning is set so the diagonal-to-off-diagonal balance of the
    emulated Hamiltonian mirrors that of the normalized QUBO.
    """
    off = q.Q[~np.eye(q.n, dtype=bool)] if q.n > 1 else np.array([1.0])
    moff = float(np.max(np.abs(off)))
    if moff == 0.0:
        moff = 1.0
    mean_diag = float(np.mean(np.diag(q.Q)))
    kappa = u_scale / (2.0 * moff)
    delta_target = float(np.clip(-mean_diag * kappa, 0.1 * u_scale, 1.5 * u_scale))
    omega = u_scale
    unit = 2.0 * np.pi / omega
    return PulseSequence((
        Segment(duration=0.6 * unit, omega=omega, delta=-0.5 * delta_target),
        Segment(duration=1.2 * unit, omega=omega, delta=0.55 * delta_target),
        Segment(duration=0.6 * unit, omega=0.45 * omega, delta=delta_target),
    ))


# ---------------------------------------------------------------------------
# MPS imaginary-time optimizer
# ---------------------------------------------------------------------------

@dataclass
class MpsState:
    """Matrix product state over N binary sites: tensors of shape (l, 2, r)."""

    tensors: list[np.ndarray]
    chi: int
    tau: float

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    def to_vector(self) -> np.ndarray:
        """Dense amplitudes (small N only)."""
        acc = self.tensors[0]
        for t in self.tensors[1:]:
            acc = np.tensordot(acc, t, axes=([acc.ndim - 1], [0]))
        vec = acc.reshape(-1)
        return vec

    def norm(self) -> float:
        env = np.ones((1, 1))
        for t in self.tensors:
            env = np.einsum("ab,aic,bid->cd", env, t.conj(), t)
        return float(np.sqrt(abs(env[0, 0])))


def uniform_mps(n: int, chi: int, tau: float) -> MpsState:
    amp = 1.0 / np.sqrt(2.0)
    return MpsState([np.array([[[amp], [amp]]], dtype=np.float64).reshape(1, 2, 1).copy()
                     for _ in range(n)], chi=chi, tau=tau)


def _apply_pair_gate(state: MpsState, site: int, gate_diag: np.ndarray,
                     do_swap: bool, absorb: str = "right") -> None:
    """Apply a diagonal two-site gate (optionally followed by SWAP) at
    (site, site+1), truncate to chi, and absorb the singular values toward
    the direction the sweep is moving."""
    a, b = state.tensors[site], state.tensors[site + 1]
    theta = np.tensordot(a, b, axes=([2], [0]))  # (l, 2, 2, r)
    theta = theta * gate_diag[None, :, :, None]
    if do_swap:
        theta = theta.transpose(0, 2, 1, 3)
    l, _, _, r = theta.shape
    mat = theta.reshape(l * 2, 2 * r)
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    keep = min(state.chi, int(np.sum(s > s[0] * 1e-14)) or 1)
    u, s, vh = u[:, :keep], s[:keep], vh[:keep]
    s_norm = np.linalg.norm(s)
    if s_norm == 0.0 or not np.isfinite(s_norm):
        raise FloatingPointError("MPS norm underflow; retry with a smaller tau")
    s = s / s_norm
    if absorb == "right":
        state.tensors[site] = u.reshape(l, 2, keep)
        state.tensors[site + 1] = (s[:, None] * vh).reshape(keep, 2, r)
    else:
        state.tensors[site] = (u * s[None, :]).reshape(l, 2, keep)
        state.tensors[site + 1] = vh.reshape(keep, 2, r)


def _apply_site_factors(state: MpsState, site: int, f0: float, f1: float) -> None:
    t = state.tensors[site].copy()
    t[:, 0, :] *= f0
    t[:, 1, :] *= f1
    scale = max(abs(f0), abs(f1))
    if scale > 0:
        t /= scale
    state.tensors[site] = t


def _greedy_readout(state: MpsState) -> np.ndarray:
    """Per-site greedy maximization of amplitude magnitude, left to right
    against right-canonical environments."""
    n = state.n_sites
    tensors = [t.copy() for t in state.tensors]
    for i in range(n - 1, 0, -1):  # right-canonicalize
        t = tensors[i]
        l, d, r = t.shape
        mat = t.reshape(l, d * r)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        tensors[i] = vh.reshape(len(s), d, r)
        tensors[i - 1] = np.tensordot(tensors[i - 1], u * s[None, :], axes=([2], [0]))
    bits = np.zeros(n, dtype=np.uint8)
    env = np.ones(1)
    for i in range(n):
        v0 = env @ tensors[i][:, 0, :]
        v1 = env @ tensors[i][:, 1, :]
        n0, n1 = np.linalg.norm(v0), np.linalg.norm(v1)
        bits[i] = 1 if n1 > n0 else 0
        chosen = v1 if bits[i] else v0
        norm = n1 if bits[i] else n0
        env = chosen / norm if norm > 0 else chosen
    return bits


def _local_descent(q: QuboMatrix, bits: np.ndarray) -> tuple[np.ndarray, float]:
    w = bits.astype(np.float64)
    g = q.Q @ w
    diag = np.diag(q.Q)
    current = float(w @ g)
    improved = True
    while improved:
        improved = False
        deltas = (1.0 - 2.0 * w) * (diag + 2.0 * (g - diag * w))
        k = int(np.argmin(deltas))
        if deltas[k] < -1e-15:
            sign = 1.0 - 2.0 * w[k]
            g = g + sign * q.Q[k]
            w[k] += sign
            current += deltas[k]
            improved = True
    out = w.astype(np.uint8)
    return out, qubo_mod.cost(q, out)


def tebd_solve(q: QuboMatrix, chi: int, tau: float, n_steps: int) -> tuple[np.ndarray, SolveTrace]:
    """Imaginary-time evolution of the diagonal cost Hamiltonian on an MPS.

    Every pair term is applied exactly once per step through an odd-even
    transposition (swap) network, which brings each variable pair adjacent
    exactly once per pass; single-bit terms act as cheap site factors.  All
    gates are diagonal, so amplitudes after k steps are proportional to
    exp(-k tau H(w)) up to truncation.  Readout is a greedy per-site
    amplitude maximization followed by single-bit-flip descent on the cost.
    """
    if chi < 2:
        raise ValueError("chi must be >= 2")
    if tau <= 0:
        raise ValueError("tau must be > 0")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    n = q.n
    trace = SolveTrace(solver="tebd", seed=0)
    if n == 1:
        bits = np.array([1 if q.Q[0, 0] < 0 else 0], dtype=np.uint8)
        trace.add(1, qubo_mod.cost(q, bits), bits, keep_bits=True)
        return bits, trace

    state = uniform_mps(n, chi, tau)
    perm = np.arange(n)  # perm[site] = variable currently held at site
    best_bits = None
    for _ in range(n_steps):
        for site in range(n):
            var = perm[site]
            f1 = float(np.exp(-tau * q.Q[var, var]))
            _apply_site_factors(state, site, 1.0, f1)
        for rnd in range(n):
            if rnd % 2 == 0:
                sweep = range(0, n - 1, 2)
                absorb = "right"
            else:
                top = n - 2 if (n - 2) % 2 == 1 else n - 3
                sweep = range(top, 0, -2)
                absorb = "left"
            for site in sweep:
                u_var, v_var = perm[site], perm[site + 1]
                coupling = 2.0 * q.Q[u_var, v_var]
                g11 = float(np.exp(-tau * coupling))
                gate = np.array([[1.0, 1.0], [1.0, g11]])
                gate = gate / gate.max()
                _apply_pair_gate(state, site, gate, do_swap=True, absorb=absorb)
                perm[site], perm[site + 1] = perm[site + 1], perm[site]
        site_bits = _greedy_readout(state)
        bits = np.empty(n, dtype=np.uint8)
        bits[perm] = site_bits
        bits, c = _local_descent(q, bits)
        trace.add(n, c, bits, keep_bits=True)
        best_bits = trace.best_bits
    return best_bits, trace
