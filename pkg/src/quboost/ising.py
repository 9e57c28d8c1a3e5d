"""Desk-scale emulation of an analog neutral-atom register.

State vectors live on N <= 22 qubits with qubit 0 as the most significant
bit of the basis index, matching the bitstring convention of the qubo
module.  Atoms interact via the van-der-Waals law U(r) = C6 / r^6 and are
driven by global piecewise-constant Rabi/detuning fields; evolution uses an
adaptive two-pass Lanczos propagator, so memory stays at a few state
vectors even at the size cap.  hbar = 1 throughout; units are micrometers,
rad/s, and seconds.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

STATE_VECTOR_CAP = 22
C6_DEFAULT = 5.42e12  # rad * um^6 / s
SPACING_DEFAULT = 6.0  # um
_CLUSTER_MSG = "route the register through rgs.extract_clusters and evolve clusters independently"


@dataclass(frozen=True)
class Register:
    """Planar atom coordinates (um) plus the interaction coefficient C6."""

    positions: np.ndarray
    c6: float = C6_DEFAULT

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=np.float64))
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError("positions must be an (N, 2) array")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        pos = pos.copy()
        pos.flags.writeable = False
        object.__setattr__(self, "positions", pos)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump({"positions_um": self.positions.tolist(), "c6_rad_um6_per_s": self.c6},
                      fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "Register":
        with open(path) as fh:
            payload = json.load(fh)
        return cls(positions=np.asarray(payload["positions_um"]), c6=payload["c6_rad_um6_per_s"])


@dataclass(frozen=True)
class Segment:
    duration: float  # s
    omega: float     # rad/s
    delta: float     # rad/s

    def __post_init__(self):
        if self.duration < 0 or not np.isfinite(self.duration):
            raise ValueError("segment duration must be finite and >= 0")
        if not (np.isfinite(self.omega) and np.isfinite(self.delta)):
            raise ValueError("segment amplitudes must be finite")


@dataclass(frozen=True)
class PulseSequence:
    segments: tuple[Segment, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def total_duration(self) -> float:
        return sum(s.duration for s in self.segments)

    def scaled_durations(self, durations) -> "PulseSequence":
        if len(durations) != len(self.segments):
            raise ValueError("one duration per segment required")
        return PulseSequence(tuple(
            Segment(duration=float(d), omega=s.omega, delta=s.delta)
            for d, s in zip(durations, self.segments)
        ))

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump({"segments": [[s.duration, s.omega, s.delta] for s in self.segments],
                       "units": {"duration": "s", "omega": "rad/s", "delta": "rad/s"}},
                      fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "PulseSequence":
        with open(path) as fh:
            payload = json.load(fh)
        return cls(tuple(Segment(*row) for row in payload["segments"]))


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.ndim != 1 or amps.size & (amps.size - 1):
            raise ValueError("amplitudes length must be a power of two")
        if abs(np.linalg.norm(amps) - 1.0) > 1e-8:
            raise ValueError("state vector must be normalized (within 1e-8)")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_qubits(self) -> int:
        return int(np.log2(self.amplitudes.size))

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def ground_state(n: int) -> StateVector:
    amps = np.zeros(1 << n, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(amps)


def interaction_matrix(reg: Register) -> np.ndarray:
    """U_ij = C6 / r_ij^6 with zero diagonal."""
    if reg.n == 1:
        return np.zeros((1, 1))
    r = squareform(pdist(reg.positions))
    if np.min(r[np.triu_indices(reg.n, 1)]) <= 0.0:
        raise ValueError("coincident atoms: pairwise distances must be positive")
    with np.errstate(divide="ignore"):
        u = reg.c6 / r**6
    np.fill_diagonal(u, 0.0)
    return u


def _popcount(n: int) -> np.ndarray:
    idx = np.arange(1 << n, dtype=np.uint32)
    v = idx - ((idx >> 1) & 0x55555555)
    v = (v & 0x33333333) + ((v >> 2) & 0x33333333)
    v = (v + (v >> 4)) & 0x0F0F0F0F
    return ((v * 0x01010101) >> 24).astype(np.float64)


def pair_diagonal(u: np.ndarray) -> np.ndarray:
    """Diagonal of (1/2) sum_{i != j} U_ij n_i n_j over all basis states."""
    n = u.shape[0]
    diag = np.zeros((2,) * n)
    for i in range(n):
        for j in range(i + 1, n):
            if u[i, j] == 0.0:
                continue
            sel: list = [slice(None)] * n
            sel[i] = 1
            sel[j] = 1
            diag[tuple(sel)] += u[i, j]
    return diag.reshape(-1)


def apply_hamiltonian(diag: np.ndarray, omega: float, psi: np.ndarray) -> np.ndarray:
    """H |psi> for H = (omega/2) sum_i sigma_x^i + diag(diag)."""
    n = int(np.log2(psi.size))
    out = diag * psi
    if omega != 0.0:
        shape = (2,) * n
        ot = out.reshape(shape)
        pt = psi.reshape(shape)
        half = 0.5 * omega
        for axis in range(n):
            ot += half * np.flip(pt, axis=axis)
    return out


def _expm_tridiag(alphas, betas, dt):
    """exp(-i dt T) e1 for the real symmetric tridiagonal T."""
    if len(alphas) == 1:
        return np.exp(-1j * dt * alphas[0]) * np.ones(1, dtype=np.complex128)
    t = np.diag(np.asarray(alphas))
    off = np.asarray(betas)
    t += np.diag(off, 1) + np.diag(off, -1)
    vals, vecs = np.linalg.eigh(t)
    return vecs @ (np.exp(-1j * dt * vals) * vecs[0, :])


_STORE_BASIS_MAX = 1 << 16


def _krylov_step(diag, omega, psi, dt, tol, m_max=36, depth=0):
    """exp(-i dt H) psi via Lanczos with adaptive time splitting.

    For small state vectors the Krylov basis is kept in memory; above
    _STORE_BASIS_MAX amplitudes a second pass regenerates it, keeping the
    footprint at three vectors even at the qubit cap.
    """
    store = psi.size <= _STORE_BASIS_MAX
    alphas: list[float] = []
    betas: list[float] = []
    basis = [psi] if store else None
    v_prev = None
    v = psi
    u = None
    m = 0
    converged = False
    for j in range(m_max):
        w = apply_hamiltonian(diag, omega, v)
        if v_prev is not None:
            w = w - betas[-1] * v_prev
        alpha = float(np.vdot(v, w).real)
        w = w - alpha * v
        alphas.append(alpha)
        beta = float(np.linalg.norm(w))
        betas.append(beta)
        m = j + 1
        if beta < 1e-14:  # invariant subspace: projection is exact
            u = _expm_tridiag(alphas, betas[: m - 1], dt)
            converged = True
            break
        if m >= 2:
            u = _expm_tridiag(alphas, betas[: m - 1], dt)
            if beta * abs(u[-1]) < tol:
                converged = True
                break
        v_prev = v
        v = w / beta
        if store:
            basis.append(v)

    if not converged:
        if depth > 40:
            raise RuntimeError("Krylov propagator failed to converge")
        half = dt / 2.0
        mid = _krylov_step(diag, omega, psi, half, tol / 2, m_max, depth + 1)
        return _krylov_step(diag, omega, mid, half, tol / 2, m_max, depth + 1)

    if store:
        out = np.zeros_like(psi)
        for k in range(m):
            out += u[k] * basis[k]
        return out

    # second pass: rebuild the basis, accumulating sum_k u_k v_k
    out = np.zeros_like(psi)
    v_prev = None
    v = psi
    for k in range(m):
        out += u[k] * v
        if k == m - 1:
            break
        w = apply_hamiltonian(diag, omega, v)
        if v_prev is not None:
            w = w - betas[k - 1] * v_prev
        w = w - alphas[k] * v
        v_prev = v
        v = w / betas[k]
    return out


def evolve(reg: Register, pulses: PulseSequence, initial: StateVector,
           tol: float = 1e-11) -> StateVector:
    """Integrate the Schrodinger equation through the pulse segments.

    H = sum_i (omega/2 sigma_x_i - delta n_i) + (1/2) sum_{i != j} U_ij n_i n_j
    with global fields held constant within each segment.
    """
    n = reg.n
    if n > STATE_VECTOR_CAP:
        raise ValueError(f"register has {n} atoms, above the {STATE_VECTOR_CAP}-qubit cap; {_CLUSTER_MSG}")
    psi = initial.amplitudes
    if psi.size != 1 << n:
        raise ValueError("initial state dimension does not match register size")
    u = interaction_matrix(reg)
    base_diag = pair_diagonal(u)
    counts = _popcount(n)
    psi = psi.astype(np.complex128, copy=True)
    for seg in pulses.segments:
        if seg.duration == 0.0:
            continue
        diag = base_diag - seg.delta * counts
        psi = _krylov_step(diag, seg.omega, psi, seg.duration, tol)
    return StateVector(psi)


def energy_expectation(reg: Register, omega: float, delta: float, state: StateVector) -> float:
    u = interaction_matrix(reg)
    diag = pair_diagonal(u) - delta * _popcount(reg.n)
    psi = state.amplitudes
    return float(np.vdot(psi, apply_hamiltonian(diag, omega, psi)).real)


def sample(state: StateVector, n_shots: int, seed: int) -> np.ndarray:
    """Projective measurements: (n_shots, N) array of 0/1 rows, i.i.d. from |a_w|^2."""
    probs = np.abs(state.amplitudes) ** 2
    probs = probs / probs.sum()
    rng = np.random.default_rng(seed)
    outcomes = rng.choice(probs.size, size=n_shots, p=probs)
    n = state.n_qubits
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((outcomes[:, None] >> shifts) & 1).astype(np.uint8)
