"""Random Graph Sampling: solving QUBOs by exploiting stochastic trap loading.

Each cycle loads a triangular trap pattern at probability p, splits the
loaded atoms into non-interacting clusters, evolves every cluster under the
pulse program, measures one shot, and scores the relabeled bitstring against
the QUBO.  Cycles whose atom count differs from the QUBO size are kept for
the sub-size reuse path but not scored directly.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import pdist, squareform

from . import qubo as qubo_mod
from ._rng import substream
from .ising import (C6_DEFAULT, Register, PulseSequence, evolve, ground_state,
                    interaction_matrix, sample)
from .qubo import QuboMatrix
from .solvers import SolveTrace, default_pulses

logger = logging.getLogger(__name__)

DEFAULT_LOADING_P = 0.55
DEFAULT_MAX_CLUSTER = 14
_DIST_TOL = 1e-6


@dataclass(frozen=True)
class TrapPattern:
    """Triangular-lattice trap sites filled ring by ring around the centroid."""

    sites: np.ndarray
    spacing: float
    n_traps: int
    lattice: str = "triangular"

    def __post_init__(self):
        sites = np.asarray(self.sites, dtype=np.float64)
        sites.flags.writeable = False
        object.__setattr__(self, "sites", sites)
        if self.n_traps != sites.shape[0]:
            raise ValueError("n_traps must match the number of sites")


@dataclass(frozen=True)
class LoadingOutcome:
    filled: np.ndarray          # boolean mask over pattern sites
    atoms: Register

    def __post_init__(self):
        if int(np.sum(self.filled)) != self.atoms.n:
            raise ValueError("atom count must equal the number of filled sites")


@dataclass(frozen=True)
class RelabelResult:
    sigma: np.ndarray           # sigma[i] = atom label assigned to variable i
    separation: float
    n_iter_used: int

    def __post_init__(self):
        sig = np.asarray(self.sigma, dtype=np.int64)
        if sorted(sig.tolist()) != list(range(len(sig))):
            raise ValueError("sigma must be a permutation")
        object.__setattr__(self, "sigma", sig)


@dataclass(frozen=True)
class CycleRaw:
    """Per-cycle payload needed by the sub-size reuse path."""

    cycle: int
    cluster_maps: tuple[np.ndarray, ...]   # atom indices of each cluster
    cluster_bits: tuple[np.ndarray, ...]
    positions: np.ndarray                  # loaded atom coordinates


def _triangular_sites(n_sites: int, spacing: float) -> np.ndarray:
    """First n_sites points of a triangular lattice, ordered by distance from
    the center and then by angle (ring-by-ring fill)."""
    radius = 1
    while 1 + 3 * radius * (radius + 1) < n_sites:
        radius += 1
    pts = []
    for qa in range(-radius, radius + 1):
        for ra in range(max(-radius, -qa - radius), min(radius, -qa + radius) + 1):
            x = spacing * (qa + ra / 2.0)
            y = spacing * (ra * math.sqrt(3.0) / 2.0)
            pts.append((x, y))
    pts = np.array(pts)
    dist = np.hypot(pts[:, 0], pts[:, 1])
    angle = np.arctan2(pts[:, 1], pts[:, 0])
    order = np.lexsort((angle, np.round(dist / spacing * 1e9)))
    return pts[order[:n_sites]]


def design_pattern(n_target: int, p: float, spacing: float) -> TrapPattern:
    """Pattern with ceil(n_target / p) traps so typical loadings hold about
    n_target atoms."""
    if not 0.0 < p < 1.0:
        raise ValueError("loading probability must lie in (0, 1)")
    if n_target < 1:
        raise ValueError("n_target must be >= 1")
    n_traps = math.ceil(n_target / p)
    return TrapPattern(sites=_triangular_sites(n_traps, spacing), spacing=spacing, n_traps=n_traps)


def load(pattern: TrapPattern, p: float, seed: int, c6: float = C6_DEFAULT) -> LoadingOutcome:
    """Independent Bernoulli(p) fill of every trap."""
    rng = substream(seed, "rgs/load")
    filled = rng.random(pattern.n_traps) < p
    atoms = Register(positions=pattern.sites[filled], c6=c6)
    return LoadingOutcome(filled=filled, atoms=atoms)


def extract_clusters(outcome: LoadingOutcome, spacing: float) -> list[tuple[Register, np.ndarray]]:
    """Connected components of the graph linking atoms at distance <= spacing.

    Returns (Register, index map) pairs; index maps refer to positions within
    the loaded register and partition it exactly.
    """
    n = outcome.atoms.n
    if n == 0:
        return []
    if n == 1:
        return [(outcome.atoms, np.array([0]))]
    dist = squareform(pdist(outcome.atoms.positions))
    adj = csr_matrix(dist <= spacing + _DIST_TOL)
    n_comp, labels = connected_components(adj, directed=False)
    clusters = []
    for comp in range(n_comp):
        idx = np.nonzero(labels == comp)[0]
        reg = Register(positions=outcome.atoms.positions[idx], c6=outcome.atoms.c6)
        clusters.append((reg, idx))
    clusters.sort(key=lambda pair: int(pair[1][0]))
    return clusters


def _split_oversized(reg: Register, idx: np.ndarray, cap: int):
    """Iteratively drop the weakest-linked atoms of an oversized cluster into
    singleton clusters until the remainder fits the evolution cap."""
    u = interaction_matrix(reg)
    keep = list(range(reg.n))
    dropped = []
    while len(keep) > cap:
        sub = u[np.ix_(keep, keep)]
        weakest = int(np.argmin(sub.sum(axis=1)))
        dropped.append(keep.pop(weakest))
    out = [(Register(reg.positions[keep], c6=reg.c6), idx[keep])]
    for d in sorted(dropped):
        out.append((Register(reg.positions[[d]], c6=reg.c6), idx[[d]]))
    logger.debug("split cluster of %d atoms into %d + %d singletons",
                 reg.n, len(keep), len(dropped))
    return out


def relabel(q: QuboMatrix, atoms: Register, n_iter: int, seed: int) -> RelabelResult:
    """Search for an atom labeling whose interaction matrix best matches Q.

    Both matrices are normalized by their largest absolute off-diagonal
    entry; the candidate set is the identity plus n_iter random permutations
    and the winner minimizes the elementwise upper-triangle mismatch.
    """
    n = q.n
    if atoms.n != n:
        raise ValueError(f"register size {atoms.n} does not match QUBO size {n}")
    if n == 1:
        return RelabelResult(sigma=np.zeros(1, dtype=np.int64), separation=0.0, n_iter_used=0)
    u = interaction_matrix(atoms)
    off_mask = ~np.eye(n, dtype=bool)
    u_max = np.max(np.abs(u[off_mask]))
    q_max = np.max(np.abs(q.Q[off_mask]))
    un = u / (u_max if u_max > 0 else 1.0)
    qn = q.Q / (q_max if q_max > 0 else 1.0)
    iu = np.triu_indices(n, 1)

    rng = substream(seed, "rgs/relabel")
    best_sigma = np.arange(n)
    best_sep = float(np.sum(np.abs(un[iu] - qn[iu])))
    for _ in range(n_iter):
        sigma = rng.permutation(n)
        sep = float(np.sum(np.abs(un[np.ix_(sigma, sigma)][iu] - qn[iu])))
        if sep < best_sep:
            best_sep = sep
            best_sigma = sigma
    return RelabelResult(sigma=best_sigma, separation=best_sep, n_iter_used=n_iter)


def rgs_solve(q: QuboMatrix, pattern: TrapPattern, pulses: PulseSequence,
              n_cycles: int, seed: int, p: float = DEFAULT_LOADING_P,
              max_cluster: int = DEFAULT_MAX_CLUSTER, relabel_iters: int | None = None,
              c6: float = C6_DEFAULT) -> SolveTrace:
    """Run the full sampling pipeline for n_cycles loading/evolve/measure cycles.

    Per cycle: load the pattern, split into clusters, evolve each cluster
    independently, draw one shot, reassemble the register bitstring, relabel
    it into QUBO variable order, and score.  The trace records every cycle
    (cost None when the atom count missed the QUBO size) and keeps raw
    cluster payloads for reuse_subsize.
    """
    if n_cycles < 1:
        raise ValueError("n_cycles must be >= 1")
    if relabel_iters is None:
        relabel_iters = 10 * q.n
    trace = SolveTrace(solver="rgs", seed=seed, raw=[])
    for cycle in range(1, n_cycles + 1):
        load_seed = int(substream(seed, f"rgs/cycle/{cycle}").integers(0, 2**63 - 1))
        outcome = load(pattern, p, load_seed, c6=c6)
        n_atoms = outcome.atoms.n
        if n_atoms == 0:
            trace.add(0, None)
            trace.raw.append(CycleRaw(cycle, (), (), outcome.atoms.positions))
            continue
        clusters = []
        for reg, idx in extract_clusters(outcome, pattern.spacing):
            if reg.n > max_cluster:
                clusters.extend(_split_oversized(reg, idx, max_cluster))
            else:
                clusters.append((reg, idx))
        bits = np.zeros(n_atoms, dtype=np.uint8)
        maps, subbits = [], []
        for k, (reg, idx) in enumerate(clusters):
            state = evolve(reg, pulses, ground_state(reg.n))
            shot_seed = int(substream(seed, f"rgs/shot/{cycle}/{k}").integers(0, 2**63 - 1))
            shot = sample(state, 1, shot_seed)[0]
            bits[idx] = shot
            maps.append(idx)
            subbits.append(shot)
        trace.raw.append(CycleRaw(cycle, tuple(maps), tuple(subbits),
                                  outcome.atoms.positions))
        if n_atoms != q.n:
            trace.add(n_atoms, None)
            continue
        relabel_seed = int(substream(seed, f"rgs/relabel/{cycle}").integers(0, 2**63 - 1))
        result = relabel(q, outcome.atoms, relabel_iters, relabel_seed)
        w = bits[result.sigma]
        trace.add(n_atoms, qubo_mod.cost(q, w), w, keep_bits=True)
    return trace


def reuse_subsize(records: list[CycleRaw], target_n: int) -> list[np.ndarray]:
    """Collect all cluster-restricted bitstrings of exactly target_n bits."""
    out = []
    for rec in records:
        for bits in rec.cluster_bits:
            if len(bits) == target_n:
                out.append(np.asarray(bits, dtype=np.uint8))
    return out
