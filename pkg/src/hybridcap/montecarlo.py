"""Stochastic and exhaustive oracles for the strategy probabilities.

Everything here works from node placements alone and never calls the closed
forms in :mod:`hybridcap.analytic`; the two are compared in tests and by the
``simulate`` and ``validate`` commands.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import DomainError, EnumerationGuardError
from .mobility import StationaryDistribution, TransitionMatrix
from .model import FlowPairing, GridTopology, RatePair, StrategyKind, coefficient_tables, priority_order

ENUMERATION_GUARD = 10**7
_BATCH = 20_000


class ClassifierMode(str, Enum):
    LITERAL = "literal"
    OPERATIONAL = "operational"


@dataclass(frozen=True)
class EmpiricalEstimate:
    mean: float
    stderr: float
    samples: int

    @classmethod
    def from_sums(cls, total: float, total_sq: float, n: int) -> "EmpiricalEstimate":
        if n < 1:
            raise DomainError("an estimate needs at least one sample", field="samples")
        mean = total / n
        if n == 1:
            return cls(mean, 0.0, 1)
        var = max(total_sq - total * total / n, 0.0) / (n - 1)
        return cls(mean, math.sqrt(var / n), n)

    @classmethod
    def from_samples(cls, values) -> "EmpiricalEstimate":
        values = np.asarray(values, dtype=float)
        return cls.from_sums(float(values.sum()), float((values**2).sum()), values.size)

    def z_score(self, reference: float) -> float:
        diff = self.mean - reference
        if self.stderr == 0:
            return 0.0 if abs(diff) <= 1e-12 else math.copysign(math.inf, diff)
        return diff / self.stderr


# --------------------------------------------------------------------------
# placements


def _as_pi(pi, C: Optional[int] = None) -> np.ndarray:
    vec = pi.pi if isinstance(pi, StationaryDistribution) else np.asarray(pi, dtype=float)
    if C is not None and vec.size != C:
        raise DomainError(f"pi has {vec.size} entries, expected {C}", field="pi")
    return vec


def sample_placement_iid(pi, N: int, rng: np.random.Generator, slots: Optional[int] = None) -> np.ndarray:
    """Draw node cells i.i.d. from ``pi``.

    Returns shape ``(N,)``, or ``(slots, N)`` when ``slots`` is given.
    """
    if N < 1:
        raise DomainError(f"need at least one node, got {N}", field="N")
    vec = _as_pi(pi)
    shape = (N,) if slots is None else (slots, N)
    return rng.choice(vec.size, size=shape, p=vec)


def step_markov(placement: np.ndarray, P: TransitionMatrix, rng: np.random.Generator) -> np.ndarray:
    """Move every node independently along its row of ``P``."""
    mat = P.P if isinstance(P, TransitionMatrix) else np.asarray(P)
    placement = np.asarray(placement)
    if placement.size and placement.max() >= mat.shape[0]:
        raise DomainError("placement refers to cells outside the transition matrix", field="placement")
    cum = np.cumsum(mat, axis=1)
    u = rng.random(placement.size)
    nxt = (cum[placement] <= u[:, None]).sum(axis=1)
    return np.minimum(nxt, mat.shape[0] - 1)


def markov_trajectory(start: np.ndarray, P: TransitionMatrix, slots: int, rng: np.random.Generator) -> np.ndarray:
    """Placements for ``slots`` consecutive slots after ``start``; shape ``(slots, N)``."""
    out = np.empty((slots, np.asarray(start).size), dtype=np.int64)
    current = np.asarray(start)
    for t in range(slots):
        current = step_markov(current, P, rng)
        out[t] = current
    return out


# --------------------------------------------------------------------------
# classification


def classify_cell(
    cell: int,
    placement,
    pairing: FlowPairing,
    topology: GridTopology,
    mode=ClassifierMode.LITERAL,
) -> StrategyKind:
    """Strategy assigned to one cell for one placement."""
    mode = ClassifierMode(mode)
    placement = [int(x) for x in placement]
    here = [i for i, c in enumerate(placement) if c == cell]
    n = len(here)
    pairs = sum(1 for i in here if i % 2 == 0 and placement[pairing.partner(i)] == cell)

    if not topology.in_sr(cell):
        if pairs:
            return StrategyKind.S1
        return StrategyKind.S2 if n >= 2 else StrategyKind.S0

    partner_cells = [placement[pairing.partner(i)] for i in here]
    to_b = sum(1 for pc in partner_cells if pc != cell and topology.in_sr(pc))
    to_out = sum(1 for pc in partner_cells if not topology.in_sr(pc))
    in_b = sum(1 for c in placement if c != cell and topology.in_sr(c))

    if mode is ClassifierMode.LITERAL:
        if pairs:
            return StrategyKind.S5
        if to_out == 2:
            return StrategyKind.S8
        if n >= 2:
            return StrategyKind.S7
        if n == 1 and to_b == 1:
            return StrategyKind.S3
        if n == 1 and to_out == 1 and in_b >= 1:
            return StrategyKind.S4
        return StrategyKind.S0

    f1 = pairs >= 1
    f2 = n >= 2
    f3 = to_b >= 1
    f4 = to_out >= 1 and in_b >= 1
    feasible = {
        StrategyKind.S0: True,
        StrategyKind.S1: f1,
        StrategyKind.S2: f2,
        StrategyKind.S3: f3,
        StrategyKind.S4: f4,
        StrategyKind.S5: f1 and f3,
        StrategyKind.S6: f1 and f4,
        StrategyKind.S7: f2 and f3,
        StrategyKind.S8: f2 and f4,
    }
    return next(k for k in priority_order(True) if feasible[k])


def cell_features(cells: np.ndarray, sr: np.ndarray) -> dict:
    """Per-(slot, cell) counts for a batch of placements of shape ``(S, N)``.

    Keys: ``n`` nodes in the cell, ``pairs`` complete pairs in the cell,
    ``to_b`` / ``to_out`` nodes whose partner is in another SR cell / outside
    the SR, ``in_b`` nodes in the SR but outside this cell.
    """
    S, N = cells.shape
    C = sr.size
    flat = cells + C * np.arange(S)[:, None]
    size = S * C

    def count(mask=None):
        idx = flat if mask is None else flat[mask]
        return np.bincount(idx.ravel(), minlength=size).reshape(S, C)

    partner_cells = cells[:, np.arange(N) ^ 1]
    partner_sr = sr[partner_cells]
    n = count()
    even = cells[:, 0::2]
    same = even == cells[:, 1::2]
    pairs = np.bincount(
        (even + C * np.arange(S)[:, None])[same], minlength=size
    ).reshape(S, C)
    to_b = count(partner_sr & (partner_cells != cells))
    to_out = count(~partner_sr)
    sr_total = sr[cells].sum(axis=1)
    in_b = sr_total[:, None] - n
    return {"n": n, "pairs": pairs, "to_b": to_b, "to_out": to_out, "in_b": in_b}


def classify_placements(cells: np.ndarray, topology: GridTopology, mode=ClassifierMode.LITERAL) -> np.ndarray:
    """Vectorised :func:`classify_cell` over a batch; returns ``(S, C)`` int8."""
    mode = ClassifierMode(mode)
    cells = np.atleast_2d(np.asarray(cells, dtype=np.int64))
    sr = topology.sr_mask
    F = cell_features(cells, sr)
    n, pairs, to_b, to_out, in_b = F["n"], F["pairs"], F["to_b"], F["to_out"], F["in_b"]

    out = np.zeros(n.shape, dtype=np.int8)
    # non-SR cells
    non = np.zeros(n.shape, dtype=np.int8)
    non[n >= 2] = 2
    non[pairs >= 1] = 1

    sr_s = np.zeros(n.shape, dtype=np.int8)
    if mode is ClassifierMode.LITERAL:
        # later assignments take precedence
        sr_s[(n == 1) & (to_out == 1) & (in_b >= 1)] = 4
        sr_s[(n == 1) & (to_b == 1)] = 3
        sr_s[n >= 2] = 7
        sr_s[(pairs == 0) & (to_out == 2)] = 8
        sr_s[pairs >= 1] = 5
    else:
        f1, f2, f3 = pairs >= 1, n >= 2, to_b >= 1
        f4 = (to_out >= 1) & (in_b >= 1)
        for kind, feasible in (
            (4, f4), (3, f3), (2, f2), (1, f1),
            (8, f2 & f4), (7, f2 & f3), (6, f1 & f4), (5, f1 & f3),
        ):
            sr_s[feasible] = kind
    out[:] = np.where(sr[None, :], sr_s, non)
    return out


# --------------------------------------------------------------------------
# estimation


STAT_NAMES = (
    "p1", "p2", "p3", "p4", "p5", "p6", "p7", "p8", "q1", "q2",
    "multi_sr", "multi_non_sr", "bound",
)


@dataclass(frozen=True)
class StrategyEstimates:
    """Empirical counterparts of the strategy probabilities.

    ``p`` / ``q`` are empty when the topology has no SR / no non-SR cells.
    ``multi`` is the frequency of cells holding at least two nodes (SR and
    non-SR). ``bound`` is the empirical per-node bound when rates were given.
    """

    p: dict
    q: dict
    multi_sr: Optional[EmpiricalEstimate]
    multi_non_sr: Optional[EmpiricalEstimate]
    bound: Optional[EmpiricalEstimate]
    slots: int
    mode: str


def _batch_stats(strat: np.ndarray, n: np.ndarray, sr: np.ndarray, weights: Optional[tuple], N: int) -> np.ndarray:
    """Per-slot statistics in STAT_NAMES order, shape ``(S, 13)``."""
    S = strat.shape[0]
    A = int(sr.sum())
    C = sr.size
    out = np.zeros((S, len(STAT_NAMES)))
    if A:
        s_sr = strat[:, sr]
        for m in range(1, 9):
            out[:, m - 1] = (s_sr == m).sum(axis=1) / A
        out[:, 10] = (n[:, sr] >= 2).sum(axis=1) / A
    if A < C:
        s_non = strat[:, ~sr]
        for m in (1, 2):
            out[:, 7 + m] = (s_non == m).sum(axis=1) / (C - A)
        out[:, 11] = (n[:, ~sr] >= 2).sum(axis=1) / (C - A)
    if weights is not None:
        alpha, beta = weights
        z = np.where(sr[None, :], alpha[strat], beta[np.minimum(strat, 2)])
        out[:, 12] = z.sum(axis=1) / (2 * N)
    return out


def _run_chunk(topology, N, pi_vec, slots, mode, seed_seq, weights, P, warmup, batch_len):
    rng = np.random.default_rng(seed_seq)
    sr = topology.sr_mask
    total = np.zeros(len(STAT_NAMES))
    total_sq = np.zeros(len(STAT_NAMES))
    samples = 0
    if P is None:
        done = 0
        while done < slots:
            S = min(_BATCH, slots - done)
            cells = sample_placement_iid(pi_vec, N, rng, slots=S)
            strat = classify_placements(cells, topology, mode)
            n = cell_features(cells, sr)["n"]
            stats = _batch_stats(strat, n, sr, weights, N)
            total += stats.sum(axis=0)
            total_sq += (stats**2).sum(axis=0)
            samples += S
            done += S
    else:
        # batch means absorb the serial correlation of a single trajectory
        current = sample_placement_iid(pi_vec, N, rng)
        for _ in range(warmup):
            current = step_markov(current, P, rng)
        n_batches = max(1, slots // batch_len)
        for b in range(n_batches):
            S = batch_len if b < n_batches - 1 else slots - batch_len * (n_batches - 1)
            cells = markov_trajectory(current, P, S, rng)
            current = cells[-1]
            strat = classify_placements(cells, topology, mode)
            n = cell_features(cells, sr)["n"]
            mean = _batch_stats(strat, n, sr, weights, N).mean(axis=0)
            total += mean
            total_sq += mean**2
            samples += 1
    return total, total_sq, samples


def estimate_strategy_probs(
    topology: GridTopology,
    pairing: FlowPairing,
    pi,
    slots: int,
    mode=ClassifierMode.LITERAL,
    seed: int = 42,
    rates: Optional[RatePair] = None,
    replications: int = 1,
    workers: int = 1,
    P: Optional[TransitionMatrix] = None,
    warmup: Optional[int] = None,
    batch_len: int = 1000,
) -> StrategyEstimates:
    """Monte Carlo frequencies of every strategy.

    With ``P=None`` a fresh i.i.d. placement is drawn from ``pi`` in every
    slot and each slot is one sample. With a transition matrix, one trajectory
    per replication is followed after ``warmup`` slots (default ``10 * C``)
    and samples are means over ``batch_len`` consecutive slots.

    Slots are split across ``replications`` independent streams spawned from
    ``seed``; results do not depend on ``workers``.
    """
    mode = ClassifierMode(mode)
    if slots < 1:
        raise DomainError(f"slots must be >= 1, got {slots}", field="slots")
    if replications < 1 or replications > slots:
        raise DomainError(f"replications must lie in [1, slots], got {replications}", field="replications")
    pi_vec = _as_pi(pi, topology.C)
    N = pairing.n
    weights = coefficient_tables(rates) if rates is not None else None
    warmup = 10 * topology.C if warmup is None else warmup
    children = np.random.SeedSequence(seed).spawn(replications)
    shares = [slots // replications + (k < slots % replications) for k in range(replications)]
    args = [
        (topology, N, pi_vec, shares[k], mode, children[k], weights, P, warmup, batch_len)
        for k in range(replications)
    ]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda a: _run_chunk(*a), args))
    else:
        results = [_run_chunk(*a) for a in args]
    total = sum(r[0] for r in results)
    total_sq = sum(r[1] for r in results)
    samples = sum(r[2] for r in results)

    est = [EmpiricalEstimate.from_sums(float(t), float(s), samples) for t, s in zip(total, total_sq)]
    named = dict(zip(STAT_NAMES, est))
    has_sr = topology.A > 0
    has_non = topology.A < topology.C
    return StrategyEstimates(
        p={f"p{m}": named[f"p{m}"] for m in range(1, 9)} if has_sr else {},
        q={"q1": named["q1"], "q2": named["q2"]} if has_non else {},
        multi_sr=named["multi_sr"] if has_sr else None,
        multi_non_sr=named["multi_non_sr"] if has_non else None,
        bound=named["bound"] if rates is not None else None,
        slots=slots,
        mode=mode.value,
    )


# --------------------------------------------------------------------------
# exhaustive enumeration


@dataclass(frozen=True)
class ExactProbabilities:
    p: dict
    q: dict
    multi_sr: float
    multi_non_sr: float
    states: int


def enumerate_exact(
    topology: GridTopology,
    pairing: FlowPairing,
    pi,
    mode=ClassifierMode.LITERAL,
    guard: int = ENUMERATION_GUARD,
) -> ExactProbabilities:
    """Exact strategy probabilities by visiting all ``C**N`` placements."""
    mode = ClassifierMode(mode)
    C, N = topology.C, pairing.n
    states = C**N
    if states > guard:
        raise EnumerationGuardError(states, guard)
    pi_vec = _as_pi(pi, C)
    sr = topology.sr_mask
    acc = np.zeros(len(STAT_NAMES))
    powers = C ** np.arange(N, dtype=np.int64)
    for start in range(0, states, _BATCH * 4):
        idx = np.arange(start, min(start + _BATCH * 4, states), dtype=np.int64)
        cells = (idx[:, None] // powers[None, :]) % C
        w = np.prod(pi_vec[cells], axis=1)
        strat = classify_placements(cells, topology, mode)
        n = cell_features(cells, sr)["n"]
        acc += w @ _batch_stats(strat, n, sr, None, N)
    named = dict(zip(STAT_NAMES, map(float, acc)))
    return ExactProbabilities(
        p={f"p{m}": named[f"p{m}"] for m in range(1, 9)} if topology.A else {},
        q={"q1": named["q1"], "q2": named["q2"]} if topology.A < C else {},
        multi_sr=named["multi_sr"],
        multi_non_sr=named["multi_non_sr"],
        states=states,
    )
