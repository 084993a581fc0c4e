"""Packet-level two-hop relay simulation.

Each slot every cell runs the strategy chosen by the operational classifier.
The ad hoc part of a strategy moves up to ``r1`` packets between two nodes of
the cell, the base-station part moves up to ``r2`` packets from the cell to a
node in another SR cell. Within a part the policy tries, in order:

1. a source whose destination is reachable sends its own packets directly;
2. a relay whose held packets' destination is reachable delivers them;
3. a source hands packets to a uniformly chosen reachable node, which
   becomes their only relay.

Packets travel at most two hops, so transmissions plus single-hop deliveries
never exceed the strategy's rate coefficient and the delivered rate stays
under the capacity bound for any arrival rate.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from .analytic import CapacityReport, Variant, capacity_bound, strategy_probs_general
from .errors import DomainError
from .mobility import StationaryDistribution, TransitionMatrix
from .model import STRATEGY_COMPONENTS, FlowPairing, GridTopology, RatePair, coefficient_tables
from .montecarlo import (
    ClassifierMode,
    EmpiricalEstimate,
    _as_pi,
    classify_placements,
    markov_trajectory,
    sample_placement_iid,
)

_CHUNK = 50_000
_ADHOC = np.array([STRATEGY_COMPONENTS[k][0] for k in sorted(STRATEGY_COMPONENTS)], dtype=np.int64)
_BS = np.array([STRATEGY_COMPONENTS[k][1] for k in sorted(STRATEGY_COMPONENTS)], dtype=np.int64)

# counters layout
TRANSMISSIONS, DIRECT, RELAYED, ALPHA = range(4)


@dataclass(frozen=True)
class ThroughputReport:
    offered_rate: float
    delivered_rate: EmpiricalEstimate
    bound: float
    slots: int
    undelivered_backlog: int
    transmissions: int
    direct_deliveries: int
    relay_deliveries: int
    coefficient_total: float
    bound_report: Optional[CapacityReport] = None


@numba.njit(cache=True)
def _pick(k):
    return int(np.random.random() * k) if k > 1 else 0


@numba.njit(cache=True)
def _send(t, home, members, lo, hi, cell_of, reach_mask, budget, own_q, relay_q, relay_pool, n_pool, counters):
    """Run one transmission part; ``reach_mask[cell]`` marks cells the sender can reach."""
    N = own_q.size
    cand = np.empty(N, dtype=np.int64)
    # direct delivery of a source's own packets
    k = 0
    for j in range(lo, hi):
        i = members[j]
        if own_q[i] > 0 and reach_mask[cell_of[t, i ^ 1]]:
            cand[k] = i
            k += 1
    if k:
        i = cand[_pick(k)]
        x = min(budget, own_q[i])
        own_q[i] -= x
        counters[TRANSMISSIONS] += x
        counters[DIRECT] += x
        return x
    # second hop of relayed packets
    k = 0
    cand_d = np.empty(N * (hi - lo), dtype=np.int64)
    cand_r = np.empty(N * (hi - lo), dtype=np.int64)
    for j in range(lo, hi):
        r = members[j]
        for dest in range(N):
            if relay_q[r, dest] > 0 and dest != r and reach_mask[cell_of[t, dest]]:
                cand_r[k] = r
                cand_d[k] = dest
                k += 1
    if k:
        c = _pick(k)
        r, dest = cand_r[c], cand_d[c]
        x = min(budget, relay_q[r, dest])
        relay_q[r, dest] -= x
        counters[TRANSMISSIONS] += x
        counters[RELAYED] += x
        return x
    # first hop to a relay; destinations in the home cell wait for an ad hoc slot
    k = 0
    for j in range(lo, hi):
        i = members[j]
        if own_q[i] > 0 and cell_of[t, i ^ 1] != home:
            cand[k] = i
            k += 1
    if k == 0:
        return 0
    i = cand[_pick(k)]
    m = 0
    for j in range(n_pool):
        if relay_pool[j] != i:
            m += 1
    if m == 0:
        return 0
    target = _pick(m)
    relay = -1
    m = 0
    for j in range(n_pool):
        if relay_pool[j] != i:
            if m == target:
                relay = relay_pool[j]
                break
            m += 1
    x = min(budget, own_q[i])
    own_q[i] -= x
    relay_q[relay, i ^ 1] += x
    counters[TRANSMISSIONS] += x
    return 0


@numba.njit(cache=True)
def _relay_kernel(cell_of, arrivals, strat, sr, alpha, beta, adhoc, bs, r1, r2, own_q, relay_q, seed, delivered, counters):
    np.random.seed(seed)
    S, N = cell_of.shape
    C = sr.size
    counts = np.zeros(C, dtype=np.int64)
    starts = np.zeros(C + 1, dtype=np.int64)
    members = np.empty(N, dtype=np.int64)
    fill = np.zeros(C, dtype=np.int64)
    same = np.zeros(C, dtype=np.bool_)
    others = np.empty(N, dtype=np.int64)
    b_mask = np.zeros(C, dtype=np.bool_)
    for t in range(S):
        for i in range(N):
            own_q[i] += arrivals[t, i]
        counts[:] = 0
        for i in range(N):
            counts[cell_of[t, i]] += 1
        starts[0] = 0
        for c in range(C):
            starts[c + 1] = starts[c] + counts[c]
        fill[:] = 0
        for i in range(N):
            c = cell_of[t, i]
            members[starts[c] + fill[c]] = i
            fill[c] += 1
        got = 0
        for c in range(C):
            s = strat[t, c]
            lo, hi = starts[c], starts[c + 1]
            if sr[c]:
                counters[ALPHA] += alpha[s]
            else:
                counters[ALPHA] += beta[s]
            if adhoc[s] != 0:
                same[:] = False
                same[c] = True
                got += _send(t, c, members, lo, hi, cell_of, same, r1, own_q, relay_q,
                             members[lo:hi], hi - lo, counters)
            if bs[s] != 0:
                k = 0
                for b in range(C):
                    b_mask[b] = sr[b] and b != c
                    if b_mask[b]:
                        for j in range(starts[b], starts[b + 1]):
                            others[k] = members[j]
                            k += 1
                got += _send(t, c, members, lo, hi, cell_of, b_mask, r2, own_q, relay_q,
                             others, k, counters)
        delivered[t] = got


def _integer_rate(value: float, name: str) -> int:
    if value < 1 or value != int(value):
        raise DomainError(f"relay simulation needs whole packets per slot, got {name}={value}", field=name)
    return int(value)


def run_relay_simulation(
    topology: GridTopology,
    pairing: FlowPairing,
    rates: RatePair,
    pi=None,
    P: Optional[TransitionMatrix] = None,
    lam: float = 0.0,
    a_max: int = 1,
    slots: int = 10_000,
    seed: int = 42,
    n_batches: int = 100,
    variant=Variant.EVENT_CONSISTENT,
) -> ThroughputReport:
    """Simulate two-hop relaying and compare the delivered rate with the bound.

    Arrivals per node and slot are a sum of ``a_max`` Bernoulli(``lam/a_max``)
    draws. Placements are i.i.d. from ``pi`` each slot, or follow the Markov
    chain ``P`` (started from ``pi``) when it is given. The delivered-rate
    standard error comes from ``n_batches`` batch means.
    """
    if lam < 0 or a_max < 1 or slots < 1:
        raise DomainError("need lam >= 0, a_max >= 1 and slots >= 1", field="lambda")
    if lam > a_max:
        raise DomainError(f"lambda={lam} exceeds the per-slot arrival cap a_max={a_max}", field="lambda")
    r1 = _integer_rate(rates.r1, "r1")
    r2 = _integer_rate(rates.r2, "r2")
    C, N = topology.C, pairing.n
    if pi is None:
        pi = StationaryDistribution.uniform(C)
    pi_vec = _as_pi(pi, C)

    rng = np.random.default_rng(seed)
    sr = topology.sr_mask
    alpha, beta = coefficient_tables(rates)
    own_q = np.zeros(N, dtype=np.int64)
    relay_q = np.zeros((N, N), dtype=np.int64)
    counters = np.zeros(4, dtype=np.float64)
    delivered = np.zeros(slots, dtype=np.int64)
    current = sample_placement_iid(pi_vec, N, rng) if P is not None else None
    beta_full = np.zeros(9)
    beta_full[:3] = beta

    done = 0
    while done < slots:
        S = min(_CHUNK, slots - done)
        if P is None:
            cells = sample_placement_iid(pi_vec, N, rng, slots=S)
        else:
            cells = markov_trajectory(current, P, S, rng)
            current = cells[-1]
        arrivals = rng.binomial(a_max, lam / a_max, size=(S, N)) if lam > 0 else np.zeros((S, N), dtype=np.int64)
        strat = classify_placements(cells, topology, ClassifierMode.OPERATIONAL).astype(np.int64)
        kernel_seed = int(rng.integers(2**31 - 1))
        out = np.zeros(S, dtype=np.int64)
        _relay_kernel(
            cells.astype(np.int64), arrivals.astype(np.int64), strat, sr, alpha, beta_full,
            _ADHOC, _BS, r1, r2, own_q, relay_q, kernel_seed, out, counters,
        )
        delivered[done : done + S] = out
        done += S

    per_node = delivered / N
    n_batches = max(1, min(n_batches, slots))
    batch_means = [chunk.mean() for chunk in np.array_split(per_node, n_batches)]
    estimate = EmpiricalEstimate.from_samples(batch_means)
    estimate = EmpiricalEstimate(float(per_node.mean()), estimate.stderr, estimate.samples)

    probs = strategy_probs_general(pi_vec, topology, N, variant)
    report = capacity_bound(probs, rates, C, topology.A, N / C, N=N)
    return ThroughputReport(
        offered_rate=float(lam),
        delivered_rate=estimate,
        bound=report.mu,
        slots=slots,
        undelivered_backlog=int(own_q.sum() + relay_q.sum()),
        transmissions=int(counters[TRANSMISSIONS]),
        direct_deliveries=int(counters[DIRECT]),
        relay_deliveries=int(counters[RELAYED]),
        coefficient_total=float(counters[ALPHA]),
        bound_report=report,
    )

