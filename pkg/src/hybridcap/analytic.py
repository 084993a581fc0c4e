"""Closed-form strategy probabilities, the capacity upper bound, and its limits.

Two formula variants are provided for the finite-N probabilities:

``as-printed``
    The expressions exactly as published, typos included.
``event-consistent``
    Each expression equals the probability of the event it describes
    (the literal classifier in :mod:`hybridcap.montecarlo`). Default.

The N -> infinity limits come in three modes: ``as-printed`` (published
closed form), ``derived`` (limit of the as-printed finite-N formulas; differs
only in the exponent of the S8 term) and ``event-consistent`` (limit of the
event-consistent finite-N formulas).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.special import gammainc

from .errors import DomainError, FormulaRangeError, OptimizationError
from .mobility import StationaryDistribution
from .model import MIN_XI, GridTopology, RatePair, coefficient_tables

RANGE_TOL = 1e-12
LOG_SPACE_N = 50

PAPER_D_OPT_MU1 = 1.7933
PAPER_MU_MAX_MU1 = 0.1942


class Variant(str, Enum):
    AS_PRINTED = "as-printed"
    EVENT_CONSISTENT = "event-consistent"


class LimitMode(str, Enum):
    AS_PRINTED = "as-printed"
    DERIVED = "derived"
    EVENT_CONSISTENT = "event-consistent"


P_NAMES = tuple(f"p{m}" for m in range(1, 9))
Q_NAMES = ("q1", "q2")


@dataclass(frozen=True, eq=False)
class StrategyProbabilities:
    """``p[m-1]`` is p_m for SR cells, ``q[m-1]`` is q_m for non-SR cells."""

    p: np.ndarray
    q: np.ndarray
    variant: Variant = Variant.EVENT_CONSISTENT

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if p.shape != (8,) or q.shape != (2,):
            raise DomainError("expected 8 p-entries and 2 q-entries", field="probs")
        if np.any(p < 0) or np.any(p > 1) or np.any(q < 0) or np.any(q > 1):
            raise DomainError("probabilities must lie in [0, 1]", field="probs")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "variant", Variant(self.variant))

    def as_dict(self) -> dict:
        out = dict(zip(P_NAMES, map(float, self.p)))
        out.update(zip(Q_NAMES, map(float, self.q)))
        return out

    @classmethod
    def from_entries(cls, variant=Variant.EVENT_CONSISTENT, **entries) -> "StrategyProbabilities":
        p = [entries.get(name, 0.0) for name in P_NAMES]
        q = [entries.get(name, 0.0) for name in Q_NAMES]
        return cls(np.array(p), np.array(q), variant)


@dataclass(frozen=True)
class CapacityReport:
    mu: float
    sr_contribution: float
    non_sr_contribution: float
    C: int
    N: Optional[int]
    A: int
    d: float
    r1: float
    r2: float
    variant: str

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LimitParams:
    d: float
    eta: float
    xi: float
    r1: float = 1.0
    limit_mode: LimitMode = LimitMode.AS_PRINTED

    def __post_init__(self):
        if not self.d > 0:
            raise DomainError(f"density must be positive, got {self.d}", field="d")
        if not 0 <= self.eta <= 1:
            raise DomainError(f"coverage ratio must lie in [0, 1], got {self.eta}", field="eta")
        if not self.xi >= MIN_XI:
            raise DomainError(f"rate ratio must be >= 2, got {self.xi}", field="xi")
        if not self.r1 > 0:
            raise DomainError(f"r1 must be positive, got {self.r1}", field="r1")
        object.__setattr__(self, "limit_mode", LimitMode(self.limit_mode))


# --------------------------------------------------------------------------
# numerics


def _pow1m(x: float, k: float) -> float:
    """``(1 - x) ** k``; log space for large exponents."""
    if k == 0:
        return 1.0
    if k > LOG_SPACE_N:
        if x >= 1.0:
            return 0.0
        return math.exp(k * math.log1p(-x))
    return max(1.0 - x, 0.0) ** k


def _one_minus_pow1m(x: float, k: float) -> float:
    """``1 - (1 - x) ** k`` without cancellation for small ``x``."""
    if k > LOG_SPACE_N and x < 1.0:
        return -math.expm1(k * math.log1p(-x))
    return 1.0 - _pow1m(x, k)


def _at_least_two(pc: float, N: int) -> float:
    """P(Binomial(N, pc) >= 2)."""
    return 1.0 - _pow1m(pc, N) - N * pc * _pow1m(pc, N - 1)


def _checked(value: float, name: str) -> float:
    if not (-RANGE_TOL <= value <= 1.0 + RANGE_TOL):
        raise FormulaRangeError(f"{name} = {value!r} lies outside [0, 1]")
    return min(max(value, 0.0), 1.0)


def _check_counts(C: int, N: int, A: int) -> None:
    if C < 1:
        raise DomainError(f"cell count must be >= 1, got {C}", field="C")
    if N < 2 or N % 2:
        raise DomainError(f"node count must be even and >= 2, got {N}", field="N")
    if not 0 <= A <= C:
        raise DomainError(f"SR size must lie in [0, C={C}], got {A}", field="A")


# --------------------------------------------------------------------------
# finite-N strategy probabilities


def strategy_probs_uniform(C: int, N: int, A: int, variant=Variant.EVENT_CONSISTENT) -> StrategyProbabilities:
    """Strategy probabilities when every cell has stationary mass 1/C."""
    variant = Variant(variant)
    _check_counts(C, N, A)
    p = np.zeros(8)
    q = np.zeros(2)
    inv = 1.0 / C
    outside = 1.0 - A / C  # mass outside the SR
    multi = _at_least_two(inv, N)
    if A > 0:
        p5 = _one_minus_pow1m(inv * inv, N / 2)
        if N >= 4:
            p8 = N * (N - 2) / (2 * C * C) * outside**2 * _pow1m(inv * inv + 2 * inv * outside, N / 2 - 2)
        else:
            p8 = 0.0
        p7 = multi - p5 - p8
        p3 = (N / C) * ((A - 1) / C) * _pow1m(inv, N - 2)
        if variant is Variant.AS_PRINTED:
            p4 = (N / C) * ((A - 1) / C) * (_pow1m(inv, N - 2) - _pow1m((A - 1) / C, N - 2))
        else:
            p4 = (N / C) * outside * (_pow1m(inv, N - 2) - _pow1m(A / C, N - 2))
        for m, value in ((3, p3), (4, p4), (5, p5), (7, p7), (8, p8)):
            p[m - 1] = _checked(value, f"p{m}")
    if A < C:
        q1 = _one_minus_pow1m(inv * inv, N / 2)
        q[0] = _checked(q1, "q1")
        q[1] = _checked(multi - q1, "q2")
    return StrategyProbabilities(p, q, variant)


def sr_cell_probs(pc: float, pB: float, N: int, variant=Variant.EVENT_CONSISTENT) -> dict:
    """Event probabilities for one SR cell with mass ``pc`` and ``pB = pi(SR) - pc``."""
    variant = Variant(variant)
    out_mass = max(1.0 - pc - pB, 0.0)
    p5 = _one_minus_pow1m(pc * pc, N / 2)
    if N >= 4:
        # each of the two qualifying pairs: one node in c, partner outside SR
        pair_factor = pB * pB if variant is Variant.AS_PRINTED else out_mass * out_mass
        rest = _pow1m(pc * pc + 2 * pc * out_mass, N / 2 - 2)
        p8 = N * (N - 2) / 2 * pc * pc * pair_factor * rest
    else:
        p8 = 0.0
    p7 = _at_least_two(pc, N) - p5 - p8
    p3 = N * pc * pB * _pow1m(pc, N - 2)
    tail = pB if variant is Variant.AS_PRINTED else pc + pB
    p4 = N * pc * out_mass * (_pow1m(pc, N - 2) - _pow1m(tail, N - 2))
    return {"p3": p3, "p4": p4, "p5": p5, "p7": p7, "p8": p8}


def non_sr_cell_probs(pc: float, N: int) -> dict:
    q1 = _one_minus_pow1m(pc * pc, N / 2)
    return {"q1": q1, "q2": _at_least_two(pc, N) - q1}


def strategy_probs_general(
    pi: StationaryDistribution, topology: GridTopology, N: int, variant=Variant.EVENT_CONSISTENT
) -> StrategyProbabilities:
    """Strategy probabilities for an arbitrary stationary law.

    Per-cell event probabilities are averaged over the SR cells (p) and the
    non-SR cells (q).
    """
    variant = Variant(variant)
    pi_vec = pi.pi if isinstance(pi, StationaryDistribution) else np.asarray(pi, dtype=float)
    if pi_vec.size != topology.C:
        raise DomainError(
            f"pi has {pi_vec.size} entries but the grid has {topology.C} cells", field="pi"
        )
    _check_counts(topology.C, N, topology.A)
    mask = topology.sr_mask
    sr_mass = float(pi_vec[mask].sum())
    p = np.zeros(8)
    q = np.zeros(2)
    if topology.A:
        acc = dict.fromkeys(("p3", "p4", "p5", "p7", "p8"), 0.0)
        for c in np.flatnonzero(mask):
            pc = float(pi_vec[c])
            for name, value in sr_cell_probs(pc, sr_mass - pc, N, variant).items():
                acc[name] += value
        for name, value in acc.items():
            p[int(name[1]) - 1] = _checked(value / topology.A, name)
    n_out = topology.C - topology.A
    if n_out:
        acc = {"q1": 0.0, "q2": 0.0}
        for c in np.flatnonzero(~mask):
            for name, value in non_sr_cell_probs(float(pi_vec[c]), N).items():
                acc[name] += value
        for name, value in acc.items():
            q[int(name[1]) - 1] = _checked(value / n_out, name)
    return StrategyProbabilities(p, q, variant)


# --------------------------------------------------------------------------
# capacity bound


def capacity_bound(
    probs: StrategyProbabilities, rates: RatePair, C: int, A: int, d: float, N: Optional[int] = None
) -> CapacityReport:
    """Per-node capacity upper bound in packets/slot."""
    if not d > 0:
        raise DomainError(f"density must be positive, got {d}", field="d")
    if C < 1 or not 0 <= A <= C:
        raise DomainError(f"need C >= 1 and 0 <= A <= C, got C={C}, A={A}", field="A")
    alpha, beta = coefficient_tables(rates)
    sr = (A / C) * float(alpha[1:] @ probs.p) / (2 * d)
    non_sr = ((C - A) / C) * float(beta[1:] @ probs.q) / (2 * d)
    return CapacityReport(
        mu=sr + non_sr,
        sr_contribution=sr,
        non_sr_contribution=non_sr,
        C=C,
        N=N,
        A=A,
        d=float(d),
        r1=rates.r1,
        r2=rates.r2,
        variant=probs.variant.value,
    )


def uniform_bound(C: int, N: int, A: int, rates: RatePair, variant=Variant.EVENT_CONSISTENT):
    """Convenience: uniform-stationary probabilities plus the bound."""
    probs = strategy_probs_uniform(C, N, A, variant)
    return probs, capacity_bound(probs, rates, C, A, N / C, N=N)


# --------------------------------------------------------------------------
# N -> infinity limits


def _encounter(d: float) -> float:
    """``1 - e^-d - d e^-d``, i.e. P(Poisson(d) >= 2)."""
    return float(gammainc(2, d))


def mu0(d: float, r1: float = 1.0) -> float:
    """Limiting per-node capacity of the pure ad hoc network."""
    if not d > 0:
        raise DomainError(f"density must be positive, got {d}", field="d")
    return r1 / d * (0.5 * _encounter(d))


def mu1_limit(d: float, r1: float = 1.0) -> float:
    """Limit with a fixed number of SR cells; the base station becomes negligible."""
    return mu0(d, r1)


def mu2_limit(params: LimitParams) -> float:
    """Limit when the SR grows in proportion to the grid (coverage ``eta``)."""
    d, eta, xi = params.d, params.eta, params.xi
    f = _encounter(d)
    e = math.exp(-d)
    mode = params.limit_mode
    s8_exp = 2.0 if mode is LimitMode.AS_PRINTED else 1.0
    s8 = eta / (4 * xi) * d * d * (1 - eta) ** 2 * math.exp(-s8_exp * d * (1 - eta))
    if mode is LimitMode.EVENT_CONSISTENT:
        bs = d * eta * eta * e / xi + d * eta * (1 - eta) * e / (2 * xi)
    else:
        bs = 3 / (2 * xi) * d * eta * eta * e
    # eta = 0 makes every added term an exact zero, so this reduces to mu0 bit-for-bit
    return params.r1 / d * ((eta / xi + 0.5) * f + bs - s8)


def delta_mu(params: LimitParams) -> float:
    """Capacity gain contributed by the base station, ``mu2 - mu0``."""
    return mu2_limit(params) - mu0(params.d, params.r1)


def delta_mu_closed_form(params: LimitParams) -> float:
    """The gain evaluated directly from its own closed form."""
    d, eta, xi = params.d, params.eta, params.xi
    f = 1 - math.exp(-d) - d * math.exp(-d)
    if params.limit_mode is LimitMode.EVENT_CONSISTENT:
        bracket = (
            eta / xi * f
            + d * eta**2 * math.exp(-d) / xi
            + d * eta * (1 - eta) * math.exp(-d) / (2 * xi)
            - eta / (4 * xi) * d**2 * (1 - eta) ** 2 * math.exp(-d * (1 - eta))
        )
    else:
        s8_exp = 2.0 if params.limit_mode is LimitMode.AS_PRINTED else 1.0
        bracket = (
            eta / xi * f
            + 3 / (2 * xi) * d * eta**2 * math.exp(-d)
            - eta / (4 * xi) * d**2 * (1 - eta) ** 2 * math.exp(-s8_exp * d * (1 - eta))
        )
    return params.r1 / d * bracket


# --------------------------------------------------------------------------
# optimisation


@dataclass(frozen=True)
class DensityOptimum:
    objective: str
    d_opt: float
    mu_max: float
    stationarity_residual: float
    at_boundary: bool


def mu1_stationarity(d: float) -> float:
    """``|e^-d (d^2 + d + 1) - 1|``; zero at the maximiser of mu1."""
    return abs(math.exp(-d) * (d * d + d + 1) - 1)


_INVPHI = (math.sqrt(5) - 1) / 2


def golden_section_max(fn: Callable[[float], float], lo: float, hi: float, tol: float) -> float:
    """Maximise a unimodal ``fn`` on ``[lo, hi]``; returns the argmax.

    Raises :class:`OptimizationError` when an interior probe falls below both
    bracket endpoints, which no unimodal function allows.
    """
    if not 0 < lo < hi:
        raise DomainError(f"need 0 < d_lo < d_hi, got [{lo}, {hi}]", field="bracket")
    if not tol > 0:
        raise DomainError(f"tolerance must be positive, got {tol}", field="tol")
    a, b = lo, hi
    fa, fb = fn(a), fn(b)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        floor = min(fa, fb)
        if fc < floor or fd < floor:
            raise OptimizationError(
                f"objective is not unimodal on [{lo}, {hi}]: interior value below both endpoints near d={c if fc < floor else d:.6g}"
            )
        if fc > fd:
            b, fb = d, fd
            d, fd = c, fc
            c = b - _INVPHI * (b - a)
            fc = fn(c)
        else:
            a, fa = c, fc
            c, fc = d, fd
            d = a + _INVPHI * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


def optimal_density(
    objective: str = "mu1",
    d_lo: float = 0.5,
    d_hi: float = 5.0,
    tolerance: float = 1e-6,
    r1: float = 1.0,
    eta: float = 0.0,
    xi: float = 2.0,
    limit_mode=LimitMode.AS_PRINTED,
) -> DensityOptimum:
    """Density maximising the limiting per-node capacity.

    ``objective`` is ``"mu1"`` or ``"mu2"`` (the latter at fixed ``eta``, ``xi``).
    For mu2 the stationarity residual is the magnitude of a central-difference
    derivative.
    """
    if objective == "mu1":
        fn = lambda d: mu1_limit(d, r1)  # noqa: E731
    elif objective == "mu2":
        LimitParams(d_lo, eta, xi, r1, limit_mode)  # validate once
        fn = lambda d: mu2_limit(LimitParams(d, eta, xi, r1, limit_mode))  # noqa: E731
    else:
        raise DomainError(f"unknown objective {objective!r}", field="objective")
    d_opt = golden_section_max(fn, d_lo, d_hi, tolerance)
    if objective == "mu1":
        residual = mu1_stationarity(d_opt)
    else:
        h = 1e-5 * max(d_opt, 1.0)
        residual = abs(fn(d_opt + h) - fn(d_opt - h)) / (2 * h)
    at_boundary = min(d_opt - d_lo, d_hi - d_opt) <= 2 * tolerance
    return DensityOptimum(objective, d_opt, fn(d_opt), residual, at_boundary)


@dataclass(frozen=True)
class GridOptimum:
    eta: float
    xi: float
    value: float


def utility_grid_search(
    utility: Callable[[float, float], float], eta_steps: int, xi_max: float, xi_steps: int
) -> GridOptimum:
    """Exhaustive search of ``utility(eta, xi)`` over ``eta in {1/n, ..., 1}``
    and ``xi in linspace(2, xi_max, xi_steps)``.

    Ties go to the smaller ``eta``, then the smaller ``xi``.
    """
    if eta_steps < 2 or xi_steps < 2:
        raise DomainError("grid needs at least 2 steps per axis", field="steps")
    if not xi_max > MIN_XI:
        raise DomainError(f"xi_max must exceed 2, got {xi_max}", field="xi_max")
    etas = np.arange(1, eta_steps + 1) / eta_steps
    xis = np.linspace(MIN_XI, xi_max, xi_steps)
    best = None
    for eta in etas:
        for xi in xis:
            value = float(utility(float(eta), float(xi)))
            if best is None or value > best.value:
                best = GridOptimum(float(eta), float(xi), value)
    return best


def gain_utility(d: float, r1: float = 1.0, cost: float = 0.0, limit_mode=LimitMode.AS_PRINTED):
    """Built-in utility ``delta_mu(eta, xi) - cost * eta`` at density ``d``."""

    def utility(eta: float, xi: float) -> float:
        return delta_mu(LimitParams(d, eta, xi, r1, limit_mode)) - cost * eta

    return utility


# --------------------------------------------------------------------------
# finite-N vs limit


@dataclass(frozen=True)
class ConvergenceRow:
    N: int
    C: int
    A: int
    mu_finite: float
    mu_limit: float
    gap: float
    relative_gap: float


def finite_to_limit_check(
    d: float,
    eta: float,
    xi: float,
    N_sequence: Iterable[int],
    r1: float = 1.0,
    variant=Variant.AS_PRINTED,
) -> list[ConvergenceRow]:
    """Finite-N uniform bound against its N -> infinity limit.

    The as-printed formulas are compared with the ``derived`` limit and the
    event-consistent ones with the ``event-consistent`` limit.
    """
    variant = Variant(variant)
    mode = LimitMode.DERIVED if variant is Variant.AS_PRINTED else LimitMode.EVENT_CONSISTENT
    limit = mu2_limit(LimitParams(d, eta, xi, r1, mode))
    rates = RatePair.from_xi(r1, xi)
    rows = []
    for N in N_sequence:
        N = int(N)
        C = int(round(N / d))
        A = int(round(eta * C))
        if C < 1 or A > C:
            raise DomainError(f"rounding gives C={C}, A={A} for N={N}", field="N_sequence")
        _, report = uniform_bound(C, N, A, rates, variant)
        gap = abs(report.mu - limit)
        rows.append(ConvergenceRow(N, C, A, report.mu, limit, gap, gap / limit if limit else math.inf))
    return rows


def limit_table(params: LimitParams) -> dict:
    """All four limits at one point."""
    return {
        "mu0": mu0(params.d, params.r1),
        "mu1": mu1_limit(params.d, params.r1),
        "mu2": mu2_limit(params),
        "delta_mu": delta_mu(params),
    }


def sweep_values(lo: float, hi: float, steps: int) -> Sequence[float]:
    if steps < 1:
        raise DomainError(f"steps must be >= 1, got {steps}", field="steps")
    if steps == 1:
        return [float(lo)]
    return [float(v) for v in np.linspace(lo, hi, steps)]
