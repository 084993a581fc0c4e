import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hybridcap.errors import DomainError, InvalidTopologyError
from hybridcap.model import (
    FlowPairing,
    ModelParams,
    RatePair,
    StrategyKind,
    build_topology,
    priority_order,
    strategy_coefficient,
)


def test_topology_block_of_five():
    t = build_topology(3, 3, 5)
    assert (t.C, t.A) == (9, 5)
    assert t.sr_cells == frozenset(range(5))


def test_topology_empty_sr():
    t = build_topology(2, 2, [])
    assert (t.C, t.A) == (4, 0)


def test_topology_single_cell():
    t = build_topology(1, 1, [0])
    assert (t.C, t.A) == (1, 1)
    assert t.in_sr(0)


def test_topology_arbitrary_shape():
    t = build_topology(4, 3, [0, 5, 11])
    assert t.A == 3
    assert t.sr_mask.tolist() == [i in (0, 5, 11) for i in range(12)]


@pytest.mark.parametrize(
    "args",
    [(0, 3, []), (3, 0, []), (2, 2, [0, 0]), (2, 2, [4]), (2, 2, [-1]), (2, 2, 5)],
)
def test_topology_rejects_invalid(args):
    with pytest.raises(InvalidTopologyError):
        build_topology(*args)


def test_row_major_indexing():
    t = build_topology(4, 3, [])
    assert t.coords(6) == (1, 2)
    assert t.index(1, 2) == 6
    assert t.index(-1, 4) == t.index(2, 0) == 8


def test_rate_pair():
    r = RatePair(2.0, 1.0)
    assert r.xi == 2.0
    assert RatePair.from_xi(3.0, 6.0).r2 == 0.5
    with pytest.raises(DomainError):
        RatePair(1.0, 0.6)
    with pytest.raises(DomainError):
        RatePair(0.0, 0.0)


@pytest.mark.parametrize("kind, in_sr, expected", [
    (StrategyKind.S5, True, 6.0),
    (StrategyKind.S0, True, 0.0),
    (StrategyKind.S0, False, 0.0),
    (StrategyKind.S2, False, 2.0),
    (StrategyKind.S1, False, 4.0),
])
def test_strategy_coefficient_examples(kind, in_sr, expected):
    assert strategy_coefficient(kind, RatePair(2.0, 1.0), in_sr) == expected


def test_alpha_table():
    r1, r2 = 5.0, 2.0
    rates = RatePair(r1, r2)
    expected = [0, 2 * r1, r1, 2 * r2, r2, 2 * r1 + 2 * r2, 2 * r1 + r2, r1 + 2 * r2, r1 + r2]
    assert [strategy_coefficient(k, rates, True) for k in StrategyKind] == expected


@pytest.mark.parametrize("kind", [StrategyKind(k) for k in range(3, 9)])
def test_sr_only_strategies_rejected_outside(kind):
    with pytest.raises(DomainError):
        strategy_coefficient(kind, RatePair(2.0, 1.0), False)


def test_priority_orders():
    sr = priority_order(True)
    assert [k.value for k in sr] == [5, 6, 7, 8, 1, 2, 3, 4, 0]
    assert [k.value for k in priority_order(False)] == [1, 2, 0]
    rates = RatePair(2.0, 1.0)
    top = strategy_coefficient(sr[0], rates, True)
    assert all(top >= strategy_coefficient(k, rates, True) for k in StrategyKind)


def _feasible_patterns():
    # f1 (pair in cell) implies f2 (two nodes in cell); f3, f4 independent
    for f1, f2, f3, f4 in itertools.product([False, True], repeat=4):
        if f1 and not f2:
            continue
        yield {
            StrategyKind.S0: True, StrategyKind.S1: f1, StrategyKind.S2: f2,
            StrategyKind.S3: f3, StrategyKind.S4: f4,
            StrategyKind.S5: f1 and f3, StrategyKind.S6: f1 and f4,
            StrategyKind.S7: f2 and f3, StrategyKind.S8: f2 and f4,
        }


@given(r2=st.floats(0.01, 10), xi=st.floats(2, 50))
def test_priority_choice_maximises_coefficient(r2, xi):
    rates = RatePair(xi * r2, r2)
    for feasible in _feasible_patterns():
        chosen = next(k for k in priority_order(True) if feasible[k])
        best = max(strategy_coefficient(k, rates, True) for k, ok in feasible.items() if ok)
        assert strategy_coefficient(chosen, rates, True) == best


@given(c=st.floats(0.01, 100), r2=st.floats(0.01, 10), xi=st.floats(2, 20))
def test_coefficients_linear_in_rates(c, r2, xi):
    rates = RatePair(xi * r2, r2)
    scaled = rates.scaled(c)
    for k in StrategyKind:
        assert strategy_coefficient(k, scaled, True) == pytest.approx(c * strategy_coefficient(k, rates, True))


@given(half=st.integers(1, 500))
def test_partner_involution(half):
    pairing = FlowPairing(2 * half)
    for i in range(pairing.n):
        j = pairing.partner(i)
        assert j != i and pairing.partner(j) == i
    assert pairing.partner(0) == 1 and pairing.partner(1) == 0


@pytest.mark.parametrize("n", [0, 1, 3, 7])
def test_pairing_rejects_odd(n):
    with pytest.raises(DomainError):
        FlowPairing(n)


def test_density_is_exact_rational():
    params = ModelParams(build_topology(3, 1, 0), RatePair(2, 1), FlowPairing(4))
    assert params.d.numerator == 4 and params.d.denominator == 3
