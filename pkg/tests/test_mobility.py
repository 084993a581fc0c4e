import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridcap.errors import ConfigurationError, ConvergenceError, DomainError
from hybridcap.mobility import (
    NEIGHBOR_OFFSETS,
    StationaryDistribution,
    TransitionMatrix,
    load_transition_matrix,
    neighbor_walk_matrix,
    save_transition_matrix,
    stationarity_residual,
    stationary_distribution,
)
from hybridcap.model import build_topology


def test_three_by_three_has_eight_distinct_neighbours():
    P = neighbor_walk_matrix(build_topology(3, 3)).P
    for row in P:
        assert np.count_nonzero(row) == 8
        assert np.allclose(row[row > 0], 1 / 8)
    assert np.diag(P).sum() == 0


def test_single_cell_walk_is_identity():
    assert neighbor_walk_matrix(build_topology(1, 1)).P.tolist() == [[1.0]]


def test_two_by_two_wrap_multiplicity():
    # tally the 8 offsets modulo 2 by hand
    t = build_topology(2, 2)
    expected = np.zeros((4, 4))
    for cell in range(4):
        r, c = divmod(cell, 2)
        for dr, dc in NEIGHBOR_OFFSETS:
            expected[cell, ((r + dr) % 2) * 2 + (c + dc) % 2] += 1 / 8
    P = neighbor_walk_matrix(t).P
    assert np.allclose(P, expected, atol=1e-15)
    assert P[0].tolist() == [0.0, 0.25, 0.25, 0.5]
    assert np.abs(P.sum(axis=1) - 1).max() <= 1e-12


@settings(max_examples=30, deadline=None)
@given(w=st.integers(1, 7), h=st.integers(1, 7), stay=st.floats(0, 0.95))
def test_walk_doubly_stochastic(w, h, stay):
    P = neighbor_walk_matrix(build_topology(w, h), stay)
    assert P.is_doubly_stochastic()


def test_stay_probability_domain():
    with pytest.raises(DomainError):
        neighbor_walk_matrix(build_topology(2, 2), 1.0)


def test_doubly_stochastic_gives_uniform():
    P = neighbor_walk_matrix(build_topology(3, 3))
    pi = stationary_distribution(P)
    assert np.allclose(pi.pi, 1 / 9, atol=1e-12)


def test_two_state_chain():
    # balance: pi0 * 0.3 = pi1 * 0.6 -> pi = (2/3, 1/3)
    P = TransitionMatrix([[0.7, 0.3], [0.6, 0.4]])
    pi = stationary_distribution(P, tolerance=1e-13)
    assert np.allclose(pi.pi, [2 / 3, 1 / 3], atol=1e-12)
    assert pi.residual <= 1e-13


def test_residual_of_exact_and_wrong_pi():
    P = TransitionMatrix([[0.7, 0.3], [0.6, 0.4]])
    assert stationarity_residual(np.array([2 / 3, 1 / 3]), P) <= 1e-12
    assert stationarity_residual(StationaryDistribution.uniform(2), P) > 0.1


def test_solver_meets_requested_tolerance():
    rng = np.random.default_rng(3)
    M = rng.random((12, 12)) + 0.05
    P = TransitionMatrix(M / M.sum(axis=1, keepdims=True))
    for tol in (1e-6, 1e-10, 1e-13):
        pi = stationary_distribution(P, tolerance=tol)
        assert stationarity_residual(pi, P) <= tol + 1e-15


def test_solver_start_invariance():
    rng = np.random.default_rng(5)
    M = rng.random((8, 8))
    P = TransitionMatrix(M / M.sum(axis=1, keepdims=True))
    a = stationary_distribution(P, tolerance=1e-13)
    b = stationary_distribution(P, tolerance=1e-13, start=np.eye(8)[3])
    assert np.allclose(a.pi, b.pi, atol=1e-11)


def test_periodic_chain_does_not_converge():
    P = TransitionMatrix([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(ConvergenceError) as info:
        stationary_distribution(P, max_iterations=50, start=[1.0, 0.0])
    assert info.value.residual == pytest.approx(1.0)


def test_residual_dimension_mismatch():
    with pytest.raises(DomainError):
        stationarity_residual(np.array([0.5, 0.5]), TransitionMatrix(np.eye(3)))


@pytest.mark.parametrize("bad", [[[0.5, 0.4], [0.5, 0.5]], [[1.2, -0.2], [0, 1]], [[1.0, 0.0]]])
def test_transition_matrix_validation(bad):
    with pytest.raises(DomainError):
        TransitionMatrix(bad)


def test_matrix_file_round_trip(tmp_path):
    P = neighbor_walk_matrix(build_topology(3, 2), 0.2)
    path = tmp_path / "P.txt"
    save_transition_matrix(P, path)
    assert np.array_equal(load_transition_matrix(path).P, P.P)


@pytest.mark.parametrize("text", ["0.5 0.5\n0.2 0.7\n", "0.5 0.5\n1.0\n", "a b\nc d\n"])
def test_matrix_file_rejects_bad_rows(tmp_path, text):
    path = tmp_path / "P.txt"
    path.write_text(text)
    with pytest.raises(ConfigurationError):
        load_transition_matrix(path)


def test_missing_matrix_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_transition_matrix(tmp_path / "nope.txt")
