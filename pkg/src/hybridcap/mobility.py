"""Node mobility: transition matrices on the cell grid and their stationary laws."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sparse

from .errors import ConfigurationError, ConvergenceError, DomainError
from .model import GridTopology

ROW_SUM_TOL = 1e-12
DEFAULT_TOL = 1e-10

# The 8 king-move offsets (drow, dcol).
NEIGHBOR_OFFSETS = tuple((dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0))


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    P: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise DomainError(f"transition matrix must be square, got shape {P.shape}", field="P")
        if np.any(P < 0) or np.any(P > 1):
            raise DomainError("transition probabilities must lie in [0, 1]", field="P")
        err = np.abs(P.sum(axis=1) - 1.0).max()
        if err > ROW_SUM_TOL:
            raise DomainError(f"rows must sum to 1 (max deviation {err:.3e})", field="P")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)

    @property
    def C(self) -> int:
        return self.P.shape[0]

    def is_doubly_stochastic(self, tol: float = ROW_SUM_TOL) -> bool:
        return bool(np.abs(self.P.sum(axis=0) - 1.0).max() <= tol)


@dataclass(frozen=True, eq=False)
class StationaryDistribution:
    pi: np.ndarray
    residual: float = 0.0

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        if pi.ndim != 1 or pi.size == 0:
            raise DomainError("stationary distribution must be a non-empty vector", field="pi")
        if np.any(pi < 0):
            raise DomainError("stationary probabilities must be non-negative", field="pi")
        if abs(pi.sum() - 1.0) > ROW_SUM_TOL:
            raise DomainError(f"probabilities sum to {pi.sum()!r}, not 1", field="pi")
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)

    @property
    def C(self) -> int:
        return self.pi.size

    @classmethod
    def uniform(cls, C: int) -> "StationaryDistribution":
        return cls(np.full(C, 1.0 / C))


def neighbor_walk_matrix(topology: GridTopology, stay_probability: float = 0.0) -> TransitionMatrix:
    """King-move random walk on the torus.

    Each of the 8 offsets receives mass ``(1 - stay_probability) / 8``; on
    small tori several offsets wrap onto the same cell and their masses add.
    """
    if not 0 <= stay_probability < 1:
        raise DomainError(f"stay probability must lie in [0, 1), got {stay_probability}", field="stay_probability")
    C = topology.C
    P = np.zeros((C, C))
    move = (1.0 - stay_probability) / len(NEIGHBOR_OFFSETS)
    for cell in range(C):
        r, c = topology.coords(cell)
        P[cell, cell] += stay_probability
        for dr, dc in NEIGHBOR_OFFSETS:
            P[cell, topology.index(r + dr, c + dc)] += move
    # rows of 8 equal terms can drift by an ulp; renormalise
    P /= P.sum(axis=1, keepdims=True)
    return TransitionMatrix(P)


def stationarity_residual(pi, P) -> float:
    """Return ``||pi P - pi||_inf``."""
    pi_vec = pi.pi if isinstance(pi, StationaryDistribution) else np.asarray(pi, dtype=float)
    mat = P.P if isinstance(P, TransitionMatrix) else np.asarray(P, dtype=float)
    if mat.shape != (pi_vec.size, pi_vec.size):
        raise DomainError(
            f"dimension mismatch: pi has {pi_vec.size} entries, P has shape {mat.shape}", field="pi"
        )
    return float(np.abs(pi_vec @ mat - pi_vec).max())


def stationary_distribution(
    P: TransitionMatrix,
    tolerance: float = DEFAULT_TOL,
    max_iterations: int = 100_000,
    start=None,
) -> StationaryDistribution:
    """Fixed-point iteration ``pi <- pi P`` from the uniform vector.

    Raises
    ------
    ConvergenceError
        If the residual is still above ``tolerance`` after ``max_iterations``
        steps, which happens for periodic or reducible chains.
    """
    C = P.C
    Pt = sparse.csr_matrix(P.P.T)
    pi = np.full(C, 1.0 / C) if start is None else np.asarray(start, dtype=float) / np.sum(start)
    residual = np.inf
    for _ in range(max_iterations + 1):
        nxt = Pt @ pi
        # residual of the current iterate, so the returned vector meets it
        residual = float(np.abs(nxt - pi).max())
        if residual <= tolerance:
            break
        pi = nxt / nxt.sum()
    else:
        raise ConvergenceError(
            f"power iteration did not converge in {max_iterations} steps (residual {residual:.3e})",
            residual=residual,
            iterations=max_iterations,
        )
    pi = np.clip(pi, 0.0, None)
    pi = pi / pi.sum()
    return StationaryDistribution(pi, residual=stationarity_residual(pi, P.P))


def load_transition_matrix(path) -> TransitionMatrix:
    """Read a dense matrix: one whitespace-separated row per line."""
    path = Path(path)
    try:
        rows = [line.split() for line in path.read_text().splitlines() if line.strip()]
        data = np.array([[float(x) for x in row] for row in rows])
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror}", field="pi_source") from exc
    except ValueError as exc:
        raise ConfigurationError(f"malformed matrix file {path}: {exc}", field="pi_source") from exc
    if data.ndim != 2:
        raise ConfigurationError(f"rows of {path} have unequal lengths", field="pi_source")
    try:
        return TransitionMatrix(data)
    except DomainError as exc:
        raise ConfigurationError(f"{path}: {exc}", field="pi_source") from exc


def save_transition_matrix(P: TransitionMatrix, path) -> None:
    np.savetxt(path, P.P, fmt="%.17g")
