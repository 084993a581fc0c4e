"""Static network structure: cell grid, switchable region, rates, flows, strategies.

Cells are indexed from 0 in row-major order: cell ``r * width + col``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from fractions import Fraction
from typing import Iterable, Union

import numpy as np

from .errors import DomainError, InvalidTopologyError

MIN_XI = 2.0


class StrategyKind(IntEnum):
    """Per-cell, per-slot transmission choice.

    S1/S2 are intra-cell ad hoc transmissions (destination inside / outside
    the cell), S3/S4 are base-station transmissions (destination inside /
    outside the switchable region), S5..S8 combine one of each.
    """

    S0 = 0
    S1 = 1
    S2 = 2
    S3 = 3
    S4 = 4
    S5 = 5
    S6 = 6
    S7 = 7
    S8 = 8

    @property
    def sr_only(self) -> bool:
        return self >= StrategyKind.S3


# (ad hoc component, base-station component) of each strategy; 0 = none.
STRATEGY_COMPONENTS = {
    StrategyKind.S0: (0, 0),
    StrategyKind.S1: (1, 0),
    StrategyKind.S2: (2, 0),
    StrategyKind.S3: (0, 3),
    StrategyKind.S4: (0, 4),
    StrategyKind.S5: (1, 3),
    StrategyKind.S6: (1, 4),
    StrategyKind.S7: (2, 3),
    StrategyKind.S8: (2, 4),
}

_SR_ORDER = (5, 6, 7, 8, 1, 2, 3, 4, 0)
_NON_SR_ORDER = (1, 2, 0)


@dataclass(frozen=True)
class GridTopology:
    width: int
    height: int
    sr_cells: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidTopologyError(
                f"grid dimensions must be positive, got {self.width}x{self.height}",
                field="topology",
            )
        bad = [c for c in self.sr_cells if not 0 <= c < self.C]
        if bad:
            raise InvalidTopologyError(
                f"SR cell indices {sorted(bad)} outside [0, {self.C})", field="sr_cells"
            )

    @property
    def C(self) -> int:
        return self.width * self.height

    @property
    def A(self) -> int:
        return len(self.sr_cells)

    def in_sr(self, cell: int) -> bool:
        return cell in self.sr_cells

    @property
    def sr_mask(self) -> np.ndarray:
        mask = np.zeros(self.C, dtype=bool)
        mask[sorted(self.sr_cells)] = True
        return mask

    def coords(self, cell: int) -> tuple[int, int]:
        return divmod(cell, self.width)

    def index(self, row: int, col: int) -> int:
        return (row % self.height) * self.width + (col % self.width)


def build_topology(width: int, height: int, sr_spec: Union[int, Iterable[int]] = ()) -> GridTopology:
    """Build a grid with a switchable region.

    ``sr_spec`` is either an explicit iterable of cell indices (any shape) or
    an integer ``A``, meaning the first ``A`` cells in row-major order.
    """
    if width < 1 or height < 1:
        raise InvalidTopologyError(
            f"grid dimensions must be positive, got {width}x{height}", field="topology"
        )
    C = width * height
    if isinstance(sr_spec, (int, np.integer)):
        if not 0 <= sr_spec <= C:
            raise InvalidTopologyError(f"block size {sr_spec} not in [0, {C}]", field="A")
        cells = list(range(int(sr_spec)))
    else:
        cells = [int(c) for c in sr_spec]
        if len(set(cells)) != len(cells):
            raise InvalidTopologyError(f"duplicate SR cell indices in {cells}", field="sr_cells")
    return GridTopology(width, height, frozenset(cells))


@dataclass(frozen=True)
class RatePair:
    """Ad hoc rate ``r1`` and base-station rate ``r2`` in packets/slot."""

    r1: float
    r2: float

    def __post_init__(self):
        if not (self.r1 > 0 and self.r2 > 0):
            raise DomainError(f"rates must be positive, got r1={self.r1}, r2={self.r2}", field="rates")
        if self.r1 < MIN_XI * self.r2:
            raise DomainError(
                f"xi = r1/r2 = {self.r1 / self.r2:g} < 2 is outside the analysed regime", field="xi"
            )

    @property
    def xi(self) -> float:
        return self.r1 / self.r2

    @classmethod
    def from_xi(cls, r1: float, xi: float) -> "RatePair":
        if not xi > 0:
            raise DomainError(f"xi must be positive, got {xi}", field="xi")
        return cls(r1, r1 / xi)

    def scaled(self, c: float) -> "RatePair":
        return RatePair(c * self.r1, c * self.r2)


@dataclass(frozen=True)
class FlowPairing:
    """Source/destination pairing ``0<->1, 2<->3, ...`` over ``n`` nodes."""

    n: int

    def __post_init__(self):
        if self.n < 2 or self.n % 2:
            raise DomainError(f"node count must be even and >= 2, got {self.n}", field="N")

    def partner(self, i: int) -> int:
        if not 0 <= i < self.n:
            raise DomainError(f"node {i} not in [0, {self.n})", field="node")
        return i ^ 1

    @property
    def partners(self) -> np.ndarray:
        return np.arange(self.n) ^ 1

    @property
    def n_pairs(self) -> int:
        return self.n // 2


@dataclass(frozen=True)
class ModelParams:
    topology: GridTopology
    rates: RatePair
    pairing: FlowPairing

    @property
    def d(self) -> Fraction:
        return Fraction(self.pairing.n, self.topology.C)


def strategy_coefficient(kind: StrategyKind, rates: RatePair, in_sr: bool) -> float:
    """Peak per-slot value of transmissions plus single-hop deliveries.

    These are the α (SR) and β (non-SR) rate coefficients.
    """
    kind = StrategyKind(kind)
    if not in_sr and kind.sr_only:
        raise DomainError(f"{kind.name} is only available inside the SR", field="strategy")
    r1, r2 = rates.r1, rates.r2
    adhoc, bs = STRATEGY_COMPONENTS[kind]
    value = 0.0
    if adhoc == 1:
        value += 2 * r1
    elif adhoc == 2:
        value += r1
    if bs == 3:
        value += 2 * r2
    elif bs == 4:
        value += r2
    return value


def coefficient_tables(rates: RatePair) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(alpha, beta)`` indexed by strategy number (entry 0 is S0)."""
    alpha = np.array([strategy_coefficient(k, rates, True) for k in StrategyKind])
    beta = np.array([strategy_coefficient(StrategyKind(k), rates, False) for k in range(3)])
    return alpha, beta


def priority_order(in_sr: bool) -> list[StrategyKind]:
    order = _SR_ORDER if in_sr else _NON_SR_ORDER
    return [StrategyKind(k) for k in order]
