"""Capacity upper bound of delay-tolerant hybrid mobile ad hoc networks
under the cell-partitioned model, with Monte Carlo and enumeration oracles."""

from .analytic import (
    CapacityReport,
    LimitMode,
    LimitParams,
    StrategyProbabilities,
    Variant,
    capacity_bound,
    delta_mu,
    finite_to_limit_check,
    mu0,
    mu1_limit,
    mu2_limit,
    optimal_density,
    strategy_probs_general,
    strategy_probs_uniform,
    utility_grid_search,
)
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DomainError,
    EnumerationGuardError,
    FormulaRangeError,
    InvalidTopologyError,
    NumericalError,
    OptimizationError,
)
from .mobility import (
    StationaryDistribution,
    TransitionMatrix,
    neighbor_walk_matrix,
    stationarity_residual,
    stationary_distribution,
)
from .model import (
    FlowPairing,
    GridTopology,
    ModelParams,
    RatePair,
    StrategyKind,
    build_topology,
    priority_order,
    strategy_coefficient,
)
from .montecarlo import (
    ClassifierMode,
    EmpiricalEstimate,
    classify_cell,
    enumerate_exact,
    estimate_strategy_probs,
    sample_placement_iid,
    step_markov,
)
from .relay import ThroughputReport, run_relay_simulation

__version__ = "0.1.0"
