"""Competitive commodity storage with stochastically evolving interest rates.

Solver toolkit for the rational-expectations storage model: existence-
condition checks built on the asymptotic bond yield, equilibrium pricing and
storage rules by the endogenous grid method, path simulation and moments,
and state-dependent generalized impulse responses to rate shocks.
"""

from .diagnostics import (
    EulerErrorReport,
    PropertyReport,
    check_causal_ordering,
    check_convexity,
    check_negative_covariance,
    check_rate_monotonicity,
    check_storage_rule,
    check_price_regimes,
    conditional_rate_price_covariance,
    correlated_state_economy,
    euler_error,
    euler_error_from_path,
    scan_positive_covariance,
)
from .estimator import StorageModel
from .exceptions import (
    ConfigError,
    ConvergenceError,
    ModelValidationError,
    StockpileError,
)
from .girf import GirfResult, GirfSpec, girf, mit_irf, percentile_state, state_near_rate
from .markov import (
    DiscountOperator,
    MarkovChain,
    QuadratureRule,
    discretize_var1,
    kappa,
    spectral_radius,
    stationary_distribution,
    tauchen_ar1,
    truncated_normal_rule,
)
from .model import (
    ActivityParams,
    Economy,
    IsoelasticDemand,
    LinearDemand,
    ModelSpec,
    NumericsParams,
    RateParams,
    ValidationReport,
    build_economy,
    rescale_economy,
    validate_economy,
)
from .runconfig import RunConfig, bundled_config_path, load_config
from .serialize import config_hash, load_solution, save_solution
from .simulation import (
    MomentSet,
    SimulationResult,
    StationarySample,
    conditional_price_moments,
    conditional_volatility,
    moments,
    simulate,
    stationary_sample,
)
from .solver import (
    EquilibriumSolution,
    StorageGrid,
    constant_rate_economy,
    demand_at,
    egm_step,
    initial_guess,
    mit_operator_step,
    price_at,
    solve_constant_rate,
    solve_egm,
    storage_at,
    storage_grid,
)

__version__ = "0.1.0"
