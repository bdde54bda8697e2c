"""Economy primitives: demand curves, parameter specs, and assembled economies.

The inverse demand p, its inverse, the per-state quarterly discount factors,
and the net-output nodes are fixed here; everything downstream (solver,
simulation, impulse responses) consumes an immutable ``Economy``.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import ModelValidationError
from .markov import (
    DiscountOperator,
    MarkovChain,
    QuadratureRule,
    discretize_var1,
    kappa,
    tauchen_ar1,
    truncated_normal_rule,
)

__all__ = [
    "LinearDemand",
    "IsoelasticDemand",
    "RateParams",
    "ActivityParams",
    "NumericsParams",
    "ModelSpec",
    "Economy",
    "ValidationReport",
    "build_economy",
    "validate_economy",
    "rescale_economy",
]


@dataclass(frozen=True)
class LinearDemand:
    """Linear inverse demand p(x) = pbar [1 + (x / mu_y - 1) / lam], lam < 0.

    ``pbar`` is the steady-state price (price at mean output ``mu_y``) and
    ``lam`` the price elasticity of demand.
    """

    pbar: float = 1.0
    mu_y: float = 1.0
    lam: float = -0.06

    def __post_init__(self):
        if self.pbar <= 0 or self.mu_y <= 0:
            raise ModelValidationError("pbar and mu_y must be positive")
        if self.lam >= 0:
            raise ModelValidationError("linear demand elasticity lam must be negative")

    @property
    def kind(self):
        return "linear"

    @property
    def unbounded(self):
        return False

    def price(self, x):
        return self.pbar * (1.0 + (np.asarray(x, dtype=float) / self.mu_y - 1.0) / self.lam)

    def quantity(self, price):
        return self.mu_y * (1.0 + self.lam * (np.asarray(price, dtype=float) / self.pbar - 1.0))

    def zero_price_quantity(self):
        """Quantity demanded at price zero, p^{-1}(0)."""
        return self.mu_y * (1.0 - self.lam)

    def to_dict(self):
        return {"kind": "linear", "pbar": self.pbar, "mu_y": self.mu_y, "lam": self.lam}


@dataclass(frozen=True)
class IsoelasticDemand:
    """Isoelastic inverse demand p(x) = pbar (x / mu_y)^(-1/lam), lam > 0.

    Unbounded as x drops to zero; the solver treats this as unbounded-demand
    mode (no price cap, no free disposal).
    """

    lam: float = 0.06
    pbar: float = 1.0
    mu_y: float = 1.0

    def __post_init__(self):
        if self.pbar <= 0 or self.mu_y <= 0:
            raise ModelValidationError("pbar and mu_y must be positive")
        if self.lam <= 0:
            raise ModelValidationError("isoelastic demand lam must be positive")

    @property
    def kind(self):
        return "isoelastic"

    @property
    def unbounded(self):
        return True

    def price(self, x):
        return self.pbar * (np.asarray(x, dtype=float) / self.mu_y) ** (-1.0 / self.lam)

    def quantity(self, price):
        return self.mu_y * (np.asarray(price, dtype=float) / self.pbar) ** (-self.lam)

    def zero_price_quantity(self):
        return np.inf

    def to_dict(self):
        return {"kind": "isoelastic", "pbar": self.pbar, "mu_y": self.mu_y, "lam": self.lam}


def demand_from_dict(data):
    kind = data.get("kind", "linear")
    fields_ = {k: v for k, v in data.items() if k != "kind"}
    if kind == "linear":
        return LinearDemand(**fields_)
    if kind == "isoelastic":
        return IsoelasticDemand(**fields_)
    raise ModelValidationError(f"unknown demand kind {kind!r}")


@dataclass(frozen=True)
class RateParams:
    """Annual gross real rate AR(1): stationary mean, autocorrelation, and
    stationary standard deviation (the innovation loading carries the
    sqrt(1 - rho^2) factor)."""

    mu_r: float = 1.0062
    rho_r: float = 0.9407
    sigma_r: float = 0.03

    def innovation_sd(self):
        return self.sigma_r * math.sqrt(1.0 - self.rho_r**2)


@dataclass(frozen=True)
class ActivityParams:
    """Economic-activity block: persistence, rate sensitivity, and the demand
    exposure alpha.  alpha = 0 switches the demand channel off."""

    rho_a: float = 0.0
    gamma: float = 0.0
    alpha: float = 0.0


@dataclass(frozen=True)
class NumericsParams:
    n_rate_states: int = 51
    n_activity_states: int = 1
    n_storage_grid: int = 100
    storage_grid_max: float = 2.0
    storage_grid_median: float = 0.5
    n_quad_nodes: int = 7
    tol: float = 1e-4
    max_iters: int = 5000
    grid_coverage: float = 3.0


@dataclass(frozen=True)
class ModelSpec:
    """Full description of the economy plus numerical controls."""

    delta: float = 0.02
    k: float = 0.0
    demand: LinearDemand | IsoelasticDemand = field(default_factory=LinearDemand)
    sigma_y: float = 0.05
    trunc_sd: float = 5.0
    rate: RateParams = field(default_factory=RateParams)
    activity: ActivityParams = field(default_factory=ActivityParams)
    numerics: NumericsParams = field(default_factory=NumericsParams)
    x_lower_bound: float | None = None  # override; rescaling sets it explicitly

    def __post_init__(self):
        if self.delta < 0:
            raise ModelValidationError("delta must be nonnegative")
        if self.k < 0:
            raise ModelValidationError("storage cost k must be nonnegative")
        if self.sigma_y < 0:
            raise ModelValidationError("sigma_y must be nonnegative")
        if self.trunc_sd <= 0:
            raise ModelValidationError("trunc_sd must be positive")
        if not -1.0 < self.rate.rho_r < 1.0:
            raise ModelValidationError("|rho_r| must be < 1")
        if not -1.0 < self.activity.rho_a < 1.0:
            raise ModelValidationError("|rho_a| must be < 1")
        if self.activity.gamma < 0 or self.activity.alpha < 0:
            raise ModelValidationError("gamma and alpha must be nonnegative")
        if self.rate.sigma_r <= 0:
            raise ModelValidationError("sigma_r must be positive")
        if self.rate.mu_r <= 0:
            raise ModelValidationError("mu_r must be positive (gross rate)")

    @property
    def demand_channel_active(self):
        return self.activity.alpha > 0

    def to_dict(self):
        return {
            "delta": self.delta,
            "k": self.k,
            "demand": self.demand.to_dict(),
            "sigma_y": self.sigma_y,
            "trunc_sd": self.trunc_sd,
            "rate": {
                "mu_r": self.rate.mu_r,
                "rho_r": self.rate.rho_r,
                "sigma_r": self.rate.sigma_r,
            },
            "activity": {
                "rho_a": self.activity.rho_a,
                "gamma": self.activity.gamma,
                "alpha": self.activity.alpha,
            },
            "numerics": {
                "n_rate_states": self.numerics.n_rate_states,
                "n_activity_states": self.numerics.n_activity_states,
                "n_storage_grid": self.numerics.n_storage_grid,
                "storage_grid_max": self.numerics.storage_grid_max,
                "storage_grid_median": self.numerics.storage_grid_median,
                "n_quad_nodes": self.numerics.n_quad_nodes,
                "tol": self.numerics.tol,
                "max_iters": self.numerics.max_iters,
                "grid_coverage": self.numerics.grid_coverage,
            },
            "x_lower_bound": self.x_lower_bound,
        }

    @staticmethod
    def from_dict(data):
        return ModelSpec(
            delta=data.get("delta", 0.02),
            k=data.get("k", 0.0),
            demand=demand_from_dict(data.get("demand", {})),
            sigma_y=data.get("sigma_y", 0.05),
            trunc_sd=data.get("trunc_sd", 5.0),
            rate=RateParams(**data.get("rate", {})),
            activity=ActivityParams(**data.get("activity", {})),
            numerics=NumericsParams(**data.get("numerics", {})),
            x_lower_bound=data.get("x_lower_bound"),
        )


@dataclass(frozen=True)
class Economy:
    """Assembled, immutable economy ready for the solver.

    ``y_nodes[m, n]`` is next-period net output in exogenous state m at
    output-shock quadrature node n; ``m_values[m]`` the quarterly discount
    factor E[m(z, eps) | z = m] after averaging over the (possibly degenerate)
    eps quadrature.
    """

    spec: ModelSpec
    chain: MarkovChain
    m_values: np.ndarray
    quad: QuadratureRule
    y_nodes: np.ndarray
    b: float
    eps_quad: QuadratureRule = field(default_factory=QuadratureRule.degenerate)

    @property
    def delta(self):
        return self.spec.delta

    @property
    def k(self):
        return self.spec.k

    @property
    def decay(self):
        """One-period survival factor e^(-delta)."""
        return math.exp(-self.spec.delta)

    @property
    def demand(self):
        return self.spec.demand

    @property
    def n_states(self):
        return self.chain.n_states

    @property
    def rate_annual(self):
        """Annual gross rate per state (first state coordinate)."""
        return self.chain.states[:, 0]

    @property
    def rate_quarterly(self):
        return self.rate_annual ** 0.25

    @property
    def activity_values(self):
        if self.chain.dim >= 2:
            return self.chain.states[:, 1]
        return np.zeros(self.n_states)

    @property
    def price_cap(self):
        """Upper price bound p(b); infinite in unbounded-demand mode."""
        if self.demand.unbounded and self.b <= 0:
            return np.inf
        return float(self.demand.price(self.b))

    @property
    def zero_price_quantity(self):
        return self.demand.zero_price_quantity()

    def clamp_price(self, price):
        """Equilibrium price clamp: max{min{., p(b)}, 0}.

        Unbounded-demand mode skips the upper clamp (the candidate space has
        no finite cap there), keeping only the free-disposal floor at zero.
        """
        price = np.asarray(price, dtype=float)
        if not self.demand.unbounded:
            price = np.minimum(price, self.price_cap)
        return np.maximum(price, 0.0)

    def discount_operator(self):
        return DiscountOperator(self.chain, self.m_values)

    def output_min(self):
        return float(self.y_nodes.min())


def _output_nodes(spec, chain, quad):
    mu_y = spec.demand.mu_y
    supply = mu_y + mu_y * spec.sigma_y * quad.nodes  # mean mu_y, sd mu_y sigma_y
    activity = chain.states[:, 1] if chain.dim >= 2 else np.zeros(chain.n_states)
    return supply[np.newaxis, :] - spec.activity.alpha * activity[:, np.newaxis]


def _support_min_output(spec, chain):
    """Smallest net output over the truncated-shock support (not just the
    quadrature nodes); simulated paths can reach it."""
    mu_y = spec.demand.mu_y
    y_min = mu_y * (1.0 - spec.sigma_y * spec.trunc_sd)
    if chain.dim >= 2:
        y_min -= spec.activity.alpha * float(chain.states[:, 1].max())
    return y_min


def _lower_bound(spec, y_min):
    if spec.x_lower_bound is not None:
        return float(spec.x_lower_bound)
    if spec.demand.unbounded:
        return float(y_min)
    # Linear demand stays finite on [0, inf), so anchor the domain at 0 when
    # output never goes negative; demand units are then absolute quantities.
    return float(min(y_min, 0.0))


def build_economy(spec):
    """Assemble the chain, discounting, output nodes, and bound for a spec.

    The speculative channel (alpha = 0) uses a rate-only Tauchen chain; an
    active demand channel uses the joint (rate, activity) discretization.
    """
    num = spec.numerics
    if spec.demand_channel_active:
        chain = discretize_var1(
            spec.rate.mu_r,
            spec.rate.rho_r,
            spec.rate.sigma_r,
            spec.activity.rho_a,
            spec.activity.gamma,
            (num.n_rate_states, num.n_activity_states),
            coverage=num.grid_coverage,
        )
    else:
        chain = tauchen_ar1(
            spec.rate.mu_r,
            spec.rate.rho_r,
            spec.rate.innovation_sd(),
            num.n_rate_states,
            coverage=num.grid_coverage,
        )
    if np.any(chain.states[:, 0] <= 0):
        raise ModelValidationError(
            "rate grid includes non-positive gross rates; shrink coverage or sigma_r"
        )
    if spec.sigma_y > 0:
        quad = truncated_normal_rule(0.0, 1.0, spec.trunc_sd, num.n_quad_nodes)
    else:
        quad = QuadratureRule.degenerate(0.0)
    eps_quad = QuadratureRule.degenerate(0.0)  # eps_t is degenerate here
    m_values = chain.states[:, 0] ** -0.25  # quarterly discount 1/R_t
    y_nodes = _output_nodes(spec, chain, quad)
    b = _lower_bound(spec, _support_min_output(spec, chain))
    if y_nodes.min() < b:
        raise ModelValidationError("net output falls below the availability bound")
    economy = Economy(
        spec=spec,
        chain=chain,
        m_values=m_values,
        quad=quad,
        y_nodes=y_nodes,
        b=b,
        eps_quad=eps_quad,
    )
    report = validate_economy(economy)
    if not report.storage_value_ok:
        bad = int(np.argmin(report.margins))
        raise ModelValidationError(
            "present market value of future output does not cover storage cost "
            f"(first failing state {bad}, margin {report.margins[bad]:.3e})"
        )
    return economy


@dataclass(frozen=True)
class ValidationReport:
    """Existence-condition diagnostics for an economy."""

    kappa: float
    delta: float
    assumption1_ok: bool
    margins: np.ndarray  # per-state e^{-delta} E_z[M p(Y)] - k
    storage_value_ok: bool

    @property
    def ok(self):
        return self.assumption1_ok and self.storage_value_ok

    def to_dict(self):
        return {
            "kappa": self.kappa,
            "delta": self.delta,
            "kappa_plus_delta": self.kappa + self.delta,
            "assumption1_ok": bool(self.assumption1_ok),
            "min_storage_value_margin": float(np.min(self.margins)),
            "storage_value_ok": bool(self.storage_value_ok),
            "ok": bool(self.ok),
        }


def validate_economy(economy):
    """Check the discounting condition kappa(M) + delta > 0 and the per-state
    requirement that discounted expected output value exceeds storage cost."""
    kap = kappa(economy.discount_operator())
    assumption1 = kap + economy.delta > 0
    expected_value = (
        economy.demand.price(economy.y_nodes) @ economy.quad.weights
    ) * economy.m_values
    margins = economy.decay * (economy.chain.transition @ expected_value) - economy.k
    return ValidationReport(
        kappa=float(kap),
        delta=economy.delta,
        assumption1_ok=bool(assumption1),
        margins=margins,
        storage_value_ok=bool(np.all(margins > 0)),
    )


def rescale_economy(spec, mu, sigma):
    """Affine output rescaling Y -> mu + sigma Y that preserves the price process.

    Only defined for linear demand p(x) = a + d x: the transformed economy has
    inverse demand (a - d mu / sigma) + (d / sigma) x, availability bound
    mu + sigma b, and storage quantities scaled by sigma.  Returns a new spec;
    solving it yields prices that agree with the original on transformed
    states.
    """
    if sigma <= 0:
        raise ModelValidationError("sigma must be positive")
    demand = spec.demand
    if demand.kind != "linear":
        raise ModelValidationError("rescaling is defined for linear demand only")
    # p(x) = a + d x with a = pbar (1 - 1/lam) > 0, d = pbar / (lam mu_y) < 0
    mu_y_new = mu + sigma * demand.mu_y
    if mu_y_new <= 0:
        raise ModelValidationError("rescaled mean output must stay positive")
    lam_new = demand.lam * sigma * demand.mu_y / mu_y_new
    demand_new = LinearDemand(pbar=demand.pbar, mu_y=mu_y_new, lam=lam_new)
    economy_b = _lower_bound(spec, _min_output(spec))
    num = spec.numerics
    return replace(
        spec,
        demand=demand_new,
        sigma_y=sigma * demand.mu_y * spec.sigma_y / mu_y_new,
        x_lower_bound=mu + sigma * economy_b,
        numerics=replace(
            num,
            storage_grid_max=sigma * num.storage_grid_max,
            storage_grid_median=sigma * num.storage_grid_median,
        ),
    )


def _min_output(spec):
    mu_y = spec.demand.mu_y
    y_min = mu_y * (1.0 - spec.sigma_y * spec.trunc_sd)
    if spec.demand_channel_active:
        # worst case subtracts the maximal demand shock alpha * max A
        chain = discretize_var1(
            spec.rate.mu_r,
            spec.rate.rho_r,
            spec.rate.sigma_r,
            spec.activity.rho_a,
            spec.activity.gamma,
            (spec.numerics.n_rate_states, spec.numerics.n_activity_states),
            coverage=spec.numerics.grid_coverage,
        )
        y_min -= spec.activity.alpha * float(chain.states[:, 1].max())
    return y_min
