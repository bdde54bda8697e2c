"""Equilibrium path simulation, stationary sampling, and price moments."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import skew as _skew

from .markov import stationary_distribution, truncated_normal_ppf
from .rng import uniforms
from .solver import _interp_demand, storage_on_path

__all__ = [
    "SimulationResult",
    "MomentSet",
    "StationarySample",
    "simulate",
    "stationary_sample",
    "moments",
    "conditional_volatility",
    "conditional_price_moments",
]


@dataclass(frozen=True)
class SimulationResult:
    """Time paths of the simulated economy after burn-in."""

    x: np.ndarray
    price: np.ndarray
    inventory: np.ndarray
    y: np.ndarray
    z_index: np.ndarray
    rate_annual: np.ndarray
    activity: np.ndarray
    seed: int
    t_periods: int
    burn: int

    def __len__(self):
        return self.x.size

    def columns(self):
        """Column mapping for CSV export (t, z_index, R_a, A, Y, X, P, I)."""
        t0 = self.burn + 1
        return {
            "t": np.arange(t0, t0 + len(self)),
            "z_index": self.z_index,
            "R_a": self.rate_annual,
            "A": self.activity,
            "Y": self.y,
            "X": self.x,
            "P": self.price,
            "I": self.inventory,
        }


@dataclass(frozen=True)
class StationarySample:
    """Retained ergodic draws of (X, z) for percentile conditioning."""

    x: np.ndarray
    z_index: np.ndarray
    rate_annual: np.ndarray
    activity: np.ndarray
    seed: int

    def percentile_x(self, p):
        return float(np.percentile(self.x, p))

    def mean_x(self):
        return float(np.mean(self.x))


@dataclass(frozen=True)
class MomentSet:
    """Unconditional price moments plus availability/inventory summaries.

    Standard errors come from 100-block batch means.
    """

    cv: float
    ac1: float
    skewness: float
    mean_price: float
    std_price: float
    mean_x: float
    std_x: float
    mean_inventory: float
    std_inventory: float
    se_cv: float
    se_ac1: float
    se_skewness: float
    degenerate: bool

    def to_dict(self):
        return {
            "cv": self.cv,
            "ac1": self.ac1,
            "skewness": self.skewness,
            "mean_price": self.mean_price,
            "std_price": self.std_price,
            "mean_x": self.mean_x,
            "std_x": self.std_x,
            "mean_inventory": self.mean_inventory,
            "std_inventory": self.std_inventory,
            "se_cv": self.se_cv,
            "se_ac1": self.se_ac1,
            "se_skewness": self.se_skewness,
            "degenerate": self.degenerate,
        }


def exogenous_path(chain, z0, t_periods, seed, label="exog-chain"):
    """Inverse-CDF state indices z_0 .. z_T from the named uniform stream."""
    cum = chain.cumulative()
    u = uniforms(seed, label, t_periods)
    path = np.empty(t_periods + 1, dtype=np.int64)
    path[0] = z0
    n_max = chain.n_states - 1
    for t in range(t_periods):
        row = cum[path[t]]
        path[t + 1] = min(np.searchsorted(row, u[t], side="right"), n_max)
    return path


def output_supply_path(economy, n_draws, seed, label="output"):
    """Truncated-normal gross output draws via inverse CDF."""
    spec = economy.spec
    mu_y = spec.demand.mu_y
    if spec.sigma_y == 0:
        return np.full(n_draws, mu_y)
    u = uniforms(seed, label, n_draws)
    return mu_y + mu_y * spec.sigma_y * truncated_normal_ppf(u, spec.trunc_sd)


def _default_start(sol, economy):
    """Deterministic starting point: mean output, most likely exogenous state."""
    pi = stationary_distribution(economy.chain)
    return economy.demand.mu_y, int(np.argmax(pi))


def simulate(sol, economy, t_periods, burn, seed, x0=None, z0=None):
    """Simulate (X_t, Z_t, P_t, I_t) for ``t_periods`` steps, dropping ``burn``.

    Exogenous states and output shocks are drawn by inverse CDF from
    counter-based streams, so the path is a pure function of the seed.
    """
    if not t_periods > burn >= 0:
        raise ValueError("need t_periods > burn >= 0")
    if x0 is None or z0 is None:
        x_start, z_start = _default_start(sol, economy)
        x0 = x_start if x0 is None else x0
        z0 = z_start if z0 is None else z0

    z_path = exogenous_path(economy.chain, z0, t_periods, seed)
    supply = output_supply_path(economy, t_periods + 1, seed)
    alpha = economy.spec.activity.alpha
    activity = economy.activity_values[z_path]
    y_net = supply - alpha * activity

    decay = economy.decay
    q_cap = economy.zero_price_quantity
    xstar = sol.xstar
    cols = sol.columns()
    x = np.empty(t_periods + 1)
    demand = np.empty(t_periods + 1)
    inventory = np.empty(t_periods + 1)
    x[0] = x0
    for t in range(t_periods + 1):
        j = z_path[t]
        xk, dk = cols[j]
        xt = x[t]
        if xt <= xk[-1]:
            d = np.interp(xt, xk, dk)
        else:
            slope = (dk[-1] - dk[-2]) / (xk[-1] - xk[-2])
            d = dk[-1] + slope * (xt - xk[-1])
        if d > q_cap:
            d = q_cap
        demand[t] = d
        stock = min(xt, xstar[j]) - d
        inventory[t] = stock if stock > 0.0 else 0.0
        if t < t_periods:
            x[t + 1] = decay * inventory[t] + y_net[t + 1]

    price = economy.clamp_price(economy.demand.price(demand))
    keep = slice(burn + 1, None)
    return SimulationResult(
        x=x[keep],
        price=price[keep],
        inventory=inventory[keep],
        y=y_net[keep],
        z_index=z_path[keep],
        rate_annual=economy.rate_annual[z_path[keep]],
        activity=activity[keep],
        seed=seed,
        t_periods=t_periods,
        burn=burn,
    )


def stationary_sample(sol, economy, seed, t_periods=200_000, burn=50_000):
    """Ergodic sample of the state per the long-simulation protocol."""
    result = simulate(sol, economy, t_periods, burn, seed)
    return StationarySample(
        x=result.x,
        z_index=result.z_index,
        rate_annual=result.rate_annual,
        activity=result.activity,
        seed=seed,
    )


def _block_se(values, stat, n_blocks=100):
    blocks = np.array_split(values, n_blocks)
    stats = np.array([stat(b) for b in blocks])
    return float(np.std(stats, ddof=1) / math.sqrt(n_blocks))


def moments(result):
    """Coefficient of variation, first autocorrelation, and skewness of price."""
    p = result.price
    if len(p) < 10_000:
        raise ValueError("need at least 10,000 retained periods for moments")
    mean_p = float(np.mean(p))
    std_p = float(np.std(p))
    degenerate = std_p < 1e-12 * max(abs(mean_p), 1.0)
    if degenerate:
        cv, ac1, skw = 0.0, float("nan"), float("nan")
        se_cv = se_ac1 = se_skw = 0.0
    else:
        cv = std_p / mean_p
        ac1 = float(np.corrcoef(p[1:], p[:-1])[0, 1])
        skw = float(_skew(p))
        se_cv = _block_se(p, lambda b: np.std(b) / np.mean(b))
        se_ac1 = _block_se(p, lambda b: np.corrcoef(b[1:], b[:-1])[0, 1])
        se_skw = _block_se(p, _skew)
    return MomentSet(
        cv=cv,
        ac1=ac1,
        skewness=skw,
        mean_price=mean_p,
        std_price=std_p,
        mean_x=float(np.mean(result.x)),
        std_x=float(np.std(result.x)),
        mean_inventory=float(np.mean(result.inventory)),
        std_inventory=float(np.std(result.inventory)),
        se_cv=se_cv,
        se_ac1=se_ac1,
        se_skewness=se_skw,
        degenerate=degenerate,
    )


def conditional_price_moments(sol, economy, x, state_idx, chunk=200_000):
    """Exact next-period price mean and variance from states (x, z).

    Enumerates the chain row and the output quadrature; no Monte Carlo.
    Accepts paired arrays and returns (mean, variance) arrays.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    state_idx = np.atleast_1d(np.asarray(state_idx))
    stock = storage_on_path(sol, x, state_idx)
    carry = economy.decay * stock
    n = economy.n_states
    weights = economy.quad.weights
    phi = economy.chain.transition
    mean = np.zeros_like(x)
    second = np.zeros_like(x)
    chunk = max(10_000, min(chunk, 20_000_000 // n))  # cap the (chunk, n) gather
    for start in range(0, x.size, chunk):
        sl = slice(start, min(start + chunk, x.size))
        carry_b = carry[sl]
        probs = phi[state_idx[sl]]  # (B, n)
        for m in range(n):
            xk, dk = sol.columns()[m]
            x_next = carry_b[:, np.newaxis] + economy.y_nodes[m][np.newaxis, :]
            d = _interp_demand(xk, dk, economy.zero_price_quantity, x_next.ravel())
            price = economy.clamp_price(economy.demand.price(d)).reshape(x_next.shape)
            w_m = probs[:, m]
            mean[sl] += w_m * (price @ weights)
            second[sl] += w_m * ((price**2) @ weights)
    variance = np.maximum(second - mean**2, 0.0)
    return mean, variance


def conditional_volatility(sol, economy, x, state_idx):
    """One-period-ahead conditional standard deviation of price from (x, z)."""
    _, variance = conditional_price_moments(sol, economy, x, state_idx)
    out = np.sqrt(variance)
    if np.isscalar(x) or np.asarray(x).ndim == 0:
        return float(out[0])
    return out
