"""Equilibrium pricing and storage rules via the endogenous grid method.

The iteration state is the pair of K x N arrays (X, P): availability nodes
and prices consistent with the storage grid and the exogenous chain.  The
implied demand function is interpolated linearly (with linear extrapolation
above the last node) through the demand values p^{-1}(P), anchored at the
availability lower bound where demand equals availability.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConvergenceError, ModelValidationError
from .markov import MarkovChain, QuadratureRule, truncated_normal_rule
from .model import Economy, validate_economy

__all__ = [
    "StorageGrid",
    "EquilibriumSolution",
    "storage_grid",
    "initial_guess",
    "egm_step",
    "solve_egm",
    "price_at",
    "storage_at",
    "constant_rate_economy",
    "solve_constant_rate",
    "mit_operator_step",
]

_DUP_KNOT_SHIFT = 1e-9


@dataclass(frozen=True)
class StorageGrid:
    """Increasing storage grid starting exactly at zero."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).ravel()
        object.__setattr__(self, "points", pts)
        if pts.size < 2:
            raise ModelValidationError("storage grid needs at least two points")
        if pts[0] != 0.0:
            raise ModelValidationError("storage grid must start at exactly 0")
        if np.any(np.diff(pts) <= 0):
            raise ModelValidationError("storage grid must be strictly increasing")

    @property
    def size(self):
        return self.points.size


def storage_grid(n_points, grid_max, grid_median):
    """Exponential grid on [0, grid_max] with the stated median point.

    Uses the shifted-log construction: with c = median^2 / (max - 2 median),
    points are exp(linspace(log c, log(max + c))) - c, which hits 0 and
    grid_max exactly and has geometric mean median + c, i.e. median at the
    middle.  Falls back to a uniform grid when max <= 2 median (the shift
    degenerates there).
    """
    if n_points < 2:
        raise ModelValidationError("n_points must be >= 2")
    if grid_max <= 0:
        raise ModelValidationError("grid_max must be positive")
    if grid_median <= 0 or grid_median >= grid_max:
        raise ModelValidationError("grid_median must lie inside (0, grid_max)")
    if grid_max <= 2 * grid_median:
        pts = np.linspace(0.0, grid_max, n_points)
    else:
        shift = grid_median**2 / (grid_max - 2 * grid_median)
        pts = np.exp(np.linspace(np.log(shift), np.log(grid_max + shift), n_points)) - shift
    pts[0] = 0.0
    return StorageGrid(pts)


@dataclass
class EquilibriumSolution:
    """Converged pricing rule on endogenous grids, plus thresholds.

    ``x_nodes[s, j]`` and ``p_nodes[s, j]`` are availability and price at
    storage level grid[s] in exogenous state j.  ``pbar[j]`` is the price
    below which speculators start holding stock and ``xstar[j]`` the
    free-disposal availability threshold (inf when disposal never binds).
    """

    economy: Economy
    grid: np.ndarray
    x_nodes: np.ndarray
    p_nodes: np.ndarray
    d_nodes: np.ndarray
    x_aug: np.ndarray
    d_aug: np.ndarray
    pbar: np.ndarray
    xstar: np.ndarray
    iterations: int
    final_residual: float
    residual_history: list = field(default_factory=list, repr=False)
    _columns: list = field(default=None, repr=False, compare=False)

    @property
    def n_states(self):
        return self.x_nodes.shape[1]

    @property
    def b(self):
        return self.economy.b

    def columns(self):
        """Per-state contiguous (x, demand) knot arrays for fast interpolation."""
        if self._columns is None:
            self._columns = [
                (np.ascontiguousarray(self.x_aug[:, j]), np.ascontiguousarray(self.d_aug[:, j]))
                for j in range(self.n_states)
            ]
        return self._columns


def _augmented_nodes(economy, x_nodes, p_nodes):
    """Prepend the lower-bound anchor (b, demand=b) to each state column.

    When the price cap binds at the zero-storage row the first endogenous
    node coincides with the anchor; the anchor is then nudged left to keep
    the knots strictly increasing.
    """
    n = x_nodes.shape[1]
    b = economy.b
    d_nodes = economy.demand.quantity(p_nodes)
    x_aug = np.vstack([np.full((1, n), b), x_nodes])
    d_aug = np.vstack([np.full((1, n), b), d_nodes])
    dup = x_nodes[0] <= b + 1e-13
    if np.any(dup):
        x_aug[0, dup] = b - _DUP_KNOT_SHIFT
    return x_aug, d_aug


def _interp_demand(x_knots, d_knots, q_cap, x):
    """Piecewise-linear demand with linear extrapolation above the last knot,
    capped at the zero-price quantity when that is finite."""
    x = np.asarray(x, dtype=float)
    res = np.interp(x, x_knots, d_knots)
    top = x_knots[-1]
    if np.any(x > top):
        slope = (d_knots[-1] - d_knots[-2]) / (x_knots[-1] - x_knots[-2])
        res = np.where(x > top, d_knots[-1] + slope * (x - top), res)
    if np.isfinite(q_cap):
        res = np.minimum(res, q_cap)
    return res


def _price_w_matrix(economy, x_aug, d_aug, carry):
    """State-conditional expected next-period price terms of the EGM update.

    Returns W with W[s, m] = m(Z_m) sum_n w_n f(y(Z_m, eta_n) + carry[s], Z_m)
    where f is the interpolated pricing rule; the caller contracts against the
    transition matrix.
    """
    k_pts = carry.size
    n = economy.n_states
    q_cap = economy.zero_price_quantity
    weights = economy.quad.weights
    w = np.empty((k_pts, n))
    for m in range(n):
        x_next = economy.y_nodes[m][np.newaxis, :] + carry[:, np.newaxis]
        d = _interp_demand(x_aug[:, m], d_aug[:, m], q_cap, x_next.ravel())
        price = economy.clamp_price(economy.demand.price(d)).reshape(k_pts, -1)
        w[:, m] = economy.m_values[m] * (price @ weights)
    return w


def egm_step(economy, grid_points, x_nodes, p_nodes):
    """One endogenous-grid update of the (X, P) arrays.

    Prices update to the clamped discounted expected next-period price at
    each storage level; availability backs out from the new prices without
    root-finding.
    """
    grid_points = np.asarray(grid_points, dtype=float)
    x_aug, d_aug = _augmented_nodes(economy, x_nodes, p_nodes)
    w = _price_w_matrix(economy, x_aug, d_aug, economy.decay * grid_points)
    p_tilde = economy.decay * (w @ economy.chain.transition.T) - economy.k
    p_new = economy.clamp_price(p_tilde)
    if not np.all(np.isfinite(p_new)):
        s, j = np.argwhere(~np.isfinite(p_new))[0]
        raise ConvergenceError(f"non-finite price at storage node {s}, state {j}")
    x_new = grid_points[:, np.newaxis] + economy.demand.quantity(p_new)
    return x_new, p_new


def initial_guess(economy, grid_points, kind="consumption"):
    """Starting (X, P) arrays for the fixed-point iteration.

    "consumption" prices each storage level at mean output, P = p(I + mu_y);
    "flat-high" starts from the price cap p(b).  Both lie in the candidate
    space, and by uniqueness either converges to the same rule.
    """
    n = economy.n_states
    k_pts = grid_points.size
    if kind == "consumption":
        p0 = economy.clamp_price(economy.demand.price(grid_points + economy.demand.mu_y))
    elif kind == "flat-high":
        cap = economy.price_cap
        if not np.isfinite(cap):
            raise ModelValidationError("flat-high guess needs a finite price cap")
        p0 = np.full(k_pts, cap)
    else:
        raise ValueError(f"unknown initial guess {kind!r}")
    p0 = np.repeat(p0[:, np.newaxis], n, axis=1)
    x0 = grid_points[:, np.newaxis] + economy.demand.quantity(p0)
    return x0, p0


def _zero_carry_threshold(economy, x_aug, d_aug):
    """Speculative cutoff price per state: discounted expected price of next
    period's output with zero carry-in, capped at p(b) in bounded mode."""
    w = _price_w_matrix(economy, x_aug, d_aug, np.zeros(1))
    pbar0 = economy.decay * (w @ economy.chain.transition.T)[0] - economy.k
    if np.isfinite(economy.price_cap) and not economy.demand.unbounded:
        return np.minimum(pbar0, economy.price_cap)
    return pbar0


def _disposal_thresholds(economy, x_aug, d_aug, grid_max, xtol=1e-10):
    """Free-disposal cutoffs x*(z) by vector bisection.

    x*(z) is the smallest availability at which carrying the post-disposal
    stock x - p^{-1}(0) earns a nonpositive discounted expected return; +inf
    (beyond the search cap at 10 grid maxima) when no such point exists, and
    always +inf in unbounded-demand mode where price never reaches zero.
    """
    n = economy.n_states
    q0 = economy.zero_price_quantity
    if not np.isfinite(q0):
        return np.full(n, np.inf)

    phi = economy.chain.transition

    def expected_return(x):
        # g_j(x_j): storage x_j - q0 carried into next period, state-j odds
        carry = economy.decay * (x - q0)
        w = _price_w_matrix(economy, x_aug, d_aug, carry)  # (n, n): rows follow x
        return economy.decay * np.einsum("jm,jm->j", w, phi) - economy.k

    lo = np.full(n, q0)
    hi = np.full(n, q0 + 10.0 * grid_max)
    out = np.full(n, np.inf)
    active = expected_return(hi) <= 0.0
    if not np.any(active):
        return out
    lo_a, hi_a = lo[active], hi[active]
    idx = np.flatnonzero(active)
    while np.max(hi_a - lo_a) > xtol:
        mid = 0.5 * (lo_a + hi_a)
        g_mid = expected_return(_scatter(mid, idx, n, q0))[idx]
        below = g_mid <= 0.0
        hi_a = np.where(below, mid, hi_a)
        lo_a = np.where(below, lo_a, mid)
    out[idx] = hi_a
    return out


def _scatter(values, idx, n, fill):
    full = np.full(n, fill)
    full[idx] = values
    return full


def _build_solution(economy, grid_points, x_nodes, p_nodes, iterations, residual, history):
    x_aug, d_aug = _augmented_nodes(economy, x_nodes, p_nodes)
    pbar = _zero_carry_threshold(economy, x_aug, d_aug)
    xstar = _disposal_thresholds(
        economy, x_aug, d_aug, grid_points[-1] if grid_points[-1] > 0 else 1.0
    )
    return EquilibriumSolution(
        economy=economy,
        grid=grid_points,
        x_nodes=x_nodes,
        p_nodes=p_nodes,
        d_nodes=economy.demand.quantity(p_nodes),
        x_aug=x_aug,
        d_aug=d_aug,
        pbar=pbar,
        xstar=xstar,
        iterations=iterations,
        final_residual=residual,
        residual_history=history,
    )


def solve_egm(economy, grid=None, tol=None, max_iters=None, initial="consumption"):
    """Iterate the endogenous-grid update to the equilibrium pricing rule.

    Refuses to run when the discounting condition fails.  Iterates until the
    sup-norm price change drops below ``tol`` and the geometric estimate of
    the remaining gap is inside ``tol`` too; raises ConvergenceError with the
    residual history otherwise.
    ``initial`` may be a guess name or an explicit (X, P) pair.
    """
    report = validate_economy(economy)
    if not report.ok:
        raise ModelValidationError(
            "equilibrium existence conditions fail: "
            f"kappa + delta = {report.kappa + report.delta:.6f}, "
            f"min output-value margin = {np.min(report.margins):.6f}"
        )
    num = economy.spec.numerics
    tol = num.tol if tol is None else tol
    max_iters = num.max_iters if max_iters is None else max_iters
    if grid is None:
        grid = storage_grid(num.n_storage_grid, num.storage_grid_max, num.storage_grid_median)
    grid_points = grid.points if isinstance(grid, StorageGrid) else np.asarray(grid, float)

    if isinstance(initial, str):
        x_nodes, p_nodes = initial_guess(economy, grid_points, initial)
    else:
        x_nodes, p_nodes = initial
    history = []
    for iteration in range(1, max_iters + 1):
        x_new, p_new = egm_step(economy, grid_points, x_nodes, p_nodes)
        residual = float(np.max(np.abs(p_new - p_nodes)))
        history.append(residual)
        x_nodes, p_nodes = x_new, p_new
        if residual < tol and _settled(history, tol):
            return _build_solution(
                economy, grid_points, x_nodes, p_nodes, iteration, residual, history
            )
    raise ConvergenceError(
        f"EGM did not reach tol={tol:.1e} within {max_iters} iterations "
        f"(last residual {history[-1]:.3e})",
        residuals=history,
    )


def _settled(history, tol):
    """Geometric bound on the remaining distance to the fixed point.

    One-step changes alone leave ~ residual * theta / (1 - theta) of slack at
    contraction ratio theta, so iterates started from different guesses would
    disagree by several tolerances.  Require the geometric tail estimate to be
    inside tol as well.
    """
    if len(history) < 2 or history[-1] == 0.0:
        return True
    theta = history[-1] / history[-2]
    if theta >= 1.0:
        return False
    return history[-1] * theta / (1.0 - theta) < tol


def _check_domain(sol, x):
    if np.any(np.asarray(x) < sol.b - 1e-9):
        low = float(np.min(x))
        raise ValueError(f"availability {low} below the lower bound b = {sol.b}")


def price_at(sol, x, state_idx):
    """Equilibrium price f*(x, z) for availability x in chain state ``state_idx``.

    Linear interpolation of the demand function through the solved nodes,
    mapped through inverse demand and clamped to the admissible price range.
    """
    _check_domain(sol, x)
    economy = sol.economy
    xk, dk = sol.columns()[state_idx]
    d = _interp_demand(xk, dk, economy.zero_price_quantity, x)
    return economy.clamp_price(economy.demand.price(d))


def demand_at(sol, x, state_idx):
    """Equilibrium demand p^{-1}(f*(x, z)), the quantity consumed."""
    _check_domain(sol, x)
    xk, dk = sol.columns()[state_idx]
    return _interp_demand(xk, dk, sol.economy.zero_price_quantity, x)


def storage_at(sol, x, state_idx):
    """Equilibrium inventory i*(x, z); zero in scarcity, capped by disposal."""
    _check_domain(sol, x)
    x = np.asarray(x, dtype=float)
    d = demand_at(sol, x, state_idx)
    cutoff = sol.xstar[state_idx]
    if np.isfinite(cutoff):
        stock = np.where(x < cutoff, x, cutoff) - d
    else:
        stock = x - d
    low = float(np.min(stock)) if stock.size else 0.0
    if low < -1e-9:
        warnings.warn(f"storage fell below zero by {-low:.3e}; flooring at 0")
    return np.maximum(stock, 0.0)


def prices_on_path(sol, x, state_indices):
    """Vectorized f* evaluation for paired (availability, state) arrays."""
    x = np.asarray(x, dtype=float)
    state_indices = np.asarray(state_indices)
    out = np.empty_like(x)
    for j in np.unique(state_indices):
        mask = state_indices == j
        out[mask] = price_at(sol, x[mask], int(j))
    return out


def storage_on_path(sol, x, state_indices):
    x = np.asarray(x, dtype=float)
    state_indices = np.asarray(state_indices)
    out = np.empty_like(x)
    for j in np.unique(state_indices):
        mask = state_indices == j
        out[mask] = storage_at(sol, x[mask], int(j))
    return out


def constant_rate_economy(spec, r):
    """Degenerate one-state economy with quarterly discount 1/(1 + r)."""
    if 1.0 + r <= 0:
        raise ModelValidationError("gross rate 1 + r must be positive")
    if math.log1p(r) + spec.delta <= 0:
        raise ModelValidationError("constant-rate discounting condition ln(1+r) + delta > 0 fails")
    if spec.demand_channel_active:
        raise ModelValidationError("constant-rate solver expects alpha = 0")
    num = spec.numerics
    chain = MarkovChain(np.array([[(1.0 + r) ** 4]]), np.array([[1.0]]))
    if spec.sigma_y > 0:
        quad = truncated_normal_rule(0.0, 1.0, spec.trunc_sd, num.n_quad_nodes)
    else:
        quad = QuadratureRule.degenerate(0.0)
    mu_y = spec.demand.mu_y
    y_nodes = (mu_y + mu_y * spec.sigma_y * quad.nodes)[np.newaxis, :]
    support_min = mu_y * (1.0 - spec.sigma_y * spec.trunc_sd)
    if spec.x_lower_bound is not None:
        b = float(spec.x_lower_bound)
    elif spec.demand.unbounded:
        b = float(support_min)
    else:
        b = float(min(support_min, 0.0))
    return Economy(
        spec=spec,
        chain=chain,
        m_values=np.array([1.0 / (1.0 + r)]),
        quad=quad,
        y_nodes=y_nodes,
        b=b,
    )


def solve_constant_rate(spec, r, **kwargs):
    """Solve the storage model at a constant net quarterly rate r."""
    return solve_egm(constant_rate_economy(spec, r), **kwargs)


def mit_operator_step(sol_low, r_high):
    """One equilibrium-operator application at rate ``r_high`` to a converged
    constant-rate rule: the temporary pricing rule after an unanticipated
    one-period rate change.

    The implied storage rule keeps the low-rate disposal threshold, matching
    the one-shot construction; the returned solution is exact only for the
    impact period.
    """
    economy_low = sol_low.economy
    if economy_low.n_states != 1:
        raise ModelValidationError("MIT step expects a constant-rate solution")
    r_low = 1.0 / economy_low.m_values[0] - 1.0
    if r_high < r_low - 1e-12:
        raise ModelValidationError("MIT step expects r_high >= r_low")
    economy_high = constant_rate_economy(economy_low.spec, r_high)
    x_new, p_new = egm_step(economy_high, sol_low.grid, sol_low.x_nodes, sol_low.p_nodes)
    x_aug, d_aug = _augmented_nodes(economy_high, x_new, p_new)
    # threshold of T_h f_l: high-rate discounting applied to the low-rate rule
    pbar = _zero_carry_threshold(economy_high, sol_low.x_aug, sol_low.d_aug)
    return EquilibriumSolution(
        economy=economy_high,
        grid=sol_low.grid,
        x_nodes=x_new,
        p_nodes=p_new,
        d_nodes=economy_high.demand.quantity(p_new),
        x_aug=x_aug,
        d_aug=d_aug,
        pbar=pbar,
        xstar=sol_low.xstar.copy(),
        iterations=1,
        final_residual=float(np.max(np.abs(p_new - sol_low.p_nodes))),
    )
