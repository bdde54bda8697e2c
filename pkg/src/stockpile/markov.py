"""Finite Markov-chain machinery for the exogenous processes.

Discretization of the AR(1) interest rate and the joint (rate, activity)
VAR(1), stationary distributions, the discount operator L(z, z') =
Phi(z, z') m(z'), its spectral radius, and the asymptotic yield it implies.
Also provides the Gauss rule for the truncated-normal output shock.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_discrete_lyapunov
from scipy.sparse.csgraph import connected_components
from scipy.special import ndtr
from scipy.stats import truncnorm

from .exceptions import ConvergenceError, ModelValidationError

__all__ = [
    "MarkovChain",
    "DiscountOperator",
    "QuadratureRule",
    "tauchen_ar1",
    "discretize_var1",
    "stationary_distribution",
    "spectral_radius",
    "kappa",
    "truncated_normal_rule",
]

_ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class MarkovChain:
    """Finite-state chain: state vectors (N, d) plus a row-stochastic matrix."""

    states: np.ndarray
    transition: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        if states.ndim == 1:
            states = states[:, np.newaxis]
        transition = np.asarray(self.transition, dtype=float)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "transition", transition)
        n = states.shape[0]
        if n < 1:
            raise ModelValidationError("chain needs at least one state")
        if transition.shape != (n, n):
            raise ModelValidationError(
                f"transition must be {n}x{n}, got {transition.shape}"
            )
        if np.any(transition < 0):
            raise ModelValidationError("transition probabilities must be nonnegative")
        row_err = np.max(np.abs(transition.sum(axis=1) - 1.0))
        if row_err > _ROW_SUM_TOL:
            raise ModelValidationError(
                f"transition rows must sum to 1 (max deviation {row_err:.3e})"
            )

    @property
    def n_states(self):
        return self.states.shape[0]

    @property
    def dim(self):
        return self.states.shape[1]

    def cumulative(self):
        """Row-wise cumulative transition probabilities, for inverse-CDF draws."""
        return np.cumsum(self.transition, axis=1)


@dataclass(frozen=True)
class DiscountOperator:
    """Chain plus per-state one-period discount factors m(z) = E[m(z, eps) | z]."""

    chain: MarkovChain
    m_values: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m_values, dtype=float).ravel()
        object.__setattr__(self, "m_values", m)
        if m.shape[0] != self.chain.n_states:
            raise ModelValidationError("m_values length must match the chain size")
        if np.any(m <= 0):
            raise ModelValidationError("discount factors must be strictly positive")

    @property
    def matrix(self):
        """L = Phi D with D = diag(m): entries Phi(z, z') m(z')."""
        return self.chain.transition * self.m_values[np.newaxis, :]


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and normalized nonnegative weights for numerical integration."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float).ravel()
        weights = np.asarray(self.weights, dtype=float).ravel()
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if nodes.shape != weights.shape or nodes.size == 0:
            raise ModelValidationError("nodes and weights must be nonempty and match")
        if np.any(weights < 0):
            raise ModelValidationError("quadrature weights must be nonnegative")
        if abs(weights.sum() - 1.0) > _ROW_SUM_TOL:
            raise ModelValidationError("quadrature weights must sum to 1")

    @property
    def n_nodes(self):
        return self.nodes.size

    @staticmethod
    def degenerate(value=0.0):
        """Single-node rule carrying all mass at one point."""
        return QuadratureRule(np.array([value]), np.array([1.0]))


def _cell_masses(cond_mean, sigma, grid):
    """Normal(cond_mean, sigma^2) mass of each grid cell, tails absorbed at the ends.

    Cells are delimited by grid midpoints.  Rows are built as differences of
    an augmented CDF vector with endpoints 0 and 1, so they sum to 1 exactly.
    """
    n = grid.size
    if n == 1:
        return np.ones(1)
    mids = 0.5 * (grid[:-1] + grid[1:])
    cdf = np.empty(n + 1)
    cdf[0], cdf[-1] = 0.0, 1.0
    cdf[1:-1] = ndtr((mids - cond_mean) / sigma)
    return np.diff(cdf)


def tauchen_ar1(mu, rho, sigma, n_states, coverage=3.0):
    """Discretize x' = mu (1 - rho) + rho x + sigma eps, eps ~ N(0, 1).

    ``sigma`` is the innovation standard deviation.  The grid is equally
    spaced, centered at ``mu``, and spans ``coverage`` unconditional standard
    deviations sigma / sqrt(1 - rho^2) on each side.  Transition rows are the
    conditional normal cell masses, with the boundary cells absorbing the
    tails, so each row sums to one exactly.
    """
    if not -1.0 < rho < 1.0:
        raise ValueError(f"|rho| must be < 1, got {rho}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if n_states < 1:
        raise ValueError(f"n_states must be >= 1, got {n_states}")
    if coverage <= 0:
        raise ValueError(f"coverage must be positive, got {coverage}")
    if n_states == 1:
        return MarkovChain(np.array([[mu]]), np.array([[1.0]]))
    half_width = coverage * sigma / np.sqrt(1.0 - rho**2)
    grid = np.linspace(mu - half_width, mu + half_width, n_states)
    transition = np.empty((n_states, n_states))
    for j in range(n_states):
        transition[j] = _cell_masses(mu * (1.0 - rho) + rho * grid[j], sigma, grid)
    return MarkovChain(grid[:, np.newaxis], transition)


def _affine_cells(intercept, slope, grid):
    """Epsilon-intervals over which intercept + slope * eps snaps to each node.

    Returns (lo, hi) arrays; the intervals partition the real line.  A zero
    slope puts the whole line on the node nearest the intercept.
    """
    n = grid.size
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    if n == 1:
        return lo, hi
    if slope == 0.0:
        idx = int(np.argmin(np.abs(grid - intercept)))
        lo[:], hi[:] = np.inf, -np.inf  # empty everywhere except the snapped node
        lo[idx], hi[idx] = -np.inf, np.inf
        return lo, hi
    cuts = (0.5 * (grid[:-1] + grid[1:]) - intercept) / slope
    if slope > 0:
        lo[1:], hi[:-1] = cuts, cuts
    else:  # decreasing map: high eps lands on low nodes
        lo[:-1], hi[1:] = cuts, cuts
    return lo, hi


def discretize_var1(mu_r, rho_r, sigma_r, rho_a, gamma, n_states, coverage=3.0):
    """Joint finite chain for the rate/activity system driven by one shock.

    The structural system is
        R' = mu_r (1 - rho_r) + rho_r R + sigma_r sqrt(1 - rho_r^2) eps
        A' = rho_a A - gamma (R' - mu_r)
    with ``sigma_r`` the stationary standard deviation of R.  Both next-period
    coordinates are affine in the single innovation, so the product-grid cell
    mass of a joint node is the normal measure of an interval intersection,
    which this routine computes exactly.  Per-dimension grids are equally
    spaced Tauchen-style grids on the stationary supports; a dimension with
    zero stationary variance collapses to a single point.

    ``n_states`` is a pair (rate nodes, activity nodes).
    """
    if not -1.0 < rho_r < 1.0:
        raise ValueError(f"|rho_r| must be < 1, got {rho_r}")
    if not -1.0 < rho_a < 1.0:
        raise ValueError(f"|rho_a| must be < 1, got {rho_a}")
    if sigma_r <= 0:
        raise ValueError(f"sigma_r must be positive, got {sigma_r}")
    if gamma < 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    n_r, n_a = (int(n_states[0]), int(n_states[1]))
    if n_r < 1 or n_a < 1:
        raise ValueError(f"state counts must be >= 1, got {n_states}")

    sigma_innov = sigma_r * np.sqrt(1.0 - rho_r**2)
    companion = np.array([[rho_r, 0.0], [-gamma * rho_r, rho_a]])
    if np.max(np.abs(np.linalg.eigvals(companion))) >= 1.0:
        raise ModelValidationError("VAR companion matrix is not stationary")
    loading = np.array([sigma_innov, -gamma * sigma_innov])
    stat_cov = solve_discrete_lyapunov(companion, np.outer(loading, loading))
    sd_r, sd_a = np.sqrt(np.maximum(np.diag(stat_cov), 0.0))

    r_grid = (
        np.linspace(mu_r - coverage * sd_r, mu_r + coverage * sd_r, n_r)
        if sd_r > 0 and n_r > 1
        else np.array([mu_r])
    )
    a_grid = (
        np.linspace(-coverage * sd_a, coverage * sd_a, n_a)
        if sd_a > 0 and n_a > 1
        else np.array([0.0])
    )
    n_r, n_a = r_grid.size, a_grid.size
    n = n_r * n_a

    # rate-major ordering of the product states
    states = np.column_stack(
        [np.repeat(r_grid, n_a), np.tile(a_grid, n_r)]
    )
    transition = np.zeros((n, n))
    for j in range(n):
        r_j, a_j = states[j]
        mean_r = mu_r * (1.0 - rho_r) + rho_r * r_j
        mean_a = rho_a * a_j - gamma * rho_r * (r_j - mu_r)
        lo_r, hi_r = _affine_cells(mean_r, sigma_innov, r_grid)
        lo_a, hi_a = _affine_cells(mean_a, -gamma * sigma_innov, a_grid)
        lo = np.maximum(lo_r[:, np.newaxis], lo_a[np.newaxis, :])
        hi = np.minimum(hi_r[:, np.newaxis], hi_a[np.newaxis, :])
        mass = np.clip(ndtr(hi) - ndtr(lo), 0.0, None)
        transition[j] = mass.ravel()
    transition /= transition.sum(axis=1, keepdims=True)
    states, transition = _recurrent_class(states, transition)
    return MarkovChain(states, transition)


def _recurrent_class(states, transition):
    """Restrict a chain to its unique closed communicating class.

    The single-shock VAR concentrates transitions on a diagonal band of the
    product grid; corner states receive exactly zero inflow and would make
    the chain reducible.  Rows of the closed class carry no mass outside it,
    so the restriction is exact.
    """
    n_comp, labels = connected_components(
        transition > 0, directed=True, connection="strong"
    )
    if n_comp == 1:
        return states, transition
    closed = []
    for comp in range(n_comp):
        members = labels == comp
        if transition[members][:, ~members].sum() == 0.0:
            closed.append(comp)
    if len(closed) != 1:
        raise ModelValidationError(
            f"VAR discretization produced {len(closed)} closed communicating classes"
        )
    keep = labels == closed[0]
    return states[keep], transition[np.ix_(keep, keep)]


def _strongly_connected_or_raise(transition):
    n_comp, labels = connected_components(
        transition > 0, directed=True, connection="strong"
    )
    if n_comp > 1:
        outside = np.flatnonzero(labels != labels[0])
        raise ModelValidationError(
            "chain is reducible; states not communicating with state 0: "
            f"{outside.tolist()}"
        )


def stationary_distribution(chain, tol=1e-12):
    """Left eigenvector pi with pi Phi = pi, pi >= 0, sum(pi) = 1.

    Requires an irreducible chain; a reducible one raises with the offending
    state set named.
    """
    phi = chain.transition
    n = chain.n_states
    if n == 1:
        return np.ones(1)
    _strongly_connected_or_raise(phi)
    a = phi.T - np.eye(n)
    a[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    pi = np.linalg.solve(a, rhs)
    pi = np.maximum(pi, 0.0)
    pi /= pi.sum()
    for _ in range(100):
        residual = np.max(np.abs(pi @ phi - pi))
        if residual <= tol:
            return pi
        pi = pi @ phi
        pi /= pi.sum()
    raise ConvergenceError(
        f"stationary distribution residual {residual:.3e} above {tol:.1e}"
    )


def spectral_radius(op, tol=1e-12, max_iter=100_000):
    """Perron root s(L) of the discount operator by power iteration.

    Starts from the all-ones vector; stops when the sup-norm growth factor is
    stable to ``tol`` in relative terms on two consecutive iterations.
    """
    ell = op.matrix
    v = np.ones(op.chain.n_states)
    estimate = np.inf
    hits = 0
    for _ in range(max_iter):
        w = ell @ v
        norm = np.max(np.abs(w))
        if norm == 0.0:
            return 0.0
        previous, estimate = estimate, norm / np.max(np.abs(v))
        v = w / norm
        if abs(estimate - previous) <= tol * max(estimate, 1e-300):
            hits += 1
            if hits >= 2:
                return estimate
        else:
            hits = 0
    raise ConvergenceError(
        f"power iteration did not stabilize within {max_iter} iterations",
        residuals=[abs(estimate - previous)],
    )


def kappa(op, tol=1e-12, max_iter=100_000):
    """Asymptotic yield implied by the discount operator: -ln s(L)."""
    return -np.log(spectral_radius(op, tol=tol, max_iter=max_iter))


def _stieltjes_rule(points, weights, n_nodes):
    """Gauss rule for the discrete measure sum_i w_i delta(x_i) via Stieltjes.

    Builds the three-term recurrence of the measure's orthogonal polynomials,
    then takes nodes and weights from the Jacobi matrix (Golub-Welsch).
    """
    alpha = np.empty(n_nodes)
    beta = np.empty(n_nodes)
    total = weights.sum()
    p_prev = np.zeros_like(points)
    p_curr = np.ones_like(points)
    norm_curr = total
    alpha[0] = np.dot(weights, points) / total
    beta[0] = total
    for k in range(1, n_nodes):
        p_next = (points - alpha[k - 1]) * p_curr - (beta[k - 1] if k > 1 else 0.0) * p_prev
        norm_next = np.dot(weights, p_next**2)
        if norm_next <= 0:
            raise ValueError(
                f"measure supports at most {k} quadrature nodes, requested {n_nodes}"
            )
        alpha[k] = np.dot(weights, points * p_next**2) / norm_next
        beta[k] = norm_next / norm_curr
        p_prev, p_curr, norm_curr = p_curr, p_next, norm_next
    if n_nodes == 1:
        return np.array([alpha[0]]), np.array([1.0])
    nodes, vectors = eigh_tridiagonal(alpha, np.sqrt(beta[1:]))
    rule_weights = beta[0] * vectors[0, :] ** 2
    return nodes, rule_weights


def truncated_normal_rule(mu, sigma, trunc_sd, n_nodes):
    """Gauss rule for N(mu, sigma^2) truncated at ``trunc_sd`` deviations.

    Exact for polynomials up to degree 2 n_nodes - 1 against the truncated
    density; weights are renormalized to sum to one.  The recurrence is built
    from a dense Gauss-Legendre discretization of the truncated density, which
    reproduces its moments to machine precision.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if trunc_sd <= 0:
        raise ValueError(f"trunc_sd must be positive, got {trunc_sd}")
    if n_nodes < 1:
        raise ValueError(f"n_nodes must be >= 1, got {n_nodes}")
    base_n = max(200, 8 * n_nodes)
    t, w = np.polynomial.legendre.leggauss(base_n)
    t = trunc_sd * t  # standardized support [-trunc_sd, trunc_sd]
    w = trunc_sd * w * np.exp(-0.5 * t**2)
    w /= w.sum()
    nodes, weights = _stieltjes_rule(t, w, n_nodes)
    weights = np.maximum(weights, 0.0)
    weights /= weights.sum()
    return QuadratureRule(mu + sigma * nodes, weights)


def truncated_normal_ppf(u, trunc_sd):
    """Inverse CDF of the standard normal truncated at +/- trunc_sd."""
    return truncnorm.ppf(u, -trunc_sd, trunc_sd)
