"""Scikit-learn style front end for the storage-model solver.

``StorageModel`` carries the full parameterization as constructor arguments
(so ``get_params`` / ``set_params`` / cloning work), solves the equilibrium
in ``fit``, and evaluates the pricing and storage rules in ``predict``.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ModelValidationError
from .girf import GirfSpec, girf
from .model import (
    ActivityParams,
    IsoelasticDemand,
    LinearDemand,
    ModelSpec,
    NumericsParams,
    RateParams,
    build_economy,
    validate_economy,
)
from .simulation import moments, simulate, stationary_sample
from .solver import price_at, solve_egm, storage_at

__all__ = ["StorageModel"]


class StorageModel(BaseEstimator):
    """Competitive storage model with stochastically evolving interest rates.

    ``fit`` verifies the equilibrium existence conditions and computes the
    pricing rule by the endogenous grid method.  ``predict`` evaluates the
    solved rule at (availability, exogenous-state-index) pairs.

    Parameters mirror the model blocks: demand curve, depreciation and
    storage cost, output-shock dispersion, the annual-rate process, the
    activity process (``alpha=0`` switches the demand channel off), and the
    numerical controls.
    """

    def __init__(
        self,
        delta=0.02,
        k=0.0,
        demand="linear",
        elasticity=-0.06,
        pbar=1.0,
        mu_y=1.0,
        sigma_y=0.05,
        trunc_sd=5.0,
        mu_r=1.0062,
        rho_r=0.9407,
        sigma_r=0.03,
        rho_a=0.0,
        gamma=0.0,
        alpha=0.0,
        n_rate_states=51,
        n_activity_states=1,
        n_storage_grid=100,
        storage_grid_max=2.0,
        storage_grid_median=0.5,
        n_quad_nodes=7,
        tol=1e-4,
        max_iters=5000,
    ):
        self.delta = delta
        self.k = k
        self.demand = demand
        self.elasticity = elasticity
        self.pbar = pbar
        self.mu_y = mu_y
        self.sigma_y = sigma_y
        self.trunc_sd = trunc_sd
        self.mu_r = mu_r
        self.rho_r = rho_r
        self.sigma_r = sigma_r
        self.rho_a = rho_a
        self.gamma = gamma
        self.alpha = alpha
        self.n_rate_states = n_rate_states
        self.n_activity_states = n_activity_states
        self.n_storage_grid = n_storage_grid
        self.storage_grid_max = storage_grid_max
        self.storage_grid_median = storage_grid_median
        self.n_quad_nodes = n_quad_nodes
        self.tol = tol
        self.max_iters = max_iters

    def make_spec(self):
        """Assemble the ModelSpec implied by the current parameters."""
        if self.demand == "linear":
            curve = LinearDemand(pbar=self.pbar, mu_y=self.mu_y, lam=self.elasticity)
        elif self.demand == "isoelastic":
            curve = IsoelasticDemand(lam=self.elasticity, pbar=self.pbar, mu_y=self.mu_y)
        else:
            raise ModelValidationError(f"unknown demand kind {self.demand!r}")
        return ModelSpec(
            delta=self.delta,
            k=self.k,
            demand=curve,
            sigma_y=self.sigma_y,
            trunc_sd=self.trunc_sd,
            rate=RateParams(mu_r=self.mu_r, rho_r=self.rho_r, sigma_r=self.sigma_r),
            activity=ActivityParams(rho_a=self.rho_a, gamma=self.gamma, alpha=self.alpha),
            numerics=NumericsParams(
                n_rate_states=self.n_rate_states,
                n_activity_states=self.n_activity_states,
                n_storage_grid=self.n_storage_grid,
                storage_grid_max=self.storage_grid_max,
                storage_grid_median=self.storage_grid_median,
                n_quad_nodes=self.n_quad_nodes,
                tol=self.tol,
                max_iters=self.max_iters,
            ),
        )

    def fit(self, X=None, y=None):
        """Solve for the equilibrium pricing rule.  X and y are ignored."""
        spec = self.make_spec()
        self.economy_ = build_economy(spec)
        self.validation_ = validate_economy(self.economy_)
        self.solution_ = solve_egm(self.economy_)
        self.n_iter_ = self.solution_.iterations
        self.pbar_threshold_ = self.solution_.pbar
        self.disposal_threshold_ = self.solution_.xstar
        return self

    def _check_points(self, X):
        X = check_array(X, ensure_2d=True, dtype=float)
        if X.shape[1] != 2:
            raise ValueError("expected columns (availability, state_index)")
        idx = X[:, 1]
        if np.any(idx != np.round(idx)):
            raise ValueError("state_index column must hold integers")
        if np.any((idx < 0) | (idx >= self.economy_.n_states)):
            raise ValueError("state_index outside the chain")
        return X[:, 0], idx.astype(int)

    def predict(self, X):
        """Equilibrium prices at rows of (availability, state_index)."""
        check_is_fitted(self, "solution_")
        x, idx = self._check_points(X)
        out = np.empty_like(x)
        for j in np.unique(idx):
            mask = idx == j
            out[mask] = price_at(self.solution_, x[mask], int(j))
        return out

    def predict_storage(self, X):
        """Equilibrium inventory at rows of (availability, state_index)."""
        check_is_fitted(self, "solution_")
        x, idx = self._check_points(X)
        out = np.empty_like(x)
        for j in np.unique(idx):
            mask = idx == j
            out[mask] = storage_at(self.solution_, x[mask], int(j))
        return out

    def simulate(self, t_periods, burn, seed):
        check_is_fitted(self, "solution_")
        return simulate(self.solution_, self.economy_, t_periods, burn, seed)

    def moments(self, t_periods=200_000, burn=50_000, seed=0):
        return moments(self.simulate(t_periods, burn, seed))

    def impulse_response(self, x0=None, z0=None, **girf_kwargs):
        """Generalized IRF conditioned at (x0, z0); defaults to the stationary
        mean availability and the state nearest the mean annual rate."""
        check_is_fitted(self, "solution_")
        if x0 is None or z0 is None:
            from .girf import state_near_rate

            sample = stationary_sample(
                self.solution_, self.economy_, seed=girf_kwargs.get("seed", 0)
            )
            x0 = sample.mean_x() if x0 is None else x0
            z0 = state_near_rate(sample, self.mu_r) if z0 is None else z0
        gspec = GirfSpec(x0=x0, z0=int(z0), **girf_kwargs)
        return girf(self.solution_, self.economy_, gspec)
