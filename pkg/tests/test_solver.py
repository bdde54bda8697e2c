import dataclasses

import numpy as np
import pytest

from stockpile.exceptions import ConvergenceError, ModelValidationError
from stockpile.model import IsoelasticDemand, ModelSpec, NumericsParams, build_economy
from stockpile.serialize import load_solution, save_solution
from stockpile.solver import (
    egm_step,
    initial_guess,
    mit_operator_step,
    price_at,
    solve_constant_rate,
    solve_egm,
    storage_at,
    storage_grid,
)


class TestStorageGrid:
    def test_shape_and_anchors(self):
        grid = storage_grid(100, 2.0, 0.5)
        pts = grid.points
        assert pts[0] == 0.0
        assert abs(pts[-1] - 2.0) < 1e-12
        assert np.all(np.diff(pts) > 0)
        # exponential construction puts the median value at the middle point
        assert abs(np.median(pts) - 0.5) < 1e-2

    def test_rejects_bad_median(self):
        with pytest.raises(ModelValidationError):
            storage_grid(50, 2.0, 3.0)


def dense_egm_oracle(economy, grid_points, x_nodes, p_nodes):
    """Straight-line evaluation of the price update: explicit loops over
    storage nodes, current states, next states, and quadrature nodes, with
    scalar interpolation of the demand function."""
    decay = economy.decay
    n = economy.n_states
    k_pts = grid_points.size
    demand = economy.demand
    b = economy.b
    q_cap = demand.zero_price_quantity()
    d_nodes = demand.quantity(p_nodes)

    def demand_fn(x, m):
        xs = np.concatenate([[b], x_nodes[:, m]])
        ds = np.concatenate([[b], d_nodes[:, m]])
        if x <= xs[-1]:
            val = np.interp(x, xs, ds)
        else:
            slope = (ds[-1] - ds[-2]) / (xs[-1] - xs[-2])
            val = ds[-1] + slope * (x - xs[-1])
        return min(val, q_cap)

    p_new = np.empty((k_pts, n))
    for s in range(k_pts):
        for j in range(n):
            total = 0.0
            for m in range(n):
                inner = 0.0
                for q in range(economy.quad.n_nodes):
                    x_next = economy.y_nodes[m, q] + decay * grid_points[s]
                    price = demand.price(demand_fn(x_next, m))
                    price = min(max(price, 0.0), demand.price(b))
                    inner += economy.quad.weights[q] * price
                total += economy.chain.transition[j, m] * economy.m_values[m] * inner
            p_new[s, j] = min(max(decay * total - economy.k, 0.0), demand.price(b))
    x_new = grid_points[:, np.newaxis] + demand.quantity(p_new)
    return x_new, p_new


class TestEgmStep:
    def test_one_step_matches_dense_oracle(self, small_economy):
        grid = storage_grid(20, 2.0, 0.5).points
        x0, p0 = initial_guess(small_economy, grid, "consumption")
        x1, p1 = egm_step(small_economy, grid, x0, p0)
        x_ref, p_ref = dense_egm_oracle(small_economy, grid, x0, p0)
        np.testing.assert_allclose(p1, p_ref, atol=1e-12)
        np.testing.assert_allclose(x1, x_ref, atol=1e-12)

    def test_zero_storage_row_consistency(self, small_solution):
        # at I_0 = 0, availability is exactly the quantity demanded
        demand = small_solution.economy.demand
        np.testing.assert_allclose(
            small_solution.x_nodes[0],
            demand.quantity(small_solution.p_nodes[0]),
            atol=1e-12,
        )

    def test_fixed_point_reapplication(self, small_economy, small_solution):
        _, p_next = egm_step(
            small_economy,
            small_solution.grid,
            small_solution.x_nodes,
            small_solution.p_nodes,
        )
        residual = np.max(np.abs(p_next - small_solution.p_nodes))
        assert residual <= small_economy.spec.numerics.tol


class TestSolve:
    def test_converges_and_reports(self, small_solution, small_spec):
        assert small_solution.final_residual < small_spec.numerics.tol
        assert small_solution.iterations < small_spec.numerics.max_iters
        assert len(small_solution.residual_history) == small_solution.iterations

    def test_two_initial_guesses_agree(self, small_economy, small_solution):
        other = solve_egm(small_economy, initial="flat-high")
        tol = small_economy.spec.numerics.tol
        xs = np.linspace(
            small_economy.b + 1e-9, float(np.max(small_solution.x_nodes)), 800
        )
        gap = max(
            float(np.max(np.abs(
                np.asarray(price_at(small_solution, xs, j))
                - np.asarray(price_at(other, xs, j))
            )))
            for j in range(small_economy.n_states)
        )
        assert gap <= 10 * tol

    def test_refuses_failing_discount_condition(self):
        from stockpile.model import RateParams

        spec = ModelSpec(
            delta=0.0,
            rate=RateParams(mu_r=0.98, rho_r=0.9407, sigma_r=0.03),
            numerics=NumericsParams(n_rate_states=15, n_storage_grid=40),
        )
        with pytest.raises(ModelValidationError, match="existence"):
            solve_egm(build_economy(spec))

    def test_nonconvergence_carries_history(self, small_economy):
        with pytest.raises(ConvergenceError) as err:
            solve_egm(small_economy, max_iters=3)
        assert len(err.value.residuals) == 3

    def test_isoelastic_mode(self):
        spec = ModelSpec(
            demand=IsoelasticDemand(lam=0.06),
            numerics=NumericsParams(n_rate_states=9, n_storage_grid=50),
        )
        economy = build_economy(spec)
        assert economy.b > 0  # unbounded demand anchors at minimum output
        sol = solve_egm(economy)
        assert np.all(np.isinf(sol.xstar))  # price never reaches zero
        xs = np.linspace(economy.b + 1e-6, 3.0, 200)
        prices = np.asarray(price_at(sol, xs, 4))
        assert np.all(np.diff(prices) <= 1e-10)
        assert np.all(prices > 0)


class TestPriceAt:
    def test_interpolates_through_nodes(self, small_solution):
        for j in (0, 7, 14):
            vals = np.asarray(price_at(small_solution, small_solution.x_nodes[:, j], j))
            np.testing.assert_allclose(vals, small_solution.p_nodes[:, j], atol=1e-12)

    def test_monotone_nonincreasing(self, small_solution, small_economy):
        xs = np.linspace(small_economy.b + 1e-9, 4.0, 1000)
        for j in range(0, small_economy.n_states, 4):
            assert np.all(np.diff(np.asarray(price_at(small_solution, xs, j))) <= 1e-12)

    def test_deep_scarcity_equals_inverse_demand(self, small_solution, small_economy):
        xs = np.linspace(0.76, 0.9, 50)  # below every endogenous node
        for j in (0, 14):
            np.testing.assert_allclose(
                np.asarray(price_at(small_solution, xs, j)),
                small_economy.demand.price(xs),
                atol=1e-6,
            )

    def test_domain_error(self, small_solution):
        with pytest.raises(ValueError, match="lower bound"):
            price_at(small_solution, small_solution.b - 0.5, 0)


class TestStorageAt:
    def test_zero_in_scarcity(self, small_solution, small_economy):
        for j in (0, 7, 14):
            cutoff = small_economy.demand.quantity(small_solution.pbar[j])
            xs = np.linspace(small_economy.b + 1e-9, cutoff - 1e-6, 50)
            assert np.all(np.asarray(storage_at(small_solution, xs, j)) == 0.0)

    def test_nondecreasing(self, small_solution, small_economy):
        xs = np.linspace(small_economy.b + 1e-9, 5.0, 800)
        for j in (0, 7, 14):
            stock = np.asarray(storage_at(small_solution, xs, j))
            assert np.all(np.diff(stock) >= -1e-12)

    def test_market_clearing_identity(self, small_solution, small_economy):
        for j in (0, 7, 14):
            hi = min(float(small_solution.xstar[j]), 5.0)
            xs = np.linspace(small_economy.b + 1e-9, hi - 1e-6, 300)
            q = small_economy.demand.quantity(np.asarray(price_at(small_solution, xs, j)))
            stock = np.asarray(storage_at(small_solution, xs, j))
            np.testing.assert_allclose(xs, q + stock, atol=1e-9)


class TestConstantRate:
    def test_equals_generic_solver_on_one_state_chain(self, benchmark_spec):
        sol = solve_constant_rate(benchmark_spec, 0.01)
        assert sol.economy.n_states == 1
        assert abs(sol.economy.m_values[0] - 1 / 1.01) < 1e-15
        # fixed point of the same operator
        _, p_next = egm_step(sol.economy, sol.grid, sol.x_nodes, sol.p_nodes)
        assert np.max(np.abs(p_next - sol.p_nodes)) <= benchmark_spec.numerics.tol

    def test_rate_ordering_of_rules(self, benchmark_spec):
        low = solve_constant_rate(benchmark_spec, 0.01)
        high = solve_constant_rate(benchmark_spec, 0.02)
        xs = np.linspace(low.economy.b + 1e-9, 4.0, 500)
        gap = np.asarray(price_at(low, xs, 0)) - np.asarray(price_at(high, xs, 0))
        assert np.all(gap >= -1e-9)
        assert low.xstar[0] >= high.xstar[0]

    def test_rejects_violating_rate(self, benchmark_spec):
        with pytest.raises(ModelValidationError):
            solve_constant_rate(dataclasses.replace(benchmark_spec, delta=0.0), -0.01)


class TestMitOperator:
    def test_orderings(self, benchmark_spec):
        low = solve_constant_rate(benchmark_spec, 0.005)
        step = mit_operator_step(low, 0.015)
        xs = np.linspace(low.economy.b + 1e-9, 4.0, 500)
        f_low = np.asarray(price_at(low, xs, 0))
        f_mit = np.asarray(price_at(step, xs, 0))
        assert np.all(f_mit <= f_low + 1e-12)
        i_low = np.asarray(storage_at(low, xs, 0))
        i_mit = np.asarray(storage_at(step, xs, 0))
        assert np.all(i_mit <= i_low + 1e-12)

    def test_same_rate_is_identity_up_to_tol(self, benchmark_spec):
        low = solve_constant_rate(benchmark_spec, 0.005)
        step = mit_operator_step(low, 0.005)
        assert step.final_residual <= benchmark_spec.numerics.tol

    def test_rejects_rate_cut(self, benchmark_spec):
        low = solve_constant_rate(benchmark_spec, 0.01)
        with pytest.raises(ModelValidationError):
            mit_operator_step(low, 0.005)


class TestSerialization:
    def test_roundtrip(self, small_solution, tmp_path):
        path = tmp_path / "solution.json"
        save_solution(small_solution, path, metadata={"seed": 1})
        loaded = load_solution(path)
        np.testing.assert_array_equal(loaded.x_nodes, small_solution.x_nodes)
        np.testing.assert_array_equal(loaded.p_nodes, small_solution.p_nodes)
        np.testing.assert_array_equal(loaded.pbar, small_solution.pbar)
        np.testing.assert_array_equal(loaded.xstar, small_solution.xstar)
        xs = np.linspace(small_solution.b + 1e-9, 3.0, 100)
        for j in (0, 7):
            np.testing.assert_array_equal(
                np.asarray(price_at(loaded, xs, j)),
                np.asarray(price_at(small_solution, xs, j)),
            )

    def test_rejects_foreign_files(self, tmp_path):
        from stockpile.exceptions import ConfigError

        bad = tmp_path / "x.json"
        bad.write_text('{"format": "other"}')
        with pytest.raises(ConfigError):
            load_solution(bad)
