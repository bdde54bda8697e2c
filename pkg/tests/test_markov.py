import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.stats import norm

from stockpile.exceptions import ConvergenceError, ModelValidationError
from stockpile.markov import (
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


def dense_tauchen_oracle(mu, rho, sigma, n, coverage):
    """Straight-line normal-CDF cell integration, independent of the library."""
    half = coverage * sigma / np.sqrt(1 - rho**2)
    grid = np.linspace(mu - half, mu + half, n)
    mids = 0.5 * (grid[:-1] + grid[1:])
    p = np.zeros((n, n))
    for j in range(n):
        m = mu * (1 - rho) + rho * grid[j]
        cdf = norm.cdf((mids - m) / sigma)
        p[j, 0] = cdf[0]
        p[j, -1] = 1 - cdf[-1]
        for i in range(1, n - 1):
            p[j, i] = cdf[i] - cdf[i - 1]
    return grid, p


class TestTauchen:
    def test_rho_zero_gives_identical_rows(self):
        chain = tauchen_ar1(0.0, 0.0, 1.0, 3, coverage=3.0)
        assert np.allclose(chain.transition, chain.transition[0][np.newaxis, :], atol=0)

    def test_matches_dense_cdf_oracle(self):
        chain = tauchen_ar1(0.0, 0.5, 1.0, 5, coverage=3.0)
        grid, p = dense_tauchen_oracle(0.0, 0.5, 1.0, 5, 3.0)
        np.testing.assert_allclose(chain.states[:, 0], grid, atol=1e-12)
        np.testing.assert_allclose(chain.transition, p, atol=1e-12)

    def test_estimated_rate_chain(self):
        # the 101-state chain for the speculative-channel experiments
        sigma_innov = 0.03 * np.sqrt(1 - 0.9407**2)
        chain = tauchen_ar1(1.0062, 0.9407, sigma_innov, 101)
        assert chain.n_states == 101
        assert np.isclose(chain.states[:, 0].mean(), 1.0062)
        assert np.isclose(chain.states[:, 0].max(), 1.0062 + 3 * 0.03)
        op = DiscountOperator(chain, chain.states[:, 0] ** -0.25)
        assert spectral_radius(op) < 1.0  # discounting condition at delta = 0

    def test_single_state(self):
        chain = tauchen_ar1(2.0, 0.5, 1.0, 1)
        assert chain.transition.shape == (1, 1)
        assert chain.states[0, 0] == 2.0

    @pytest.mark.parametrize(
        "kwargs",
        [dict(rho=1.0), dict(rho=-1.5), dict(sigma=0.0), dict(n_states=0)],
    )
    def test_rejects_bad_arguments(self, kwargs):
        args = dict(mu=0.0, rho=0.5, sigma=1.0, n_states=5)
        args.update(kwargs)
        with pytest.raises((ValueError, ModelValidationError)):
            tauchen_ar1(**args)

    @given(
        mu=st.floats(-2, 2),
        rho=st.floats(-0.95, 0.95),
        sigma=st.floats(0.01, 2.0),
        n=st.integers(1, 12),
    )
    @settings(max_examples=40, deadline=None)
    def test_rows_are_stochastic(self, mu, rho, sigma, n):
        chain = tauchen_ar1(mu, rho, sigma, n)
        assert np.all(chain.transition >= 0)
        np.testing.assert_allclose(chain.transition.sum(axis=1), 1.0, atol=1e-12)


class TestDiscretizeVar:
    def test_gamma_zero_reduces_to_tauchen(self):
        chain = discretize_var1(1.0, 0.6, 0.05, 0.52, 0.0, (7, 5))
        # activity has zero stationary variance and collapses to a point
        assert chain.n_states == 7
        assert np.allclose(chain.states[:, 1], 0.0)
        ref = tauchen_ar1(1.0, 0.6, 0.05 * np.sqrt(1 - 0.6**2), 7)
        np.testing.assert_allclose(chain.states[:, 0], ref.states[:, 0], atol=1e-14)
        np.testing.assert_allclose(chain.transition, ref.transition, atol=1e-14)

    def test_conditional_means_match_analytic_oracle(self):
        mu_r, rho_r, sigma_r, rho_a, gamma = 1.0, 0.5, 0.1, 0.4, 0.8
        chain = discretize_var1(mu_r, rho_r, sigma_r, rho_a, gamma, (31, 31))
        r = chain.states[:, 0]
        a = chain.states[:, 1]
        er = chain.transition @ r
        ea = chain.transition @ a
        # analytic one-step conditional means of the structural system
        er_true = mu_r * (1 - rho_r) + rho_r * r
        ea_true = rho_a * a - gamma * rho_r * (r - mu_r)
        h_r = np.diff(np.unique(r)).max()
        h_a = np.diff(np.unique(a)).max()
        # interior states (tail truncation biases the edges)
        interior = (np.abs(r - mu_r) < 0.8 * np.abs(r - mu_r).max()) & (
            np.abs(a) < 0.8 * np.abs(a).max()
        )
        assert np.max(np.abs(er - er_true)[interior]) < h_r
        assert np.max(np.abs(ea - ea_true)[interior]) < h_a

    def test_rows_are_stochastic(self):
        chain = discretize_var1(1.0062, 0.9407, 0.03, 0.52, 0.95, (9, 9))
        np.testing.assert_allclose(chain.transition.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(chain.transition >= 0)

    def test_rejects_nonstationary(self):
        with pytest.raises(ValueError):
            discretize_var1(1.0, 1.01, 0.03, 0.5, 0.9, (5, 5))
        with pytest.raises(ValueError):
            discretize_var1(1.0, 0.5, 0.03, 1.2, 0.9, (5, 5))


class TestStationaryDistribution:
    def test_symmetric_two_state(self):
        chain = MarkovChain(np.array([[0.0], [1.0]]), np.array([[0.9, 0.1], [0.1, 0.9]]))
        np.testing.assert_allclose(stationary_distribution(chain), [0.5, 0.5], atol=1e-12)

    def test_single_state(self):
        chain = MarkovChain(np.array([[0.0]]), np.array([[1.0]]))
        np.testing.assert_allclose(stationary_distribution(chain), [1.0])

    def test_hand_solved_two_state(self):
        # pi solves pi = pi P: pi = (1/3, 2/3)
        chain = MarkovChain(np.array([[0.0], [1.0]]), np.array([[0.5, 0.5], [0.25, 0.75]]))
        np.testing.assert_allclose(stationary_distribution(chain), [1 / 3, 2 / 3], atol=1e-12)

    def test_reducible_chain_names_states(self):
        p = np.array([[1.0, 0.0], [0.5, 0.5]])
        chain = MarkovChain(np.array([[0.0], [1.0]]), p)
        with pytest.raises(ModelValidationError, match=r"\[1\]"):
            stationary_distribution(chain)

    @given(st.integers(2, 6), st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_fixed_point_property(self, n, seed):
        gen = np.random.default_rng(seed)
        p = gen.uniform(0.01, 1.0, (n, n))
        p /= p.sum(axis=1, keepdims=True)
        chain = MarkovChain(np.arange(n, dtype=float)[:, np.newaxis], p)
        pi = stationary_distribution(chain)
        assert np.max(np.abs(pi @ p - pi)) <= 1e-12
        assert np.isclose(pi.sum(), 1.0)


class TestSpectralRadius:
    def test_constant_discount_factor(self):
        chain = MarkovChain(np.array([[0.0], [1.0]]), np.array([[0.3, 0.7], [0.6, 0.4]]))
        op = DiscountOperator(chain, np.full(2, 0.97))
        assert abs(spectral_radius(op) - 0.97) < 1e-12

    def test_explicit_two_state(self):
        # L = [[.45,.55],[.45,.55]] has eigenvalues {1, 0}
        chain = MarkovChain(np.array([[0.0], [1.0]]), np.full((2, 2), 0.5))
        op = DiscountOperator(chain, np.array([0.9, 1.1]))
        assert abs(spectral_radius(op) - 1.0) < 1e-12

    @given(st.integers(2, 6), st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_against_dense_eigenvalue_oracle(self, n, seed):
        gen = np.random.default_rng(seed)
        p = gen.uniform(0.01, 1.0, (n, n))
        p /= p.sum(axis=1, keepdims=True)
        m = gen.uniform(0.5, 1.5, n)
        op = DiscountOperator(MarkovChain(np.arange(n, dtype=float)[:, None], p), m)
        dense = np.max(np.abs(np.linalg.eigvals(op.matrix)))
        assert abs(spectral_radius(op) - dense) < 1e-10

    def test_nonconvergence_raises(self):
        chain = MarkovChain(np.array([[0.0], [1.0]]), np.array([[0.5, 0.5], [0.5, 0.5]]))
        op = DiscountOperator(chain, np.array([1.0, 1.000001]))
        with pytest.raises(ConvergenceError):
            spectral_radius(op, max_iter=2)


def product_limit_kappa(op, n=2000):
    """Direct evaluation of -(1/n) ln E prod M_t via n-step matrix products."""
    ell = op.matrix
    pi = stationary_distribution(op.chain)
    v = np.ones(op.chain.n_states)
    log_scale = 0.0
    for _ in range(n):
        v = ell @ v
        c = np.max(v)
        v /= c
        log_scale += np.log(c)
    return -(log_scale + np.log(pi @ v)) / n


class TestKappa:
    def test_constant_rate_formula(self):
        r = 0.006
        chain = MarkovChain(np.array([[0.0]]), np.array([[1.0]]))
        op = DiscountOperator(chain, np.array([1.0 / (1.0 + r)]))
        assert abs(kappa(op) - np.log(1.006)) < 1e-10

    def test_unit_discounting_gives_zero(self):
        chain = MarkovChain(np.array([[0.0], [1.0]]), np.array([[0.2, 0.8], [0.7, 0.3]]))
        op = DiscountOperator(chain, np.ones(2))
        assert abs(kappa(op)) < 1e-12

    def test_product_limit_oracle(self, rng):
        p = rng.uniform(0.05, 1.0, (5, 5))
        p /= p.sum(axis=1, keepdims=True)
        m = rng.uniform(0.9, 1.1, 5)
        op = DiscountOperator(MarkovChain(np.arange(5.0)[:, None], p), m)
        assert abs(kappa(op) - product_limit_kappa(op, n=2000)) < 1e-3

    @given(st.integers(0, 5_000))
    @settings(max_examples=25, deadline=None)
    def test_monotone_in_discount_factors(self, seed):
        gen = np.random.default_rng(seed)
        n = int(gen.integers(2, 6))
        p = gen.uniform(0.05, 1.0, (n, n))
        p /= p.sum(axis=1, keepdims=True)
        chain = MarkovChain(np.arange(n, dtype=float)[:, None], p)
        m = gen.uniform(0.8, 1.2, n)
        bump = gen.uniform(0.0, 0.3, n)
        low = kappa(DiscountOperator(chain, m + bump))
        high = kappa(DiscountOperator(chain, m))
        assert low <= high + 1e-10


class TestTruncatedNormalRule:
    def test_weights_normalized(self):
        rule = truncated_normal_rule(0.3, 2.0, 5.0, 7)
        assert abs(rule.weights.sum() - 1.0) < 1e-12
        assert np.all(rule.weights >= 0)

    def test_mean_equals_mu(self):
        rule = truncated_normal_rule(1.7, 0.5, 5.0, 9)
        assert abs(rule.nodes @ rule.weights - 1.7) < 1e-10

    def test_second_moment_against_monte_carlo(self):
        from scipy.stats import truncnorm

        mu, sigma, trunc = 0.0, 1.0, 5.0
        rule = truncated_normal_rule(mu, sigma, trunc, 7)
        second = rule.weights @ rule.nodes**2
        gen = np.random.default_rng(99)
        draws = truncnorm.ppf(gen.random(1_000_000), -trunc, trunc)
        mc = np.mean(draws**2)
        se = np.std(draws**2) / 1000.0
        assert abs(second - mc) < 3 * se

    def test_polynomial_exactness(self):
        mu, sigma, trunc, n = 0.2, 1.3, 4.0, 6
        rule = truncated_normal_rule(mu, sigma, trunc, n)
        a, b = mu - trunc * sigma, mu + trunc * sigma
        norm_const = quad(lambda x: norm.pdf(x, mu, sigma), a, b)[0]
        for degree in range(2 * n):
            exact = quad(
                lambda x: x**degree * norm.pdf(x, mu, sigma), a, b, limit=200
            )[0] / norm_const
            gauss = rule.weights @ rule.nodes**degree
            assert abs(gauss - exact) < 1e-9 * max(1.0, abs(exact))

    def test_single_node_is_mean(self):
        rule = truncated_normal_rule(0.7, 1.0, 5.0, 1)
        assert rule.n_nodes == 1
        assert abs(rule.nodes[0] - 0.7) < 1e-12

    def test_rejects_bad_sigma(self):
        with pytest.raises(ValueError):
            truncated_normal_rule(0.0, -1.0, 5.0, 7)


class TestChainValidation:
    def test_rejects_negative_probabilities(self):
        with pytest.raises(ModelValidationError):
            MarkovChain(np.array([[0.0], [1.0]]), np.array([[1.1, -0.1], [0.5, 0.5]]))

    def test_rejects_bad_row_sums(self):
        with pytest.raises(ModelValidationError):
            MarkovChain(np.array([[0.0], [1.0]]), np.array([[0.6, 0.5], [0.5, 0.5]]))

    def test_quadrature_validation(self):
        with pytest.raises(ModelValidationError):
            QuadratureRule(np.array([0.0, 1.0]), np.array([0.5, 0.4]))
