import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from dynprobit.model import DynamicProbitModel, build_prior_covariance, random_stable_model
from dynprobit.sun import (SamplerError, SmoothingDraws, integrated_autocorr, mc_moments,
                           quadrature_posterior_moments, sample_smoothing_iid,
                           sample_truncated_mvn, sun_smoothing_params)

HALF_NORMAL_MEAN = math.sqrt(2 / math.pi)
HALF_NORMAL_VAR = 1 - 2 / math.pi


def literal_params(omega, model):
    """Dense evaluation of the SUN formulas with explicit D, omega and Omega_bar."""
    n, p = model.n, model.p
    O = omega.matrix
    D = np.zeros((n, n * p))
    for t in range(n):
        D[t, t * p:(t + 1) * p] = (2 * model.y[t] - 1) * model.X[t]
    S = D @ O @ D.T + np.eye(n)
    s = np.diag(np.sqrt(np.diag(S)))
    w = np.diag(np.sqrt(np.diag(O)))
    O_bar = np.linalg.inv(w) @ O @ np.linalg.inv(w)
    Delta = O_bar @ w @ D.T @ np.linalg.inv(s)
    Gamma = np.linalg.inv(s) @ S @ np.linalg.inv(s)
    return D, np.diag(s), Delta, Gamma


def test_one_site_params(one_site):
    model, omega = one_site
    params = sun_smoothing_params(omega, model)
    assert params.s[0] == pytest.approx(math.sqrt(2))
    np.testing.assert_allclose(params.Gamma, [[1.0]])
    np.testing.assert_allclose(params.Delta, [[1 / math.sqrt(2)]])


@pytest.mark.parametrize("seed", range(8))
def test_params_match_dense_formulas(seed):
    rng = np.random.default_rng(seed)
    model = random_stable_model(rng, int(rng.integers(1, 7)), int(rng.integers(1, 4)))
    omega = build_prior_covariance(model)
    params = sun_smoothing_params(omega, model)
    D, s, Delta, Gamma = literal_params(omega, model)
    np.testing.assert_allclose(params.D, D, atol=1e-12)
    np.testing.assert_allclose(params.s, s, rtol=1e-12)
    np.testing.assert_allclose(params.Delta, Delta, atol=1e-12)
    np.testing.assert_allclose(params.Gamma, Gamma, atol=1e-12)
    np.testing.assert_allclose(np.diag(params.Gamma), 1.0, atol=1e-12)
    np.testing.assert_array_equal(params.Gamma, params.Gamma.T)
    np.linalg.cholesky(params.Gamma)
    assert np.all(params.s >= 1.0)


def test_response_flip_propagates_signs():
    rng = np.random.default_rng(2)
    model = random_stable_model(rng, 5, 2)
    omega = build_prior_covariance(model)
    t = 3
    y = model.y.copy()
    y[t] = 1 - y[t]
    a = sun_smoothing_params(omega, model)
    b = sun_smoothing_params(omega, model.with_responses(y))
    flip = np.ones(model.n)
    flip[t] = -1
    np.testing.assert_allclose(b.D, a.D * flip[:, None], atol=1e-15)
    np.testing.assert_allclose(b.Gamma, a.Gamma * np.outer(flip, flip), atol=1e-15)
    np.testing.assert_allclose(b.Delta, a.Delta * flip, atol=1e-15)


@pytest.mark.parametrize("method", ["rejection", "gibbs"])
def test_half_normal_moments(method):
    draws = sample_truncated_mvn(np.eye(1), 100_000, seed=1, method=method)[:, 0]
    se = math.sqrt(HALF_NORMAL_VAR / draws.size)
    assert abs(draws.mean() - HALF_NORMAL_MEAN) < 4 * se
    # var of the sample variance is (mu4 - sigma^4) / N
    mu4 = np.mean((draws - draws.mean()) ** 4)
    se_var = math.sqrt((mu4 - draws.var() ** 2) / draws.size)
    assert abs(draws.var() - HALF_NORMAL_VAR) < 4 * se_var


@pytest.mark.parametrize("method", ["rejection", "gibbs"])
def test_independent_coordinates(method):
    draws = sample_truncated_mvn(np.eye(2), 100_000, seed=2, method=method)
    corr = np.corrcoef(draws.T)[0, 1]
    assert abs(corr) < 4 / math.sqrt(len(draws))


def test_rejection_and_gibbs_means_agree():
    gamma = np.full((3, 3), 0.5) + 0.5 * np.eye(3)
    rej = mc_moments(sample_truncated_mvn(gamma, 100_000, seed=3, method="rejection"))
    gib = mc_moments(sample_truncated_mvn(gamma, 100_000, seed=4, method="gibbs"), "gibbs")
    se = np.sqrt(rej.se_mean ** 2 + gib.se_mean ** 2)
    assert np.all(np.abs(rej.mean - gib.mean) < 4 * se)


@pytest.mark.parametrize("n, seed", [(2, 10), (3, 11), (4, 12), (5, 13)])
def test_rejection_and_gibbs_same_distribution(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    cov = A @ A.T + n * np.eye(n)
    d = np.sqrt(np.diag(cov))
    gamma = cov / np.outer(d, d)
    rej = sample_truncated_mvn(gamma, 20_000, seed=seed, method="rejection")
    gib = sample_truncated_mvn(gamma, 200_000, seed=seed + 100, method="gibbs")[::10]
    for j in range(n):
        assert stats.ks_2samp(rej[:, j], gib[:, j]).pvalue > 0.001


def test_sampler_errors():
    with pytest.raises(SamplerError, match="n <= 8"):
        sample_truncated_mvn(np.eye(9), 10, seed=0, method="rejection")
    rho = -0.4999999
    gamma = np.full((3, 3), rho) + (1 - rho) * np.eye(3)
    with pytest.raises(SamplerError, match="acceptance"):
        sample_truncated_mvn(gamma, 10, seed=0, method="rejection")
    with pytest.raises(SamplerError, match="positive definite"):
        sample_truncated_mvn(np.array([[1.0, 2.0], [2.0, 1.0]]), 10, seed=0, method="gibbs")
    with pytest.raises(ValueError):
        sample_truncated_mvn(np.eye(2), 10, seed=0, method="slice")


def test_gibbs_reproducible():
    gamma = np.array([[1.0, 0.3], [0.3, 1.0]])
    a = sample_truncated_mvn(gamma, 500, burn_in=10, seed=9)
    b = sample_truncated_mvn(gamma, 500, burn_in=10, seed=9)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (500, 2) and np.all(a > 0)


def test_one_site_iid_mean(one_site):
    model, omega = one_site
    draws = sample_smoothing_iid(sun_smoothing_params(omega, model), 100_000, seed=5)
    mm = mc_moments(draws)
    assert draws.draws.shape == (100_000, 1) and draws.method == "rejection"
    assert abs(mm.mean[0] - 1 / math.sqrt(math.pi)) < 4 * mm.se_mean[0]


def test_zero_delta_gives_prior_draws():
    rng = np.random.default_rng(6)
    model = random_stable_model(rng, 3, 2)
    omega = build_prior_covariance(model)
    params = sun_smoothing_params(omega, model)
    params = replace(params, Delta=np.zeros_like(params.Delta))
    x = sample_smoothing_iid(params, 200_000, seed=7).draws
    prods = x[:, :, None] * x[:, None, :]
    se = prods.std(axis=0) / math.sqrt(len(x))
    assert np.all(np.abs(prods.mean(axis=0) - omega.matrix) < 4 * se)


def test_flipping_all_responses_negates_mean():
    model = DynamicProbitModel(X=np.ones((3, 1)), G=np.eye(1), W=1.0, P0=1.0, y=[1, 0, 1])
    omega = build_prior_covariance(model)
    a = mc_moments(sample_smoothing_iid(sun_smoothing_params(omega, model), 100_000, seed=1))
    flipped = model.with_responses(1 - model.y)
    b = mc_moments(sample_smoothing_iid(sun_smoothing_params(omega, flipped), 100_000, seed=2))
    assert np.all(np.abs(a.mean + b.mean) < 4 * np.hypot(a.se_mean, b.se_mean))


def test_mc_moments_basics():
    const = mc_moments(np.full((10, 3), 2.5))
    np.testing.assert_array_equal(const.var, 0.0)
    np.testing.assert_array_equal(const.se_mean, 0.0)
    two = mc_moments(np.array([[1.0, -4.0], [3.0, 2.0]]))
    np.testing.assert_array_equal(two.mean, [2.0, -1.0])
    z = np.random.default_rng(0).standard_normal((10_000, 4))
    assert np.all(np.abs(mc_moments(z).mean) < 4 / math.sqrt(10_000))
    with pytest.raises(ValueError):
        mc_moments(np.zeros((1, 2)))


def test_autocorrelation_inflates_gibbs_se():
    rng = np.random.default_rng(3)
    # AR(1) with phi = 0.9 has tau_int = (1 + phi) / (1 - phi) = 19
    x = np.empty(200_000)
    x[0] = 0
    e = rng.standard_normal(x.size)
    for i in range(1, x.size):
        x[i] = 0.9 * x[i - 1] + e[i]
    tau = integrated_autocorr(x[:, None])[0]
    assert 16 < tau < 22
    iid = mc_moments(SmoothingDraws(x[:, None], 0, "rejection"))
    gib = mc_moments(SmoothingDraws(x[:, None], 0, "gibbs"))
    assert gib.se_mean[0] == pytest.approx(iid.se_mean[0] * math.sqrt(gib.tau_int[0]))


def test_quadrature_one_site(one_site):
    model, omega = one_site
    q = quadrature_posterior_moments(omega, model)
    assert q.mean[0] == pytest.approx(1 / math.sqrt(math.pi), abs=1e-8)
    assert q.var[0] == pytest.approx(1 - 1 / math.pi, abs=1e-8)
    assert q.log_norm == pytest.approx(math.log(0.5), abs=1e-8)


def test_quadrature_zero_covariates_is_prior():
    model = DynamicProbitModel(X=np.zeros((1, 2)), G=np.eye(2), W=np.diag([0.5, 1.0]),
                               P0=np.array([[1.0, 0.3], [0.3, 2.0]]), y=[1])
    omega = build_prior_covariance(model)
    q = quadrature_posterior_moments(omega, model)
    np.testing.assert_allclose(q.mean, 0.0, atol=1e-8)
    np.testing.assert_allclose(q.cov, omega.matrix, atol=1e-8)


def test_quadrature_response_symmetry(random_walk_pair):
    model, omega = random_walk_pair
    a = quadrature_posterior_moments(omega, model)
    b = quadrature_posterior_moments(omega, model.with_responses([0, 0]))
    np.testing.assert_allclose(a.mean, -b.mean, atol=1e-8)
    # dblquad reference for the same instance
    np.testing.assert_allclose(a.mean, [1.235213030113665, 1.5218452112711414], atol=1e-8)


def test_quadrature_rejects_large_dims():
    model = DynamicProbitModel(X=np.ones((2, 2)), G=np.eye(2), W=1.0, P0=1.0, y=[1, 0])
    with pytest.raises(ValueError, match="pn <= 3"):
        quadrature_posterior_moments(build_prior_covariance(model), model)


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(3))
def test_iid_matches_quadrature(seed):
    rng = np.random.default_rng(100 + seed)
    model = random_stable_model(rng, 3, 1)
    omega = build_prior_covariance(model)
    q = quadrature_posterior_moments(omega, model)
    mm = mc_moments(sample_smoothing_iid(sun_smoothing_params(omega, model), 100_000, seed=seed))
    assert np.all(np.abs(mm.mean - q.mean) < 4 * mm.se_mean)
