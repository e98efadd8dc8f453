"""Exact smoothing posterior: unified skew-normal parameters and samplers.

The smoothing distribution is SUN_{pn,n}(0, Omega, Delta, 0, Gamma) with

    D      n x pn block diagonal, row t = (2 y_t - 1) x_t'
    s      sqrt(diag(D Omega D' + I_n))
    Delta  omega^{-1} Omega D' s^{-1}        (= Omega_bar omega D' s^{-1})
    Gamma  s^{-1} (D Omega D' + I_n) s^{-1}

and omega = diag(Omega)^{1/2}.  Draws use the additive representation
theta = omega (U0 + Delta Gamma^{-1} U1) with U0 Gaussian and U1 a
zero-mean N(0, Gamma) vector truncated to the positive orthant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import linalg
from scipy.special import log_ndtr

from .model import DynamicProbitModel, PriorCovariance

METHODS = ("rejection", "gibbs")
MAX_REJECTION_DIM = 8
MIN_ACCEPTANCE = 1e-6
MAX_U0_JITTER = 1e-10
ACF_WINDOW = 200


class SamplerError(RuntimeError):
    pass


@dataclass
class SunParams:
    signs: np.ndarray
    X: np.ndarray
    s: np.ndarray
    Delta: np.ndarray
    Gamma: np.ndarray
    omega_diag: np.ndarray
    omega: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def D(self) -> np.ndarray:
        """Dense n x pn matrix; for inspection and tests only."""
        n, p = self.X.shape
        D = np.zeros((n, n * p))
        for t in range(n):
            D[t, t * p:(t + 1) * p] = self.signs[t] * self.X[t]
        return D


def sun_smoothing_params(omega: PriorCovariance, model: DynamicProbitModel) -> SunParams:
    n, p = model.n, model.p
    signs = model.signs
    DX = signs[:, None] * model.X
    # Omega D': column t gathers the p columns of block t
    omega_Dt = np.einsum("itp,tp->it", omega.matrix.reshape(n * p, n, p), DX)
    # D Omega D': row t gathers the p rows of block t of Omega D'
    DOD = np.einsum("tp,tpj->tj", DX, omega_Dt.reshape(n, p, n))
    DOD = 0.5 * (DOD + DOD.T)
    S = DOD + np.eye(n)
    s = np.sqrt(np.diag(S))
    omega_diag = np.sqrt(np.diag(omega.matrix))
    Delta = omega_Dt / omega_diag[:, None] / s[None, :]
    Gamma = S / np.outer(s, s)
    np.fill_diagonal(Gamma, 1.0)
    return SunParams(signs=signs, X=model.X, s=s, Delta=Delta, Gamma=Gamma,
                     omega_diag=omega_diag, omega=omega.matrix)


@numba.njit(cache=True)
def _std_normal_above(a, rng):
    """Standard normal conditioned on z >= a."""
    if a <= 0.0:
        while True:
            z = rng.standard_normal()
            if z >= a:
                return z
    # exponential proposal with the optimal rate for this bound
    lam = 0.5 * (a + math.sqrt(a * a + 4.0))
    while True:
        z = a + rng.standard_exponential() / lam
        if rng.random() <= math.exp(-0.5 * (z - lam) ** 2):
            return z


@numba.njit(cache=True)
def _gibbs_chain(prec, x0, n_draws, burn_in, rng):
    n = prec.shape[0]
    out = np.empty((n_draws, n))
    x = x0.copy()
    sd = np.empty(n)
    for j in range(n):
        sd[j] = 1.0 / math.sqrt(prec[j, j])
    for it in range(burn_in + n_draws):
        for j in range(n):
            acc = 0.0
            for l in range(n):
                if l != j:
                    acc += prec[j, l] * x[l]
            mu = -acc / prec[j, j]
            x[j] = mu + sd[j] * _std_normal_above(-mu / sd[j], rng)
        if it >= burn_in:
            out[it - burn_in] = x
    return out


def _cholesky(gamma: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(gamma)
    except np.linalg.LinAlgError:
        raise SamplerError("Gamma is not positive definite") from None


def _rejection(gamma, n_draws, rng, max_proposals):
    n = gamma.shape[0]
    if n > MAX_REJECTION_DIM:
        raise SamplerError(
            f"rejection sampling supports n <= {MAX_REJECTION_DIM}, got {n}; use method='gibbs'"
        )
    L = _cholesky(gamma)
    pilot = 100_000
    z = rng.standard_normal((pilot, n)) @ L.T
    keep = z[np.all(z > 0, axis=1)]
    rate = len(keep) / pilot
    if rate < MIN_ACCEPTANCE or n_draws / max(rate, 1e-300) > max_proposals:
        raise SamplerError(
            f"estimated acceptance rate {rate:.2e} is too low for rejection; use method='gibbs'"
        )
    chunks = [keep]
    have = len(keep)
    batch = int(min(max_proposals, 1.2 * (n_draws - have) / rate + 1000))
    while have < n_draws:
        z = rng.standard_normal((batch, n)) @ L.T
        keep = z[np.all(z > 0, axis=1)]
        chunks.append(keep)
        have += len(keep)
    return np.concatenate(chunks)[:n_draws]


def sample_truncated_mvn(gamma: np.ndarray, n_draws: int, burn_in: int = 1000, seed=None,
                         method: str = "gibbs", *, max_proposals: float = 5e8) -> np.ndarray:
    """Draws from N_n(0, gamma) restricted to the positive orthant, shape (n_draws, n).

    ``rejection`` is exact and i.i.d. but limited to small n.  ``gibbs`` runs one
    systematic-scan chain of univariate truncated-normal conditionals, started
    at the half-normal mean, with ``burn_in`` discarded scans and no thinning.
    """
    gamma = np.asarray(gamma, dtype=float)
    rng = np.random.default_rng(seed)
    if method == "rejection":
        return _rejection(gamma, n_draws, rng, max_proposals)
    if method != "gibbs":
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    L = _cholesky(gamma)
    prec = linalg.cho_solve((L, True), np.eye(len(gamma)))
    prec = 0.5 * (prec + prec.T)
    x0 = np.full(len(gamma), math.sqrt(2.0 / math.pi))
    return _gibbs_chain(prec, x0, int(n_draws), int(burn_in), rng)


@dataclass
class SmoothingDraws:
    draws: np.ndarray
    seed: object
    method: str
    u0_jitter: float = 0.0


def _u0_factor(cov: np.ndarray) -> tuple[np.ndarray, float]:
    scale = float(np.mean(np.diag(cov)))
    for jitter in (0.0, 1e-14, 1e-12, MAX_U0_JITTER):
        try:
            return np.linalg.cholesky(cov + jitter * scale * np.eye(len(cov))), jitter
        except np.linalg.LinAlgError:
            continue
    raise SamplerError("covariance of U0 is not positive semidefinite within jitter 1e-10")


def sample_smoothing_iid(params: SunParams, n_draws: int, seed=None, method: str = "rejection",
                         burn_in: int = 1000) -> SmoothingDraws:
    """Posterior draws of theta_{1:n} via the additive representation.

    With ``method='gibbs'`` the U1 part comes from a Markov chain, so draws are
    dependent; ``mc_moments`` accounts for that in the standard errors.
    """
    rng = np.random.default_rng(seed)
    omega_bar = params.omega / np.outer(params.omega_diag, params.omega_diag)
    L_gamma = _cholesky(params.Gamma)
    # Gamma^{-1} Delta' via Cholesky solves
    ginv_dt = linalg.cho_solve((L_gamma, True), params.Delta.T)
    u0_cov = omega_bar - params.Delta @ ginv_dt
    u0_cov = 0.5 * (u0_cov + u0_cov.T)
    L0, jitter = _u0_factor(u0_cov)
    u1 = sample_truncated_mvn(params.Gamma, n_draws, burn_in, rng, method)
    u0 = rng.standard_normal((n_draws, len(L0))) @ L0.T
    # Delta Gamma^{-1} u1 for every draw
    shift = linalg.cho_solve((L_gamma, True), u1.T).T @ params.Delta.T
    draws = (u0 + shift) * params.omega_diag
    return SmoothingDraws(draws=draws, seed=seed, method=method, u0_jitter=jitter)


@dataclass
class McMoments:
    mean: np.ndarray
    var: np.ndarray
    se_mean: np.ndarray
    tau_int: np.ndarray


def integrated_autocorr(x: np.ndarray, max_window: int = ACF_WINDOW) -> np.ndarray:
    """Integrated autocorrelation time per column with a self-consistent window.

    The window is the smallest M with M >= 5 tau(M), capped at ``max_window``.
    """
    x = np.asarray(x, dtype=float)
    N = x.shape[0]
    xc = x - x.mean(axis=0)
    size = 1 << (2 * N - 1).bit_length()
    f = np.fft.rfft(xc, n=size, axis=0)
    acov = np.fft.irfft(f * np.conj(f), n=size, axis=0)[:N]
    var0 = acov[0]
    out = np.ones(x.shape[1])
    ok = var0 > 0
    rho = np.zeros_like(acov)
    rho[:, ok] = acov[:, ok] / var0[ok]
    limit = min(max_window, N - 1)
    csum = 1.0 + 2.0 * np.cumsum(rho[1:limit + 1], axis=0)
    for j in np.nonzero(ok)[0]:
        tau = csum[-1, j] if limit > 0 else 1.0
        for M in range(1, limit + 1):
            if M >= 5.0 * csum[M - 1, j]:
                tau = csum[M - 1, j]
                break
        out[j] = max(tau, 1.0)
    return out


def mc_moments(draws: SmoothingDraws | np.ndarray, method: str | None = None) -> McMoments:
    """Coordinate-wise mean, variance and standard error of the mean."""
    if isinstance(draws, SmoothingDraws):
        method = draws.method
        arr = draws.draws
    else:
        arr = np.asarray(draws, dtype=float)
    if arr.shape[0] < 2:
        raise ValueError("need at least two draws")
    N = arr.shape[0]
    mean = arr.mean(axis=0)
    var = arr.var(axis=0, ddof=1)
    tau = integrated_autocorr(arr) if method == "gibbs" else np.ones(arr.shape[1])
    se = np.sqrt(var * tau / N)
    return McMoments(mean=mean, var=var, se_mean=se, tau_int=tau)


@dataclass
class QuadratureMoments:
    mean: np.ndarray
    var: np.ndarray
    cov: np.ndarray
    log_norm: float
    nodes: int


def _quadrature_pass(L, signs, X, p, nodes, half_width):
    d = L.shape[0]
    z, wts = np.polynomial.legendre.leggauss(nodes)
    z = z * half_width
    wts = wts * half_width
    grids = np.meshgrid(*([z] * d), indexing="ij")
    Z = np.stack([g.ravel() for g in grids], axis=1)
    logw = sum(np.log(np.meshgrid(*([wts] * d), indexing="ij")[i].ravel()) for i in range(d))
    theta = Z @ L.T
    logf = logw - 0.5 * np.sum(Z * Z, axis=1)
    for t in range(len(signs)):
        logf = logf + log_ndtr(signs[t] * (theta[:, t * p:(t + 1) * p] @ X[t]))
    shift = logf.max()
    f = np.exp(logf - shift)
    mass = f.sum()
    mean = f @ theta / mass
    c = theta - mean
    cov = (c * f[:, None]).T @ c / mass
    log_norm = math.log(mass) + shift - 0.5 * d * math.log(2.0 * math.pi)
    return mean, cov, log_norm


def quadrature_posterior_moments(omega: PriorCovariance, model: DynamicProbitModel, *,
                                 tol: float = 1e-8, half_width: float = 10.0,
                                 start_nodes: int = 24, max_nodes: int | None = None
                                 ) -> QuadratureMoments:
    """Posterior moments by tensor Gauss-Legendre quadrature, for pn <= 3.

    The integral is taken in whitened coordinates theta = L z (L the Cholesky
    factor of Omega) over the box [-half_width, half_width]^pn, so every
    coordinate spans +-10 prior standard deviations.  The node count doubles
    until the normalizing constant, mean and covariance all move by less
    than ``tol``.
    """
    d = omega.dim
    if d > 3:
        raise ValueError(f"quadrature supports pn <= 3, got pn = {d}")
    if max_nodes is None:
        max_nodes = {1: 4096, 2: 1024, 3: 192}[d]
    L = np.linalg.cholesky(omega.matrix)
    signs = model.signs
    nodes = start_nodes
    prev = _quadrature_pass(L, signs, model.X, model.p, nodes, half_width)
    while True:
        nxt_nodes = min(2 * nodes, max_nodes)
        if nxt_nodes == nodes:
            raise RuntimeError(f"quadrature did not converge with {nodes} nodes per axis")
        cur = _quadrature_pass(L, signs, model.X, model.p, nxt_nodes, half_width)
        nodes = nxt_nodes
        err = max(np.abs(cur[0] - prev[0]).max(), np.abs(cur[1] - prev[1]).max(),
                  abs(math.exp(cur[2] - prev[2]) - 1.0))
        if err < tol:
            mean, cov, log_norm = cur
            return QuadratureMoments(mean=mean, var=np.diag(cov).copy(), cov=cov,
                                     log_norm=log_norm, nodes=nodes)
        prev = cur
