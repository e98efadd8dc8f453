"""Expectation propagation for the joint smoothing distribution.

Each likelihood factor Phi((2y_t - 1) x~_t' theta) is replaced by a Gaussian
site exp(-k_t (x~_t' theta)^2 / 2 + m_t x~_t' theta), so the global
approximation is N(Q^{-1} r, Q^{-1}) with Q = Omega^{-1} + sum_t k_t x~_t x~_t'
and r = sum_t m_t x~_t.  The hybrid for site t is an extended skew-normal whose
first two moments are available in closed form, which makes every site
update a pair of scalar formulas.

Two implementations share the same site kernel and schedule:

* ``ep_smooth_dense`` keeps Q^{-1} (pn x pn) and applies rank-one Woodbury
  corrections to it after every site.
* ``ep_smooth_lowrank`` keeps only V = Q^{-1} X~' (pn x n) and materializes
  Q^{-1} = Omega - V K X~ Omega once at the end.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .model import DynamicProbitModel, PriorCovariance, SparseCovariate
from .special import _zeta1

log = logging.getLogger(__name__)

VARIANTS = ("dense", "lowrank")

# kernel status codes
_OK = 0
_BAD_TAU = 1


class EpError(RuntimeError):
    """Hard EP failure tied to a specific site (1-based ``site``)."""

    def __init__(self, message: str, site: int | None = None):
        self.site = site
        super().__init__(message)


class ImproperSiteError(ArithmeticError):
    """The moment-matched site would have a non-positive normalizer."""


@dataclass
class EpConfig:
    tol: float = 1e-6
    max_sweeps: int = 200
    damping: float = 1.0
    skip_delta: float = 1e-12
    variant: str = "lowrank"
    # test hook: treat every likelihood factor as the constant 1
    flat_likelihood: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_sweeps < 0:
            raise ValueError("max_sweeps must be non-negative")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.skip_delta < 0:
            raise ValueError("skip_delta must be non-negative")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")


@dataclass
class SiteState:
    """Site scalars (k_t, m_t) and the natural location r = sum_t m_t x~_t."""

    k: np.ndarray
    m: np.ndarray
    r: np.ndarray
    sweep_count: int = 0

    @classmethod
    def initial(cls, n: int, p: int) -> "SiteState":
        return cls(np.zeros(n), np.zeros(n), np.zeros(n * p))

    def expected_r(self, X: np.ndarray) -> np.ndarray:
        return (self.m[:, None] * X).ravel()

    def check_consistency(self, X: np.ndarray, atol: float = 1e-8) -> None:
        ref = self.expected_r(X)
        scale = max(1.0, float(np.abs(ref).max(initial=0.0)))
        if np.max(np.abs(self.r - ref), initial=0.0) > atol * scale:
            raise EpError("natural location r drifted from sum_t m_t x~_t")


@dataclass
class DenseEpWorkspace:
    """Running Q^{-1} plus a pn scratch vector for Q^{-1} x~_t."""

    Qinv: np.ndarray
    scratch: np.ndarray

    @classmethod
    def from_prior(cls, omega: PriorCovariance) -> "DenseEpWorkspace":
        return cls(omega.matrix.copy(), np.empty(omega.dim))

    def cavity_direction(self, cov: SparseCovariate, k_t: float) -> np.ndarray:
        """Omega_t x~_t from the rank-one Woodbury correction of Q^{-1}."""
        u = cov.right_apply(self.Qinv)
        b = cov.dot(u)
        cavity = self.Qinv + k_t / (1.0 - k_t * b) * np.outer(u, u)
        return cov.right_apply(cavity)


@dataclass
class LowRankEpWorkspace:
    """V = Q^{-1} X~' with column t equal to v_t = Q^{-1} x~_t."""

    V: np.ndarray

    @classmethod
    def from_prior(cls, omega: PriorCovariance, X: np.ndarray) -> "LowRankEpWorkspace":
        n, p = X.shape
        # Omega X~' only needs the p columns of each block
        V = np.einsum("iqp,qp->iq", omega.matrix.reshape(n * p, n, p), X)
        return cls(np.ascontiguousarray(V))

    def cavity_direction(self, cov: SparseCovariate, k_t: float) -> np.ndarray:
        """w_t = d_t v_t with d_t = 1 / (1 - k_t x~_t' v_t)."""
        v = self.V[:, cov.t]
        return v / (1.0 - k_t * cov.dot(v))


@dataclass
class GaussianApprox:
    mean: np.ndarray
    cov: np.ndarray
    sites: SiteState
    sweeps: int
    converged: bool
    p: int
    skips: int = 0
    variant: str = "lowrank"
    workspace: DenseEpWorkspace | LowRankEpWorkspace | None = field(default=None, repr=False)

    @property
    def var(self) -> np.ndarray:
        return np.diag(self.cov).copy()


@dataclass
class HybridMoments:
    """Scalar summary of the skew-normal hybrid for one site.

    ``cavity_var`` is x~_t' Omega_t x~_t and ``xi_proj`` is x~_t' xi_t with
    xi_t = Omega_t r_{-t} the cavity mean.
    """

    s: float
    tau: float
    xi_proj: float
    cavity_var: float
    omega_x: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_cavity(cls, omega_x: np.ndarray, cov: SparseCovariate,
                    r_minus: np.ndarray, y: int) -> "HybridMoments":
        a = cov.dot(omega_x)
        xi_proj = float(omega_x @ r_minus)
        s = (2 * y - 1) / math.sqrt(1.0 + a)
        return cls(s=s, tau=s * xi_proj, xi_proj=xi_proj, cavity_var=a, omega_x=omega_x)

    def projected_mean(self) -> float:
        """x~_t' mu_h."""
        return self.xi_proj + _zeta1(self.tau) * self.s * self.cavity_var

    def projected_var(self) -> float:
        """x~_t' Sigma_h x~_t."""
        z1 = _zeta1(self.tau)
        z2 = -z1 * (z1 + self.tau)
        return self.cavity_var + z2 * self.s ** 2 * self.cavity_var ** 2


@numba.njit(cache=True)
def _site_kernel(a, xi_proj, sign, flat):
    s = sign / math.sqrt(1.0 + a)
    tau = s * xi_proj
    if flat:
        z1 = 0.0
        z2 = 0.0
    else:
        z1 = _zeta1(tau)
        z2 = -z1 * (z1 + tau)
    den = 1.0 + a + z2 * a
    k_new = -z2 / den
    m_new = z1 * s + k_new * xi_proj + k_new * z1 * s * a
    return k_new, m_new, tau, s, z2, den


def site_update(hybrid: HybridMoments, k_old: float = 0.0, m_old: float = 0.0,
                damping: float = 1.0) -> tuple[float, float]:
    """Moment-matched (k_t, m_t); with ``damping < 1`` only part of the step is taken."""
    if not all(math.isfinite(v) for v in (hybrid.s, hybrid.xi_proj, hybrid.cavity_var)):
        raise ValueError("hybrid moments must be finite")
    sign = 1.0 if hybrid.s > 0 else -1.0
    k_hat, m_hat, _, _, _, den = _site_kernel(hybrid.cavity_var, hybrid.xi_proj, sign, False)
    if not den > 0:
        raise ImproperSiteError(f"site normalizer {den} is not positive")
    return k_old + damping * (k_hat - k_old), m_old + damping * (m_hat - m_old)


@numba.njit(cache=True)
def _dense_sweep(Qinv, r, k, m, X, sign, damping, delta, flat, u):
    n, p = X.shape
    dim = n * p
    max_change = 0.0
    skips = 0
    for t in range(n):
        lo = t * p
        # u = Q^{-1} x~_t, reading the p columns of block t
        for i in range(dim):
            acc = 0.0
            for j in range(p):
                acc += Qinv[i, lo + j] * X[t, j]
            u[i] = acc
        b = 0.0
        for j in range(p):
            b += X[t, j] * u[lo + j]
        cav_den = 1.0 - k[t] * b
        if cav_den <= delta:
            skips += 1
            continue
        d = 1.0 / cav_den
        # Omega_t x~_t = d u, so x~' Omega_t x~ = d b and x~' Omega_t r_{-t} = d (u'r - m_t b)
        a = d * b
        ur = 0.0
        for i in range(dim):
            ur += u[i] * r[i]
        xi_proj = d * (ur - m[t] * b)
        k_hat, m_hat, tau, s, z2, den = _site_kernel(a, xi_proj, sign[t], flat)
        if not math.isfinite(tau):
            return max_change, skips, _BAD_TAU, t
        if den <= 0.0:
            skips += 1
            continue
        k_new = k[t] + damping * (k_hat - k[t])
        m_new = m[t] + damping * (m_hat - m[t])
        dk = k_new - k[t]
        if 1.0 + dk * b <= delta:
            skips += 1
            continue
        # Q^{-1} <- Omega_t + coef * w w'  with  Omega_t = Q^{-1} + k_t d u u',  w = d u
        if damping == 1.0:
            coef = z2 * s * s
        else:
            coef = -k_new / (1.0 + k_new * a)
        gamma = k[t] * d + coef * d * d
        for i in range(dim):
            gi = gamma * u[i]
            for j in range(dim):
                Qinv[i, j] += gi * u[j]
        dm = m_new - m[t]
        for j in range(p):
            r[lo + j] += dm * X[t, j]
        change = max(abs(dk), abs(dm))
        if change > max_change:
            max_change = change
        k[t] = k_new
        m[t] = m_new
    return max_change, skips, _OK, -1


@numba.njit(cache=True)
def _lowrank_sweep(V, r, k, m, X, sign, damping, delta, flat, v, row):
    n, p = X.shape
    dim = n * p
    max_change = 0.0
    skips = 0
    for t in range(n):
        lo = t * p
        for i in range(dim):
            v[i] = V[i, t]
        b = 0.0
        for j in range(p):
            b += X[t, j] * v[lo + j]
        cav_den = 1.0 - k[t] * b
        if cav_den <= delta:
            skips += 1
            continue
        d = 1.0 / cav_den
        # w_t = d v_t; r_{-t} differs from r only on block t
        vr = 0.0
        for i in range(dim):
            vr += v[i] * r[i]
        a = d * b
        xi_proj = d * (vr - m[t] * b)
        k_hat, m_hat, tau, s, z2, den = _site_kernel(a, xi_proj, sign[t], flat)
        if not math.isfinite(tau):
            return max_change, skips, _BAD_TAU, t
        if den <= 0.0:
            skips += 1
            continue
        k_new = k[t] + damping * (k_hat - k[t])
        m_new = m[t] + damping * (m_hat - m[t])
        dk = k_new - k[t]
        c_den = 1.0 + dk * b
        if c_den <= delta:
            skips += 1
            continue
        c = dk / c_den
        if c != 0.0:
            # V <- V - c v_t (x~_t' V)
            for q in range(n):
                acc = 0.0
                for j in range(p):
                    acc += X[t, j] * V[lo + j, q]
                row[q] = c * acc
            for i in range(dim):
                vi = v[i]
                for q in range(n):
                    V[i, q] -= vi * row[q]
        dm = m_new - m[t]
        for j in range(p):
            r[lo + j] += dm * X[t, j]
        change = max(abs(dk), abs(dm))
        if change > max_change:
            max_change = change
        k[t] = k_new
        m[t] = m_new
    return max_change, skips, _OK, -1


def _check_inputs(omega: PriorCovariance, model: DynamicProbitModel) -> None:
    if (omega.n, omega.p) != (model.n, model.p):
        raise ValueError(
            f"prior covariance is for (n={omega.n}, p={omega.p}) but model has "
            f"(n={model.n}, p={model.p})"
        )
    if model.y is None:
        raise ValueError("model has no responses")


def _run(sweep, state_arrays, sites: SiteState, model: DynamicProbitModel,
         config: EpConfig) -> tuple[int, bool, int]:
    X = np.ascontiguousarray(model.X)
    sign = model.signs
    skips = 0
    converged = False
    for _ in range(config.max_sweeps):
        change, n_skip, status, bad = sweep(
            *state_arrays, sites.r, sites.k, sites.m, X, sign,
            config.damping, config.skip_delta, config.flat_likelihood,
        )
        sites.sweep_count += 1
        skips += n_skip
        if status == _BAD_TAU:
            raise EpError(f"non-finite tau at site {bad + 1} in sweep {sites.sweep_count}", bad + 1)
        sites.check_consistency(X)
        log.debug("sweep %d: max site change %.3e, skips %d", sites.sweep_count, change, n_skip)
        if change < config.tol:
            converged = True
            break
    return sites.sweep_count, converged, skips


def ep_smooth_dense(omega: PriorCovariance, model: DynamicProbitModel,
                    config: EpConfig | None = None) -> GaussianApprox:
    """EP with a running dense Q^{-1}; O(n^3 p^2) per sweep."""
    config = config or EpConfig(variant="dense")
    _check_inputs(omega, model)
    sites = SiteState.initial(model.n, model.p)
    ws = DenseEpWorkspace.from_prior(omega)

    def sweep(Qinv, scratch, *rest):
        out = _dense_sweep(Qinv, *rest, scratch)
        # arrest rounding drift from the rank-one updates
        Qinv += Qinv.T
        Qinv *= 0.5
        return out

    sweeps, converged, skips = _run(sweep, (ws.Qinv, ws.scratch), sites, model, config)
    cov = ws.Qinv.copy()
    return GaussianApprox(mean=cov @ sites.r, cov=cov, sites=sites, sweeps=sweeps,
                          converged=converged, p=model.p, skips=skips,
                          variant="dense", workspace=ws)


def lowrank_covariance(omega: PriorCovariance, V: np.ndarray, k: np.ndarray,
                       X: np.ndarray) -> np.ndarray:
    """Q^{-1} = Omega - V K X~ Omega, symmetrized."""
    n, p = X.shape
    # X~ Omega: row t is x_t' Omega[block t, :]
    x_omega = np.einsum("tp,tpj->tj", X, omega.matrix.reshape(n, p, n * p))
    cov = omega.matrix - (V * k) @ x_omega
    return 0.5 * (cov + cov.T)


def ep_smooth_lowrank(omega: PriorCovariance, model: DynamicProbitModel,
                      config: EpConfig | None = None) -> GaussianApprox:
    """EP storing only V = Q^{-1} X~'; O(n^3 p) per sweep, no pn x pn updates."""
    config = config or EpConfig(variant="lowrank")
    _check_inputs(omega, model)
    n, p = model.n, model.p
    sites = SiteState.initial(n, p)
    ws = LowRankEpWorkspace.from_prior(omega, model.X)
    scratch = (np.empty(n * p), np.empty(n))

    def sweep(V, *rest):
        return _lowrank_sweep(V, *rest, *scratch)

    sweeps, converged, skips = _run(sweep, (ws.V,), sites, model, config)
    cov = lowrank_covariance(omega, ws.V, sites.k, model.X)
    return GaussianApprox(mean=cov @ sites.r, cov=cov, sites=sites, sweeps=sweeps,
                          converged=converged, p=p, skips=skips,
                          variant="lowrank", workspace=ws)


def ep_smooth(omega: PriorCovariance, model: DynamicProbitModel,
              config: EpConfig | None = None) -> GaussianApprox:
    config = config or EpConfig()
    if config.variant == "dense":
        return ep_smooth_dense(omega, model, config)
    return ep_smooth_lowrank(omega, model, config)


def hybrid_for_site(approx: GaussianApprox, model: DynamicProbitModel, t: int) -> HybridMoments:
    """Hybrid moments of site t recomputed from a finished approximation."""
    cov = SparseCovariate(t, model.X[t])
    k_t, m_t = approx.sites.k[t], approx.sites.m[t]
    u = cov.right_apply(approx.cov)
    omega_x = u / (1.0 - k_t * cov.dot(u))
    r_minus = approx.sites.r.copy()
    r_minus[cov.block] -= m_t * cov.x
    return HybridMoments.from_cavity(omega_x, cov, r_minus, int(model.y[t]))
