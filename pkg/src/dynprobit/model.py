"""Dynamic probit model, stacked prior covariance and a data simulator.

The model is

    y_t | theta_t ~ Bernoulli(Phi(x_t' theta_t))
    theta_t = G_t theta_{t-1} + eps_t,   eps_t ~ N(0, W_t),   theta_0 ~ N(0, P0)

for t = 1..n.  Internally time is 0-based: array row ``t`` holds time t+1.
Stacking theta_{1:n} gives a pn-dimensional Gaussian prior N(0, Omega) and the
model becomes a static probit regression with block-sparse covariates.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import lapack
from scipy.special import ndtr

SYM_TOL = 1e-12


class ModelError(ValueError):
    """Invalid model specification."""


class PriorCovarianceError(ModelError):
    """The stacked prior covariance is not positive definite."""

    def __init__(self, minor: int):
        self.minor = minor
        super().__init__(
            f"prior covariance is not positive definite: leading minor of order {minor} fails"
        )


def _expand(name: str, arr, n: int, p: int) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 0:
        arr = arr * np.eye(p)
    if arr.shape == (p, p):
        return np.broadcast_to(arr, (n, p, p)).copy()
    if arr.shape == (n, p, p):
        return arr.copy()
    raise ModelError(f"{name} has shape {arr.shape}; expected ({p}, {p}) or ({n}, {p}, {p})")


def _is_symmetric(a: np.ndarray) -> bool:
    scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
    return bool(np.all(np.abs(a - np.swapaxes(a, -1, -2)) <= SYM_TOL * scale))


@dataclass
class DynamicProbitModel:
    """Problem statement for smoothing.

    ``G`` and ``W`` may be given as a single (p, p) matrix (or a scalar for
    ``W``, meaning ``W * I_p``) and are then reused for every t.  ``y`` may be
    ``None`` for a model that is only used to simulate data.
    """

    X: np.ndarray
    G: np.ndarray
    W: np.ndarray
    P0: np.ndarray
    y: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] == 0:
            raise ModelError(f"X must be an (n, p) array, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ModelError("X contains non-finite entries")
        n, p = X.shape
        self.X = X
        self.G = _expand("G", self.G, n, p)
        self.W = _expand("W", self.W, n, p)
        P0 = np.asarray(self.P0, dtype=float)
        if P0.ndim == 0:
            P0 = P0 * np.eye(p)
        if P0.shape != (p, p):
            raise ModelError(f"P0 has shape {P0.shape}; expected ({p}, {p})")
        self.P0 = P0

        if not (np.all(np.isfinite(self.G)) and np.all(np.isfinite(self.W))):
            raise ModelError("G or W contains non-finite entries")
        if not _is_symmetric(self.W):
            raise ModelError("W_t must be symmetric")
        if not _is_symmetric(P0):
            raise ModelError("P0 must be symmetric")
        w_eig = np.linalg.eigvalsh(self.W)
        w_scale = np.maximum(1.0, np.abs(w_eig).max(axis=1))
        bad = np.nonzero(w_eig.min(axis=1) < -SYM_TOL * w_scale)[0]
        if bad.size:
            raise ModelError(f"W_t is not positive semidefinite at t={bad[0] + 1}")
        try:
            np.linalg.cholesky(P0)
        except np.linalg.LinAlgError:
            raise ModelError("P0 must be positive definite") from None

        if self.y is not None:
            y = np.asarray(self.y)
            if y.shape != (n,):
                raise ModelError(f"y has shape {y.shape}; expected ({n},)")
            if not np.all((y == 0) | (y == 1)):
                raise ModelError("y must take values in {0, 1}")
            self.y = y.astype(np.int64)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def a0(self) -> np.ndarray:
        return np.zeros(self.p)

    @property
    def signs(self) -> np.ndarray:
        """2 y_t - 1 as floats."""
        if self.y is None:
            raise ModelError("model has no responses")
        return 2.0 * self.y - 1.0

    def with_responses(self, y) -> "DynamicProbitModel":
        return replace(self, y=np.asarray(y))

    def covariates(self) -> list["SparseCovariate"]:
        return [SparseCovariate(t, self.X[t]) for t in range(self.n)]


@dataclass(frozen=True)
class SparseCovariate:
    """The pn-vector (0, ..., 0, x_t', 0, ..., 0)' stored as (t, x_t).

    ``t`` is 0-based.  Products with pn-vectors or pn-row/column matrices only
    touch the p entries of block t.
    """

    t: int
    x: np.ndarray = field(repr=False)

    @property
    def p(self) -> int:
        return len(self.x)

    @property
    def block(self) -> slice:
        return slice(self.t * self.p, (self.t + 1) * self.p)

    def dot(self, v: np.ndarray) -> float:
        return float(self.x @ v[self.block])

    def left_apply(self, A: np.ndarray) -> np.ndarray:
        """x~' A, reading only the p rows of block t."""
        return self.x @ A[self.block]

    def right_apply(self, A: np.ndarray) -> np.ndarray:
        """A x~, reading only the p columns of block t."""
        return A[:, self.block] @ self.x

    def embed(self, n: int) -> np.ndarray:
        out = np.zeros(n * self.p)
        out[self.block] = self.x
        return out


@dataclass
class PriorCovariance:
    """Covariance Omega of theta_{1:n}, stored dense as (pn, pn).

    Block (t, l) is cov(theta_t, theta_l) with 0-based t, l.
    """

    matrix: np.ndarray
    n: int
    p: int

    @property
    def dim(self) -> int:
        return self.n * self.p

    def block(self, t: int, l: int) -> np.ndarray:
        p = self.p
        return self.matrix[t * p:(t + 1) * p, l * p:(l + 1) * p]


def _check_pd(matrix: np.ndarray) -> None:
    _, info = lapack.dpotrf(matrix, lower=1, clean=0, overwrite_a=0)
    if info > 0:
        raise PriorCovarianceError(int(info))
    if info < 0:
        raise ModelError(f"dpotrf argument error {info}")


def build_prior_covariance(model: DynamicProbitModel) -> PriorCovariance:
    """Stack the state dynamics into the (pn, pn) prior covariance.

    Diagonal blocks follow var(theta_t) = G_t var(theta_{t-1}) G_t' + W_t with
    var(theta_0) = P0, which expands to the usual sum over products
    G_t ... G_l.  Below-diagonal blocks are Omega[t, l] = G_t ... G_{l+1} Omega[l, l].
    """
    n, p = model.n, model.p
    G, W = model.G, model.W
    omega = np.zeros((n * p, n * p))
    prev = model.P0
    diag = []
    for t in range(n):
        cur = G[t] @ prev @ G[t].T + W[t]
        cur = 0.5 * (cur + cur.T)
        diag.append(cur)
        prev = cur
    for l in range(n):
        cur = diag[l]
        omega[l * p:(l + 1) * p, l * p:(l + 1) * p] = cur
        for t in range(l + 1, n):
            cur = G[t] @ cur
            omega[t * p:(t + 1) * p, l * p:(l + 1) * p] = cur
            omega[l * p:(l + 1) * p, t * p:(t + 1) * p] = cur.T
    _check_pd(omega)
    return PriorCovariance(omega, n, p)


def _psd_sqrt(a: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(a)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def simulate_state_paths(model: DynamicProbitModel, n_paths: int, seed) -> np.ndarray:
    """Draw ``n_paths`` independent state trajectories, shape (n_paths, n * p)."""
    rng = np.random.default_rng(seed)
    n, p = model.n, model.p
    theta = rng.standard_normal((n_paths, p)) @ np.linalg.cholesky(model.P0).T
    out = np.empty((n_paths, n * p))
    for t in range(n):
        noise = rng.standard_normal((n_paths, p)) @ _psd_sqrt(model.W[t]).T
        theta = theta @ model.G[t].T + noise
        out[:, t * p:(t + 1) * p] = theta
    return out


def simulate(model: DynamicProbitModel, seed) -> tuple[np.ndarray, np.ndarray]:
    """Simulate one state path and responses; returns ``(states (n, p), y (n,))``.

    Any ``y`` already on the model is ignored.
    """
    rng = np.random.default_rng(seed)
    states = simulate_state_paths(model, 1, rng)[0].reshape(model.n, model.p)
    prob = ndtr(np.einsum("tp,tp->t", model.X, states))
    y = (rng.random(model.n) < prob).astype(np.int64)
    return states, y


def random_stable_model(rng: np.random.Generator, n: int, p: int, *,
                        radius: float = 0.95) -> DynamicProbitModel:
    """Random time-invariant instance with spectral radius of G below ``radius``.

    W is diagonal, P0 is a random PD matrix, and X has an intercept column
    followed by standard normal covariates.  Responses are simulated.
    """
    G = rng.normal(size=(p, p))
    G *= rng.uniform(0.3, radius) / max(np.abs(np.linalg.eigvals(G)).max(), 1e-12)
    W = np.diag(rng.uniform(0.05, 1.0, size=p))
    A = rng.normal(size=(p, p))
    P0 = A @ A.T / p + np.eye(p)
    X = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))])
    model = DynamicProbitModel(X=X, G=G, W=W, P0=P0)
    _, y = simulate(model, rng)
    return model.with_responses(y)


def random_walk_model(seed, n: int = 241, p: int = 2) -> DynamicProbitModel:
    """Random-walk states with an intercept and binary covariates.

    W_t = 0.01 I, P0 = 3 I, G_t = I, x_t = (1, b_t) with b_t ~ Bernoulli(1/2)
    (extra columns for p > 2 are also binary).
    """
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.integers(0, 2, size=(n, p - 1))]).astype(float)
    model = DynamicProbitModel(X=X, G=np.eye(p), W=0.01, P0=3.0 * np.eye(p))
    _, y = simulate(model, rng)
    return model.with_responses(y)
