"""Zero-mean GP regression: Cholesky solves, -lml objective, posterior."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular

from .data import Dataset
from .hyperspace import SearchSpace
from .kernel import Hyperparameters, cross_kernel, kernel_matrix, kernel_matrix_with_grad

JITTER_START = 1e-10
JITTER_FACTOR = 10.0
JITTER_ATTEMPTS = 6
LOG_2PI = math.log(2.0 * math.pi)


class DecompositionError(LinAlgError):
    """Cholesky failed even after the maximum jitter."""

    def __init__(self, message, jitter):
        super().__init__(message)
        self.jitter = jitter


def cholesky_with_jitter(K: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``K``, adding diagonal jitter only on failure.

    Jitter starts at ``1e-10 * mean(diag K)`` and grows tenfold for at most
    six attempts.
    """
    K = np.asarray(K, dtype=float)
    try:
        return cholesky(K, lower=True, check_finite=False), 0.0
    except LinAlgError:
        pass
    base = JITTER_START * float(np.mean(np.diag(K)))
    if not base > 0:
        base = JITTER_START
    jitter = base
    eye = np.eye(K.shape[0])
    for _ in range(JITTER_ATTEMPTS):
        try:
            return cholesky(K + jitter * eye, lower=True, check_finite=False), jitter
        except LinAlgError:
            jitter *= JITTER_FACTOR
    jitter /= JITTER_FACTOR
    raise DecompositionError(f"matrix not positive definite with jitter {jitter:.3g}", jitter)


@dataclass(frozen=True)
class NLMLTerms:
    """-lml split as data-fit (1/2 y' S^-1 y) + complexity (1/2 log|S|) + constant."""

    data_fit: float
    complexity: float
    constant: float

    @property
    def total(self) -> float:
        return self.data_fit + self.complexity + self.constant


@dataclass(frozen=True, eq=False)
class FittedGP:
    hyperparameters: Hyperparameters
    cholesky_factor: np.ndarray
    alpha: np.ndarray
    train: Dataset
    jitter: float = 0.0


@dataclass(frozen=True, eq=False)
class PosteriorPrediction:
    mean: np.ndarray
    variance: np.ndarray
    n_clamped: int = 0


def fit_gp(data: Dataset, hp: Hyperparameters) -> FittedGP:
    """Factorize the training covariance for fixed hyperparameters."""
    K = kernel_matrix(data.X, hp).values
    L, jitter = cholesky_with_jitter(K)
    alpha = cho_solve((L, True), data.y, check_finite=False)
    return FittedGP(hp, L, alpha, data, jitter)


def nlml_terms(data: Dataset, hp: Hyperparameters) -> NLMLTerms:
    model = fit_gp(data, hp)
    return _terms(model.cholesky_factor, model.alpha, data.y)


def _terms(L, alpha, y) -> NLMLTerms:
    n = y.size
    return NLMLTerms(
        data_fit=0.5 * float(y @ alpha),
        complexity=float(np.sum(np.log(np.diag(L)))),
        constant=0.5 * n * LOG_2PI,
    )


def neg_log_marginal_likelihood(data: Dataset, hp: Hyperparameters) -> float:
    return nlml_terms(data, hp).total


def _default_space(hp: Hyperparameters) -> SearchSpace:
    return SearchSpace(dim=hp.dim, nu_free=hp.nu_free, nu=hp.nu, nu_max=hp.nu_max)


def _gradient_from_parts(L, alpha, grads, hp, space) -> np.ndarray:
    n = alpha.size
    Kinv = cho_solve((L, True), np.eye(n), check_finite=False)
    W = Kinv - np.outer(alpha, alpha)
    raw = np.array([0.5 * np.sum(W * G) for G in grads])
    d = hp.dim
    out = [raw[0]]
    if space.isotropic:
        out.append(raw[1:1 + d].sum())
    else:
        out.extend(raw[1:1 + d])
    out.append(raw[1 + d])
    if space.nu_free:
        u = space.u_from_nu(hp.nu)
        out.append(raw[2 + d] * space.dnu_du(u))
    return np.array(out)


def nlml_value_and_gradient(data: Dataset, hp: Hyperparameters,
                            space: SearchSpace | None = None) -> tuple[float, np.ndarray]:
    """-lml and its gradient with respect to the unconstrained vector of ``space``."""
    space = space or _default_space(hp)
    if space.nu_free != hp.nu_free:
        hp = hp.replace(nu_free=space.nu_free)
    Km, grads = kernel_matrix_with_grad(data.X, hp)
    L, _ = cholesky_with_jitter(Km.values)
    alpha = cho_solve((L, True), data.y, check_finite=False)
    value = _terms(L, alpha, data.y).total
    return value, _gradient_from_parts(L, alpha, grads, hp, space)


def nlml_gradient(data: Dataset, hp: Hyperparameters,
                  space: SearchSpace | None = None) -> np.ndarray:
    """Gradient of -lml over the free hyperparameters in transformed space.

    Uses d(-lml)/dtheta = 1/2 tr((S^-1 - a a') dS/dtheta) with a = S^-1 y.
    """
    return nlml_value_and_gradient(data, hp, space)[1]


class GPObjective:
    """-lml as a function of the unconstrained vector of a ``SearchSpace``.

    ``value``, ``gradient`` and ``value_and_grad`` share a one-entry cache so
    an optimizer asking for both at the same point pays for one factorization.
    """

    def __init__(self, data: Dataset, space: SearchSpace):
        if data.d != space.dim:
            raise ValueError(f"data has dim {data.d}, space has {space.dim}")
        self.data = data
        self.space = space
        self.n_evals = 0
        self._cache_key = None
        self._cache_val = None

    @property
    def size(self) -> int:
        return self.space.size

    def value_and_grad(self, theta) -> tuple[float, np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        key = theta.tobytes()
        if key != self._cache_key:
            self.n_evals += 1
            hp = self.space.from_vector(theta)
            self._cache_val = nlml_value_and_gradient(self.data, hp, self.space)
            self._cache_key = key
        v, g = self._cache_val
        return v, g.copy()

    def value(self, theta) -> float:
        return self.value_and_grad(theta)[0]

    def gradient(self, theta) -> np.ndarray:
        return self.value_and_grad(theta)[1]

    __call__ = value

    def hyperparameters(self, theta) -> Hyperparameters:
        return self.space.from_vector(theta)


def posterior_predict(model: FittedGP, X_star, include_noise: bool = False,
                      raw_units: bool = True) -> PosteriorPrediction:
    """Posterior mean and latent variance at ``X_star`` (model-space inputs).

    With ``raw_units`` the outputs are mapped back through the training
    set's target standardization.
    """
    X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
    if X_star.shape[1] != model.train.d:
        raise ValueError(f"X_star has {X_star.shape[1]} columns, model expects {model.train.d}")
    hp = model.hyperparameters
    Ks = cross_kernel(X_star, model.train.X, hp)
    mean = Ks @ model.alpha
    v = solve_triangular(model.cholesky_factor, Ks.T, lower=True, check_finite=False)
    var = hp.amplitude_sq - np.sum(v * v, axis=0)
    neg = var < 0
    n_clamped = int(np.count_nonzero(neg))
    if n_clamped:
        if np.min(var) < -1e-8:
            warnings.warn(f"posterior variance as low as {np.min(var):.3g}; clamped to 0",
                          RuntimeWarning, stacklevel=2)
        var = np.where(neg, 0.0, var)
    if include_noise:
        var = var + hp.noise_var
    if raw_units:
        mean = model.train.inverse_y(mean)
        var = var * model.train.y_scale ** 2
    return PosteriorPrediction(mean, var, n_clamped)


def mse(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=float).ravel()
    t = np.asarray(targets, dtype=float).ravel()
    if p.size != t.size:
        raise ValueError(f"length mismatch: {p.size} vs {t.size}")
    if p.size == 0:
        raise ValueError("mse of empty input")
    return float(np.mean((p - t) ** 2))


def dataset_mse(model: FittedGP, data: Dataset) -> float:
    """MSE of the posterior mean on ``data``, in raw target units."""
    return mse(posterior_predict(model, data.X).mean, data.raw_y())
