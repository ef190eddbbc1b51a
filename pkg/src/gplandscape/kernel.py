"""Matern covariance: general real nu, half-integer closed forms, gradients."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from .special import gamma_ln, log_bessel_k, log_bessel_k_adjacent

HALF_INTEGERS = (0.5, 1.5, 2.5)
NU_MIN = 0.5
R_ZERO = 1e-10
NU_FD_STEP = 1e-5


class KernelNumericalError(ArithmeticError):
    """A scaled input or covariance entry came out non-finite."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True, eq=False)
class Hyperparameters:
    """Matern GP hyperparameters in their natural (constrained) units.

    ``amplitude_sq`` is the signal variance, ``lengthscales`` has one entry
    per input dimension and ``noise_var`` is the Gaussian noise variance.
    """

    amplitude_sq: float
    lengthscales: np.ndarray
    noise_var: float
    nu: float
    nu_free: bool = False
    nu_max: float = 10.0

    def __post_init__(self):
        ls = np.array(self.lengthscales, dtype=float).ravel()
        ls.setflags(write=False)
        object.__setattr__(self, "lengthscales", ls)
        if not (np.isfinite(self.amplitude_sq) and self.amplitude_sq > 0):
            raise ValueError(f"amplitude_sq must be > 0, got {self.amplitude_sq}")
        if ls.size == 0 or not np.all(np.isfinite(ls)) or np.any(ls <= 0):
            raise ValueError("lengthscales must be a non-empty vector of positive reals")
        if not (np.isfinite(self.noise_var) and self.noise_var >= 0):
            raise ValueError(f"noise_var must be >= 0, got {self.noise_var}")
        if not (NU_MIN <= self.nu <= self.nu_max):
            raise ValueError(f"nu must lie in [{NU_MIN}, {self.nu_max}], got {self.nu}")

    @property
    def dim(self) -> int:
        return self.lengthscales.size

    def replace(self, **changes) -> "Hyperparameters":
        fields = dict(
            amplitude_sq=self.amplitude_sq,
            lengthscales=self.lengthscales,
            noise_var=self.noise_var,
            nu=self.nu,
            nu_free=self.nu_free,
            nu_max=self.nu_max,
        )
        fields.update(changes)
        return Hyperparameters(**fields)

    def to_dict(self) -> dict:
        return {
            "amplitude_sq": float(self.amplitude_sq),
            "lengthscales": [float(v) for v in self.lengthscales],
            "noise_var": float(self.noise_var),
            "nu": float(self.nu),
            "nu_free": bool(self.nu_free),
            "nu_max": float(self.nu_max),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparameters":
        return cls(**d)


@dataclass(frozen=True)
class KernelMatrix:
    values: np.ndarray
    jitter_used: float = 0.0


def scaled_distance(x1, x2, lengthscales) -> float:
    """Euclidean norm of ``(x1 - x2) / lengthscales``."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    ls = np.asarray(lengthscales, dtype=float)
    if x1.shape != x2.shape or x1.shape[-1:] != ls.shape[-1:]:
        raise ValueError(
            f"dimension mismatch: {x1.shape}, {x2.shape}, lengthscales {ls.shape}"
        )
    return float(np.sqrt(np.sum(((x1 - x2) / ls) ** 2)))


def _half_integer_match(nu: float):
    for p in HALF_INTEGERS:
        if abs(nu - p) < 1e-12:
            return p
    return None


def matern_half_integer(p: float, r, amplitude_sq: float = 1.0):
    """Closed-form Matern kernel for p in {1/2, 3/2, 5/2} at scaled distance r."""
    r = np.asarray(r, dtype=float)
    if p == 0.5:
        out = np.exp(-r)
    elif p == 1.5:
        s = math.sqrt(3.0) * r
        out = (1.0 + s) * np.exp(-s)
    elif p == 2.5:
        s = math.sqrt(5.0) * r
        out = (1.0 + s + s * s / 3.0) * np.exp(-s)
    else:
        raise ValueError(f"unsupported half-integer order {p!r}; use one of {HALF_INTEGERS}")
    out = amplitude_sq * out
    return float(out) if out.ndim == 0 else out


def _log_prefactor(nu: float) -> float:
    # log of 2**(1-nu) / Gamma(nu)
    return (1.0 - nu) * math.log(2.0) - gamma_ln(nu)


def matern_general(nu: float, r, amplitude_sq: float = 1.0, fast_path: bool = True):
    """Matern kernel of real order ``nu`` at scaled distance ``r``.

    Evaluated in log space; returns ``amplitude_sq`` below ``R_ZERO`` (the
    removable singularity of z**nu K_nu(z)).  With ``fast_path`` the closed
    forms are used at nu = 1/2, 3/2, 5/2 instead of the Bessel route.
    """
    p = _half_integer_match(nu) if fast_path else None
    if p is not None:
        return matern_half_integer(p, r, amplitude_sq)
    r = np.asarray(r, dtype=float)
    out = np.full(r.shape, float(amplitude_sq))
    pos = r >= R_ZERO
    if np.any(pos):
        z = math.sqrt(2.0 * nu) * r[pos]
        logk = _log_prefactor(nu) + nu * np.log(z) + log_bessel_k(nu, z)
        # rounding in log space can overshoot k(0) by ~1e-14 near r = 0
        out[pos] = amplitude_sq * np.minimum(np.exp(logk), 1.0)
    return float(out) if out.ndim == 0 else out


def _dk_dlogell_factor(nu: float, r: np.ndarray) -> np.ndarray:
    """g(r) such that dk/dlog(ell_k) = amplitude_sq * g(r) * s_k**2.

    s_k is the per-dimension scaled difference.  g(0) multiplies s_k**2 = 0,
    so entries below R_ZERO are set to 0.
    """
    out = np.zeros_like(r)
    pos = r >= R_ZERO
    if not np.any(pos):
        return out
    rp = r[pos]
    p = _half_integer_match(nu)
    if p == 0.5:
        out[pos] = np.exp(-rp) / rp
    elif p == 1.5:
        out[pos] = 3.0 * np.exp(-math.sqrt(3.0) * rp)
    elif p == 2.5:
        s = math.sqrt(5.0) * rp
        out[pos] = (5.0 / 3.0) * (1.0 + s) * np.exp(-s)
    else:
        z = math.sqrt(2.0 * nu) * rp
        lower, _ = log_bessel_k_adjacent(nu, z)
        out[pos] = np.exp(_log_prefactor(nu) + (nu + 1.0) * np.log(z) + lower - 2.0 * np.log(rp))
    return out


def _scaled(X, lengthscales):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    ls = np.asarray(lengthscales, dtype=float)
    if X.shape[1] != ls.size:
        raise ValueError(f"X has {X.shape[1]} columns but {ls.size} lengthscales")
    with np.errstate(over="ignore"):
        return X / ls


def _finite_distances(r):
    if not np.all(np.isfinite(r)):
        raise KernelNumericalError("scaled distances overflow; a lengthscale is too small")
    return r


def _condensed(Xs):
    return _finite_distances(pdist(Xs)) if Xs.shape[0] > 1 else np.zeros(0)


def _check_finite(K):
    bad = ~np.isfinite(K)
    if np.any(bad):
        i, j = map(int, np.argwhere(bad)[0])
        raise KernelNumericalError(f"non-finite covariance entry at ({i}, {j})", (i, j))


def _kernel_from_condensed(nu, cond, n, amplitude_sq):
    K = np.empty((n, n))
    if n > 1:
        K = squareform(np.atleast_1d(matern_general(nu, cond, amplitude_sq)))
    np.fill_diagonal(K, amplitude_sq)
    return K


def kernel_matrix(X, hp: Hyperparameters, include_noise: bool = True) -> KernelMatrix:
    """Covariance matrix of the training inputs, noise on the diagonal.

    Jitter is never added here; ``cholesky_with_jitter`` applies it only
    when the factorization fails.
    """
    Xs = _scaled(X, hp.lengthscales)
    n = Xs.shape[0]
    cond = _condensed(Xs)
    K = _kernel_from_condensed(hp.nu, cond, n, hp.amplitude_sq)
    if include_noise:
        K[np.diag_indices(n)] += hp.noise_var
    _check_finite(K)
    return KernelMatrix(values=K, jitter_used=0.0)


def cross_kernel(X1, X2, hp: Hyperparameters) -> np.ndarray:
    """Noise-free covariance between two input sets (m x n)."""
    A = _scaled(X1, hp.lengthscales)
    B = _scaled(X2, hp.lengthscales)
    r = _finite_distances(cdist(A, B))
    K = np.atleast_2d(matern_general(hp.nu, r, hp.amplitude_sq))
    _check_finite(K)
    return K


def gradient_names(hp: Hyperparameters) -> list[str]:
    names = ["log_amplitude_sq"]
    names += [f"log_lengthscale_{k}" for k in range(hp.dim)]
    names.append("log_noise_var")
    if hp.nu_free:
        names.append("nu")
    return names


def kernel_matrix_grad(X, hp: Hyperparameters, nu_step: float = NU_FD_STEP):
    """Derivatives of the (noisy) kernel matrix, one per free hyperparameter.

    Order: log amplitude_sq, log lengthscale_k for each dimension, log
    noise_var, then nu itself (central difference) when ``hp.nu_free``.
    """
    return kernel_matrix_with_grad(X, hp, nu_step)[1]


def kernel_matrix_with_grad(X, hp: Hyperparameters, nu_step: float = NU_FD_STEP):
    """``(KernelMatrix, grads)`` sharing one set of pairwise distances."""
    Xs = _scaled(X, hp.lengthscales)
    n, d = Xs.shape
    cond = _condensed(Xs)
    K0 = _kernel_from_condensed(hp.nu, cond, n, hp.amplitude_sq)
    grads = [K0.copy()]
    if n > 1:
        G = squareform(_dk_dlogell_factor(hp.nu, cond)) * hp.amplitude_sq
    else:
        G = np.zeros((1, 1))
    for k in range(d):
        diff = Xs[:, k][:, None] - Xs[:, k][None, :]
        grads.append(G * diff * diff)
    grads.append(hp.noise_var * np.eye(n))
    if hp.nu_free:
        grads.append(kernel_nu_derivative(cond, n, hp, nu_step))
    K0[np.diag_indices(n)] += hp.noise_var
    _check_finite(K0)
    for g in grads:
        _check_finite(g)
    return KernelMatrix(values=K0), grads


def kernel_nu_derivative(cond, n, hp: Hyperparameters, step: float = NU_FD_STEP):
    """Central-difference dK/dnu; one-sided if nu - step would drop below 0."""
    hi = _kernel_from_condensed(hp.nu + step, cond, n, hp.amplitude_sq)
    if hp.nu - step > 0:
        lo = _kernel_from_condensed(hp.nu - step, cond, n, hp.amplitude_sq)
        return (hi - lo) / (2.0 * step)
    mid = _kernel_from_condensed(hp.nu, cond, n, hp.amplitude_sq)
    return (hi - mid) / step
