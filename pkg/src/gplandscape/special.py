"""Log-Gamma and the modified Bessel function of the second kind, K_nu.

K_nu is evaluated for arbitrary real order with Temme's series (x < 2) or
Steed's continued fraction (x >= 2) for the reduced order mu in [-1/2, 1/2],
followed by upward recurrence in the order.  The recurrence is carried as a
ratio K_{k+1}/K_k so the whole computation stays in log space; this keeps
x**nu * K_nu(x) finite inside the Matern kernel for tiny x and large nu.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

__all__ = [
    "DomainError",
    "BesselOverflowError",
    "gamma_ln",
    "log_bessel_k",
    "log_bessel_k_adjacent",
    "bessel_k",
    "bessel_k_dnu",
    "default_nu_step",
]

_EPS = 1e-16
_MAX_ITER = 10_000
_X_SWITCH = 2.0
_LOG_MAX = math.log(np.finfo(float).max)

# Taylor coefficients of 1/Gamma(z) about z = 0: 1/Gamma(z) = sum_k c[k] z**k.
_RGAMMA_TAYLOR = np.array([
    0.0,
    1.0,
    0.57721566490153286061,
    -0.65587807152025388108,
    -0.042002635034095235529,
    0.1665386113822914895,
    -0.042197734555544336748,
    -0.0096219715278769735621,
    0.0072189432466630995424,
    -0.0011651675918590651121,
    -0.00021524167411495097282,
    0.00012805028238811618615,
    -0.000020134854780788238656,
    -1.2504934821426706573e-6,
    1.1330272319816958824e-6,
    -2.0563384169776071035e-7,
    6.1160951044814158179e-9,
    5.0020076444692229301e-9,
    -1.1812745704870201446e-9,
    1.0434267116911005105e-10,
    7.782263439905071254e-12,
    -3.6968056186422057082e-12,
    5.100370287454475979e-13,
    -2.0583260535665067832e-14,
    -5.3481225394230179824e-15,
    1.2267786282382607902e-15,
    -1.1812593016974587695e-16,
    1.1866922547516003326e-18,
    1.4123806553180317816e-18,
    -2.2987456844353702066e-19,
    1.7144063219273374334e-20,
])


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


class BesselOverflowError(OverflowError):
    """K_nu(x) is finite mathematically but exceeds the float range."""


def gamma_ln(z: float) -> float:
    """Natural log of the Gamma function for real ``z > 0``."""
    z = float(z)
    if not math.isfinite(z) or z <= 0.0:
        raise DomainError(f"gamma_ln requires finite z > 0, got {z!r}")
    return math.lgamma(z)


@njit(cache=True)
def _temme_gammas(mu):
    """Return (gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu)) for |mu| <= 1/2.

    gam1 = (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu) is summed directly from
    the Taylor series so it does not cancel as mu -> 0.
    """
    c = _RGAMMA_TAYLOR
    gam1 = 0.0
    gam2 = 0.0
    # 1/Gamma(1+mu) = sum_{k>=1} c[k] mu**(k-1)
    for k in range(c.shape[0] - 1, 0, -1):
        if k % 2 == 0:
            gam1 -= c[k] * mu ** (k - 2)
        else:
            gam2 += c[k] * mu ** (k - 1)
    return gam1, gam2, gam2 - mu * gam1, gam2 + mu * gam1


@njit(cache=True)
def _pair_small(mu, gam1, gam2, gampl, gammi, x):
    """log K_mu(x), log K_{mu+1}(x) by Temme's series, 0 < x < 2."""
    x2 = 0.5 * x
    pimu = math.pi * mu
    fact = 1.0 if abs(pimu) < _EPS else pimu / math.sin(pimu)
    d = -math.log(x2)
    e = mu * d
    fact2 = 1.0 if abs(e) < _EPS else math.sinh(e) / e
    ff = fact * (gam1 * math.cosh(e) + gam2 * fact2 * d)
    total = ff
    ee = math.exp(e)
    p = 0.5 * ee / gampl
    q = 0.5 / (ee * gammi)
    c = 1.0
    dd = x2 * x2
    total1 = p
    mu2 = mu * mu
    for i in range(1, _MAX_ITER):
        ff = (i * ff + p + q) / (i * i - mu2)
        c *= dd / i
        p /= i - mu
        q /= i + mu
        delta = c * ff
        total += delta
        total1 += c * (p - i * ff)
        if abs(delta) < abs(total) * _EPS:
            break
    return math.log(total), math.log(total1) + math.log(2.0 / x)


@njit(cache=True)
def _pair_large(mu, x):
    """log K_mu(x), log K_{mu+1}(x) by Steed's continued fraction, x >= 2."""
    mu2 = mu * mu
    a1 = 0.25 - mu2
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = d
    delh = d
    q1 = 0.0
    q2 = 1.0
    q = a1
    c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(2, _MAX_ITER):
        a -= 2 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1 = q2
        q2 = qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h += delh
        dels = q * delh
        s += dels
        if abs(dels / s) < _EPS:
            break
    h = a1 * h
    lk = 0.5 * math.log(math.pi / (2.0 * x)) - x - math.log(s)
    return lk, lk + math.log((mu + x + 0.5 - h) / x)


@njit(cache=True)
def _log_k_orders(nu, xs, lower, out):
    """Fill out[i] = log K_nu(xs[i]) and lower[i] = log K_{nu-1}(xs[i]).

    ``lower`` is only meaningful when nu >= 1/2 (at least one recurrence
    step); the ratio r = K_{k+1}/K_k is positive so no cancellation occurs.
    """
    nl = int(nu + 0.5)
    mu = nu - nl
    gam1, gam2, gampl, gammi = _temme_gammas(mu)
    for j in range(xs.shape[0]):
        x = xs[j]
        if x < _X_SWITCH:
            lk, lk1 = _pair_small(mu, gam1, gam2, gampl, gammi, x)
        else:
            lk, lk1 = _pair_large(mu, x)
        ratio = math.exp(lk1 - lk)
        prev = lk1
        for i in range(1, nl + 1):
            prev = lk
            lk += math.log(ratio)
            ratio = 2.0 * (mu + i) / x + 1.0 / ratio
        lower[j] = prev
        out[j] = lk


def _check_nu(nu) -> float:
    nu = float(nu)
    if not math.isfinite(nu):
        raise DomainError(f"Bessel order must be finite, got {nu!r}")
    return abs(nu)


def _check_x(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)) or np.any(x <= 0.0):
        raise DomainError("Bessel argument must be finite and > 0")
    return x


def log_bessel_k(nu: float, x) -> np.ndarray | float:
    """Natural log of K_nu(x); ``nu`` scalar, ``x`` scalar or array.

    Never overflows for representable ``x``: the returned log can exceed
    the float exponent range where K_nu itself cannot be stored.
    """
    return _log_bessel(nu, x)[1]


def log_bessel_k_adjacent(nu: float, x):
    """Return ``(log K_{nu-1}(x), log K_nu(x))`` from a single recurrence.

    Requires ``nu >= 1/2``.  Used by the Matern lengthscale gradient, which
    needs the order below ``nu`` at the same arguments.
    """
    if _check_nu(nu) < 0.5:
        raise DomainError("log_bessel_k_adjacent requires nu >= 1/2")
    return _log_bessel(nu, x)


def _log_bessel(nu, x):
    nu = _check_nu(nu)
    x_arr = _check_x(x)
    xf = np.ascontiguousarray(x_arr, dtype=float).ravel()
    out = np.empty_like(xf)
    lower = np.empty_like(xf)
    _log_k_orders(nu, xf, lower, out)
    if x_arr.ndim == 0:
        return float(lower[0]), float(out[0])
    return lower.reshape(x_arr.shape), out.reshape(x_arr.shape)


def bessel_k(nu: float, x) -> np.ndarray | float:
    """Modified Bessel function of the second kind K_nu(x) for real order.

    Raises
    ------
    DomainError
        If ``x <= 0`` or ``nu`` is not finite.
    BesselOverflowError
        If the value exceeds the largest representable float.
    """
    lk = log_bessel_k(nu, x)
    if np.any(np.asarray(lk) > _LOG_MAX):
        raise BesselOverflowError(
            f"K_{float(nu)}(x) overflows double precision; use log_bessel_k"
        )
    return np.exp(lk)


def default_nu_step(nu: float) -> float:
    """Finite-difference step in the order used for dK/dnu."""
    return max(1e-6, 1e-8 * abs(nu))


def bessel_k_dnu(nu: float, x, h: float | None = None):
    """Central difference estimate of dK_nu(x)/dnu.

    K is even in the order, so steps below zero reflect onto |nu - h| and
    the estimate at nu = 0 is exactly zero.
    """
    if h is None:
        h = default_nu_step(nu)
    if not h > 0:
        raise DomainError(f"finite-difference step must be > 0, got {h!r}")
    nu = float(nu)
    return (bessel_k(nu + h, x) - bessel_k(nu - h, x)) / (2.0 * h)
