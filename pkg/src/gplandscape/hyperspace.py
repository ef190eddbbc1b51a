"""Unconstrained parametrization of Matern GP hyperparameters.

Vector layout: ``[ln amplitude_sq, ln ell_1 .. ln ell_d, ln noise_var, u]``
where ``u`` is present only when nu is optimized and maps to
``nu = 0.5 + (nu_max - 0.5) * sigmoid(u)``.  With ``isotropic=True`` a single
log-lengthscale is shared by all dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit, logit

from .kernel import NU_MIN, Hyperparameters

# Beyond these the coordinate no longer changes the model measurably, so
# minima differing only there are the same minimum (see ``canonical``).
NU_LOGIT_SATURATION = 8.0
LOG_LENGTHSCALE_SATURATION = 8.0
LOG_NOISE_FLOOR = -20.0


@dataclass(frozen=True)
class SearchSpace:
    dim: int
    nu_free: bool = False
    nu: float = 2.5
    nu_max: float = 10.0
    isotropic: bool = False
    log_amplitude_bounds: tuple[float, float] = (-4.0, 4.0)
    log_lengthscale_bounds: tuple[float, float] = (-3.0, 5.0)
    log_noise_bounds: tuple[float, float] = (-12.0, 0.0)
    # added to the log-lengthscale sampling bounds, per dimension
    lengthscale_log_offset: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.nu_max > NU_MIN:
            raise ValueError(f"nu_max must exceed {NU_MIN}")
        if not self.nu_free and not NU_MIN <= self.nu <= self.nu_max:
            raise ValueError(f"fixed nu {self.nu} outside [{NU_MIN}, {self.nu_max}]")
        if self.lengthscale_log_offset and len(self.lengthscale_log_offset) != self.dim:
            raise ValueError("lengthscale_log_offset must have one entry per dimension")
        for lo, hi in (self.log_amplitude_bounds, self.log_lengthscale_bounds,
                       self.log_noise_bounds):
            if not lo < hi:
                raise ValueError(f"empty sampling interval ({lo}, {hi})")

    @property
    def n_lengthscales(self) -> int:
        return 1 if self.isotropic else self.dim

    @property
    def size(self) -> int:
        return 2 + self.n_lengthscales + (1 if self.nu_free else 0)

    @property
    def nu_index(self):
        return self.size - 1 if self.nu_free else None

    def with_nu(self, nu: float) -> "SearchSpace":
        """Same space with nu fixed at ``nu``."""
        return replace(self, nu_free=False, nu=float(nu))

    def names(self) -> list[str]:
        ls = (["log_lengthscale"] if self.isotropic
              else [f"log_lengthscale_{k}" for k in range(self.dim)])
        out = ["log_amplitude_sq", *ls, "log_noise_var"]
        if self.nu_free:
            out.append("nu_logit")
        return out

    # transforms ---------------------------------------------------------

    def nu_from_u(self, u):
        return NU_MIN + (self.nu_max - NU_MIN) * expit(u)

    def u_from_nu(self, nu):
        return logit((nu - NU_MIN) / (self.nu_max - NU_MIN))

    def dnu_du(self, u) -> float:
        s = expit(u)
        return (self.nu_max - NU_MIN) * s * (1.0 - s)

    def to_vector(self, hp: Hyperparameters) -> np.ndarray:
        if hp.dim != self.dim:
            raise ValueError(f"hyperparameters have dim {hp.dim}, space has {self.dim}")
        if hp.noise_var <= 0:
            raise ValueError("noise_var must be > 0 to take its logarithm")
        ls = np.log(hp.lengthscales)
        if self.isotropic:
            if not np.allclose(ls, ls[0], rtol=0, atol=1e-12):
                raise ValueError("isotropic space needs equal lengthscales")
            ls = ls[:1]
        v = [np.log(hp.amplitude_sq), *ls, np.log(hp.noise_var)]
        if self.nu_free:
            v.append(self.u_from_nu(hp.nu))
        v = np.array(v, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("hyperparameters map outside the open domain (nu at a bound?)")
        return v

    def from_vector(self, v) -> Hyperparameters:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.size,):
            raise ValueError(f"vector length {v.shape} does not match space size {self.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("vector has non-finite entries")
        m = self.n_lengthscales
        with np.errstate(over="ignore"):  # inf is rejected by Hyperparameters
            ls = np.exp(v[1:1 + m])
            amp, noise = np.exp(v[0]), np.exp(v[1 + m])
        if self.isotropic:
            ls = np.full(self.dim, ls[0])
        nu = float(self.nu_from_u(v[-1])) if self.nu_free else self.nu
        nu = min(max(nu, NU_MIN), self.nu_max)
        return Hyperparameters(
            amplitude_sq=float(amp),
            lengthscales=ls,
            noise_var=float(noise),
            nu=nu,
            nu_free=self.nu_free,
            nu_max=self.nu_max,
        )

    def canonical(self, v) -> np.ndarray:
        """Copy of ``v`` with saturated coordinates clipped, for comparing minima.

        The nu logit is clipped to +-NU_LOGIT_SATURATION (nu within 3e-3 of a
        bound), log-lengthscales to LOG_LENGTHSCALE_SATURATION above the
        sampling offset (the kernel is flat along that input) and the log
        noise from below at LOG_NOISE_FLOOR.
        """
        v = np.array(v, dtype=float)
        m = self.n_lengthscales
        offset = np.zeros(m)
        if self.lengthscale_log_offset:
            offset = np.asarray(self.lengthscale_log_offset, dtype=float)
            if self.isotropic:
                offset = np.array([offset.mean()])
        v[1:1 + m] = np.minimum(v[1:1 + m], offset + LOG_LENGTHSCALE_SATURATION)
        v[1 + m] = max(v[1 + m], LOG_NOISE_FLOOR)
        if self.nu_free:
            v[-1] = np.clip(v[-1], -NU_LOGIT_SATURATION, NU_LOGIT_SATURATION)
        return v

    def sample_start(self, rng: np.random.Generator) -> np.ndarray:
        """Uniform draw inside the configured log-bounds (and nu range)."""
        m = self.n_lengthscales
        lo, hi = self.log_lengthscale_bounds
        offset = np.zeros(m)
        if self.lengthscale_log_offset:
            offset = np.asarray(self.lengthscale_log_offset, dtype=float)
            if self.isotropic:
                offset = np.array([offset.mean()])
        v = [rng.uniform(*self.log_amplitude_bounds)]
        v.extend(rng.uniform(lo, hi, size=m) + offset)
        v.append(rng.uniform(*self.log_noise_bounds))
        if self.nu_free:
            frac = min(max(rng.uniform(), 1e-12), 1.0 - 1e-12)
            v.append(float(logit(frac)))
        return np.array(v, dtype=float)


def space_for(dataset, nu_free: bool = False, nu: float = 2.5, nu_max: float = 10.0,
              isotropic: bool = False, scale_lengthscales: bool = True, **bounds) -> SearchSpace:
    """Search space for ``dataset``.

    With ``scale_lengthscales`` the lengthscale sampling bounds are shifted by
    the log of each input dimension's spread, so bounds written for unit-scale
    inputs also bracket raw (unstandardized) inputs.
    """
    offset = ()
    if scale_lengthscales:
        spread = np.std(dataset.X, axis=0)
        spread = np.where(spread > 0, spread, 1.0)
        offset = tuple(float(v) for v in np.log(spread))
    return SearchSpace(dim=dataset.d, nu_free=nu_free, nu=nu, nu_max=nu_max,
                       isotropic=isotropic, lengthscale_log_offset=offset, **bounds)
