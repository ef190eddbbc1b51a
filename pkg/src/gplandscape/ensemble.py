"""GP ensembles over landscape minima: weights, mixture prediction, advice."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .gp import FittedGP, PosteriorPrediction, fit_gp, mse, posterior_predict

SCHEMES = ("unweighted", "nlml", "occupation", "hessian_norm", "train_mse")
WEIGHTED_SCHEMES = ("nlml", "occupation", "hessian_norm")
ADVISOR_THRESHOLD = 10


class WeightError(ValueError):
    """A member lacks the statistic its weighting scheme needs."""


def _raw_scores(members, scheme: str) -> np.ndarray:
    n = len(members)
    if scheme == "unweighted":
        return np.ones(n)
    if scheme == "nlml":
        L = np.array([m.loss for m in members], dtype=float)
        return np.exp(-(L - L.min()))
    if scheme == "occupation":
        occ = [m.log_occupation for m in members]
        if any(v is None for v in occ):
            raise WeightError("occupation weights need log_occupation on every member")
        occ = np.array(occ, dtype=float)
        return np.exp(occ - occ.max())
    if scheme == "hessian_norm":
        s = [m.spectral_norm for m in members]
        if any(v is None for v in s):
            raise WeightError("hessian_norm weights need the Hessian spectral norm")
        s = np.array(s, dtype=float)
        if np.any(s <= 0):
            raise WeightError("hessian_norm weights need a positive spectral norm")
        return 1.0 / s
    if scheme == "train_mse":
        t = [m.train_mse for m in members]
        if any(v is None for v in t):
            raise WeightError("train_mse weights need train_mse on every member")
        t = np.array(t, dtype=float)
        if np.any(t <= 0):
            raise WeightError("train_mse weights are undefined for a zero training error")
        return 1.0 / t
    raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")


def compute_weights(members, scheme: str, normalize: bool = True) -> np.ndarray:
    """Per-member weights under ``scheme``.

    unweighted: 1.  nlml: exp(-(L_i - L_min)).  occupation:
    exp(log_occ_i - max log_occ).  hessian_norm: 1 / spectral_norm_i.
    train_mse (diagnostic only): 1 / train_mse_i.  With ``normalize`` the
    scores are divided by their sum.
    """
    if len(members) == 0:
        raise ValueError("need at least one member")
    w = _raw_scores(members, scheme)
    if normalize:
        w = w / w.sum()
    return w


@dataclass
class EnsembleSpec:
    members: list
    scheme: str
    weights: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if len(self.members) < 1:
            raise ValueError("an ensemble needs at least one member")
        if self.weights.shape != (len(self.members),):
            raise ValueError("one weight per member required")
        if np.any(self.weights < 0):
            raise ValueError("weights must be non-negative")
        if self.normalized and abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("normalized weights must sum to 1")

    @classmethod
    def build(cls, members, scheme: str, normalize: bool = True) -> "EnsembleSpec":
        return cls(list(members), scheme, compute_weights(members, scheme, normalize), normalize)


def fit_members(members, train, space=None) -> list:
    """One fitted GP per minimum (hyperparameters from the record or ``space``)."""
    out = []
    for m in members:
        hp = m.hyperparameters if m.hyperparameters is not None else space.from_vector(m.theta)
        out.append(fit_gp(train, hp))
    return out


def ensemble_predict(models, weights, X_star, include_noise: bool = False,
                     raw_units: bool = True) -> PosteriorPrediction:
    """Mixture moments of the member posteriors.

    mean = sum w_i mu_i; variance = sum w_i s_i^2 + sum w_i (mu_i - mean)^2,
    which equals the mixture variance when the weights sum to 1.
    """
    w = np.asarray(weights, dtype=float)
    if len(models) != w.size:
        raise ValueError(f"{len(models)} models but {w.size} weights")
    preds = [posterior_predict(m, X_star, include_noise, raw_units) for m in models]
    mu = np.array([p.mean for p in preds])
    var = np.array([p.variance for p in preds])
    mean = np.zeros(mu.shape[1])
    for wi, mi in zip(w, mu):
        mean = mean + wi * mi
    v = np.zeros_like(mean)
    for wi, mi, si in zip(w, mu, var):
        v = v + wi * si + wi * (mi - mean) ** 2
    return PosteriorPrediction(mean, v, sum(p.n_clamped for p in preds))


def best_member_index(members) -> int:
    """Index of the member with the lowest -lml (ties: first)."""
    return int(np.argmin([m.loss for m in members]))


@dataclass(frozen=True)
class ImprovementRow:
    scheme: str
    normalized: bool
    n_members: int
    ensemble_mse: float
    baseline_mse: float
    improvement_pct: float


def improvement_report(members, models, test, schemes=SCHEMES[:4],
                       normalize: bool = True) -> list:
    """Percent test-MSE improvement of each scheme over the lowest -lml member.

    MSE is measured in raw target units.  Schemes whose statistic is missing
    are skipped.
    """
    y = test.raw_y()
    base = best_member_index(members)
    base_mse = mse(posterior_predict(models[base], test.X).mean, y)
    rows = []
    for scheme in schemes:
        try:
            w = compute_weights(members, scheme, normalize)
        except WeightError:
            continue
        e = mse(ensemble_predict(models, w, test.X).mean, y)
        pct = 100.0 * (base_mse - e) / base_mse if base_mse > 0 else 0.0
        rows.append(ImprovementRow(scheme, normalize, len(members), e, base_mse, pct))
    return rows


@dataclass(frozen=True)
class Advice:
    recommendation: str
    n_minima: int
    threshold: int
    loss_spread: float
    weight_entropy: float


def ensemble_advisor(members, threshold: int = ADVISOR_THRESHOLD) -> Advice:
    """"single" when fewer than ``threshold`` minima were found, else "ensemble".

    Also reports the loss spread (max - min) and the Shannon entropy of the
    nlml weights.
    """
    n = len(members)
    if n == 0:
        raise ValueError("no minima to advise on")
    losses = np.array([m.loss for m in members], dtype=float)
    w = compute_weights(members, "nlml")
    nz = w[w > 0]
    entropy = float(-np.sum(nz * np.log(nz)))
    rec = "single" if n < threshold else "ensemble"
    return Advice(rec, n, threshold, float(losses.max() - losses.min()), entropy)


def improvement_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scheme", "normalized", "n_members", "ensemble_mse", "baseline_mse",
                "improvement_pct"])
    for r in rows:
        w.writerow([r.scheme, int(r.normalized), r.n_members, f"{r.ensemble_mse:.10g}",
                    f"{r.baseline_mse:.10g}", f"{r.improvement_pct:.10g}"])
    return buf.getvalue()


def weights_csv(members, schemes=SCHEMES, normalize: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    usable = []
    cols = {}
    for s in schemes:
        try:
            cols[s] = compute_weights(members, s, normalize)
            usable.append(s)
        except WeightError:
            pass
    w.writerow(["minimum_id", "loss", *usable])
    for i, m in enumerate(members):
        w.writerow([m.id, f"{m.loss:.10g}", *(f"{cols[s][i]:.10g}" for s in usable)])
    return buf.getvalue()


def weight_entropy(weights) -> float:
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    nz = w[w > 0]
    return float(-np.sum(nz * np.log(nz))) if nz.size else math.nan
