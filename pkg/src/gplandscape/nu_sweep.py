"""Landscapes over a grid of fixed nu: tracking, clustering, folds and PCA."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .hyperspace import SearchSpace
from .landscape import BasinHoppingConfig, ExplorationError, MinimumRecord, explore_gp

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FoldEvent:
    nu_high: float
    nu_low: float
    cluster: int
    barrier: float | None = None

    def to_dict(self) -> dict:
        return {"nu_high": self.nu_high, "nu_low": self.nu_low, "cluster": self.cluster,
                "barrier": self.barrier}


@dataclass
class SweepResult:
    nu_grid: tuple
    per_nu: dict
    errors: dict = field(default_factory=dict)
    labels: dict = field(default_factory=dict)
    catastrophes: list = field(default_factory=list)

    def __post_init__(self):
        grid = tuple(float(v) for v in self.nu_grid)
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("nu_grid must be strictly ascending")
        self.nu_grid = grid

    def minima(self):
        """All ``(nu, record)`` pairs in grid order then id order."""
        return [(nu, m) for nu in self.nu_grid for m in self.per_nu.get(nu, [])]

    def counts(self) -> dict:
        return {nu: len(self.per_nu.get(nu, [])) for nu in self.nu_grid}

    def to_dict(self) -> dict:
        return {
            "nu_grid": list(self.nu_grid),
            "per_nu": {repr(nu): [m.to_dict() for m in self.per_nu.get(nu, [])]
                       for nu in self.nu_grid},
            "errors": {repr(nu): msg for nu, msg in sorted(self.errors.items())},
            "labels": [{"nu": nu, "minimum_id": mid, "cluster": c}
                       for (nu, mid), c in sorted(self.labels.items())],
            "catastrophes": [e.to_dict() for e in self.catastrophes],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "SweepResult":
        grid = tuple(float(v) for v in d["nu_grid"])
        per = {float(k): [MinimumRecord.from_dict(m) for m in v] for k, v in d["per_nu"].items()}
        return cls(
            nu_grid=grid,
            per_nu=per,
            errors={float(k): v for k, v in d.get("errors", {}).items()},
            labels={(float(e["nu"]), int(e["minimum_id"])): int(e["cluster"])
                    for e in d.get("labels", [])},
            catastrophes=[FoldEvent(**e) for e in d.get("catastrophes", [])],
        )


def nu_grid(start: float, stop: float, step: float) -> tuple:
    """Inclusive grid ``start, start + step, ..., stop`` rounded to 10 decimals."""
    if not step > 0 or stop < start:
        raise ValueError("need step > 0 and stop >= start")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return tuple(round(start + i * step, 10) for i in range(n))


def sweep(train, space: SearchSpace, grid, config: BasinHoppingConfig, test=None,
          warm_start: bool = True) -> SweepResult:
    """Basin-hop the -lml at each fixed nu in ``grid``.

    With ``warm_start`` the minima of the previous grid value are added as
    starting points (next to the usual random starts).  A failure at one nu
    is recorded in ``errors`` and the sweep moves on.
    """
    grid = tuple(float(v) for v in grid)
    result = SweepResult(nu_grid=grid, per_nu={})
    previous: list = []
    for nu in grid:
        sp = space.with_nu(nu)
        warm = [m.theta for m in previous] if warm_start else []
        try:
            exp = explore_gp(train, sp, config, test=test, warm_starts=warm)
        except (ExplorationError, ArithmeticError) as exc:
            log.warning("nu=%g: %s", nu, exc)
            result.errors[nu] = str(exc)
            result.per_nu[nu] = []
            previous = []
            continue
        result.per_nu[nu] = exp.minima
        previous = exp.minima
    return result


# clustering ---------------------------------------------------------------


def _kmeans_pp(X, k, rng):
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(X[idx])
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return np.array(centers)


def _lloyd(X, centers, max_iter):
    k = centers.shape[0]
    labels = np.zeros(X.shape[0], dtype=int)
    for _ in range(max_iter):
        dist = np.sum((X[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new = np.argmin(dist, axis=1)
        for j in range(k):
            if not np.any(new == j):
                # re-seed an empty cluster at the worst-fitted point
                far = int(np.argmax(dist[np.arange(X.shape[0]), new]))
                new[far] = j
        centers = np.array([X[new == j].mean(axis=0) for j in range(k)])
        if np.array_equal(new, labels):
            break
        labels = new
    inertia = float(np.sum((X - centers[labels]) ** 2))
    return labels, centers, inertia


def kmeans(X, k: int, n_init: int = 20, seed: int = 0, max_iter: int = 300):
    """k-means with k-means++ seeding; best of ``n_init`` restarts by inertia.

    Returns ``(labels, centers, inertia)``.  Clusters are renumbered by the
    first point that belongs to them, so labels depend only on the row order.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a non-empty 2d array")
    k = max(1, min(int(k), X.shape[0]))
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        out = _lloyd(X, _kmeans_pp(X, k, rng), max_iter)
        if best is None or out[2] < best[2] - 1e-12:
            best = out
    labels, centers, inertia = best
    remap = {}
    for lab in labels:
        remap.setdefault(int(lab), len(remap))
    order = sorted(remap, key=remap.get)
    return np.array([remap[int(v)] for v in labels]), centers[order], inertia


def standardize_columns(F):
    F = np.asarray(F, dtype=float)
    mu = F.mean(axis=0)
    sd = F.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (F - mu) / sd


def sweep_features(result: SweepResult, coords=None, drop_nu: bool = False):
    """Canonically ordered ``(keys, features)``; keys are ``(nu, minimum id)``."""
    items = sorted(result.minima(),
                   key=lambda p: (p[0], p[1].loss, tuple(np.round(p[1].theta, 12))))
    keys, rows = [], []
    for nu, m in items:
        t = np.asarray(m.theta, dtype=float)
        if coords is not None:
            t = coords(t)
        if drop_nu:
            t = t[:-1]
        keys.append((nu, m.id))
        rows.append(t)
    return keys, np.array(rows)


def cluster_minima(result: SweepResult, coords=None, drop_nu: bool = False,
                   n_init: int = 20, seed: int = 0) -> dict:
    """k-means over standardized theta of all minima, k = max per-nu count.

    Loss is not a feature.  ``coords`` maps theta before clustering (e.g.
    ``SearchSpace.canonical``) and ``drop_nu`` removes a trailing nu
    coordinate.  Returns labels keyed by ``(nu, minimum id)`` and also
    stores them on ``result``.
    """
    keys, F = sweep_features(result, coords, drop_nu)
    if not keys:
        raise ValueError("sweep has no minima to cluster")
    k = max(result.counts().values())
    labels, _, _ = kmeans(standardize_columns(F), k, n_init=n_init, seed=seed)
    out = {key: int(lab) for key, lab in zip(keys, labels)}
    result.labels = out
    return out


def detect_folds(result: SweepResult, graphs: dict | None = None) -> list:
    """Clusters present at a grid value but absent at the next lower one.

    With ``graphs`` (nu -> LandscapeGraph) the event carries the smallest
    barrier height of that cluster's minima at ``nu_high``.
    """
    if not result.labels:
        raise ValueError("cluster the sweep before detecting folds")
    present: dict = {}
    for (nu, mid), c in result.labels.items():
        present.setdefault(nu, {}).setdefault(c, []).append(mid)
    events = []
    grid = result.nu_grid
    for lo, hi in zip(grid, grid[1:]):
        if lo in result.errors or hi in result.errors:
            continue
        low_c = present.get(lo, {})
        for c, mids in sorted(present.get(hi, {}).items()):
            if c in low_c:
                continue
            barrier = None
            if graphs is not None and hi in graphs:
                hs = [graphs[hi].barrier_height(mid) for mid in mids]
                hs = [h for h in hs if h is not None]
                barrier = min(hs) if hs else None
            events.append(FoldEvent(hi, lo, c, barrier))
    result.catastrophes = events
    return events


def cluster_loss_jumps(result: SweepResult) -> dict:
    """Per cluster, the largest |loss change| between adjacent grid values.

    A cluster's loss at one nu is its lowest member loss.  Only grid pairs
    where the cluster is populated at both values count; clusters without
    such a pair are omitted.
    """
    best: dict = {}
    for nu, m in result.minima():
        c = result.labels.get((nu, m.id))
        if c is None:
            continue
        key = (c, nu)
        best[key] = min(best.get(key, math.inf), m.loss)
    out = {}
    grid = result.nu_grid
    for c in sorted({c for c, _ in best}):
        jumps = [abs(best[(c, hi)] - best[(c, lo)]) for lo, hi in zip(grid, grid[1:])
                 if (c, lo) in best and (c, hi) in best]
        if jumps:
            out[c] = max(jumps)
    return out


# PCA ----------------------------------------------------------------------


@dataclass
class PCAResult:
    coordinates: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    explained_ratio: np.ndarray
    degenerate: bool


def pca_project(F, n_components: int = 2, standardize: bool = True,
                rank_tol: float = 1e-10) -> PCAResult:
    """Principal components of the rows of ``F``.

    Signs are fixed so the largest-magnitude loading of each component is
    positive.  Components with singular value below ``rank_tol`` times the
    largest are dropped and ``degenerate`` is set.
    """
    F = np.asarray(F, dtype=float)
    if F.ndim != 2 or F.shape[0] < 2:
        raise ValueError("need at least 2 rows")
    Z = standardize_columns(F) if standardize else F - F.mean(axis=0)
    _, s, Vt = np.linalg.svd(Z, full_matrices=False)
    total = float(np.sum(s ** 2))
    keep = int(np.sum(s > rank_tol * (s[0] if s.size and s[0] > 0 else 1.0)))
    n = min(n_components, keep)
    degenerate = n < n_components
    comps = Vt[:n].copy()
    for i in range(n):
        j = int(np.argmax(np.abs(comps[i])))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    var = s[:n] ** 2 / (F.shape[0] - 1)
    ratio = s[:n] ** 2 / total if total > 0 else np.zeros(n)
    return PCAResult(Z @ comps.T, comps, var, ratio, degenerate)


# emitters -------------------------------------------------------------------


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else (f"{v:.10g}" if isinstance(v, float) else v) for v in r])
    return buf.getvalue()


def clusters_csv(result: SweepResult) -> str:
    """nu, cluster, minimum id, loss, train and test MSE per minimum."""
    rows = []
    for nu, m in result.minima():
        rows.append((nu, result.labels.get((nu, m.id), ""), m.id, float(m.loss),
                     m.train_mse, m.test_mse))
    rows.sort(key=lambda r: (r[0], r[1] if r[1] != "" else -1, r[2]))
    return _csv(["nu", "cluster", "minimum_id", "loss", "train_mse", "test_mse"], rows)


def pca_csv(result: SweepResult, coords=None, drop_nu: bool = False) -> str:
    keys, F = sweep_features(result, coords, drop_nu)
    if len(keys) < 2:
        return _csv(["nu", "minimum_id", "cluster", "pc1", "pc2"], [])
    p = pca_project(F, 2)
    rows = []
    for (nu, mid), xy in zip(keys, p.coordinates):
        pcs = [float(v) for v in xy] + [None] * (2 - xy.size)
        rows.append((nu, mid, result.labels.get((nu, mid), ""), *pcs))
    return _csv(["nu", "minimum_id", "cluster", "pc1", "pc2"], rows)


def folds_csv(events) -> str:
    return _csv(["nu_high", "nu_low", "cluster", "barrier"],
                [(e.nu_high, e.nu_low, e.cluster, e.barrier) for e in events])

