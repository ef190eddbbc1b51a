"""Basin-hopping exploration of a loss landscape and curvature at its minima.

Everything here works on an *objective*: any object with ``size`` and
``value_and_grad(theta) -> (float, ndarray)``.  ``GPObjective`` is the
production one; analytic surfaces are wrapped with ``FunctionObjective``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.linalg import LinAlgError
from scipy.optimize import minimize

from .kernel import Hyperparameters, KernelNumericalError
from .special import DomainError

log = logging.getLogger(__name__)

EIGEN_FLOOR = 1e-8
NEGATIVE_CURVATURE_TOL = 1e-6
HESSIAN_STEP = 1e-4


class ExplorationError(RuntimeError):
    """Exploration could not produce a single converged minimum."""


class FunctionObjective:
    """Adapter turning plain ``f`` and ``grad`` callables into an objective."""

    def __init__(self, f, grad, size: int):
        self.f = f
        self.grad = grad
        self.size = size
        self.n_evals = 0

    def value_and_grad(self, theta):
        self.n_evals += 1
        theta = np.asarray(theta, dtype=float)
        return float(self.f(theta)), np.asarray(self.grad(theta), dtype=float)

    def value(self, theta):
        return self.value_and_grad(theta)[0]

    def gradient(self, theta):
        return self.value_and_grad(theta)[1]


_NUMERIC_ERRORS = (LinAlgError, KernelNumericalError, DomainError, OverflowError,
                   FloatingPointError, ValueError)


def safe_value_and_grad(objective, theta):
    """``value_and_grad`` mapping numerical failures to ``(inf, nan)``."""
    try:
        v, g = objective.value_and_grad(theta)
    except _NUMERIC_ERRORS:
        return math.inf, np.full(np.size(theta), np.nan)
    if not (math.isfinite(v) and np.all(np.isfinite(g))):
        return math.inf, np.full(np.size(theta), np.nan)
    return v, g


# records ----------------------------------------------------------------


@dataclass
class MinimumRecord:
    theta: np.ndarray
    loss: float
    grad_norm: float
    hyperparameters: Hyperparameters | None = None
    hessian_eigenvalues: np.ndarray | None = None
    spectral_norm: float | None = None
    log_occupation: float | None = None
    train_mse: float | None = None
    test_mse: float | None = None
    id: int = -1

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else [float(v) for v in np.ravel(a)]

        return {
            "id": self.id,
            "theta": arr(self.theta),
            "hyperparameters": None if self.hyperparameters is None
            else self.hyperparameters.to_dict(),
            "loss": float(self.loss),
            "grad_norm": float(self.grad_norm),
            "hessian_eigenvalues": arr(self.hessian_eigenvalues),
            "spectral_norm": None if self.spectral_norm is None else float(self.spectral_norm),
            "log_occupation": None if self.log_occupation is None
            else float(self.log_occupation),
            "train_mse": None if self.train_mse is None else float(self.train_mse),
            "test_mse": None if self.test_mse is None else float(self.test_mse),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MinimumRecord":
        hp = d.get("hyperparameters")
        ev = d.get("hessian_eigenvalues")
        return cls(
            theta=np.array(d["theta"], dtype=float),
            loss=d["loss"],
            grad_norm=d["grad_norm"],
            hyperparameters=None if hp is None else Hyperparameters.from_dict(hp),
            hessian_eigenvalues=None if ev is None else np.array(ev, dtype=float),
            spectral_norm=d.get("spectral_norm"),
            log_occupation=d.get("log_occupation"),
            train_mse=d.get("train_mse"),
            test_mse=d.get("test_mse"),
            id=d.get("id", -1),
        )


@dataclass
class BasinHoppingConfig:
    """Basin-hopping settings.

    ``metropolis_c=None`` picks c as half the interquartile range of the
    losses from the initial local minimizations.
    """

    metropolis_c: float | None = None
    step_scale: float = 1.0
    stall_n: int = 20
    max_steps: int = 200
    local_tol: float = 1e-3
    max_local_iter: int = 1000
    n_initial: int = 10
    dedup_loss_tol: float = 1e-4
    dedup_theta_tol: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.metropolis_c is not None and not self.metropolis_c > 0:
            raise ValueError("metropolis_c must be > 0")
        for name in ("step_scale", "local_tol", "dedup_loss_tol", "dedup_theta_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.stall_n < 1 or self.max_steps < 0 or self.stall_n > max(self.max_steps, 1):
            raise ValueError("need 1 <= stall_n <= max_steps")
        if self.n_initial < 1:
            raise ValueError("n_initial must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LocalResult:
    theta: np.ndarray
    loss: float
    grad_norm: float
    converged: bool
    n_iter: int = 0


@dataclass
class Exploration:
    minima: list[MinimumRecord]
    stats: dict = field(default_factory=dict)


# local search -----------------------------------------------------------


def local_minimize(start, objective, tol: float = 1e-3, max_iter: int = 1000) -> LocalResult:
    """L-BFGS from ``start``; converged iff the final gradient 2-norm <= ``tol``."""
    start = np.asarray(start, dtype=float)
    v0, g0 = safe_value_and_grad(objective, start)
    if not math.isfinite(v0):
        return LocalResult(start, math.inf, math.inf, False)
    gn0 = float(np.linalg.norm(g0))
    if gn0 <= tol:
        return LocalResult(start.copy(), v0, gn0, True)

    def fun(x):
        v, g = safe_value_and_grad(objective, x)
        if not math.isfinite(v):
            # large finite value makes the line search back off
            return 1e300, np.zeros_like(x)
        return v, g

    res = minimize(fun, start, jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter, "gtol": tol / (10.0 * math.sqrt(start.size)),
                            "ftol": 1e-15, "maxcor": 20})
    theta = np.asarray(res.x, dtype=float)
    v, g = safe_value_and_grad(objective, theta)
    gn = float(np.linalg.norm(g)) if math.isfinite(v) else math.inf
    if math.isfinite(v) and gn > tol:
        theta, v, gn = _newton_polish(theta, objective, tol)
    ok = math.isfinite(v) and gn <= tol
    return LocalResult(theta, v, gn, ok, int(res.nit))


def _newton_polish(theta, objective, tol, max_steps: int = 8):
    """Damped Newton steps on a nearly converged point (positive-definite part only)."""
    v, g = safe_value_and_grad(objective, theta)
    gn = float(np.linalg.norm(g))
    for _ in range(max_steps):
        if gn <= tol:
            break
        try:
            H, _ = hessian_fd(theta, objective)
        except ArithmeticError:
            break
        w, V = np.linalg.eigh(H)
        scale = max(np.max(np.abs(w)), 1e-300)
        w = np.maximum(np.abs(w), 1e-6 * scale)
        step = -V @ ((V.T @ g) / w)
        t = 1.0
        for _ in range(20):
            cand = theta + t * step
            cv, cg = safe_value_and_grad(objective, cand)
            if math.isfinite(cv) and cv <= v + 1e-12 * abs(v):
                break
            t *= 0.5
        else:
            break
        theta, v, g = cand, cv, cg
        gn = float(np.linalg.norm(g))
    return theta, v, gn


def metropolis_accept(delta_loss: float, c: float, rng: np.random.Generator) -> bool:
    """Accept with probability min(1, exp(-delta_loss / c))."""
    if not c > 0:
        raise ValueError("Metropolis constant must be > 0")
    if delta_loss <= 0:
        return True
    return bool(rng.random() < math.exp(-delta_loss / c))


# curvature --------------------------------------------------------------


def hessian_fd(theta, objective, step: float = HESSIAN_STEP) -> tuple[np.ndarray, float]:
    """Central-difference Hessian from gradient differences, symmetrized.

    Returns ``(H, asymmetry)`` where asymmetry is ||H_raw - H_raw'|| / ||H_raw||
    before symmetrization.
    """
    theta = np.asarray(theta, dtype=float)
    D = theta.size
    H = np.empty((D, D))
    for j in range(D):
        e = np.zeros(D)
        e[j] = step
        vp, gp = safe_value_and_grad(objective, theta + e)
        vm, gm = safe_value_and_grad(objective, theta - e)
        if not (math.isfinite(vp) and math.isfinite(vm)):
            raise ArithmeticError(f"non-finite gradient while differencing coordinate {j}")
        H[:, j] = (gp - gm) / (2.0 * step)
    norm = np.linalg.norm(H)
    asym = float(np.linalg.norm(H - H.T) / norm) if norm > 0 else 0.0
    return 0.5 * (H + H.T), asym


def analyze_minimum(record: MinimumRecord, hessian) -> MinimumRecord:
    """Attach eigenvalues, spectral norm and log occupation score.

    log_occupation = -loss - 1/2 sum(log lambda) over eigenvalues above
    ``EIGEN_FLOOR * spectral_norm``; ``None`` if none qualify.
    """
    w = np.linalg.eigvalsh(np.asarray(hessian, dtype=float))
    spec = float(np.max(np.abs(w))) if w.size else 0.0
    pos = w[w > EIGEN_FLOOR * spec] if spec > 0 else w[:0]
    occ = None if pos.size == 0 else float(-record.loss - 0.5 * np.sum(np.log(pos)))
    return replace(record, hessian_eigenvalues=w, spectral_norm=spec, log_occupation=occ)


def is_minimum(record: MinimumRecord) -> bool:
    w = record.hessian_eigenvalues
    return w is None or bool(np.min(w) >= -NEGATIVE_CURVATURE_TOL * record.spectral_norm)


# deduplication ----------------------------------------------------------


def _same(a, b, loss_tol, theta_tol, coords=None, probe=None) -> bool:
    if not abs(a.loss - b.loss) < loss_tol:
        return False
    ta, tb = np.asarray(a.theta), np.asarray(b.theta)
    if coords is not None:
        ta, tb = coords(ta), coords(tb)
    if float(np.linalg.norm(ta - tb)) < theta_tol:
        return True
    return probe is not None and probe(a, b)


def plateau_probe(objective, loss_tol: float, n_probe: int = 5):
    """Callable telling whether two equal-loss minima share one flat valley.

    True when the loss at ``n_probe`` evenly spaced points of the segment
    between them never exceeds the higher endpoint by ``loss_tol`` or more.
    """

    def probe(a, b):
        ta, tb = np.asarray(a.theta, dtype=float), np.asarray(b.theta, dtype=float)
        top = max(a.loss, b.loss) + loss_tol
        for s in np.linspace(0.0, 1.0, n_probe + 2)[1:-1]:
            v, _ = safe_value_and_grad(objective, (1.0 - s) * ta + s * tb)
            if not v < top:
                return False
        return True

    return probe


def any_probe(*probes):
    """Probe that is true when any of the given (non-None) probes is."""
    live = [p for p in probes if p is not None]
    if not live:
        return None
    return lambda a, b: any(p(a, b) for p in live)


def covariance_probe(train, space, rtol: float = 1e-4):
    """Callable telling whether two minima imply the same training covariance.

    The -lml sees the hyperparameters only through S = K + noise * I on the
    training inputs, so settings with equal S are one model as far as the
    data can tell.  True when max |S_a - S_b| < ``rtol`` * max diag.  This
    merges degenerate minima on curved flat manifolds, e.g. the family of
    pure-noise fits, that a straight-segment probe misses.
    """
    from .kernel import kernel_matrix

    cache: dict = {}

    def cov(theta):
        key = np.asarray(theta, dtype=float).tobytes()
        if key not in cache:
            try:
                cache[key] = kernel_matrix(train.X, space.from_vector(theta)).values
            except _NUMERIC_ERRORS:
                cache[key] = None
        return cache[key]

    def probe(a, b):
        sa, sb = cov(a.theta), cov(b.theta)
        if sa is None or sb is None:
            return False
        scale = max(float(np.max(np.diag(sa))), float(np.max(np.diag(sb))))
        return float(np.max(np.abs(sa - sb))) < rtol * scale

    return probe


def canonical_sort(records):
    return sorted(records, key=lambda r: (r.loss, tuple(np.round(np.asarray(r.theta), 12))))


def dedup_minima(records, loss_tol: float, theta_tol: float, coords=None, probe=None) -> list:
    """Merge records that agree in loss and in theta; keep the lower loss.

    ``coords`` optionally maps theta to the coordinates used for the distance
    test (``SearchSpace.canonical`` for GP landscapes).  ``probe(a, b)``, if
    given, is consulted for equal-loss pairs that are far apart and may
    declare them the same (see ``plateau_probe``).
    """
    kept: list = []
    for r in canonical_sort(records):
        if not any(_same(r, k, loss_tol, theta_tol, coords, probe) for k in kept):
            kept.append(r)
    return kept


def assign_ids(records):
    out = []
    for i, r in enumerate(canonical_sort(records)):
        out.append(replace(r, id=i))
    return out


# basin hopping ----------------------------------------------------------


def _interquartile_c(losses) -> float:
    if len(losses) >= 2:
        q75, q25 = np.percentile(losses, [75, 25])
        c = 0.5 * float(q75 - q25)
        if c > 0:
            return c
    return 1.0


def run_basin_hopping(objective, sample_start, config: BasinHoppingConfig,
                      warm_starts=(), analyze: bool = True, coords=None,
                      flat_probe: bool = True, same_model=None) -> Exploration:
    """Basin-hopping with Metropolis acceptance and a no-new-minimum stall stop.

    ``sample_start(rng)`` draws a fresh starting vector.  Initial local
    searches start from every warm start and from ``config.n_initial``
    fresh samples; hops perturb the current minimum uniformly in
    ``[-step_scale, step_scale]`` per coordinate.  ``coords`` is passed to
    the duplicate test; with ``flat_probe`` equal-loss minima joined by a
    flat segment also count as duplicates, as do equal-loss pairs for which
    ``same_model(a, b)`` is true.
    """
    rng = np.random.default_rng(config.seed)
    probe = any_probe(plateau_probe(objective, config.dedup_loss_tol) if flat_probe else None,
                      same_model)
    found: list[MinimumRecord] = []
    stats = {"local_searches": 0, "non_converged": 0, "accepted": 0, "steps": 0,
             "rejected_not_minimum": 0, "metropolis_c": None}

    def local(start):
        stats["local_searches"] += 1
        res = local_minimize(start, objective, config.local_tol, config.max_local_iter)
        if not res.converged:
            stats["non_converged"] += 1
            return None
        rec = MinimumRecord(theta=res.theta, loss=res.loss, grad_norm=res.grad_norm)
        for i, k in enumerate(found):
            if _same(rec, k, config.dedup_loss_tol, config.dedup_theta_tol, coords, probe):
                if rec.loss < k.loss:
                    found[i] = rec
                return rec, False
        found.append(rec)
        return rec, True

    initial = []
    for w in warm_starts:
        out = local(np.asarray(w, dtype=float))
        if out:
            initial.append(out[0])
    fresh = []
    attempts = 0
    while len(fresh) < config.n_initial and attempts < 10 * config.n_initial:
        attempts += 1
        out = local(sample_start(rng))
        if out:
            fresh.append(out[0])
    initial.extend(fresh)
    if not initial:
        raise ExplorationError("no converged local minimum from initial starts")

    c = config.metropolis_c or _interquartile_c([r.loss for r in fresh or initial][:10])
    stats["metropolis_c"] = c
    current = min(initial, key=lambda r: r.loss)
    stall = 0
    while stats["steps"] < config.max_steps and stall < config.stall_n:
        stats["steps"] += 1
        trial = current.theta + rng.uniform(-config.step_scale, config.step_scale,
                                            size=current.theta.size)
        out = local(trial)
        if out is None:
            stall += 1
            continue
        rec, new = out
        stall = 0 if new else stall + 1
        if metropolis_accept(rec.loss - current.loss, c, rng):
            stats["accepted"] += 1
            current = rec

    minima = dedup_minima(found, config.dedup_loss_tol, config.dedup_theta_tol, coords,
                          probe)
    if analyze:
        analyzed = []
        for r in minima:
            try:
                H, _ = hessian_fd(r.theta, objective)
            except ArithmeticError:
                stats["rejected_not_minimum"] += 1
                continue
            a = analyze_minimum(r, H)
            if is_minimum(a):
                analyzed.append(a)
            else:
                stats["rejected_not_minimum"] += 1
        minima = analyzed
    if not minima:
        raise ExplorationError("exploration produced no valid minimum")
    stats["n_minima"] = len(minima)
    return Exploration(assign_ids(minima), stats)


def basin_hop(objective, sample_start, config: BasinHoppingConfig, warm_starts=(),
              coords=None):
    """Deduplicated, loss-sorted minima of ``objective``."""
    return run_basin_hopping(objective, sample_start, config, warm_starts,
                             coords=coords).minima


def merge_minima(lists, loss_tol: float, theta_tol: float, coords=None):
    """Order-independent merge of minima from independent chains."""
    pooled = [r for lst in lists for r in lst]
    return assign_ids(dedup_minima(pooled, loss_tol, theta_tol, coords))


# GP landscapes ----------------------------------------------------------


def attach_gp_metrics(records, train, space, test=None):
    """Fill hyperparameters and train/test MSE (raw target units) on records."""
    from .gp import dataset_mse, fit_gp

    out = []
    for r in records:
        hp = space.from_vector(r.theta)
        model = fit_gp(train, hp)
        out.append(replace(
            r, hyperparameters=hp,
            train_mse=dataset_mse(model, train),
            test_mse=None if test is None else dataset_mse(model, test),
        ))
    return out


def explore_gp(train, space, config: BasinHoppingConfig, test=None,
               warm_starts=()) -> Exploration:
    """Basin-hop the -lml of a GP on ``train`` over ``space``."""
    from .gp import GPObjective

    objective = GPObjective(train, space)
    result = run_basin_hopping(objective, space.sample_start, config, warm_starts,
                               coords=space.canonical,
                               same_model=covariance_probe(train, space))
    result.minima = attach_gp_metrics(result.minima, train, space, test)
    result.stats["objective_evals"] = objective.n_evals
    return result
