"""Transition states between minima and disconnectivity trees.

Saddle search runs in two stages.  ``band_search`` relaxes a doubly nudged
elastic band between two minima and returns its highest interior image.
``refine_saddle`` then converges that guess to an index-1 saddle: the lowest
curvature mode is tracked by Rayleigh-Ritz rotations built from
finite-difference Hessian-vector products, the step goes uphill along it,
a short L-BFGS minimization runs in the orthogonal hyperplane, and a Newton
polish finishes once the point sits in the quadratic region.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from itertools import combinations

import numpy as np
from scipy.optimize import minimize

from .landscape import (
    NEGATIVE_CURVATURE_TOL,
    MinimumRecord,
    hessian_fd,
    local_minimize,
    plateau_probe,
    safe_value_and_grad,
)

log = logging.getLogger(__name__)

HVP_STEP = 1e-4
INDEX_FLOOR = NEGATIVE_CURVATURE_TOL


class SaddleSearchError(RuntimeError):
    """Band relaxation or saddle refinement failed for one pair."""


# records ----------------------------------------------------------------


@dataclass
class TransitionRecord:
    theta: np.ndarray
    loss: float
    min_a_id: int
    min_b_id: int
    neg_eigenvalue: float
    grad_norm: float
    id: int = -1

    def __post_init__(self):
        a, b = int(self.min_a_id), int(self.min_b_id)
        if a == b:
            raise ValueError("a transition must join two distinct minima")
        self.min_a_id, self.min_b_id = min(a, b), max(a, b)
        self.theta = np.asarray(self.theta, dtype=float)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "theta": [float(v) for v in self.theta],
            "loss": float(self.loss),
            "min_a_id": self.min_a_id,
            "min_b_id": self.min_b_id,
            "neg_eigenvalue": float(self.neg_eigenvalue),
            "grad_norm": float(self.grad_norm),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransitionRecord":
        return cls(np.array(d["theta"], dtype=float), d["loss"], d["min_a_id"], d["min_b_id"],
                   d["neg_eigenvalue"], d["grad_norm"], d.get("id", -1))


@dataclass
class SaddlePoint:
    """Refined index-1 saddle before it is tied to a pair of minima."""

    theta: np.ndarray
    loss: float
    grad_norm: float
    neg_eigenvalue: float
    mode: np.ndarray
    n_iter: int = 0


@dataclass
class PairAttempt:
    min_a_id: int
    min_b_id: int
    status: str
    detail: str = ""
    transition_id: int | None = None

    def to_dict(self) -> dict:
        return {"min_a_id": self.min_a_id, "min_b_id": self.min_b_id, "status": self.status,
                "detail": self.detail, "transition_id": self.transition_id}


@dataclass
class LandscapeGraph:
    minima: list
    transitions: list = field(default_factory=list)
    attempts: list = field(default_factory=list)

    def __post_init__(self):
        ids = {m.id for m in self.minima}
        if len(ids) != len(self.minima):
            raise ValueError("minimum ids must be unique")
        for t in self.transitions:
            if t.min_a_id not in ids or t.min_b_id not in ids:
                raise ValueError(f"transition {t.id} references an unknown minimum")

    def minimum(self, mid: int) -> MinimumRecord:
        for m in self.minima:
            if m.id == mid:
                return m
        raise KeyError(mid)

    @property
    def adjacency(self) -> dict:
        adj = {m.id: set() for m in self.minima}
        for t in self.transitions:
            adj[t.min_a_id].add(t.min_b_id)
            adj[t.min_b_id].add(t.min_a_id)
        return {k: sorted(v) for k, v in sorted(adj.items())}

    def barrier(self, a: int, b: int) -> TransitionRecord | None:
        """Lowest transition directly joining ``a`` and ``b`` (order irrelevant)."""
        lo, hi = min(a, b), max(a, b)
        best = None
        for t in self.transitions:
            if (t.min_a_id, t.min_b_id) == (lo, hi) and (best is None or t.loss < best.loss):
                best = t
        return best

    def barrier_height(self, mid: int) -> float | None:
        """Lowest transition loss out of ``mid`` minus its own loss."""
        ts = [t.loss for t in self.transitions if mid in (t.min_a_id, t.min_b_id)]
        if not ts:
            return None
        return min(ts) - self.minimum(mid).loss

    def to_dict(self) -> dict:
        return {
            "minima": [m.to_dict() for m in self.minima],
            "transitions": [t.to_dict() for t in self.transitions],
            "attempts": [a.to_dict() for a in self.attempts],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LandscapeGraph":
        return cls(
            minima=[MinimumRecord.from_dict(m) for m in d["minima"]],
            transitions=[TransitionRecord.from_dict(t) for t in d.get("transitions", [])],
            attempts=[PairAttempt(**a) for a in d.get("attempts", [])],
        )


# band -------------------------------------------------------------------


@dataclass
class BandResult:
    images: np.ndarray
    losses: np.ndarray
    candidate: np.ndarray
    tangent: np.ndarray
    n_iter: int
    converged: bool


def _improved_tangent(R, E, i):
    """Upwind tangent with energy-weighted blending at extrema along the band."""
    tp = R[i + 1] - R[i]
    tm = R[i] - R[i - 1]
    ep, e0, em = E[i + 1], E[i], E[i - 1]
    if ep > e0 > em:
        t = tp
    elif ep < e0 < em:
        t = tm
    else:
        dmax = max(abs(ep - e0), abs(em - e0))
        dmin = min(abs(ep - e0), abs(em - e0))
        t = tp * dmax + tm * dmin if ep > em else tp * dmin + tm * dmax
    n = np.linalg.norm(t)
    if n == 0:
        t = R[i + 1] - R[i - 1]
        n = np.linalg.norm(t)
    return t / n


def _band_forces(R, objective, k_spring):
    m = R.shape[0]
    E = np.empty(m)
    G = np.zeros_like(R)
    for i in range(m):
        E[i], G[i] = safe_value_and_grad(objective, R[i])
    if not np.all(np.isfinite(E[1:-1])) or not np.all(np.isfinite(G[1:-1])):
        raise SaddleSearchError("non-finite loss or gradient on the band")
    F = np.zeros_like(R)
    perp_max = 0.0
    for i in range(1, m - 1):
        tau = _improved_tangent(R, E, i)
        g = G[i]
        f_perp = -(g - (g @ tau) * tau)
        fs = k_spring * (R[i + 1] - 2.0 * R[i] + R[i - 1])
        f_par = k_spring * (np.linalg.norm(R[i + 1] - R[i])
                            - np.linalg.norm(R[i] - R[i - 1])) * tau
        fs_perp = fs - (fs @ tau) * tau
        nf = np.linalg.norm(f_perp)
        if nf > 0:
            u = f_perp / nf
            f_dneb = fs_perp - (fs_perp @ u) * u
        else:
            f_dneb = np.zeros_like(fs_perp)
        F[i] = f_perp + f_par + f_dneb
        perp_max = max(perp_max, nf)
    return E, F, perp_max


def band_search(theta_a, theta_b, objective, n_images: int = 11, k_spring: float = 1.0,
                max_iter: int = 300, force_tol: float = 1e-3, dt: float = 0.05,
                dt_max: float = 0.5) -> BandResult:
    """Relax a DNEB chain between two minima with FIRE; return the highest image.

    ``n_images`` counts interior images; endpoints stay fixed.  The band
    only has to land near the saddle for ``refine_saddle``, so relaxation
    stops after ``max_iter`` FIRE steps even if unconverged.
    """
    a = np.asarray(theta_a, dtype=float)
    b = np.asarray(theta_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("endpoints differ in dimension")
    if np.linalg.norm(a - b) < 1e-12:
        raise ValueError("degenerate band: identical endpoints")
    if n_images < 1:
        raise ValueError("need at least one interior image")
    s = np.linspace(0.0, 1.0, n_images + 2)[:, None]
    R = (1.0 - s) * a + s * b
    V = np.zeros_like(R)
    # FIRE constants
    alpha0, f_alpha, f_inc, f_dec, n_min = 0.1, 0.99, 1.1, 0.5, 5
    alpha, since_neg = alpha0, 0
    converged = False
    it = 0
    E, F, perp = _band_forces(R, objective, k_spring)
    for it in range(1, max_iter + 1):
        if perp < force_tol:
            converged = True
            break
        P = float(np.sum(F * V))
        if P > 0:
            fn = np.linalg.norm(F)
            vn = np.linalg.norm(V)
            if fn > 0:
                V = (1.0 - alpha) * V + alpha * vn * F / fn
            since_neg += 1
            if since_neg > n_min:
                dt = min(dt * f_inc, dt_max)
                alpha *= f_alpha
        else:
            V[:] = 0.0
            dt *= f_dec
            alpha = alpha0
            since_neg = 0
        V += dt * F
        step = dt * V
        # cap per-image displacement
        norms = np.linalg.norm(step, axis=1, keepdims=True)
        step = np.where(norms > 0.2, step * (0.2 / np.maximum(norms, 1e-300)), step)
        R[1:-1] += step[1:-1]
        E, F, perp = _band_forces(R, objective, k_spring)
    i = 1 + int(np.argmax(E[1:-1]))
    return BandResult(images=R, losses=E, candidate=R[i].copy(),
                      tangent=_improved_tangent(R, E, i), n_iter=it, converged=converged)


# saddle refinement -------------------------------------------------------


def _hvp(objective, theta, v, g0=None, step=HVP_STEP):
    _, gp = safe_value_and_grad(objective, theta + step * v)
    _, gm = safe_value_and_grad(objective, theta - step * v)
    out = (gp - gm) / (2.0 * step)
    if not np.all(np.isfinite(out)):
        raise SaddleSearchError("non-finite Hessian-vector product")
    return out


def lowest_mode(objective, theta, v0=None, tol: float = 1e-3, max_iter: int = 50,
                step: float = HVP_STEP):
    """Lowest-curvature direction by successive 2d Rayleigh-Ritz rotations.

    Returns ``(curvature, unit vector)``.
    """
    D = np.size(theta)
    if v0 is None or np.linalg.norm(v0) == 0:
        v = np.ones(D) / math.sqrt(D)
    else:
        v = np.asarray(v0, dtype=float) / np.linalg.norm(v0)
    Hv = _hvp(objective, theta, v, step=step)
    lam = float(v @ Hv)
    for _ in range(max_iter):
        r = Hv - lam * v
        rn = np.linalg.norm(r)
        if rn <= tol * max(1.0, abs(lam)):
            break
        w = r / rn
        w -= (w @ v) * v
        w /= np.linalg.norm(w)
        Hw = _hvp(objective, theta, w, step=step)
        off = 0.5 * (v @ Hw + w @ Hv)
        small = np.array([[lam, off], [off, float(w @ Hw)]])
        evals, evecs = np.linalg.eigh(small)
        c = evecs[:, 0]
        v_new = c[0] * v + c[1] * w
        Hv = c[0] * Hv + c[1] * Hw
        n = np.linalg.norm(v_new)
        v, Hv = v_new / n, Hv / n
        lam = float(v @ Hv)
    return lam, v


def saddle_index(objective, theta, floor: float = INDEX_FLOOR):
    """Number of Hessian eigenvalues below ``-floor * spectral_norm`` and the spectrum."""
    H, _ = hessian_fd(theta, objective)
    w = np.linalg.eigvalsh(H)
    spec = float(np.max(np.abs(w))) if w.size else 0.0
    return int(np.sum(w < -floor * spec)), w


def _minimize_in_hyperplane(objective, x, v, max_step, max_iter):
    """Bounded L-BFGS on f(x + P y), P the projector orthogonal to ``v``."""

    def fun(y):
        z = x + y - (y @ v) * v
        val, g = safe_value_and_grad(objective, z)
        if not math.isfinite(val):
            return 1e300, np.zeros_like(y)
        return val, g - (g @ v) * v

    res = minimize(fun, np.zeros_like(x), jac=True, method="L-BFGS-B",
                   bounds=[(-max_step, max_step)] * x.size,
                   options={"maxiter": max_iter, "gtol": 1e-12, "ftol": 1e-15})
    y = res.x
    return x + y - (y @ v) * v


def refine_saddle(candidate, objective, mode=None, tol: float = 1e-6, max_iter: int = 200,
                  max_step: float = 0.2, perp_iter: int = 10,
                  newton_switch: float = 1e-2) -> SaddlePoint:
    """Converge ``candidate`` to an index-1 saddle (gradient 2-norm <= ``tol``).

    Each cycle finds the lowest-curvature mode, steps uphill along it and
    then minimizes for ``perp_iter`` L-BFGS iterations in the orthogonal
    hyperplane.  Below a gradient norm of ``newton_switch``, with negative
    curvature present, full Newton steps take over.  Raises
    ``SaddleSearchError`` if it does not converge or the result is not
    index 1.
    """
    x = np.asarray(candidate, dtype=float).copy()
    v_mode = mode
    it = 0
    converged = False
    for it in range(max_iter):
        val, g = safe_value_and_grad(objective, x)
        if not math.isfinite(val):
            raise SaddleSearchError("non-finite loss during refinement")
        gn = float(np.linalg.norm(g))
        if gn <= tol:
            converged = True
            break
        lam, v = lowest_mode(objective, x, v_mode)
        v_mode = v
        if lam < 0 and gn < newton_switch:
            x_new = _newton_step(objective, x, g, max_step)
            if x_new is not None:
                x = x_new
                continue
        gv = float(g @ v)
        if lam < 0:
            par = -gv / lam
        else:
            par = max_step * (1.0 if gv >= 0 else -1.0)
        x = x + float(np.clip(par, -max_step, max_step)) * v
        x = _minimize_in_hyperplane(objective, x, v, max_step, perp_iter)
    if not converged:
        val, g = safe_value_and_grad(objective, x)
        gn = float(np.linalg.norm(g))
        if not gn <= tol:
            raise SaddleSearchError(f"refinement stalled at gradient norm {gn:.3g}")
    idx, w = saddle_index(objective, x)
    if idx != 1:
        raise SaddleSearchError(f"converged to an index-{idx} stationary point")
    lam, v = lowest_mode(objective, x, v_mode, tol=1e-8)
    val, g = safe_value_and_grad(objective, x)
    return SaddlePoint(theta=x, loss=float(val), grad_norm=float(np.linalg.norm(g)),
                       neg_eigenvalue=float(w[0]), mode=v, n_iter=it)


def _newton_step(objective, x, g, max_step):
    """Full Newton step on an index-1 region; ``None`` if the Hessian is not index 1."""
    try:
        H, _ = hessian_fd(x, objective)
    except ArithmeticError:
        return None
    w, V = np.linalg.eigh(H)
    spec = float(np.max(np.abs(w)))
    if spec == 0 or np.sum(w < -INDEX_FLOOR * spec) != 1 or np.min(np.abs(w)) < 1e-10 * spec:
        return None
    step = -V @ ((V.T @ g) / w)
    sn = np.linalg.norm(step)
    if sn > max_step:
        step *= max_step / sn
    return x + step


# connecting minima -------------------------------------------------------


def _match_minimum(theta, loss, minima, coords, loss_tol, theta_tol, probe=None):
    """Known minimum equal to (theta, loss): nearby, or joined by a flat segment."""
    best, best_d = None, math.inf
    flat = []
    for m in minima:
        if abs(m.loss - loss) >= loss_tol:
            continue
        ta, tb = np.asarray(theta), np.asarray(m.theta)
        if coords is not None:
            ta, tb = coords(ta), coords(tb)
        d = float(np.linalg.norm(ta - tb))
        if d < theta_tol and d < best_d:
            best, best_d = m, d
        elif d >= theta_tol:
            flat.append(m)
    if best is None and probe is not None:
        here = MinimumRecord(theta=np.asarray(theta), loss=loss, grad_norm=0.0)
        best = next((m for m in flat if probe(here, m)), None)
    return best


def descend_from_saddle(saddle: SaddlePoint, objective, displacement: float = 1e-2,
                        tol: float = 1e-3, max_iter: int = 1000):
    """Local minima reached by stepping off the saddle along +- its negative mode."""
    out = []
    for sign in (1.0, -1.0):
        res = local_minimize(saddle.theta + sign * displacement * saddle.mode, objective,
                             tol, max_iter)
        out.append(res)
    return out


def _canonical_distance(a, b, coords):
    ta, tb = np.asarray(a.theta), np.asarray(b.theta)
    if coords is not None:
        ta, tb = coords(ta), coords(tb)
    return float(np.linalg.norm(ta - tb))


def connect_all(minima, objective, pair_budget: int | None = None, n_images: int = 11,
                k_spring: float = 1.0, coords=None, saddle_tol: float = 1e-6,
                local_tol: float = 1e-3, match_loss_tol: float = 1e-3,
                match_theta_tol: float = 0.5) -> LandscapeGraph:
    """Search transition states for the closest pairs of minima.

    Pairs are taken in ascending (canonical) theta distance, ties by id, up
    to ``pair_budget`` (default three times the number of minima).  Each
    refined saddle is tied to the minima found by descending from it, which
    may differ from the pair that produced it.  A descent matches a known
    minimum when the losses agree within ``match_loss_tol`` and the points
    are within ``match_theta_tol`` or joined by a flat segment.
    """
    minima = sorted(minima, key=lambda m: m.id)
    graph = LandscapeGraph(minima=list(minima))
    if len(minima) < 2:
        return graph
    budget = 3 * len(minima) if pair_budget is None else pair_budget
    pairs = sorted(combinations(minima, 2),
                   key=lambda p: (_canonical_distance(p[0], p[1], coords), p[0].id, p[1].id))
    probe = plateau_probe(objective, match_loss_tol)
    found: list[TransitionRecord] = []
    linked = []
    for a, b in pairs[:budget]:
        if any((t.min_a_id, t.min_b_id) == (a.id, b.id) for t in found):
            graph.attempts.append(PairAttempt(a.id, b.id, "skipped", "already connected"))
            continue
        try:
            band = band_search(a.theta, b.theta, objective, n_images, k_spring)
            sp = refine_saddle(band.candidate, objective, band.tangent, tol=saddle_tol)
        except (SaddleSearchError, ValueError, ArithmeticError) as exc:
            log.info("pair (%d, %d): %s", a.id, b.id, exc)
            graph.attempts.append(PairAttempt(a.id, b.id, "failed", str(exc)))
            continue
        ends = descend_from_saddle(sp, objective, tol=local_tol)
        hits = [_match_minimum(r.theta, r.loss, minima, coords, match_loss_tol,
                               match_theta_tol, probe)
                if r.converged else None for r in ends]
        if hits[0] is None or hits[1] is None:
            graph.attempts.append(PairAttempt(a.id, b.id, "unmatched",
                                              "saddle descends to a minimum not in the set"))
            continue
        if hits[0].id == hits[1].id:
            graph.attempts.append(PairAttempt(a.id, b.id, "same_minimum",
                                              f"both sides descend to {hits[0].id}"))
            continue
        rec = TransitionRecord(sp.theta, sp.loss, hits[0].id, hits[1].id,
                               sp.neg_eigenvalue, sp.grad_norm)
        dup = next((t for t in found if (t.min_a_id, t.min_b_id) == (rec.min_a_id, rec.min_b_id)
                    and abs(t.loss - rec.loss) < match_loss_tol), None)
        if dup is None:
            found.append(rec)
            dup = rec
        att = PairAttempt(a.id, b.id, "connected", f"joins {rec.min_a_id}-{rec.min_b_id}")
        graph.attempts.append(att)
        linked.append((att, dup))
    order = sorted(range(len(found)),
                   key=lambda i: (found[i].loss, found[i].min_a_id, found[i].min_b_id))
    new_id = {id(found[i]): k for k, i in enumerate(order)}
    for att, rec in linked:
        att.transition_id = new_id[id(rec)]
    graph.transitions = [replace(found[i], id=k) for k, i in enumerate(order)]
    return graph


# disconnectivity tree ----------------------------------------------------


@dataclass(frozen=True)
class TreeNode:
    id: int
    height: float
    children: tuple
    leaves: tuple

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class DisconnectivityTree:
    nodes: dict
    roots: tuple
    levels: tuple

    @property
    def leaves(self) -> list:
        return sorted(n.leaves[0] for n in self.nodes.values() if n.is_leaf)

    def merge_height(self, a: int, b: int) -> float:
        """Height of the lowest node holding both minima; ``inf`` if never joined."""
        best = math.inf
        for n in self.nodes.values():
            if not n.is_leaf and a in n.leaves and b in n.leaves:
                best = min(best, n.height)
        return best

    def to_dict(self) -> dict:
        return {
            "levels": [float(v) for v in self.levels],
            "roots": list(self.roots),
            "nodes": [
                {"id": n.id, "height": float(n.height), "children": list(n.children),
                 "leaves": list(n.leaves), "is_leaf": n.is_leaf}
                for n in sorted(self.nodes.values(), key=lambda n: n.id)
            ],
        }


def _levels(graph, n_levels):
    lo = min(m.loss for m in graph.minima)
    hi = max([m.loss for m in graph.minima] + [t.loss for t in graph.transitions])
    if n_levels < 2:
        raise ValueError("need n_levels >= 2")
    delta = (hi - lo) / (n_levels - 1) if hi > lo else 1.0
    return tuple(lo + delta * k for k in range(1, n_levels + 1))


def disconnectivity_tree(graph: LandscapeGraph, n_levels: int = 20) -> DisconnectivityTree:
    """Union-find merge tree over ascending loss thresholds.

    Leaves are minima (node id = minimum id, height = its loss).  At each
    threshold the minima joined by transitions strictly below it merge; a
    new internal node is created for every group that changed, at that
    threshold.  Minima that never join stay as separate roots.
    """
    if not graph.minima:
        raise ValueError("graph has no minima")
    levels = _levels(graph, n_levels)
    ids = sorted(m.id for m in graph.minima)
    nodes = {m.id: TreeNode(m.id, float(m.loss), (), (m.id,)) for m in graph.minima}
    next_id = max(ids) + 1
    parent = {i: i for i in ids}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    top = {i: i for i in ids}  # union-find root -> current tree node
    edges = sorted(graph.transitions, key=lambda t: (t.loss, t.min_a_id, t.min_b_id))
    k = 0
    for level in levels:
        groups: dict[int, set] = {}
        while k < len(edges) and edges[k].loss < level:
            t = edges[k]
            k += 1
            ra, rb = find(t.min_a_id), find(t.min_b_id)
            if ra == rb:
                continue
            pa = groups.pop(ra, {top[ra]})
            pb = groups.pop(rb, {top[rb]})
            r = min(ra, rb)
            parent[max(ra, rb)] = r
            groups[r] = pa | pb
        for r in sorted(groups):
            children = tuple(sorted(groups[r], key=lambda c: min(nodes[c].leaves)))
            leaves = tuple(sorted(x for c in children for x in nodes[c].leaves))
            nodes[next_id] = TreeNode(next_id, float(level), children, leaves)
            top[r] = next_id
            next_id += 1
    roots = tuple(sorted({top[find(i)] for i in ids}, key=lambda n: min(nodes[n].leaves)))
    return DisconnectivityTree(nodes=nodes, roots=roots, levels=levels)


# exports ----------------------------------------------------------------


def _ordered_children(tree, node):
    return sorted(node.children, key=lambda c: (-len(tree.nodes[c].leaves),
                                                min(tree.nodes[c].leaves)))


def leaf_order(tree: DisconnectivityTree) -> list:
    """Left-to-right leaf order: larger subtrees first, ties by smallest id."""
    out = []

    def walk(nid):
        n = tree.nodes[nid]
        if n.is_leaf:
            out.append(n.leaves[0])
            return
        for c in _ordered_children(tree, n):
            walk(c)

    roots = sorted(tree.roots, key=lambda r: (-len(tree.nodes[r].leaves),
                                              min(tree.nodes[r].leaves)))
    for r in roots:
        walk(r)
    return out


def _to_dot(tree) -> str:
    lines = ["graph disconnectivity {"]
    for n in sorted(tree.nodes.values(), key=lambda n: (not n.is_leaf, n.id)):
        name = f"m{n.leaves[0]}" if n.is_leaf else f"n{n.id}"
        label = f"min {n.leaves[0]}" if n.is_leaf else f"{n.height:.6g}"
        lines.append(f'  {name} [label="{label}", height_value="{n.height:.12g}"];')
    for n in sorted(tree.nodes.values(), key=lambda n: n.id):
        if n.is_leaf:
            continue
        for c in n.children:
            cn = tree.nodes[c]
            cname = f"m{cn.leaves[0]}" if cn.is_leaf else f"n{cn.id}"
            lines.append(f"  n{n.id} -- {cname};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _to_svg(tree, width: int = 640, height: int = 400, margin: int = 40) -> str:
    order = leaf_order(tree)
    xs = {}
    n_leaves = len(order)
    for i, leaf in enumerate(order):
        xs[leaf] = margin + (width - 2 * margin) * ((i + 0.5) / n_leaves)
    heights = [n.height for n in tree.nodes.values()]
    lo, hi = min(heights), max(heights)
    span = hi - lo if hi > lo else 1.0

    def y(h):
        return margin + (height - 2 * margin) * (1.0 - (h - lo) / span)

    def x_of(nid):
        n = tree.nodes[nid]
        if n.is_leaf:
            return xs[n.leaves[0]]
        return sum(x_of(c) for c in n.children) / len(n.children)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<line x1="{margin / 2:.2f}" y1="{y(hi):.2f}" x2="{margin / 2:.2f}" y2="{y(lo):.2f}" '
        'stroke="black"/>',
        f'<text x="2" y="{y(hi) - 4:.2f}" font-size="10">{hi:.4g}</text>',
        f'<text x="2" y="{y(lo) + 12:.2f}" font-size="10">{lo:.4g}</text>',
    ]
    for n in sorted(tree.nodes.values(), key=lambda n: n.id):
        if n.is_leaf:
            continue
        px, py = x_of(n.id), y(n.height)
        for c in _ordered_children(tree, n):
            cn = tree.nodes[c]
            parts.append(f'<line x1="{px:.2f}" y1="{py:.2f}" x2="{x_of(c):.2f}" '
                         f'y2="{y(cn.height):.2f}" stroke="black"/>')
    for leaf in order:
        parts.append(f'<text x="{xs[leaf]:.2f}" y="{height - margin / 4:.2f}" font-size="10" '
                     f'text-anchor="middle">{leaf}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def export_graph(tree: DisconnectivityTree, fmt: str) -> bytes:
    """Serialize a disconnectivity tree as ``json``, ``dot`` or ``svg`` bytes."""
    if fmt == "json":
        text = json.dumps(tree.to_dict(), sort_keys=True, indent=1) + "\n"
    elif fmt == "dot":
        text = _to_dot(tree)
    elif fmt == "svg":
        text = _to_svg(tree)
    else:
        raise ValueError(f"unknown export format {fmt!r}; use json, dot or svg")
    return text.encode("utf-8")


def minima_ts_dump(graph: LandscapeGraph) -> tuple[str, str]:
    """Plain-text ``(min.data, ts.data)`` in the column style of disconnectivity tools.

    min.data: loss, sum of log positive eigenvalues, 1, 0, 0, 0.
    ts.data: loss, 0, 1, minimum a, minimum b (1-based positions), 0, 0, 0.
    """
    minima = sorted(graph.minima, key=lambda m: m.id)
    pos = {m.id: i + 1 for i, m in enumerate(minima)}
    mlines = []
    for m in minima:
        w = m.hessian_eigenvalues
        logprod = 0.0
        if w is not None and m.spectral_norm:
            w = np.asarray(w)
            logprod = float(np.sum(np.log(w[w > 1e-8 * m.spectral_norm])))
        mlines.append(f"{m.loss:.10f} {logprod:.10f} 1 0 0 0")
    tlines = [f"{t.loss:.10f} 0.0000000000 1 {pos[t.min_a_id]} {pos[t.min_b_id]} 0 0 0"
              for t in graph.transitions]
    return "\n".join(mlines) + "\n", "\n".join(tlines) + ("\n" if tlines else "")
