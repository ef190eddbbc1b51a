import json

import numpy as np
import pydot
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gplandscape.landscape import FunctionObjective, MinimumRecord, local_minimize
from gplandscape.transitions import (
    LandscapeGraph,
    SaddleSearchError,
    TransitionRecord,
    band_search,
    connect_all,
    disconnectivity_tree,
    export_graph,
    leaf_order,
    lowest_mode,
    minima_ts_dump,
    refine_saddle,
    saddle_index,
)


def double_well():
    """(x^2 - 1)^2: minima at +-1, saddle at 0 with f = 1, f'' = -4."""
    return FunctionObjective(lambda x: float((x[0] ** 2 - 1) ** 2),
                             lambda x: np.array([4 * x[0] * (x[0] ** 2 - 1)]), 1)


def tilted_surface():
    """(x^2 - 1)^2 + x/4 + (y - x^2/2)^2."""

    def f(t):
        x, y = t
        return float((x * x - 1) ** 2 + 0.25 * x + (y - 0.5 * x * x) ** 2)

    def g(t):
        x, y = t
        return np.array([4 * x * (x * x - 1) + 0.25 - 2 * x * (y - 0.5 * x * x),
                         2 * (y - 0.5 * x * x)])

    return FunctionObjective(f, g, 2)


def tilted_stationary_points():
    """Exact stationary points: y = x^2/2 and 4x^3 - 4x + 1/4 = 0."""
    xs = np.sort(np.roots([4.0, 0.0, -4.0, 0.25]).real)
    return np.column_stack([xs, 0.5 * xs ** 2])


def tilted_grid_saddle():
    """Index-1 point located by a 1e-3 grid search on |grad|, for cross-checking."""
    obj = tilted_surface()
    xs = np.linspace(-0.5, 0.5, 1001)
    ys = np.linspace(-0.5, 0.5, 1001)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    gx = 4 * X * (X * X - 1) + 0.25 - 2 * X * (Y - 0.5 * X * X)
    gy = 2 * (Y - 0.5 * X * X)
    i, j = np.unravel_index(np.argmin(gx ** 2 + gy ** 2), X.shape)
    return np.array([xs[i], ys[j]]), obj


def minima_of(obj, starts):
    out = []
    for i, s in enumerate(starts):
        r = local_minimize(np.asarray(s, dtype=float), obj, tol=1e-10)
        out.append(MinimumRecord(theta=r.theta, loss=r.loss, grad_norm=r.grad_norm, id=i))
    return out


class TestRecords:
    def test_canonical_order(self):
        t = TransitionRecord([0.0], 1.0, 3, 1, -1.0, 0.0)
        assert (t.min_a_id, t.min_b_id) == (1, 3)

    def test_self_loop_rejected(self):
        with pytest.raises(ValueError):
            TransitionRecord([0.0], 1.0, 2, 2, -1.0, 0.0)

    def test_graph_validates_ids(self):
        ms = minima_of(double_well(), [[-2.0], [2.0]])
        with pytest.raises(ValueError):
            LandscapeGraph(ms, [TransitionRecord([0.0], 1.0, 0, 5, -1.0, 0.0)])

    def test_barrier_symmetric(self):
        ms = minima_of(double_well(), [[-2.0], [2.0]])
        g = LandscapeGraph(ms, [TransitionRecord([0.0], 1.0, 0, 1, -4.0, 0.0, id=0),
                                TransitionRecord([0.1], 1.5, 1, 0, -4.0, 0.0, id=1)])
        assert g.barrier(0, 1) is g.barrier(1, 0)
        assert g.barrier(0, 1).loss == 1.0
        assert g.barrier_height(0) == pytest.approx(1.0)
        assert g.adjacency == {0: [1], 1: [0]}

    def test_graph_round_trip(self):
        ms = minima_of(double_well(), [[-2.0], [2.0]])
        g = LandscapeGraph(ms, [TransitionRecord([0.0], 1.0, 0, 1, -4.0, 0.0, id=0)])
        assert LandscapeGraph.from_dict(g.to_dict()).to_dict() == g.to_dict()


class TestDoubleWell:
    def test_band_brackets_saddle(self):
        band = band_search([-1.0], [1.0], double_well(), n_images=9)
        assert abs(band.candidate[0]) < 0.15
        assert band.losses.max() == pytest.approx(1.0, abs=0.05)

    def test_identical_endpoints(self):
        with pytest.raises(ValueError):
            band_search([1.0], [1.0], double_well())

    def test_refine_exact(self):
        sp = refine_saddle(np.array([0.2]), double_well(), tol=1e-10)
        assert abs(sp.theta[0]) < 1e-6
        assert sp.loss == pytest.approx(1.0, abs=1e-12)
        assert sp.neg_eigenvalue == pytest.approx(-4.0, rel=1e-5)

    def test_refine_rejects_minimum(self):
        with pytest.raises(SaddleSearchError):
            refine_saddle(np.array([0.999]), double_well(), tol=1e-8, max_iter=5)

    def test_connect(self):
        obj = double_well()
        g = connect_all(minima_of(obj, [[-2.0], [2.0]]), obj, saddle_tol=1e-10)
        assert len(g.transitions) == 1
        t = g.transitions[0]
        assert (t.min_a_id, t.min_b_id) == (0, 1)
        assert abs(t.theta[0]) < 1e-6
        assert g.attempts[0].status == "connected" and g.attempts[0].transition_id == 0


class TestTiltedSurface:
    def test_oracle_is_stationary(self):
        obj = tilted_surface()
        for p in tilted_stationary_points():
            assert np.linalg.norm(obj.gradient(p)) < 1e-12

    def test_refined_saddle_matches_oracle(self):
        obj = tilted_surface()
        exact = tilted_stationary_points()[1]
        grid_pt, _ = tilted_grid_saddle()
        np.testing.assert_allclose(grid_pt, exact, atol=1e-3)
        ms = minima_of(obj, [[-1.5, 1.0], [1.5, 1.0]])
        band = band_search(ms[0].theta, ms[1].theta, obj)
        sp = refine_saddle(band.candidate, obj, band.tangent, tol=1e-9)
        np.testing.assert_allclose(sp.theta, exact, atol=1e-6)
        idx, w = saddle_index(obj, sp.theta)
        assert idx == 1
        assert np.sum(w < 0) == 1

    def test_minima_match_oracle(self):
        obj = tilted_surface()
        pts = tilted_stationary_points()
        ms = minima_of(obj, [[-1.5, 1.0], [1.5, 1.0]])
        np.testing.assert_allclose(ms[0].theta, pts[0], atol=1e-6)
        np.testing.assert_allclose(ms[1].theta, pts[2], atol=1e-6)

    def test_lowest_mode_matches_eigh(self):
        obj = tilted_surface()
        p = tilted_stationary_points()[1]
        lam, v = lowest_mode(obj, p, tol=1e-10)
        _, w = saddle_index(obj, p)
        assert lam == pytest.approx(w[0], rel=1e-6)
        assert np.linalg.norm(v) == pytest.approx(1.0)

    def test_connect_and_tree(self):
        obj = tilted_surface()
        ms = minima_of(obj, [[-1.5, 1.0], [1.5, 1.0]])
        ms = sorted(ms, key=lambda m: m.loss)
        for i, m in enumerate(ms):
            m.id = i
        g = connect_all(ms, obj, saddle_tol=1e-9)
        assert len(g.transitions) == 1
        tree = disconnectivity_tree(g, n_levels=10)
        assert tree.leaves == [0, 1]
        assert len(tree.roots) == 1
        assert tree.merge_height(0, 1) >= g.transitions[0].loss


def random_graph(draw_losses, edges):
    ms = [MinimumRecord(theta=np.array([float(i)]), loss=l, grad_norm=0.0, id=i)
          for i, l in enumerate(draw_losses)]
    ts = []
    for k, (a, b, h) in enumerate(edges):
        if a != b and a < len(ms) and b < len(ms):
            ts.append(TransitionRecord([0.5], max(ms[a].loss, ms[b].loss) + h, a, b, -1.0, 0.0,
                                       id=len(ts)))
    return LandscapeGraph(ms, ts)


graphs = st.builds(
    random_graph,
    st.lists(st.floats(0.0, 10.0), min_size=1, max_size=8),
    st.lists(st.tuples(st.integers(0, 7), st.integers(0, 7), st.floats(0.01, 5.0)),
             max_size=12),
)


class TestDisconnectivityTree:
    @settings(max_examples=100, deadline=None)
    @given(graphs)
    def test_leaves_and_ultrametric(self, g):
        tree = disconnectivity_tree(g, n_levels=15)
        ids = sorted(m.id for m in g.minima)
        assert tree.leaves == ids
        assert sorted(leaf_order(tree)) == ids
        for a in ids:
            for b in ids:
                for c in ids:
                    assert tree.merge_height(a, c) <= max(tree.merge_height(a, b),
                                                          tree.merge_height(b, c))

    @settings(max_examples=100, deadline=None)
    @given(graphs)
    def test_merge_height_matches_minimax_barrier(self, g):
        # brute-force bottleneck: lowest possible highest barrier on any path
        ids = sorted(m.id for m in g.minima)
        B = {(a, b): (0.0 if a == b else np.inf) for a in ids for b in ids}
        for t in g.transitions:
            for a, b in ((t.min_a_id, t.min_b_id), (t.min_b_id, t.min_a_id)):
                B[a, b] = min(B[a, b], t.loss)
        for k in ids:
            for a in ids:
                for b in ids:
                    B[a, b] = min(B[a, b], max(B[a, k], B[k, b]))
        tree = disconnectivity_tree(g, n_levels=15)
        for a in ids:
            for b in ids:
                if a == b:
                    continue
                above = [lv for lv in tree.levels if lv > B[a, b]]
                expected = above[0] if above else np.inf
                assert tree.merge_height(a, b) == expected

    def test_disconnected_minima_stay_roots(self):
        g = random_graph([0.0, 1.0, 2.0], [(0, 1, 0.5)])
        tree = disconnectivity_tree(g, n_levels=5)
        assert len(tree.roots) == 2
        assert tree.merge_height(0, 2) == float("inf")

    def test_levels(self):
        g = random_graph([0.0, 1.0], [(0, 1, 1.0)])
        tree = disconnectivity_tree(g, n_levels=3)
        np.testing.assert_allclose(tree.levels, [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            disconnectivity_tree(g, n_levels=1)


class TestExport:
    graph = random_graph([0.0, 0.5, 1.0, 3.0], [(0, 1, 1.0), (1, 2, 0.2), (2, 3, 2.0)])

    def test_json(self):
        tree = disconnectivity_tree(self.graph)
        d = json.loads(export_graph(tree, "json"))
        assert sum(n["is_leaf"] for n in d["nodes"]) == 4

    def test_dot_parses(self):
        tree = disconnectivity_tree(self.graph)
        (dot,) = pydot.graph_from_dot_data(export_graph(tree, "dot").decode())
        names = {n.get_name() for n in dot.get_nodes()}
        assert {"m0", "m1", "m2", "m3"} <= names
        n_internal = sum(1 for n in tree.nodes.values() if not n.is_leaf)
        assert len(dot.get_edges()) == sum(len(n.children) for n in tree.nodes.values())
        assert len(names) == 4 + n_internal

    def test_svg(self):
        svg = export_graph(disconnectivity_tree(self.graph), "svg").decode()
        assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            export_graph(disconnectivity_tree(self.graph), "png")

    def test_deterministic(self):
        a = export_graph(disconnectivity_tree(self.graph), "dot")
        b = export_graph(disconnectivity_tree(self.graph), "dot")
        assert a == b

    def test_dump_columns(self):
        mins, ts = minima_ts_dump(self.graph)
        assert len(mins.splitlines()) == 4
        rows = [line.split() for line in ts.splitlines()]
        assert [(r[3], r[4]) for r in rows] == [("1", "2"), ("2", "3"), ("3", "4")]
