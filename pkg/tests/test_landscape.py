import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from gplandscape.data import schwefel_dataset, split
from gplandscape.hyperspace import space_for
from gplandscape.landscape import (
    BasinHoppingConfig,
    ExplorationError,
    FunctionObjective,
    MinimumRecord,
    analyze_minimum,
    assign_ids,
    dedup_minima,
    explore_gp,
    hessian_fd,
    is_minimum,
    local_minimize,
    merge_minima,
    metropolis_accept,
    plateau_probe,
    run_basin_hopping,
)


def wavy(d=2):
    """f(x) = sum 0.1 x_i^2 + sin(3 x_i): separable, finitely many minima."""
    f = lambda x: float(np.sum(0.1 * x * x + np.sin(3 * x)))  # noqa: E731
    g = lambda x: 0.2 * x + 3 * np.cos(3 * x)  # noqa: E731
    return FunctionObjective(f, g, d)


def wavy_minima_1d():
    """Grid + root-bracketing oracle for the 1d minima of 0.1 x^2 + sin(3x)."""
    g = lambda x: 0.2 * x + 3 * math.cos(3 * x)  # noqa: E731
    xs = np.linspace(-20, 20, 40001)
    gs = 0.2 * xs + 3 * np.cos(3 * xs)
    out = []
    for a, b, ga, gb in zip(xs, xs[1:], gs, gs[1:]):
        if ga < 0 <= gb:
            out.append(brentq(g, a, b, xtol=1e-14))
    return np.array(out)


def quad(A):
    A = np.asarray(A, dtype=float)
    return FunctionObjective(lambda x: 0.5 * x @ A @ x, lambda x: A @ x, A.shape[0])


def rec(theta, loss):
    return MinimumRecord(theta=np.asarray(theta, dtype=float), loss=loss, grad_norm=0.0)


class TestLocalMinimize:
    def test_quadratic(self):
        r = local_minimize(np.array([3.0, -2.0]), quad([[2, 0.5], [0.5, 1]]), tol=1e-8)
        assert r.converged
        np.testing.assert_allclose(r.theta, 0.0, atol=1e-8)

    def test_already_converged(self):
        r = local_minimize(np.zeros(2), quad(np.eye(2)))
        assert r.converged and r.n_iter == 0

    def test_nonfinite_start(self):
        obj = FunctionObjective(lambda x: math.inf, lambda x: np.zeros(1), 1)
        assert not local_minimize(np.zeros(1), obj).converged

    def test_lands_on_oracle_minimum(self):
        roots = wavy_minima_1d()
        r = local_minimize(np.array([1.0]), wavy(1), tol=1e-8)
        assert np.min(np.abs(roots - r.theta[0])) < 1e-8


class TestMetropolis:
    def test_downhill_always(self):
        rng = np.random.default_rng(0)
        assert all(metropolis_accept(d, 1.0, rng) for d in (0.0, -1.0, -1e9))

    @pytest.mark.parametrize("ratio", [1.0, 3.0])
    def test_rate(self, ratio):
        rng = np.random.default_rng(1)
        n = 20_000
        acc = sum(metropolis_accept(ratio * 2.0, 2.0, rng) for _ in range(n))
        p = math.exp(-ratio)
        assert abs(acc / n - p) < 4 * math.sqrt(p * (1 - p) / n)

    def test_bad_c(self):
        with pytest.raises(ValueError):
            metropolis_accept(1.0, 0.0, np.random.default_rng())


class TestCurvature:
    def test_hessian_of_quadratic(self):
        A = np.array([[3.0, 1.0], [1.0, 2.0]])
        H, asym = hessian_fd(np.array([0.3, -0.1]), quad(A))
        np.testing.assert_allclose(H, A, atol=1e-8)
        assert asym < 1e-10

    def test_analyze(self):
        H = np.diag([4.0, 1.0, 0.0])
        r = analyze_minimum(rec([0, 0, 0], 2.0), H)
        np.testing.assert_allclose(r.hessian_eigenvalues, [0.0, 1.0, 4.0])
        assert r.spectral_norm == 4.0
        # the zero mode is excluded from the product
        assert r.log_occupation == pytest.approx(-2.0 - 0.5 * math.log(4.0))
        assert is_minimum(r)

    def test_negative_curvature_rejected(self):
        r = analyze_minimum(rec([0, 0], 0.0), np.diag([1.0, -0.1]))
        assert not is_minimum(r)

    def test_no_positive_eigenvalue(self):
        assert analyze_minimum(rec([0], 0.0), np.zeros((1, 1))).log_occupation is None


class TestDedup:
    def test_merges_close_keeps_lower(self):
        rs = [rec([0.0, 0.0], 1.00005), rec([0.01, 0.0], 1.0), rec([2.0, 0.0], 1.0)]
        out = dedup_minima(rs, 1e-4, 0.05)
        assert len(out) == 2
        assert out[0].loss == 1.0 and out[0].theta[0] == 0.01

    def test_coords_mapping(self):
        rs = [rec([0.0, 30.0], 1.0), rec([0.0, 40.0], 1.0)]
        assert len(dedup_minima(rs, 1e-4, 0.05)) == 2
        clip = lambda t: np.minimum(t, 8.0)  # noqa: E731
        assert len(dedup_minima(rs, 1e-4, 0.05, coords=clip)) == 1

    def test_plateau_probe(self):
        flat = FunctionObjective(lambda x: 0.0, lambda x: np.zeros(1), 1)
        bump = FunctionObjective(lambda x: float(np.sin(np.pi * x[0]) ** 2),
                                 lambda x: np.array([np.pi * np.sin(2 * np.pi * x[0])]), 1)
        a, b = rec([0.0], 0.0), rec([1.0], 0.0)
        assert plateau_probe(flat, 1e-4)(a, b)
        assert not plateau_probe(bump, 1e-4)(a, b)

    @settings(deadline=None, max_examples=50)
    @given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 3)), min_size=1, max_size=15),
           st.randoms(use_true_random=False))
    def test_order_independent_and_idempotent(self, pts, rnd):
        rs = [rec([float(a), 0.0], float(b)) for a, b in pts]
        shuffled = list(rs)
        rnd.shuffle(shuffled)
        a = dedup_minima(rs, 1e-4, 0.05)
        b = dedup_minima(shuffled, 1e-4, 0.05)
        key = lambda out: [(r.loss, tuple(r.theta)) for r in out]  # noqa: E731
        assert key(a) == key(b)
        assert key(dedup_minima(a, 1e-4, 0.05)) == key(a)

    def test_assign_ids_sorted(self):
        out = assign_ids([rec([1.0], 3.0), rec([2.0], 1.0)])
        assert [r.id for r in out] == [0, 1]
        assert [r.loss for r in out] == [1.0, 3.0]

    def test_merge_minima(self):
        a = [rec([0.0], 1.0), rec([5.0], 2.0)]
        b = [rec([5.001], 2.0), rec([9.0], 0.5)]
        out = merge_minima([a, b], 1e-4, 0.05)
        assert [r.loss for r in out] == [0.5, 1.0, 2.0]
        assert [r.loss for r in merge_minima([b, a], 1e-4, 0.05)] == [0.5, 1.0, 2.0]


class TestBasinHopping:
    cfg = BasinHoppingConfig(stall_n=15, max_steps=150, local_tol=1e-6, seed=3)

    @staticmethod
    def sampler(rng):
        return rng.uniform(-5, 5, size=2)

    def test_minima_are_oracle_minima(self):
        roots = wavy_minima_1d()
        res = run_basin_hopping(wavy(2), self.sampler, self.cfg)
        assert len(res.minima) >= 4
        for m in res.minima:
            assert m.grad_norm <= self.cfg.local_tol
            assert np.all(np.min(np.abs(roots[:, None] - m.theta[None, :]), axis=0) < 1e-5)
            assert m.hessian_eigenvalues.min() > 0
        best = roots[np.argmin(0.1 * roots ** 2 + np.sin(3 * roots))]
        np.testing.assert_allclose(res.minima[0].theta, [best, best], atol=1e-5)

    def test_deterministic(self):
        a = run_basin_hopping(wavy(2), self.sampler, self.cfg).minima
        b = run_basin_hopping(wavy(2), self.sampler, self.cfg).minima
        assert [m.to_dict() for m in a] == [m.to_dict() for m in b]

    def test_ids_follow_loss(self):
        ms = run_basin_hopping(wavy(2), self.sampler, self.cfg).minima
        assert [m.id for m in ms] == list(range(len(ms)))
        assert all(x.loss <= y.loss for x, y in zip(ms, ms[1:]))

    def test_adaptive_c_recorded(self):
        res = run_basin_hopping(wavy(2), self.sampler, self.cfg)
        assert res.stats["metropolis_c"] > 0
        fixed = BasinHoppingConfig(metropolis_c=0.7, stall_n=5, max_steps=20)
        assert run_basin_hopping(wavy(2), self.sampler, fixed).stats["metropolis_c"] == 0.7

    def test_all_starts_fail(self):
        obj = FunctionObjective(lambda x: math.nan, lambda x: np.zeros(1), 1)
        with pytest.raises(ExplorationError):
            run_basin_hopping(obj, lambda r: r.uniform(size=1), BasinHoppingConfig(stall_n=1))

    @pytest.mark.parametrize("kw", [dict(metropolis_c=-1.0), dict(step_scale=0.0),
                                    dict(stall_n=0), dict(stall_n=30, max_steps=10),
                                    dict(n_initial=0)])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            BasinHoppingConfig(**kw)

    def test_record_round_trip(self):
        m = run_basin_hopping(wavy(2), self.sampler, self.cfg).minima[0]
        back = MinimumRecord.from_dict(m.to_dict())
        assert back.to_dict() == m.to_dict()


class TestExploreGP:
    def test_small_schwefel(self):
        tr, te = split(schwefel_dataset(3, 40, seed=1), 0.2, standardize_features=False)
        sp = space_for(tr, nu=2.5)
        cfg = BasinHoppingConfig(stall_n=4, max_steps=20, n_initial=4, seed=0)
        a = explore_gp(tr, sp, cfg, test=te)
        b = explore_gp(tr, sp, cfg, test=te)
        assert [m.to_dict() for m in a.minima] == [m.to_dict() for m in b.minima]
        for m in a.minima:
            assert m.grad_norm <= cfg.local_tol
            assert m.hyperparameters.nu == 2.5
            assert m.train_mse is not None and m.test_mse is not None
            assert is_minimum(m)
