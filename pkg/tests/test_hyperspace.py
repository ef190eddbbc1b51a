import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gplandscape.data import schwefel_dataset
from gplandscape.hyperspace import SearchSpace, space_for
from gplandscape.kernel import Hyperparameters


hp_values = st.tuples(
    st.floats(1e-3, 1e3), st.lists(st.floats(1e-3, 1e3), min_size=3, max_size=3),
    st.floats(1e-6, 10.0), st.floats(0.51, 9.99),
)


class TestTransforms:
    def test_unit_values_map_to_zero(self):
        sp = SearchSpace(dim=3)
        v = sp.to_vector(Hyperparameters(1.0, [1, 1, 1], 1.0, 2.5))
        np.testing.assert_array_equal(v, np.zeros(5))

    def test_midpoint_nu_is_zero_logit(self):
        sp = SearchSpace(dim=1, nu_free=True, nu_max=10.0)
        v = sp.to_vector(Hyperparameters(1.0, [1.0], 1.0, 0.5 + 9.5 / 2, nu_free=True))
        assert v[-1] == pytest.approx(0.0, abs=1e-15)

    def test_lengths(self):
        assert SearchSpace(dim=4).size == 6
        assert SearchSpace(dim=4, nu_free=True).size == 7
        assert SearchSpace(dim=4, isotropic=True).size == 3

    @given(hp_values)
    def test_round_trip(self, vals):
        amp, ls, noise, nu = vals
        sp = SearchSpace(dim=3, nu_free=True)
        hp = Hyperparameters(amp, ls, noise, nu, nu_free=True)
        back = sp.from_vector(sp.to_vector(hp))
        assert back.amplitude_sq == pytest.approx(amp, rel=1e-12)
        np.testing.assert_allclose(back.lengthscales, ls, rtol=1e-12)
        assert back.noise_var == pytest.approx(noise, rel=1e-12)
        assert back.nu == pytest.approx(nu, rel=1e-12)

    def test_round_trip_100_random(self):
        rng = np.random.default_rng(0)
        sp = SearchSpace(dim=2, nu_free=True)
        for _ in range(100):
            v = rng.uniform(-5, 5, sp.size)
            np.testing.assert_allclose(sp.to_vector(sp.from_vector(v)), v, rtol=1e-12, atol=1e-12)

    def test_errors(self):
        sp = SearchSpace(dim=2)
        with pytest.raises(ValueError):
            sp.from_vector(np.zeros(3))
        with pytest.raises(ValueError):
            sp.from_vector(np.array([0, 0, np.nan, 0]))
        with pytest.raises(ValueError):
            sp.to_vector(Hyperparameters(1.0, [1.0], 1.0, 2.5))

    def test_dnu_du_matches_fd(self):
        sp = SearchSpace(dim=1, nu_free=True)
        u, h = 0.7, 1e-6
        fd = (sp.nu_from_u(u + h) - sp.nu_from_u(u - h)) / (2 * h)
        assert sp.dnu_du(u) == pytest.approx(fd, rel=1e-8)

    def test_with_nu(self):
        sp = SearchSpace(dim=2, nu_free=True).with_nu(1.5)
        assert not sp.nu_free and sp.nu == 1.5 and sp.size == 4

    def test_canonical_clips_saturated(self):
        sp = SearchSpace(dim=1, nu_free=True)
        v = sp.canonical([0.0, 30.0, -50.0, 25.0])
        np.testing.assert_array_equal(v, [0.0, 8.0, -20.0, 8.0])


class TestSampling:
    def test_reproducible(self):
        sp = SearchSpace(dim=3, nu_free=True)
        a = [sp.sample_start(np.random.default_rng(5)) for _ in range(2)]
        np.testing.assert_array_equal(a[0], a[1])

    def test_within_bounds(self):
        sp = SearchSpace(dim=3, nu_free=True)
        rng = np.random.default_rng(0)
        S = np.array([sp.sample_start(rng) for _ in range(1000)])
        assert np.all((S[:, 0] >= -4) & (S[:, 0] <= 4))
        assert np.all((S[:, 1:4] >= -3) & (S[:, 1:4] <= 5))
        assert np.all((S[:, 4] >= -12) & (S[:, 4] <= 0))
        nu = sp.nu_from_u(S[:, 5])
        assert np.all((nu > 0.5) & (nu <= 10.0))

    def test_lengthscale_mean(self):
        sp = SearchSpace(dim=1)
        rng = np.random.default_rng(1)
        S = np.array([sp.sample_start(rng)[1] for _ in range(100_000)])
        se = 8.0 / np.sqrt(12.0) / np.sqrt(S.size)
        assert abs(S.mean() - 1.0) < 3 * se

    def test_nu_uniform(self):
        sp = SearchSpace(dim=1, nu_free=True)
        rng = np.random.default_rng(2)
        nu = np.array([sp.from_vector(sp.sample_start(rng)).nu for _ in range(20_000)])
        se = 9.5 / np.sqrt(12.0) / np.sqrt(nu.size)
        assert abs(nu.mean() - 5.25) < 3 * se


class TestSpaceFor:
    def test_offset_tracks_spread(self):
        ds = schwefel_dataset(3, 200, seed=0)
        sp = space_for(ds)
        np.testing.assert_allclose(sp.lengthscale_log_offset, np.log(ds.X.std(axis=0)))
        assert space_for(ds, scale_lengthscales=False).lengthscale_log_offset == ()

    def test_bad_space(self):
        with pytest.raises(ValueError):
            SearchSpace(dim=0)
        with pytest.raises(ValueError):
            SearchSpace(dim=1, nu=12.0)
