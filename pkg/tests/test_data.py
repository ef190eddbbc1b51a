import io

import numpy as np
import pytest

from gplandscape.data import (
    SCHWEFEL_CONST,
    Dataset,
    load_csv,
    load_dataset,
    save_dataset,
    schwefel,
    schwefel_dataset,
    split,
)


class TestSchwefel:
    def test_global_minimum(self):
        x = np.full(3, 420.9687)
        assert abs(schwefel(x)) < 1e-3

    def test_origin(self):
        assert schwefel(np.zeros(4)) == pytest.approx(4 * SCHWEFEL_CONST)

    def test_batch_shape(self):
        X = np.random.default_rng(0).uniform(-100, 100, (5, 3))
        out = schwefel(X)
        assert out.shape == (5,)
        assert out[2] == pytest.approx(schwefel(X[2]))

    def test_dataset_reproducible(self):
        a = schwefel_dataset(3, 50, seed=4)
        b = schwefel_dataset(3, 50, seed=4)
        np.testing.assert_array_equal(a.X, b.X)
        assert a.provenance["seed"] == 4
        assert a.X.min() >= -100 and a.X.max() <= 100

    def test_bad_args(self):
        with pytest.raises(ValueError):
            schwefel_dataset(n=1)
        with pytest.raises(ValueError):
            schwefel_dataset(low=1.0, high=0.0)


class TestDataset:
    def test_shape_check(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((3, 2)), np.zeros(4))

    def test_nonfinite(self):
        with pytest.raises(ValueError):
            Dataset(np.array([[np.nan]]), np.zeros(1))

    def test_read_only(self):
        d = Dataset(np.zeros((2, 1)), np.zeros(2))
        with pytest.raises(ValueError):
            d.X[0, 0] = 1.0


class TestSplit:
    def test_partition_and_standardization(self):
        ds = schwefel_dataset(3, 50, seed=0)
        tr, te = split(ds, 0.2, seed=7)
        assert (tr.n, te.n) == (40, 10)
        idx = sorted(tr.provenance["indices"] + te.provenance["indices"])
        assert idx == list(range(50))
        np.testing.assert_allclose(tr.X.mean(axis=0), 0, atol=1e-12)
        np.testing.assert_allclose(tr.y.std(), 1.0)
        np.testing.assert_allclose(te.raw_y(), schwefel(te.raw_X()), rtol=1e-12)

    def test_seeded(self):
        ds = schwefel_dataset(3, 30, seed=0)
        a, _ = split(ds, 0.3, seed=1)
        b, _ = split(ds, 0.3, seed=1)
        c, _ = split(ds, 0.3, seed=2)
        np.testing.assert_array_equal(a.X, b.X)
        assert a.provenance["indices"] != c.provenance["indices"]

    def test_no_feature_scaling(self):
        ds = schwefel_dataset(3, 30, seed=0)
        tr, _ = split(ds, 0.2, standardize_features=False)
        np.testing.assert_array_equal(tr.X, tr.raw_X())

    @pytest.mark.parametrize("frac", [0.0, 1.0, 0.001])
    def test_degenerate(self, frac):
        with pytest.raises(ValueError):
            split(schwefel_dataset(3, 10), frac)


class TestCSV:
    def test_load_and_drop(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,b,target\n1,2,3\n4,,6\n7,8,nan\n9,10,11\nx,1,2\n")
        ds = load_csv(p, "target")
        np.testing.assert_array_equal(ds.X, [[1, 2], [9, 10]])
        np.testing.assert_array_equal(ds.y, [3, 11])
        assert ds.provenance["dropped_rows"] == 3
        assert ds.provenance["features"] == ["a", "b"]

    def test_missing_target(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(KeyError):
            load_csv(p, "y")

    def test_empty(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("")
        with pytest.raises(ValueError):
            load_csv(p, "y")


class TestContainer:
    def test_round_trip(self, tmp_path):
        tr, _ = split(schwefel_dataset(3, 20, seed=2), 0.25)
        save_dataset(tr, tmp_path / "a.npz")
        back = load_dataset(tmp_path / "a.npz")
        np.testing.assert_array_equal(back.X, tr.X)
        np.testing.assert_array_equal(back.y, tr.y)
        assert back.y_scale == tr.y_scale
        assert back.provenance == tr.provenance

    def test_byte_identical(self, tmp_path):
        ds = schwefel_dataset(3, 20, seed=2)
        a, b = io.BytesIO(), io.BytesIO()
        save_dataset(ds, a)
        save_dataset(ds, b)
        assert a.getvalue() == b.getvalue()

    def test_rejects_foreign_npz(self, tmp_path):
        p = tmp_path / "x.npz"
        np.savez(p, meta=np.frombuffer(b'{"format": "other"}', dtype=np.uint8))
        with pytest.raises(ValueError):
            load_dataset(p)
