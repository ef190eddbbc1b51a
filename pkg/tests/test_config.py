import pytest

from gplandscape.config import ConfigError, RunConfig, apply_override, from_dict, load


class TestLoad:
    def test_defaults(self):
        cfg = load()
        assert cfg.dataset.n == 100 and cfg.kernel.nu == 2.5
        assert cfg.landscape.basin_hopping().stall_n == 20

    def test_yaml_and_overrides(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("dataset:\n  n: 50\nkernel:\n  nu_free: true\n")
        cfg = load(p, ["landscape.stall_n=7", "dataset.n=60", "kernel.log_noise_bounds=[-8, 0]"])
        assert cfg.dataset.n == 60
        assert cfg.kernel.nu_free is True
        assert cfg.landscape.stall_n == 7
        assert cfg.kernel.log_noise_bounds == [-8, 0]

    def test_digest_tracks_content(self):
        a, b = load(), load(overrides=["dataset.n=101"])
        assert a.digest() == load().digest()
        assert a.digest() != b.digest()

    def test_round_trip(self):
        cfg = load(overrides=["sweep.nu_step=0.05"])
        assert from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()

    def test_output_env(self, monkeypatch, tmp_path):
        monkeypatch.setenv("GPLANDSCAPE_OUT", str(tmp_path))
        assert RunConfig(output_dir="x").output_path() == tmp_path / "x"
        assert RunConfig(output_dir="/abs").output_path().as_posix() == "/abs"


class TestErrors:
    @pytest.mark.parametrize("override", [
        "dataset.bogus=1",
        "dataset.source=parquet",
        "dataset.source=csv",
        "dataset.test_fraction=1.5",
        "kernel.nu=11",
        "kernel.nu_max=0.4",
        "landscape.stall_n=0",
        "sweep.nu_step=0",
        "fit.n_starts=0",
        "ensemble.schemes=[magic]",
        "dataset=3",
    ])
    def test_rejected(self, override):
        with pytest.raises(ConfigError):
            load(overrides=[override])

    def test_bad_override_syntax(self):
        with pytest.raises(ConfigError):
            apply_override({}, "no_equals")
        with pytest.raises(ConfigError):
            apply_override({}, "a..b=1")
        with pytest.raises(ConfigError):
            apply_override({"a": 1}, "a.b=2")

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load(tmp_path / "missing.yaml")
        bad = tmp_path / "bad.yaml"
        bad.write_text("a: [1, 2\n")
        with pytest.raises(ConfigError):
            load(bad)
