import os
import tempfile
from pathlib import Path

import pytest

from spme_eis.config import RunConfig, Settings, load_run_config
from spme_eis.errors import ConfigError
from spme_eis.model.dae import Mesh, ModelMode


class TestLoadRunConfig:
    def setup_method(self):
        self._tmpdir = tempfile.TemporaryDirectory()
        self.dir = Path(self._tmpdir.name)

    def teardown_method(self):
        self._tmpdir.cleanup()

    def _write(self, text, name="run.env"):
        path = self.dir / name
        path.write_text(text)
        return path

    def test_defaults_without_file(self):
        config = load_run_config()
        assert config.mode == ModelMode.SPME
        assert config.mesh() == Mesh()
        assert config.socs == [50.0]
        assert config.runs == 10 and config.max_iter == 1000 and config.swarm_size == 50

    def test_file_values(self):
        path = self._write(
            "# run settings\n"
            "mode = spm\n"
            "n_r = 20\n"
            "socs = 10, 50, 90\n"
            "free = r0,tau_ct_neg\n"
            "bound.r0 = 0.001, 0.02\n"
        )
        config = load_run_config(path)
        assert config.mode == ModelMode.SPM
        assert config.n_r == 20
        assert config.socs == [10.0, 50.0, 90.0]
        assert config.free == ["r0", "tau_ct_neg"]
        assert config.bounds == {"r0": (0.001, 0.02)}

    def test_overrides_win(self):
        path = self._write("seed = 3\nruns = 4\n")
        config = load_run_config(path, {"seed": 9, "runs": None, "bounds": {"q_e": (600.0, 900.0)}})
        assert config.seed == 9
        assert config.runs == 4
        assert config.bounds == {"q_e": (600.0, 900.0)}

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_run_config(self.dir / "nope.env")

    @pytest.mark.parametrize("text", [
        "colour = blue\n",
        "socs = 50, 120\n",
        "n_periods = 4\nn_discard = 4\n",
        "bound.r0 = 0.02, 0.01\n",
        "bound.r0 = 0.02\n",
        "runs = many\n",
        "parameter_file = does-not-exist.txt\n",
    ])
    def test_invalid_values(self, text):
        with pytest.raises(ConfigError):
            load_run_config(self._write(text))

    def test_parameter_file_must_exist(self):
        param = self._write("r0 = 0.01\n", name="params.txt")
        config = load_run_config(overrides={"parameter_file": str(param)})
        assert config.parameter_file == param


class TestRunConfig:
    def test_grid_per_decade(self):
        grid = RunConfig(f_min=4e-4, f_max=1e3, ppd=10).grid()
        assert len(grid) == 65

    def test_grid_fixed_count(self):
        grid = RunConfig(f_min=1e-2, f_max=1e2, n_freq=7).grid()
        assert len(grid) == 7

    def test_digest_is_stable(self):
        a = RunConfig(socs=[20, 80], seed=1)
        b = RunConfig(seed=1, socs=[20.0, 80.0])
        assert a.digest() == b.digest()
        assert a.digest() != RunConfig(socs=[20, 80], seed=2).digest()
        assert len(a.digest()) == 64


class TestSettings:
    def test_environment(self, monkeypatch):
        monkeypatch.setenv("SPME_WORKERS", "4")
        monkeypatch.setenv("SPME_LOG_LEVEL", "DEBUG")
        settings = Settings(_env_file=None)
        assert settings.workers == 4
        assert settings.log_level == "DEBUG"
        assert settings.executor == "thread"

    def test_env_file(self, monkeypatch):
        monkeypatch.delenv("SPME_WORKERS", raising=False)
        with tempfile.TemporaryDirectory() as tmp:
            env = os.path.join(tmp, ".env")
            with open(env, "w") as fh:
                fh.write("SPME_WORKERS=2\nSPME_OUTPUT_DIR=out\nUNRELATED=1\n")
            settings = Settings(_env_file=env)
        assert settings.workers == 2
        assert settings.output_dir == Path("out")
