import json
import subprocess
import sys

import pytest

from stockpile.cli import main
from stockpile.exceptions import ConfigError
from stockpile.runconfig import BUNDLED_CONFIGS, bundled_config_path, load_config
from stockpile.serialize import config_hash

SMALL_MODEL = {
    "numerics": {"n_rate_states": 11, "n_storage_grid": 40, "tol": 1e-4},
}


def write_config(tmp_path, run=None, model=None, name="config.json"):
    payload = {"model": model if model is not None else SMALL_MODEL}
    if run is not None:
        payload["run"] = run
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path


class TestSchema:
    def test_bundled_configs_validate(self):
        for name in BUNDLED_CONFIGS:
            cfg = load_config(bundled_config_path(name))
            assert cfg.spec.delta >= 0

    def test_unknown_top_level_key(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"model": {}, "extra": 1}))
        with pytest.raises(ConfigError, match="extra"):
            load_config(path)

    def test_unknown_model_key(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"model": {"detla": 0.02}}))
        with pytest.raises(ConfigError, match="detla"):
            load_config(path)

    def test_unknown_nested_key(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"model": {"rate": {"mu": 1.0}}}))
        with pytest.raises(ConfigError, match="mu"):
            load_config(path)

    def test_unknown_run_key(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"model": {}, "run": {"solve": {"output": "x"}}}))
        with pytest.raises(ConfigError, match="output"):
            load_config(path)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="JSON"):
            load_config(path)

    def test_defaults_applied(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        assert cfg.run["simulate"]["t_periods"] == 200_000
        assert cfg.run["irf"]["shock_bp"] == 100.0

    def test_seed_override(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        assert cfg.run_block("simulate", 99)["seed"] == 99
        assert cfg.run_block("simulate")["seed"] == 0


class TestCliCommands:
    @pytest.fixture()
    def config_path(self, tmp_path):
        run = {
            "simulate": {"t_periods": 15_000, "burn": 1_000, "seed": 42},
            "moments": {"t_periods": 15_000, "burn": 1_000, "seed": 42},
            "irf": {"n_paths": 2_000, "seed": 3, "volatility": False,
                    "sample_t": 15_000, "sample_burn": 1_000},
            "mit": {"r_low": 0.005, "r_high": 0.015, "n_paths": 2_000, "seed": 3},
            "diagnostics": {"t_periods": 3_000, "burn": 300, "seed": 9},
        }
        return write_config(tmp_path, run=run)

    def test_check_passes_on_benchmark(self, tmp_path, config_path, capsys):
        code = main(["check", "--config", str(config_path), "--out", str(tmp_path)])
        out = capsys.readouterr().out
        assert code == 0
        assert "kappa(M)" in out
        assert (tmp_path / "check.json").exists()

    def test_check_fails_on_low_mean_rate(self, tmp_path):
        model = {
            "delta": 0.0,
            "rate": {"mu_r": 0.98, "rho_r": 0.9407, "sigma_r": 0.03},
            "numerics": {"n_rate_states": 21},
        }
        path = write_config(tmp_path, model=model, name="fail.json")
        assert main(["check", "--config", str(path), "--out", str(tmp_path)]) == 1

    def test_schema_error_exits_2(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"model": {"bogus": 1}}))
        assert main(["check", "--config", str(path), "--out", str(tmp_path)]) == 2

    def test_simulate_requires_solution(self, tmp_path, config_path):
        assert main(["simulate", "--config", str(config_path), "--out", str(tmp_path)]) == 1

    def test_pipeline_and_provenance(self, tmp_path, config_path):
        assert main(["solve", "--config", str(config_path), "--out", str(tmp_path)]) == 0
        assert main(["simulate", "--config", str(config_path), "--out", str(tmp_path)]) == 0
        assert main(["moments", "--config", str(config_path), "--out", str(tmp_path)]) == 0
        expected_hash = config_hash(json.loads(config_path.read_text()))
        header = (tmp_path / "path.csv").read_text().splitlines()[0]
        assert expected_hash in header
        payload = json.loads((tmp_path / "moments.json").read_text())
        assert payload["config_hash"] == expected_hash
        assert payload["seed"] == 42

    def test_solution_file_round_trips(self, tmp_path, config_path):
        from stockpile.serialize import load_solution, save_solution

        main(["solve", "--config", str(config_path), "--out", str(tmp_path)])
        sol = load_solution(tmp_path / "solution.json")
        save_solution(sol, tmp_path / "again.json",
                      metadata=json.loads(
                          (tmp_path / "solution.json").read_text()
                      )["metadata"])
        assert (tmp_path / "solution.json").read_bytes() == (
            tmp_path / "again.json"
        ).read_bytes()

    def test_seed_flag_changes_output(self, tmp_path, config_path):
        main(["solve", "--config", str(config_path), "--out", str(tmp_path)])
        main(["simulate", "--config", str(config_path), "--out", str(tmp_path)])
        first = (tmp_path / "path.csv").read_bytes()
        main(["simulate", "--config", str(config_path), "--out", str(tmp_path),
              "--seed", "43"])
        assert (tmp_path / "path.csv").read_bytes() != first

    def test_subprocess_entry_point(self, tmp_path, config_path):
        proc = subprocess.run(
            [sys.executable, "-m", "stockpile.cli", "check",
             "--config", str(config_path), "--out", str(tmp_path)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "pass" in proc.stdout
