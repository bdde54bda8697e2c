"""Run-configuration files: strict schema, defaults, and loading.

A config is a JSON document with a ``model`` block (ModelSpec fields) and a
``run`` block holding per-subcommand settings.  Unknown keys are rejected at
every level so typos fail loudly.

Model block (defaults in parentheses):
    delta (0.02), k (0.0), sigma_y (0.05), trunc_sd (5.0), x_lower_bound (null),
    demand: {kind ("linear"), pbar (1.0), mu_y (1.0), lam (-0.06)},
    rate: {mu_r (1.0062), rho_r (0.9407), sigma_r (0.03)},
    activity: {rho_a (0.0), gamma (0.0), alpha (0.0)},
    numerics: {n_rate_states (51), n_activity_states (1), n_storage_grid (100),
               storage_grid_max (2.0), storage_grid_median (0.5),
               n_quad_nodes (7), tol (1e-4), max_iters (5000),
               grid_coverage (3.0)}

Run blocks (all optional; every command falls back to these defaults):
    solve:      {}
    simulate:   {t_periods (200000), burn (50000), seed (0)}
    moments:    {t_periods (200000), burn (50000), seed (0)}
    irf:        {shock_bp (100.0), horizon (16), n_paths (100000), seed (0),
                 x_percentile (null -> stationary mean), r_percentile (50.0),
                 volatility (true), sample_t (200000), sample_burn (50000)}
    mit:        {r_low (0.005), r_high (0.015), horizon (16),
                 n_paths (100000), seed (0)}
    diagnostics:{t_periods (20000), burn (1000), seed (0), grid_sweep (null)}
"""

import json
from importlib import resources

from .exceptions import ConfigError
from .model import ModelSpec

__all__ = ["RunConfig", "load_config", "bundled_config_path", "BUNDLED_CONFIGS"]

_MODEL_KEYS = {"delta", "k", "sigma_y", "trunc_sd", "x_lower_bound", "demand",
               "rate", "activity", "numerics"}
_DEMAND_KEYS = {"kind", "pbar", "mu_y", "lam"}
_RATE_KEYS = {"mu_r", "rho_r", "sigma_r"}
_ACTIVITY_KEYS = {"rho_a", "gamma", "alpha"}
_NUMERICS_KEYS = {"n_rate_states", "n_activity_states", "n_storage_grid",
                  "storage_grid_max", "storage_grid_median", "n_quad_nodes",
                  "tol", "max_iters", "grid_coverage"}

_RUN_DEFAULTS = {
    "solve": {},
    "simulate": {"t_periods": 200_000, "burn": 50_000, "seed": 0},
    "moments": {"t_periods": 200_000, "burn": 50_000, "seed": 0},
    "irf": {
        "shock_bp": 100.0,
        "horizon": 16,
        "n_paths": 100_000,
        "seed": 0,
        "x_percentile": None,
        "r_percentile": 50.0,
        "volatility": True,
        "sample_t": 200_000,
        "sample_burn": 50_000,
    },
    "mit": {"r_low": 0.005, "r_high": 0.015, "horizon": 16,
            "n_paths": 100_000, "seed": 0},
    "diagnostics": {"t_periods": 20_000, "burn": 1_000, "seed": 0,
                    "grid_sweep": None},
}

BUNDLED_CONFIGS = (
    "benchmark_speculative",
    "benchmark_demand",
    "precision_sweep",
    "correlated_counterexample",
    "constant_rate_mit",
)


def _require_mapping(obj, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object")


def _reject_unknown(obj, allowed, where):
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


class RunConfig:
    """Validated configuration: a ModelSpec plus per-command run settings."""

    def __init__(self, raw):
        _require_mapping(raw, "config")
        _reject_unknown(raw, {"model", "run"}, "config")
        model_raw = raw.get("model", {})
        _require_mapping(model_raw, "model")
        _reject_unknown(model_raw, _MODEL_KEYS, "model")
        for key, allowed in (
            ("demand", _DEMAND_KEYS),
            ("rate", _RATE_KEYS),
            ("activity", _ACTIVITY_KEYS),
            ("numerics", _NUMERICS_KEYS),
        ):
            if key in model_raw:
                _require_mapping(model_raw[key], f"model.{key}")
                _reject_unknown(model_raw[key], allowed, f"model.{key}")
        try:
            self.spec = ModelSpec.from_dict(model_raw)
        except (TypeError, ValueError, KeyError) as err:
            raise ConfigError(f"invalid model block: {err}") from err

        run_raw = raw.get("run", {})
        _require_mapping(run_raw, "run")
        _reject_unknown(run_raw, set(_RUN_DEFAULTS), "run")
        self.run = {}
        for name, defaults in _RUN_DEFAULTS.items():
            block = run_raw.get(name, {})
            _require_mapping(block, f"run.{name}")
            _reject_unknown(block, set(defaults), f"run.{name}")
            merged = dict(defaults)
            merged.update(block)
            self.run[name] = merged
        self.raw = raw

    def run_block(self, name, seed_override=None):
        block = dict(self.run[name])
        if seed_override is not None and "seed" in block:
            block["seed"] = seed_override
        return block


def load_config(path):
    """Parse and validate a config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: {err}") from err
    return RunConfig(raw)


def bundled_config_path(name):
    """Filesystem path of a packaged example config."""
    if name not in BUNDLED_CONFIGS:
        raise ConfigError(f"unknown bundled config {name!r}; have {BUNDLED_CONFIGS}")
    return resources.files("stockpile").joinpath("configs", f"{name}.json")
