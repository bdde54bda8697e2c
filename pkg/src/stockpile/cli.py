"""Batch front end: check | solve | simulate | moments | irf | mit | diagnose.

Every command reads a JSON config (--config), writes results under --out,
and embeds the config hash and seed in each artifact for provenance.  Exit
codes: 0 success, 1 model or validation failure, 2 usage or schema error.

Numerical kernels run on a single BLAS thread so outputs are byte-identical
regardless of --threads, which only caps auxiliary parallelism.
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .diagnostics import euler_error_from_path
from .exceptions import ConfigError, ConvergenceError, ModelValidationError
from .girf import GirfSpec, girf, mit_irf, percentile_state, state_near_rate
from .model import build_economy, validate_economy
from .runconfig import load_config
from .serialize import config_hash, load_solution, save_solution, write_csv, write_json
from .simulation import moments, simulate, stationary_sample
from .solver import solve_egm

EXIT_OK = 0
EXIT_MODEL = 1
EXIT_USAGE = 2


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="stockpile",
        description="Competitive storage model with stochastic interest rates",
    )
    parser.add_argument("command", choices=[
        "check", "solve", "simulate", "moments", "irf", "mit", "diagnose",
    ])
    parser.add_argument("--config", required=True, help="path to a JSON run config")
    parser.add_argument("--out", default=".", help="output directory (default: .)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the seed of the selected command")
    parser.add_argument("--threads", type=int, default=1,
                        help="auxiliary parallelism cap (results are identical for any value)")
    return parser


def _provenance(config, seed=None):
    meta = {"config_hash": config_hash(config.raw)}
    if seed is not None:
        meta["seed"] = int(seed)
    return meta


def _load_required_solution(out_dir):
    path = out_dir / "solution.json"
    if not path.exists():
        raise ModelValidationError(
            f"missing solution file {path}; run `stockpile solve` first"
        )
    return load_solution(path)


def cmd_check(config, out_dir, seed):
    economy = build_economy(config.spec)
    report = validate_economy(economy)
    print(f"kappa(M)          = {report.kappa:.6f}")
    print(f"delta             = {report.delta:.6f}")
    print(f"kappa(M) + delta  = {report.kappa + report.delta:.6f}  "
          f"({'pass' if report.assumption1_ok else 'FAIL'})")
    print(f"min output-value margin = {float(np.min(report.margins)):.6f}  "
          f"({'pass' if report.storage_value_ok else 'FAIL'})")
    write_json(out_dir / "check.json", {**report.to_dict(), **_provenance(config)})
    return EXIT_OK if report.ok else EXIT_MODEL


def cmd_solve(config, out_dir, seed):
    economy = build_economy(config.spec)
    sol = solve_egm(economy)
    save_solution(sol, out_dir / "solution.json", metadata=_provenance(config))
    write_csv(
        out_dir / "convergence.csv",
        {"iteration": np.arange(1, len(sol.residual_history) + 1),
         "residual": np.asarray(sol.residual_history)},
        metadata=_provenance(config),
    )
    print(f"converged in {sol.iterations} iterations "
          f"(final residual {sol.final_residual:.3e})")
    return EXIT_OK


def cmd_simulate(config, out_dir, seed):
    block = config.run_block("simulate", seed)
    sol = _load_required_solution(out_dir)
    result = simulate(sol, sol.economy, block["t_periods"], block["burn"], block["seed"])
    write_csv(out_dir / "path.csv", result.columns(),
              metadata=_provenance(config, block["seed"]))
    print(f"wrote {len(result)} periods to {out_dir / 'path.csv'}")
    return EXIT_OK


def cmd_moments(config, out_dir, seed):
    block = config.run_block("moments", seed)
    sol = _load_required_solution(out_dir)
    result = simulate(sol, sol.economy, block["t_periods"], block["burn"], block["seed"])
    stats = moments(result)
    payload = {**stats.to_dict(), **_provenance(config, block["seed"])}
    write_json(out_dir / "moments.json", payload)
    print(f"cv={stats.cv:.4f} ac1={stats.ac1:.4f} skewness={stats.skewness:.4f}")
    return EXIT_OK


def cmd_irf(config, out_dir, seed):
    block = config.run_block("irf", seed)
    sol = _load_required_solution(out_dir)
    economy = sol.economy
    sample = stationary_sample(sol, economy, seed=block["seed"],
                               t_periods=block["sample_t"], burn=block["sample_burn"])
    if block["x_percentile"] is None:
        x0 = sample.mean_x()
        z0 = state_near_rate(sample, economy.spec.rate.mu_r)
    else:
        x0, z0 = percentile_state(sample, block["x_percentile"], block["r_percentile"])
    gspec = GirfSpec(
        x0=x0, z0=z0, shock_bp=block["shock_bp"], horizon=block["horizon"],
        n_paths=block["n_paths"], seed=block["seed"],
        compute_volatility=block["volatility"],
    )
    result = girf(sol, economy, gspec)
    write_csv(out_dir / "girf.csv", result.columns(),
              metadata={**_provenance(config, block["seed"]), **result.metadata})
    print(f"impact price response: {result.irf_price_pct[0]:+.5f} "
          f"(conditioned at x0={x0:.4f}, state {z0})")
    return EXIT_OK


def cmd_mit(config, out_dir, seed):
    block = config.run_block("mit", seed)
    result = mit_irf(config.spec, block["r_low"], block["r_high"],
                     horizon=block["horizon"], n_paths=block["n_paths"],
                     seed=block["seed"])
    write_csv(out_dir / "mit.csv", result.columns(),
              metadata={**_provenance(config, block["seed"]), **result.metadata})
    print(f"impact: {result.irf_price_pct[0]:+.5f}; "
          f"h=1: {result.irf_price_pct[1]:+.5f}")
    return EXIT_OK


def cmd_diagnose(config, out_dir, seed):
    block = config.run_block("diagnostics", seed)
    rows = []
    sweep = block["grid_sweep"]
    if sweep is None:
        sol = _load_required_solution(out_dir)
        report = euler_error_from_path(sol, sol.economy, block["seed"],
                                       block["t_periods"], block["burn"])
        num = sol.economy.spec.numerics
        rows.append((num.n_storage_grid, num.n_rate_states, report))
    else:
        for k_grid, n_states in sweep:
            num = replace(config.spec.numerics, n_storage_grid=int(k_grid),
                          n_rate_states=int(n_states))
            economy = build_economy(replace(config.spec, numerics=num))
            sol = solve_egm(economy)
            report = euler_error_from_path(sol, economy, block["seed"],
                                           block["t_periods"], block["burn"])
            rows.append((int(k_grid), int(n_states), report))
    summary = []
    for k_grid, n_states, report in rows:
        summary.append({"n_storage_grid": k_grid, "n_states": n_states,
                        **report.to_dict()})
        print(f"K={k_grid:5d} N={n_states:4d}  max log10|EE| = {report.max_log10:.3f}  "
              f"95th pct = {report.pct95_log10:.3f}")
    write_json(out_dir / "diagnostics.json",
               {"euler_error": summary, **_provenance(config, block["seed"])})
    last = rows[-1][2]
    write_csv(out_dir / "euler_samples.csv",
              {"x": last.x, "z_index": last.z_index, "ee": last.ee},
              metadata=_provenance(config, block["seed"]))
    return EXIT_OK


_COMMANDS = {
    "check": cmd_check,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "moments": cmd_moments,
    "irf": cmd_irf,
    "mit": cmd_mit,
    "diagnose": cmd_diagnose,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        config = load_config(args.config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_USAGE
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        with threadpool_limits(limits=1):
            return _COMMANDS[args.command](config, out_dir, args.seed)
    except (ModelValidationError, ConvergenceError) as err:
        print(f"model error: {err}", file=sys.stderr)
        return EXIT_MODEL
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
