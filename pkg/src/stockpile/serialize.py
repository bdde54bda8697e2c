"""File formats: versioned solution JSON, CSV with a JSON metadata header,
and canonical config hashing.

All writers are deterministic: no timestamps, shortest-roundtrip float
formatting, sorted keys.  Identical inputs produce byte-identical files.
"""

import hashlib
import json

import numpy as np

from .exceptions import ConfigError
from .model import ModelSpec, build_economy
from .solver import EquilibriumSolution, _augmented_nodes

__all__ = [
    "canonical_json",
    "config_hash",
    "save_solution",
    "load_solution",
    "write_csv",
    "write_json",
]

SOLUTION_FORMAT = "stockpile-solution"
SOLUTION_VERSION = 1


def canonical_json(obj):
    """Deterministic JSON text: sorted keys, no whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(config):
    """SHA-256 of the canonical JSON encoding of a config mapping."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def _finite_or_none(values):
    return [float(v) if np.isfinite(v) else None for v in values]


def save_solution(sol, path, metadata=None):
    """Write a solution file: grids, node matrices (row-major), thresholds,
    convergence info, and the embedded model spec needed to rebuild it.

    Infinite disposal thresholds are stored as null.
    """
    payload = {
        "format": SOLUTION_FORMAT,
        "version": SOLUTION_VERSION,
        "spec": sol.economy.spec.to_dict(),
        "grid": [float(v) for v in sol.grid],
        "x_nodes": [[float(v) for v in row] for row in sol.x_nodes],
        "p_nodes": [[float(v) for v in row] for row in sol.p_nodes],
        "pbar": [float(v) for v in sol.pbar],
        "xstar": _finite_or_none(sol.xstar),
        "b": float(sol.b),
        "iterations": int(sol.iterations),
        "final_residual": float(sol.final_residual),
        "metadata": metadata or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1, allow_nan=False)
        fh.write("\n")


def load_solution(path):
    """Rebuild an EquilibriumSolution (and its economy) from a solution file."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != SOLUTION_FORMAT:
        raise ConfigError(f"{path} is not a solution file")
    if payload.get("version") != SOLUTION_VERSION:
        raise ConfigError(f"unsupported solution version {payload.get('version')}")
    spec = ModelSpec.from_dict(payload["spec"])
    economy = build_economy(spec)
    x_nodes = np.asarray(payload["x_nodes"], dtype=float)
    p_nodes = np.asarray(payload["p_nodes"], dtype=float)
    if x_nodes.shape[1] != economy.n_states:
        raise ConfigError("solution file does not match its embedded spec")
    x_aug, d_aug = _augmented_nodes(economy, x_nodes, p_nodes)
    xstar = np.asarray(
        [np.inf if v is None else float(v) for v in payload["xstar"]], dtype=float
    )
    return EquilibriumSolution(
        economy=economy,
        grid=np.asarray(payload["grid"], dtype=float),
        x_nodes=x_nodes,
        p_nodes=p_nodes,
        d_nodes=economy.demand.quantity(p_nodes),
        x_aug=x_aug,
        d_aug=d_aug,
        pbar=np.asarray(payload["pbar"], dtype=float),
        xstar=xstar,
        iterations=int(payload["iterations"]),
        final_residual=float(payload["final_residual"]),
    )


def _format_value(v):
    if isinstance(v, (np.integer, int)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, columns, metadata=None):
    """CSV with an optional leading '# {json}' metadata line.

    Floats use shortest-roundtrip repr, so files are byte-stable and parse
    back exactly.
    """
    names = list(columns)
    arrays = [np.asarray(columns[k]) for k in names]
    n = len(arrays[0])
    if any(len(a) != n for a in arrays):
        raise ValueError("all columns must have equal length")
    lines = []
    if metadata is not None:
        lines.append("# " + canonical_json(metadata))
    lines.append(",".join(names))
    for i in range(n):
        lines.append(",".join(_format_value(a[i]) for a in arrays))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1, allow_nan=False)
        fh.write("\n")
