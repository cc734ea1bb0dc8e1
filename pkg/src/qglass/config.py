"""Experiment configuration: a flat, documented key schema with validation that never computes.

Keys are dotted paths such as ``grid.T`` or ``sd.restarts``. A YAML or JSON
file may use either dotted keys or nested mappings; both flatten to the same
paths. Anything not in :data:`SCHEMA` is rejected.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import yaml

from qglass.landscape import DOS_CAP
from qglass.protocols import H_MAX
from qglass.quantum import MAX_SITES

METHODS = ("rl", "sd", "grape", "crab", "variational", "dos", "qscan", "attractors", "compare")


@dataclass(frozen=True)
class Key:
    kind: type | tuple
    default: object
    doc: str


def _k(kind, default, doc):
    return Key(kind, default, doc)


SCHEMA: dict[str, Key] = {
    "method": _k(str, "sd", "experiment to run: " + ", ".join(METHODS)),
    "seed": _k(int, 0, "base seed; every random stream derives from it"),
    "out": _k(str, "results", "output directory"),
    "workers": _k(int, 1, "worker processes for independent restarts"),
    "system.L": _k(int, 1, "number of spins (1 is the qubit)"),
    "system.h_z": _k(float, 1.0, "longitudinal field"),
    "grid.T": _k(float, 1.0, "protocol duration"),
    "grid.dt": _k(float, 0.05, "time step; T/dt must be an integer"),
    "grid.N_T": _k((int, type(None)), None, "number of bins; overrides grid.dt when set"),
    "fields.initial": _k(float, -2.0, "h_x whose ground state is the initial state"),
    "fields.target": _k(float, 2.0, "h_x whose ground state is the target"),
    # stochastic descent
    "sd.restarts": _k(int, 100, "independent descents"),
    "sd.max_evals": _k((int, type(None)), None, "fidelity-evaluation budget per descent (default 20 N_T)"),
    "sd.flip_order": _k(int, 1, "bins flipped per proposal"),
    "sd.symmetric": _k(bool, False, "restrict to protocols with h(t) = -h(T - t)"),
    # reinforcement learning
    "rl.episodes": _k(int, 20000, "training episodes per agent"),
    "rl.seeds": _k(int, 10, "independent agents; the best protocol over all of them is kept"),
    "rl.actions": _k(str, "bang_bang", "bang_bang or quasi_continuous"),
    "rl.alpha": _k(float, 0.1, "learning rate"),
    "rl.trace_decay": _k(float, 0.6, "eligibility-trace decay"),
    "rl.n_tilings": _k(int, 5, "tilings of the field axis"),
    "rl.n_tiles": _k(int, 20, "tiles per tiling"),
    "rl.phase_length": _k(int, 40, "episodes per exploration or replay phase"),
    "rl.beta_start": _k(float, 0.1, "initial inverse temperature"),
    "rl.beta_end": _k(float, 50.0, "final inverse temperature"),
    # GRAPE
    "grape.restarts": _k(int, 10, "random starts"),
    "grape.max_iters": _k(int, 10000, "iterations per start"),
    "grape.eps0": _k(float, 1.0, "initial step on the functional derivative"),
    "grape.tolerance": _k(float, 1e-10, "stop once an accepted step gains less than this"),
    # CRAB
    "crab.N_c": _k(int, 10, "Fourier components"),
    "crab.restarts": _k(int, 10, "random restarts"),
    "crab.optimize_frequencies": _k(bool, False, "also optimize the frequency offsets"),
    # variational scan
    "variational.T_min": _k(float, 0.05, "first T of the scan"),
    "variational.T_max": _k(float, 4.0, "last T of the scan"),
    "variational.T_step": _k(float, 0.005, "scan spacing"),
    "variational.tau_resolution": _k(float, 1e-3, "grid spacing for the duration search"),
    "variational.dims": _k(int, 1, "1 or 2 free pulse durations"),
    # exhaustive density of states
    "dos.bin_width": _k(float, 1e-3, "histogram bin width in F"),
    "dos.k_flips": _k(list, [1, 2], "excitation orders reported around the optimum"),
    "dos.cap": _k(int, DOS_CAP, "largest N_T allowed for exhaustive enumeration"),
    # sweeps
    "qscan.axis": _k(str, "T", "T, dt or L"),
    "qscan.values": _k(list, [0.5, 1.0, 1.5, 2.0, 2.5, 3.0], "sweep values, strictly monotone"),
    "qscan.ensemble": _k(int, 100, "SD restarts per point"),
    "qscan.symmetric": _k(bool, True, "time-antisymmetric SD for the sweep"),
    # attractors
    "attractors.restarts": _k(int, 1000, "SD restarts to cluster"),
    "attractors.threshold": _k(float, 0.6, "overlap above which two minima are linked"),
    "attractors.min_population": _k(float, 0.05, "fraction that makes a cluster major"),
    "attractors.grape_restarts": _k(int, 0, "GRAPE restarts clustered the same way (0 skips)"),
    # method comparison
    "compare.T_values": _k(list, [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0], "durations to compare at"),
}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def load_file(path) -> dict:
    """Read a YAML or JSON config file into flat dotted keys."""
    text = Path(path).read_text(encoding="utf-8")
    data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])
    return _flatten(data)


def _coerce(key: str, value, errors: list):
    spec = SCHEMA[key]
    kinds = spec.kind if isinstance(spec.kind, tuple) else (spec.kind,)
    if value is None and type(None) in kinds:
        return None
    if bool in kinds:
        if isinstance(value, bool):
            return value
        errors.append(f"{key}: expected true/false, got {value!r}")
        return spec.default
    if int in kinds:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        errors.append(f"{key}: expected an integer, got {value!r}")
        return spec.default
    if float in kinds:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        errors.append(f"{key}: expected a number, got {value!r}")
        return spec.default
    if list in kinds:
        if isinstance(value, (list, tuple)):
            return list(value)
        errors.append(f"{key}: expected a list, got {value!r}")
        return spec.default
    if not isinstance(value, str):
        errors.append(f"{key}: expected a string, got {value!r}")
        return spec.default
    return value


def parse_override(text: str) -> tuple[str, object]:
    """``key=value`` with the value read as YAML (so ``3``, ``0.5``, ``true``, ``[1, 2]`` all work)."""
    if "=" not in text:
        raise ConfigError([f"override {text!r} is not key=value"])
    k, v = text.split("=", 1)
    return k.strip(), yaml.safe_load(v)


def build(values: dict) -> tuple[dict, list[str]]:
    """Merge ``values`` over the defaults; returns ``(config, errors)``. Nothing is computed."""
    errors = []
    cfg = {k: (list(s.default) if isinstance(s.default, list) else s.default) for k, s in SCHEMA.items()}
    for k, v in values.items():
        if k not in SCHEMA:
            errors.append(f"{k}: unknown key")
            continue
        cfg[k] = _coerce(k, v, errors)
    errors.extend(check(cfg))
    return cfg, errors


def _n_bins(T: float, dt: float):
    if dt <= 0 or T <= 0:
        return None
    n = T / dt
    r = round(n)
    return r if r >= 1 and abs(n - r) <= 1e-9 * max(1.0, n) else None


def _grid_errors(T, dt, N_T, label="grid"):
    if N_T is not None:
        if N_T < 1:
            return [f"{label}: grid empty (N_T={N_T})"]
        if T <= 0:
            return [f"{label}: T must be positive"]
        return []
    if T <= 0:
        return [f"{label}: T must be positive"]
    if dt <= 0:
        return [f"{label}: dt must be positive"]
    if dt > T * (1 + 1e-9):
        return [f"{label}: grid empty (dt={dt} > T={T})"]
    if _n_bins(T, dt) is None:
        return [f"{label}: T={T} is not a whole number of steps dt={dt}"]
    return []


def n_steps(cfg: dict, T: float | None = None) -> int:
    T = cfg["grid.T"] if T is None else T
    if cfg["grid.N_T"] is not None and T == cfg["grid.T"]:
        return cfg["grid.N_T"]
    return _n_bins(T, cfg["grid.dt"])


def check(cfg: dict) -> list[str]:
    """Every violation in an assembled config (bounds, grid divisibility, caps)."""
    e = []
    m = cfg["method"]
    if m not in METHODS:
        e.append(f"method: {m!r} is not one of {', '.join(METHODS)}")
    if not isinstance(cfg["seed"], int) or not 0 <= cfg["seed"] < 2 ** 64:
        e.append("seed: must be an integer in [0, 2^64)")
    if cfg["workers"] < 1:
        e.append("workers: must be >= 1")
    if not 1 <= cfg["system.L"] <= MAX_SITES:
        e.append(f"system.L: must lie in [1, {MAX_SITES}]")
    for key in ("fields.initial", "fields.target"):
        if abs(cfg[key]) > H_MAX:
            e.append(f"{key}: |h| = {abs(cfg[key])} exceeds the bound {H_MAX}")
    if m not in ("variational", "compare") and not (m == "qscan" and cfg["qscan.axis"] == "T"):
        e.extend(_grid_errors(cfg["grid.T"], cfg["grid.dt"], cfg["grid.N_T"]))
    positive = ["sd.restarts", "sd.flip_order", "rl.episodes", "rl.seeds", "rl.n_tilings", "rl.n_tiles",
                "rl.phase_length", "grape.restarts", "grape.max_iters", "crab.N_c", "crab.restarts",
                "qscan.ensemble", "attractors.restarts", "dos.cap"]
    for key in positive:
        if cfg[key] < 1:
            e.append(f"{key}: must be >= 1")
    if cfg["sd.max_evals"] is not None and cfg["sd.max_evals"] < 1:
        e.append("sd.max_evals: budget must be positive")
    if cfg["rl.actions"] not in ("bang_bang", "quasi_continuous"):
        e.append("rl.actions: must be bang_bang or quasi_continuous")
    if not 0 < cfg["rl.alpha"] <= 1:
        e.append("rl.alpha: must lie in (0, 1]")
    if not 0 <= cfg["rl.trace_decay"] <= 1:
        e.append("rl.trace_decay: must lie in [0, 1]")
    if not 0 <= cfg["rl.beta_start"] <= cfg["rl.beta_end"]:
        e.append("rl.beta_start/beta_end: need 0 <= beta_start <= beta_end")
    if cfg["grape.eps0"] <= 0:
        e.append("grape.eps0: must be positive")
    if cfg["variational.dims"] not in (1, 2):
        e.append("variational.dims: must be 1 or 2")
    if cfg["variational.tau_resolution"] <= 0 or cfg["variational.T_step"] <= 0:
        e.append("variational: tau_resolution and T_step must be positive")
    if not 0 < cfg["variational.T_min"] < cfg["variational.T_max"]:
        e.append("variational: need 0 < T_min < T_max")
    if not 0 < cfg["dos.bin_width"] <= 1:
        e.append("dos.bin_width: must lie in (0, 1]")
    if any(not isinstance(k, int) or k < 1 for k in cfg["dos.k_flips"]):
        e.append("dos.k_flips: entries must be positive integers")
    if cfg["dos.cap"] > DOS_CAP:
        e.append(f"dos.cap: may not exceed {DOS_CAP}")
    if m == "dos" and not any("grid" in x for x in e):
        N = n_steps(cfg)
        if N is not None and N > cfg["dos.cap"]:
            e.append(f"dos: N_T={N} exceeds the enumeration cap {cfg['dos.cap']}")
    if m in ("sd", "attractors") and cfg["sd.symmetric"] and not any("grid" in x for x in e):
        if n_steps(cfg) % 2:
            e.append("sd.symmetric: needs an even number of bins")
    if m == "compare" and cfg["sd.symmetric"]:
        for T in cfg["compare.T_values"]:
            N = _n_bins(float(T), cfg["grid.dt"])
            if N is not None and N % 2:
                e.append(f"sd.symmetric: T={T} gives an odd number of bins")
    if m == "dos" and cfg["system.L"] > 8:
        e.append("dos: system.L above 8 is out of scope for exhaustive enumeration")
    if not 0 <= cfg["attractors.min_population"] <= 1 or not 0 < cfg["attractors.threshold"] <= 1:
        e.append("attractors: threshold in (0, 1], min_population in [0, 1]")
    if cfg["attractors.grape_restarts"] < 0:
        e.append("attractors.grape_restarts: must be >= 0")
    if cfg["qscan.axis"] not in ("T", "dt", "L"):
        e.append("qscan.axis: must be T, dt or L")
    else:
        e.extend(_sweep_errors(cfg) if m == "qscan" else [])
    if m == "compare":
        for T in cfg["compare.T_values"]:
            e.extend(_grid_errors(float(T), cfg["grid.dt"], None, f"compare.T_values[{T}]"))
    return e


def _sweep_errors(cfg):
    vals = cfg["qscan.values"]
    e = []
    if not vals:
        return ["qscan.values: sweep has no points"]
    if any(not isinstance(v, (int, float)) or isinstance(v, bool) for v in vals):
        return ["qscan.values: entries must be numbers"]
    d = [b - a for a, b in zip(vals, vals[1:])]
    if d and not (all(x > 0 for x in d) or all(x < 0 for x in d)):
        e.append("qscan.values: must be strictly monotone")
    if cfg["qscan.ensemble"] < 2:
        e.append("qscan.ensemble: need at least 2 restarts to form q")
    axis = cfg["qscan.axis"]
    if cfg["qscan.symmetric"] and axis != "L":
        for v in vals:
            T = float(v) if axis == "T" else cfg["grid.T"]
            N = cfg["grid.N_T"] if (axis == "T" and cfg["grid.N_T"] is not None) else _n_bins(
                T, cfg["grid.dt"] if axis == "T" else float(v))
            if N is not None and N % 2:
                e.append(f"qscan.values[{v}]: symmetric descent needs an even number of bins")
    for v in vals:
        if axis == "T":
            if cfg["grid.N_T"] is None:
                e.extend(_grid_errors(float(v), cfg["grid.dt"], None, f"qscan.values[{v}]"))
        elif axis == "dt":
            e.extend(_grid_errors(cfg["grid.T"], float(v), None, f"qscan.values[{v}]"))
        elif not (isinstance(v, int) or float(v).is_integer()) or not 1 <= v <= MAX_SITES:
            e.append(f"qscan.values[{v}]: L must be an integer in [1, {MAX_SITES}]")
    return e


def validate(values: dict) -> list[str]:
    """Empty list when ``values`` (flat keys) form a runnable config."""
    return build(values)[1]


def schema_table() -> str:
    width = max(map(len, SCHEMA))
    return "\n".join(f"{k:<{width}}  {json.dumps(s.default):<12}  {s.doc}" for k, s in SCHEMA.items())


def is_finite_number(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)
