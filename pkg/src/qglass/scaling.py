"""Parameter sweeps of the SD landscape: q(T), fidelity, effort and entanglement versus T, dt or L."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from qglass import rng
from qglass.landscape import order_parameter
from qglass.problem import make_problem
from qglass.protocols import TimeGrid
from qglass.quantum import entanglement_entropy_half
from qglass.sd import SDConfig, ensemble_descend

AXES = ("T", "dt", "L")


@dataclass(frozen=True)
class SweepSpec:
    """One sweep axis plus fixed parameters.

    ``fixed`` may hold ``T``, ``dt``, ``N_T`` (alternative to ``dt``), ``L`` and
    ``h_z``; the axis value overrides the matching fixed entry.
    """

    axis: str
    values: tuple
    fixed: dict = field(default_factory=dict)
    ensemble: int = 100
    symmetric: bool = True
    max_evals: int | None = None

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")
        vals = np.asarray(self.values, dtype=float)
        if vals.size == 0:
            raise ValueError("sweep has no points")
        d = np.diff(vals)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("sweep values must be strictly monotone")
        if self.ensemble < 2:
            raise ValueError("ensemble size must be at least 2")
        object.__setattr__(self, "values", tuple(self.values))

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), default=float)
        return hashlib.sha256(blob.encode()).hexdigest()

    def point(self, value) -> dict:
        p = {"L": 1, "h_z": 1.0, **self.fixed}
        p[self.axis] = value
        if self.axis == "dt":
            p.pop("N_T", None)
        return p


def _grid(p: dict) -> TimeGrid:
    if "N_T" in p and "dt" not in p:
        return TimeGrid(float(p["T"]), int(p["N_T"]))
    return TimeGrid.from_dt(float(p["T"]), float(p["dt"]))


def max_half_chain_entropy(problem, protocol) -> float:
    L = problem.system.L
    if L < 2 or L % 2:
        return float("nan")
    states = problem.lift(problem.trajectory(protocol.values, protocol.grid.dt))
    return max(entanglement_entropy_half(s, L) for s in states)


def _jackknife_q(h: np.ndarray) -> float:
    n = h.shape[0]
    if n < 3:
        return float("nan")
    reps = np.array([order_parameter(np.delete(h, i, axis=0)) for i in range(n)])
    return float(np.sqrt((n - 1) / n * np.sum((reps - reps.mean()) ** 2)))


def run_point(spec: SweepSpec, index: int, seed: int):
    p = spec.point(spec.values[index])
    grid = _grid(p)
    problem = make_problem(int(p["L"]), float(p["h_z"]))
    config = SDConfig(max_evals=spec.max_evals, restarts=spec.ensemble, symmetric=spec.symmetric)
    point_seed = rng.derive_seed(seed, spec.digest(), index)
    results = ensemble_descend(problem, grid, config, seed=point_seed)
    h = np.stack([r.protocol.values for r in results])
    fids = np.array([r.fidelity for r in results])
    evals = np.array([r.n_evals for r in results]) / grid.N_T
    best = results[int(np.argmax(fids))]
    L = int(p["L"])
    summary = {
        "axis": spec.axis,
        "value": spec.values[index],
        "T": grid.T,
        "dt": grid.dt,
        "N_T": grid.N_T,
        "L": L,
        "q": order_parameter(h),
        "q_stderr": _jackknife_q(h),
        "evals_per_bin": float(evals.mean()),
        "evals_per_bin_stderr": float(evals.std(ddof=1) / math.sqrt(evals.size)),
        "best_fidelity": float(fids.max()),
        "neg_log_f_per_site": float(-math.log(fids.max()) / L) if fids.max() > 0 else float("inf"),
        "max_entropy_half_chain": max_half_chain_entropy(problem, best.protocol),
    }
    replicates = [{"point": index, "value": spec.values[index], "T": grid.T, "dt": grid.dt, "L": L,
                   "replicate": i, "fidelity": float(r.fidelity), "n_evals": int(r.n_evals),
                   "certified": bool(r.info["certified"])} for i, r in enumerate(results)]
    return summary, replicates


def run_q_scan(spec: SweepSpec, seed: int = 0):
    """Run every sweep point; returns ``(summary_rows, replicate_rows)``.

    The entropy column is the largest half-chain entanglement entropy reached
    along the best protocol's evolution (``nan`` for odd ``L``).
    """
    summaries, reps = [], []
    for i in range(len(spec.values)):
        s, r = run_point(spec, i, seed)
        summaries.append(s)
        reps.extend(r)
    return summaries, reps


def write_rows(rows, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        if not rows:
            return path
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in row.items()})
    return path
