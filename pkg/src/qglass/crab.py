"""CRAB: a randomized truncated Fourier ansatz optimized by Nelder-Mead."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from qglass import rng
from qglass.problem import as_problem
from qglass.protocols import H_MAX, Protocol, TimeGrid
from qglass.results import OptimizationResult

NM_FATOL = 1e-8
NM_MAXITER = 5000


@dataclass(frozen=True)
class CrabAnsatz:
    """``h(t) = h0(t) (1 + sin^2(pi t / T) sum_i [A_i cos(w_i t) + B_i sin(w_i t)])``, with ``h0`` the linear ramp."""

    A: np.ndarray
    B: np.ndarray
    omega: np.ndarray
    T: float
    h_i: float = -2.0
    h_f: float = 2.0

    @property
    def N_c(self) -> int:
        return len(self.A)

    def ramp(self, t):
        return self.h_i + (self.h_f - self.h_i) * np.asarray(t) / self.T

    def field(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        wt = np.multiply.outer(t, self.omega)
        series = np.cos(wt) @ self.A + np.sin(wt) @ self.B
        return self.ramp(t) * (1.0 + np.sin(np.pi * t / self.T) ** 2 * series)


def principal_frequencies(N_c: int, T: float, offsets) -> np.ndarray:
    """``w_i = (2 pi i / T)(1 + r_i)`` for ``i = 1..N_c``."""
    i = np.arange(1, N_c + 1)
    return 2 * np.pi * i / T * (1.0 + np.asarray(offsets))


def crab_values(ansatz: CrabAnsatz, grid: TimeGrid) -> np.ndarray:
    """Unclipped field at the bin midpoints."""
    return ansatz.field(grid.midpoints())


def crab_protocol(ansatz: CrabAnsatz, grid: TimeGrid) -> Protocol:
    """The ansatz sampled at bin midpoints and clipped to the allowed range."""
    return Protocol(grid, np.clip(crab_values(ansatz, grid), -H_MAX, H_MAX))


def penalty(values, grid: TimeGrid) -> float:
    """``(1 / 16T) * integral of h^2``, on the unclipped samples."""
    return float(np.sum(np.asarray(values) ** 2) * grid.dt / (16.0 * grid.T))


@dataclass
class CrabCost:
    fidelity: float
    penalty: float

    @property
    def total(self) -> float:
        return (1.0 - self.fidelity) + self.penalty


def evaluate(problem, ansatz: CrabAnsatz, grid: TimeGrid) -> CrabCost:
    raw = crab_values(ansatz, grid)
    f = problem.fidelity_values(np.clip(raw, -H_MAX, H_MAX), grid.dt)
    return CrabCost(f, penalty(raw, grid))


@dataclass(frozen=True)
class CrabConfig:
    N_c: int = 10
    restarts: int = 10
    amplitude_range: float = 10.0
    offset_range: float = 0.5
    optimize_frequencies: bool = False
    max_iters: int = NM_MAXITER
    fatol: float = NM_FATOL
    max_reinits: int = 5


def _unpack(x, N_c, omega, T, optimize_frequencies):
    A, B = x[:N_c], x[N_c:2 * N_c]
    if optimize_frequencies:
        omega = principal_frequencies(N_c, T, x[2 * N_c:])
    return A, B, omega


def _degenerate(simplex: np.ndarray) -> bool:
    edges = simplex[1:] - simplex[0]
    return np.linalg.matrix_rank(edges, tol=1e-12 * max(1.0, np.abs(simplex).max())) < edges.shape[1]


def _run_restart(problem, grid, config: CrabConfig, gen):
    N_c, T = config.N_c, grid.T
    offsets = gen.uniform(-config.offset_range, config.offset_range, N_c)
    omega = principal_frequencies(N_c, T, offsets)
    x0 = gen.uniform(-config.amplitude_range, config.amplitude_range, 2 * N_c)
    if config.optimize_frequencies:
        x0 = np.concatenate([x0, offsets])

    def ansatz_of(x):
        A, B, om = _unpack(x, N_c, omega, T, config.optimize_frequencies)
        return CrabAnsatz(A, B, om, T)

    best_vertex = []

    def cost(x):
        return evaluate(problem, ansatz_of(x), grid).total

    def record(intermediate_result):
        best_vertex.append(float(intermediate_result.fun))

    # rho=1, chi=2, psi=0.5, sigma=0.5 (scipy's non-adaptive coefficients); stop on cost spread only
    res = minimize(cost, x0, method="Nelder-Mead", callback=record,
                   options={"maxiter": config.max_iters, "maxfev": 10 ** 9, "xatol": np.inf,
                            "fatol": config.fatol, "adaptive": False, "return_all": False})
    ansatz = ansatz_of(res.x)
    final = evaluate(problem, ansatz, grid)
    degenerate = (not res.success) and res.nit < config.max_iters and _degenerate(res.final_simplex[0])
    return ansatz, final, res, np.array(best_vertex), degenerate


def crab_optimize(system, grid: TimeGrid, N_c: int = 10, restarts: int = 10, seed: int = 0,
                  config: CrabConfig | None = None) -> OptimizationResult:
    """Best-fidelity restart of CRAB.

    Each restart draws fresh frequency offsets and amplitudes and minimizes
    ``(1 - F) + penalty`` over the amplitudes (and the offsets too when
    ``optimize_frequencies`` is set). A restart whose simplex collapses is
    redrawn.
    """
    problem = as_problem(system)
    config = replace(config or CrabConfig(), N_c=N_c, restarts=restarts)
    rows, results = [], []
    total_evals = 0
    for r in range(config.restarts):
        gen = rng.stream(seed, "crab", r)
        for _ in range(config.max_reinits + 1):
            ansatz, final, res, trace, degenerate = _run_restart(problem, grid, config, gen)
            total_evals += res.nfev
            if not degenerate:
                break
        rows.append({"restart_id": r, "N_c": config.N_c, "final_cost": final.total,
                     "final_fidelity": final.fidelity, "penalty": final.penalty})
        results.append((final.fidelity, r, ansatz, trace, final))
    best_f, best_r, ansatz, trace, final = max(results, key=lambda x: (x[0], -x[1]))
    return OptimizationResult(
        protocol=crab_protocol(ansatz, grid),
        fidelity=float(best_f),
        trace=trace,
        n_evals=total_evals,
        seed=seed,
        info={"restarts": rows, "best_restart": best_r, "ansatz": ansatz, "cost": final.total,
              "penalty": final.penalty},
    )


def write_restart_csv(result: OptimizationResult, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["restart_id", "N_c", "final_cost", "final_fidelity", "penalty"])
        for row in result.info["restarts"]:
            w.writerow([row["restart_id"], row["N_c"], repr(float(row["final_cost"])),
                        repr(float(row["final_fidelity"])), repr(float(row["penalty"]))])
    return path
