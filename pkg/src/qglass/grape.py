"""Gradient ascent (GRAPE) on quasi-continuous protocols."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from qglass import rng
from qglass.problem import ControlProblem, as_problem
from qglass.protocols import H_MAX, Protocol, TimeGrid
from qglass.results import OptimizationResult, write_csv


@dataclass(frozen=True)
class GrapeConfig:
    max_iters: int = 10_000
    eps0: float = 1.0
    tolerance: float = 1e-10
    restarts: int = 1
    max_halvings: int = 60
    audit: bool = False  # finite-difference check of every accepted gradient

    def __post_init__(self):
        if not self.eps0 > 0:
            raise ValueError("eps0 must be positive")
        if self.max_iters < 1 or self.restarts < 1:
            raise ValueError("max_iters and restarts must be positive")


class _Point:
    """Fidelity at one protocol, with the gradient computed on demand.

    Every bin is diagonalized once (batched); forward states come for free
    with the fidelity and the gradient needs one backward sweep.
    """

    def __init__(self, problem, values, dt, psi_i=None, psi_star=None):
        psi_i = problem.psi_i if psi_i is None else psi_i
        psi_star = problem.psi_star if psi_star is None else psi_star
        self.values = np.asarray(values, dtype=float)
        self.dt = dt
        self.psi_star = psi_star
        self.X = problem.control_operator
        H = np.diag(problem.h0_diagonal)[None, :, :] + self.values[:, None, None] * self.X[None]
        self.E, self.V = np.linalg.eigh(H)
        self.Vh = np.conj(np.swapaxes(self.V, 1, 2))
        self.phases = np.exp(-1j * self.E * dt)
        N, d = self.values.size, psi_i.size
        # eigenbasis components of the state entering each bin
        self.b = np.empty((N, d), dtype=complex)
        psi = np.asarray(psi_i, dtype=complex)
        for n in range(N):
            self.b[n] = self.Vh[n] @ psi
            psi = self.V[n] @ (self.phases[n] * self.b[n])
        self.amp = np.vdot(psi_star, psi)
        self.fidelity = min(float(self.amp.real ** 2 + self.amp.imag ** 2), 1.0)
        self._grad = None

    def gradient(self) -> np.ndarray:
        if self._grad is not None:
            return self._grad
        N = self.values.size
        a = np.empty_like(self.b)
        chi = np.asarray(self.psi_star, dtype=complex)
        for n in range(N - 1, -1, -1):
            a[n] = self.Vh[n] @ chi
            chi = self.V[n] @ (self.phases[n].conj() * a[n])
        E = self.E
        half = np.exp(-0.5j * E * self.dt)
        # divided differences of exp(-i E dt), written via sinc to stay finite at E_j = E_k
        gamma = ((-1j * self.dt) * half[:, :, None] * half[:, None, :]
                 * np.sinc((E[:, :, None] - E[:, None, :]) * self.dt / (2 * np.pi)))
        Xe = self.Vh @ self.X @ self.V
        dA = np.einsum("nj,njk,nk->n", a.conj(), gamma * Xe, self.b)
        self._grad = 2.0 * (np.conj(self.amp) * dA).real
        return self._grad


def fidelity_gradient(system, protocol, psi_i=None, psi_star=None) -> np.ndarray:
    """Exact ``dF/dh_n`` for every bin ``n`` of a piecewise-constant protocol.

    The derivative of each one-bin propagator is taken in closed form from the
    bin's eigendecomposition, so the result is exact for any ``dt``; for small
    ``dt`` it reduces to ``2 Im<phi(t)|X|psi(t)> dt``.
    States passed explicitly must be given in the problem's working basis.
    """
    problem = as_problem(system)
    return _Point(problem, protocol.values, protocol.grid.dt, psi_i, psi_star).gradient()


def fidelity_and_gradient(problem: ControlProblem, values, dt):
    p = _Point(problem, values, dt)
    return p.fidelity, p.gradient()


def finite_difference_gradient(problem: ControlProblem, values, dt, step: float = 1e-5) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    out = np.empty(values.size)
    for n in range(values.size):
        up, dn = values.copy(), values.copy()
        up[n] += step
        dn[n] -= step
        out[n] = (problem.fidelity_values(up, dt) - problem.fidelity_values(dn, dt)) / (2 * step)
    return out


def ascend(system, grid: TimeGrid, config: GrapeConfig = GrapeConfig(), seed: int = 0,
           initial_values=None) -> OptimizationResult:
    """Projected gradient ascent with step ``eps0 / sqrt(iteration)``.

    Steps follow the functional derivative ``dF/dh(t)``, i.e. the per-bin
    gradient divided by ``dt``, so ``eps0`` means the same thing on every grid.
    A step that lowers the fidelity is retried at half the size, and the
    halving carries over to later iterations. The run stops when an accepted
    step changes the fidelity by less than ``tolerance``, when the projected
    step vanishes, or after ``max_iters`` iterations.
    """
    problem = as_problem(system)
    gen = rng.stream(seed, "grape")
    h = gen.uniform(-H_MAX, H_MAX, grid.N_T) if initial_values is None else np.array(initial_values, dtype=float)
    point = _Point(problem, h, grid.dt)
    trace, steps, norms = [point.fidelity], [0.0], [0.0]
    n_evals = 1
    scale = 1.0
    stop = "max_iters"
    for it in range(1, config.max_iters + 1):
        g = point.gradient() / grid.dt  # functional derivative dF/dh(t)
        gnorm = float(np.linalg.norm(g))
        if config.audit:
            fd = finite_difference_gradient(problem, point.values, grid.dt) / grid.dt
            err = np.linalg.norm(fd - g) / max(gnorm, 1e-300)
            if gnorm > 1e-8 and err > 1e-6:
                raise AssertionError(f"gradient audit failed at iteration {it}: relative error {err:.2e}")
        accepted = None
        for _ in range(config.max_halvings + 1):
            eps = scale * config.eps0 / np.sqrt(it)
            trial_values = np.clip(point.values + eps * g, -H_MAX, H_MAX)
            if np.array_equal(trial_values, point.values):
                break
            trial = _Point(problem, trial_values, grid.dt)
            n_evals += 1
            if trial.fidelity >= point.fidelity:
                accepted = trial
                break
            scale *= 0.5
        if accepted is None:
            stop = "stalled"
            break
        gain = accepted.fidelity - point.fidelity
        point = accepted
        trace.append(point.fidelity)
        steps.append(eps)
        norms.append(gnorm)
        if gain < config.tolerance:
            stop = "tolerance"
            break
    return OptimizationResult(
        protocol=Protocol(grid, point.values),
        fidelity=point.fidelity,
        trace=np.array(trace),
        n_evals=n_evals,
        seed=seed,
        info={"step_size": np.array(steps), "grad_norm": np.array(norms), "stop": stop},
    )


def _one(args):
    problem, grid, config, seed, r = args
    res = ascend(problem, grid, config, rng.derive_seed(seed, "grape-restart", r))
    res.info["restart_id"] = r
    return res


def ensemble_ascend(system, grid: TimeGrid, config: GrapeConfig = GrapeConfig(), seed: int = 0,
                    workers: int = 1) -> list[OptimizationResult]:
    problem = as_problem(system)
    jobs = [(problem, grid, config, seed, r) for r in range(config.restarts)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(_one, jobs))
    return [_one(j) for j in jobs]


def write_trace_csv(results, path):
    """``(restart_id, iter, fidelity, step_size, grad_norm)``; iteration 0 is the random start."""
    rows = []
    for i, r in enumerate(results):
        rid = r.info.get("restart_id", i)
        for it, (f, s, g) in enumerate(zip(r.trace, r.info["step_size"], r.info["grad_norm"])):
            rows.append((rid, it, f, s, g))
    return write_csv(path, ["restart_id", "iter", "fidelity", "step_size", "grad_norm"], rows)
