"""Stochastic descent over bang-bang protocols."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from qglass import kernels, rng
from qglass.landscape import bits_to_index
from qglass.problem import as_problem
from qglass.protocols import Protocol, TimeGrid
from qglass.results import OptimizationResult, write_csv


@dataclass(frozen=True)
class SDConfig:
    max_evals: int | None = None  # None -> 20 * N_T
    flip_order: int = 1
    restarts: int = 1
    symmetric: bool = False  # search only protocols with h(t) = -h(T - t)

    def __post_init__(self):
        if self.max_evals is not None and self.max_evals <= 0:
            raise ValueError("max_evals must be positive")
        if self.flip_order < 1:
            raise ValueError("flip_order must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")

    def check_grid(self, grid: TimeGrid):
        if self.symmetric and grid.N_T % 2:
            raise ValueError("symmetric descent needs an even number of bins")

    def budget(self, grid: TimeGrid) -> int:
        return self.max_evals if self.max_evals is not None else 20 * grid.N_T


def descend(system, grid: TimeGrid, config: SDConfig = SDConfig(), seed: int = 0,
            initial_bits=None) -> OptimizationResult:
    """One stochastic-descent run from a uniformly random bang-bang protocol.

    A proposal flips one bin (or ``flip_order`` bins) and is kept only if the
    fidelity strictly increases. Single-flip runs stop once every bin has been
    tried without improvement since the last accepted flip, which certifies a
    1-flip local maximum, or when the evaluation budget runs out. With
    ``config.symmetric`` the search runs over time-reversal-symmetric protocols
    and a move flips a bin together with its mirror image.
    """
    problem = as_problem(system)
    config.check_grid(grid)
    gen = rng.stream(seed, "sd")
    N = grid.N_T
    n_free = N // 2 if config.symmetric else N
    bits = gen.integers(0, 2, n_free).astype(np.int8)
    if initial_bits is not None:
        bits = np.array(initial_bits, dtype=np.int8)
        if config.symmetric:
            if not np.array_equal(bits, mirror_bits(bits)):
                raise ValueError("initial protocol is not time-reversal symmetric")
            bits = bits[:n_free].copy()
    budget = config.budget(grid)
    props = problem.bang_bang_propagators(grid)
    if config.flip_order == 1 and not config.symmetric:
        uniforms = gen.random(budget)
        n_evals, certified, trace = kernels.sd_bang_bang(
            props, problem.psi_i, problem.psi_star, bits, uniforms, budget)
    else:
        expand = _symmetric_full if config.symmetric else (lambda b: b)
        n_evals, certified, trace = _descend_generic(props, problem, bits, expand,
                                                     config.flip_order, budget, gen)
        bits = expand(bits)
    trace = np.minimum(trace, 1.0)  # |amp|^2 can exceed 1 by rounding
    protocol = Protocol.from_bits(grid, bits)
    return OptimizationResult(
        protocol=protocol,
        fidelity=float(trace[-1]),
        trace=trace,
        n_evals=int(n_evals),
        seed=seed,
        info={"certified": bool(certified), "flip_order": config.flip_order,
              "symmetric": config.symmetric},
    )


def mirror_bits(bits) -> np.ndarray:
    """Bits of the time-reversed protocol ``h(t) -> -h(T - t)``."""
    return (1 - np.asarray(bits)[::-1]).astype(np.int8)


def _symmetric_full(half):
    return np.concatenate([half, 1 - half[::-1]]).astype(np.int8)


def _descend_generic(props, problem, bits, expand, k, budget, gen):
    """Descent over the free bits ``bits`` (edited in place); ``expand`` maps them to a full protocol.

    With ``k == 1`` proposals come from a without-replacement pool exactly as in
    the compiled single-flip kernel, so an exhausted pool certifies a local
    maximum. Larger ``k`` draws random ``k``-subsets and gives up after
    ``k * len(bits)`` consecutive rejections, without a certificate.
    """
    n = bits.size
    k = min(k, n)

    def fid(b):
        amp = np.vdot(problem.psi_star, kernels.chain_apply(props, expand(b).astype(np.intp), problem.psi_i))
        return amp.real ** 2 + amp.imag ** 2

    f = fid(bits)
    trace = [f]
    if k == 1:
        pool = np.arange(n)
        remaining = n
        while len(trace) < budget and remaining > 0:
            j = min(int(gen.random() * remaining), remaining - 1)
            m = pool[j]
            pool[j], pool[remaining - 1] = pool[remaining - 1], m
            remaining -= 1
            bits[m] ^= 1
            f_new = fid(bits)
            if f_new > f:
                f = f_new
                pool[remaining], pool[n - 1] = pool[n - 1], m
                remaining = n - 1
            else:
                bits[m] ^= 1
            trace.append(f)
        return len(trace), remaining == 0, np.array(trace)

    rejections = 0
    while len(trace) < budget and rejections < k * n:
        sel = gen.choice(n, size=k, replace=False)
        bits[sel] ^= 1
        f_new = fid(bits)
        if f_new > f:
            f = f_new
            rejections = 0
        else:
            bits[sel] ^= 1
            rejections += 1
        trace.append(f)
    return len(trace), False, np.array(trace)


def _one(args):
    problem, grid, config, seed, r = args
    res = descend(problem, grid, config, rng.derive_seed(seed, "sd-restart", r))
    res.info["restart_id"] = r
    return res


def ensemble_descend(system, grid: TimeGrid, config: SDConfig = SDConfig(), seed: int = 0,
                     workers: int = 1) -> list[OptimizationResult]:
    """``config.restarts`` independent descents; results are ordered by restart id."""
    problem = as_problem(system)
    jobs = [(problem, grid, config, seed, r) for r in range(config.restarts)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [_one(j) for j in jobs]


def mean_evals_per_bin(results) -> float:
    return float(np.mean([r.n_evals for r in results]) / results[0].grid.N_T)


def protocol_matrix(results) -> np.ndarray:
    grids = {r.grid for r in results}
    if len(grids) != 1:
        raise ValueError("results live on different grids")
    return np.stack([r.protocol.values for r in results])


def write_trace_csv(results, path):
    """Long table ``(restart_id, eval_index, fidelity)``: the best fidelity after each evaluation."""
    rows = ((r.info.get("restart_id", i), e, f)
            for i, r in enumerate(results) for e, f in enumerate(r.trace))
    return write_csv(path, ["restart_id", "eval_index", "fidelity"], rows)


def write_summary_csv(results, path):
    rows = [(r.info.get("restart_id", i), r.seed, r.fidelity, r.n_evals, r.n_evals / r.grid.N_T,
             r.info["certified"], format(bits_to_index(r.protocol.bits()), "x"))
            for i, r in enumerate(results)]
    return write_csv(path, ["restart_id", "seed", "fidelity", "n_evals", "evals_per_bin", "certified",
                            "protocol_hex"], rows)
