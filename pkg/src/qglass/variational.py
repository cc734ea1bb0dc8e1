"""Grid-free evaluation of the few-pulse variational protocols and their phase diagram.

The free-precession segment has ``h_x = 0``, where ``H0`` is diagonal. With
``a`` the state after the opening pulses and ``c`` the target pulled back
through the closing pulses, the fidelity is

    F = |sum_k conj(c_k) a_k exp(-i E_k (T - tau1 - tau2))|^2,

so a table of ``conj(c) a exp(i E s)`` over a (tau1, tau2) grid gives the
fidelity at any ``T`` from a single matrix-vector product.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from qglass.protocols import H_MAX
from qglass.quantum import SpinChain, ground_state
from qglass.results import write_csv

GOLDEN = (math.sqrt(5) - 1) / 2
TABLE_MAX_BYTES = 1 << 30
UNIT_TOL = 1e-9


def _apply(system: SpinChain, h: float, durations, states) -> np.ndarray:
    """Row-wise ``exp(-i H(h) d_m) states[m]``."""
    E, V = system.eig(h)
    d = np.asarray(durations, dtype=float)
    coeff = np.asarray(states) @ V.conj()
    return (coeff * np.exp(-1j * np.multiply.outer(d, E))) @ V.T


def default_states(system: SpinChain, h_i: float = -2.0, h_f: float = 2.0):
    return ground_state(system, h_i), ground_state(system, h_f)


def _pieces(system, tau1, tau2, psi_i, psi_star):
    """Open/close vectors for arrays of (tau1, tau2); returns conj(c) * a, shape (M, dim)."""
    tau1 = np.atleast_1d(np.asarray(tau1, dtype=float))
    tau2 = np.broadcast_to(np.asarray(tau2, dtype=float), tau1.shape)
    M = tau1.size
    a = _apply(system, H_MAX, tau1 / 2, np.broadcast_to(psi_i, (M, system.dim)))
    a = _apply(system, -H_MAX, tau2 / 2, a)
    # U^dagger(h, d) = U(h, -d)
    c = _apply(system, -H_MAX, -tau1 / 2, np.broadcast_to(psi_star, (M, system.dim)))
    c = _apply(system, H_MAX, -tau2 / 2, c)
    return c.conj() * a


def _phase_energies(system: SpinChain) -> np.ndarray:
    return system.h0_diagonal


def variational_fidelity_2d(system: SpinChain, tau1, tau2, T, psi_i=None, psi_star=None):
    """Fidelity of the five-pulse protocol (+4, -4, 0, +4, -4), exact in time.

    Accepts scalars or broadcastable arrays of ``tau1``/``tau2``.
    """
    if psi_i is None:
        psi_i, psi_star = default_states(system)
    tau1 = np.asarray(tau1, dtype=float)
    tau2 = np.asarray(tau2, dtype=float)
    shape = np.broadcast(tau1, tau2).shape
    t1, t2 = np.broadcast_to(tau1, shape).ravel(), np.broadcast_to(tau2, shape).ravel()
    free = T - t1 - t2
    if np.any(t1 < 0) or np.any(t2 < 0) or np.any(free < -1e-12):
        raise ValueError("need tau1, tau2 >= 0 and tau1 + tau2 <= T")
    P = _pieces(system, t1, t2, psi_i, psi_star)
    amp = np.sum(P * np.exp(-1j * np.multiply.outer(np.maximum(free, 0.0), _phase_energies(system))), axis=1)
    F = np.abs(amp) ** 2
    return float(F[0]) if shape == () else F.reshape(shape)


def variational_fidelity_1d(system: SpinChain, tau1, T, psi_i=None, psi_star=None):
    return variational_fidelity_2d(system, tau1, 0.0, T, psi_i, psi_star)


def printed_order_fidelity_2d(system: SpinChain, tau1, tau2, T, psi_i=None, psi_star=None) -> float:
    """The five-factor product evaluated literally with generators ``-H(+-h_max)``.

    Every factor is ``exp(+i H t)``; with real initial and target states this
    equals the complex conjugate of the forward evolution, so the fidelity is
    the same as :func:`variational_fidelity_2d`. Kept as a cross-check.
    """
    if psi_i is None:
        psi_i, psi_star = default_states(system)

    def U(h, d):  # exp(-i d (-H(h)))
        return system.propagator(h, -d)

    free = T - tau1 - tau2
    # printed right-to-left: (S^z + h S^x) = -H(+h), (S^z - h S^x) = -H(-h)
    ops = [U(H_MAX, tau1 / 2), U(-H_MAX, tau2 / 2), U(0.0, free), U(H_MAX, tau2 / 2), U(-H_MAX, tau1 / 2)]
    psi = np.array(psi_i, dtype=complex)
    for op in ops:
        psi = op @ psi
    return float(abs(np.vdot(psi_star, psi)) ** 2)


def _golden_max(f, lo, hi, tol=1e-10, max_iter=200):
    """Golden-section search for a maximum of ``f`` on ``[lo, hi]`` (endpoints included)."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    best = max([(f(lo), lo), (fc, c), (fd, d), (f(hi), hi)])
    return best[1], best[0]


@dataclass
class VariationalScan:
    T: np.ndarray
    tau1_best: np.ndarray
    tau2_best: np.ndarray
    F_best: np.ndarray
    kinks: list = field(default_factory=list)
    kink_flags: np.ndarray = None
    plateau_flags: np.ndarray = None
    dims: int = 1
    tau_resolution: float = 1e-3

    def rows(self):
        for i, T in enumerate(self.T):
            yield {
                "T": float(T),
                "tau1_best": float(self.tau1_best[i]),
                "tau2_best": float(self.tau2_best[i]),
                "F_best": float(self.F_best[i]),
                "kink_flag": int(self.kink_flags[i]),
            }


def detect_kinks(T, tau, factor=10.0, window=41, floor=None):
    """Locate non-analytic points of ``tau(T)`` from jumps in its discrete slope.

    A jump ``|slope[i+1] - slope[i]|`` counts when it exceeds ``factor`` times the
    median jump in a window around it and an absolute ``floor`` (default: a
    slope change of 0.1). Runs of adjacent flags merge into one kink.
    Returns ``(kink_T_values, flags_per_T)``.
    """
    T = np.asarray(T, dtype=float)
    tau = np.asarray(tau, dtype=float)
    flags = np.zeros(T.size, dtype=bool)
    if T.size < 3:
        return [], flags
    slope = np.diff(tau) / np.diff(T)
    jump = np.abs(np.diff(slope))
    if floor is None:
        floor = 0.1
    half = window // 2
    hits = []
    for i, j in enumerate(jump):
        lo, hi = max(0, i - half), min(jump.size, i + half + 1)
        med = np.median(jump[lo:hi])
        if j > factor * med and j > floor:
            hits.append(i)
    kinks = []
    run = []
    for i in hits:
        if run and i > run[-1] + 2:
            kinks.append(run)
            run = []
        run.append(i)
    if run:
        kinks.append(run)
    locs = []
    for run in kinks:
        # jump i sits between slopes i and i+1, i.e. at T[i+1]
        k = max(run, key=lambda i: jump[i]) + 1
        flags[k] = True
        locs.append(float(T[k]))
    return locs, flags


class _Table:
    """Precomputed ``conj(c) a exp(i E s)`` over a tau grid for all scan times."""

    def __init__(self, system, psi_i, psi_star, tau_max, resolution, dims):
        n = int(math.floor(tau_max / resolution + 1e-9)) + 1
        axis = np.arange(n) * resolution
        if dims == 1:
            t1, t2 = axis, np.zeros_like(axis)
        else:
            g1, g2 = np.meshgrid(axis, axis, indexing="ij")
            keep = g1 + g2 <= tau_max + 1e-12
            t1, t2 = g1[keep], g2[keep]
        need = 16 * t1.size * system.dim
        if need > TABLE_MAX_BYTES:
            raise MemoryError(f"variational table needs ~{need / 2**20:.0f} MiB; coarsen tau_resolution")
        self.t1, self.t2 = t1, t2
        self.s = t1 + t2
        E = _phase_energies(system)
        self.E = E
        chunks = []
        step = max(1, 2_000_000 // max(system.dim, 1))
        for k in range(0, t1.size, step):
            P = _pieces(system, t1[k:k + step], t2[k:k + step], psi_i, psi_star)
            chunks.append(P * np.exp(1j * np.multiply.outer(self.s[k:k + step], E)))
        self.Q = np.concatenate(chunks)

    def best(self, T):
        mask = self.s <= T + 1e-12
        amp = self.Q[mask] @ np.exp(-1j * self.E * T)
        F = np.abs(amp) ** 2
        k = int(np.argmax(F))
        idx = np.flatnonzero(mask)[k]
        return self.t1[idx], self.t2[idx], F[k], F


def _refine_1d(system, T, t0, r, psi_i, psi_star):
    def f(t):
        return variational_fidelity_2d(system, t, 0.0, T, psi_i, psi_star)
    return _golden_max(f, max(0.0, t0 - r), min(T, t0 + r))


def _refine_2d(system, T, t1, t2, r, psi_i, psi_star):
    """Local polish of a grid maximum under ``tau1, tau2 >= 0``, ``tau1 + tau2 <= T``."""
    def cost(x):
        x = np.clip(x, 0.0, T)
        if x[0] + x[1] > T:
            x = x * (T / (x[0] + x[1]))
        return -variational_fidelity_2d(system, x[0], x[1], T, psi_i, psi_star)

    x0 = np.array([t1, t2])
    f0 = -cost(x0)
    res = optimize.minimize(
        cost, x0, method="SLSQP",
        bounds=[(0.0, T), (0.0, T)],
        constraints=[{"type": "ineq", "fun": lambda x: T - x[0] - x[1], "jac": lambda x: np.array([-1.0, -1.0])}],
        options={"ftol": 1e-15, "maxiter": 200},
    )
    x = np.clip(res.x, 0.0, T)
    if x[0] + x[1] > T:
        x = x * (T / (x[0] + x[1]))
    F = -cost(x)
    if F < f0:
        return t1, t2, f0
    return float(x[0]), float(x[1]), F


def scan_critical_points(system: SpinChain, T_grid, tau_resolution: float = 1e-3, dims: int = 1,
                         psi_i=None, psi_star=None, kink_factor: float = 10.0,
                         kink_on: str = "tau1") -> VariationalScan:
    """Maximize the variational fidelity at each ``T`` and find kinks of the optimal durations.

    ``kink_on`` selects which optimal duration feeds the kink detector:
    ``"tau1"``, ``"tau2"`` or ``"both"`` (union of the two). Jumps that occur
    after the fidelity has already reached 1 are dropped: there the maximizer
    is degenerate and wanders without marking a transition.
    """
    if psi_i is None:
        psi_i, psi_star = default_states(system)
    T_grid = np.asarray(T_grid, dtype=float)
    if np.any(np.diff(T_grid) <= 0):
        raise ValueError("T grid must be strictly increasing")
    table = _Table(system, psi_i, psi_star, float(T_grid.max()), tau_resolution, dims)
    t1b = np.empty(T_grid.size)
    t2b = np.empty(T_grid.size)
    Fb = np.empty(T_grid.size)
    plateau = np.zeros(T_grid.size, dtype=bool)
    for i, T in enumerate(T_grid):
        g1, g2, gF, Fall = table.best(T)
        if dims == 1:
            t1, F = _refine_1d(system, T, g1, tau_resolution, psi_i, psi_star)
            t2 = 0.0
        else:
            t1, t2, F = _refine_2d(system, T, g1, g2, tau_resolution, psi_i, psi_star)
            # the tau2 = 0 edge is the one-parameter ansatz; never do worse than it
            edge = table.s <= T + 1e-12
            edge &= table.t2 == 0
            k = np.flatnonzero(edge)[np.argmax(Fall[edge[table.s <= T + 1e-12]])]
            e1, eF = _refine_1d(system, T, table.t1[k], tau_resolution, psi_i, psi_star)
            if eF > F:
                t1, t2, F = e1, 0.0, eF
        t1b[i], t2b[i], Fb[i] = t1, t2, F
        # competing maximum far away on the grid: the maximizer is not unique
        mask = table.s <= T + 1e-12
        far = np.hypot(table.t1[mask] - g1, table.t2[mask] - g2) > 10 * tau_resolution
        if np.any(far):
            plateau[i] = np.max(Fall[far]) > gF - 1e-9
    series = {"tau1": [t1b], "tau2": [t2b], "both": [t1b, t2b]}[kink_on]
    flags = np.zeros(T_grid.size, dtype=bool)
    for s in series:
        flags |= detect_kinks(T_grid, s, factor=kink_factor)[1]
    # once F = 1 the maximizer is degenerate and its jumps are not phase boundaries
    for k in np.flatnonzero(flags):
        if k > 0 and Fb[k - 1] > 1 - UNIT_TOL:
            flags[k] = False
    locs = sorted(float(T_grid[k]) for k in np.flatnonzero(flags))
    return VariationalScan(T_grid, t1b, t2b, Fb, locs, flags, plateau, dims, tau_resolution)



def write_scan_csv(scan: VariationalScan, path):
    return write_csv(path, ["T", "tau1_best", "tau2_best", "F_best", "kink_flag"],
                     ([r["T"], r["tau1_best"], r["tau2_best"], r["F_best"], r["kink_flag"]] for r in scan.rows()))
