"""The state-preparation task: a chain plus initial and target ground states.

For a periodic chain both ground states are invariant under lattice
translations and reflections, and so is every Hamiltonian the field can reach.
The dynamics therefore never leaves the fully symmetric sector, and
``ControlProblem`` works there by default: one basis vector per orbit of
basis states under the dihedral group. This is exact (not an approximation)
and shrinks the L=6 problem from 64 to 13 amplitudes and L=8 from 256 to 30.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from qglass import kernels
from qglass.protocols import H_MAX, Protocol, TimeGrid
from qglass.quantum import SpinChain, ground_state


CACHE_LIMIT = 4096
FEW_VALUES = 16


def symmetric_sector_basis(L: int) -> np.ndarray:
    """Orthonormal columns spanning the translation- and reflection-invariant states of ``L`` sites."""
    dim = 1 << L
    mask = dim - 1

    def rotations(s):
        for r in range(L):
            yield ((s << r) | (s >> (L - r))) & mask

    def reverse(s):
        return int(format(s, f"0{L}b")[::-1], 2)

    rep = np.empty(dim, dtype=np.int64)
    for s in range(dim):
        rep[s] = min(min(rotations(s)), min(rotations(reverse(s))))
    reps, col = np.unique(rep, return_inverse=True)
    B = np.zeros((dim, reps.size))
    B[np.arange(dim), col] = 1.0
    return B / np.sqrt(B.sum(axis=0))


@dataclass(frozen=True)
class ControlProblem:
    system: SpinChain
    h_initial: float = -2.0
    h_target: float = 2.0
    reduce: bool = True
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False, compare=False)

    def __getstate__(self):
        return {"system": self.system, "h_initial": self.h_initial, "h_target": self.h_target,
                "reduce": self.reduce}

    def __setstate__(self, state):
        for k, v in state.items():
            object.__setattr__(self, k, v)
        object.__setattr__(self, "_lock", threading.Lock())

    @cached_property
    def basis(self) -> np.ndarray | None:
        """Columns of the working basis in the full space, or ``None`` when working in the full space."""
        if not self.reduce or self.system.L < 2 or not self.system.periodic:
            return None
        return symmetric_sector_basis(self.system.L)

    @property
    def dim(self) -> int:
        return self.system.dim if self.basis is None else self.basis.shape[1]

    def reduce_state(self, state) -> np.ndarray:
        state = np.asarray(state, dtype=complex)
        return state if self.basis is None else self.basis.T @ state

    def lift(self, state) -> np.ndarray:
        """Map a working-basis state (or a stack of them, one per row) to the full space."""
        state = np.asarray(state)
        return state if self.basis is None else state @ self.basis.T

    @cached_property
    def h0_diagonal(self) -> np.ndarray:
        d = self.system.h0_diagonal
        if self.basis is None:
            return d
        # H0 is constant on each orbit, so it stays diagonal after reduction
        return np.diag(self.basis.T @ (d[:, None] * self.basis)).copy()

    @cached_property
    def control_operator(self) -> np.ndarray:
        X = self.system.control_operator
        return X if self.basis is None else self.basis.T @ X @ self.basis

    @cached_property
    def full_psi_i(self) -> np.ndarray:
        return ground_state(self.system, self.h_initial)

    @cached_property
    def full_psi_star(self) -> np.ndarray:
        return ground_state(self.system, self.h_target)

    @cached_property
    def psi_i(self) -> np.ndarray:
        return np.ascontiguousarray(self.reduce_state(self.full_psi_i))

    @cached_property
    def psi_star(self) -> np.ndarray:
        return np.ascontiguousarray(self.reduce_state(self.full_psi_star))

    @cached_property
    def _props(self) -> dict:
        return {}

    def hamiltonian(self, h_x: float) -> np.ndarray:
        return np.diag(self.h0_diagonal) + h_x * self.control_operator

    def propagator(self, h_x: float, duration: float) -> np.ndarray:
        """``exp(-i H(h_x) duration)`` in the working basis, cached per ``(h_x, duration)``."""
        key = (float(h_x), float(duration))
        hit = self._props.get(key)
        if hit is not None:
            return hit
        E, V = np.linalg.eigh(self.hamiltonian(key[0]))
        U = np.ascontiguousarray((V * np.exp(-1j * E * key[1])) @ V.conj().T)
        with self._lock:
            if len(self._props) < CACHE_LIMIT:
                self._props.setdefault(key, U)
        return U

    def propagator_stack(self, values, dt: float):
        uniq, idx = np.unique(np.asarray(values, dtype=float), return_inverse=True)
        props = np.ascontiguousarray(np.stack([self.propagator(h, dt) for h in uniq]))
        return props, idx.astype(np.intp).ravel()

    def evolve_values(self, values, dt: float, state=None) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        state = self.psi_i if state is None else state
        if values.size == 0:
            return np.array(state, dtype=complex)
        uniq = np.unique(values)
        if uniq.size > FEW_VALUES:
            # quasi-continuous protocol: diagonalize every bin in one batch, cache nothing
            H = np.diag(self.h0_diagonal)[None] + values[:, None, None] * self.control_operator[None]
            E, V = np.linalg.eigh(H)
            psi = np.array(state, dtype=complex)
            ph = np.exp(-1j * E * dt)
            for n in range(values.size):
                psi = V[n] @ (ph[n] * (V[n].conj().T @ psi))
            return psi
        props, idx = self.propagator_stack(values, dt)
        return kernels.chain_apply(props, idx, state)

    def trajectory(self, values, dt: float) -> np.ndarray:
        """Working-basis states at every bin edge, shape ``(N_T + 1, dim)``."""
        values = np.asarray(values, dtype=float)
        props, idx = self.propagator_stack(values, dt) if values.size else (np.empty((0, self.dim, self.dim), complex), np.empty(0, np.intp))
        states = np.empty((values.size + 1, self.dim), dtype=complex)
        states[0] = self.psi_i
        kernels.chain_forward(props, idx, states, 0, values.size)
        return states

    def fidelity_values(self, values, dt: float) -> float:
        amp = np.vdot(self.psi_star, self.evolve_values(values, dt))
        return min(float(amp.real ** 2 + amp.imag ** 2), 1.0)

    def fidelity(self, protocol: Protocol) -> float:
        return self.fidelity_values(protocol.values, protocol.grid.dt)

    def bang_bang_propagators(self, grid: TimeGrid) -> np.ndarray:
        """One-bin propagators stacked as ``[U(-4), U(+4)]``."""
        return np.ascontiguousarray(np.stack([
            self.propagator(-H_MAX, grid.dt),
            self.propagator(H_MAX, grid.dt),
        ]))


def as_problem(system) -> ControlProblem:
    return system if isinstance(system, ControlProblem) else ControlProblem(system)


def make_problem(L: int = 1, h_z: float = 1.0, h_initial: float = -2.0, h_target: float = 2.0,
                 reduce: bool = True) -> ControlProblem:
    return ControlProblem(SpinChain(L, h_z), h_initial, h_target, reduce)
