"""Exact dynamics of the driven transverse-field spin chain.

Conventions
-----------
* spin operators are ``S = sigma / 2``
* site 0 is the least-significant bit of a basis index; bit value 0 is spin up
* ``H(h_x) = H0 + h_x X`` with ``X = -sum_j S^x_j``
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from qglass import kernels

MAX_SITES = 12
NORM_TOL = 1e-10


class DimensionError(ValueError):
    """Raised when a chain would exceed the dense-matrix size limit."""


class DegenerateGroundStateError(ValueError):
    pass


@dataclass(frozen=True)
class SpinChain:
    """Closed chain of ``L`` qubits with unit Ising coupling.

    ``L == 1`` is the single qubit ``H = -h_z S^z - h_x S^x``.
    """

    L: int = 1
    h_z: float = 1.0
    coupling: float = 1.0
    periodic: bool = True
    max_sites: int = MAX_SITES
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)
    _eig_cache: dict = field(default_factory=dict, repr=False, compare=False)
    _prop_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.L < 1:
            raise ValueError(f"L must be >= 1, got {self.L}")
        if self.L > self.max_sites:
            raise DimensionError(f"L={self.L} exceeds the configured maximum {self.max_sites}")
        if self.coupling != 1.0 or not self.periodic:
            raise ValueError("only the periodic chain with unit coupling is supported")

    def __hash__(self):
        return hash((self.L, self.h_z))

    def __getstate__(self):
        return {"L": self.L, "h_z": self.h_z, "max_sites": self.max_sites}

    def __setstate__(self, state):
        object.__setattr__(self, "L", state["L"])
        object.__setattr__(self, "h_z", state["h_z"])
        object.__setattr__(self, "coupling", 1.0)
        object.__setattr__(self, "periodic", True)
        object.__setattr__(self, "max_sites", state["max_sites"])
        object.__setattr__(self, "_lock", threading.Lock())
        object.__setattr__(self, "_eig_cache", {})
        object.__setattr__(self, "_prop_cache", {})

    @property
    def dim(self) -> int:
        return 2 ** self.L

    @cached_property
    def _spins_z(self) -> np.ndarray:
        # S^z_j eigenvalue of every basis state, shape (L, dim)
        idx = np.arange(self.dim)
        return np.array([0.5 - ((idx >> j) & 1) for j in range(self.L)])

    @cached_property
    def h0_diagonal(self) -> np.ndarray:
        """Diagonal of the uncontrolled part ``H0`` (it is diagonal in the z basis)."""
        sz = self._spins_z
        if self.L == 1:
            return -self.h_z * sz[0]
        diag = np.zeros(self.dim)
        for j in range(self.L):
            diag -= sz[(j + 1) % self.L] * sz[j] + self.h_z * sz[j]
        return diag

    @cached_property
    def control_operator(self) -> np.ndarray:
        """``X = dH/dh_x = -sum_j S^x_j`` as a dense real matrix."""
        dim = self.dim
        X = np.zeros((dim, dim))
        idx = np.arange(dim)
        for j in range(self.L):
            X[idx ^ (1 << j), idx] -= 0.5
        return X

    def hamiltonian(self, h_x: float) -> np.ndarray:
        return build_hamiltonian(self, h_x)

    def eig(self, h_x: float) -> tuple[np.ndarray, np.ndarray]:
        """Cached eigendecomposition ``(E, V)`` of ``H(h_x)``."""
        key = float(h_x)
        hit = self._eig_cache.get(key)
        if hit is not None:
            return hit
        E, V = np.linalg.eigh(build_hamiltonian(self, key))
        with self._lock:
            self._eig_cache.setdefault(key, (E, V))
        return E, V

    def propagator(self, h_x: float, duration: float) -> np.ndarray:
        """``exp(-i H(h_x) duration)``, cached per ``(h_x, duration)``."""
        key = (float(h_x), float(duration))
        hit = self._prop_cache.get(key)
        if hit is not None:
            return hit
        E, V = self.eig(h_x)
        U = (V * np.exp(-1j * E * duration)) @ V.conj().T
        U = np.ascontiguousarray(U)
        with self._lock:
            self._prop_cache.setdefault(key, U)
        return U


def build_hamiltonian(system: SpinChain, h_x: float) -> np.ndarray:
    if not np.isfinite(h_x):
        raise ValueError(f"h_x must be finite, got {h_x}")
    H = h_x * system.control_operator
    H[np.diag_indices(system.dim)] += system.h0_diagonal
    return H


def fix_phase(vec: np.ndarray) -> np.ndarray:
    """Rotate the global phase so the largest-magnitude amplitude is real positive."""
    k = int(np.argmax(np.abs(vec)))
    return vec * (abs(vec[k]) / vec[k])


def ground_state(system: SpinChain, h_x: float, gap_tol: float = 1e-10) -> np.ndarray:
    E, V = np.linalg.eigh(build_hamiltonian(system, h_x))
    if system.dim > 1 and E[1] - E[0] < gap_tol:
        raise DegenerateGroundStateError(f"ground state at h_x={h_x} is degenerate (gap {E[1] - E[0]:.3g})")
    psi = fix_phase(V[:, 0].astype(complex))
    return psi / np.linalg.norm(psi)


def check_state(state: np.ndarray, tol: float = NORM_TOL) -> np.ndarray:
    state = np.asarray(state, dtype=complex)
    if abs(np.linalg.norm(state) - 1.0) > tol:
        raise ValueError("state is not normalized")
    return state


def propagator_stack(system: SpinChain, values: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Distinct propagators for a piecewise-constant field plus per-bin indices into them."""
    uniq, idx = np.unique(np.asarray(values, dtype=float), return_inverse=True)
    props = np.stack([system.propagator(h, dt) for h in uniq]) if len(uniq) else np.zeros((0, system.dim, system.dim), complex)
    return np.ascontiguousarray(props), idx.astype(np.intp)


def evolve_values(state: np.ndarray, system: SpinChain, values, dt: float) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    out = np.array(state, dtype=complex)
    if values.size == 0:
        return out
    props, idx = propagator_stack(system, values, dt)
    return kernels.chain_apply(props, idx, out)


def evolve(state: np.ndarray, system: SpinChain, protocol) -> np.ndarray:
    """Evolve ``state`` bin by bin under a piecewise-constant protocol."""
    return evolve_values(state, system, protocol.values, protocol.grid.dt)


def trajectory(state: np.ndarray, system: SpinChain, values, dt: float) -> np.ndarray:
    """States after every bin, shape ``(N_T + 1, dim)``; row 0 is the input."""
    values = np.asarray(values, dtype=float)
    states = np.empty((values.size + 1, system.dim), dtype=complex)
    states[0] = state
    if values.size:
        props, idx = propagator_stack(system, values, dt)
        kernels.chain_forward(props, idx, states, 0, values.size)
    return states


def fidelity(state: np.ndarray, target: np.ndarray) -> float:
    return float(abs(np.vdot(target, state)) ** 2)


def entanglement_entropy_half(state: np.ndarray, L: int) -> float:
    """Von Neumann entropy (natural log) of the first ``L/2`` sites."""
    if L < 2 or L % 2:
        raise ValueError(f"half-chain entropy needs even L >= 2, got {L}")
    half = 2 ** (L // 2)
    # index = high * 2^(L/2) + low, low bits are sites 0..L/2-1
    s = np.linalg.svd(np.reshape(state, (half, half)), compute_uv=False)
    p = s[s > 1e-15] ** 2
    return float(max(-np.sum(p * np.log(p)), 0.0))
