"""Landscape diagnostics: order parameter, exhaustive density of states, attractors."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from qglass import kernels
from qglass.problem import ControlProblem
from qglass.protocols import H_MAX, Protocol, TimeGrid
from qglass.results import write_csv

DOS_CAP = 30
DEFAULT_MAX_BYTES = 2 * 1024 ** 3


class CapExceededError(ValueError):
    """A configured resource cap would be violated."""


# --------------------------------------------------------------------------- q(T)

@dataclass
class LandscapeEnsemble:
    protocols: np.ndarray  # (N_real, N_T) field values
    fidelities: np.ndarray
    grid: TimeGrid | None = None

    @classmethod
    def from_results(cls, results) -> "LandscapeEnsemble":
        grids = {r.grid for r in results}
        if len(grids) != 1:
            raise ValueError("ensemble members live on different grids")
        return cls(np.stack([r.protocol.values for r in results]),
                   np.array([r.fidelity for r in results]), grids.pop())

    @property
    def N_real(self) -> int:
        return self.protocols.shape[0]


def _as_matrix(ensemble) -> np.ndarray:
    if isinstance(ensemble, LandscapeEnsemble):
        return np.asarray(ensemble.protocols, dtype=float)
    if len(ensemble) and hasattr(ensemble[0], "protocol"):
        return LandscapeEnsemble.from_results(ensemble).protocols
    if len(ensemble) and isinstance(ensemble[0], Protocol):
        if len({p.grid for p in ensemble}) != 1:
            raise ValueError("ensemble members live on different grids")
        return np.stack([p.values for p in ensemble])
    return np.asarray(ensemble, dtype=float)


def order_parameter(ensemble) -> float:
    """Edwards-Anderson-like q: the per-bin ensemble variance of h, over 16, averaged over bins.

    Accepts a ``LandscapeEnsemble``, a list of results or protocols, or an
    ``(N_real, N_T)`` array.
    """
    h = _as_matrix(ensemble)
    if h.ndim != 2 or h.shape[0] < 2:
        raise ValueError("need at least two protocols")
    dev = h - h.mean(axis=0)
    q = float(np.mean(dev ** 2) / H_MAX ** 2)
    return min(max(q, 0.0), 1.0)


# --------------------------------------------------------------------------- DOS

@dataclass
class DosResult:
    grid: TimeGrid
    bin_width: float
    counts: np.ndarray  # counts[b] protocols with F in [b*w, (b+1)*w)
    optimal_index: int
    optimal_fidelity: float
    kflip: dict[int, np.ndarray] = field(default_factory=dict)
    n_above_best_1flip: int | None = None
    fidelities: np.ndarray | None = None  # full table, only when requested

    @property
    def optimal_bits(self) -> np.ndarray:
        """Bin ``n`` of the optimum is bit ``n`` of ``optimal_index`` (1 means +4)."""
        return np.array([(self.optimal_index >> n) & 1 for n in range(self.grid.N_T)], dtype=np.int8)

    @property
    def optimal_hex(self) -> str:
        return format(self.optimal_index, "x")

    @property
    def optimal_protocol(self) -> Protocol:
        return Protocol.from_bits(self.grid, self.optimal_bits)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def bin_edges(self) -> np.ndarray:
        return np.arange(self.counts.size) * self.bin_width


def index_to_bits(index: int, N_T: int) -> np.ndarray:
    return np.array([(index >> n) & 1 for n in range(N_T)], dtype=np.int8)


def bits_to_index(bits) -> int:
    return sum(int(b) << n for n, b in enumerate(bits))


def forward_half(props, psi, k) -> np.ndarray:
    """All ``2**k`` states after bins ``0..k-1``; row ``i`` applies bit ``n`` of ``i`` at bin ``n``."""
    out = np.asarray(psi, dtype=complex)[None, :]
    for _ in range(k):
        out = np.concatenate([out @ props[0].T, out @ props[1].T])
    return out


def backward_half(props, psi_star, m) -> np.ndarray:
    """Duals ``U^dagger psi_star`` for the last ``m`` bins; row ``j`` uses bit ``p`` of ``j`` at the ``p``-th of them."""
    out = np.asarray(psi_star, dtype=complex)[None, :]
    c0, c1 = props[0].conj(), props[1].conj()
    for _ in range(m):
        # bins are peeled off from the end, so each new bit is the lowest one
        out = np.stack([out @ c0, out @ c1], axis=1).reshape(-1, out.shape[1])
    return out


def dos_memory_estimate(N_T: int, dim: int, chunk_rows: int) -> int:
    k = N_T // 2
    m = N_T - k
    halves = ((1 << k) + (1 << m)) * dim * 16
    return halves + 3 * chunk_rows * (1 << k) * 16


def exhaustive_dos(problem: ControlProblem, grid: TimeGrid, k_list=(1, 2), bin_width: float = 1e-3,
                   cap: int = DOS_CAP, max_bytes: int = DEFAULT_MAX_BYTES, keep_all: bool = False,
                   count_above_1flip: bool = True) -> DosResult:
    """Fidelity of every bang-bang protocol on ``grid`` by meet-in-the-middle.

    Forward states of the first half and backward duals of the second half are
    tabulated once; each full protocol is then one inner product. The histogram
    has bins of width ``bin_width`` on ``[0, 1]`` (``F = 1`` lands in the last bin).
    """
    N = grid.N_T
    if N > cap:
        raise CapExceededError(f"N_T={N} exceeds the exhaustive-enumeration cap of {cap}")
    dim = problem.system.dim
    k = N // 2
    m = N - k
    chunk_rows = max(1, min(1 << m, (1 << 24) >> k))
    need = dos_memory_estimate(N, dim, chunk_rows) + (16 << N if keep_all else 0)
    if need > max_bytes:
        raise CapExceededError(f"exhaustive enumeration needs ~{need / 2**20:.0f} MiB, limit {max_bytes / 2**20:.0f} MiB")

    props = problem.bang_bang_propagators(grid)
    fwd = forward_half(props, problem.psi_i, k)
    bwd_conj = backward_half(props, problem.psi_star, m).conj()
    fwd_t = np.ascontiguousarray(fwd.T)
    n_bins = int(np.ceil(1.0 / bin_width))
    counts = np.zeros(n_bins, dtype=np.int64)
    best_f, best_idx = -1.0, -1
    table = np.empty(1 << N) if keep_all else None

    def chunks():
        for j0 in range(0, 1 << m, chunk_rows):
            amp = bwd_conj[j0:j0 + chunk_rows] @ fwd_t
            yield j0, amp.real ** 2 + amp.imag ** 2

    for j0, f in chunks():
        b = np.minimum((f / bin_width).astype(np.int64), n_bins - 1)
        counts += np.bincount(b.ravel(), minlength=n_bins)
        a = int(np.argmax(f))
        if f.flat[a] > best_f:
            best_f = float(f.flat[a])
            jj, ii = divmod(a, 1 << k)
            best_idx = ii + ((j0 + jj) << k)
        if keep_all:
            table[j0 << k:(j0 << k) + f.size] = f.ravel()

    best_bits = index_to_bits(best_idx, N)
    kflip = {int(kk): kflip_fidelities(problem, grid, best_bits, int(kk)) for kk in k_list}
    result = DosResult(grid, bin_width, counts, best_idx, best_f, kflip, fidelities=table)
    if count_above_1flip:
        threshold = float(np.max(kflip[1])) if 1 in kflip else float(np.max(kflip_fidelities(problem, grid, best_bits, 1)))
        if table is not None:
            result.n_above_best_1flip = int(np.count_nonzero(table > threshold))
        else:
            result.n_above_best_1flip = int(sum(np.count_nonzero(f > threshold) for _, f in chunks()))
    return result


def kflip_fidelities(problem: ControlProblem, grid: TimeGrid, bits, k: int) -> np.ndarray:
    """Fidelities of all ``C(N_T, k)`` protocols that differ from ``bits`` in exactly ``k`` bins."""
    props = problem.bang_bang_propagators(grid)
    base = np.asarray(bits, dtype=np.intp)
    out = []
    for combo in itertools.combinations(range(base.size), k):
        idx = base.copy()
        idx[list(combo)] ^= 1
        amp = np.vdot(problem.psi_star, kernels.chain_apply(props, idx, problem.psi_i))
        out.append(amp.real ** 2 + amp.imag ** 2)
    return np.array(out)


def all_fidelities_direct(problem: ControlProblem, grid: TimeGrid, indices) -> np.ndarray:
    """Per-protocol evolution, used to audit the enumeration."""
    props = problem.bang_bang_propagators(grid)
    out = []
    for i in indices:
        amp = np.vdot(problem.psi_star, kernels.chain_apply(props, index_to_bits(int(i), grid.N_T).astype(np.intp), problem.psi_i))
        out.append(amp.real ** 2 + amp.imag ** 2)
    return np.array(out)


# --------------------------------------------------------------------------- attractors

@dataclass
class Cluster:
    members: np.ndarray
    population: float
    mean_profile: np.ndarray
    fidelity_mean: float
    fidelity_std: float
    fidelity_max: float
    spread: float  # mean squared deviation from the cluster mean, over 16


def overlap_matrix(h: np.ndarray) -> np.ndarray:
    return (h @ h.T) / (H_MAX ** 2 * h.shape[1])


def cluster_attractors(results, threshold: float = 0.6) -> list[Cluster]:
    """Single-linkage clusters of final protocols, linked when their overlap is at least ``threshold``.

    Clusters come back sorted by population, largest first (ties by lowest member index).
    """
    h = _as_matrix(results)
    if h.shape[0] < 2:
        raise ValueError("need at least two results")
    if hasattr(results[0], "fidelity"):
        fids = np.array([r.fidelity for r in results])
    else:
        fids = np.full(h.shape[0], np.nan)
    adj = overlap_matrix(h) >= threshold
    _, labels = connected_components(csr_matrix(adj), directed=False)
    clusters = []
    for lab in np.unique(labels):
        idx = np.flatnonzero(labels == lab)
        prof = h[idx].mean(axis=0)
        clusters.append(Cluster(
            members=idx,
            population=idx.size / h.shape[0],
            mean_profile=prof,
            fidelity_mean=float(np.mean(fids[idx])),
            fidelity_std=float(np.std(fids[idx])),
            fidelity_max=float(np.max(fids[idx])),
            spread=float(np.mean((h[idx] - prof) ** 2) / H_MAX ** 2),
        ))
    clusters.sort(key=lambda c: (-c.members.size, c.members[0]))
    return clusters


def profile_overlap(a, b) -> float:
    """Cosine similarity of two mean profiles (1 for proportional profiles)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


def major_clusters(clusters, min_population: float = 0.05) -> list[Cluster]:
    return [c for c in clusters if c.population >= min_population]


def write_dos(result: DosResult, csv_path, json_path):
    """Histogram as ``(F_bin_lo, count)`` plus a JSON sidecar with the optimum and its k-flip fidelities."""
    write_csv(csv_path, ["F_bin_lo", "count"], zip(result.bin_edges(), result.counts))
    doc = {
        "T": result.grid.T, "dt": result.grid.dt, "N_T": result.grid.N_T,
        "bin_width": result.bin_width,
        "optimal_bits": result.optimal_hex,
        "optimal_bits_order": "bin n is bit n of the integer; 1 means h = +4",
        "optimal_F": result.optimal_fidelity,
        "kflip_fidelities": {str(k): [float(x) for x in v] for k, v in sorted(result.kflip.items())},
        "n_above_best_1flip": result.n_above_best_1flip,
    }
    Path(json_path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return Path(csv_path), Path(json_path)
