"""Time grids, piecewise-constant protocols and the reference protocol families."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

H_MAX = 4.0
BOUND_TOL = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    """``N_T`` equal bins covering ``[0, T]``; ``dt`` is derived as ``T / N_T``."""

    T: float
    N_T: int

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError(f"T must be positive, got {self.T}")
        if self.N_T < 1:
            raise ValueError("grid empty")

    @classmethod
    def from_dt(cls, T: float, dt: float, rtol: float = 1e-9) -> "TimeGrid":
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        if dt > T * (1 + rtol):
            raise ValueError("grid empty")
        n = round(T / dt)
        if abs(n * dt - T) > rtol * T:
            raise ValueError(f"T={T} is not a multiple of dt={dt}")
        return cls(float(T), int(n))

    @property
    def dt(self) -> float:
        return self.T / self.N_T

    def edges(self) -> np.ndarray:
        return np.arange(self.N_T + 1) * self.dt

    def midpoints(self) -> np.ndarray:
        return (np.arange(self.N_T) + 0.5) * self.dt


class ProtocolBoundsError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Protocol:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.N_T,):
            raise ValueError(f"expected {self.grid.N_T} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(np.abs(v) > H_MAX + BOUND_TOL):
            raise ProtocolBoundsError(f"protocol values must lie in [-{H_MAX}, {H_MAX}]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __eq__(self, other):
        return (isinstance(other, Protocol) and self.grid == other.grid
                and np.array_equal(self.values, other.values))

    @property
    def is_bang_bang(self) -> bool:
        return bool(np.all(np.abs(self.values) == H_MAX))

    @classmethod
    def from_bits(cls, grid: TimeGrid, bits) -> "Protocol":
        """Bit 1 is ``+4``, bit 0 is ``-4``."""
        bits = np.asarray(bits)
        return cls(grid, np.where(bits > 0, H_MAX, -H_MAX))

    def bits(self) -> np.ndarray:
        if not self.is_bang_bang:
            raise ValueError("protocol is not bang-bang")
        return (self.values > 0).astype(np.int8)

    def time_reversed(self) -> "Protocol":
        """The mirror protocol ``h(t) -> -h(T - t)``."""
        return Protocol(self.grid, -self.values[::-1])

    def split(self, n: int) -> tuple["Protocol", "Protocol"]:
        """Cut after bin ``n``; the pieces keep the bin width."""
        dt = self.grid.dt
        a = Protocol(TimeGrid(n * dt, n), self.values[:n]) if n else None
        m = self.grid.N_T - n
        b = Protocol(TimeGrid(m * dt, m), self.values[n:]) if m else None
        return a, b


def _check_endpoints(h_i, h_f):
    if abs(h_i) > H_MAX or abs(h_f) > H_MAX:
        raise ProtocolBoundsError(f"endpoint fields must satisfy |h| <= {H_MAX}")


def lz_field(t, T, h_i=-2.0, h_f=2.0):
    return (h_f - h_i) * np.asarray(t) / T + h_i


def lz_protocol(grid: TimeGrid, h_i: float = -2.0, h_f: float = 2.0) -> Protocol:
    """Linear ramp from ``h_i`` to ``h_f`` sampled at bin midpoints."""
    _check_endpoints(h_i, h_f)
    return Protocol(grid, lz_field(grid.midpoints(), grid.T, h_i, h_f))


def geodesic_field(t, T, h_i=-2.0, h_f=2.0):
    b = math.atan(h_i)
    a = (math.atan(h_f) - b) / T
    return np.tan(a * np.asarray(t) + b)


def geodesic_protocol(grid: TimeGrid, h_i: float = -2.0, h_f: float = 2.0) -> Protocol:
    _check_endpoints(h_i, h_f)
    v = np.clip(geodesic_field(grid.midpoints(), grid.T, h_i, h_f), -H_MAX, H_MAX)
    return Protocol(grid, v)


@dataclass(frozen=True)
class VariationalParams:
    tau1: float
    tau2: float = 0.0
    T: float = 1.0

    def __post_init__(self):
        if self.tau1 < 0 or self.tau2 < 0:
            raise ValueError("pulse durations must be non-negative")
        if self.tau1 + self.tau2 > self.T * (1 + 1e-12):
            raise ValueError("tau1 + tau2 must not exceed T")

    @property
    def tau_free(self) -> float:
        return max(self.T - self.tau1 - self.tau2, 0.0)


def variational_segments(params: VariationalParams) -> list[tuple[float, float]]:
    """``(field, duration)`` pulses of the five-pulse ansatz, zero-length ones dropped."""
    t1, t2 = params.tau1 / 2, params.tau2 / 2
    segs = [(H_MAX, t1), (-H_MAX, t2), (0.0, params.tau_free), (H_MAX, t2), (-H_MAX, t1)]
    return [(h, d) for h, d in segs if d > 0]


def _rasterize(grid: TimeGrid, fields, boundaries) -> Protocol:
    # boundaries are times; snap each to the nearest grid edge
    edges = [0] + [int(round(b / grid.dt)) for b in boundaries] + [grid.N_T]
    values = np.zeros(grid.N_T)
    for h, lo, hi in zip(fields, edges[:-1], edges[1:]):
        values[lo:hi] = h
    return Protocol(grid, values)


def variational_2d(params: VariationalParams, grid: TimeGrid) -> Protocol:
    """Fields (+4, -4, 0, +4, -4) for (tau1/2, tau2/2, T-tau1-tau2, tau2/2, tau1/2)."""
    T = grid.T
    a = params.tau1 / 2
    b = (params.tau1 + params.tau2) / 2
    # mirror the left boundaries so the rasterized protocol stays antisymmetric
    # snapped boundaries may not pass the midpoint, or the mirror images would cross
    half = grid.N_T // 2
    nb = [min(int(round(a / grid.dt)), half), min(int(round(b / grid.dt)), half)]
    bounds = [nb[0] * grid.dt, nb[1] * grid.dt, T - nb[1] * grid.dt, T - nb[0] * grid.dt]
    return _rasterize(grid, [H_MAX, -H_MAX, 0.0, H_MAX, -H_MAX], bounds)


def variational_1d(params: VariationalParams, grid: TimeGrid) -> Protocol:
    """Three pulses: +4 for tau1/2, free precession, -4 for tau1/2."""
    if params.tau2 != 0:
        raise ValueError("the one-parameter ansatz has tau2 = 0")
    return variational_2d(params, grid)


def write_protocol(protocol: Protocol, path) -> tuple[Path, Path]:
    """Write ``<path>.csv`` (bin_index, t_start, h_x) and a ``<path>.json`` grid header."""
    path = Path(path)
    csv_path, json_path = path.with_suffix(".csv"), path.with_suffix(".json")
    grid = protocol.grid
    json_path.write_text(json.dumps({"T": grid.T, "dt": grid.dt, "N_T": grid.N_T}, indent=2) + "\n")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_index", "t_start", "h_x"])
        for n, t in enumerate(grid.edges()[:-1]):
            w.writerow([n, repr(float(t)), repr(float(protocol.values[n]))])
    return csv_path, json_path


def read_protocol(path) -> Protocol:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    grid = TimeGrid(float(header["T"]), int(header["N_T"]))
    with open(path.with_suffix(".csv"), newline="") as fh:
        rows = list(csv.DictReader(fh))
    if [int(r["bin_index"]) for r in rows] != list(range(grid.N_T)):
        raise ValueError("protocol CSV bins do not match the header")
    return Protocol(grid, [float(r["h_x"]) for r in rows])
