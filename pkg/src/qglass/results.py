from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from qglass.protocols import Protocol


@dataclass
class OptimizationResult:
    """Outcome of one optimizer run.

    ``trace`` holds the fidelity after every iteration/episode/evaluation of the
    method that produced it; ``n_evals`` counts fidelity evaluations.
    """

    protocol: Protocol
    fidelity: float
    trace: np.ndarray
    n_evals: int
    seed: int | None = None
    info: dict = field(default_factory=dict)

    @property
    def grid(self):
        return self.protocol.grid


def best_of(results):
    """Highest-fidelity result; ties go to the earliest entry."""
    best = None
    for r in results:
        if best is None or r.fidelity > best.fidelity:
            best = r
    return best


def format_cell(v):
    """CSV cell text; floats use ``repr`` so they round-trip exactly."""
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_csv(path, header, rows) -> Path:
    """Comma-separated, LF line endings, header row first."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_cell(v) for v in row])
    return path
