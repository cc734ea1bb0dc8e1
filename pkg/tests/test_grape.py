import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qglass.grape import (GrapeConfig, ascend, ensemble_ascend, finite_difference_gradient, fidelity_gradient,
                          write_trace_csv)
from qglass.problem import make_problem
from qglass.protocols import H_MAX, Protocol, TimeGrid

QUBIT = make_problem(1)


def _rel_err(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@pytest.mark.parametrize("L", [1, 4])
def test_gradient_matches_finite_differences(L, gen):
    p = make_problem(L)
    grid = TimeGrid(1.5, 15)
    for _ in range(5):
        proto = Protocol(grid, gen.uniform(-4, 4, grid.N_T))
        g = fidelity_gradient(p, proto)
        fd = finite_difference_gradient(p, proto.values, grid.dt)
        assert _rel_err(g, fd) < 1e-6


def test_gradient_in_full_space_matches_sector(gen):
    grid = TimeGrid(1.0, 10)
    proto = Protocol(grid, gen.uniform(-4, 4, 10))
    np.testing.assert_allclose(fidelity_gradient(make_problem(4), proto),
                               fidelity_gradient(make_problem(4, reduce=False), proto), atol=1e-12)


def test_gradient_handles_repeated_values():
    # equal fields in neighbouring bins exercise the degenerate-eigenvalue limit of the kernel
    p = make_problem(2)
    grid = TimeGrid(1.0, 8)
    proto = Protocol(grid, [4, 4, 4, 0, 0, -4, -4, -4])
    assert _rel_err(fidelity_gradient(p, proto), finite_difference_gradient(p, proto.values, grid.dt)) < 1e-6


@given(st.integers(0, 2 ** 32 - 1))
def test_gradient_time_reversal_map(seed):
    g = np.random.default_rng(seed)
    grid = TimeGrid(1.3, 12)
    proto = Protocol(grid, g.uniform(-4, 4, 12))
    a = fidelity_gradient(QUBIT, proto)
    b = fidelity_gradient(QUBIT, proto.time_reversed())
    np.testing.assert_allclose(b, -a[::-1], atol=1e-10)


def test_qubit_controllable_phase_reaches_unit_fidelity():
    grid = TimeGrid.from_dt(3.0, 0.05)
    r = ascend(QUBIT, grid, seed=1)
    assert r.fidelity >= 0.9999
    # polish to F = 1 within 1e-11; there the gradient of F <= 1 must vanish
    r = ascend(QUBIT, grid, GrapeConfig(tolerance=1e-14, max_iters=20000), seed=1)
    assert 1 - r.fidelity < 1e-11
    assert np.linalg.norm(fidelity_gradient(QUBIT, r.protocol)) < 1e-6


@given(st.integers(0, 10 ** 6))
def test_trace_monotone_and_in_bounds(seed):
    r = ascend(QUBIT, TimeGrid(1.0, 10), GrapeConfig(max_iters=40), seed=seed)
    assert np.all(np.diff(r.trace) >= 0)
    assert np.all(np.abs(r.protocol.values) <= H_MAX)
    assert r.trace[-1] == pytest.approx(r.fidelity)


def test_zero_gradient_start_is_unchanged():
    # a stationary ground state held at its own field: F = 1 and dF/dh = 0 exactly
    p = make_problem(1, h_initial=2.0, h_target=2.0)
    grid = TimeGrid(1.0, 10)
    start = np.full(10, 2.0)
    assert np.max(np.abs(fidelity_gradient(p, Protocol(grid, start)))) < 1e-14
    r = ascend(p, grid, GrapeConfig(max_iters=1), initial_values=start)
    np.testing.assert_allclose(r.protocol.values, start, atol=1e-12)


def test_audit_mode_runs():
    r = ascend(make_problem(2), TimeGrid(1.0, 8), GrapeConfig(max_iters=5, audit=True), seed=0)
    assert r.trace.size >= 2


def test_restart_determinism_and_csv(tmp_path):
    cfg = GrapeConfig(max_iters=20, restarts=2)
    a = ensemble_ascend(QUBIT, TimeGrid(1.0, 10), cfg, seed=3)
    b = ensemble_ascend(QUBIT, TimeGrid(1.0, 10), cfg, seed=3)
    assert [x.protocol for x in a] == [x.protocol for x in b]
    lines = write_trace_csv(a, tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "restart_id,iter,fidelity,step_size,grad_norm"
    assert len(lines) == 1 + sum(x.trace.size for x in a)


def test_config_validation():
    with pytest.raises(ValueError):
        GrapeConfig(eps0=0.0)
