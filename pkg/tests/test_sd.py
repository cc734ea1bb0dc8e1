import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qglass.landscape import order_parameter
from qglass.problem import make_problem
from qglass.protocols import H_MAX, Protocol, TimeGrid
from qglass.sd import (SDConfig, descend, ensemble_descend, mean_evals_per_bin, mirror_bits, protocol_matrix,
                       write_summary_csv, write_trace_csv)

QUBIT = make_problem(1)
CHAIN = make_problem(4)


def _fid(problem, grid, bits):
    return problem.fidelity(Protocol.from_bits(grid, bits))


def _two_bin_table(T):
    grid = TimeGrid(T, 2)
    table = {b: _fid(QUBIT, grid, b) for b in itertools.product((0, 1), repeat=2)}
    return grid, table, max(table, key=table.get)


@pytest.mark.parametrize("T", [1.0, 2.0])
def test_two_bin_instance_reaches_enumerated_optimum(T):
    grid, table, best = _two_bin_table(T)
    for start in table:
        r = descend(QUBIT, grid, initial_bits=np.array(start))
        assert tuple(r.protocol.bits()) == best
        assert r.fidelity == pytest.approx(table[best], abs=1e-13)


@pytest.mark.parametrize("T", [0.2, 0.6, 1.0, 2.0, 3.0])
def test_two_bin_symmetric_descent_always_reaches_optimum(T):
    grid, table, best = _two_bin_table(T)
    for start in ([0, 1], [1, 0]):
        r = descend(QUBIT, grid, SDConfig(symmetric=True), initial_bits=np.array(start))
        assert tuple(r.protocol.bits()) == best


def test_two_bin_single_flip_trap_exists():
    # at T = 0.6 the protocol (-4, +4) beats both of its single-flip neighbours,
    # so single-flip descent started there cannot reach the optimum (+4, -4)
    grid, table, best = _two_bin_table(0.6)
    assert best == (1, 0)
    assert table[(0, 1)] > max(table[(0, 0)], table[(1, 1)])
    r = descend(QUBIT, grid, initial_bits=np.array([0, 1]))
    assert tuple(r.protocol.bits()) == (0, 1) and r.info["certified"]


@given(st.integers(0, 10 ** 6), st.sampled_from([0.3, 1.0, 2.0]), st.integers(4, 24))
def test_certified_result_is_strict_local_maximum(seed, T, N):
    grid = TimeGrid(T, N)
    r = descend(CHAIN, grid, seed=seed)
    assert r.info["certified"]
    bits = r.protocol.bits()
    for n in range(N):
        flipped = bits.copy()
        flipped[n] ^= 1
        if np.array_equal(flipped, mirror_bits(bits)):
            # odd N_T: this flip yields the mirror protocol, whose fidelity is exactly equal
            assert _fid(CHAIN, grid, flipped) == pytest.approx(r.fidelity, abs=1e-12)
        else:
            assert _fid(CHAIN, grid, flipped) < r.fidelity


@given(st.integers(0, 10 ** 6), st.booleans(), st.sampled_from([1, 2]))
def test_trace_monotone_and_bang_bang(seed, symmetric, k):
    grid = TimeGrid(1.2, 16)
    r = descend(QUBIT, grid, SDConfig(symmetric=symmetric, flip_order=k), seed=seed)
    assert np.all(np.diff(r.trace) >= 0)
    assert r.protocol.is_bang_bang
    assert r.trace[-1] == pytest.approx(r.fidelity, abs=1e-12)
    assert r.fidelity == pytest.approx(QUBIT.fidelity(r.protocol), abs=1e-12)
    assert r.n_evals <= SDConfig().budget(grid)


def test_budget_counts_evaluations():
    grid = TimeGrid(2.0, 40)
    r = descend(CHAIN, grid, SDConfig(max_evals=7), seed=3)
    assert r.n_evals == 7 and r.trace.size == 7
    assert not r.info["certified"]
    with pytest.raises(ValueError):
        SDConfig(max_evals=0)


@given(st.integers(0, 10 ** 6))
def test_symmetric_mode_emits_antisymmetric_protocols(seed):
    r = descend(QUBIT, TimeGrid(1.0, 20), SDConfig(symmetric=True), seed=seed)
    np.testing.assert_array_equal(r.protocol.values, -r.protocol.values[::-1])


def test_symmetric_mode_rejects_odd_grids():
    with pytest.raises(ValueError):
        descend(QUBIT, TimeGrid(1.0, 21), SDConfig(symmetric=True))


def test_mirror_bits():
    np.testing.assert_array_equal(mirror_bits([1, 1, 0]), [1, 0, 0])


def test_single_restart_matches_descend():
    grid = TimeGrid(1.0, 12)
    [one] = ensemble_descend(QUBIT, grid, SDConfig(restarts=1), seed=11)
    again = ensemble_descend(QUBIT, grid, SDConfig(restarts=1), seed=11)[0]
    assert one.protocol == again.protocol and one.n_evals == again.n_evals


def test_ensemble_independent_of_worker_count():
    grid = TimeGrid(1.0, 12)
    a = ensemble_descend(QUBIT, grid, SDConfig(restarts=6), seed=5, workers=1)
    b = ensemble_descend(QUBIT, grid, SDConfig(restarts=6), seed=5, workers=2)
    assert [r.protocol for r in a] == [r.protocol for r in b]
    assert [r.info["restart_id"] for r in a] == list(range(6))


@pytest.mark.parametrize("dt", [0.05, 0.02, 0.01])
def test_overconstrained_qubit_has_unique_minimum(dt):
    results = ensemble_descend(QUBIT, TimeGrid.from_dt(0.4, dt), SDConfig(restarts=100, symmetric=True), seed=0)
    assert len({r.protocol.values.tobytes() for r in results}) == 1
    h = protocol_matrix(results)
    assert np.max(np.abs(h - h[0])) == 0
    assert order_parameter(results) == pytest.approx(0.0, abs=1e-6)


def test_effort_grows_into_glassy_phase():
    def effort(T):
        rs = ensemble_descend(QUBIT, TimeGrid.from_dt(T, 0.01), SDConfig(restarts=100, symmetric=True), seed=0)
        return mean_evals_per_bin(rs)
    assert effort(1.0) > 1.25 * effort(0.4)


def test_k_flip_gives_up_at_local_maximum():
    grid = TimeGrid(1.0, 10)
    r = descend(QUBIT, grid, SDConfig(flip_order=2, max_evals=10 ** 6), seed=1)
    assert r.n_evals < 10 ** 6
    assert np.all(np.diff(r.trace) >= 0)


def test_csv_outputs(tmp_path):
    rs = ensemble_descend(QUBIT, TimeGrid(1.0, 10), SDConfig(restarts=3), seed=2)
    trace = write_trace_csv(rs, tmp_path / "t.csv").read_text().splitlines()
    assert trace[0] == "restart_id,eval_index,fidelity"
    assert len(trace) == 1 + sum(r.trace.size for r in rs)
    summary = write_summary_csv(rs, tmp_path / "s.csv").read_text().splitlines()
    assert summary[0].startswith("restart_id,seed,fidelity,n_evals")
    assert len(summary) == 4
    assert "\r" not in (tmp_path / "s.csv").read_text()


def test_bits_map_to_field_extremes():
    r = descend(QUBIT, TimeGrid(1.0, 6), seed=0)
    assert set(np.abs(r.protocol.values)) == {H_MAX}
