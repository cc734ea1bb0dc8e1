import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qglass.problem import make_problem
from qglass.protocols import Protocol, TimeGrid, VariationalParams, variational_1d
from qglass.quantum import SpinChain
from qglass.sd import SDConfig, ensemble_descend
from qglass.variational import (detect_kinks, printed_order_fidelity_2d, scan_critical_points,
                                variational_fidelity_1d, variational_fidelity_2d, write_scan_csv)

Q = SpinChain(1)


def test_zero_duration_is_bare_overlap():
    assert variational_fidelity_1d(Q, 0.0, 0.0) == pytest.approx(0.2, abs=1e-14)


def test_single_jump_matches_rasterized_limit():
    T = 0.5
    exact = variational_fidelity_1d(Q, T, T)
    prob = make_problem(1)
    errs = [abs(prob.fidelity(variational_1d(VariationalParams(T, 0.0, T), TimeGrid(T, N))) - exact)
            for N in (10, 100, 1000)]
    assert errs[-1] < 1e-12  # a single jump at T/2 is represented exactly for even N_T


@given(st.floats(0, 1), st.floats(0.01, 4.0))
def test_reduction_2d_to_1d(x, T):
    t1 = x * T
    assert variational_fidelity_2d(Q, t1, 0.0, T) == pytest.approx(variational_fidelity_1d(Q, t1, T), abs=1e-12)
    s = SpinChain(4)
    assert variational_fidelity_2d(s, t1, 0.0, T) == pytest.approx(variational_fidelity_1d(s, t1, T), abs=1e-12)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 4.0))
def test_fidelity_in_unit_interval(x, y, T):
    t1 = x * T
    t2 = y * (T - t1)
    f = variational_fidelity_2d(SpinChain(2), t1, t2, T)
    assert -1e-12 <= f <= 1 + 1e-12


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 3.0))
def test_printed_operator_order_gives_same_fidelity(x, y, T):
    t1 = x * T
    t2 = y * (T - t1)
    for s in (Q, SpinChain(3)):
        assert printed_order_fidelity_2d(s, t1, t2, T) == pytest.approx(variational_fidelity_2d(s, t1, t2, T),
                                                                         abs=1e-12)


def test_exact_matches_rasterized_many_body():
    s = SpinChain(4)
    prob = make_problem(4)
    T, t1, t2 = 1.2, 0.5, 0.3
    exact = variational_fidelity_2d(s, t1, t2, T)
    from qglass.protocols import variational_2d
    err = [abs(prob.fidelity(variational_2d(VariationalParams(t1, t2, T), TimeGrid(T, N))) - exact)
           for N in (120, 1200)]
    assert err[1] < 1e-10 or err[1] < err[0] / 5


def test_overconstrained_qubit_uses_full_duration():
    T = np.array([0.2, 0.3, 0.4, 0.5])
    scan = scan_critical_points(Q, T, 1e-3, 1)
    np.testing.assert_allclose(scan.tau1_best, T, atol=1e-6)


def test_qubit_variational_tracks_sd_below_speed_limit():
    prob = make_problem(1)
    for T in (0.4, 1.0, 1.6, 2.2):
        scan = scan_critical_points(Q, np.array([T]), 1e-3, 1)
        sd = ensemble_descend(prob, TimeGrid.from_dt(T, 0.002), SDConfig(restarts=20, symmetric=True), seed=0)
        assert abs(scan.F_best[0] - max(r.fidelity for r in sd)) < 1e-3


def test_kink_detector_on_synthetic_corner():
    T = np.linspace(0, 2, 401)
    tau = np.where(T < 1.2, T, 1.2 + 0.1 * (T - 1.2))
    locs, flags = detect_kinks(T, tau)
    assert len(locs) == 1 and abs(locs[0] - 1.2) < 0.01
    assert flags.sum() == 1


def test_kink_detector_ignores_smooth_curves():
    T = np.linspace(0.1, 3, 500)
    locs, _ = detect_kinks(T, np.sin(T) + 0.3 * T ** 2)
    assert locs == []


def test_scan_csv(tmp_path):
    scan = scan_critical_points(Q, np.arange(0.1, 1.0, 0.05), 1e-2, 1)
    lines = write_scan_csv(scan, tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "T,tau1_best,tau2_best,F_best,kink_flag"
    assert len(lines) == 1 + scan.T.size


def test_many_body_2d_close_to_sd_near_three():
    prob = make_problem(6)
    T = 3.0
    scan = scan_critical_points(SpinChain(6), np.array([T]), 1e-2, 2)
    sd = ensemble_descend(prob, TimeGrid(T, 28), SDConfig(restarts=200, symmetric=True), seed=0)
    assert abs(scan.F_best[0] - max(r.fidelity for r in sd)) < 2e-2


def test_scan_rejects_unsorted_grid():
    with pytest.raises(ValueError):
        scan_critical_points(Q, np.array([0.5, 0.4]))
