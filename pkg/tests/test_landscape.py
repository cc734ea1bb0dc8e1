import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qglass.landscape import (CapExceededError, LandscapeEnsemble, all_fidelities_direct, bits_to_index,
                              cluster_attractors, exhaustive_dos, index_to_bits, kflip_fidelities, major_clusters,
                              order_parameter, overlap_matrix, profile_overlap, write_dos)
from qglass.problem import make_problem
from qglass.protocols import Protocol, TimeGrid
from qglass.sd import SDConfig, ensemble_descend

QUBIT = make_problem(1)


def test_q_identical_is_zero():
    h = np.tile([4.0, -4.0, 4.0], (5, 1))
    assert order_parameter(h) == 0.0


def test_q_opposite_pair_is_one():
    h = np.array([[4.0, -4.0, 4.0, 4.0], [-4.0, 4.0, -4.0, -4.0]])
    assert order_parameter(h) == pytest.approx(1.0)


@given(st.integers(2, 20), st.integers(1, 30), st.integers(0, 2 ** 32 - 1))
def test_q_in_unit_interval_and_zero_iff_equal(n, N, seed):
    g = np.random.default_rng(seed)
    h = g.choice([-4.0, 4.0], size=(n, N))
    q = order_parameter(h)
    assert 0 <= q <= 1
    assert (q == 0) == bool(np.all(h == h[0]))


@pytest.mark.parametrize("n_real", [2, 5, 20])
def test_q_iid_expectation(n_real):
    # for iid uniform +-4 entries E[(h - mean)^2] / 16 = 1 - 1/n_real
    g = np.random.default_rng(7)
    N = 40
    qs = np.array([order_parameter(g.choice([-4.0, 4.0], size=(n_real, N))) for _ in range(100)])
    expect = 1 - 1 / n_real
    assert abs(qs.mean() - expect) < 3 * qs.std(ddof=1) / math.sqrt(qs.size)


def test_ensemble_rejects_mixed_grids():
    a = Protocol.from_bits(TimeGrid(1.0, 3), [1, 0, 1])
    b = Protocol.from_bits(TimeGrid(2.0, 3), [1, 0, 1])
    with pytest.raises(ValueError):
        order_parameter([a, b])


def test_ensemble_from_results():
    rs = ensemble_descend(QUBIT, TimeGrid(1.0, 10), SDConfig(restarts=4), seed=0)
    ens = LandscapeEnsemble.from_results(rs)
    assert ens.N_real == 4
    assert order_parameter(ens) == pytest.approx(order_parameter(rs))


def test_bit_index_round_trip():
    for i in (0, 1, 5, 1023):
        assert bits_to_index(index_to_bits(i, 10)) == i


def test_two_bin_dos_matches_direct_evolution():
    grid = TimeGrid(0.6, 2)
    dos = exhaustive_dos(QUBIT, grid, keep_all=True)
    direct = [QUBIT.fidelity(Protocol.from_bits(grid, index_to_bits(i, 2))) for i in range(4)]
    np.testing.assert_allclose(dos.fidelities, direct, atol=1e-15)
    assert dos.total == 4
    assert dos.optimal_fidelity == pytest.approx(max(direct), abs=1e-15)


@pytest.mark.parametrize("L, N", [(1, 11), (2, 12), (4, 13)])
def test_meet_in_the_middle_matches_direct_on_subsample(L, N):
    p = make_problem(L)
    grid = TimeGrid(1.3, N)
    dos = exhaustive_dos(p, grid, keep_all=True)
    assert dos.total == 2 ** N
    idx = np.random.default_rng(0).choice(2 ** N, size=min(1000, 2 ** N), replace=False)
    np.testing.assert_allclose(dos.fidelities[idx], all_fidelities_direct(p, grid, idx), atol=1e-12)
    assert dos.optimal_fidelity == pytest.approx(dos.fidelities.max(), abs=1e-15)


def test_kflip_zero_is_the_optimum_and_one_flip_count():
    grid = TimeGrid(1.0, 10)
    dos = exhaustive_dos(QUBIT, grid, k_list=(0, 1, 2))
    assert dos.kflip[0] == pytest.approx([dos.optimal_fidelity], abs=1e-14)
    assert dos.kflip[1].size == 10 and dos.kflip[2].size == 45
    assert np.all(dos.kflip[1] <= dos.optimal_fidelity + 1e-14)


def test_histogram_independent_of_enumeration_order():
    grid = TimeGrid(1.0, 10)
    dos = exhaustive_dos(QUBIT, grid, keep_all=True)
    perm = np.random.default_rng(3).permutation(dos.fidelities)
    counts = np.bincount(np.minimum((perm / dos.bin_width).astype(int), dos.counts.size - 1),
                         minlength=dos.counts.size)
    np.testing.assert_array_equal(counts, dos.counts)


def test_count_above_best_one_flip_with_and_without_table():
    grid = TimeGrid(2.0, 12)
    p = make_problem(2)
    a = exhaustive_dos(p, grid, keep_all=True)
    b = exhaustive_dos(p, grid)
    assert a.n_above_best_1flip == b.n_above_best_1flip
    assert a.n_above_best_1flip == int(np.sum(a.fidelities > a.kflip[1].max()))


def test_exhaustive_optimum_beats_every_sd_restart():
    grid = TimeGrid(1.5, 14)
    dos = exhaustive_dos(QUBIT, grid)
    for r in ensemble_descend(QUBIT, grid, SDConfig(restarts=30), seed=1):
        assert r.fidelity <= dos.optimal_fidelity + 1e-12


def test_cap_and_memory_guard():
    with pytest.raises(CapExceededError):
        exhaustive_dos(QUBIT, TimeGrid(1.0, 31))
    with pytest.raises(CapExceededError):
        exhaustive_dos(QUBIT, TimeGrid(1.0, 20), max_bytes=1000)


def test_dos_outputs(tmp_path):
    import json
    dos = exhaustive_dos(QUBIT, TimeGrid(1.0, 8), k_list=(1, 2), bin_width=0.01)
    csv_path, json_path = write_dos(dos, tmp_path / "h.csv", tmp_path / "d.json")
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "F_bin_lo,count" and len(lines) == 101
    assert sum(int(x.split(",")[1]) for x in lines[1:]) == 256
    doc = json.loads(json_path.read_text())
    assert int(doc["optimal_bits"], 16) == dos.optimal_index
    assert len(doc["kflip_fidelities"]["2"]) == 28


def test_kflip_direct():
    grid = TimeGrid(1.0, 6)
    bits = np.array([1, 0, 1, 1, 0, 0])
    f = kflip_fidelities(QUBIT, grid, bits, 2)
    expect = []
    for i, j in itertools.combinations(range(6), 2):
        b = bits.copy()
        b[[i, j]] ^= 1
        expect.append(QUBIT.fidelity(Protocol.from_bits(grid, b)))
    np.testing.assert_allclose(f, expect, atol=1e-14)


def test_cluster_examples():
    h = np.array([[4.0, -4.0, 4.0]] * 3)
    [c] = cluster_attractors(list(h))
    assert c.population == 1.0 and c.spread == 0
    pair = [np.array([4.0, -4.0, 4.0]), np.array([-4.0, 4.0, -4.0])]
    assert len(cluster_attractors(pair, threshold=0.0)) == 2
    assert overlap_matrix(np.array(pair))[0, 1] == pytest.approx(-1.0)


def test_clusters_sorted_and_major_filter():
    g = np.random.default_rng(0)
    base = [g.choice([-4.0, 4.0], 30) for _ in range(3)]
    sizes = [12, 6, 2]
    hs = []
    for b, n in zip(base, sizes):
        for _ in range(n):
            x = b.copy()
            x[g.integers(0, 30)] *= -1
            hs.append(x)
    cl = cluster_attractors(hs, threshold=0.8)
    assert [c.members.size for c in cl] == sizes
    assert len(major_clusters(cl, 0.25)) == 2
    assert profile_overlap(cl[0].mean_profile, base[0]) > 0.9
