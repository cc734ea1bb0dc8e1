"""The compiled kernels and the numpy fallback must agree on identical inputs."""
import importlib

import numpy as np
import pytest

from qglass import kernels
from qglass.kernels import _fallback
from qglass.problem import make_problem
from qglass.protocols import TimeGrid
from qglass.rl import ActionSet, QFunction, RLState, q_update

try:
    _c = importlib.import_module("qglass.kernels._ckernels")
except ImportError:  # pragma: no cover - extension not built
    _c = None

needs_c = pytest.mark.skipif(_c is None, reason="compiled kernels not built")
LO, HI = -4.0, 4.0


def _props(L=4, N=10, T=1.0):
    p = make_problem(L)
    return p, p.bang_bang_propagators(TimeGrid(T, N))


def test_backend_flag():
    assert kernels.BACKEND in ("cython", "python")


@needs_c
def test_chain_kernels_agree(gen):
    p, props = _props()
    idx = gen.integers(0, 2, 25).astype(np.intp)
    a = _c.chain_apply(props, idx, p.psi_i)
    b = _fallback.chain_apply(props, idx, p.psi_i)
    np.testing.assert_allclose(a, b, atol=1e-13)
    s1 = np.zeros((26, p.dim), complex)
    s2 = np.zeros((26, p.dim), complex)
    s1[0] = s2[0] = p.psi_i
    _c.chain_forward(props, idx, s1, 0, 25)
    _fallback.chain_forward(props, idx, s2, 0, 25)
    np.testing.assert_allclose(s1, s2, atol=1e-13)
    c1 = np.zeros_like(s1)
    c2 = np.zeros_like(s2)
    c1[25] = c2[25] = p.psi_star
    _c.chain_backward(props, idx, c1, 0, 25)
    _fallback.chain_backward(props, idx, c2, 0, 25)
    np.testing.assert_allclose(c1, c2, atol=1e-13)


@needs_c
@pytest.mark.parametrize("seed", range(5))
def test_sd_kernel_agrees(seed):
    p, props = _props(L=4, N=16, T=2.0)
    g = np.random.default_rng(seed)
    bits0 = g.integers(0, 2, 16).astype(np.int8)
    u = g.random(1000)
    b1, b2 = bits0.copy(), bits0.copy()
    r1 = _c.sd_bang_bang(props, p.psi_i, p.psi_star, b1, u, 320)
    r2 = _fallback.sd_bang_bang(props, p.psi_i, p.psi_star, b2, u, 320)
    assert r1[0] == r2[0] and r1[1] == r2[1]
    np.testing.assert_array_equal(b1, b2)
    np.testing.assert_allclose(r1[2], r2[2], atol=1e-12)


@needs_c
def test_rl_kernels_agree(gen):
    deltas = ActionSet.bang_bang().array
    w = gen.normal(size=(12, 3, 5, 21))
    u = gen.random(12)
    a1, f1 = _c.rl_select(w, -4.0, deltas, LO, HI, 3.0, u, None)
    a2, f2 = _fallback.rl_select(w, -4.0, deltas, LO, HI, 3.0, u, None)
    np.testing.assert_array_equal(a1, a2)
    np.testing.assert_array_equal(f1, f2)
    w1, w2 = w.copy(), w.copy()
    _c.rl_learn(w1, a1, f1, 0.7, 0.1, 0.6, True, deltas, LO, HI)
    _fallback.rl_learn(w2, a2, f2, 0.7, 0.1, 0.6, True, deltas, LO, HI)
    np.testing.assert_allclose(w1, w2, atol=1e-13)
    for h in (-4.0, -0.3, 0.0, 4.0):
        np.testing.assert_array_equal(_c.rl_q_values(w, 3, h, deltas, LO, HI),
                                      _fallback.rl_q_values(w, 3, h, deltas, LO, HI))


@pytest.mark.parametrize("watkins", [True, False])
@pytest.mark.parametrize("actions", [ActionSet.bang_bang(), ActionSet.quasi_continuous()])
def test_batched_learning_equals_online_q_update(gen, watkins, actions):
    """One episode through ``rl_learn`` equals the step-by-step reference ``q_update``."""
    N = 10
    ref = QFunction(N, actions, watkins=watkins)
    ref.weights[:] = gen.normal(scale=0.1, size=ref.weights.shape)
    w = ref.weights.copy()
    acts, fields = kernels.rl_select(w, -4.0, actions.array, LO, HI, 2.0, gen.random(N), None)
    reward = 0.83
    kernels.rl_learn(w, acts, fields, reward, ref.alpha, ref.trace_decay, watkins, actions.array, LO, HI)
    ref.reset_traces()
    for n in range(N):
        s = RLState(n, fields[n])
        last = n == N - 1
        q_update(ref, s, int(acts[n]), reward if last else 0.0, None if last else RLState(n + 1, fields[n + 1]),
                 None if last else int(acts[n + 1]))
    np.testing.assert_allclose(w, ref.weights, atol=1e-9)
