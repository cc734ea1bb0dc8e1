"""Pure-Python/numpy versions of the hot loops.

Every function here has a twin in ``_ckernels.pyx`` with the same signature and
the same consumption of random numbers, so the two back ends give identical
results for identical inputs.
"""
import math

import numpy as np

TRACE_CUTOFF = 1e-10
LEGAL_TOL = 1e-9
GREEDY_TOL = 1e-12


def chain_apply(props, idx, psi):
    out = np.array(psi, dtype=complex)
    for k in idx:
        out = props[k] @ out
    return out


def chain_forward(props, idx, states, start, stop):
    """states[n + 1] = U[idx[n]] states[n] for n in [start, stop)."""
    for n in range(start, stop):
        states[n + 1] = props[idx[n]] @ states[n]


def chain_backward(props, idx, costates, start, stop):
    """costates[n] = U[idx[n]]^dagger costates[n + 1] for n = stop-1 down to start."""
    for n in range(stop - 1, start - 1, -1):
        costates[n] = props[idx[n]].conj().T @ costates[n + 1]


def sd_bang_bang(props, psi_i, psi_star, bits, uniforms, budget):
    """Single-flip stochastic descent on a bang-bang protocol.

    ``props[0]`` / ``props[1]`` are the one-bin propagators for the negative and
    positive field; ``bits`` is modified in place. Proposals are drawn without
    replacement from the bins not yet tried since the last accepted flip, so an
    exhausted pool certifies a 1-flip local maximum of the fidelity.

    Returns ``(n_evals, certified, trace)``.
    """
    N = bits.shape[0]
    dim = psi_i.shape[0]
    idx = bits.astype(np.intp)
    states = np.empty((N + 1, dim), dtype=complex)
    costates = np.empty((N + 1, dim), dtype=complex)
    states[0] = psi_i
    costates[N] = psi_star
    chain_forward(props, idx, states, 0, N)
    amp = np.vdot(psi_star, states[N])
    fid = amp.real ** 2 + amp.imag ** 2
    fwd_valid = N   # states[0..fwd_valid] are current
    bwd_valid = N   # costates[bwd_valid..N] are current
    trace = np.empty(max(budget, 1))
    trace[0] = fid
    n_evals = 1
    pool = np.arange(N, dtype=np.intp)
    remaining = N
    used = 0
    while n_evals < budget and remaining > 0:
        j = int(uniforms[used] * remaining)
        used += 1
        if j >= remaining:
            j = remaining - 1
        n = pool[j]
        pool[j] = pool[remaining - 1]
        pool[remaining - 1] = n
        remaining -= 1
        if fwd_valid < n:
            chain_forward(props, idx, states, fwd_valid, n)
            fwd_valid = n
        if bwd_valid > n + 1:
            chain_backward(props, idx, costates, n + 1, bwd_valid)
            bwd_valid = n + 1
        trial = props[1 - idx[n]] @ states[n]
        amp = np.vdot(costates[n + 1], trial)
        f_new = amp.real ** 2 + amp.imag ** 2
        if f_new > fid:
            fid = f_new
            idx[n] = 1 - idx[n]
            bits[n] = idx[n]
            fwd_valid = min(fwd_valid, n)
            bwd_valid = max(bwd_valid, n + 1)
            # the bin just flipped can only get worse; keep it out of the pool
            pool[remaining] = pool[N - 1]
            pool[N - 1] = n
            remaining = N - 1
        trace[n_evals] = fid
        n_evals += 1
    return n_evals, remaining == 0, trace[:n_evals].copy()


def _tile(h, k, lo, width, n_tilings, n_tiles):
    t = int(math.floor((h - lo) / width + k / n_tilings))
    return min(max(t, 0), n_tiles)


def rl_q_values(weights, t, h, deltas, lo, hi):
    """Q(s, a) for every action at state ``(t, h)``; illegal actions get -inf."""
    n_actions, n_tilings, n_tp1 = weights.shape[1:]
    n_tiles = n_tp1 - 1
    width = (hi - lo) / n_tiles
    tiles = [_tile(h, k, lo, width, n_tilings, n_tiles) for k in range(n_tilings)]
    q = np.full(n_actions, -np.inf)
    for a in range(n_actions):
        hn = h + deltas[a]
        if lo - LEGAL_TOL <= hn <= hi + LEGAL_TOL:
            q[a] = sum(weights[t, a, k, tiles[k]] for k in range(n_tilings))
    return q


def _step_field(h, delta, lo, hi):
    return min(max(h + delta, lo), hi)


def _sample(q, beta, u):
    """Inverse-CDF draw from softmax(beta * q) over finite entries; lowest index wins ties."""
    n = len(q)
    qmax = -math.inf
    best = -1
    for a in range(n):
        if q[a] > qmax:
            qmax = q[a]
            best = a
    if math.isinf(beta):
        return best
    total = 0.0
    for a in range(n):
        if q[a] != -math.inf:
            total += math.exp(beta * (q[a] - qmax))
    target = u * total
    c = 0.0
    last = best
    for a in range(n):
        if q[a] != -math.inf:
            c += math.exp(beta * (q[a] - qmax))
            last = a
            if c > target:
                return a
    return last


def rl_select(weights, h0, deltas, lo, hi, beta, uniforms, replay):
    """Roll out one episode's actions.

    ``replay`` is an action-index array to follow verbatim, or ``None`` for
    softmax sampling at inverse temperature ``beta`` (``inf`` means greedy).
    Returns ``(actions, fields)`` with ``fields[n]`` the field at step ``n``.
    """
    N = weights.shape[0]
    actions = np.empty(N, dtype=np.intp)
    fields = np.empty(N + 1)
    fields[0] = h0
    h = h0
    for n in range(N):
        if replay is not None:
            a = int(replay[n])
        else:
            q = rl_q_values(weights, n, h, deltas, lo, hi)
            a = _sample(q, beta, uniforms[n])
        actions[n] = a
        h = _step_field(h, deltas[a], lo, hi)
        fields[n + 1] = h
    return actions, fields


def rl_learn(weights, actions, fields, reward, alpha, lam, watkins, deltas, lo, hi):
    """Watkins Q(lambda) updates for one finished episode, in time order.

    Features are crossed with the exact time index, so each step owns a
    distinct feature set and replacing traces reduce to ``lam ** age``.
    """
    N, n_actions, n_tilings, n_tp1 = weights.shape
    n_tiles = n_tp1 - 1
    width = (hi - lo) / n_tiles
    step = alpha / n_tilings
    tiles = [[_tile(fields[n], k, lo, width, n_tilings, n_tiles)
              for k in range(n_tilings)] for n in range(N + 1)]
    cut = 0
    for m in range(N):
        a = actions[m]
        q_sa = sum(weights[m, a, k, tiles[m][k]] for k in range(n_tilings))
        if m == N - 1:
            target = reward
        else:
            q_next = rl_q_values(weights, m + 1, fields[m + 1], deltas, lo, hi)
            target = float(np.max(q_next))
        delta = target - q_sa
        c = 1.0
        for n in range(m, cut - 1, -1):
            if c < TRACE_CUTOFF:
                break
            an = actions[n]
            for k in range(n_tilings):
                weights[n, an, k, tiles[n][k]] += step * delta * c
            c *= lam
        if watkins and m < N - 1:
            q_next = rl_q_values(weights, m + 1, fields[m + 1], deltas, lo, hi)
            if q_next[actions[m + 1]] < np.max(q_next) - GREEDY_TOL:
                cut = m + 1
