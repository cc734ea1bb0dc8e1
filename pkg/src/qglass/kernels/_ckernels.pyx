# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Mirrors ``_fallback`` operation for operation."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, floor, INFINITY, isinf

cnp.import_array()

ctypedef double complex cplx

cdef double TRACE_CUTOFF = 1e-10
cdef double LEGAL_TOL = 1e-9
cdef double GREEDY_TOL = 1e-12


cdef inline void _matvec(const cplx[:, :] U, const cplx[:] x, cplx[:] y) noexcept nogil:
    cdef Py_ssize_t i, j, d = U.shape[0]
    cdef cplx acc
    for i in range(d):
        acc = 0
        for j in range(d):
            acc = acc + U[i, j] * x[j]
        y[i] = acc


cdef inline void _matvec_h(const cplx[:, :] U, const cplx[:] x, cplx[:] y) noexcept nogil:
    # y = U^dagger x
    cdef Py_ssize_t i, j, d = U.shape[0]
    for i in range(d):
        y[i] = 0
    for j in range(d):
        for i in range(d):
            y[i] = y[i] + U[j, i].conjugate() * x[j]


cdef inline cplx _vdot(const cplx[:] a, const cplx[:] b) noexcept nogil:
    cdef Py_ssize_t i
    cdef cplx acc = 0
    for i in range(a.shape[0]):
        acc = acc + a[i].conjugate() * b[i]
    return acc


def chain_apply(const cplx[:, :, :] props, const Py_ssize_t[:] idx, psi):
    cdef Py_ssize_t d = props.shape[1], n, N = idx.shape[0]
    a_arr = np.array(psi, dtype=np.complex128)
    b_arr = np.empty(d, dtype=np.complex128)
    cdef cplx[:] a = a_arr
    cdef cplx[:] b = b_arr
    cdef cplx[:] tmp
    with nogil:
        for n in range(N):
            _matvec(props[idx[n]], a, b)
            tmp = a
            a = b
            b = tmp
    return np.asarray(a).copy()


def chain_forward(const cplx[:, :, :] props, const Py_ssize_t[:] idx, cplx[:, :] states,
                  Py_ssize_t start, Py_ssize_t stop):
    cdef Py_ssize_t n
    with nogil:
        for n in range(start, stop):
            _matvec(props[idx[n]], states[n], states[n + 1])


def chain_backward(const cplx[:, :, :] props, const Py_ssize_t[:] idx, cplx[:, :] costates,
                   Py_ssize_t start, Py_ssize_t stop):
    cdef Py_ssize_t n
    with nogil:
        for n in range(stop - 1, start - 1, -1):
            _matvec_h(props[idx[n]], costates[n + 1], costates[n])


def sd_bang_bang(const cplx[:, :, :] props, psi_i, psi_star, cnp.int8_t[:] bits,
                 const double[:] uniforms, Py_ssize_t budget):
    cdef Py_ssize_t N = bits.shape[0]
    cdef Py_ssize_t dim = props.shape[1]
    idx_arr = np.asarray(bits).astype(np.intp)
    states_arr = np.empty((N + 1, dim), dtype=np.complex128)
    costates_arr = np.empty((N + 1, dim), dtype=np.complex128)
    states_arr[0] = psi_i
    costates_arr[N] = psi_star
    trace_arr = np.empty(max(budget, 1))
    pool_arr = np.arange(N, dtype=np.intp)
    trial_arr = np.empty(dim, dtype=np.complex128)
    cdef Py_ssize_t[:] idx = idx_arr
    cdef cplx[:, :] states = states_arr
    cdef cplx[:, :] costates = costates_arr
    cdef double[:] trace = trace_arr
    cdef Py_ssize_t[:] pool = pool_arr
    cdef cplx[:] trial = trial_arr
    cdef Py_ssize_t fwd_valid = N, bwd_valid = N, n_evals = 1, remaining = N, used = 0
    cdef Py_ssize_t j, n, m
    cdef cplx amp
    cdef double fid, f_new
    with nogil:
        for m in range(N):
            _matvec(props[idx[m]], states[m], states[m + 1])
        amp = _vdot(costates[N], states[N])
        fid = amp.real * amp.real + amp.imag * amp.imag
        trace[0] = fid
        while n_evals < budget and remaining > 0:
            j = <Py_ssize_t>(uniforms[used] * remaining)
            used += 1
            if j >= remaining:
                j = remaining - 1
            n = pool[j]
            pool[j] = pool[remaining - 1]
            pool[remaining - 1] = n
            remaining -= 1
            if fwd_valid < n:
                for m in range(fwd_valid, n):
                    _matvec(props[idx[m]], states[m], states[m + 1])
                fwd_valid = n
            if bwd_valid > n + 1:
                for m in range(bwd_valid - 1, n, -1):
                    _matvec_h(props[idx[m]], costates[m + 1], costates[m])
                bwd_valid = n + 1
            _matvec(props[1 - idx[n]], states[n], trial)
            amp = _vdot(costates[n + 1], trial)
            f_new = amp.real * amp.real + amp.imag * amp.imag
            if f_new > fid:
                fid = f_new
                idx[n] = 1 - idx[n]
                bits[n] = <cnp.int8_t>idx[n]
                if n < fwd_valid:
                    fwd_valid = n
                if n + 1 > bwd_valid:
                    bwd_valid = n + 1
                pool[remaining] = pool[N - 1]
                pool[N - 1] = n
                remaining = N - 1
            trace[n_evals] = fid
            n_evals += 1
    return n_evals, remaining == 0, trace_arr[:n_evals].copy()


cdef inline Py_ssize_t _tile(double h, Py_ssize_t k, double lo, double width,
                             Py_ssize_t n_tilings, Py_ssize_t n_tiles) noexcept nogil:
    cdef Py_ssize_t t = <Py_ssize_t>floor((h - lo) / width + (<double>k) / n_tilings)
    if t < 0:
        return 0
    if t > n_tiles:
        return n_tiles
    return t


cdef void _q_values(const double[:, :, :, :] w, Py_ssize_t t, double h, const double[:] deltas,
                    double lo, double hi, double[:] q) noexcept nogil:
    cdef Py_ssize_t n_actions = w.shape[1], n_tilings = w.shape[2], n_tiles = w.shape[3] - 1
    cdef double width = (hi - lo) / n_tiles
    cdef Py_ssize_t a, k
    cdef double hn, acc
    for a in range(n_actions):
        hn = h + deltas[a]
        if lo - LEGAL_TOL <= hn and hn <= hi + LEGAL_TOL:
            acc = 0.0
            for k in range(n_tilings):
                acc = acc + w[t, a, k, _tile(h, k, lo, width, n_tilings, n_tiles)]
            q[a] = acc
        else:
            q[a] = -INFINITY


cdef Py_ssize_t _sample(const double[:] q, double beta, double u) noexcept nogil:
    cdef Py_ssize_t n = q.shape[0], a, best = -1, last
    cdef double qmax = -INFINITY, total = 0.0, target, c = 0.0
    for a in range(n):
        if q[a] > qmax:
            qmax = q[a]
            best = a
    if isinf(beta):
        return best
    for a in range(n):
        if q[a] != -INFINITY:
            total = total + exp(beta * (q[a] - qmax))
    target = u * total
    last = best
    for a in range(n):
        if q[a] != -INFINITY:
            c = c + exp(beta * (q[a] - qmax))
            last = a
            if c > target:
                return a
    return last


def rl_q_values(const double[:, :, :, :] weights, Py_ssize_t t, double h, const double[:] deltas,
                double lo, double hi):
    q_arr = np.empty(weights.shape[1])
    _q_values(weights, t, h, deltas, lo, hi, q_arr)
    return q_arr


def rl_select(const double[:, :, :, :] weights, double h0, const double[:] deltas, double lo,
              double hi, double beta, const double[:] uniforms, replay):
    cdef Py_ssize_t N = weights.shape[0], n, a
    actions_arr = np.empty(N, dtype=np.intp)
    fields_arr = np.empty(N + 1)
    q_arr = np.empty(weights.shape[1])
    cdef Py_ssize_t[:] actions = actions_arr
    cdef double[:] fields = fields_arr
    cdef double[:] q = q_arr
    cdef Py_ssize_t[:] rep
    cdef bint do_replay = replay is not None
    cdef double h = h0
    if do_replay:
        rep = np.ascontiguousarray(replay, dtype=np.intp)
    fields[0] = h0
    with nogil:
        for n in range(N):
            if do_replay:
                a = rep[n]
            else:
                _q_values(weights, n, h, deltas, lo, hi, q)
                a = _sample(q, beta, uniforms[n])
            actions[n] = a
            h = h + deltas[a]
            if h < lo:
                h = lo
            if h > hi:
                h = hi
            fields[n + 1] = h
    return actions_arr, fields_arr


def rl_learn(double[:, :, :, :] weights, const Py_ssize_t[:] actions, const double[:] fields,
             double reward, double alpha, double lam, bint watkins, const double[:] deltas,
             double lo, double hi):
    cdef Py_ssize_t N = weights.shape[0], n_actions = weights.shape[1]
    cdef Py_ssize_t n_tilings = weights.shape[2], n_tiles = weights.shape[3] - 1
    cdef double width = (hi - lo) / n_tiles
    cdef double step = alpha / n_tilings
    tiles_arr = np.empty((N + 1, n_tilings), dtype=np.intp)
    q_arr = np.empty(n_actions)
    cdef Py_ssize_t[:, :] tiles = tiles_arr
    cdef double[:] q = q_arr
    cdef Py_ssize_t m, n, k, a, an, b, cut = 0
    cdef double q_sa, target, delta, c, qmax
    with nogil:
        for n in range(N + 1):
            for k in range(n_tilings):
                tiles[n, k] = _tile(fields[n], k, lo, width, n_tilings, n_tiles)
        for m in range(N):
            a = actions[m]
            q_sa = 0.0
            for k in range(n_tilings):
                q_sa = q_sa + weights[m, a, k, tiles[m, k]]
            if m == N - 1:
                target = reward
            else:
                _q_values(weights, m + 1, fields[m + 1], deltas, lo, hi, q)
                target = -INFINITY
                for b in range(n_actions):
                    if q[b] > target:
                        target = q[b]
            delta = target - q_sa
            c = 1.0
            n = m
            while n >= cut:
                if c < TRACE_CUTOFF:
                    break
                an = actions[n]
                for k in range(n_tilings):
                    weights[n, an, k, tiles[n, k]] += step * delta * c
                c = c * lam
                n -= 1
            if watkins and m < N - 1:
                _q_values(weights, m + 1, fields[m + 1], deltas, lo, hi, q)
                qmax = -INFINITY
                for b in range(n_actions):
                    if q[b] > qmax:
                        qmax = q[b]
                if q[actions[m + 1]] < qmax - GREEDY_TOL:
                    cut = m + 1
