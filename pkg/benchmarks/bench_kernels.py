"""Time the compiled kernels against the pure-Python fallback on identical inputs.

    python3 benchmarks/bench_kernels.py [--repeat N] [--json out.json]

Each workload is a realistic unit of work: one full SD descent, one RL
episode (action selection plus the trace update), one protocol propagation.
"""
import argparse
import json
import statistics
import time

import numpy as np

from qglass.kernels import _fallback
from qglass.problem import make_problem
from qglass.protocols import TimeGrid
from qglass.rl import ActionSet

try:
    from qglass.kernels import _ckernels
except ImportError:
    _ckernels = None


def _time(fn, repeat):
    fn()  # warm up
    runs = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        runs.append(time.perf_counter() - t)
    return statistics.median(runs)


def workloads():
    gen = np.random.default_rng(0)
    out = {}
    for L, T, N in ((1, 2.0, 60), (6, 3.2, 28)):
        p = make_problem(L)
        props = p.bang_bang_propagators(TimeGrid(T, N))
        bits = gen.integers(0, 2, N).astype(np.int8)
        u = gen.random(20 * N)

        def sd(k, props=props, p=p, bits=bits, u=u, N=N):
            k.sd_bang_bang(props, p.psi_i, p.psi_star, bits.copy(), u, 20 * N)
        out[f"sd descent L={L} N_T={N}"] = sd

        idx = gen.integers(0, 2, N).astype(np.intp)

        def chain(k, props=props, p=p, idx=idx):
            k.chain_apply(props, idx, p.psi_i)
        out[f"propagate L={L} N_T={N}"] = chain

    for name, actions in (("bang-bang", ActionSet.bang_bang()), ("quasi-continuous", ActionSet.quasi_continuous())):
        deltas = actions.array
        w = gen.normal(scale=0.1, size=(60, len(actions), 5, 21))
        u = gen.random(60)

        def episode(k, w=w, u=u, deltas=deltas):
            ww = w.copy()
            acts, fields = k.rl_select(ww, -4.0, deltas, -4.0, 4.0, 5.0, u, None)
            k.rl_learn(ww, acts, fields, 0.7, 0.1, 0.6, True, deltas, -4.0, 4.0)
        out[f"rl episode {name} N_T=60"] = episode
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--json", help="also write the timings here")
    args = ap.parse_args(argv)
    if _ckernels is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
    rows = []
    print(f"{'workload':36s} {'cython ms':>10s} {'python ms':>10s} {'speedup':>8s}")
    for name, fn in workloads().items():
        tc = _time(lambda: fn(_ckernels), args.repeat)
        tp = _time(lambda: fn(_fallback), max(3, args.repeat // 5))
        rows.append({"workload": name, "cython_s": tc, "python_s": tp, "speedup": tp / tc})
        print(f"{name:36s} {tc * 1e3:10.3f} {tp * 1e3:10.3f} {tp / tc:7.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
