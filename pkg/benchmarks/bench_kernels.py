"""Compare the compiled and pure-Python kernel backends.

Usage::

    python benchmarks/bench_kernels.py [--p 4] [--repeat 5] [--end-to-end]

Kernel timings are per call on a batch of ``p`` robots. ``--end-to-end``
also times a 5 s closed-loop run in a subprocess per backend, since the
backend is fixed at import.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from lagsync import kernels
from lagsync.dynamics import default_model

RUN_SNIPPET = """
import time
from lagsync.config import build_experiment, load_preset
from lagsync.simulator import Simulator
exp = build_experiment(load_preset("fig4"), t_final={t})
t0 = time.perf_counter()
Simulator(exp.scenario, exp.sim).run()
print(time.perf_counter() - t0)
"""


def kernel_cases(model, p, rng):
    n = model.n
    a, g = model.batch_args(p)
    q, qd, v, acc, tau = (rng.standard_normal((p, n)) for _ in range(5))
    L = np.kron(np.eye(p), 5 * np.eye(n)) - np.kron(np.roll(np.eye(p), 1, 0) + np.roll(np.eye(p), -1, 0),
                                                    np.eye(n))
    lam = np.full(n, 5.0)
    code = model.code
    return {
        "mcg": lambda k: k.mcg(code, a, g, q, qd),
        "forward_dynamics": lambda k: k.forward_dynamics(code, a, g, q, qd, tau),
        "regressor": lambda k: k.regressor(code, g, q, qd, v, acc),
        "closed_loop": lambda k: k.closed_loop(code, a, g, q, qd, v, acc, tau, lam, L,
                                               kernels.FF_INVERSE, None),
    }


def bench_kernels(p, repeat, number=2000):
    rng = np.random.default_rng(0)
    backends = kernels.available_backends()
    rows = []
    for kind in ("two-link-arm", "cart-double-pendulum"):
        model = default_model(kind)
        for name, fn in kernel_cases(model, p, rng).items():
            times = {}
            for b in backends:
                mod = kernels.get_backend(b)
                best = min(timeit.repeat(lambda: fn(mod), number=number, repeat=repeat)) / number
                times[b] = best * 1e6
            rows.append((kind, name, times))
    return backends, rows


def bench_end_to_end(t_final=5.0):
    out = {}
    for b in kernels.available_backends():
        env = dict(os.environ)
        env.pop("LAGSYNC_PURE_PYTHON", None)
        if b == "python":
            env["LAGSYNC_PURE_PYTHON"] = "1"
        res = subprocess.run([sys.executable, "-c", RUN_SNIPPET.format(t=t_final)],
                             env=env, capture_output=True, text=True, check=True)
        out[b] = float(res.stdout.strip().splitlines()[-1])
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--p", type=int, default=4, help="robots per batch")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args(argv)

    backends, rows = bench_kernels(args.p, args.repeat)
    print(f"active backend: {kernels.BACKEND}; batch p={args.p}; microseconds per call")
    print(f"{'model':22s} {'kernel':18s} " + " ".join(f"{b:>9s}" for b in backends) +
          ("   speedup" if len(backends) > 1 else ""))
    for kind, name, times in rows:
        line = f"{kind:22s} {name:18s} " + " ".join(f"{times[b]:9.2f}" for b in backends)
        if len(backends) > 1:
            line += f"   {times['python'] / times['cython']:7.1f}x"
        print(line)
    if args.end_to_end:
        e2e = bench_end_to_end()
        print("\nfig4 preset, 5 s simulated:")
        for b, sec in e2e.items():
            print(f"  {b:8s} {sec:6.2f} s")


if __name__ == "__main__":
    main()
