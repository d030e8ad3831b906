"""Compare the numba and numpy kernel backends.

Each backend runs in its own interpreter because the backend is fixed at
import time. Usage::

    python benchmarks/bench_kernels.py [--L 20] [--N 2500] [--repeat 50]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from betafact import _kernels
from betafact.models import ModelKind, ModelSpec, Theta
from betafact.solvers import SolverConfig, fit

L, N, repeat = int(sys.argv[1]), int(sys.argv[2]), int(sys.argv[3])
rng = np.random.default_rng(0)
Y = rng.gamma(2.0, 0.5, size=(L, N)) + 1e-3
X = rng.gamma(2.0, 0.5, size=(L, N)) + 1e-3

def best(f):
    f()  # warm-up (includes JIT compilation on first call)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        f()
        times.append(time.perf_counter() - t0)
    return min(times)

out = {"backend": _kernels.BACKEND, "kernels": {}, "fit": {}}
for beta in (0.0, 0.5, 1.0, 1.5, 2.0):
    out["kernels"][str(beta)] = {
        "beta_div_sum": best(lambda: _kernels.beta_div_sum(Y, X, beta)),
        "power_terms": best(lambda: _kernels.power_terms(Y, X, beta)),
        "power_terms_cols": best(lambda: _kernels.power_terms_cols(Y, X, beta)),
    }
    K = 4
    M = rng.uniform(0.1, 1.0, size=(L, K))
    A = rng.dirichlet(np.ones(K), size=N).T
    theta = Theta(M, A)
    cfg = SolverConfig(epsilon=1e-300, max_iter=100)
    spec = ModelSpec(ModelKind.LMM, beta)
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fit(Y, spec, theta, SolverConfig(max_iter=2))
        t0 = time.perf_counter()
        fit(Y, spec, theta, cfg)
    out["fit"][str(beta)] = (time.perf_counter() - t0) / 100
print(json.dumps(out))
"""


def run(backend, L, N, repeat):
    env = dict(os.environ, BETAFACT_BACKEND=backend)
    proc = subprocess.run(
        [sys.executable, "-c", WORKER, str(L), str(N), str(repeat)],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(proc.stdout)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--L", type=int, default=20)
    p.add_argument("--N", type=int, default=2500)
    p.add_argument("--repeat", type=int, default=50)
    args = p.parse_args(argv)

    res = {b: run(b, args.L, args.N, args.repeat) for b in ("numba", "numpy")}
    if res["numba"]["backend"] != "numba":
        print("numba is not importable; only the numpy backend was timed")
    print(f"L={args.L} N={args.N}; best of {args.repeat}, microseconds")
    print(f"{'beta':>5} {'kernel':>17} {'numba':>10} {'numpy':>10} {'speedup':>8}")
    for beta, kern in res["numba"]["kernels"].items():
        for name, t_nb in kern.items():
            t_np = res["numpy"]["kernels"][beta][name]
            print(f"{beta:>5} {name:>17} {t_nb * 1e6:10.1f} {t_np * 1e6:10.1f} {t_np / t_nb:8.2f}")
    print("\nLMM iteration (all blocks + objective), milliseconds")
    for beta, t_nb in res["numba"]["fit"].items():
        t_np = res["numpy"]["fit"][beta]
        print(f"{beta:>5} {t_nb * 1e3:10.3f} {t_np * 1e3:10.3f} {t_np / t_nb:8.2f}")


if __name__ == "__main__":
    main()
