"""Compare the numba and numpy coordinate-descent kernels.

Two levels are timed:

* one cyclic sweep over all groups, calling both kernels in-process;
* a full group-lasso path solve, run in a fresh interpreter per backend so
  the ``SPECDECONF_BACKEND`` switch takes effect at import time.

Usage: ``python3 benchmarks/bench_backends.py [--n 150 --p 300 --K 9]``
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

PATH_SNIPPET = """
import json, time, warnings
import numpy as np
from specdeconf import _backend
from specdeconf.hdam import prepare
from specdeconf.grouplasso import solve_system
from specdeconf.simgen import SimConfig, gen_dataset
warnings.simplefilter("ignore")
d = gen_dataset(SimConfig(n={n}, p={p}, q=5, seed=1))
sysm = prepare(d.X, {K}).problem(d.Y, 0.0).system
lams = sysm.lambda_max * np.geomspace(1, 1e-2, 8)
solve_system(sysm, lams[1])  # compile / warm caches
t = time.perf_counter()
beta = None
for lam in lams:
    sol = solve_system(sysm, lam, beta, tol=1e-6, kkt_tol=1e-4)
    beta = sol.beta_tilde
print(json.dumps({{"backend": _backend.BACKEND, "seconds": time.perf_counter() - t}}))
"""


def time_sweeps(n, p, K, repeats):
    from specdeconf import _kernels

    rng = np.random.default_rng(0)
    Zt = rng.standard_normal((p, K, n))
    L = _kernels.block_curvatures(Zt, n)
    order = np.arange(p, dtype=np.int64)
    out = {}
    kernels = {"numpy": _kernels.cd_sweep_numpy}
    if _kernels.cd_sweep_numba is not None:
        kernels["numba"] = _kernels.cd_sweep_numba
    for name, fn in kernels.items():
        beta = np.zeros((p, K))
        rt = rng.standard_normal(n)
        fn(Zt, rt.copy(), beta.copy(), L, 0.1, order, n)  # warm-up / JIT
        best = np.inf
        for _ in range(repeats):
            b, r = beta.copy(), rt.copy()
            t = time.perf_counter()
            fn(Zt, r, b, L, 0.1, order, n)
            best = min(best, time.perf_counter() - t)
        out[name] = best
    return out


def time_path(n, p, K, backend):
    env = dict(os.environ, SPECDECONF_BACKEND=backend)
    code = PATH_SNIPPET.format(n=n, p=p, K=K)
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])["seconds"]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=150)
    ap.add_argument("--p", type=int, default=300)
    ap.add_argument("--K", type=int, default=9)
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--skip-path", action="store_true")
    args = ap.parse_args(argv)

    sweeps = time_sweeps(args.n, args.p, args.K, args.repeats)
    print(f"single sweep, n={args.n} p={args.p} K={args.K} (best of {args.repeats})")
    for name, sec in sweeps.items():
        print(f"  {name:6s} {sec * 1e3:9.3f} ms")
    if "numba" in sweeps:
        print(f"  speedup {sweeps['numpy'] / sweeps['numba']:.1f}x")
    if not args.skip_path:
        print("8-point warm-started path solve")
        path = {b: time_path(args.n, args.p, args.K, b) for b in ("numpy", "numba")}
        for name, sec in path.items():
            print(f"  {name:6s} {sec:9.3f} s")
        print(f"  speedup {path['numpy'] / path['numba']:.1f}x")


if __name__ == "__main__":
    main()
