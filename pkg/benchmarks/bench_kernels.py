"""Compare the compiled and pure-numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Times the two hot kernels on a few shapes, then a full 1000-round ExtraPush run on
the five-node least-squares instance with each backend, and checks that both
backends produce bit-identical results.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from extrapush import graph as G
from extrapush import kernels

RUN_SNIPPET = """
import time, numpy as np
from extrapush import kernels, graph as G
from extrapush.objective import generate_experiment
from extrapush.solver import AlgorithmConfig, run_extrapush
exp = generate_experiment("ls", seed=0)
m = G.five_node_mixing()
cfg = AlgorithmConfig("extrapush", alpha=0.1, max_iters=1000)
t = time.perf_counter()
tr = run_extrapush(m, exp.objective, cfg, x_star=exp.x_star)
print(kernels.BACKEND, time.perf_counter() - t, repr(tr.err_opt[-1]))
"""


def bench(fn, repeat):
    number = max(1, int(0.05 / max(min(timeit.repeat(fn, number=1, repeat=3)), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled backend not built; only the numpy fallback is available")
    rng = np.random.default_rng(0)

    print(f"{'kernel':<10}{'n':>5}{'p':>6}" + "".join(f"{b:>14}" for b in backends) + f"{'speedup':>10}")
    for n, p in ((5, 256), (20, 64), (100, 16), (200, 256)):
        a = G.build_out_degree_mixing(G.random_strongly_connected(n, rng)).a
        z = [rng.standard_normal((n, p)) for _ in range(6)]
        for kernel, call in (("mix", lambda impl: kernels.mix(a, z[0], impl=impl)),
                             ("two_step", lambda impl: kernels.two_step(*z, 0.1, impl=impl))):
            times = {b: bench(lambda: call(impl), args.repeat) for b, impl in backends.items()}
            outs = [call(impl) for impl in backends.values()]
            assert all(np.array_equal(outs[0], o) for o in outs[1:]), "backends disagree"
            speed = times["python"] / times["cython"] if "cython" in times else float("nan")
            print(f"{kernel:<10}{n:>5}{p:>6}" + "".join(f"{times[b] * 1e6:>11.1f} us" for b in backends)
                  + f"{speed:>9.2f}x")

    print("\nfull run: ExtraPush, five-node example, least squares p=256, 1000 rounds")
    results = []
    for pure in ("", "1"):
        env = dict(os.environ, EXTRAPUSH_PURE_PYTHON=pure) if pure else {
            k: v for k, v in os.environ.items() if k != "EXTRAPUSH_PURE_PYTHON"}
        out = subprocess.run([sys.executable, "-c", RUN_SNIPPET], env=env, capture_output=True,
                             text=True, check=True).stdout.split()
        results.append(out)
        print(f"  {out[0]:<8} {float(out[1]):.3f} s   final error {out[2]}")
    if len({r[2] for r in results}) == 1:
        print("  final errors are bit-identical")
    else:
        print("  WARNING: final errors differ between backends")


if __name__ == "__main__":
    main()
