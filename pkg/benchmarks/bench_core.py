"""Compare the compiled kernels with the numpy fallback.

Times one training step's worth of network work (forward pass with spatial
gradient, then the double-backprop parameter gradient) and the cyclic Jacobi
eigensolver, for both backends.  Run from the repository root::

    python3 benchmarks/bench_core.py
    python3 benchmarks/bench_core.py --repeat 50 --sizes 1000,4000
"""

import argparse
import time

import numpy as np

from cutoffeig import _kernels_py
from cutoffeig.net import MLP
from cutoffeig.problem import make_rng

try:
    from cutoffeig import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def _best_of(fn, repeat):
    fn()  # warm-up (workspace allocation, caches)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_mlp(mod, d, width, depth, n, repeat):
    net = MLP.initialize(d, width, depth, seed=0)
    x = make_rng(0).uniform(-1, 1, (n, d))
    rng = make_rng(1)
    alpha, gamma = rng.normal(size=n), rng.normal(size=(n, d))
    gw = [np.zeros_like(w) for w in net.weights]
    gb = [np.zeros_like(b) for b in net.biases]
    go = np.zeros(width + 1)
    ws = {}

    def step():
        _, _, cache = mod.mlp_forward(x, net.weights, net.biases, net.w_out, net.b_out, ws)
        mod.mlp_backward(cache, net.weights, net.w_out, alpha, gamma, gw, gb, go)

    return _best_of(step, repeat)


def bench_jacobi(mod, n, repeat):
    A = make_rng(n).normal(size=(n, n))
    A = A + A.T
    return _best_of(lambda: mod.jacobi_eigh(A.copy(), 1e-15, 100), repeat)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--sizes", default="250,1000,4000", help="batch sizes for the network step")
    p.add_argument("--dims", default="2,5", help="input dimensions")
    p.add_argument("--jacobi", default="32,96", help="matrix orders for the eigensolver")
    args = p.parse_args(argv)

    backends = [("python", _kernels_py)]
    if _kernels_c is not None:
        backends.insert(0, ("compiled", _kernels_c))
    else:
        print("compiled extension not built; timing the numpy fallback only")

    print(f"{'kernel':<34}" + "".join(f"{name:>12}" for name, _ in backends) + f"{'speedup':>10}")
    for d in (int(v) for v in args.dims.split(",")):
        for n in (int(v) for v in args.sizes.split(",")):
            t = [bench_mlp(mod, d, 40, 3, n, args.repeat) for _, mod in backends]
            label = f"mlp step d={d} n={n} (40x3)"
            speed = f"{t[-1] / t[0]:9.2f}x" if len(t) > 1 else ""
            print(f"{label:<34}" + "".join(f"{1e3 * v:10.3f}ms" for v in t) + f"{speed:>10}")
    for n in (int(v) for v in args.jacobi.split(",")):
        t = [bench_jacobi(mod, n, max(1, args.repeat // 4)) for _, mod in backends]
        label = f"jacobi n={n}"
        speed = f"{t[-1] / t[0]:9.2f}x" if len(t) > 1 else ""
        print(f"{label:<34}" + "".join(f"{1e3 * v:10.3f}ms" for v in t) + f"{speed:>10}")


if __name__ == "__main__":
    main()
