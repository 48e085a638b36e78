"""Time the numpy and numba kernel backends against each other.

    python benchmarks/bench_kernels.py [--repeat 5] [--size 32]
"""
import argparse
import timeit

import numpy as np

from nnlrp import _kernels
from nnlrp.fixtures import random_network
from nnlrp.graph import forward
from nnlrp.lrp import RuleAssignment, explain


def cases(size, rng):
    x = rng.normal(size=(16, size, size))
    w = rng.normal(size=(32, 16, 3, 3))
    y = _kernels.load_backend("numpy").conv2d(x, w, 1, 1)
    g = rng.normal(size=y.shape)
    _, arg = _kernels.load_backend("numpy").maxpool2d(x, 2, 2)
    gp = rng.normal(size=arg.shape)
    return {
        "conv2d": lambda m: m.conv2d(x, w, 1, 1),
        "conv2d_transpose": lambda m: m.conv2d_transpose(g, w, size, size, 1, 1),
        "conv2d_weight_grad": lambda m: m.conv2d_weight_grad(x, g, 3, 3, 1, 1),
        "maxpool2d": lambda m: m.maxpool2d(x, 2, 2),
        "maxpool2d_scatter": lambda m: m.maxpool2d_scatter(gp, arg, size, size),
        "window_sum": lambda m: m.window_sum(x, 2, 2),
        "window_spread": lambda m: m.window_spread(gp, 2, 2, size, size),
    }


def best(fn, repeat):
    fn()  # warm-up (jit compile / cache load)
    number = 3
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--size", type=int, default=32)
    args = p.parse_args()
    names = [n for n in ("numpy", "numba") if _try(n)]
    rng = np.random.default_rng(0)
    table = cases(args.size, rng)
    print(f"{'kernel':<22}" + "".join(f"{n:>12}" for n in names) + ("   speedup" if len(names) == 2 else ""))
    for name, fn in table.items():
        times = [best(lambda: fn(_kernels.load_backend(b)), args.repeat) for b in names]
        row = f"{name:<22}" + "".join(f"{t * 1e3:>10.3f}ms" for t in times)
        if len(times) == 2:
            row += f"   {times[0] / times[1]:>6.1f}x"
        print(row)

    net = random_network(np.random.default_rng(1), input_shape=(3, 24, 24), depth=4, branch=True)
    x = np.random.default_rng(2).normal(size=net.input_shape)
    rules = RuleAssignment.default(net)
    times = []
    for b in names:
        _kernels.set_backend(b)
        times.append(best(lambda: explain(net, forward(net, x), 0, rules), args.repeat))
    row = f"{'forward+explain':<22}" + "".join(f"{t * 1e3:>10.3f}ms" for t in times)
    if len(times) == 2:
        row += f"   {times[0] / times[1]:>6.1f}x"
    print(row)


def _try(name):
    try:
        _kernels.load_backend(name)
        return True
    except ImportError:
        return False


if __name__ == "__main__":
    main()
