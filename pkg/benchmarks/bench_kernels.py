"""Compiled vs pure-Python kernels.

    python benchmarks/bench_kernels.py [--repeat 5]

Times the two hot kernels on batch sizes typical of the experiments and checks
that both backends agree before reporting.
"""
import argparse
import timeit

import numpy as np

from flowguide._kernels import _py
from flowguide.mixture import component_tables
from flowguide.presets import eight_class_8d

try:
    from flowguide._kernels import _cy
except ImportError:
    _cy = None


def cases():
    spec = eight_class_8d()
    rng = np.random.default_rng(0)
    for n in (64, 256, 1024):
        X = rng.normal(size=(n, 8)) * 2
        tables = component_tables(spec, None, 0.4)
        yield f"mixture_velocity n={n} K=16 d=8", "mixture_velocity", (X, *tables)
    for n, m in ((64, 1000), (256, 1000), (1000, 1000)):
        A, B = rng.normal(size=(n, 8)), rng.normal(size=(m, 8))
        yield f"mean_pairwise_distance {n}x{m} d=8", "mean_pairwise_distance", (A, B)


def best_of(fn, args, repeat):
    timer = timeit.Timer(lambda: fn(*args))
    loops, _ = timer.autorange()
    return min(timer.repeat(repeat, loops)) / loops


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _cy is None:
        print("compiled extension not built; only the pure-Python backend is available")
    print(f"{'case':<40}{'python (ms)':>14}{'cython (ms)':>14}{'speedup':>10}")
    for title, name, inputs in cases():
        f_py = getattr(_py, name)
        t_py = best_of(f_py, inputs, args.repeat)
        if _cy is None:
            print(f"{title:<40}{t_py * 1e3:>14.3f}{'-':>14}{'-':>10}")
            continue
        f_cy = getattr(_cy, name)
        np.testing.assert_allclose(f_cy(*inputs), f_py(*inputs), rtol=1e-10, atol=1e-12)
        t_cy = best_of(f_cy, inputs, args.repeat)
        print(f"{title:<40}{t_py * 1e3:>14.3f}{t_cy * 1e3:>14.3f}{t_py / t_cy:>9.1f}x")


if __name__ == "__main__":
    main()
