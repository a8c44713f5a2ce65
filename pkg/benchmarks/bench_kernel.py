"""Compare the compiled and numpy angular-kernel backends.

    python3 benchmarks/bench_kernel.py [--points 2048] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from hartree_lab import kernel
from hartree_lab.groundstate import default_grid
from hartree_lab.radial import RieszKernel


def bench(label, fn, repeat):
    t = min(timeit.repeat(fn, number=1, repeat=repeat))
    print(f"{label:34s} {t * 1e3:10.2f} ms")
    return t


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=2048)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if kernel.BACKEND != "cython":
        raise SystemExit("compiled kernel not built; run pip install -e . --no-build-isolation")

    grid = default_grid(7, args.points)
    rho = np.exp(-grid.h * np.arange(grid.size))
    r = grid.r[::8]
    print(f"grid points {grid.size}, pair matrix {r.size}x{r.size}")
    res = {}
    for b in ("cython", "numpy"):
        res[b, "profile"] = bench(f"angular_profile [{b}]", lambda: kernel.angular_profile(rho, 7, backend=b), args.repeat)
        res[b, "pair"] = bench(f"pair_matrix [{b}]", lambda: kernel.pair_matrix(r, r, 7, backend=b), args.repeat)
        res[b, "build"] = bench(f"RieszKernel.build [{b}]", lambda: RieszKernel.build(grid, backend=b), args.repeat)
    for what in ("profile", "pair", "build"):
        print(f"speedup {what:8s} {res['numpy', what] / res['cython', what]:6.1f}x")
    diff = np.max(np.abs(kernel.angular_profile(rho, 7, backend="cython") / kernel.angular_profile(rho, 7, backend="numpy") - 1))
    print(f"max relative difference in profile: {diff:.2e}")


if __name__ == "__main__":
    main()
