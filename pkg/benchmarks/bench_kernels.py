"""Time the JIT kernels against their numpy twins.

    python benchmarks/bench_kernels.py --size 200000 --repeat 5

The first numba call compiles (or loads the on-disk cache) and is excluded.
"""

import argparse
import time

import numpy as np

from strichartz_lab import _accel, _compute
from strichartz_lab.experiments import EnsembleSpec, generate_ensemble
from strichartz_lab.lattice import LabParams, build_ladder, children, separation_matrix
from strichartz_lab.norms import strichartz_quotient
from strichartz_lab.propagator import SpaceTimeGrid


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(size, rng):
    rows = 8
    cols = size // rows
    v = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    flat = rng.choice(cols, size=cols // 4, replace=False)
    steps = v[:, : flat.size].copy()
    base = v[0, : flat.size].copy()
    scale = rng.random(rows)
    out = np.zeros((rows, cols), dtype=np.complex128)

    npts, nk = 2000, max(1, size // 2000)
    x = rng.uniform(0, 2 * np.pi, (npts, 1))
    t = rng.uniform(0, 8, npts)
    k = rng.integers(-64, 65, (nk, 1))
    coef = rng.standard_normal(nk) + 0j
    w = (k**2).sum(axis=1) / 64.0

    p = LabParams(2, 16, 1, 2)
    kids = children(build_ladder(p)[0][0])
    sep = separation_matrix(kids)
    bn = rng.standard_normal((len(kids), size)) + 1j * rng.standard_normal((len(kids), size))
    factor = p.delta_K ** (-1.5 * p.d)

    return {
        "tree_sum_rows": lambda: _compute.tree_sum_rows(v),
        "row_power_means q=6": lambda: _compute.row_power_means(v, 6.0, None),
        "row_power_stats q=6": lambda: _compute.row_power_stats(v, 6.0, 1.0),
        "fill_phased": lambda: _compute.fill_phased(out, flat, steps, base, scale),
        "direct_sum": lambda: _compute.direct_sum(x, t, k, coef, w),
        "broad_narrow_scan": lambda: _compute.broad_narrow_scan(bn, sep, p.delta_K**p.d, 5**p.d + 1, factor),
    }


def quotient_case(lam):
    p = LabParams(2, lam, 1, 3)
    g = SpaceTimeGrid.from_rules(p)
    (f,) = generate_ensemble(EnsembleSpec("random-gaussian", 1, 0), p)
    return lambda: strichartz_quotient(f, g, certify_rtol=None)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=200_000, help="elements per kernel call")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--lam", type=int, default=128, help="lambda for the end-to-end quotient")
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args(argv)

    if not _accel.HAVE_NUMBA:
        print("numba is not installed; only the numpy backend can be timed")
    _accel.set_threads(args.threads)
    rng = np.random.default_rng(0)
    table = dict(cases(args.size, rng))
    table[f"quotient lam={args.lam}"] = quotient_case(args.lam)

    print(f"{'kernel':<24}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, fn in table.items():
        res = {}
        for flag in (False, True):
            if flag and not _accel.HAVE_NUMBA:
                continue
            _accel.USE_NUMBA = flag
            res[flag] = best_of(fn, args.repeat) * 1e3
        jit = res.get(True, float("nan"))
        print(f"{name:<24}{res[False]:>12.2f}{jit:>12.2f}{res[False] / jit:>10.2f}")


if __name__ == "__main__":
    main()
