"""Timing of the numba kernels against the pure-numpy fallback.

Run ``python benchmarks/bench_kernels.py [--repeat R]``. Each kernel is
called once on both paths before timing so numba compilation is excluded,
and the outputs are compared before any number is reported.
"""

import argparse
import timeit

import numpy as np

from singdos import kernels


def cases(rng):
    n = 20_000
    diag = 2.0 + rng.uniform(-0.5, 0.5, n)
    off = -np.ones(n - 1)
    shifts = np.linspace(0.1, 3.9, 64)
    m = 200_000
    qbar = rng.uniform(-5.0, 5.0, m)
    zmid = rng.standard_normal(m)
    g = 120
    u3 = rng.standard_normal(g**3)
    v3 = rng.uniform(0.0, 1.0, g**3)
    g2 = 600
    u2 = rng.standard_normal(g2**2)
    v2 = rng.uniform(0.0, 1.0, g2**2)
    return [
        ("sturm_counts  n=2e4 x 64 shifts", "sturm_counts", (diag, off, shifts)),
        ("transfer_steps  2e5 cells", "transfer_steps", (qbar, zmid, 1e-3)),
        ("apply_grid_hamiltonian  600^2", "apply_grid_hamiltonian", (u2, v2, g2, 2, 0.01, False)),
        ("apply_grid_hamiltonian  120^3 per.", "apply_grid_hamiltonian", (u3, v3, g, 3, 0.01, True)),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not kernels.HAVE_NUMBA:
        print("numba unavailable; nothing to compare")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':38s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s}")
    for label, name, args_k in cases(rng):
        f_np = getattr(kernels.numpy_impl, name)
        f_nb = getattr(kernels.numba_impl, name)
        a, b = f_np(*args_k), f_nb(*args_k)
        np.testing.assert_allclose(b, a, rtol=1e-10, atol=1e-10)
        t_np = min(timeit.repeat(lambda: f_np(*args_k), number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: f_nb(*args_k), number=1, repeat=args.repeat)) * 1e3
        print(f"{label:38s} {t_np:11.2f} {t_nb:11.2f} {t_np / t_nb:7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
