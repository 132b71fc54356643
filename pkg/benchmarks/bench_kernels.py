"""Timing of the numba kernels against the pure-numpy fallbacks.

Run with ``python3 benchmarks/bench_kernels.py``.  Both variants are
called directly, so the ``GERMFOCK_DISABLE_NUMBA`` flag does not matter
here.  The first numba call (compilation) is excluded.
"""
import argparse
import time

import numpy as np

from germfock import _kernels
from germfock.fock import FockBasis, TruncationSpec


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(D, N_max, rng):
    basis = FockBasis.get(TruncationSpec(D, N_max))
    a = 0.4 * (rng.standard_normal(D) + 1j * rng.standard_normal(D))
    M = 0.2 * (rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D)))
    M = M + M.T
    word = rng.integers(0, D, size=12).astype(np.int64)
    occ, binom = basis.occ, basis.binom
    return {
        "rank_occupations": (lambda: _kernels.py_rank_occupations(occ, binom),
                             lambda: _kernels.jit_rank_occupations(occ, binom)),
        "monomial_entries": (lambda: _kernels.py_monomial_entries(occ, np.array([0, 1]), np.array([1, 0]), binom),
                             lambda: _kernels.jit_monomial_entries(occ, np.array([0, 1]), np.array([1, 0]), binom)),
        "gaussian_amplitudes": (lambda: _kernels.py_gaussian_amplitudes(occ, binom, a, M),
                                lambda: _kernels.jit_gaussian_amplitudes(occ, binom, a, M)),
        "pairing_sum": (lambda: _kernels.py_pairing_sum(word, a, M),
                        lambda: _kernels.jit_pairing_sum(word, a, M)),
    }, basis.dim


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--D", type=int, default=3)
    p.add_argument("--N-max", type=int, default=20)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        print("numba not installed: only the numpy path is available")
        return
    rng = np.random.default_rng(0)
    table, dim = cases(args.D, args.N_max, rng)
    print(f"D={args.D} N_max={args.N_max} dim={dim}")
    print(f"{'kernel':<22}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}{'max diff':>12}")
    for name, (py, jit) in table.items():
        jit()  # compile
        t_py, r_py = best_of(py, args.repeat)
        t_jit, r_jit = best_of(jit, args.repeat)
        if isinstance(r_py, tuple):
            diff = max(float(np.max(np.abs(np.asarray(x) - np.asarray(y)))) for x, y in zip(r_py, r_jit))
        else:
            diff = float(np.max(np.abs(np.asarray(r_py) - np.asarray(r_jit))))
        print(f"{name:<22}{t_py:>12.4g}{t_jit:>12.4g}{t_py / t_jit:>10.1f}{diff:>12.3g}")


if __name__ == "__main__":
    main()
