import itertools
import os
import subprocess
import sys

import numpy as np
import pytest

from germfock import _kernels
from germfock.fock import FockBasis, TruncationSpec

needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")


@pytest.mark.parametrize("D,N", [(1, 10), (2, 7), (3, 5), (4, 4)])
def test_rank_is_enumeration_order(D, N):
    b = FockBasis.get(TruncationSpec(D, N))
    np.testing.assert_array_equal(_kernels.py_rank_occupations(b.occ, b.binom), np.arange(b.dim))
    if _kernels.HAVE_NUMBA:
        np.testing.assert_array_equal(_kernels.jit_rank_occupations(b.occ, b.binom), np.arange(b.dim))


def test_binomial_table_has_no_overflow_in_used_range():
    C = _kernels.binomial_table(130, max_b=3)
    assert C[129, 3] == 129 * 128 * 127 // 6
    assert np.all(C >= 0)


@needs_numba
@pytest.mark.parametrize("D,N", [(2, 8), (3, 6)])
def test_gaussian_amplitudes_paths_agree(D, N, rng):
    b = FockBasis.get(TruncationSpec(D, N))
    a = rng.standard_normal(D) + 1j * rng.standard_normal(D)
    M = 0.3 * (rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D)))
    M = M + M.T
    np.testing.assert_allclose(_kernels.py_gaussian_amplitudes(b.occ, b.binom, a, M),
                               _kernels.jit_gaussian_amplitudes(b.occ, b.binom, a, M), rtol=1e-13, atol=1e-15)


@needs_numba
def test_monomial_entries_paths_agree():
    b = FockBasis.get(TruncationSpec(3, 6))
    for create, annih in [([0], []), ([], [2]), ([0, 1], [1, 2]), ([2, 2], [0])]:
        c = np.array(create, dtype=np.int64)
        a = np.array(annih, dtype=np.int64)
        r1, v1 = _kernels.py_monomial_entries(b.occ, c, a, b.binom)
        r2, v2 = _kernels.jit_monomial_entries(b.occ, c, a, b.binom)
        np.testing.assert_array_equal(r1, r2)
        np.testing.assert_allclose(v1, v2, rtol=1e-15)


def _brute_pairings(word, a, M):
    """Sum over matchings by explicit recursion on the first position."""
    word = list(word)
    if not word:
        return 1.0
    first, rest = word[0], word[1:]
    total = a[first] * _brute_pairings(rest, a, M)
    for i in range(len(rest)):
        total += M[first, rest[i]] * _brute_pairings(rest[:i] + rest[i + 1:], a, M)
    return total


@pytest.mark.parametrize("word", [(), (0,), (0, 1), (1, 1, 0), (0, 1, 2, 0), (2, 2, 1, 0, 1)])
def test_pairing_sum_matches_recursion(word, rng):
    a = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    M = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    M = M + M.T
    w = np.array(word, dtype=np.int64)
    ref = _brute_pairings(word, a, M)
    assert abs(_kernels.py_pairing_sum(w, a, M) - ref) <= 1e-12 * max(1, abs(ref))
    assert abs(_kernels.pairing_sum(w, a, M) - ref) <= 1e-12 * max(1, abs(ref))


def test_matching_count():
    # all-ones weights count partial matchings (telephone numbers 1, 1, 2, 4, 10, 26)
    a = np.ones(1, dtype=complex)
    M = np.ones((1, 1), dtype=complex)
    counts = [_kernels.pairing_sum(np.zeros(n, dtype=np.int64), a, M).real for n in range(6)]
    assert counts == [1, 1, 2, 4, 10, 26]


def test_disable_flag_selects_numpy_path():
    env = dict(os.environ, GERMFOCK_DISABLE_NUMBA="1")
    code = "from germfock import _kernels; print(_kernels.USE_NUMBA)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"


def test_numpy_fallback_end_to_end():
    env = dict(os.environ, GERMFOCK_DISABLE_NUMBA="1")
    code = (
        "import numpy as np\n"
        "from germfock.fock import TruncationSpec\n"
        "from germfock.gaussian import GaussianData, build_gaussian\n"
        "g = GaussianData(0.5, np.array([0.3+0.1j, -0.2j]), np.array([[0.1, 0.05], [0.05, -0.2]]))\n"
        "a = build_gaussian(g, TruncationSpec(2, 10), 'oracle')\n"
        "b = build_gaussian(g, TruncationSpec(2, 10), 'series')\n"
        "print(np.linalg.norm(a.vector - b.vector) / np.linalg.norm(a.vector))\n"
    )
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert float(out.stdout) < 1e-12
