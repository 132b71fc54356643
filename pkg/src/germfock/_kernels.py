"""Hot loops over the occupation basis.

Every kernel exists twice: a numba ``@njit`` version and a pure-numpy
reference.  Setting the environment variable ``GERMFOCK_DISABLE_NUMBA=1``
(or having numba unavailable) selects the numpy versions.  Both versions are
exported under ``jit_*`` / ``py_*`` names so tests and the benchmark can call
either one directly.

Basis ordering: occupation vectors are graded by total quanta ``N`` and,
inside a sector, ordered lexicographically with ``n_0`` ascending.  The rank
of a vector does not depend on ``N_max``, so a smaller truncation is always a
prefix of a larger one.
"""
import os

import numpy as np

__all__ = [
    "USE_NUMBA",
    "binomial_table",
    "rank_occupations",
    "monomial_entries",
    "gaussian_amplitudes",
    "pairing_sum",
]

try:  # pragma: no cover - exercised implicitly
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("GERMFOCK_DISABLE_NUMBA", "0") not in ("1", "true", "yes")


def binomial_table(size, max_b=None):
    """Exact binomial coefficients ``C[a, b]`` for ``0 <= a < size``, ``b <= max_b`` as int64.

    Entries with ``b > max_b`` are left at zero; ranking only needs
    ``b <= D``, which keeps the table clear of int64 overflow.
    """
    C = np.zeros((size, size), dtype=np.int64)
    top = size - 1 if max_b is None else min(max_b, size - 1)
    for a in range(size):
        C[a, 0] = 1
        for b in range(1, min(a, top) + 1):
            C[a, b] = C[a - 1, b - 1] + C[a - 1, b]
    return C


# ---------------------------------------------------------------- pure numpy


def py_rank_occupations(occ, binom):
    occ = np.asarray(occ, dtype=np.int64)
    n_rows, D = occ.shape
    total = occ.sum(axis=1)
    # states with fewer quanta: C(N + D - 1, D)
    rank = np.where(total > 0, binom[np.maximum(total + D - 1, 0), D], 0).astype(np.int64)
    remaining = total.copy()
    for j in range(D - 1):
        parts = D - j - 1
        nj = occ[:, j]
        vmax = int(nj.max()) if n_rows else 0
        for v in range(vmax):
            mask = nj > v
            r = remaining[mask] - v
            rank[mask] += binom[r + parts - 1, parts - 1]
        remaining = remaining - nj
    return rank


def py_monomial_entries(occ, create, annih, binom):
    occ = np.array(occ, dtype=np.int64, copy=True)
    vals = np.ones(occ.shape[0])
    for j in annih:
        vals *= np.sqrt(np.maximum(occ[:, j], 0))
        occ[:, j] -= 1
    valid = (occ >= 0).all(axis=1)
    occ[~valid] = 0
    for j in create:
        occ[:, j] += 1
        vals *= np.sqrt(occ[:, j])
    rows = py_rank_occupations(occ, binom)
    rows[~valid] = -1
    vals[~valid] = 0.0
    return rows, vals


def py_gaussian_amplitudes(occ, binom, a, M):
    n_states, D = occ.shape
    U = np.zeros(n_states, dtype=np.complex128)
    if n_states == 0:
        return U
    U[0] = 1.0
    m = np.zeros(D, dtype=np.int64)
    for s in range(1, n_states):
        n = occ[s]
        i = int(np.flatnonzero(n)[0])
        m[:] = n
        m[i] -= 1
        r_m = py_rank_occupations(m[None, :], binom)[0]
        acc = a[i] * U[r_m]
        for j in range(D):
            if m[j] > 0:
                m[j] -= 1
                r = py_rank_occupations(m[None, :], binom)[0]
                m[j] += 1
                acc += M[i, j] * np.sqrt(m[j]) * U[r]
        U[s] = acc / np.sqrt(n[i])
    return U


def py_pairing_sum(word, a, M):
    L = len(word)
    f = np.zeros(1 << L, dtype=np.complex128)
    f[0] = 1.0
    for mask in range(1, 1 << L):
        low = (mask & -mask).bit_length() - 1
        rest = mask ^ (1 << low)
        acc = a[word[low]] * f[rest]
        j_mask = rest
        while j_mask:
            j = (j_mask & -j_mask).bit_length() - 1
            acc += M[word[low], word[j]] * f[rest ^ (1 << j)]
            j_mask ^= 1 << j
        f[mask] = acc
    return f[(1 << L) - 1]


# ---------------------------------------------------------------- numba

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _rank_one(n, binom):
        D = n.shape[0]
        total = 0
        for j in range(D):
            total += n[j]
        r = 0
        if total > 0:
            r = binom[total + D - 1, D]
        remaining = total
        for j in range(D - 1):
            parts = D - j - 1
            for v in range(n[j]):
                r += binom[remaining - v + parts - 1, parts - 1]
            remaining -= n[j]
        return r

    @numba.njit(cache=True)
    def jit_rank_occupations(occ, binom):
        out = np.empty(occ.shape[0], dtype=np.int64)
        for s in range(occ.shape[0]):
            out[s] = _rank_one(occ[s], binom)
        return out

    @numba.njit(cache=True)
    def jit_monomial_entries(occ, create, annih, binom):
        n_states, D = occ.shape
        rows = np.empty(n_states, dtype=np.int64)
        vals = np.empty(n_states)
        work = np.empty(D, dtype=np.int64)
        for s in range(n_states):
            for j in range(D):
                work[j] = occ[s, j]
            v = 1.0
            ok = True
            for q in range(annih.shape[0]):
                j = annih[q]
                if work[j] == 0:
                    ok = False
                    break
                v *= np.sqrt(work[j])
                work[j] -= 1
            if not ok:
                rows[s] = -1
                vals[s] = 0.0
                continue
            for q in range(create.shape[0]):
                j = create[q]
                work[j] += 1
                v *= np.sqrt(work[j])
            rows[s] = _rank_one(work, binom)
            vals[s] = v
        return rows, vals

    @numba.njit(cache=True)
    def jit_gaussian_amplitudes(occ, binom, a, M):
        n_states, D = occ.shape
        U = np.zeros(n_states, dtype=np.complex128)
        if n_states == 0:
            return U
        U[0] = 1.0
        m = np.empty(D, dtype=np.int64)
        for s in range(1, n_states):
            i = 0
            while occ[s, i] == 0:
                i += 1
            for j in range(D):
                m[j] = occ[s, j]
            m[i] -= 1
            acc = a[i] * U[_rank_one(m, binom)]
            for j in range(D):
                if m[j] > 0:
                    mj = m[j]
                    m[j] -= 1
                    acc += M[i, j] * np.sqrt(mj) * U[_rank_one(m, binom)]
                    m[j] += 1
            U[s] = acc / np.sqrt(occ[s, i])
        return U

    @numba.njit(cache=True)
    def jit_pairing_sum(word, a, M):
        L = word.shape[0]
        f = np.zeros(1 << L, dtype=np.complex128)
        f[0] = 1.0
        for mask in range(1, 1 << L):
            low = 0
            while not (mask >> low) & 1:
                low += 1
            rest = mask ^ (1 << low)
            acc = a[word[low]] * f[rest]
            for j in range(low + 1, L):
                if (rest >> j) & 1:
                    acc += M[word[low], word[j]] * f[rest ^ (1 << j)]
            f[mask] = acc
        return f[(1 << L) - 1]

else:  # pragma: no cover
    jit_rank_occupations = py_rank_occupations
    jit_monomial_entries = py_monomial_entries
    jit_gaussian_amplitudes = py_gaussian_amplitudes
    jit_pairing_sum = py_pairing_sum


def rank_occupations(occ, binom):
    """Basis rank of each occupation row of ``occ`` (shape ``(n, D)``)."""
    occ = np.ascontiguousarray(occ, dtype=np.int64)
    if USE_NUMBA:
        return jit_rank_occupations(occ, binom)
    return py_rank_occupations(occ, binom)


def monomial_entries(occ, create, annih, binom):
    """Matrix entries of ``psi+_{create...} psi-_{annih...}`` on basis columns.

    Returns ``(rows, vals)`` aligned with the rows of ``occ``; ``rows == -1``
    marks columns annihilated to zero.  Row ranks refer to the untruncated
    graded basis, so callers decide what lies beyond ``N_max``.
    """
    occ = np.ascontiguousarray(occ, dtype=np.int64)
    create = np.asarray(create, dtype=np.int64)
    annih = np.asarray(annih, dtype=np.int64)
    if USE_NUMBA:
        return jit_monomial_entries(occ, create, annih, binom)
    return py_monomial_entries(occ, create, annih, binom)


def gaussian_amplitudes(occ, binom, a, M):
    """Normalized pairing sums ``U(n) = LH(n) / sqrt(prod n_j!)`` over the basis.

    ``LH(n)`` is the sum over all partial pairings of an index word with
    occupation ``n``: paired positions contribute ``M_ij``, unpaired ones
    ``a_i``.  Evaluated by removing one quantum of the first occupied mode,
    which is either unpaired or paired with one of the remaining quanta.
    """
    occ = np.ascontiguousarray(occ, dtype=np.int64)
    a = np.ascontiguousarray(a, dtype=np.complex128)
    M = np.ascontiguousarray(M, dtype=np.complex128)
    if USE_NUMBA:
        return jit_gaussian_amplitudes(occ, binom, a, M)
    return py_gaussian_amplitudes(occ, binom, a, M)


def pairing_sum(word, a, M):
    """Sum over all partial pairings of the positions of ``word``.

    Each pair ``(p, q)`` contributes ``M[word[p], word[q]]`` and each unpaired
    position ``p`` contributes ``a[word[p]]``.  Cost is ``O(2^L L)``.
    """
    word = np.ascontiguousarray(word, dtype=np.int64)
    a = np.ascontiguousarray(a, dtype=np.complex128)
    M = np.ascontiguousarray(M, dtype=np.complex128)
    if USE_NUMBA:
        return jit_pairing_sum(word, a, M)
    return py_pairing_sum(word, a, M)
