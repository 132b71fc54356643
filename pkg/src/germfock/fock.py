"""Truncated bosonic Fock space in the occupation-number basis.

States live on ``D`` modes with at most ``N_max`` quanta in total.  Amplitudes
are stored densely in graded order (see :mod:`germfock._kernels`); the
public view is a mapping from occupation tuples to complex amplitudes.

Every operation that may push amplitude past ``N_max`` drops it and adds the
dropped norm squared to ``FockState.lost_norm2``.

Mode indices are zero-based throughout the Python API.
"""
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement, permutations
from math import factorial
import json

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln

from . import _kernels
from .hamiltonian import HamiltonianCoeffs

__all__ = [
    "TruncationSpec",
    "FockBasis",
    "FockState",
    "apply_ladder",
    "inner_product",
    "apply_hamiltonian",
    "hamiltonian_matrix",
    "sector_to_state",
    "state_to_sector",
    "ladder_matrix",
    "apply_linear",
    "restrict",
]


@dataclass(frozen=True)
class TruncationSpec:
    """Mode count ``D`` and maximal total occupation ``N_max``."""

    D: int
    N_max: int

    def __post_init__(self):
        if int(self.D) < 1:
            raise ValueError("D must be >= 1")
        if int(self.N_max) < 0:
            raise ValueError("N_max must be >= 0")

    @property
    def dim(self):
        return FockBasis.get(self).dim


class FockBasis:
    """Enumerated occupation vectors for a truncation spec (cached)."""

    def __init__(self, trunc: TruncationSpec):
        self.trunc = trunc
        D, N = trunc.D, trunc.N_max
        self.binom = _kernels.binomial_table(N + D + 8, max_b=D + 1)
        rows = []
        for total in range(N + 1):
            rows.extend(_compositions(total, D))
        self.occ = np.array(rows, dtype=np.int64).reshape(-1, D)
        self.dim = self.occ.shape[0]
        self.totals = self.occ.sum(axis=1)
        self.sector_start = np.searchsorted(self.totals, np.arange(N + 2))
        # log sqrt(prod n_j!) per state
        self.log_sqrt_fact = 0.5 * gammaln(self.occ + 1.0).sum(axis=1)

    @staticmethod
    @lru_cache(maxsize=64)
    def get(trunc: TruncationSpec) -> "FockBasis":
        return FockBasis(trunc)

    def index(self, occupation):
        occupation = np.asarray(occupation, dtype=np.int64).reshape(1, -1)
        if occupation.shape[1] != self.trunc.D or np.any(occupation < 0):
            raise ValueError(f"bad occupation vector {occupation.ravel().tolist()}")
        if occupation.sum() > self.trunc.N_max:
            raise ValueError("occupation exceeds N_max")
        return int(_kernels.rank_occupations(occupation, self.binom)[0])

    def sector_slice(self, N):
        return slice(int(self.sector_start[N]), int(self.sector_start[N + 1]))


def _compositions(total, parts):
    """Compositions of ``total`` into ``parts`` nonnegative parts, lex order."""
    if parts == 1:
        return [(total,)]
    out = []
    for v in range(total + 1):
        for rest in _compositions(total - v, parts - 1):
            out.append((v,) + rest)
    return out


class FockState:
    """Immutable truncated Fock vector.

    Parameters
    ----------
    trunc : TruncationSpec
    vector : array_like, optional
        Dense amplitudes in basis order; zeros if omitted.
    lost_norm2 : float
        Accumulated norm squared dropped by truncation.
    """

    __slots__ = ("trunc", "_vec", "lost_norm2")

    def __init__(self, trunc: TruncationSpec, vector=None, lost_norm2=0.0):
        basis = FockBasis.get(trunc)
        if vector is None:
            vec = np.zeros(basis.dim, dtype=complex)
        else:
            vec = np.array(vector, dtype=complex, copy=True).reshape(-1)
            if vec.shape[0] != basis.dim:
                raise ValueError(f"vector length {vec.shape[0]} != basis dimension {basis.dim}")
        vec.setflags(write=False)
        object.__setattr__(self, "trunc", trunc)
        object.__setattr__(self, "_vec", vec)
        object.__setattr__(self, "lost_norm2", float(lost_norm2))

    def __setattr__(self, name, value):
        raise AttributeError("FockState is immutable")

    # ------------------------------------------------------------------ views

    @property
    def vector(self):
        """Read-only dense amplitude array in basis order."""
        return self._vec

    @property
    def basis(self):
        return FockBasis.get(self.trunc)

    @property
    def amplitudes(self):
        """Mapping ``occupation tuple -> amplitude`` over nonzero entries."""
        occ = self.basis.occ
        nz = np.flatnonzero(self._vec)
        return {tuple(int(v) for v in occ[i]): complex(self._vec[i]) for i in nz}

    def amplitude(self, occupation):
        return complex(self._vec[self.basis.index(occupation)])

    def norm(self):
        return float(np.linalg.norm(self._vec))

    def sector_norms(self):
        """Norm of each total-occupation sector ``0..N_max``."""
        b = self.basis
        return np.array([np.linalg.norm(self._vec[b.sector_slice(N)]) for N in range(self.trunc.N_max + 1)])

    # ------------------------------------------------------------ constructors

    @classmethod
    def vacuum(cls, trunc):
        v = np.zeros(FockBasis.get(trunc).dim, dtype=complex)
        v[0] = 1.0
        return cls(trunc, v)

    @classmethod
    def from_amplitudes(cls, trunc, amplitudes):
        basis = FockBasis.get(trunc)
        v = np.zeros(basis.dim, dtype=complex)
        for occ, amp in amplitudes.items():
            v[basis.index(occ)] += amp
        return cls(trunc, v)

    @classmethod
    def random(cls, trunc, rng, max_total=None):
        """Random normalized state supported on sectors ``<= max_total``."""
        basis = FockBasis.get(trunc)
        v = rng.standard_normal(basis.dim) + 1j * rng.standard_normal(basis.dim)
        if max_total is not None:
            v[basis.totals > max_total] = 0
        return cls(trunc, v / np.linalg.norm(v))

    # -------------------------------------------------------------- algebra

    def _check(self, other):
        if not isinstance(other, FockState):
            return NotImplemented
        if other.trunc != self.trunc:
            raise ValueError("mismatched truncation specs")
        return None

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return FockState(self.trunc, self._vec + other._vec, self.lost_norm2 + other.lost_norm2)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return FockState(self.trunc, self._vec - other._vec, self.lost_norm2 + other.lost_norm2)

    def __mul__(self, scalar):
        scalar = complex(scalar)
        return FockState(self.trunc, scalar * self._vec, abs(scalar) ** 2 * self.lost_norm2)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __repr__(self):
        return f"FockState(D={self.trunc.D}, N_max={self.trunc.N_max}, norm={self.norm():.6g}, lost={self.lost_norm2:.3g})"

    # -------------------------------------------------------- serialization

    def to_text(self, atol=0.0):
        """Structured text record: truncation spec and ``(occupation, re, im)`` entries."""
        entries = [
            [list(occ), _fmt(a.real), _fmt(a.imag)]
            for occ, a in self.amplitudes.items()
            if abs(a) > atol
        ]
        rec = {
            "format": "germfock.FockState/1",
            "D": self.trunc.D,
            "N_max": self.trunc.N_max,
            "lost_norm2": _fmt(self.lost_norm2),
            "entries": entries,
        }
        return json.dumps(rec, indent=None, separators=(",", ":"))

    @classmethod
    def from_text(cls, text):
        rec = json.loads(text)
        trunc = TruncationSpec(int(rec["D"]), int(rec["N_max"]))
        amps = {tuple(e[0]): float(e[1]) + 1j * float(e[2]) for e in rec["entries"]}
        st = cls.from_amplitudes(trunc, amps)
        return cls(trunc, st.vector, float(rec.get("lost_norm2", 0.0)))


def _fmt(x):
    """Float with 17 significant digits, kept numeric in JSON."""
    return float(f"{float(x):.17g}")


# ------------------------------------------------------------------ ladders


@lru_cache(maxsize=256)
def _ladder_entries(trunc, kind, j):
    basis = FockBasis.get(trunc)
    create, annih = ([j], []) if kind == "create" else ([], [j])
    rows, vals = _kernels.monomial_entries(basis.occ, create, annih, basis.binom)
    return rows, vals


def _check_mode(trunc, j):
    if not (0 <= int(j) < trunc.D):
        raise IndexError(f"mode index {j} out of range for D={trunc.D}")


def ladder_matrix(trunc, kind, j):
    """Sparse matrix of ``psi+_j`` (``kind='create'``) or ``psi-_j`` on the truncated space.

    Creation entries past ``N_max`` are dropped.
    """
    _check_mode(trunc, j)
    if kind not in ("create", "annihilate"):
        raise ValueError(f"unknown ladder kind {kind!r}")
    rows, vals = _ladder_entries(trunc, kind, int(j))
    dim = FockBasis.get(trunc).dim
    keep = (rows >= 0) & (rows < dim)
    cols = np.arange(dim)[keep]
    return sp.csr_matrix((vals[keep], (rows[keep], cols)), shape=(dim, dim))


def apply_ladder(kind, j, state: FockState) -> FockState:
    """Apply ``psi+_j`` or ``psi-_j`` (zero-based ``j``) to ``state``.

    ``psi+_j |n> = sqrt(n_j + 1) |n + e_j>``, ``psi-_j |n> = sqrt(n_j) |n - e_j>``.
    """
    trunc = state.trunc
    _check_mode(trunc, j)
    if kind not in ("create", "annihilate"):
        raise ValueError(f"unknown ladder kind {kind!r}")
    rows, vals = _ladder_entries(trunc, kind, int(j))
    dim = FockBasis.get(trunc).dim
    contrib = vals * state.vector
    inside = (rows >= 0) & (rows < dim)
    out = np.zeros(dim, dtype=complex)
    out[rows[inside]] = contrib[inside]
    lost = float(np.sum(np.abs(contrib[rows >= dim]) ** 2))
    return FockState(trunc, out, state.lost_norm2 + lost)


def inner_product(a: FockState, b: FockState) -> complex:
    """``<a, b>``, conjugate-linear in ``a``."""
    if a.trunc != b.trunc:
        raise ValueError("mismatched truncation specs")
    return complex(np.vdot(a.vector, b.vector))


# -------------------------------------------------------------- Hamiltonian


def _term_matrix(H: HamiltonianCoeffs, trunc, key):
    """Unscaled matrix of one normal-ordered term, rows on an extended basis."""
    cache_key = (trunc, key)
    if cache_key in H._matrix_cache:
        return H._matrix_cache[cache_key]
    m, n = key
    T = H.terms[key]
    basis = FockBasis.get(trunc)
    ext = FockBasis.get(TruncationSpec(trunc.D, trunc.N_max + max(m - n, 0)))
    D = trunc.D
    rows_all, cols_all, vals_all = [], [], []
    cols = np.arange(basis.dim)
    for I in combinations_with_replacement(range(D), m):
        mult_I = len(set(permutations(I)))
        for J in combinations_with_replacement(range(D), n):
            coef = T[I + J] if m + n else T[()]
            if coef == 0:
                continue
            mult = mult_I * len(set(permutations(J)))
            rows, vals = _kernels.monomial_entries(basis.occ, list(I), list(J), ext.binom)
            ok = rows >= 0
            rows_all.append(rows[ok])
            cols_all.append(cols[ok])
            vals_all.append(coef * mult * vals[ok])
    if rows_all:
        r = np.concatenate(rows_all)
        c = np.concatenate(cols_all)
        v = np.concatenate(vals_all)
    else:
        r = c = np.zeros(0, dtype=np.int64)
        v = np.zeros(0, dtype=complex)
    mat = sp.csr_matrix((v, (r, c)), shape=(ext.dim, basis.dim))
    H._matrix_cache[cache_key] = mat
    return mat


def _extended_matrix(H, eps, trunc):
    basis = FockBasis.get(trunc)
    raise_by = max((m - n for m, n in H.terms), default=0)
    ext_dim = FockBasis.get(TruncationSpec(trunc.D, trunc.N_max + max(raise_by, 0))).dim
    total = sp.csr_matrix((ext_dim, basis.dim), dtype=complex)
    for key in H.terms:
        mat = _term_matrix(H, trunc, key)
        scale = eps ** (0.5 * (key[0] + key[1]))
        if mat.shape[0] < ext_dim:
            mat = sp.vstack([mat, sp.csr_matrix((ext_dim - mat.shape[0], basis.dim))]).tocsr()
        total = total + scale * mat
    return total.tocsr()


def hamiltonian_matrix(H: HamiltonianCoeffs, eps, trunc, extended=False):
    """Sparse matrix of the quantized Hamiltonian.

    ``sum H[(m,n)] eps^((m+n)/2) psi+ .. psi+ psi- .. psi-`` with creation
    operators to the left.  With ``extended=True`` the rows cover the larger
    basis reached by creation overshoot, so the dropped part can be measured.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if H.D != trunc.D:
        raise ValueError("Hamiltonian and truncation disagree on D")
    full = _extended_matrix(H, eps, trunc)
    if extended:
        return full
    dim = FockBasis.get(trunc).dim
    return full[:dim].tocsr()


def apply_hamiltonian(H: HamiltonianCoeffs, eps, state: FockState) -> FockState:
    """Apply the quantized Hamiltonian; overshoot past ``N_max`` is recorded as loss."""
    full = hamiltonian_matrix(H, eps, state.trunc, extended=True)
    out = full @ state.vector
    dim = state.vector.shape[0]
    lost = float(np.sum(np.abs(out[dim:]) ** 2))
    return FockState(state.trunc, out[:dim], state.lost_norm2 + lost)


# ----------------------------------------------------------- sector tensors


def _words_of(occupation):
    word = []
    for j, c in enumerate(occupation):
        word.extend([j] * int(c))
    return tuple(word)


def sector_to_state(tensor, trunc, tol=1e-10) -> FockState:
    """Occupation amplitudes of a symmetric rank-``N`` tensor.

    ``c_n = sqrt(N! / prod n_j!) * tensor[word]`` for any index word with
    occupation ``n``.
    """
    T = np.asarray(tensor, dtype=complex)
    N = T.ndim
    D = trunc.D
    if N > trunc.N_max:
        raise ValueError("tensor rank exceeds N_max")
    if N and T.shape != (D,) * N:
        raise ValueError(f"tensor shape {T.shape} incompatible with D={D}")
    if N >= 2:
        scale = max(1.0, float(np.max(np.abs(T))))
        for p in range(N - 1):
            axes = list(range(N))
            axes[p], axes[p + 1] = axes[p + 1], axes[p]
            if np.max(np.abs(T - np.transpose(T, axes))) > tol * scale:
                raise ValueError("tensor is not symmetric under index permutation")
    basis = FockBasis.get(trunc)
    v = np.zeros(basis.dim, dtype=complex)
    sl = basis.sector_slice(N)
    for i in range(sl.start, sl.stop):
        occ = basis.occ[i]
        word = _words_of(occ)
        mult = factorial(N) / np.prod([factorial(int(c)) for c in occ])
        v[i] = np.sqrt(mult) * (T[word] if N else T[()])
    return FockState(trunc, v)


def state_to_sector(state: FockState, N) -> np.ndarray:
    """Symmetric rank-``N`` tensor of the sector-``N`` component (inverse of :func:`sector_to_state`)."""
    D = state.trunc.D
    basis = state.basis
    T = np.zeros((D,) * N, dtype=complex)
    sl = basis.sector_slice(N)
    for i in range(sl.start, sl.stop):
        occ = basis.occ[i]
        mult = factorial(N) / np.prod([factorial(int(c)) for c in occ])
        val = state.vector[i] / np.sqrt(mult)
        for w in set(permutations(_words_of(occ))):
            T[w] = val
    return T


def apply_linear(state: FockState, create=None, annihilate=None, const=0.0) -> FockState:
    """Apply ``sum_m create[m] psi+_m + sum_m annihilate[m] psi-_m + const``.

    Creation overshoot past ``N_max`` is accumulated coherently on an
    extended basis before its norm is added to ``lost_norm2``.
    """
    trunc = state.trunc
    D = trunc.D
    basis = FockBasis.get(trunc)
    ext = FockBasis.get(TruncationSpec(D, trunc.N_max + 1))
    out = np.zeros(ext.dim, dtype=complex)
    out[: basis.dim] += const * state.vector
    for coeffs, kind in ((create, "create"), (annihilate, "annihilate")):
        if coeffs is None:
            continue
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != (D,):
            raise ValueError("coefficient vector must have length D")
        for j in range(D):
            if coeffs[j] == 0:
                continue
            rows, vals = _ladder_entries(trunc, kind, j)
            ok = rows >= 0
            np.add.at(out, rows[ok], coeffs[j] * vals[ok] * state.vector[ok])
    lost = float(np.sum(np.abs(out[basis.dim:]) ** 2))
    return FockState(trunc, out[: basis.dim], state.lost_norm2 + lost)


def restrict(state: FockState, trunc: TruncationSpec) -> FockState:
    """Truncate ``state`` to a smaller ``N_max``; the dropped sectors go to ``lost_norm2``.

    Smaller truncations are prefixes of larger ones in the graded ordering.
    """
    if trunc.D != state.trunc.D or trunc.N_max > state.trunc.N_max:
        raise ValueError("target truncation must have the same D and a smaller N_max")
    dim = FockBasis.get(trunc).dim
    v = state.vector
    lost = float(np.sum(np.abs(v[dim:]) ** 2))
    return FockState(trunc, v[:dim].copy(), state.lost_norm2 + lost)
