"""Normal-ordered polynomial Hamiltonians.

A Hamiltonian is stored as coefficient tensors ``H[(m, n)]`` of shape
``(D,) * (m + n)``.  The first ``m`` indices pair with conjugate amplitudes
(creation operators), the last ``n`` with amplitudes (annihilation
operators)::

    H(phi*, phi) = sum_{m,n} H[(m,n)]_{i1..im j1..jn} phi*_i1 .. phi*_im phi_j1 .. phi_jn

Self-adjointness of the quantized operator requires
``conj(H[(m,n)])_{I J} == H[(n,m)]_{J I}``.
"""
from itertools import permutations
import string

import numpy as np

__all__ = [
    "HamiltonianCoeffs",
    "harmonic",
    "quartic_pair",
    "number_conserving",
    "random_polynomial",
]

_LETTERS = string.ascii_lowercase


def _group_symmetrize(T, m, n):
    """Average ``T`` over permutations inside each index group."""
    if m + n == 0:
        return np.asarray(T, dtype=complex)
    out = np.zeros_like(T, dtype=complex)
    perms_m = list(permutations(range(m)))
    perms_n = list(permutations(range(m, m + n)))
    for p in perms_m:
        for q in perms_n:
            out += np.transpose(T, list(p) + list(q))
    return out / (len(perms_m) * len(perms_n))


def _adjoint_tensor(T, m, n):
    """Tensor of the (n, m) partner implied by self-adjointness."""
    axes = list(range(m, m + n)) + list(range(m))
    return np.conj(np.transpose(T, axes)) if m + n else np.conj(T)


def _contract(T, vecs):
    """Contract ``T`` against batched vectors; ``None`` leaves an index free.

    ``vecs[p]`` has shape ``(..., D)``.  Free indices appear in output order
    after the batch dimensions.
    """
    rank = T.ndim
    if rank == 0:
        batch = next((v.shape[:-1] for v in vecs if v is not None), ())
        return np.broadcast_to(T, batch).astype(complex)
    idx = _LETTERS[:rank]
    operands = [T]
    subs = [idx]
    free = ""
    for p, v in enumerate(vecs):
        if v is None:
            free += idx[p]
        else:
            operands.append(v)
            subs.append("..." + idx[p])
    expr = ",".join(subs) + "->..." + free
    return np.einsum(expr, *operands)


class HamiltonianCoeffs:
    """Symmetric coefficient tensors of a normal-ordered polynomial Hamiltonian.

    Parameters
    ----------
    D : int
        Number of modes.
    terms : dict
        Maps ``(m, n)`` to an array of shape ``(D,) * (m + n)``.
    symmetrize : bool
        Average each tensor over permutations within its index groups.
    tol : float
        Tolerance for the symmetry and self-adjointness checks.

    Raises
    ------
    ValueError
        If a tensor has the wrong shape, is not group-symmetric (when
        ``symmetrize`` is False), or violates self-adjointness.
    """

    def __init__(self, D, terms, symmetrize=True, tol=1e-10):
        if D < 1:
            raise ValueError("D must be >= 1")
        self.D = int(D)
        clean = {}
        for (m, n), T in terms.items():
            T = np.asarray(T, dtype=complex)
            if T.shape != (D,) * (m + n):
                raise ValueError(f"term {(m, n)} has shape {T.shape}, expected {(D,) * (m + n)}")
            S = _group_symmetrize(T, m, n)
            if not symmetrize and np.max(np.abs(S - T), initial=0.0) > tol:
                raise ValueError(f"term {(m, n)} is not symmetric within index groups")
            if np.any(S != 0):
                clean[(int(m), int(n))] = S if symmetrize else T
        for (m, n), T in clean.items():
            partner = clean.get((n, m), np.zeros((D,) * (m + n), dtype=complex))
            if np.max(np.abs(_adjoint_tensor(T, m, n) - partner), initial=0.0) > tol * max(1.0, np.max(np.abs(T))):
                raise ValueError(f"terms {(m, n)} and {(n, m)} violate self-adjointness")
        self.terms = clean
        self.degree = max((max(m, n) for m, n in clean), default=0)
        self._matrix_cache = {}

    # ------------------------------------------------------------ construction

    @classmethod
    def from_hermitian_part(cls, D, terms):
        """Build from a partial term list by adding adjoint partners.

        Each ``(m, n)`` with ``m != n`` is completed with its ``(n, m)``
        partner; ``(m, m)`` tensors are replaced by their self-adjoint part.
        """
        full = {}
        for (m, n), T in terms.items():
            T = _group_symmetrize(np.asarray(T, dtype=complex), m, n)
            adj = _adjoint_tensor(T, m, n)
            if m == n:
                full[(m, n)] = full.get((m, n), 0) + 0.5 * (T + adj)
            else:
                full[(m, n)] = full.get((m, n), 0) + T
                full[(n, m)] = full.get((n, m), 0) + adj
        return cls(D, full)

    def quadratic_part(self, phi):
        """Second-order Taylor coefficients at ``phi`` as a Hamiltonian.

        The result has terms ``(2,0)``, ``(1,1)``, ``(0,2)`` so that its
        quantization is the fluctuation operator around ``phi`` with unit
        scaling.
        """
        hcc, hcn, hnn = self.hessians(phi)
        return HamiltonianCoeffs(self.D, {(2, 0): 0.5 * hcc, (1, 1): hcn, (0, 2): 0.5 * hnn})

    def is_number_conserving(self):
        return all(m == n for m, n in self.terms)

    def to_dict(self):
        """JSON-friendly representation (real and imaginary parts as nested lists)."""
        return {
            "D": self.D,
            "terms": [
                {"m": m, "n": n, "re": T.real.tolist(), "im": T.imag.tolist()}
                for (m, n), T in sorted(self.terms.items())
            ],
        }

    @classmethod
    def from_dict(cls, data):
        terms = {}
        for t in data["terms"]:
            terms[(int(t["m"]), int(t["n"]))] = np.asarray(t["re"], float) + 1j * np.asarray(t["im"], float)
        return cls(int(data["D"]), terms, symmetrize=bool(data.get("symmetrize", False)))

    # ---------------------------------------------------------- classical side

    def value(self, phi):
        """Classical symbol ``H(phi*, phi)``; ``phi`` has shape ``(..., D)``."""
        phi = np.asarray(phi, dtype=complex)
        phic = phi.conj()
        out = np.zeros(phi.shape[:-1], dtype=complex)
        for (m, n), T in self.terms.items():
            out = out + _contract(T, [phic] * m + [phi] * n)
        return out.real

    def grad_conj(self, phi):
        """``dH/dphi*_k``, shape ``(..., D)``."""
        phi = np.asarray(phi, dtype=complex)
        phic = phi.conj()
        out = np.zeros(phi.shape, dtype=complex)
        for (m, n), T in self.terms.items():
            if m >= 1:
                out = out + m * _contract(T, [None] + [phic] * (m - 1) + [phi] * n)
        return out

    def grad(self, phi):
        """``dH/dphi_k``, shape ``(..., D)``."""
        phi = np.asarray(phi, dtype=complex)
        phic = phi.conj()
        out = np.zeros(phi.shape, dtype=complex)
        for (m, n), T in self.terms.items():
            if n >= 1:
                out = out + n * _contract(T, [phic] * m + [None] + [phi] * (n - 1))
        return out

    def hessians(self, phi):
        """Exact second derivatives at ``phi``.

        Returns
        -------
        hcc : ndarray
            ``d2H/dphi*_k dphi*_l``.
        hcn : ndarray
            ``d2H/dphi*_k dphi_l``.
        hnn : ndarray
            ``d2H/dphi_k dphi_l``.

        ``d2H/dphi_k dphi*_l`` is the transpose of ``hcn`` and
        ``hcc = conj(hnn)`` for a real symbol.
        """
        phi = np.asarray(phi, dtype=complex)
        phic = phi.conj()
        shape = phi.shape + (self.D,)
        hcc = np.zeros(shape, dtype=complex)
        hcn = np.zeros(shape, dtype=complex)
        hnn = np.zeros(shape, dtype=complex)
        for (m, n), T in self.terms.items():
            if m >= 2:
                hcc = hcc + m * (m - 1) * _contract(T, [None, None] + [phic] * (m - 2) + [phi] * n)
            if m >= 1 and n >= 1:
                hcn = hcn + m * n * _contract(T, [None] + [phic] * (m - 1) + [None] + [phi] * (n - 1))
            if n >= 2:
                hnn = hnn + n * (n - 1) * _contract(T, [phic] * m + [None, None] + [phi] * (n - 2))
        return hcc, hcn, hnn

    def euler_sum(self, phi):
        """``sum_k phi_k dH/dphi_k`` (used by the action integrand)."""
        phi = np.asarray(phi, dtype=complex)
        phic = phi.conj()
        out = np.zeros(phi.shape[:-1], dtype=complex)
        for (m, n), T in self.terms.items():
            if n >= 1:
                out = out + n * _contract(T, [phic] * m + [phi] * n)
        return out

    def __repr__(self):
        return f"HamiltonianCoeffs(D={self.D}, terms={sorted(self.terms)})"


# ------------------------------------------------------------------ families


def harmonic(omega):
    """``H = sum_j omega_j phi*_j phi_j``."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    return HamiltonianCoeffs(len(omega), {(1, 1): np.diag(omega)})


def quartic_pair(D, T, V, J=0.0):
    """On-site quartic model.

    ``H = T sum_j phi*_j phi_j - J sum_j (phi*_j phi_{j+1} + c.c.)
    + (V/2) sum_j phi*_j^2 phi_j^2`` (open chain hopping).
    """
    h11 = T * np.eye(D, dtype=complex)
    for j in range(D - 1):
        h11[j, j + 1] = h11[j + 1, j] = -J
    h22 = np.zeros((D,) * 4, dtype=complex)
    for j in range(D):
        h22[j, j, j, j] = 0.5 * V
    return HamiltonianCoeffs(D, {(1, 1): h11, (2, 2): h22})


def _random_tensor(rng, D, rank, scale):
    shape = (D,) * rank
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def number_conserving(D, seed, scale=0.3):
    """Random number-conserving quartic: Hermitian hopping plus pair interaction."""
    rng = np.random.default_rng(seed)
    A = _random_tensor(rng, D, 2, scale)
    h11 = 0.5 * (A + A.conj().T) + np.eye(D)
    V = _random_tensor(rng, D, 4, scale)
    return HamiltonianCoeffs.from_hermitian_part(D, {(1, 1): h11, (2, 2): V})


def random_polynomial(D, seed, degree=4, scale=0.2):
    """Random self-adjoint Hamiltonian with all terms ``1 <= m + n <= degree``.

    A harmonic part ``sum phi*_j phi_j`` keeps the flow well behaved.
    """
    rng = np.random.default_rng(seed)
    terms = {(1, 1): np.eye(D, dtype=complex)}
    for total in range(1, degree + 1):
        for m in range(total + 1):
            n = total - m
            if m < n:
                continue
            T = _random_tensor(rng, D, total, scale)
            terms[(m, n)] = terms.get((m, n), 0) + T
    return HamiltonianCoeffs.from_hermitian_part(D, terms)
