"""Gaussian germ vectors, germ ladder operators and overlap asymptotics.

The Gaussian vector attached to a point ``phi`` with quadratic form ``M`` is

    Phi_{phi,M} = exp{ (1/eps) phi.(sqrt(eps) psi+ - phi*)
                       + (1/2 eps) (sqrt(eps) psi+ - phi*) M (sqrt(eps) psi+ - phi*) } Phi_0.

Collecting powers of the creation operators gives
``c * exp(a . psi+ + 1/2 psi+ M psi+) Phi_0`` with
``a = (phi - M phi*) / sqrt(eps)`` and
``c = exp(-phi* . phi / eps + phi* M phi* / (2 eps))``.
"""
from dataclasses import dataclass, field
import logging

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from . import _kernels
from .fock import (FockBasis, FockState, TruncationSpec, apply_linear, inner_product,
                   ladder_matrix)
from .geometry import IsotropicManifold, spatial_action

__all__ = [
    "GaussianData",
    "build_gaussian",
    "gaussian_norm2",
    "GermLadderSpec",
    "apply_germ_ladder",
    "CreationSymbol",
    "overlap_pair",
    "OverlapResult",
    "QuadratureError",
]

log = logging.getLogger(__name__)


class QuadratureError(RuntimeError):
    """A quadrature failed its self-consistency check."""


@dataclass
class GaussianData:
    """Parameters ``(eps, phi, M)`` of a Gaussian vector.

    ``M`` is symmetrized on construction and must have spectral norm < 1.
    """

    eps: float
    phi: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        self.phi = np.atleast_1d(np.asarray(self.phi, dtype=complex))
        M = np.asarray(self.M, dtype=complex).reshape(self.phi.shape[0], self.phi.shape[0])
        self.M = 0.5 * (M + M.T)
        if self.M.size and np.linalg.norm(self.M, 2) >= 1:
            raise ValueError("Gaussian exponent must satisfy ||M|| < 1")

    @property
    def linear(self):
        """``a = (phi - M phi*) / sqrt(eps)``."""
        return (self.phi - self.M @ self.phi.conj()) / np.sqrt(self.eps)

    @property
    def log_prefactor(self):
        """``log c = -phi*.phi/eps + phi* M phi* / (2 eps)``."""
        pc = self.phi.conj()
        return complex(-np.vdot(self.phi, self.phi) / self.eps + pc @ self.M @ pc / (2 * self.eps))


def gaussian_norm2(a, M):
    """``|| exp(a.psi+ + 1/2 psi+ M psi+) Phi_0 ||^2`` in closed form (no truncation)."""
    a = np.asarray(a, dtype=complex)
    M = np.asarray(M, dtype=complex)
    D = a.shape[0]
    E = np.eye(D)
    y = np.linalg.solve(E - M @ M.conj(), a + M @ a.conj())
    x = a.conj() + M.conj() @ y
    expo = 0.5 * (a @ x + a.conj() @ y)
    det = np.linalg.det(E - M.conj().T @ M).real
    return float(np.exp(expo.real) / np.sqrt(det))


def _series(a, M, trunc, cutoff=1e-14):
    """``exp(X) Phi_0`` with ``X = a.psi+ + 1/2 psi+ M psi+`` by Taylor terms."""
    D = trunc.D
    dim = FockBasis.get(trunc).dim
    ups = [ladder_matrix(trunc, "create", j) for j in range(D)]
    X = sp.csr_matrix((dim, dim), dtype=complex)
    for i in range(D):
        if a[i] != 0:
            X = X + a[i] * ups[i]
        for j in range(D):
            if M[i, j] != 0:
                X = X + (0.5 * M[i, j]) * (ups[i] @ ups[j])
    term = np.zeros(dim, dtype=complex)
    term[0] = 1.0
    total = term.copy()
    for k in range(1, trunc.N_max + 1):
        term = X @ term / k
        tn = np.linalg.norm(term)
        total += term
        if tn < cutoff * np.linalg.norm(total) and tn < cutoff:
            break
    return total


def build_gaussian(g: GaussianData, trunc: TruncationSpec, mode="oracle", log_scale=0.0,
                   tail_bound=None) -> FockState:
    """Truncated Gaussian vector ``exp(log_scale) * Phi_{phi,M}``.

    Parameters
    ----------
    mode : {"oracle", "series"}
        ``oracle`` sums the pairing expansion of every occupation amplitude;
        ``series`` applies the truncated Taylor series of the operator
        exponential to the vacuum.
    log_scale : complex
        Extra scalar factor, added in the exponent to avoid overflow.
    tail_bound : float, optional
        Raise if the norm squared beyond ``N_max`` exceeds this (relative to
        the full norm squared).

    Returns
    -------
    FockState
        ``lost_norm2`` holds the exact norm squared of the dropped tail.
    """
    if g.phi.shape[0] != trunc.D:
        raise ValueError("phi length differs from the number of modes")
    a = g.linear
    logc = g.log_prefactor + log_scale
    basis = FockBasis.get(trunc)
    if mode == "oracle":
        vec = _kernels.gaussian_amplitudes(basis.occ, basis.binom, a, g.M)
    elif mode == "series":
        vec = _series(a, g.M, trunc)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    vec = np.exp(logc) * vec
    full = np.exp(2 * logc.real) * gaussian_norm2(a, g.M)
    tail = max(full - float(np.vdot(vec, vec).real), 0.0)
    if tail_bound is not None and tail > tail_bound * full:
        raise ValueError(f"truncation tail {tail:.3e} exceeds bound (N_max={trunc.N_max})")
    return FockState(trunc, vec, tail)


# ------------------------------------------------------------ ladder ops


@dataclass
class GermLadderSpec:
    """Data of one germ ladder operator.

    ``alpha`` is a zero-based column index with ``alpha >= k``.  ``phi``
    may be zero to obtain the unshifted operators.
    """

    F: np.ndarray
    G: np.ndarray
    phi: np.ndarray
    eps: float
    alpha: int
    kind: str = "create"
    k: int = 0

    def __post_init__(self):
        if self.kind not in ("create", "annihilate"):
            raise ValueError("kind must be 'create' or 'annihilate'")
        if not (self.k <= self.alpha < np.shape(self.F)[1]):
            raise IndexError("germ ladder index must be a transverse column (alpha >= k)")


def apply_germ_ladder(spec: GermLadderSpec, state: FockState) -> FockState:
    """Apply the germ creation or annihilation operator.

    create:      ``sum_m conj(G_ma)(psi+_m - phi*_m/sqrt(eps)) - conj(F_ma)(psi-_m - phi_m/sqrt(eps))``
    annihilate:  ``sum_m G_ma (psi-_m - phi_m/sqrt(eps)) - F_ma (psi+_m - phi*_m/sqrt(eps))``
    """
    F = np.asarray(spec.F, dtype=complex)
    G = np.asarray(spec.G, dtype=complex)
    phi = np.asarray(spec.phi, dtype=complex)
    s = np.sqrt(spec.eps)
    col_F, col_G = F[:, spec.alpha], G[:, spec.alpha]
    if spec.kind == "create":
        up, down = col_G.conj(), -col_F.conj()
    else:
        up, down = -col_F, col_G
    const = -(up @ phi.conj() + down @ phi) / s
    return apply_linear(state, create=up, annihilate=down, const=const)


# --------------------------------------------------------- creation symbols


@dataclass
class CreationSymbol:
    """``weight * poly(psi+) * exp(1/2 psi+ D psi+)`` applied to the vacuum.

    ``poly`` is a list of ``(coefficient, modes)`` monomials, ``modes`` a
    tuple of zero-based creation indices.
    """

    exponent: np.ndarray
    poly: list = field(default_factory=lambda: [(1.0, ())])
    weight: complex = 1.0

    def apply_poly(self, state: FockState, shift=None) -> FockState:
        """``poly(psi+ - shift)`` applied to ``state``."""
        D = state.trunc.D
        shift = np.zeros(D, dtype=complex) if shift is None else np.asarray(shift, dtype=complex)
        out = FockState(state.trunc)
        for coef, modes in self.poly:
            v = state
            for j in modes:
                e = np.zeros(D, dtype=complex)
                e[j] = 1.0
                v = apply_linear(v, create=e, const=-shift[j])
            out = out + complex(coef) * v
        return out

    def vacuum_state(self, trunc) -> FockState:
        """``Y(psi+) Phi_0``."""
        D = trunc.D
        base = build_gaussian(GaussianData(1.0, np.zeros(D), self.exponent), trunc)
        return complex(self.weight) * self.apply_poly(base)

    def shifted_state(self, phi, eps, trunc, log_scale=0.0) -> FockState:
        """``Y(psi+ - phi*/sqrt(eps)) exp((1/eps) phi.(sqrt(eps) psi+ - phi*)) Phi_0``."""
        base = build_gaussian(GaussianData(eps, phi, self.exponent), trunc, log_scale=log_scale)
        return complex(self.weight) * self.apply_poly(base, shift=np.asarray(phi).conj() / np.sqrt(eps))


@dataclass
class OverlapResult:
    lhs: complex
    rhs: complex
    rhs_tail: float
    lhs_lost: float

    @property
    def gap(self):
        return abs(self.lhs - self.rhs)


def _symbols(sym, n):
    return [sym(i) if callable(sym) else sym for i in range(n)]


def _displacement(beta, trunc):
    """Anti-Hermitian generator ``beta . psi+ - conj(beta) . psi-`` as a sparse matrix."""
    dim = FockBasis.get(trunc).dim
    Gm = sp.csr_matrix((dim, dim), dtype=complex)
    for j in range(trunc.D):
        if beta[j] != 0:
            up = ladder_matrix(trunc, "create", j)
            Gm = Gm + beta[j] * up - np.conj(beta[j]) * up.T.conj()
    return Gm


def overlap_pair(sym1, sym2, m: IsotropicManifold, eps, trunc, trunc_rhs=None, n_xi=48,
                 weight_floor=1e-12, base=None, xi_rtol=1e-6, rhs_stride=1):
    """Finite-``eps`` overlap of two symbol integrals and its ``eps -> 0`` limit.

    The vector for a symbol ``Y`` is

        Phi^eps = sum_tau h_tau exp((1/eps)[g + int phi dphi*]) eps^{-k/4}
                  Y(tau, psi+ - phi*/sqrt(eps)) exp((1/eps) phi.(sqrt(eps) psi+ - phi*)) Phi_0

    and the limit is

        sum_tau h_tau int d^k xi < Y1 Phi_0, exp(xi_b (dphi_b . psi+ - dphi*_b . psi-)) Y2 Phi_0 >.

    The displacement is split symmetrically between bra and ket so the
    truncated Fock space only needs to hold half of it.

    Parameters
    ----------
    sym1, sym2 : CreationSymbol or callable
        Symbol, or ``index -> CreationSymbol`` over flattened grid indices.
    trunc : TruncationSpec
        Truncation for the finite-``eps`` vectors.
    trunc_rhs : TruncationSpec, optional
        Truncation for the limit matrix elements (defaults to ``trunc``).
    n_xi : int
        Trapezoid nodes per ``xi`` axis on the box where the tangent Gaussian
        weight exceeds ``weight_floor``.

    Raises
    ------
    QuadratureError
        If halving the ``xi`` resolution changes the limit by more than
        ``xi_rtol`` relative.
    rhs_stride : int
        Evaluate the limit on every ``rhs_stride``-th point of a periodic
        one-parameter grid (weights scaled accordingly).  The finite-``eps``
        side needs a fine grid to resolve its phases, the smooth limit
        integrand does not.
    """
    trunc_rhs = trunc_rhs or trunc
    npts = m.n_points
    S1 = _symbols(sym1, npts)
    S2 = _symbols(sym2, npts)
    phis = m.phi.reshape(-1, m.D)
    weights = m.quadrature_weights().reshape(-1) if m.k else np.ones(1)
    act, _ = spatial_action(m, base)
    act = np.asarray(act).reshape(-1)

    v1 = np.zeros(FockBasis.get(trunc).dim, dtype=complex)
    v2 = np.zeros_like(v1)
    lost = 0.0
    for i in range(npts):
        ls = act[i] / eps
        s1 = S1[i].shifted_state(phis[i], eps, trunc, log_scale=ls)
        s2 = S2[i].shifted_state(phis[i], eps, trunc, log_scale=ls)
        v1 += weights[i] * s1.vector
        v2 += weights[i] * s2.vector
        lost = max(lost, s1.lost_norm2, s2.lost_norm2)
    norm = eps ** (-m.k / 4)
    lhs = complex(np.vdot(norm * v1, norm * v2))

    if m.k == 0:
        rhs = inner_product(S1[0].vacuum_state(trunc_rhs), S2[0].vacuum_state(trunc_rhs))
        return OverlapResult(lhs, rhs, 0.0, lost)

    dphis = m.dphi.reshape(-1, m.k, m.D)
    grams = m.gram().reshape(-1, m.k, m.k).real

    if rhs_stride != 1 and (m.k != 1 or not m.periodic[0] or npts % rhs_stride):
        raise ValueError("rhs_stride needs a periodic one-parameter grid divisible by the stride")

    def limit(nodes):
        total = 0.0
        for i in range(0, npts, rhs_stride):
            lam = float(np.linalg.eigvalsh(grams[i]).min())
            box = np.sqrt(2 * np.log(1.0 / weight_floor) / lam)
            xs = np.linspace(-box, box, nodes)
            hx = xs[1] - xs[0]
            bra = S1[i].vacuum_state(trunc_rhs).vector
            ket = S2[i].vacuum_state(trunc_rhs).vector
            grids = np.meshgrid(*([xs] * m.k), indexing="ij")
            pts = np.stack([gq.reshape(-1) for gq in grids], axis=-1)
            acc = 0.0
            for xi in pts:
                beta = xi @ dphis[i]
                Gm = _displacement(0.5 * beta, trunc_rhs)
                acc += np.vdot(expm_multiply(-Gm, bra), expm_multiply(Gm, ket))
            total += rhs_stride * weights[i] * acc * hx ** m.k
        return complex(total)

    rhs = limit(n_xi)
    coarse = limit(n_xi // 2)
    tail = abs(rhs - coarse)
    if tail > xi_rtol * max(abs(rhs), 1e-300) and tail > 1e-12:
        raise QuadratureError(f"xi quadrature not converged: change {tail:.3e} at n_xi={n_xi}")
    return OverlapResult(lhs, rhs, tail, lost)
