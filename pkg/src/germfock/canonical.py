"""Canonical operator vectors by quadrature over an isotropic manifold.

Each grid point contributes

    h_tau * sqrt(det Gram) f / ((2 pi)^{k/2} eps^{k/4})
          * exp((1/eps) [g + int phi dphi*]) / det(G^H G)^{1/4}
          * (excitation factors) Phi_{phi, M}

with trapezoidal product weights ``h_tau``.  Scalars are folded into the
exponent handed to the Gaussian builder so large ``|phi|^2 / eps`` does not
overflow.
"""
from dataclasses import dataclass, field
from math import factorial, lgamma
import logging

import numpy as np

from . import _kernels
from .dynamics import Trajectory
from .fock import FockState, TruncationSpec, restrict, state_to_sector
from .gaussian import GaussianData, GermLadderSpec, QuadratureError, apply_germ_ladder, build_gaussian
from .geometry import GermFrame, IsotropicManifold, Loop, quantization_defect, spatial_action

__all__ = [
    "AssemblySpec",
    "AssembledVector",
    "QuantizationError",
    "assemble",
    "assemble_evolved",
    "sector_component_circle",
    "quantization_defects",
]

log = logging.getLogger(__name__)

MAX_FAMILY_ORDER = 4


class QuantizationError(ValueError):
    """The integrand is not single valued on the manifold."""


@dataclass
class AssemblySpec:
    """Input of :func:`assemble`.

    Attributes
    ----------
    manifold, frame : IsotropicManifold, GermFrame
    eps : float
    f : scalar, grid array or callable ``taus -> array``
        Amplitude on the grid (default 1).
    base : tuple of int
        Grid index of the base point of the line integral.
    nu : sequence of int, optional
        Excitation numbers of the transverse columns ``k, ..., D-1``.
    family : dict, optional
        ``{(alpha_1, ..., alpha_n): f_n}`` for the generalized operator with
        ``n <= 4`` creation factors weighted by ``f_n / sqrt(n!)``.  The key
        ``()`` holds the plain amplitude; ``f`` is ignored when given.
    quant_tol : float
        Largest admissible quantization defect on any periodic axis.
    error_bound : float, optional
        Raise when the quadrature error estimate (relative) exceeds it.
    """

    manifold: IsotropicManifold
    frame: GermFrame
    eps: float
    f: object = 1.0
    base: tuple = ()
    nu: tuple | None = None
    family: dict | None = None
    quant_tol: float = 1e-8
    error_bound: float | None = None

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        m, g = self.manifold, self.frame
        if g.D != m.D or g.k != m.k:
            raise ValueError("frame and manifold dimensions differ")
        self.base = tuple(self.base) if self.base else (0,) * m.k
        if self.nu is not None:
            self.nu = tuple(int(v) for v in self.nu)
            if len(self.nu) != m.D - m.k or min(self.nu, default=0) < 0:
                raise ValueError("nu needs one non-negative entry per transverse column")
        if self.family is not None:
            for key in self.family:
                if len(key) > MAX_FAMILY_ORDER:
                    raise ValueError(f"generalized operator is limited to n <= {MAX_FAMILY_ORDER}")
                if any(not (m.k <= a < m.D) for a in key):
                    raise IndexError("family indices must be transverse columns")

    def amplitude_grid(self, value=None):
        m = self.manifold
        value = self.f if value is None else value
        if callable(value):
            value = value(m.grid_taus())
        shape = m.grid_shape if m.k else ()
        return np.broadcast_to(np.asarray(value, dtype=complex), shape)

    def terms(self):
        """``[(alphas, weight grid), ...]`` of creation words to apply."""
        if self.family is None:
            word = ()
            if self.nu:
                for j, c in enumerate(self.nu):
                    word += (self.manifold.k + j,) * c
            return [(word, self.amplitude_grid())]
        return [(tuple(key), self.amplitude_grid(val) / np.sqrt(factorial(len(key))))
                for key, val in self.family.items()]


@dataclass
class AssembledVector:
    """Assembled state with quadrature metadata."""

    state: FockState
    eps: float
    n_points: int
    quad_error: float
    trunc_loss: float
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.state.norm()):
            raise FloatingPointError("assembled norm is not finite")
        if self.quad_error < 0 or self.trunc_loss < 0:
            raise ValueError("error estimates must be non-negative")

    def norm(self):
        return self.state.norm()


def quantization_defects(spec: AssemblySpec):
    """``{axis: defect}`` for every periodic axis of the manifold."""
    m, g = spec.manifold, spec.frame
    out = {}
    for a in range(m.k):
        if not m.periodic[a]:
            continue
        nu = spec.nu if spec.family is None else None
        gamma = g.monodromy_phases(a)[m.k:] if nu is not None else None
        out[a] = quantization_defect(m, spec.eps, Loop(axis=a), nu=nu, gamma=gamma)
    return out


def _check_quantization(spec):
    defects = quantization_defects(spec)
    bad = {a: d for a, d in defects.items() if d > spec.quant_tol}
    if bad:
        raise QuantizationError(f"quantization defect {bad} exceeds {spec.quant_tol:g}")
    if spec.family is not None:
        for a in defects:
            A = spec.frame.monodromy.get(a, np.eye(spec.frame.D))
            if np.max(np.abs(A - np.eye(spec.frame.D))) > spec.quant_tol:
                raise QuantizationError("the generalized operator needs trivial germ monodromy")
    return defects


def _subgrid_weights(m: IsotropicManifold):
    """Weights of the trapezoid rule on every other grid point (``None`` if unavailable)."""
    w = np.ones(tuple((n + 1) // 2 for n in m.grid_shape))
    for a in range(m.k):
        n = m.grid_shape[a]
        if m.periodic[a]:
            if n % 2:
                return None
            wa = np.full(n // 2, 2 * m.spacing[a])
        else:
            if n % 2 == 0 or n < 3:
                return None
            wa = np.full((n + 1) // 2, 2 * m.spacing[a])
            wa[0] *= 0.5
            wa[-1] *= 0.5
        shape = [1] * m.k
        shape[a] = -1
        w = w * wa.reshape(shape)
    return w


def _tangent_projector(d):
    gram = np.einsum("...ai,...bi->...ab", d.conj(), d)
    W = np.linalg.inv(gram)
    return gram, np.einsum("...ai,...ab,...bj->...ij", d, W, d)


def _assemble_points(eps, m, phi, F, G, dphi, log_scalar, terms, trunc, grid_weights, info):
    """Quadrature over per-point vectors; returns ``AssembledVector``."""
    k, D = m.k, m.D
    npts = m.n_points
    phi = phi.reshape(npts, D)
    F = F.reshape(npts, D, D)
    G = G.reshape(npts, D, D)
    FG = np.swapaxes(np.linalg.solve(np.swapaxes(G, -1, -2), np.swapaxes(F, -1, -2)), -1, -2)
    if k:
        d = dphi.reshape(npts, k, D)
        gram, proj = _tangent_projector(d)
        det_gram = np.linalg.det(gram).real
        if np.any(det_gram <= 0):
            raise np.linalg.LinAlgError("singular tangent Gram matrix")
        Mraw = FG - proj
        log_meas = 0.5 * np.log(det_gram)
    else:
        Mraw = FG
        log_meas = np.zeros(npts)
    asym = float(np.max(np.abs(Mraw - np.swapaxes(Mraw, -1, -2))))
    M = 0.5 * (Mraw + np.swapaxes(Mraw, -1, -2))
    det_GG = np.linalg.det(np.swapaxes(G, -1, -2).conj() @ G).real
    if np.any(det_GG <= 0):
        raise np.linalg.LinAlgError("det(G^H G) must be positive")
    log_pref = (log_meas - 0.25 * np.log(det_GG) - 0.5 * k * np.log(2 * np.pi)
                - 0.25 * k * np.log(eps))
    log_scalar = np.asarray(log_scalar, dtype=complex).reshape(npts) + log_pref

    n_exc = max((len(w) for w, _ in terms), default=0)
    work = TruncationSpec(D, trunc.N_max + n_exc)
    vecs = np.zeros((npts, trunc.dim), dtype=complex)
    lost = 0.0
    for i in range(npts):
        acc = None
        base = None
        for word, amp in terms:
            a_i = complex(np.asarray(amp).reshape(-1)[i] if np.ndim(amp) else amp)
            if a_i == 0:
                continue
            if base is None:
                base = build_gaussian(GaussianData(eps, phi[i], M[i]), work, log_scale=log_scalar[i])
            st = base
            for alpha in word:
                st = apply_germ_ladder(GermLadderSpec(F[i], G[i], phi[i], eps, alpha, "create", k), st)
            st = a_i * st
            acc = st if acc is None else acc + st
        if acc is None:
            continue
        red = restrict(acc, trunc)
        vecs[i] = red.vector
        lost = max(lost, red.lost_norm2)

    w = np.asarray(grid_weights).reshape(-1)
    psi = w @ vecs
    quad_err = float("nan")
    floor = npts * np.finfo(float).eps * float(np.sum(np.abs(w) * np.linalg.norm(vecs, axis=1)))
    if k:
        ws = _subgrid_weights(m)
        if ws is not None:
            sl = tuple(slice(None, None, 2) for _ in range(k))
            idx = np.arange(npts).reshape(m.grid_shape)[sl].reshape(-1)
            coarse = ws.reshape(-1) @ vecs[idx]
            quad_err = float(np.linalg.norm(psi - coarse)) + floor
    else:
        quad_err = floor
    info = dict(info)
    info.update(M_asymmetry=asym, M_norm_max=float(np.max(np.linalg.norm(M, 2, axis=(-2, -1)))),
                particle_number=float(np.mean(np.sum(np.abs(phi) ** 2, axis=-1)) / eps))
    state = FockState(trunc, psi, lost * float(np.sum(np.abs(w))) ** 2)
    return AssembledVector(state, eps, npts, quad_err, state.lost_norm2, info)


def _finish(spec, out):
    if spec.error_bound is not None and np.isfinite(out.quad_error):
        if out.quad_error > spec.error_bound * max(out.norm(), 1e-300):
            raise QuadratureError(
                f"quadrature error estimate {out.quad_error:.3e} exceeds bound at {out.n_points} points")
    return out


def assemble(spec: AssemblySpec, trunc: TruncationSpec) -> AssembledVector:
    """Canonical operator vector of ``spec`` truncated to ``trunc``.

    Raises
    ------
    QuantizationError
        The loop condition fails on some periodic axis.
    QuadratureError
        The error estimate exceeds ``spec.error_bound``.
    """
    m, g = spec.manifold, spec.frame
    defects = _check_quantization(spec)
    act, closure = spatial_action(m, spec.base)
    if closure > 1e-8 * max(1.0, float(np.max(np.abs(act)))):
        raise ValueError(f"line integral is path dependent (closure {closure:.3e})")
    terms = spec.terms()
    f0 = spec.amplitude_grid(1.0)
    log_scalar = np.asarray(act) / spec.eps + np.zeros(f0.shape)
    out = _assemble_points(spec.eps, m, m.phi, g.F, g.G, m.dphi, log_scalar, terms, trunc,
                           m.quadrature_weights() if m.k else np.ones(1),
                           {"quantization_defects": defects, "closure": closure, "t": 0.0})
    return _finish(spec, out)


def assemble_evolved(spec: AssemblySpec, traj: Trajectory, trunc: TruncationSpec, index=-1) -> AssembledVector:
    """Canonical operator vector at a stored time of ``traj``.

    ``traj`` must come from :func:`germfock.dynamics.evolve` started at the
    grid points of ``spec.manifold`` with ``frame0 = (F, G)`` of
    ``spec.frame``.  The tangent vectors at time ``t`` are the transported
    tangent columns of ``F``.
    """
    m, g = spec.manifold, spec.frame
    if traj.log_f is None:
        raise ValueError("trajectory was integrated without an initial frame")
    if traj.phi.shape[1:] != m.phi.shape:
        raise ValueError("trajectory batch does not match the manifold grid")
    defects = _check_quantization(spec)
    act, closure = spatial_action(m, spec.base)
    F, G = traj.frames(g.F, g.G, index)
    dphi = np.swapaxes(F[..., :, : m.k], -1, -2)
    log_scalar = (np.asarray(act) + traj.action[index]) / spec.eps + traj.log_f[index]
    out = _assemble_points(spec.eps, m, traj.phi[index], F, G, dphi, log_scalar, spec.terms(), trunc,
                           m.quadrature_weights() if m.k else np.ones(1),
                           {"quantization_defects": defects, "closure": closure,
                            "t": float(traj.times[index])})
    return _finish(spec, out)


def sector_component_circle(phi_tilde, M_tilde, N, c=1.0, eps=1.0, max_N=8):
    """Closed-form sector-``N`` tensor of the quantized circle.

    ``T_{i_1..i_N} = c * sum over partial pairings of {1..N}`` of the
    product of ``phi_tilde_i`` over unpaired slots and ``eps * M_tilde_ij``
    over pairs.  With ``eps = 1`` this is the plain pairing formula; the
    general ``eps`` form matches the Gaussian normalization in which the
    linear coefficient is ``phi / sqrt(eps)``.

    Parameters
    ----------
    max_N : int
        Largest rank for exact pairing enumeration.
    """
    phi_tilde = np.asarray(phi_tilde, dtype=complex)
    M_tilde = np.asarray(M_tilde, dtype=complex)
    D = phi_tilde.shape[0]
    if N > max_N:
        raise ValueError(f"exact pairing enumeration limited to N <= {max_N}")
    trunc = TruncationSpec(D, N)
    from .fock import FockBasis

    basis = FockBasis.get(trunc)
    sl = basis.sector_slice(N)
    v = np.zeros(basis.dim, dtype=complex)
    Mw = eps * M_tilde
    for i in range(sl.start, sl.stop):
        occ = basis.occ[i]
        word = np.repeat(np.arange(D), occ).astype(np.int64)
        log_mult = lgamma(N + 1) - sum(lgamma(int(n) + 1) for n in occ)
        v[i] = np.exp(0.5 * log_mult) * _kernels.pairing_sum(word, phi_tilde, Mw)
    return c * state_to_sector(FockState(trunc, v), N)
