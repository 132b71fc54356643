"""Isotropic manifolds, complex germs and the quadratic form ``M``.

A manifold is sampled on a rectangular grid over its parameters ``tau``
(``k`` of them, some periodic).  Each grid point carries real phase-space
coordinates ``P, Q`` and their ``tau`` derivatives; the complex amplitude is
``phi = (Q + iP) / sqrt(2)``.

A germ frame attaches complex ``D x D`` matrices ``B, C`` to each point, with
``F = (C + iB)/sqrt(2)`` and ``G = (C - iB)/sqrt(2)``.  Tangent columns
``a < k`` are the chart derivatives; the remaining columns carry the
Gaussian fluctuation data.
"""
from dataclasses import dataclass, field
import logging

import numpy as np
import scipy.linalg as sla

__all__ = [
    "IsotropicManifold",
    "GermFrame",
    "GermReport",
    "Loop",
    "validate_manifold",
    "validate_germ",
    "build_M",
    "build_M_grid",
    "loop_action",
    "quantization_defect",
    "measure_density",
    "rank_update_det",
    "gap_bound",
    "GapHypothesisError",
    "vacuum_frame",
    "point_frame",
    "harmonic_frame",
    "random_symmetric_contraction",
    "spatial_action",
    "base_constant",
]

log = logging.getLogger(__name__)

SQ2 = np.sqrt(2.0)


# ------------------------------------------------------------------ manifold


def _periodic_central(values, axis, h):
    return (np.roll(values, -1, axis=axis) - np.roll(values, 1, axis=axis)) / (2 * h)


def _open_central(values, axis, h):
    return np.gradient(values, h, axis=axis, edge_order=2)


def _spectral(values, axis, period):
    n = values.shape[axis]
    freqs = np.fft.fftfreq(n, d=period / n) * 2 * np.pi
    if n % 2 == 0:
        freqs[n // 2] = 0.0
    shape = [1] * values.ndim
    shape[axis] = n
    spec = np.fft.fft(values, axis=axis) * (1j * freqs.reshape(shape))
    out = np.fft.ifft(spec, axis=axis)
    return out.real if np.isrealobj(values) else out


class IsotropicManifold:
    """Grid-sampled ``k``-parameter family of phase-space points.

    Parameters
    ----------
    axes : sequence of 1-D arrays
        Sample points of each parameter; uniform spacing.
    P, Q : ndarray
        Shape ``grid_shape + (D,)``.
    dP, dQ : ndarray, optional
        Shape ``grid_shape + (k, D)``.  Estimated from the grid when omitted.
    periodic : sequence of bool
    periods : sequence of float, optional
        Period of each periodic axis; defaults to ``n * h``.
    derivative : {"central", "spectral"}
        Grid derivative rule when ``dP, dQ`` are not supplied.  Spectral is
        only used on periodic axes.
    chart : callable, optional
        ``chart(tau) -> (P, Q, dP, dQ)`` for arbitrary parameter arrays of
        shape ``(..., k)``; used for loop wrap points.
    transverse : callable, optional
        ``transverse(tau) -> g`` with ``g`` of shape ``(..., D, D - k)``:
        an orthonormal basis annihilated by the transposed tangent vectors,
        smooth in ``tau``.
    """

    def __init__(self, axes, P, Q, dP=None, dQ=None, periodic=None, periods=None,
                 derivative="central", chart=None, transverse=None, family=None):
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.k = len(self.axes)
        self.P = np.asarray(P, dtype=float)
        self.Q = np.asarray(Q, dtype=float)
        self.grid_shape = tuple(len(a) for a in self.axes)
        if self.P.shape[:-1] != self.grid_shape or self.Q.shape != self.P.shape:
            raise ValueError("P, Q must have shape grid_shape + (D,)")
        if self.P.size == 0:
            raise ValueError("empty grid")
        self.D = self.P.shape[-1]
        self.periodic = list(periodic) if periodic is not None else [False] * self.k
        self.spacing = [float(a[1] - a[0]) if len(a) > 1 else 1.0 for a in self.axes]
        if periods is None:
            periods = [len(a) * h for a, h in zip(self.axes, self.spacing)]
        self.periods = list(periods)
        self.chart = chart
        self.transverse = transverse
        self.family = family or {}
        if dP is None or dQ is None:
            dP = np.zeros(self.grid_shape + (self.k, self.D))
            dQ = np.zeros_like(dP)
            for a in range(self.k):
                dP[..., a, :] = self._grid_derivative(self.P, a, derivative)
                dQ[..., a, :] = self._grid_derivative(self.Q, a, derivative)
            self.derivative_source = derivative
        else:
            self.derivative_source = "analytic"
        self.dP = np.asarray(dP, dtype=float).reshape(self.grid_shape + (self.k, self.D))
        self.dQ = np.asarray(dQ, dtype=float).reshape(self.grid_shape + (self.k, self.D))

    # ---------------------------------------------------------------- views

    @property
    def phi(self):
        return (self.Q + 1j * self.P) / SQ2

    @property
    def dphi(self):
        """``d phi / d tau_a`` with shape ``grid_shape + (k, D)``."""
        return (self.dQ + 1j * self.dP) / SQ2

    @property
    def n_points(self):
        return int(np.prod(self.grid_shape)) if self.k else 1

    def grid_taus(self):
        """Parameter values of every grid point, shape ``grid_shape + (k,)``."""
        if self.k == 0:
            return np.zeros((0,))
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def quadrature_weights(self):
        """Trapezoidal product weights over the grid."""
        w = np.ones(self.grid_shape)
        for a in range(self.k):
            wa = np.full(self.grid_shape[a], self.spacing[a])
            if not self.periodic[a]:
                wa[0] *= 0.5
                wa[-1] *= 0.5
            shape = [1] * self.k
            shape[a] = -1
            w = w * wa.reshape(shape)
        return w

    def gram(self):
        """Tangent Gram matrix ``sum_i conj(dphi_a,i) dphi_b,i``, shape ``grid + (k, k)``."""
        d = self.dphi
        return np.einsum("...ai,...bi->...ab", d.conj(), d)

    def _grid_derivative(self, values, a, rule):
        axis = a
        h = self.spacing[a]
        if self.periodic[a]:
            if rule == "spectral":
                return _spectral(values, axis, self.periods[a])
            return _periodic_central(values, axis, h)
        return _open_central(values, axis, h)

    def with_grid_derivatives(self, rule="central"):
        """Copy whose derivatives are re-estimated from the grid values."""
        return IsotropicManifold(self.axes, self.P, self.Q, periodic=self.periodic, periods=self.periods,
                                 derivative=rule, chart=self.chart, transverse=self.transverse,
                                 family=self.family)

    # -------------------------------------------------------- constructors

    @classmethod
    def from_phi(cls, axes, phi, dphi=None, **kw):
        phi = np.asarray(phi, dtype=complex)
        dP = dQ = None
        if dphi is not None:
            dphi = np.asarray(dphi, dtype=complex)
            dP, dQ = SQ2 * dphi.imag, SQ2 * dphi.real
        return cls(axes, SQ2 * phi.imag, SQ2 * phi.real, dP, dQ, **kw)

    @classmethod
    def point(cls, phi0):
        """Zero-dimensional manifold at ``phi0``."""
        phi0 = np.atleast_1d(np.asarray(phi0, dtype=complex))
        D = phi0.shape[0]

        def transverse(tau):
            return np.broadcast_to(np.eye(D, dtype=complex), np.shape(tau)[:-1] + (D, D))

        return cls.from_phi([], phi0, np.zeros((0, D), dtype=complex), transverse=transverse,
                            family={"name": "point", "phi": phi0})

    @classmethod
    def circle(cls, phi_tilde, n_points=64, speed=1.0, tau0=0.0):
        """``phi(tau) = phi_tilde * exp(i speed tau)`` over one period."""
        phi_tilde = np.atleast_1d(np.asarray(phi_tilde, dtype=complex))
        D = phi_tilde.shape[0]
        period = 2 * np.pi / speed
        axis = tau0 + period * np.arange(n_points) / n_points
        perp = sla.null_space(phi_tilde[None, :]) if D > 1 else np.zeros((1, 0), dtype=complex)

        def chart(tau):
            t = np.asarray(tau, dtype=float)[..., 0]
            ph = np.exp(1j * speed * t)[..., None] * phi_tilde
            dph = (1j * speed * ph)[..., None, :]
            return SQ2 * ph.imag, SQ2 * ph.real, SQ2 * dph.imag, SQ2 * dph.real

        def transverse(tau):
            t = np.asarray(tau, dtype=float)[..., 0]
            return np.exp(-1j * speed * t)[..., None, None] * perp

        P, Q, dP, dQ = chart(axis[:, None])
        return cls([axis], P, Q, dP, dQ, periodic=[True], periods=[period], chart=chart,
                   transverse=transverse,
                   family={"name": "circle", "phi_tilde": phi_tilde, "speed": speed})

    @classmethod
    def torus2(cls, u, v, n_points=(32, 32)):
        """``phi(tau) = u exp(i tau_1) + v exp(i tau_2)``; isotropic when ``u^H v = 0``."""
        u = np.asarray(u, dtype=complex)
        v = np.asarray(v, dtype=complex)
        D = u.shape[0]
        n1, n2 = n_points
        axes = [2 * np.pi * np.arange(n1) / n1, 2 * np.pi * np.arange(n2) / n2]
        perp = sla.null_space(np.vstack([u, v])) if D > 2 else np.zeros((D, 0), dtype=complex)

        def chart(tau):
            tau = np.asarray(tau, dtype=float)
            e1 = np.exp(1j * tau[..., 0])[..., None]
            e2 = np.exp(1j * tau[..., 1])[..., None]
            ph = u * e1 + v * e2
            dph = np.stack([1j * u * e1, 1j * v * e2], axis=-2)
            return SQ2 * ph.imag, SQ2 * ph.real, SQ2 * dph.imag, SQ2 * dph.real

        def transverse(tau):
            return np.broadcast_to(perp, np.shape(tau)[:-1] + perp.shape)

        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        P, Q, dP, dQ = chart(mesh)
        return cls(axes, P, Q, dP, dQ, periodic=[True, True], periods=[2 * np.pi] * 2, chart=chart,
                   transverse=transverse, family={"name": "torus2", "u": u, "v": v})


@dataclass
class Loop:
    """Axis-aligned fundamental loop along a periodic parameter.

    ``fixed`` gives the grid indices of the other parameters (defaults to 0).
    """

    axis: int = 0
    fixed: tuple = ()
    reverse: bool = False
    windings: int = 1


# ------------------------------------------------------------------ reports


@dataclass
class GermReport:
    """Worst-case defect per axiom and pass/fail at tolerance."""

    defects: dict = field(default_factory=dict)
    passed: dict = field(default_factory=dict)
    tol: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def ok(self):
        return all(self.passed.values())

    def add(self, name, value, ok=None):
        value = float(abs(value)) if np.isfinite(value) else float("inf")
        self.defects[name] = value
        self.passed[name] = bool(value <= self.tol) if ok is None else bool(ok)

    def merge(self, other):
        self.defects.update(other.defects)
        self.passed.update(other.passed)
        self.info.update(other.info)
        return self

    def to_dict(self):
        return {"tol": self.tol, "ok": self.ok, "defects": dict(self.defects),
                "passed": dict(self.passed), "info": dict(self.info)}


def validate_manifold(m: IsotropicManifold, tol=1e-8) -> GermReport:
    """Check the isotropy bracket, the tangent Gram rank and grid smoothness.

    ``m3`` is the largest ``|sum_j dP_j/dtau_a dQ_j/dtau_b - dP_j/dtau_b dQ_j/dtau_a|``;
    ``m2`` reports the smallest singular value of the Gram matrix and passes
    when it exceeds ``tol``; ``m1`` compares the stored derivatives with
    central differences and passes within an ``h^2``-scaled tolerance.
    """
    rep = GermReport(tol=tol)
    if m.k == 0:
        rep.add("m3", 0.0)
        rep.add("m1", 0.0)
        rep.info["m2_min_singular"] = 1.0
        rep.passed["m2"] = True
        rep.defects["m2"] = 0.0
        return rep
    br = (np.einsum("...ai,...bi->...ab", m.dP, m.dQ) - np.einsum("...bi,...ai->...ab", m.dP, m.dQ))
    rep.add("m3", np.max(np.abs(br)))
    sv = np.linalg.svd(m.gram(), compute_uv=False)
    smin = float(sv.min())
    rep.info["m2_min_singular"] = smin
    rep.defects["m2"] = 0.0 if smin > tol else 1.0
    rep.passed["m2"] = smin > tol
    scale = max(np.max(np.abs(m.P)), np.max(np.abs(m.Q)), 1.0)
    h2 = max(h * h for h in m.spacing)
    worst = 0.0
    for a in range(m.k):
        for arr, darr in ((m.P, m.dP), (m.Q, m.dQ)):
            worst = max(worst, float(np.max(np.abs(m._grid_derivative(arr, a, "central") - darr[..., a, :]))))
    rep.add("m1", worst, ok=worst <= max(tol, h2 * scale))
    return rep


# --------------------------------------------------------------------- frame


class GermFrame:
    """Complex germ frame ``(B, C)`` on every grid point.

    Parameters
    ----------
    B, C : ndarray
        Shape ``grid_shape + (D, D)``.
    k : int
        Number of tangent columns.
    monodromy : dict, optional
        ``axis -> A`` (unitary ``D x D``) for each periodic axis.
    wrap : dict, optional
        ``axis -> (B_w, C_w)``: frames at the first slice along ``axis``
        shifted by one period.  Axiom r1 requires ``B_w = B_first A``.
    """

    def __init__(self, B, C, k, monodromy=None, wrap=None):
        self.B = np.asarray(B, dtype=complex)
        self.C = np.asarray(C, dtype=complex)
        if self.B.shape != self.C.shape or self.B.shape[-1] != self.B.shape[-2]:
            raise ValueError("B and C must be square and of equal shape")
        self.k = int(k)
        self.D = self.B.shape[-1]
        self.monodromy = dict(monodromy or {})
        self.wrap = dict(wrap or {})

    @classmethod
    def from_FG(cls, F, G, k, monodromy=None, wrap_FG=None):
        F = np.asarray(F, dtype=complex)
        G = np.asarray(G, dtype=complex)
        wrap = {}
        for ax, (Fw, Gw) in (wrap_FG or {}).items():
            wrap[ax] = ((Fw - Gw) / (1j * SQ2), (Fw + Gw) / SQ2)
        return cls((F - G) / (1j * SQ2), (F + G) / SQ2, k, monodromy, wrap)

    @property
    def F(self):
        return (self.C + 1j * self.B) / SQ2

    @property
    def G(self):
        return (self.C - 1j * self.B) / SQ2

    @property
    def L(self):
        d = np.ones(self.D)
        d[: self.k] = 0.0
        return np.diag(d)

    def FGinv(self):
        """``F G^{-1}`` at every grid point."""
        G = self.G
        return np.swapaxes(np.linalg.solve(np.swapaxes(G, -1, -2), np.swapaxes(self.F, -1, -2)), -1, -2)

    def monodromy_phases(self, axis=0):
        """Phases ``gamma_alpha`` of the diagonal monodromy on ``axis``."""
        A = self.monodromy.get(axis, np.eye(self.D))
        return np.angle(np.diag(A))

    def at(self, index):
        """Single-point frame (no loop data)."""
        return GermFrame(self.B[index], self.C[index], self.k)


def vacuum_frame(D):
    """``k = 0`` frame with ``F = 0`` and ``G = E``."""
    E = np.eye(D, dtype=complex)
    return GermFrame(1j * E / SQ2, E / SQ2, 0)


def random_symmetric_contraction(rng, n, norm):
    """Random complex symmetric ``n x n`` matrix with spectral norm ``norm``."""
    if n == 0:
        return np.zeros((0, 0), dtype=complex)
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    S = A + A.T
    return norm * S / np.linalg.norm(S, 2)


def _bogoliubov_block(Z, U=None):
    """``(F, G)`` block with ``F = Z G`` and ``G^H G - F^H F = E``."""
    n = Z.shape[0]
    if n == 0:
        return np.zeros((0, 0), complex), np.zeros((0, 0), complex)
    if np.linalg.norm(Z, 2) >= 1:
        raise ValueError("transverse squeeze must have norm < 1")
    X = sla.fractional_matrix_power(np.eye(n) - Z.conj().T @ Z, -0.5)
    X = 0.5 * (X + X.conj().T)
    if U is not None:
        X = X @ U
    return Z @ X, X


def point_frame(Z, U=None):
    """``k = 0`` frame with ``F G^{-1} = Z`` for symmetric ``Z`` with ``||Z|| < 1``."""
    Z = np.asarray(Z, dtype=complex)
    F, G = _bogoliubov_block(Z, U)
    return GermFrame.from_FG(F, G, 0)


def harmonic_frame(m: IsotropicManifold, Z=None):
    """Frame with tangent columns from the chart and a constant transverse squeeze.

    Tangent columns: ``F_a = dphi/dtau_a``, ``G_a = conj(F_a)``.  Transverse
    columns: ``G_T = g X`` and ``F_T = conj(g) Z X`` with ``g`` the
    manifold's transverse basis and ``X = (E - Z^H Z)^{-1/2}``.  For the
    circle this is the frame with ``G ~ exp(-i tau)``, ``F ~ exp(i tau)``.
    """
    if m.transverse is None:
        raise ValueError("manifold has no transverse basis; build the frame explicitly")
    nT = m.D - m.k
    Z = np.zeros((nT, nT), dtype=complex) if Z is None else np.asarray(Z, dtype=complex)
    ZX, X = _bogoliubov_block(Z)

    def frames(tau, dphi):
        g = m.transverse(tau) if m.k else m.transverse(np.zeros((0,)))
        g = np.asarray(g, dtype=complex)
        F = np.zeros(dphi.shape[:-2] + (m.D, m.D), dtype=complex)
        G = np.zeros_like(F)
        F[..., :, : m.k] = np.swapaxes(dphi, -1, -2)
        G[..., :, : m.k] = np.swapaxes(dphi.conj(), -1, -2)
        if nT:
            G[..., :, m.k:] = g @ X
            F[..., :, m.k:] = g.conj() @ ZX
        return F, G

    F, G = frames(m.grid_taus() if m.k else np.zeros((0,)), m.dphi)
    monodromy, wrap = {}, {}
    for a in range(m.k):
        if not m.periodic[a] or m.chart is None:
            continue
        taus = np.take(m.grid_taus(), 0, axis=a).copy()
        taus[..., a] += m.periods[a]
        _, _, dPw, dQw = m.chart(taus)
        Fw, Gw = frames(taus, (dQw + 1j * dPw) / SQ2)
        monodromy[a] = np.eye(m.D, dtype=complex)
        wrap[a] = (Fw, Gw)
    return GermFrame.from_FG(F, G, m.k, monodromy, wrap)


def validate_germ(g: GermFrame, m: IsotropicManifold, tol=1e-8, cond_bound=1e8) -> GermReport:
    """Worst-case defects of the germ axioms over the grid.

    Reports r2 (tangent columns), r3 (``B^T C - C^T B``), r4
    (``C^H B - B^H C - iL``), r6 (condition number of ``G``), r1 (monodromy
    unitarity and wrap consistency), r5 (``||F||_HS``, finite), and the
    asymmetry of ``F G^{-1}``.
    """
    if g.D != m.D or g.k != m.k or g.B.shape[:-2] != (m.grid_shape if m.k else ()):
        raise ValueError("frame and manifold dimensions differ")
    rep = GermReport(tol=tol)
    B, C = g.B, g.C
    r2 = 0.0
    for a in range(m.k):
        r2 = max(r2, float(np.max(np.abs(B[..., :, a] - m.dP[..., a, :]))),
                 float(np.max(np.abs(C[..., :, a] - m.dQ[..., a, :]))))
    rep.add("r2", r2)
    BT = np.swapaxes(B, -1, -2)
    CT = np.swapaxes(C, -1, -2)
    rep.add("r3", np.max(np.abs(BT @ C - CT @ B)))
    r4 = CT.conj() @ B - BT.conj() @ C - 1j * g.L
    rep.add("r4", np.max(np.abs(r4)))
    G = g.G
    cond = float(np.max(np.linalg.cond(G)))
    rep.defects["r6"] = cond
    rep.passed["r6"] = bool(np.isfinite(cond) and cond < cond_bound)
    hs = float(np.max(np.linalg.norm(g.F, axis=(-2, -1))))
    rep.defects["r5"] = hs
    rep.passed["r5"] = bool(np.isfinite(hs))
    r1 = 0.0
    for ax, A in g.monodromy.items():
        r1 = max(r1, float(np.max(np.abs(A.conj().T @ A - np.eye(g.D)))))
        if ax in g.wrap:
            Bw, Cw = g.wrap[ax]
            B0 = np.take(B, 0, axis=ax)
            C0 = np.take(C, 0, axis=ax)
            r1 = max(r1, float(np.max(np.abs(Bw - B0 @ A))), float(np.max(np.abs(Cw - C0 @ A))))
    rep.add("r1", r1)
    FG = g.FGinv()
    rep.info["M_asymmetry"] = float(np.max(np.abs(FG - np.swapaxes(FG, -1, -2))))
    rep.info["cond_G"] = cond
    rep.info["F_hs"] = hs
    rep.info["det_GhG_min"] = float(np.min(np.linalg.det(np.swapaxes(G, -1, -2).conj() @ G).real))
    return rep


# ----------------------------------------------------------------------- M


def build_M_grid(g: GermFrame, m: IsotropicManifold, return_asymmetry=False):
    """``M = F G^{-1} - sum_ab dphi_a W_ab dphi_b^T`` at every grid point, symmetrized.

    ``W`` is the inverse tangent Gram matrix.  The asymmetry before
    symmetrization is returned on request.
    """
    FG = g.FGinv()
    if m.k:
        gram = m.gram()
        if np.min(np.abs(np.linalg.det(gram))) == 0:
            raise np.linalg.LinAlgError("singular tangent Gram matrix")
        W = np.linalg.inv(gram)
        d = m.dphi
        proj = np.einsum("...ai,...ab,...bj->...ij", d, W, d)
        Mraw = FG - proj
    else:
        Mraw = FG
    asym = np.max(np.abs(Mraw - np.swapaxes(Mraw, -1, -2)), initial=0.0)
    M = 0.5 * (Mraw + np.swapaxes(Mraw, -1, -2))
    return (M, float(asym)) if return_asymmetry else M


def build_M(g: GermFrame, m: IsotropicManifold, index=()):
    """``M`` at one grid point (``index`` is a tuple of grid indices)."""
    return build_M_grid(g, m)[index]


# -------------------------------------------------------------- quantization


def loop_action(m: IsotropicManifold, loop: Loop = Loop()):
    """``(1/2 pi) * closed integral of P . dQ`` along an axis-aligned loop.

    Trapezoidal rule on ``P . dQ/dtau`` (spectrally accurate for smooth
    periodic charts).  Reversal negates, ``windings`` multiplies.
    """
    a = loop.axis
    if m.k == 0 or a >= m.k or not m.periodic[a]:
        raise ValueError("loop must run along a periodic axis")
    index = list(loop.fixed) + [0] * (m.k - 1 - len(loop.fixed))
    sl = []
    for ax in range(m.k):
        sl.append(slice(None) if ax == a else index.pop(0))
    P = m.P[tuple(sl)]
    dQ = m.dQ[tuple(sl)][:, a, :]
    val = np.sum(P * dQ) * m.spacing[a] / (2 * np.pi)
    sign = -1.0 if loop.reverse else 1.0
    return sign * loop.windings * float(val)


def quantization_defect(m: IsotropicManifold, eps, loop: Loop = Loop(), nu=None, gamma=None):
    """Distance of ``(1/2 pi eps) oint P dQ`` to the admissible set.

    Without excitations the admissible set is the integers.  With
    excitation numbers ``nu`` and monodromy phases ``gamma`` it is
    ``sum gamma_alpha nu_alpha / 2 pi + integers``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = loop_action(m, loop) / eps
    if nu is not None:
        nu = np.asarray(nu, dtype=float)
        gamma = np.zeros_like(nu) if gamma is None else np.asarray(gamma, dtype=float)
        x -= loop.windings * (-1.0 if loop.reverse else 1.0) * float(np.dot(gamma, nu)) / (2 * np.pi)
    return float(abs(x - np.round(x)))


def measure_density(m: IsotropicManifold):
    """``sqrt(det Gram)`` at every grid point (1 for ``k = 0``)."""
    if m.k == 0:
        return np.ones(())
    det = np.linalg.det(m.gram()).real
    if np.any(det <= 0):
        raise np.linalg.LinAlgError("singular tangent Gram matrix")
    return np.sqrt(det)


# ------------------------------------------------------------------ lemmas


def rank_update_det(y, z, bilinear=False, check=True, rtol=1e-10):
    """Determinant of ``R = E - sum_c y^c <z^c, .>`` through a ``k x k`` determinant.

    With the Hermitian pairing ``<z, x> = sum conj(z_i) x_i`` the reduced
    matrix is ``delta_ab - <z^a, y^b>``.  With ``bilinear=True`` the pairing
    is ``z . x`` and the reduced matrix ``delta_ab - y^a . z^b``.

    Parameters
    ----------
    y, z : sequence of 1-D arrays
        ``k`` vectors each.
    check : bool
        Compare with the dense ``D x D`` determinant and raise on mismatch.
    """
    Y = np.atleast_2d(np.asarray(y, dtype=complex))
    Zm = np.atleast_2d(np.asarray(z, dtype=complex))
    if Y.shape != Zm.shape:
        raise ValueError("y and z must hold the same number of equally sized vectors")
    k, D = Y.shape
    if bilinear:
        K = Y @ Zm.T
        R = np.eye(D) - Y.T @ Zm
    else:
        K = Zm.conj() @ Y.T
        R = np.eye(D) - Y.T @ Zm.conj()
    small = complex(np.linalg.det(np.eye(k) - K))
    if check:
        dense = complex(np.linalg.det(R))
        if abs(small - dense) > rtol * max(1.0, abs(dense)):
            raise AssertionError(f"rank-k determinant {small} != dense {dense}")
    return small


class GapHypothesisError(ValueError):
    """Raised when the positivity hypotheses of :func:`gap_bound` fail."""


def gap_bound(L, Y, tol=1e-12):
    """Smallest eigenvalue of ``L + Y`` for a projector ``L`` and ``Y >= 0``.

    Raises
    ------
    GapHypothesisError
        If ``Y`` has a negative eigenvalue below ``-tol`` or the kernels of
        ``L`` and ``Y`` intersect (``kappa <= tol``).
    """
    L = np.asarray(L, dtype=complex)
    Y = np.asarray(Y, dtype=complex)
    Yh = 0.5 * (Y + Y.conj().T)
    ymin = float(np.linalg.eigvalsh(Yh).min())
    if ymin < -tol:
        raise GapHypothesisError(f"Y is not non-negative (min eigenvalue {ymin:.3e})")
    kappa = float(np.linalg.eigvalsh(0.5 * (L + L.conj().T) + Yh).min())
    if kappa <= tol:
        raise GapHypothesisError(f"ker L and ker Y intersect (min eigenvalue {kappa:.3e})")
    return kappa


# ----------------------------------------------------------- line integrals


def _antiderivative(values, axis, h, periodic, period, start):
    """Running integral along ``axis`` from index ``start``.

    Periodic axes: exact for band-limited integrands (mean drift plus
    spectral antiderivative).  Open axes: cumulative trapezoid.
    """
    n = values.shape[axis]
    if periodic:
        mean = values.mean(axis=axis, keepdims=True)
        fluct = values - mean
        freqs = np.fft.fftfreq(n, d=period / n) * 2 * np.pi
        shape = [1] * values.ndim
        shape[axis] = n
        spec = np.fft.fft(fluct, axis=axis)
        with np.errstate(divide="ignore", invalid="ignore"):
            div = np.where(freqs == 0, 0.0, 1.0 / (1j * np.where(freqs == 0, 1.0, freqs)))
        if n % 2 == 0:
            div[n // 2] = 0.0
        prim = np.fft.ifft(spec * div.reshape(shape), axis=axis)
        tau = h * np.arange(n).reshape(shape)
        out = prim + mean * tau
    else:
        from scipy.integrate import cumulative_trapezoid

        out = cumulative_trapezoid(values, dx=h, axis=axis, initial=0.0)
    return out - np.take(out, [start], axis=axis)


def base_constant(phi0):
    """``g = phi* . phi / 2 + (phi* . phi* - phi . phi) / 4`` at the base point."""
    phi0 = np.asarray(phi0, dtype=complex)
    return complex(np.vdot(phi0, phi0) / 2 + (np.sum(phi0.conj() ** 2) - np.sum(phi0 ** 2)) / 4)


def spatial_action(m: IsotropicManifold, base=None):
    """``g + int_{tau0}^{tau} phi . dphi*`` on every grid point.

    The path runs along axis 0 from the base point, then along axis 1.  On
    an isotropic chart the result is path independent; the second return
    value is the discrepancy with the other axis order (zero for ``k < 2``).

    Returns
    -------
    values : complex ndarray, shape ``grid_shape``
    closure : float
    """
    base = tuple(base) if base is not None else (0,) * m.k
    phi = m.phi
    if m.k == 0:
        return np.asarray(base_constant(phi)), 0.0
    g = base_constant(phi[base])
    d = m.dphi
    integrand = [np.einsum("...i,...i->...", phi, d[..., a, :].conj()) for a in range(m.k)]

    def along(order):
        acc = np.zeros(m.grid_shape, dtype=complex)
        for step, a in enumerate(order):
            run = _antiderivative(integrand[a], a, m.spacing[a], m.periodic[a], m.periods[a], base[a])
            if step == 0:
                # restrict to the line through the base point in the other axes
                sl = [base[b] if b != a else slice(None) for b in range(m.k)]
                line = run[tuple(sl)]
                shape = [1] * m.k
                shape[a] = -1
                acc = acc + line.reshape(shape)
            else:
                # each perpendicular line starts at the value already reached
                acc = acc + run
        return acc

    vals = along(list(range(m.k)))
    closure = 0.0
    if m.k == 2:
        other = along([1, 0])
        closure = float(np.max(np.abs(other - vals)))
    return g + vals, closure
