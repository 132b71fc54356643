"""Hamiltonian flow of manifolds and germs.

The flow ``i dphi/dt = dH/dphi*`` and the equations in variations

    i dPi/dt    = -H_{phi phi*} Pi   - H_{phi phi} Om
    i dOm/dt    =  H_{phi* phi*} Pi  + H_{phi* phi} Om,     Pi(0) = E, Om(0) = 0

are integrated together with classical RK4 on a fixed step, batched over
all grid points.  The action exponent ``int (phi . dphi*/dt - i H) dt`` and,
when an initial frame is given, the transport exponent are carried as extra
RK4 components so they share the integrator order.
"""
from dataclasses import dataclass
import logging

import numpy as np

from .geometry import GermFrame, IsotropicManifold, spatial_action
from .hamiltonian import HamiltonianCoeffs

__all__ = [
    "Trajectory",
    "IntegrationError",
    "evolve",
    "flow_point",
    "flow_variational",
    "canonical_defects",
    "transport_frame",
    "evolved_manifold",
    "action_exponent",
    "action_phase_trapezoid",
    "transport_amplitude",
    "riccati_rhs",
]

log = logging.getLogger(__name__)

HARD_DEFECT = 1e-6


class IntegrationError(RuntimeError):
    """Blow-up or loss of the proper-canonical structure during integration."""


@dataclass
class Trajectory:
    """Stored samples of a batched flow.

    Arrays carry the time index first, then the batch (grid) shape.

    Attributes
    ----------
    times : (T,) array
    phi : (T, ..., D)
    Pi, Om : (T, ..., D, D)
    action : (T, ...) complex
        ``int_0^t (phi . dphi*/dt - i H) dt``.
    log_f : (T, ...) complex or None
        ``-(i/4) int_0^t [sum H_{phi phi} K + sum H_{phi* phi*} conj(K)] dt``
        with ``K = F G^{-1}`` of the transported initial frame.
    defects : (T, 4)
        Worst-case proper-canonical defects at each stored time.
    """

    times: np.ndarray
    phi: np.ndarray
    Pi: np.ndarray
    Om: np.ndarray
    action: np.ndarray
    log_f: np.ndarray | None
    defects: np.ndarray

    @property
    def final(self):
        return -1

    def frames(self, F0, G0, index=-1):
        """Transported ``(F, G)`` at stored time ``index``."""
        return _transport_FG(self.Pi[index], self.Om[index], F0, G0)


def canonical_defects(Pi, Om):
    """Max-abs defects of the four proper-canonical identities over the batch.

    ``Pi^H Pi - Om^H Om - E``, ``Om^T Pi - Pi^T Om``,
    ``Pi Pi^H - conj(Om) Om^T - E``, ``Om Pi^H - conj(Pi) Om^T``.
    """
    E = np.eye(Pi.shape[-1])
    H = lambda X: np.swapaxes(X, -1, -2).conj()  # noqa: E731
    T = lambda X: np.swapaxes(X, -1, -2)  # noqa: E731
    d1 = H(Pi) @ Pi - H(Om) @ Om - E
    d2 = T(Om) @ Pi - T(Pi) @ Om
    d3 = Pi @ H(Pi) - Om.conj() @ T(Om) - E
    d4 = Om @ H(Pi) - Pi.conj() @ T(Om)
    return np.array([np.max(np.abs(d)) for d in (d1, d2, d3, d4)])


def _transport_FG(Pi, Om, F0, G0):
    G = Pi @ G0 + Om.conj() @ F0
    F = Om @ G0 + Pi.conj() @ F0
    return F, G


def _FGinv(F, G):
    return np.swapaxes(np.linalg.solve(np.swapaxes(G, -1, -2), np.swapaxes(F, -1, -2)), -1, -2)


def _rhs(H: HamiltonianCoeffs, phi, Pi, Om, frame0):
    dphi = -1j * H.grad_conj(phi)
    hcc, hcn, hnn = H.hessians(phi)
    hnc = np.swapaxes(hcn, -1, -2)
    dPi = 1j * (hnc @ Pi + hnn @ Om)
    dOm = -1j * (hcc @ Pi + hcn @ Om)
    dS = 1j * (H.euler_sum(phi) - H.value(phi))
    dlogf = None
    if frame0 is not None:
        F, G = _transport_FG(Pi, Om, *frame0)
        K = _FGinv(F, G)
        dlogf = -0.25j * (np.sum(hnn * K, axis=(-2, -1)) + np.sum(hcc * K.conj(), axis=(-2, -1)))
    return dphi, dPi, dOm, dS, dlogf


def evolve(H: HamiltonianCoeffs, phi0, T, steps, frame0=None, store_every=1, hard_defect=HARD_DEFECT):
    """Integrate flow, variations, action and (optionally) transport exponent.

    Parameters
    ----------
    phi0 : array, shape ``(..., D)``
        Initial points (any batch shape).
    T : float
        Final time (may be negative or zero).
    steps : int
        Number of RK4 steps of size ``T / steps``.
    frame0 : tuple ``(F0, G0)``, optional
        Initial frame matrices broadcastable to ``(..., D, D)``.
    store_every : int
        Keep every n-th step (the final step is always kept).

    Raises
    ------
    IntegrationError
        Non-finite values, or a proper-canonical defect above ``hard_defect``.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    phi = np.array(phi0, dtype=complex)
    batch = phi.shape[:-1]
    D = phi.shape[-1]
    Pi = np.broadcast_to(np.eye(D, dtype=complex), batch + (D, D)).copy()
    Om = np.zeros_like(Pi)
    S = np.zeros(batch, dtype=complex)
    lf = np.zeros(batch, dtype=complex) if frame0 is not None else None
    if frame0 is not None:
        frame0 = (np.asarray(frame0[0], dtype=complex), np.asarray(frame0[1], dtype=complex))
    h = T / steps
    rec = {"t": [0.0], "phi": [phi.copy()], "Pi": [Pi.copy()], "Om": [Om.copy()], "S": [S.copy()],
           "lf": [None if lf is None else lf.copy()], "def": [canonical_defects(Pi, Om)]}

    def add(y, k, c):
        return tuple(None if a is None else a + c * b for a, b in zip(y, k))

    y = (phi, Pi, Om, S, lf)
    for n in range(1, steps + 1):
        k1 = _rhs(H, y[0], y[1], y[2], frame0)
        k2 = _rhs(H, *add(y, k1, h / 2)[:3], frame0)
        k3 = _rhs(H, *add(y, k2, h / 2)[:3], frame0)
        k4 = _rhs(H, *add(y, k3, h)[:3], frame0)
        y = tuple(
            None if a is None else a + (h / 6) * (b1 + 2 * b2 + 2 * b3 + b4)
            for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)
        )
        if not np.all(np.isfinite(y[0])) or not np.all(np.isfinite(y[1])):
            raise IntegrationError(f"non-finite state at t = {n * h:.6g}")
        if n % store_every == 0 or n == steps:
            d = canonical_defects(y[1], y[2])
            if d.max() > hard_defect:
                raise IntegrationError(
                    f"proper-canonical defect {d.max():.3e} at t = {n * h:.6g}; refine the step")
            rec["t"].append(n * h)
            rec["phi"].append(y[0].copy())
            rec["Pi"].append(y[1].copy())
            rec["Om"].append(y[2].copy())
            rec["S"].append(y[3].copy())
            rec["lf"].append(None if y[4] is None else y[4].copy())
            rec["def"].append(d)
    return Trajectory(
        times=np.array(rec["t"]),
        phi=np.array(rec["phi"]),
        Pi=np.array(rec["Pi"]),
        Om=np.array(rec["Om"]),
        action=np.array(rec["S"]),
        log_f=None if frame0 is None else np.array(rec["lf"]),
        defects=np.array(rec["def"]),
    )


def flow_point(H, phi0, T, steps):
    """Sampled solution of ``i dphi/dt = dH/dphi*``; returns ``(times, phi)``."""
    tr = evolve(H, phi0, T, steps)
    return tr.times, tr.phi


def flow_variational(H, phi0, T, steps):
    """``(times, Pi, Om, defects)`` for the equations in variations along the flow."""
    tr = evolve(H, phi0, T, steps)
    return tr.times, tr.Pi, tr.Om, tr.defects


def transport_frame(Pi, Om, frame0: GermFrame, cond_bound=1e8) -> GermFrame:
    """Frame at time ``t`` from the initial frame and ``(Pi, Om)`` at ``t``.

    ``G(t) = Pi G0 + conj(Om) F0`` and ``F(t) = Om G0 + conj(Pi) F0``.
    Wrap frames of periodic axes are carried with the matrices of the first
    slice, which sits at the same phase-space point.
    """
    F, G = _transport_FG(Pi, Om, frame0.F, frame0.G)
    cond = np.max(np.linalg.cond(G))
    if not np.isfinite(cond) or cond > cond_bound:
        raise IntegrationError(f"transported G is degenerate (cond {cond:.3e})")
    wrap = {}
    for ax, (Bw, Cw) in frame0.wrap.items():
        Fw0 = (Cw + 1j * Bw) / np.sqrt(2)
        Gw0 = (Cw - 1j * Bw) / np.sqrt(2)
        Pi0 = np.take(Pi, 0, axis=ax) if Pi.ndim > 2 else Pi
        Om0 = np.take(Om, 0, axis=ax) if Om.ndim > 2 else Om
        wrap[ax] = _transport_FG(Pi0, Om0, Fw0, Gw0)
    return GermFrame.from_FG(F, G, frame0.k, frame0.monodromy, wrap)


def evolved_manifold(m0: IsotropicManifold, phi_t, frame_t: GermFrame | None = None, derivative="spectral"):
    """Manifold at time ``t`` from grid values ``phi_t``.

    Tangent vectors are re-estimated from the grid (spectral on periodic
    axes), independently of the variational equations.
    """
    if m0.k == 0:
        return IsotropicManifold.from_phi([], phi_t, np.zeros((0, m0.D), dtype=complex),
                                          transverse=m0.transverse, family=m0.family)
    return IsotropicManifold.from_phi(m0.axes, phi_t, periodic=m0.periodic, periods=m0.periods,
                                      derivative=derivative)


def action_exponent(traj: Trajectory, m0: IsotropicManifold, base=None, index=-1):
    """``g + int phi dphi* + int (phi dphi*/dt - i H) dt`` at a stored time.

    The spatial part runs along the grid at ``t = 0`` from ``base``; the time
    part along each trajectory.  ``exp(value / eps)`` is the phase factor of
    the canonical operator.
    """
    spatial, _ = spatial_action(m0, base)
    return spatial + traj.action[index]


def action_phase_trapezoid(H: HamiltonianCoeffs, traj: Trajectory):
    """Time part of the action exponent by the trapezoidal rule over stored samples."""
    phi = traj.phi
    integrand = 1j * (H.euler_sum(phi) - H.value(phi))
    dt = np.diff(traj.times).reshape((-1,) + (1,) * (integrand.ndim - 1))
    inc = 0.5 * (integrand[1:] + integrand[:-1]) * dt
    return np.concatenate([np.zeros_like(integrand[:1]), np.cumsum(inc, axis=0)])


def transport_amplitude(H: HamiltonianCoeffs, traj: Trajectory, F0, G0, f0=1.0):
    """``f(t) = f0 exp(-(i/4) int [sum H_{phi phi} K + sum H_{phi* phi*} conj(K)] dt)``.

    ``K = F G^{-1}`` of the transported frame; both sums are full
    double-index contractions.  Trapezoidal rule over stored samples.
    """
    vals = []
    for i in range(len(traj.times)):
        F, G = traj.frames(F0, G0, i)
        K = _FGinv(F, G)
        hcc, _, hnn = H.hessians(traj.phi[i])
        vals.append(np.sum(hnn * K, axis=(-2, -1)) + np.sum(hcc * K.conj(), axis=(-2, -1)))
    vals = np.array(vals)
    dt = np.diff(traj.times).reshape((-1,) + (1,) * (vals.ndim - 1))
    inc = 0.5 * (vals[1:] + vals[:-1]) * dt
    integral = np.concatenate([np.zeros_like(vals[:1]), np.cumsum(inc, axis=0)])
    return f0 * np.exp(-0.25j * integral)


def riccati_rhs(H: HamiltonianCoeffs, phi, M):
    """``dM/dt`` from ``i dM/dt = H** + H*. M + M H.* + M H.. M``."""
    hcc, hcn, hnn = H.hessians(phi)
    return -1j * (hcc + hcn @ M + M @ np.swapaxes(hcn, -1, -2) + M @ hnn @ M)
