"""Residuals, eps scans, stationary energies and germ-operator consistency checks."""
from dataclasses import dataclass, field
import logging

import numpy as np
from scipy.sparse.linalg import expm_multiply

from .canonical import AssemblySpec, AssembledVector, assemble, assemble_evolved
from .dynamics import evolve
from .fock import FockState, TruncationSpec, apply_hamiltonian, hamiltonian_matrix, inner_product
from .gaussian import GermLadderSpec, apply_germ_ladder
from .geometry import GermFrame, IsotropicManifold
from .hamiltonian import HamiltonianCoeffs

__all__ = [
    "ResidualPoint",
    "ResidualReport",
    "evolved_source",
    "residual_norm",
    "epsilon_scan",
    "fit_slope",
    "stationary_energy",
    "eigen_relation_defect",
    "bdg_modes",
    "rotating_frame",
    "stationary_point",
    "energy_residual",
    "heisenberg_consistency",
    "exact_propagate",
    "normalized_overlap",
]

log = logging.getLogger(__name__)

RESIDUAL_FLOOR = 1e-6


# ------------------------------------------------------------- residuals


def evolved_source(spec: AssemblySpec, H: HamiltonianCoeffs, trunc: TruncationSpec, steps=200):
    """``t -> AssembledVector`` evolving ``spec`` with a fixed number of RK4 steps.

    The step count does not depend on ``t``, so the discretization error is
    a smooth function of ``t`` and cancels in finite differences.
    """
    m, g = spec.manifold, spec.frame

    def source(t):
        if t == 0:
            return assemble(spec, trunc)
        traj = evolve(H, m.phi, t, steps, frame0=(g.F, g.G), store_every=steps)
        return assemble_evolved(spec, traj, trunc)

    return source


@dataclass
class ResidualPoint:
    eps: float
    t: float
    residual: float
    norm: float
    h_loss: float

    @property
    def relative(self):
        return self.residual / self.norm


def _state(x):
    return x.state if isinstance(x, AssembledVector) else x


def residual_norm(H: HamiltonianCoeffs, eps, source, t, dt=None, loss_bound=1e-8,
                  stencil=4) -> ResidualPoint:
    """``|| i dPsi/dt - (1/eps) H Psi ||`` at time ``t`` by a central difference.

    The difference is taken on ``chi(s) = exp(i lam s) Psi(s)`` with
    ``lam = <Psi, H Psi> / (eps ||Psi||^2)``, which removes the fast phase
    and leaves the identity ``i Psi' = exp(-i lam t) i chi' + lam Psi``
    exact.  ``dt`` defaults to ``min(1e-3, eps / 10)``.

    Parameters
    ----------
    stencil : {2, 4}
        Number of points of the central difference (error ``O(dt^2)`` or
        ``O(dt^4)``).

    Raises
    ------
    ValueError
        When the part of ``H Psi`` beyond ``N_max`` exceeds ``loss_bound``
        relative to ``||H Psi / eps||``.
    """
    dt = min(1e-3, eps / 10) if dt is None else dt
    psi = _state(source(t))
    norm = psi.norm()
    hpsi = apply_hamiltonian(H, eps, psi)
    hv = hpsi.vector / eps
    hl = np.sqrt(max(hpsi.lost_norm2 - psi.lost_norm2, 0.0)) / eps
    scale = max(float(np.linalg.norm(hv)), 1e-300)
    if hl > loss_bound * scale and hl > loss_bound * norm:
        raise ValueError(f"truncation loss {hl:.3e} in H Psi above bound; raise N_max")
    lam = float(np.vdot(psi.vector, hv).real) / norm ** 2
    def chi(j):
        return _state(source(t + j * dt)).vector * np.exp(1j * lam * j * dt)

    if stencil == 2:
        dchi = (chi(1) - chi(-1)) / (2 * dt)
    elif stencil == 4:
        dchi = (8 * (chi(1) - chi(-1)) - (chi(2) - chi(-2))) / (12 * dt)
    else:
        raise ValueError("stencil must be 2 or 4")
    dpsi = 1j * dchi
    res = dpsi + lam * psi.vector - hv
    return ResidualPoint(float(eps), float(t), float(np.linalg.norm(res)), float(norm), float(hl))


def fit_slope(eps, values):
    """Least-squares slope of ``log values`` against ``log eps`` and its rms residual."""
    x = np.log(np.asarray(eps, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    coef, res, *_ = np.polyfit(x, y, 1, full=True)
    rms = float(np.sqrt(res[0] / len(x))) if len(res) else 0.0
    return float(coef[0]), rms


@dataclass
class ResidualReport:
    """Residuals over an eps ladder.

    ``status`` is ``"fit"`` when a slope was fitted and ``"floor"`` when
    every relative residual sits below ``floor`` and the fit is skipped.
    """

    points: list
    slope: float | None
    fit_residual: float | None
    status: str
    floor: float = RESIDUAL_FLOOR
    info: dict = field(default_factory=dict)

    @property
    def eps(self):
        return np.array([p.eps for p in self.points])

    @property
    def relative(self):
        return np.array([p.relative for p in self.points])

    @property
    def norms(self):
        return np.array([p.norm for p in self.points])

    def norm_ratio(self):
        n = self.norms
        return float(n.max() / n.min())

    def nonincreasing(self, slack=0.0):
        """Relative residual does not grow as eps decreases (ladder order)."""
        order = np.argsort(-self.eps)
        r = self.relative[order]
        return bool(np.all(np.diff(r) <= slack * r[:-1] + 0.0)) or self.status == "floor"

    def rows(self):
        return [(p.eps, p.t, p.residual, p.norm) for p in self.points]

    def to_dict(self):
        return {"slope": self.slope, "fit_residual": self.fit_residual, "status": self.status,
                "floor": self.floor, "norm_ratio": self.norm_ratio(),
                "points": [{"eps": p.eps, "t": p.t, "residual": p.residual, "norm": p.norm,
                            "relative": p.relative} for p in self.points]}


def epsilon_scan(H: HamiltonianCoeffs, make_source, eps_list, t, floor=RESIDUAL_FLOOR, dt=None,
                 stencil=4):
    """Residuals over a geometric eps ladder.

    Parameters
    ----------
    make_source : callable
        ``eps -> (t -> AssembledVector)``.
    eps_list : sequence of float
        At least three distinct positive values.
    """
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3 or len(set(eps_list)) != len(eps_list) or min(eps_list) <= 0:
        raise ValueError("need at least three distinct positive eps values")
    pts = [residual_norm(H, e, make_source(e), t, dt=dt, stencil=stencil) for e in eps_list]
    rel = np.array([p.relative for p in pts])
    if np.all(rel <= floor):
        return ResidualReport(pts, None, None, "floor", floor)
    slope, rms = fit_slope(eps_list, rel)
    return ResidualReport(pts, slope, rms, "fit", floor)


# ---------------------------------------------------------- stationary


def _hess_at(H, phi):
    hcc, hcn, hnn = H.hessians(np.asarray(phi, dtype=complex))
    return hcc, hcn, hnn


def eigen_relation_defect(H: HamiltonianCoeffs, phi, F, G, Omega, beta):
    """Max defect of the rotating-frame eigen relations of ``(F, G)``.

    ``(beta + Omega) G = H_{phi phi*} G + H_{phi phi} F`` and
    ``-(beta - Omega) F = H_{phi* phi*} G + H_{phi* phi} F`` column-wise,
    plus the stationarity ``Omega phi = dH/dphi*``.
    """
    hcc, hcn, hnn = _hess_at(H, phi)
    beta = np.asarray(beta, dtype=float)
    d1 = G * (beta + Omega) - (hcn.T @ G + hnn @ F)
    d2 = -F * (beta - Omega) - (hcc @ G + hcn @ F)
    d3 = Omega * np.asarray(phi) - H.grad_conj(np.asarray(phi, dtype=complex))
    return float(max(np.max(np.abs(d1)), np.max(np.abs(d2)), np.max(np.abs(d3))))


def stationary_energy(H: HamiltonianCoeffs, phi, F, G, eps, beta=None, nu=None, Omega=None, tol=1e-8):
    """Energy of a stationary germ vector.

    ``E = H(phi)/eps + 1/4 sum_mn [H_{phi phi} (F G^{-1}) + H_{phi* phi*} conj(F G^{-1})]_mn``,
    plus ``sum beta_l nu_l`` over transverse columns when ``nu`` is given
    (the trivial-monodromy convention).  When ``Omega`` and ``beta`` are
    given the eigen relations are checked first.
    """
    phi = np.asarray(phi, dtype=complex)
    F = np.asarray(F, dtype=complex)
    G = np.asarray(G, dtype=complex)
    if Omega is not None and beta is not None:
        d = eigen_relation_defect(H, phi, F, G, Omega, beta)
        if d > tol:
            raise ValueError(f"eigen relation defect {d:.3e} above {tol:g}")
    hcc, _, hnn = _hess_at(H, phi)
    K = np.linalg.solve(G.T, F.T).T
    E = float(H.value(phi).real) / eps + 0.25 * float((np.sum(hnn * K) + np.sum(hcc * K.conj())).real)
    if nu is not None:
        beta = np.asarray(beta, dtype=float)
        nu = np.asarray(nu, dtype=float)
        E += float(np.dot(beta[len(beta) - len(nu):], nu))
    return E


def bdg_modes(H: HamiltonianCoeffs, phi, Omega):
    """Rotating-frame fluctuation modes at a stationary point.

    Returns ``(F, G, beta)``: column 0 is the phase mode ``G = conj(phi)``,
    ``F = -phi`` with ``beta = 0``; the remaining columns are the
    positive-norm eigenvectors of

        [[H_{phi phi*} - Omega, H_{phi phi}], [-H_{phi* phi*}, -(H_{phi* phi} - Omega)]]

    acting on ``(G; F)``, normalized to ``G^H G - F^H F = 1``.
    """
    phi = np.asarray(phi, dtype=complex)
    D = phi.shape[0]
    hcc, hcn, hnn = _hess_at(H, phi)
    E = np.eye(D)
    B = np.block([[hcn.T - Omega * E, hnn], [-hcc, -(hcn - Omega * E)]])
    w, V = np.linalg.eig(B)
    # the phase mode is a Jordan block at zero; its eigenvalues split by ~sqrt(machine eps)
    zero_tol = 1e-6 * (1.0 + float(np.max(np.abs(w))))
    cand = []
    for j in range(2 * D):
        g, f = V[:D, j], V[D:, j]
        s = float((np.vdot(g, g) - np.vdot(f, f)).real)
        if abs(w[j]) <= zero_tol:
            continue
        if abs(w[j].imag) > zero_tol:
            raise np.linalg.LinAlgError("complex fluctuation frequency: stationary point is unstable")
        if s > 1e-10:
            cand.append((w[j].real, g / np.sqrt(s), f / np.sqrt(s)))
    cand.sort(key=lambda c: c[0])
    if len(cand) < D - 1:
        raise np.linalg.LinAlgError("not enough stable positive-norm fluctuation modes")
    cand = cand[: D - 1]
    F = np.column_stack([-phi] + [c[2] for c in cand])
    G = np.column_stack([phi.conj()] + [c[1] for c in cand])
    beta = np.array([0.0] + [c[0] for c in cand])
    return F, G, beta


def rotating_frame(m: IsotropicManifold, F_tilde, G_tilde, beta, Omega, convention="monodromy"):
    """Germ frame on the orbit circle ``phi(tau) = phi_tilde exp(i tau)``.

    ``convention="monodromy"``: columns rotate as
    ``F_l ~ exp(-i (beta_l / Omega - 1) tau)``, ``G_l ~ exp(-i (beta_l / Omega + 1) tau)``,
    giving monodromy ``diag(exp(-2 pi i beta_l / Omega))`` over the
    counterclockwise loop.  ``convention="trivial"``: ``F ~ exp(i tau)``,
    ``G ~ exp(-i tau)`` with identity monodromy.  The phase column is
    rescaled by ``-i`` so that it equals the tangent vector.
    """
    F_tilde = np.array(F_tilde, dtype=complex)
    G_tilde = np.array(G_tilde, dtype=complex)
    F_tilde[:, 0] *= -1j
    G_tilde[:, 0] *= -1j
    beta = np.asarray(beta, dtype=float)
    if convention == "monodromy":
        rf, rg = -(beta / Omega - 1), -(beta / Omega + 1)
    elif convention == "trivial":
        rf, rg = np.ones_like(beta), -np.ones_like(beta)
    else:
        raise ValueError("convention must be 'monodromy' or 'trivial'")

    def frames(tau):
        tau = np.asarray(tau, dtype=float)[..., None, None]
        return F_tilde * np.exp(1j * rf * tau), G_tilde * np.exp(1j * rg * tau)

    taus = m.grid_taus()[..., 0]
    F, G = frames(taus)
    Fw, Gw = frames(taus[:1] + m.periods[0])
    A = np.diag(np.exp(2j * np.pi * (rg + 1)))
    return GermFrame.from_FG(F, G, 1, {0: A}, {0: (Fw, Gw)})


def stationary_point(H: HamiltonianCoeffs, direction, norm2, tol=1e-13, maxiter=200):
    """Stationary ``phi = s * direction`` with ``|phi|^2 = norm2`` and its ``Omega``.

    ``direction`` must be an eigen-direction of ``dH/dphi*`` for every
    scale (as for symmetric dimers).  Returns ``(phi, Omega)``.
    """
    u = np.asarray(direction, dtype=complex)
    u = u / np.linalg.norm(u)
    phi = np.sqrt(norm2) * u
    g = H.grad_conj(phi)
    Omega = complex(np.vdot(phi, g) / norm2).real
    if np.max(np.abs(g - Omega * phi)) > 1e-9 * max(1.0, np.max(np.abs(g))):
        raise ValueError("direction is not stationary for this Hamiltonian")
    return phi, Omega


def energy_residual(H: HamiltonianCoeffs, eps, vec, E):
    """``||(H/eps - E) Psi|| / ||Psi||``."""
    st = _state(vec)
    hp = apply_hamiltonian(H, eps, st)
    r = hp.vector / eps - E * st.vector
    over = max(hp.lost_norm2 - st.lost_norm2, 0.0)
    return float(np.sqrt(np.vdot(r, r).real + over / eps ** 2) / st.norm())


# ------------------------------------------------------ Heisenberg check


def heisenberg_consistency(H: HamiltonianCoeffs, phi0, F0, G0, state: FockState, dt, alpha=0,
                           substeps=20):
    """Defect of transporting an unshifted germ creation operator over one step.

    ``H_2`` is the quadratic part of ``H`` frozen at ``phi0``.  The defect is
    ``|| exp(-i H_2 dt) a+(0) s - a+(dt) exp(-i H_2 dt) s || / ||s||`` with
    ``a+(t) = conj(G(t)) . psi+ - conj(F(t)) . psi-`` and ``(F(t), G(t))``
    carried by the equations in variations of the full ``H`` along the
    trajectory from ``phi0``.  Exact for quadratic ``H``; otherwise of
    order ``dt^2``.
    """
    phi0 = np.asarray(phi0, dtype=complex)
    D = phi0.shape[0]
    H2 = H.quadratic_part(phi0)
    trunc = state.trunc
    A = hamiltonian_matrix(H2, 1.0, trunc)
    traj = evolve(H, phi0, dt, substeps, store_every=substeps)
    F1, G1 = traj.frames(F0, G0)
    zero = np.zeros(D)

    def prop(v):
        return FockState(trunc, expm_multiply(-1j * dt * A, v.vector))

    a0 = apply_germ_ladder(GermLadderSpec(F0, G0, zero, 1.0, alpha, "create"), state)
    lhs = prop(a0)
    rhs = apply_germ_ladder(GermLadderSpec(F1, G1, zero, 1.0, alpha, "create"), prop(state))
    return float(np.linalg.norm(lhs.vector - rhs.vector) / state.norm())


# ------------------------------------------------------- exact reference


def exact_propagate(H: HamiltonianCoeffs, eps, state: FockState, t):
    """``exp(-i t H / eps) state`` with the Hamiltonian truncated to ``state.trunc``."""
    A = hamiltonian_matrix(H, eps, state.trunc)
    return FockState(state.trunc, expm_multiply((-1j * t / eps) * A, state.vector), state.lost_norm2)


def normalized_overlap(a, b):
    """``|<a, b>| / (||a|| ||b||)``."""
    a, b = _state(a), _state(b)
    return float(abs(inner_product(a, b)) / (a.norm() * b.norm()))
