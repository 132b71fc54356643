import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from germfock.dynamics import (IntegrationError, action_phase_trapezoid, canonical_defects, evolve,
                               evolved_manifold, flow_point, flow_variational, riccati_rhs,
                               transport_amplitude, transport_frame)
from germfock.geometry import (IsotropicManifold, harmonic_frame, loop_action, point_frame,
                               random_symmetric_contraction, vacuum_frame, validate_germ)
from germfock.hamiltonian import HamiltonianCoeffs, harmonic, number_conserving, quartic_pair, random_polynomial


def test_harmonic_flow_exact():
    phi0 = np.array([0.3 + 0.4j])
    t, phi = flow_point(harmonic([1.0]), phi0, 2 * np.pi, 2000)
    np.testing.assert_allclose(phi[:, 0], np.exp(-1j * t) * phi0[0], atol=1e-10)


def test_zero_hamiltonian_is_static():
    H = HamiltonianCoeffs(2, {})
    phi0 = np.array([0.3, -0.2j])
    t, Pi, Om, defects = flow_variational(H, phi0, 1.0, 10)
    _, phi = flow_point(H, phi0, 1.0, 10)
    np.testing.assert_array_equal(phi, np.broadcast_to(phi0, phi.shape))
    np.testing.assert_array_equal(Pi, np.broadcast_to(np.eye(2), Pi.shape))
    np.testing.assert_array_equal(Om, 0)
    assert defects.max() == 0.0


def test_quartic_conserves_number():
    phi0 = np.array([0.8 - 0.3j])
    _, phi = flow_point(quartic_pair(1, 1.0, 1.0), phi0, 3.0, 3000)
    np.testing.assert_allclose(np.abs(phi[:, 0]) ** 2, abs(phi0[0]) ** 2, atol=1e-10)


def test_energy_drift_fourth_order():
    H = random_polynomial(2, 7, scale=0.2)
    phi0 = np.array([0.4 + 0.1j, -0.2 + 0.3j])
    drift = []
    for steps in (50, 100):
        _, phi = flow_point(H, phi0, 2.0, steps)
        drift.append(abs(H.value(phi[-1]) - H.value(phi[0])))
    assert drift[1] < drift[0] / 8


def test_harmonic_variations():
    omega = 1.3
    tr = evolve(harmonic([omega, omega]), np.array([0.2, 0.1j]), 1.5, 1500)
    for i, t in enumerate(tr.times[::100]):
        np.testing.assert_allclose(tr.Pi[::100][i], np.exp(1j * omega * t) * np.eye(2), atol=1e-10)
    np.testing.assert_array_equal(tr.Om, 0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_random_quartic_is_proper_canonical(seed):
    H = random_polynomial(2, seed, degree=4, scale=0.2)
    phi0 = np.array([0.3 + 0.2j, -0.1 + 0.4j])
    tr = evolve(H, phi0, 1.0, 1000, store_every=100)
    assert np.any(np.abs(tr.Om[-1]) > 1e-3)
    assert tr.defects.max() <= 1e-8
    np.testing.assert_allclose(tr.defects[-1], canonical_defects(tr.Pi[-1], tr.Om[-1]))


def test_steps_must_be_positive():
    with pytest.raises(ValueError):
        evolve(harmonic([1.0]), np.array([0.1]), 1.0, 0)


def test_coarse_step_triggers_hard_failure():
    H = quartic_pair(1, 1.0, 1.0)
    with pytest.raises(IntegrationError):
        evolve(H, np.array([2.0]), 10.0, 5)


# ---------------------------------------------------------------- frames


def test_transport_identity_at_time_zero(rng):
    g = point_frame(random_symmetric_contraction(rng, 2, 0.5))
    tr = evolve(random_polynomial(2, 3), np.array([0.2, 0.1]), 0.0, 1)
    g0 = transport_frame(tr.Pi[0], tr.Om[0], g)
    np.testing.assert_allclose(g0.F, g.F)
    np.testing.assert_allclose(g0.G, g.G)


def test_harmonic_vacuum_frame_rotates():
    omega = 0.7
    tr = evolve(harmonic([omega, omega]), np.zeros(2), 2.0, 400)
    g = transport_frame(tr.Pi[-1], tr.Om[-1], vacuum_frame(2))
    np.testing.assert_allclose(g.G, np.exp(2j * omega) * np.eye(2), atol=1e-10)
    np.testing.assert_allclose(g.F, 0, atol=1e-15)


def test_degenerate_frame_is_reported():
    with pytest.raises(IntegrationError):
        transport_frame(np.zeros((2, 2)), np.zeros((2, 2)), vacuum_frame(2))


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_transported_point_germ_satisfies_axioms(seed):
    rng = np.random.default_rng(seed)
    H = number_conserving(2, seed % 1000, scale=0.3)
    phi0 = 0.3 * (rng.standard_normal(2) + 1j * rng.standard_normal(2))
    g = point_frame(random_symmetric_contraction(rng, 2, 0.6))
    tr = evolve(H, phi0, 1.0, 400, store_every=400)
    gt = transport_frame(tr.Pi[-1], tr.Om[-1], g)
    rep = validate_germ(gt, IsotropicManifold.point(tr.phi[-1]))
    assert rep.ok, rep.to_dict()


def test_riccati_equation_for_transported_M():
    H = random_polynomial(2, 5, scale=0.25)
    g = point_frame(np.array([[0.3, 0.1j], [0.1j, -0.2]]))
    phi0 = np.array([0.3 + 0.1j, 0.2 - 0.2j])
    F0, G0 = g.F[0] if g.F.ndim == 3 else g.F, g.G[0] if g.G.ndim == 3 else g.G
    tr = evolve(H, phi0, 0.5, 2000)
    Ms = []
    for i in range(len(tr.times)):
        F, G = tr.frames(F0, G0, i)
        Ms.append(F @ np.linalg.inv(G))
    Ms = np.array(Ms)
    h = tr.times[1]
    for i in (400, 1000, 1600):
        fd = (Ms[i - 2] - 8 * Ms[i - 1] + 8 * Ms[i + 1] - Ms[i + 2]) / (12 * h)
        np.testing.assert_allclose(fd, riccati_rhs(H, tr.phi[i], Ms[i]), atol=1e-8)


# ---------------------------------------------------------- phases, amplitude


def test_quartic_action_closed_form():
    # |phi|^2 = n is conserved and the integrand phi . dphi*/dt - i H equals i n^2 / 2
    phi0 = np.array([0.6 + 0.5j])
    n = abs(phi0[0]) ** 2
    tr = evolve(quartic_pair(1, 1.0, 1.0), phi0, 2.0, 400)
    np.testing.assert_allclose(tr.action, 0.5j * n ** 2 * tr.times, atol=1e-12)


def test_harmonic_action_vanishes():
    tr = evolve(harmonic([1.0, 2.0]), np.array([0.3, 0.5j]), 1.0, 50)
    np.testing.assert_allclose(tr.action, 0, atol=1e-14)


def test_action_rk4_matches_trapezoid():
    H = random_polynomial(2, 1, scale=0.2)
    tr = evolve(H, np.array([0.3 + 0.2j, -0.4j]), 1.0, 4000)
    np.testing.assert_allclose(action_phase_trapezoid(H, tr)[-1], tr.action[-1], atol=1e-7)


def test_harmonic_amplitude_constant(rng):
    g = point_frame(random_symmetric_contraction(rng, 2, 0.5))
    F0, G0 = g.F[0] if g.F.ndim == 3 else g.F, g.G[0] if g.G.ndim == 3 else g.G
    tr = evolve(harmonic([1.0, 1.5]), np.array([0.3, 0.2]), 1.0, 100, frame0=(F0, G0))
    np.testing.assert_allclose(tr.log_f, 0, atol=1e-15)
    np.testing.assert_allclose(transport_amplitude(harmonic([1.0, 1.5]), tr, F0, G0, f0=2.0), 2.0)


def test_quartic_amplitude_rk4_matches_independent_quadrature():
    H = quartic_pair(1, 1.0, 1.0)
    F0, G0 = np.array([[0.2 + 0.1j]]) / np.sqrt(1 - 0.05), np.array([[1.0]]) / np.sqrt(1 - 0.05)
    tr = evolve(H, np.array([0.9 + 0.2j]), 1.0, 4000, frame0=(F0, G0))
    f_trap = transport_amplitude(H, tr, F0, G0)
    assert np.max(np.abs(tr.log_f)) > 1e-2
    np.testing.assert_allclose(f_trap[-1], np.exp(tr.log_f[-1]), atol=1e-8)


def test_k0_exponent_is_double_trace():
    # with k = 0 the transport integrand reduces to the M-contraction of both Hessians
    H = random_polynomial(2, 4, scale=0.3)
    M0 = np.array([[0.2, 0.05j], [0.05j, 0.1]])
    g = point_frame(M0)
    F0, G0 = g.F[0] if g.F.ndim == 3 else g.F, g.G[0] if g.G.ndim == 3 else g.G
    phi0 = np.array([0.1, 0.2j])
    tr = evolve(H, phi0, 1e-5, 1, frame0=(F0, G0))
    hcc, _, hnn = H.hessians(phi0)
    rate = -0.25j * (np.sum(hnn * M0) + np.sum(hcc * M0.conj()))
    assert tr.log_f[-1] == pytest.approx(rate * 1e-5, rel=1e-5)


# ------------------------------------------------------------- manifolds


def test_loop_action_is_time_invariant():
    H = quartic_pair(2, 1.0, 0.5, J=0.3)
    m0 = IsotropicManifold.circle(np.array([0.6, 0.5j]), 64)
    tr = evolve(H, m0.phi, 0.8, 400, store_every=400)
    mt = evolved_manifold(m0, tr.phi[-1])
    assert loop_action(mt) == pytest.approx(loop_action(m0), abs=1e-9)


def test_transported_circle_germ_and_tangent_agreement():
    H = random_polynomial(2, 11, scale=0.15)
    m0 = IsotropicManifold.circle(np.array([0.5, 0.3j]), 96)
    g0 = harmonic_frame(m0, np.array([[0.25]]))
    tr = evolve(H, m0.phi, 0.5, 500, frame0=(g0.F, g0.G), store_every=500)
    gt = transport_frame(tr.Pi[-1], tr.Om[-1], g0)
    mt = evolved_manifold(m0, tr.phi[-1])
    np.testing.assert_allclose(mt.dphi[..., 0, :], gt.F[..., :, 0], atol=1e-8)
    rep = validate_germ(gt, mt)
    assert rep.ok, rep.to_dict()
