import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from germfock.geometry import (GapHypothesisError, GermFrame, IsotropicManifold, Loop, build_M,
                               build_M_grid, gap_bound, harmonic_frame, loop_action, measure_density,
                               point_frame, quantization_defect, random_symmetric_contraction,
                               rank_update_det, spatial_action, vacuum_frame, validate_germ,
                               validate_manifold)


def _unit(rng, D):
    v = rng.standard_normal(D) + 1j * rng.standard_normal(D)
    return v / np.linalg.norm(v)


# ------------------------------------------------------------- manifolds


def test_circle_axioms():
    r = 0.7
    m = IsotropicManifold.circle(np.array([r, 0.0]), 32)
    rep = validate_manifold(m)
    assert rep.ok
    assert rep.defects["m3"] == 0.0
    np.testing.assert_allclose(m.gram()[..., 0, 0].real, r ** 2, rtol=1e-14)


def test_point_manifold_passes():
    assert validate_manifold(IsotropicManifold.point([0.3 + 0.1j, 0.2])).ok


def test_perturbed_torus_fails_isotropy():
    u = np.array([0.5, 0.0, 0.0], complex)
    v = np.array([0.0, 0.6, 0.0], complex)
    m = IsotropicManifold.torus2(u, v, (16, 16))
    assert validate_manifold(m).ok
    taus = m.grid_taus()
    P = m.P.copy()
    P[..., 0] += 0.1 * taus[..., 1]
    dP = m.dP.copy()
    dP[..., 1, 0] += 0.1
    bad = IsotropicManifold(m.axes, P, m.Q, dP, m.dQ, periodic=[True, True])
    rep = validate_manifold(bad)
    assert rep.defects["m3"] > 1e-3
    assert not rep.passed["m3"]


def test_empty_grid_rejected():
    with pytest.raises(ValueError):
        IsotropicManifold([np.array([])], np.zeros((0, 2)), np.zeros((0, 2)))


# ----------------------------------------------------------------- germs


def test_vacuum_frame_is_exact():
    g = vacuum_frame(3)
    m = IsotropicManifold.point(np.zeros(3))
    rep = validate_germ(g, m)
    assert rep.ok
    for key in ("r2", "r3", "r4", "r1"):
        assert rep.defects[key] <= 1e-15
    np.testing.assert_array_equal(g.F, 0)
    np.testing.assert_allclose(g.G, np.eye(3))
    np.testing.assert_array_equal(build_M(g, m), 0)


def test_wrong_tangent_column_fails_r2():
    m = IsotropicManifold.circle(np.array([0.6, 0.8j]), 16)
    g = harmonic_frame(m)
    B = g.B.copy()
    B[..., 0, 0] += 0.1
    rep = validate_germ(GermFrame(B, g.C, 1, g.monodromy, g.wrap), m)
    assert not rep.passed["r2"]


def test_dimension_mismatch_rejected():
    m = IsotropicManifold.circle(np.array([0.6, 0.8j]), 16)
    with pytest.raises(ValueError):
        validate_germ(vacuum_frame(2), m)


def _random_germ(rng, kind):
    if kind == "point":
        D = int(rng.integers(1, 4))
        m = IsotropicManifold.point(0.5 * _unit(rng, D))
        return m, point_frame(random_symmetric_contraction(rng, D, rng.uniform(0, 0.8)))
    if kind == "circle":
        D = int(rng.integers(2, 5))
        m = IsotropicManifold.circle(rng.uniform(0.3, 1.5) * _unit(rng, D), 16)
        Z = random_symmetric_contraction(rng, D - 1, rng.uniform(0, 0.8))
        return m, harmonic_frame(m, Z)
    D = int(rng.integers(3, 5))
    Q, _ = np.linalg.qr(rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D)))
    m = IsotropicManifold.torus2(0.7 * Q[:, 0], 0.5 * Q[:, 1], (8, 8))
    Z = random_symmetric_contraction(rng, D - 2, rng.uniform(0, 0.8))
    return m, harmonic_frame(m, Z)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), kind=st.sampled_from(["point", "circle", "torus"]))
def test_random_germs_satisfy_axioms_and_M_properties(seed, kind):
    rng = np.random.default_rng(seed)
    m, g = _random_germ(rng, kind)
    rep = validate_germ(g, m)
    assert rep.ok, rep.to_dict()
    assert rep.info["det_GhG_min"] > 0
    M, asym = build_M_grid(g, m, return_asymmetry=True)
    assert asym <= 1e-10
    assert np.max(np.linalg.norm(M, 2, axis=(-2, -1))) < 1
    for a in range(m.k):
        assert np.max(np.abs(np.einsum("...ij,...j->...i", M, m.dphi[..., a, :].conj()))) <= 1e-10


def test_circle_M_uses_plus_sign_of_tangent_projector():
    # M~ = F G^{-1} + phi phi^T / |phi|^2 annihilates conj(phi); the minus sign does not
    rng = np.random.default_rng(3)
    pt = 0.9 * _unit(rng, 3)
    m = IsotropicManifold.circle(pt, 16)
    g = harmonic_frame(m, random_symmetric_contraction(rng, 2, 0.5))
    FG = g.FGinv()[0]
    proj = np.outer(pt, pt) / np.vdot(pt, pt).real
    plus, minus = FG + proj, FG - proj
    np.testing.assert_allclose(build_M(g, m, (0,)), plus, atol=1e-14)
    assert np.linalg.norm(plus @ pt.conj()) < 1e-14
    assert np.linalg.norm(minus @ pt.conj()) > 0.1


def test_M_is_parametrization_invariant():
    pt = np.array([0.6, 0.8j])
    Z = np.array([[0.3 + 0.1j]])
    m1 = IsotropicManifold.circle(pt, 32)
    m2 = IsotropicManifold.circle(pt, 16, speed=2.0)
    M1 = build_M_grid(harmonic_frame(m1, Z), m1)
    M2 = build_M_grid(harmonic_frame(m2, Z), m2)
    # grid point j of m2 sits at phase 2 * (pi j / 16) = phase of point 2 j of m1
    np.testing.assert_allclose(M2, M1[::2], atol=1e-12)


def test_flowed_frame_still_valid():
    from germfock.dynamics import evolve, evolved_manifold, transport_frame
    from germfock.hamiltonian import random_polynomial

    rng = np.random.default_rng(5)
    m = IsotropicManifold.circle(0.5 * _unit(rng, 2), 32)
    g = harmonic_frame(m, np.array([[0.2]]))
    H = random_polynomial(2, 4, scale=0.1)
    tr = evolve(H, m.phi, 0.3, 300, frame0=(g.F, g.G), store_every=300)
    gt = transport_frame(tr.Pi[-1], tr.Om[-1], g)
    dphi = np.swapaxes(gt.F[..., :, :1], -1, -2)
    mt = IsotropicManifold.from_phi(m.axes, tr.phi[-1], dphi, periodic=[True], periods=m.periods)
    rep = validate_germ(gt, mt)
    assert all(rep.defects[k] <= 1e-8 for k in ("r2", "r3", "r4"))
    # the spectral derivative of the evolved grid agrees with the transported tangent column
    ms = evolved_manifold(m, tr.phi[-1])
    np.testing.assert_allclose(ms.dphi, mt.dphi, atol=1e-8)


# ---------------------------------------------------------- quantization


def test_circle_loop_action_and_orientation():
    pt = np.array([0.6, 0.8j])
    m = IsotropicManifold.circle(pt, 64)
    assert loop_action(m) == pytest.approx(-1.0, abs=1e-13)
    assert loop_action(m, Loop(reverse=True)) == pytest.approx(1.0, abs=1e-13)
    assert loop_action(m, Loop(windings=2)) == pytest.approx(2 * loop_action(m), abs=1e-13)


@pytest.mark.parametrize("N,shift,expected", [(4, 0.0, 0.0), (7, 0.0, 0.0), (4, 0.5, 0.5), (3, 0.25, 0.25)])
def test_quantization_defect_circle(N, shift, expected):
    pt = np.array([0.6, 0.8j])
    eps = 1.0 / (N + shift)
    m = IsotropicManifold.circle(pt, 64)
    assert quantization_defect(m, eps) == pytest.approx(expected, abs=1e-12)


def test_quantization_with_monodromy_phase():
    # |phi|^2 = eps N + eps beta nu / Omega is admissible with the phase of the rotating frame
    beta, Omega, N, nu = 1.3, 0.9, 5, 2
    eps = 0.1
    r2 = eps * N + eps * beta * nu / Omega
    m = IsotropicManifold.circle(np.array([np.sqrt(r2), 0.0]), 64)
    gamma = -2 * np.pi * beta / Omega
    assert quantization_defect(m, eps, nu=[nu], gamma=[gamma]) == pytest.approx(0.0, abs=1e-10)
    # phases are given for the forward loop; reversing the loop flips both sides
    assert quantization_defect(m, eps, Loop(reverse=True), nu=[nu], gamma=[gamma]) == pytest.approx(0.0, abs=1e-10)
    assert quantization_defect(m, eps) > 0.1


def test_loop_must_be_periodic():
    with pytest.raises(ValueError):
        loop_action(IsotropicManifold.point([1.0]))


# ---------------------------------------------------------------- measure


def test_measure_density_circle_and_reparametrization():
    r = 0.75
    pt = np.array([r, 0.0])
    m1 = IsotropicManifold.circle(pt, 32)
    m2 = IsotropicManifold.circle(pt, 32, speed=2.0)
    np.testing.assert_allclose(measure_density(m1), r)
    total1 = np.sum(measure_density(m1) * m1.quadrature_weights())
    total2 = np.sum(measure_density(m2) * m2.quadrature_weights())
    assert total1 == pytest.approx(total2, rel=1e-13)
    assert measure_density(IsotropicManifold.point([1.0])) == 1.0


# ----------------------------------------------------------------- lemmas


def test_rank_update_trivial_cases():
    e1, e2 = np.eye(3)[0], np.eye(3)[1]
    assert abs(rank_update_det([e1], [e1])) < 1e-15
    assert rank_update_det([e1], [e2]) == pytest.approx(1.0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), k=st.integers(1, 3), D=st.integers(3, 8), bilinear=st.booleans())
def test_rank_update_matches_dense(seed, k, D, bilinear):
    rng = np.random.default_rng(seed)
    y = rng.standard_normal((k, D)) + 1j * rng.standard_normal((k, D))
    z = rng.standard_normal((k, D)) + 1j * rng.standard_normal((k, D))
    small = rank_update_det(y, z, bilinear=bilinear, check=False)
    R = np.eye(D) - (y.T @ z if bilinear else y.T @ z.conj())
    dense = np.linalg.det(R)
    assert abs(small - dense) <= 1e-12 * max(1.0, abs(dense))


def test_rank_update_pairing_order_for_hermitian_product():
    # with <z, x> = sum conj(z) x the reduced matrix is delta - <z^a, y^b>;
    # the transposed order gives the complex conjugate determinant instead
    rng = np.random.default_rng(0)
    y = rng.standard_normal((2, 5)) + 1j * rng.standard_normal((2, 5))
    z = rng.standard_normal((2, 5)) + 1j * rng.standard_normal((2, 5))
    dense = np.linalg.det(np.eye(5) - y.T @ z.conj())
    swapped = np.linalg.det(np.eye(2) - y.conj() @ z.T)
    assert abs(rank_update_det(y, z) - dense) < 1e-12
    assert abs(swapped - np.conj(dense)) < 1e-12


def test_rank_update_mismatch():
    with pytest.raises(ValueError):
        rank_update_det(np.ones((2, 3)), np.ones((1, 3)))


@pytest.mark.parametrize("L,Y,kappa", [
    (np.diag([0.0, 1.0]), np.diag([1.0, 0.0]), 1.0),
    (np.zeros((2, 2)), np.eye(2), 1.0),
])
def test_gap_bound_examples(L, Y, kappa):
    assert gap_bound(L, Y) == pytest.approx(kappa)


def test_gap_bound_hypothesis_failures():
    with pytest.raises(GapHypothesisError):
        gap_bound(np.diag([0.0, 1.0]), np.diag([-0.5, 0.0]))
    with pytest.raises(GapHypothesisError):
        gap_bound(np.diag([0.0, 1.0]), np.diag([0.0, 1.0]))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_gap_positive_for_germ_M(seed):
    rng = np.random.default_rng(seed)
    m, g = _random_germ(rng, "circle")
    M = build_M(g, m, (0,))
    assert gap_bound(g.L, np.eye(m.D) - M.conj().T @ M) > 0


# ---------------------------------------------------------- line integral


def test_spatial_action_on_circle():
    pt = np.array([0.6, 0.8j])
    m = IsotropicManifold.circle(pt, 32)
    vals, closure = spatial_action(m)
    taus = m.axes[0]
    g0 = np.vdot(pt, pt) / 2 + (np.sum(pt.conj() ** 2) - np.sum(pt ** 2)) / 4
    np.testing.assert_allclose(vals, g0 - 1j * np.vdot(pt, pt).real * taus, atol=1e-13)
    assert closure == 0.0


def test_spatial_action_torus_is_path_independent():
    rng = np.random.default_rng(1)
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
    m = IsotropicManifold.torus2(0.7 * Q[:, 0], 0.4 * Q[:, 1], (16, 16))
    _, closure = spatial_action(m)
    assert closure < 1e-12


def test_base_point_shift_changes_only_a_constant_phase():
    pt = np.array([0.6, 0.8j])
    m = IsotropicManifold.circle(pt, 32)
    a0, _ = spatial_action(m, (0,))
    a5, _ = spatial_action(m, (5,))
    diff = a5 - a0
    np.testing.assert_allclose(diff, diff[0], atol=1e-12)
    assert abs(diff[0].real) < 1e-12
