import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from germfock.fock import TruncationSpec, hamiltonian_matrix
from germfock.hamiltonian import (HamiltonianCoeffs, harmonic, number_conserving, quartic_pair,
                                  random_polynomial)


def test_non_selfadjoint_rejected():
    with pytest.raises(ValueError):
        HamiltonianCoeffs(1, {(2, 0): np.ones((1, 1))})


def test_from_hermitian_part_completes_adjoint():
    H = HamiltonianCoeffs.from_hermitian_part(1, {(2, 0): np.array([[0.3j]])})
    assert set(H.terms) == {(2, 0), (0, 2)}


@pytest.mark.parametrize("H", [harmonic([1.0, 0.5]), quartic_pair(2, 1.0, 0.7, 0.3),
                               number_conserving(2, 3), random_polynomial(2, 4)])
def test_quantized_matrix_is_hermitian(H):
    A = hamiltonian_matrix(H, 0.3, TruncationSpec(2, 6)).toarray()
    if H.is_number_conserving():
        np.testing.assert_allclose(A, A.conj().T, atol=1e-12)
    else:
        # truncation breaks hermiticity only at the top sectors
        from germfock.fock import FockBasis

        inner = FockBasis.get(TruncationSpec(2, 4)).dim
        np.testing.assert_allclose(A[:inner, :inner], A[:inner, :inner].conj().T, atol=1e-12)


def test_classical_value_is_real():
    H = random_polynomial(3, 1)
    phi = np.array([0.3 + 0.2j, -0.1j, 0.4])
    assert np.isrealobj(H.value(phi))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_gradients_match_wirtinger_finite_differences(seed):
    rng = np.random.default_rng(seed)
    H = random_polynomial(2, seed % 50)
    phi = 0.5 * (rng.standard_normal(2) + 1j * rng.standard_normal(2))
    h = 1e-6
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        dx = (H.value(phi + e) - H.value(phi - e)) / (2 * h)
        dy = (H.value(phi + 1j * e) - H.value(phi - 1j * e)) / (2 * h)
        assert abs(H.grad_conj(phi)[k] - 0.5 * (dx + 1j * dy)) < 1e-7
        assert abs(H.grad(phi)[k] - 0.5 * (dx - 1j * dy)) < 1e-7


def test_hessians_match_finite_differences(rng):
    H = random_polynomial(2, 7)
    phi = np.array([0.3 + 0.1j, -0.2 + 0.4j])
    hcc, hcn, hnn = H.hessians(phi)
    h = 1e-6
    for l in range(2):
        e = np.zeros(2)
        e[l] = h
        d_dx = (H.grad_conj(phi + e) - H.grad_conj(phi - e)) / (2 * h)
        d_dy = (H.grad_conj(phi + 1j * e) - H.grad_conj(phi - 1j * e)) / (2 * h)
        np.testing.assert_allclose(hcn[:, l], 0.5 * (d_dx - 1j * d_dy), atol=1e-7)
        np.testing.assert_allclose(hcc[:, l], 0.5 * (d_dx + 1j * d_dy), atol=1e-7)
        g_dx = (H.grad(phi + e) - H.grad(phi - e)) / (2 * h)
        g_dy = (H.grad(phi + 1j * e) - H.grad(phi - 1j * e)) / (2 * h)
        np.testing.assert_allclose(hnn[:, l], 0.5 * (g_dx - 1j * g_dy), atol=1e-7)


def test_euler_sum_on_homogeneous_term():
    H = quartic_pair(1, 0.0, 2.0)
    phi = np.array([0.7 + 0.2j])
    # degree (2, 2): sum phi dH/dphi = 2 H
    assert H.euler_sum(phi).real == pytest.approx(2 * H.value(phi))


def test_quadratic_part_reproduces_hessians():
    H = random_polynomial(2, 9)
    phi = np.array([0.2 - 0.1j, 0.3j])
    H2 = H.quadratic_part(phi)
    for a, b in zip(H2.hessians(np.zeros(2)), H.hessians(phi)):
        np.testing.assert_allclose(a, b, atol=1e-13)


def test_dict_round_trip():
    H = random_polynomial(2, 2)
    back = HamiltonianCoeffs.from_dict(H.to_dict())
    for key in H.terms:
        np.testing.assert_array_equal(back.terms[key], H.terms[key])
