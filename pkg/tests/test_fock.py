import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from germfock.fock import (FockBasis, FockState, TruncationSpec, apply_hamiltonian, apply_ladder,
                           apply_linear, inner_product, ladder_matrix, restrict, sector_to_state,
                           state_to_sector)
from germfock.hamiltonian import harmonic


def test_basis_dimension_and_grading():
    b = FockBasis.get(TruncationSpec(3, 4))
    assert b.dim == 35
    assert np.all(np.diff(b.totals) >= 0)
    assert b.index((0, 0, 0)) == 0
    # within a sector the first occupation number increases
    assert b.index((0, 1, 0)) < b.index((1, 0, 0))


def test_smaller_truncation_is_prefix():
    small = FockBasis.get(TruncationSpec(2, 5))
    big = FockBasis.get(TruncationSpec(2, 9))
    np.testing.assert_array_equal(big.occ[: small.dim], small.occ)


def test_creation_on_vacuum():
    tr = TruncationSpec(3, 3)
    out = apply_ladder("create", 0, FockState.vacuum(tr))
    assert out.amplitudes == {(1, 0, 0): 1.0}


def test_annihilation_of_vacuum_is_zero():
    tr = TruncationSpec(2, 3)
    assert apply_ladder("annihilate", 1, FockState.vacuum(tr)).norm() == 0.0


def test_number_operator_eigenvalue():
    tr = TruncationSpec(1, 5)
    s = FockState.from_amplitudes(tr, {(3,): 1.0})
    out = apply_ladder("create", 0, apply_ladder("annihilate", 0, s))
    assert out.amplitude((3,)) == pytest.approx(3.0, rel=1e-14)


def test_creation_overshoot_is_tracked():
    tr = TruncationSpec(2, 2)
    s = FockState.from_amplitudes(tr, {(2, 0): 1.0})
    out = apply_ladder("create", 0, s)
    assert out.norm() == 0.0
    assert out.lost_norm2 == pytest.approx(3.0)


def test_unknown_mode_rejected():
    with pytest.raises(IndexError):
        apply_ladder("create", 5, FockState.vacuum(TruncationSpec(2, 2)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), j=st.integers(0, 2), l=st.integers(0, 2))
def test_canonical_commutator_below_cutoff(seed, j, l):
    tr = TruncationSpec(3, 6)
    s = FockState.random(tr, np.random.default_rng(seed), max_total=4)
    ab = apply_ladder("annihilate", j, apply_ladder("create", l, s))
    ba = apply_ladder("create", l, apply_ladder("annihilate", j, s))
    comm = (ab - ba).vector
    np.testing.assert_allclose(comm, (j == l) * s.vector, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), j=st.integers(0, 1))
def test_ladder_adjointness(seed, j):
    tr = TruncationSpec(2, 5)
    rng = np.random.default_rng(seed)
    a, b = FockState.random(tr, rng), FockState.random(tr, rng)
    lhs = inner_product(a, apply_ladder("create", j, b))
    rhs = inner_product(apply_ladder("annihilate", j, a), b)
    assert abs(lhs - rhs) <= 1e-12 * (1 + abs(lhs))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_inner_product_hermitian(seed):
    rng = np.random.default_rng(seed)
    tr = TruncationSpec(2, 4)
    a, b = FockState.random(tr, rng), FockState.random(tr, rng)
    assert abs(inner_product(a, b) - np.conj(inner_product(b, a))) < 1e-13
    assert inner_product(a, a).real == pytest.approx(a.norm() ** 2)


def test_text_round_trip(rng):
    tr = TruncationSpec(2, 4)
    s = FockState.random(tr, rng)
    back = FockState.from_text(s.to_text())
    np.testing.assert_array_equal(back.vector, s.vector)
    assert back.trunc == tr


def test_state_is_immutable(rng):
    s = FockState.random(TruncationSpec(1, 3), rng)
    with pytest.raises((AttributeError, ValueError)):
        s.vector[0] = 1.0
    with pytest.raises(AttributeError):
        s.lost_norm2 = 1.0


@pytest.mark.parametrize("N", [0, 1, 2, 3])
def test_sector_round_trip(N, rng):
    tr = TruncationSpec(3, 4)
    s = FockState.random(tr, rng)
    T = state_to_sector(s, N)
    back = sector_to_state(T, tr)
    sl = s.basis.sector_slice(N)
    np.testing.assert_allclose(back.vector[sl], s.vector[sl], atol=1e-14)


def test_sector_rejects_asymmetric_tensor():
    T = np.zeros((2, 2))
    T[0, 1] = 1.0
    with pytest.raises(ValueError):
        sector_to_state(T, TruncationSpec(2, 3))


def test_sector_norm_matches_tensor_norm(rng):
    # ||T||^2 over all words equals the sector norm squared (with the 1/sqrt(N!) normalization)
    tr = TruncationSpec(2, 3)
    s = FockState.random(tr, rng)
    T = state_to_sector(s, 3)
    assert np.sum(np.abs(T) ** 2) == pytest.approx(s.sector_norms()[3] ** 2)


def test_restrict_counts_dropped_sectors(rng):
    s = FockState.random(TruncationSpec(2, 6), rng)
    r = restrict(s, TruncationSpec(2, 3))
    assert r.norm() ** 2 + r.lost_norm2 == pytest.approx(s.norm() ** 2)


def test_harmonic_hamiltonian_is_diagonal():
    tr = TruncationSpec(2, 3)
    H = harmonic([1.0, 2.0])
    s = FockState.from_amplitudes(tr, {(1, 2): 1.0})
    out = apply_hamiltonian(H, 0.5, s)
    # eps * (1*1 + 2*2)
    assert out.amplitude((1, 2)) == pytest.approx(2.5)


def test_linear_combination_matches_ladders(rng):
    tr = TruncationSpec(2, 4)
    s = FockState.random(tr, rng, max_total=3)
    c = np.array([0.3 + 0.1j, -0.2j])
    d = np.array([0.5, 0.1 + 0.4j])
    out = apply_linear(s, create=c, annihilate=d, const=0.7)
    ref = 0.7 * s
    for j in range(2):
        ref = ref + c[j] * apply_ladder("create", j, s) + d[j] * apply_ladder("annihilate", j, s)
    np.testing.assert_allclose(out.vector, ref.vector, atol=1e-14)


def test_ladder_matrix_shape():
    tr = TruncationSpec(2, 3)
    A = ladder_matrix(tr, "create", 0)
    assert A.shape == (tr.dim, tr.dim)
