from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aqedlab.fit import FitError
from aqedlab.linalg import PAULI_Z, apply_local, embed_operator
from aqedlab.magnon import (
    S3,
    SIGMA_MINUS,
    SIGMA_PLUS,
    compressed_mpo,
    cyclic_shift,
    ladder,
    lowering_mpo,
    magnon_matrix_element,
    magnon_mps,
    magnon_norm2,
    magnon_scaling_experiment,
    magnon_state,
    magnon_state_naive,
    magnon_transfer,
    omega,
    phase_conjugated_prefix,
    reduced_overlap_check,
    total_apply,
    transpose_sites,
    transposition_phase,
    xxx_apply,
    xxx_hamiltonian,
)
from aqedlab.mps import dense_state, mpo_dense


def _all_ones(n: int) -> np.ndarray:
    v = np.zeros(2**n, dtype=complex)
    v[-1] = 1
    return v


def _pauli_hamiltonian(n: int) -> np.ndarray:
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    y = np.array([[0, -1j], [1j, 0]])
    h = np.zeros((2**n, 2**n), dtype=complex)
    for m in range(n):
        for p in (x, y, PAULI_Z):
            h -= 0.25 * embed_operator(np.kron(p, p), [m, (m + 1) % n], n)
    return h


@pytest.mark.parametrize("n", [3, 4, 6])
def test_hamiltonian_matches_pauli_form(n):
    np.testing.assert_allclose(xxx_hamiltonian(n), _pauli_hamiltonian(n), atol=1e-12)


def test_hamiltonian_cap():
    with pytest.raises(ValueError):
        xxx_hamiltonian(15)


def test_ground_state_energy():
    n = 6
    np.testing.assert_allclose(xxx_apply(_all_ones(n), n), -(n / 4) * _all_ones(n), atol=1e-12)


def test_hamiltonian_commutes_with_lowering():
    n = 6
    h = xxx_hamiltonian(n)
    sm = sum(embed_operator(SIGMA_MINUS, [k], n) for k in range(n))
    assert np.abs(h @ sm - sm @ h).max() < 1e-12


def test_magnon_mps_dense_form():
    n = 4
    a, x = magnon_mps(n)
    w = omega(n)
    want = sum(w**q * apply_local(_all_ones(n), SIGMA_MINUS, [q], n) for q in range(n))
    np.testing.assert_allclose(dense_state(a, x, n), want, atol=1e-12)
    assert np.vdot(want, want).real == pytest.approx(n)


def test_shift_eigenvalue_and_commutation():
    n = 7
    a, x = magnon_mps(n)
    psi = dense_state(a, x, n)
    np.testing.assert_allclose(cyclic_shift(psi, n), omega(n) * psi, atol=1e-12)
    np.testing.assert_allclose(a[1] @ a[0], omega(n) * a[0] @ a[1], atol=0)


def test_ladder_entries():
    np.testing.assert_allclose(np.diag(ladder(3), -1), [np.sqrt(3), 2, np.sqrt(3)], atol=1e-14)


def test_compressed_mpo_s1_matches_lowering():
    n = 5
    o1, x1 = compressed_mpo(1)
    o, x = lowering_mpo()
    np.testing.assert_allclose(mpo_dense(o1, x1, n), mpo_dense(o, x, n), atol=1e-12)


def test_compressed_mpo_s2_matches_power():
    n = 6
    o, x = lowering_mpo()
    sm = mpo_dense(o, x, n)
    o2, x2 = compressed_mpo(2)
    np.testing.assert_allclose(mpo_dense(o2, x2, n), sm @ sm, atol=1e-11)


@pytest.mark.parametrize("n,s", [(4, 1), (6, 2), (8, 3), (7, 5)])
def test_state_matches_naive_lowering(n, s):
    st_ = magnon_state(n, s)
    naive = magnon_state_naive(n, s)
    assert np.vdot(naive, naive).real == pytest.approx(magnon_norm2(n, s), rel=1e-12)
    np.testing.assert_allclose(st_.vector * np.sqrt(st_.norm2), naive, atol=1e-10)


def test_norm_examples():
    assert magnon_norm2(4, 1) == 8
    assert magnon_norm2(9, 0) == 9
    with pytest.raises(ValueError):
        magnon_state(5, 4)


@pytest.mark.parametrize("s", [0, 1, 2])
def test_energy(s):
    n = 6
    v = magnon_state(n, s).vector
    e = np.vdot(v, xxx_apply(v, n)).real
    assert e == pytest.approx(-n / 4 + 1 - np.cos(2 * np.pi / n), abs=1e-11)


@pytest.mark.parametrize("s", [0, 1, 3])
def test_highest_weight_and_magnetization(s):
    n = 8
    v = magnon_state(n, s).vector
    # Psi is a highest-weight vector of spin n/2 - 1, so S_+^{s+1} Psi_s = 0 and S3 = n/2 - 1 - s
    w = v
    for _ in range(s + 1):
        w = total_apply(w, SIGMA_PLUS, n)
    assert np.linalg.norm(w) < 1e-10
    assert np.vdot(v, total_apply(v, S3, n)).real == pytest.approx(n / 2 - 1 - s, abs=1e-11)


def test_basis_orthonormal():
    vs = [magnon_state(8, s).vector for s in range(4)]
    g = np.array([[np.vdot(a, b) for b in vs] for a in vs])
    np.testing.assert_allclose(g, np.eye(4), atol=1e-10)


def test_transfer_example_r0_s0():
    t = magnon_transfer(0, 0, 4)
    assert t.matrix.shape == (4, 4)
    prof = t.jordan
    assert prof.largest_block(1.0) == 2 and prof.multiplicity(1.0) == 2
    assert prof.multiplicity(1j) == 1 and prof.multiplicity(-1j) == 1


def test_transfer_example_r0_s2():
    w = omega(8)
    prof = magnon_transfer(0, 2, 8).jordan
    assert (prof.multiplicity(1), prof.multiplicity(w), prof.multiplicity(np.conj(w))) == (6, 3, 3)
    assert magnon_transfer(2, 2, 8).jordan.h_star <= 4


def test_transfer_is_triangular():
    m = magnon_transfer(2, 1, 6).matrix
    assert np.allclose(np.triu(m, 1), 0) or np.allclose(np.tril(m, -1), 0)


def test_matrix_element_example():
    n = 10
    v0, v2 = magnon_state(n, 0).vector, magnon_state(n, 2).vector
    # sigma_minus (x) sigma_minus lowers S3 further, so this element vanishes in both paths
    f = np.kron(SIGMA_MINUS, SIGMA_MINUS)
    want = np.vdot(v0, apply_local(v2, f, [3, 7], n))
    assert magnon_matrix_element(n, 0, 2, f, [3, 7]) == pytest.approx(want, abs=1e-10)
    f = np.kron(SIGMA_PLUS, SIGMA_PLUS)
    want = np.vdot(v0, apply_local(v2, f, [3, 7], n))
    assert abs(want) > 1e-3
    assert magnon_matrix_element(n, 0, 2, f, [3, 7]) == pytest.approx(want, abs=1e-10)
    assert abs(magnon_matrix_element(n, 1, 3, None, [])) < 1e-11


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(4, 9), d=st.integers(1, 3), data=st.data())
def test_matrix_element_matches_dense(seed, n, d, data):
    rng = np.random.default_rng(seed)
    r = data.draw(st.integers(0, n - 2))
    s = data.draw(st.integers(0, n - 2))
    sup = [int(k) for k in rng.choice(n, size=d, replace=False)]
    f = rng.normal(size=(2**d, 2**d)) + 1j * rng.normal(size=(2**d, 2**d))
    want = np.vdot(magnon_state(n, r).vector, apply_local(magnon_state(n, s).vector, f, sup, n))
    assert magnon_matrix_element(n, r, s, f, sup) == pytest.approx(want, abs=1e-10)


def test_diagonal_operator_translation_invariance():
    n = 9
    rng = np.random.default_rng(4)
    f = np.diag(rng.normal(size=4) + 1j * rng.normal(size=4))
    base = abs(magnon_matrix_element(n, 1, 2, f, [2, 5]))
    for shift in range(1, n):
        assert abs(magnon_matrix_element(n, 1, 2, f, [(2 + shift) % n, (5 + shift) % n])) == pytest.approx(base, abs=1e-12)


def test_prefix_reduction_one_magnon():
    n = 8
    rng = np.random.default_rng(6)
    f = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    support = [2, 6]
    fp = phase_conjugated_prefix(f, support, n)
    assert magnon_matrix_element(n, 0, 0, fp, [0, 1]) == pytest.approx(
        magnon_matrix_element(n, 0, 0, f, support), abs=1e-12)


@pytest.mark.parametrize("k", [0, 3, 6])
def test_transposition_identity_one_magnon(k):
    n = 7
    v = magnon_state(n, 0).vector
    np.testing.assert_allclose(transpose_sites(v, n, k, (k + 1) % n), transposition_phase(n, k) * v, atol=1e-11)


def test_reduced_overlap_examples():
    for d in (1, 3, 5):
        assert reduced_overlap_check(12, 0, d) == pytest.approx((12 - d) / 12, abs=1e-12)
    assert reduced_overlap_check(12, 2, 0) == 1.0
    assert reduced_overlap_check(12, 2, 2, "dense") == pytest.approx(reduced_overlap_check(12, 2, 2), abs=1e-10)


def test_reduced_overlap_lower_bound():
    # 1 - value stays below C d s / n with a modest constant
    for n in (16, 32, 64):
        v = reduced_overlap_check(n, 2, 2)
        assert 1 - v <= 3 * 2 * 3 / n


def test_scaling_rejects_short_grid():
    with pytest.raises(FitError):
        magnon_scaling_experiment(0, 2, 2, [32, 64, 128])


def test_scaling_d1_offdiagonal_vanishes():
    # a 1-local operator changes S3 by at most one unit, so |r - s| = 2 elements vanish exactly
    res = magnon_scaling_experiment(0, 2, 1, [16, 24, 32, 48], samples=8)
    assert max(res.offdiag) < 1e-12
    assert res.offdiag_fit is None and res.notes


def test_scaling_d2_slope():
    res = magnon_scaling_experiment(0, 2, 2, [32, 64, 128, 256], samples=16)
    assert res.offdiag_fit.slope == pytest.approx(-1.0, abs=0.15)
    assert res.diag_fit.slope <= -0.35
