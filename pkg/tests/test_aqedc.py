from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aqedlab.aqedc import (
    CodeCertificate,
    Rejection,
    boundary_region_factors,
    certify,
    consistent,
    dense_basis,
    eps_approx,
    kl_gamma,
    magnon_basis,
    necessary_check,
    nogo_experiment,
    orthonormal_boundary_pair,
    region_quantities,
)
from aqedlab.linalg import PAULIS, apply_local, partial_trace
from aqedlab.magnon import pauli_strings
from aqedlab.mps import dense_state, normalize_spectral_radius, random_injective_mps
from aqedlab.noise import exhaustive_pauli_channel


def _boundary_instance(seed: int, dim: int = 2):
    rng = np.random.default_rng(seed)
    a = normalize_spectral_radius(random_injective_mps(2, dim, rng))
    x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    y = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return a, x, y


def _basis_state(bits: str) -> np.ndarray:
    v = np.zeros(2 ** len(bits), dtype=complex)
    v[int(bits, 2)] = 1
    return v


def test_dense_basis_rejects_nonorthonormal():
    with pytest.raises(ValueError):
        dense_basis([_basis_state("00"), _basis_state("00")], 2)


def test_eps_approx_trivial_cases():
    basis = magnon_basis(8, [0, 2])
    assert eps_approx(basis, [(1.0, np.eye(2), (0,))]) == pytest.approx(0.0, abs=1e-14)
    single = magnon_basis(8, [1])
    ch = exhaustive_pauli_channel(8, 1)
    assert eps_approx(single, ch.kraus()) == pytest.approx(0.0, abs=1e-14)


def test_eps_approx_matches_dense_enumeration():
    n = 10
    basis = magnon_basis(n, [0, 2])
    ch = exhaustive_pauli_channel(n, 1)
    vs = basis.states
    acc = np.zeros((2, 2))
    for w, op, sup in ch.kraus():
        m = np.array([[np.vdot(u, apply_local(v, np.sqrt(w) * op, sup, n)) for v in vs] for u in vs])
        acc += np.abs(m - np.eye(2) * m[0, 0]) ** 2
    assert eps_approx(basis, ch.kraus()) == pytest.approx(acc.max(), abs=1e-12)
    assert eps_approx(magnon_basis(n, [0, 2], "transfer"), ch.kraus()) == pytest.approx(acc.max(), abs=1e-12)


def test_eps_approx_bound():
    basis = magnon_basis(8, [0, 1, 3])
    ch = exhaustive_pauli_channel(8, 1)
    val = eps_approx(basis, ch.kraus())
    rmax = max(np.sqrt(w) for w, _, _ in ch.kraus())
    assert 0 <= val <= len(ch.terms) * (2 * rmax) ** 2


def test_eps_approx_rejects_overcomplete_channel():
    basis = magnon_basis(6, [0, 2])
    with pytest.raises(ValueError):
        eps_approx(basis, [(1.0, 2 * np.eye(2), (0,)), (1.0, np.eye(2), (1,))])


def test_gamma_classical_code():
    basis = dense_basis([_basis_state("0000"), _basis_state("1111")], 4)
    g = kl_gamma(basis, 1)
    assert g.gamma == pytest.approx(2.0)  # Z gives +1 and -1, deviation |(-1) - 1|
    assert g.method == "enumerated-paulis"


def test_gamma_matches_dense_enumeration_and_is_monotone():
    n = 10
    basis = magnon_basis(n, [0, 2])
    best = 0.0
    for site in range(n):
        for op in PAULIS:
            m = basis.elements(op, [site])
            best = max(best, float(np.abs(m - np.eye(2) * m[0, 0]).max()))
    g1 = kl_gamma(basis, 1)
    assert g1.gamma == pytest.approx(best, abs=1e-12)
    assert kl_gamma(basis, 2).gamma >= g1.gamma - 1e-12


def test_gamma_sampled_is_seeded():
    basis = magnon_basis(8, [0, 1])
    a = kl_gamma(basis, 2, "sampled", seed=3, samples=16)
    b = kl_gamma(basis, 2, "sampled", seed=3, samples=16)
    assert a == b and a.method == "sampled"


def test_gamma_bad_source():
    with pytest.raises(ValueError):
        kl_gamma(magnon_basis(6, [0, 1]), 1, source="nope")


def test_certify_arithmetic():
    cert = certify(2, 0.01, 0.1, 2, 10, 1)
    assert isinstance(cert, CodeCertificate)
    assert cert.epsilon == pytest.approx(0.032)
    assert json.loads(cert.to_json())["status"] == "certified"
    rej = certify(2, 0.1, 0.32, 2, 10, 1)
    assert isinstance(rej, Rejection)
    with pytest.raises(ValueError):
        certify(2, 0.01, 0.0, 2, 10, 1)


def test_certify_magnon_n128_sampled():
    basis = magnon_basis(128, [0, 1], "transfer")
    g = kl_gamma(basis, 1, "sampled", seed=0, samples=32, support_mode="connected")
    cert = certify(2, g.gamma, 0.9, 2, 128, 1, g.method)
    assert isinstance(cert, CodeCertificate) and cert.epsilon < 1


def test_necessary_check_distinguishable():
    rec = necessary_check(_basis_state("000"), _basis_state("111"), [0], 3)
    assert rec.zeta == 0 and rec.excluded_epsilon_bound == 1 and rec.excluded_delta_bound == 1
    assert rec.fires


def test_necessary_check_indistinguishable():
    psi1 = (_basis_state("00") + _basis_state("11")) / np.sqrt(2)
    psi2 = (_basis_state("00") - _basis_state("11")) / np.sqrt(2)
    rec = necessary_check(psi1, psi2, [0], 2)
    assert rec.zeta >= 1 and not rec.fires


def test_necessary_check_rejects_overlap():
    with pytest.raises(ValueError):
        necessary_check(_basis_state("00"), _basis_state("00"), [0], 2)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_zeta_symmetric_and_local_unitary_invariant(seed):
    rng = np.random.default_rng(seed)
    n = 5
    g = rng.normal(size=(2, 2**n)) + 1j * rng.normal(size=(2, 2**n))
    q, _ = np.linalg.qr(g.T)
    psi1, psi2 = q[:, 0], q[:, 1]
    region = [0, 3]
    u, _ = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
    r12 = necessary_check(psi1, psi2, region, n)
    r21 = necessary_check(psi2, psi1, region, n)
    moved = necessary_check(apply_local(psi1, u, [1, 4], n), apply_local(psi2, u, [1, 4], n), region, n)
    assert r12.zeta == pytest.approx(r21.zeta, abs=1e-10)
    assert r12.zeta == pytest.approx(moved.zeta, abs=1e-10)


def test_certify_refute_consistency_grid():
    for n in (8, 10):
        basis = magnon_basis(n, [0, 2])
        g = kl_gamma(basis, 1)
        v0, v2 = basis.states
        for delta in (0.2, 0.6, 1.0):
            rec = certify(2, g.gamma, delta, 2, n, 1)
            for region in ([0], [3], [0, 4]):
                ref = necessary_check(v0, v2, region, n)
                if isinstance(rec, CodeCertificate):
                    assert consistent(rec, ref)


def test_boundary_factors_match_dense_partial_trace():
    a, x, _ = _boundary_instance(1)
    n, delta = 8, 2
    q, g = boundary_region_factors(a, x, n, delta)
    rho = q @ g @ q.conj().T
    psi = dense_state(a, x, n)
    region = [0, 1, n - 2, n - 1]
    dense = partial_trace(np.outer(psi, psi.conj()), [2] * n, region)
    # factor basis orders (left block, right block); region order is the same
    np.testing.assert_allclose(rho, dense, atol=1e-12)


def test_orthonormal_pair():
    a, x, y = _boundary_instance(2)
    n = 10
    xn, yn = orthonormal_boundary_pair(a, x, y, n)
    v1, v2 = dense_state(a, xn, n), dense_state(a, yn, n)
    assert np.linalg.norm(v1) == pytest.approx(1) and np.linalg.norm(v2) == pytest.approx(1)
    assert abs(np.vdot(v1, v2)) < 1e-12
    with pytest.raises(ValueError):
        orthonormal_boundary_pair(a, x, 2 * x, n)


def test_region_quantities_match_dense():
    a, x, y = _boundary_instance(3, 3)
    n = 10
    xn, yn = orthonormal_boundary_pair(a, x, y, n)
    v1, v2 = dense_state(a, xn, n), dense_state(a, yn, n)
    for delta in (1, 2, 3):
        tr, purity, rx, ry = region_quantities(a, xn, yn, n, delta)
        region = list(range(delta)) + list(range(n - delta, n))
        rec = necessary_check(v1, v2, region, n)
        assert tr == pytest.approx(rec.trace_overlap, abs=1e-12)
        assert (rx, ry) == (rec.rank1, rec.rank2)
        assert purity <= 1 + 1e-12


def test_nogo_dense_example_decreasing():
    a, x, y = _boundary_instance(0)
    n = 12
    xn, yn = orthonormal_boundary_pair(a, x, y, n)
    trs = [region_quantities(a, xn, yn, n, dl)[0] for dl in (1, 2, 3, 4)]
    assert all(t2 < t1 for t1, t2 in zip(trs, trs[1:]))
    rec = necessary_check(dense_state(a, xn, n), dense_state(a, yn, n), [0, 1, 10, 11], n)
    assert rec.zeta < 0.1 and rec.fires


def test_nogo_control_arm():
    a, x, _ = _boundary_instance(4)
    xn = orthonormal_boundary_pair(a, x, np.eye(2), 12)[0]
    tr, purity, _, _ = region_quantities(a, xn, xn, 12, 3)
    assert tr == pytest.approx(purity) and purity <= 1 + 1e-12


def test_nogo_experiment_rates_and_norms():
    a, x, y = _boundary_instance(5, 3)
    res = nogo_experiment(a, x, y, [32, 64, 128], list(range(1, 20)))
    assert res.passes and res.constant_region is not None
    norms = [r.x_norm for r in res.rows]
    assert max(norms) / min(norms) < 10


def test_nogo_rejects_non_injective():
    from aqedlab.mps import MpsTensor

    a = MpsTensor(np.stack([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]))
    with pytest.raises(ValueError):
        nogo_experiment(a, np.eye(2), np.diag([1.0, -1.0]), [16], [1, 2, 3])


def test_pauli_strings_count():
    assert len(pauli_strings(2)) == 16
