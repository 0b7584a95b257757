"""Excitation-ansatz states Phi_p(B; A) = sum_j e^{ipj} Phi_{j,p} (sites 0-indexed).

Phi_{j,p} carries B(p) at site j and A elsewhere with trace closure.  Momenta are
stored by their integer label k, p = 2 pi k / n.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .linalg import CArray, hermitian_sqrt, vectorize
from .mps import (
    MpsTensor,
    canonicalize,
    contract_chain,
    dense_state_sites,
    is_injective,
    transfer_matrix,
    transfer_op,
)

QUANT_TOL = 1e-9
PINV_CUTOFF = 1e-10


def momentum_label(p: float, n: int) -> int:
    k = p * n / (2 * np.pi)
    kr = int(round(k))
    if abs(k - kr) > QUANT_TOL:
        raise ValueError(f"momentum {p} is not quantized for n={n}")
    return kr % n


def momentum(k: int, n: int) -> float:
    return 2 * np.pi * (k % n) / n


def _left_fixed(a: MpsTensor) -> CArray:
    ell = transfer_op(a).left_fixed
    ell = (ell + ell.conj().T) / 2
    return ell / np.trace(ell).real


def gauge_fix(a: MpsTensor, b: MpsTensor, p: float) -> MpsTensor:
    """B~ = B + A X - e^{-ip} X A with <<l|E_{B~} = 0.

    X = -l^{-1} Y where (Y - e^{-ip} sum_j A_j^dagger Y A_j) = sum_j A_j^dagger l B_j.
    The state Phi_p is unchanged for quantized p.
    """
    if abs(np.exp(1j * p) - 1) < 1e-12:
        raise ValueError("gauge fix undefined at zero momentum")
    if a.p != b.p or a.D != b.D:
        raise ValueError("A and B must have equal shapes")
    ell = _left_fixed(a)
    dim = a.D
    y0 = np.einsum("iba,bc,icd->ad", a.matrices.conj(), ell, b.matrices)
    # vec(A^dag Y A) = (A^T (x) A^dag) vec(Y) in column-major vectorization
    adj = sum(np.kron(am.T, am.conj().T) for am in a.matrices)
    lhs = np.eye(dim * dim) - np.exp(-1j * p) * adj
    sv = np.linalg.svd(lhs, compute_uv=False)
    if sv[-1] < PINV_CUTOFF:
        yv = np.linalg.pinv(lhs, rcond=PINV_CUTOFF / sv[0]) @ vectorize(y0)
    else:
        yv = np.linalg.solve(lhs, vectorize(y0))
    y = yv.reshape((dim, dim), order="F")
    x = -np.linalg.solve(ell, y)
    phase = np.exp(-1j * p)
    bt = b.matrices + a.matrices @ x - phase * (x @ a.matrices)
    return MpsTensor(bt)


def gauge_residuals(a: MpsTensor, b: MpsTensor) -> tuple[float, float]:
    """(||<<l|E_B||, ||<<l|E_{conj B}||) with E_B = sum conj(A) (x) B, E_{conj B} = sum conj(B) (x) A."""
    lv = vectorize(_left_fixed(a)).conj()
    r1 = np.linalg.norm(lv @ transfer_matrix(a, b))
    r2 = np.linalg.norm(lv @ transfer_matrix(b, a))
    return float(r1), float(r2)


@dataclass(frozen=True, eq=False)
class ExcitationFamily:
    a: MpsTensor
    b_of_k: Mapping[int, MpsTensor]
    n: int
    ell: CArray = field(repr=False)
    right: CArray = field(repr=False)
    lambda2: float = 0.0

    @property
    def momenta(self) -> list[float]:
        return [momentum(k, self.n) for k in sorted(self.b_of_k)]

    def b(self, p: float) -> MpsTensor:
        k = momentum_label(p, self.n)
        if k not in self.b_of_k:
            raise KeyError(f"momentum {p} not in family")
        return self.b_of_k[k]

    def residuals(self) -> dict[int, tuple[float, float]]:
        return {k: gauge_residuals(self.a, b) for k, b in self.b_of_k.items()}


def make_family(
    a: MpsTensor,
    b: MpsTensor | Mapping[int, MpsTensor],
    n: int,
    ks: Sequence[int],
    fix_gauge: bool = True,
    normalize: bool = True,
) -> ExcitationFamily:
    """Canonicalize A, carry B into the same gauge, gauge fix and rescale to c_p = 1.

    ``b`` is either one momentum-independent tensor or a map k -> tensor.
    """
    if not is_injective(a):
        raise ValueError("A must be injective")
    ac, g, scale = canonicalize(a, return_gauge=True)
    bs: dict[int, MpsTensor] = {}
    for k in ks:
        k = int(k) % n
        braw = b[k] if isinstance(b, Mapping) else b
        bk = braw.scaled(scale).gauge(g)
        if fix_gauge:
            bk = gauge_fix(ac, bk, momentum(k, n))
        bs[k] = bk
    ell = _left_fixed(ac)
    right = np.eye(ac.D, dtype=complex)
    lam2 = transfer_op(ac).lambda2
    fam = ExcitationFamily(ac, bs, n, ell, right, lam2)
    if normalize:
        bs = {k: bk.scaled(1 / np.sqrt(c_constant(fam, momentum(k, n), momentum(k, n)).real))
              for k, bk in bs.items()}
        fam = ExcitationFamily(ac, bs, n, ell, right, lam2)
    return fam


def c_constant(fam: ExcitationFamily, p: float, pp: float) -> complex:
    """c_{pp'} = <<l|E_{conj B(p') B(p)}|r>> = tr(l^dag sum_j B_j(p) r B_j(p')^dag)."""
    b, bp = fam.b(p).matrices, fam.b(pp).matrices
    inner = np.einsum("iab,bc,idc->ad", b, fam.right, bp.conj())
    return complex(np.trace(fam.ell.conj().T @ inner))


# ------------------------------------------------------------------- dense path


def position_state(fam: ExcitationFamily, j: int, p: float) -> CArray:
    n = fam.n
    tensors = [fam.a.matrices] * n
    tensors[j % n] = fam.b(p).matrices
    return dense_state_sites(tensors, np.eye(fam.a.D))


def excitation_state(fam: ExcitationFamily, p: float) -> CArray:
    momentum_label(p, fam.n)
    out = 0
    for j in range(fam.n):
        out = out + np.exp(1j * p * j) * position_state(fam, j, p)
    return out


def open_position_state(fam: ExcitationFamily, j: int, p: float, length: int) -> CArray:
    """Entries of sqrt(l) A..B(p)_j..A sqrt(r) over L sites, virtual legs kept open."""
    sl, sr = hermitian_sqrt(fam.ell), hermitian_sqrt(fam.right)
    mats = [fam.a.matrices] * length
    mats[j] = fam.b(p).matrices
    acc = sl[None, :, :]
    for t in mats:
        acc = np.einsum("cab,ibd->ciad", acc, t).reshape(-1, fam.a.D, fam.a.D)
    return (acc @ sr).reshape(-1)


# ---------------------------------------------------------------- transfer path


def _sector_kernel(fam: ExcitationFamily, p: float, pp: float) -> CArray:
    """Per-site kernel on four sectors (ket inserted?, bra inserted?).

    Sector index 2*ket + bra.  Sites before the ket insertion carry e^{ip}, sites
    before the bra insertion carry e^{-ip'}, so a path inserting B(p) at j and
    conj B(p') at j' collects e^{i(pj - p'j')}.
    """
    a = fam.a.matrices
    b, bp = fam.b(p).matrices, fam.b(pp).matrices
    dim = fam.a.D**2
    pdim = fam.a.p

    def ker(bra, ket):
        return np.einsum("mij,nkl->mnikjl", bra.conj(), ket).reshape(pdim, pdim, dim, dim)

    kaa, kab, kba, kbb = ker(a, a), ker(a, b), ker(bp, a), ker(bp, b)
    ep, epp = np.exp(1j * p), np.exp(-1j * pp)
    out = np.zeros((pdim, pdim, 4, dim, 4, dim), dtype=complex)
    out[:, :, 0, :, 0, :] = ep * epp * kaa
    out[:, :, 0, :, 2, :] = epp * kab
    out[:, :, 0, :, 1, :] = ep * kba
    out[:, :, 0, :, 3, :] = kbb
    out[:, :, 2, :, 2, :] = epp * kaa
    out[:, :, 2, :, 3, :] = kba
    out[:, :, 1, :, 1, :] = ep * kaa
    out[:, :, 1, :, 3, :] = kab
    out[:, :, 3, :, 3, :] = kaa
    return out.reshape(pdim, pdim, 4 * dim, 4 * dim)


def raw_matrix_element(
    fam: ExcitationFamily, p: float, pp: float, f: np.ndarray | None, support: Sequence[int]
) -> complex:
    """<Phi_{p'}|F|Phi_p> (unnormalized), exact double sum by sector transfer."""
    n = fam.n
    momentum_label(p, n)
    momentum_label(pp, n)
    kernel = _sector_kernel(fam, p, pp)
    dim = fam.a.D**2
    closure = np.zeros((4 * dim, 4 * dim), dtype=complex)
    closure[3 * dim:, :dim] = np.eye(dim)
    return contract_chain(kernel, n, f, support, closure)


def excitation_norm2(fam: ExcitationFamily, p: float) -> float:
    return raw_matrix_element(fam, p, p, None, []).real


def excitation_matrix_element(
    fam: ExcitationFamily, p: float, pp: float, f: np.ndarray | None, support: Sequence[int]
) -> complex:
    """Normalized <phi_{p'}|F|phi_p>."""
    val = raw_matrix_element(fam, p, pp, f, support)
    return val / np.sqrt(excitation_norm2(fam, p) * excitation_norm2(fam, pp))


def transfer_position_overlap(fam: ExcitationFamily, j: int, p: float, jj: int, pp: float, length: int) -> complex:
    """<<l| E(j, p, j', p') |r>> over L sites."""
    a = fam.a
    mats_ket = [a] * length
    mats_bra = [a] * length
    mats_ket[j] = fam.b(p)
    mats_bra[jj] = fam.b(pp)
    out = vectorize(fam.right)
    for k in reversed(range(length)):
        out = transfer_matrix(mats_bra[k], mats_ket[k]) @ out
    return complex(np.vdot(vectorize(fam.ell), out))


# ------------------------------------------------------------------ code basis


def excitation_elements(fam: ExcitationFamily, ks: Sequence[int]):
    """Callable (f, support) -> K x K matrix of normalized <phi_{p_a}|F|phi_{p_b}>."""
    ps = [momentum(k, fam.n) for k in ks]
    norms = {k: excitation_norm2(fam, p) for k, p in zip(ks, ps)}

    def elements(f: np.ndarray | None, support: Sequence[int]) -> CArray:
        out = np.empty((len(ps), len(ps)), dtype=complex)
        for i, (ki, pi) in enumerate(zip(ks, ps)):
            for j, (kj, pj) in enumerate(zip(ks, ps)):
                out[i, j] = raw_matrix_element(fam, pj, pi, f, support) / np.sqrt(norms[ki] * norms[kj])
        return out

    return elements


def build_excitation_code(
    fam: ExcitationFamily,
    ks: Sequence[int],
    d: int = 1,
    source: str = "paulis",
    seed: int = 0,
    samples: int = 64,
    support_mode: str = "arbitrary",
    dense: bool | None = None,
):
    """Orthonormal code spanned by phi_p for distinct nonzero momenta, plus its worst-case gamma.

    Returns ``(CodeBasis, GammaResult)``.  Dense vectors are attached when
    ``dense`` is true, or by default when p^n <= 2^12.
    """
    from .aqedc import CodeBasis, kl_gamma

    labels = [int(k) % fam.n for k in ks]
    if len(set(labels)) != len(labels):
        raise ValueError("repeated momenta")
    if 0 in labels:
        raise ValueError("zero momentum is not gauge fixed")
    missing = set(labels) - set(fam.b_of_k)
    if missing:
        raise KeyError(f"momenta {sorted(missing)} not in family")
    if dense is None:
        dense = fam.a.p**fam.n <= 2**12
    states = None
    if dense:
        vs = [excitation_state(fam, momentum(k, fam.n)) for k in labels]
        states = np.stack([v / np.linalg.norm(v) for v in vs])
    basis = CodeBasis(fam.n, len(labels), excitation_elements(fam, labels), "excitation", fam.a.p, states)
    basis.check_orthonormal()
    return basis, kl_gamma(basis, d, source, seed, samples, support_mode)
