"""Site-independent MPS/MPO tensors, transfer operators and contractions.

Sites are 0-indexed.  A state of n sites with tensor A and boundary X has
amplitudes ``tr(A_{i_0} ... A_{i_{n-1}} X)`` in lexicographic order (site 0 is
the most significant digit).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .linalg import (
    CArray,
    JordanProfile,
    devectorize,
    hermitian_sqrt,
    jordan_profile,
    vectorize,
)

DENSE_CAP = 2**20


class NotPrimitiveError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MpsTensor:
    """p matrices of shape D x D, stored as an array of shape (p, D, D)."""

    matrices: CArray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrices, dtype=complex)
        if m.ndim != 3 or m.shape[1] != m.shape[2]:
            raise ValueError(f"MPS tensor must have shape (p, D, D), got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("MPS tensor has non-finite entries")
        m.setflags(write=False)
        object.__setattr__(self, "matrices", m)

    @property
    def p(self) -> int:
        return self.matrices.shape[0]

    @property
    def D(self) -> int:  # noqa: N802
        return self.matrices.shape[1]

    def __getitem__(self, i: int) -> CArray:
        return self.matrices[i]

    def gauge(self, g: np.ndarray) -> MpsTensor:
        """A_i -> G^{-1} A_i G."""
        gi = np.linalg.inv(g)
        return MpsTensor(np.einsum("ab,ibc,cd->iad", gi, self.matrices, g))

    def scaled(self, c: complex) -> MpsTensor:
        return MpsTensor(self.matrices * c)


@dataclass(frozen=True, eq=False)
class MpoTensor:
    """O_{i,j}: p x p grid of D x D matrices, shape (p, p, D, D); i is the output index."""

    matrices: CArray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrices, dtype=complex)
        if m.ndim != 4 or m.shape[0] != m.shape[1] or m.shape[2] != m.shape[3]:
            raise ValueError(f"MPO tensor must have shape (p, p, D, D), got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrices", m)

    @property
    def p(self) -> int:
        return self.matrices.shape[0]

    @property
    def D(self) -> int:  # noqa: N802
        return self.matrices.shape[2]


def apply_mpo(o: MpoTensor, a: MpsTensor) -> MpsTensor:
    """(O . A)_i = sum_k O_{i,k} (x) A_k, MPO bond first."""
    if o.p != a.p:
        raise ValueError("physical dimensions differ")
    return MpsTensor(np.einsum("ikab,kcd->iacbd", o.matrices, a.matrices).reshape(
        a.p, o.D * a.D, o.D * a.D))


# ---------------------------------------------------------------- transfer maps


def local_kernel(a: MpsTensor, b: MpsTensor) -> CArray:
    """K[m, n] = conj(A_m) (x) B_n, shape (p, p, D1 D2, D1 D2)."""
    if a.p != b.p:
        raise ValueError(f"physical dimension mismatch: {a.p} vs {b.p}")
    d1, d2 = a.D, b.D
    k = np.einsum("mij,nkl->mnikjl", a.matrices.conj(), b.matrices)
    return k.reshape(a.p, a.p, d1 * d2, d1 * d2)


def transfer_matrix(a: MpsTensor, b: MpsTensor | None = None) -> CArray:
    b = a if b is None else b
    if a.p != b.p:
        raise ValueError(f"physical dimension mismatch: {a.p} vs {b.p}")
    d1, d2 = a.D, b.D
    return np.einsum("mij,mkl->ikjl", a.matrices.conj(), b.matrices).reshape(d1 * d2, d1 * d2)


def generalized_transfer(a: MpsTensor, b: MpsTensor, z: np.ndarray) -> CArray:
    """E_Z = sum_{m,n} <m|Z|n> conj(A_m) (x) B_n."""
    z = np.asarray(z, dtype=complex)
    if z.shape != (a.p, a.p) or a.p != b.p:
        raise ValueError(f"Z of shape {z.shape} does not match p={a.p}")
    d1, d2 = a.D, b.D
    return np.einsum("mn,mij,nkl->ikjl", z, a.matrices.conj(), b.matrices).reshape(
        d1 * d2, d1 * d2)


def _site_count(f: np.ndarray, p: int) -> int:
    dim = f.shape[0]
    d = int(round(np.log(dim) / np.log(p))) if dim > 1 else 0
    if f.shape != (p**d, p**d):
        raise ValueError(f"operator of shape {f.shape} does not act on p={p} sites")
    return d


def _contract_blob(
    kernel: np.ndarray, f: np.ndarray, d: int, gaps: Sequence[np.ndarray], head: np.ndarray
) -> CArray:
    """head . K_F(site 1) . gaps[0] . K_F(site 2) ... with F treated as one blob.

    ``kernel`` has shape (p, p, M, M).  ``gaps[k]`` is the matrix inserted after
    the k-th support site.
    """
    p = kernel.shape[0]
    t = f.reshape((p,) * (2 * d))
    # interleave to (m_1, n_1, m_2, n_2, ...): bra index first, ket index second
    order = [x for k in range(d) for x in (k, d + k)]
    t = np.transpose(t, order)
    acc = np.multiply.outer(t, head)
    for k in range(d):
        acc = np.einsum("mn...ab,mnbc->...ac", acc, kernel)
        acc = acc @ gaps[k]
    return acc


def operator_transfer(a: MpsTensor, b: MpsTensor, f: np.ndarray) -> CArray:
    """E_F for an operator on d consecutive sites, by direct d-site contraction."""
    f = np.asarray(f, dtype=complex)
    d = _site_count(f, a.p)
    if d == 0:
        raise ValueError("operator_transfer needs d >= 1")
    kernel = local_kernel(a, b)
    eye = np.eye(kernel.shape[-1], dtype=complex)
    return _contract_blob(kernel, f, d, [eye] * d, eye)


def operator_transfer_product(a: MpsTensor, b: MpsTensor, factors: Sequence[np.ndarray]) -> CArray:
    """E_{Z_1 (x) ... (x) Z_d} = E_{Z_1} ... E_{Z_d}."""
    out = np.eye(a.D * b.D, dtype=complex)
    for z in factors:
        out = out @ generalized_transfer(a, b, z)
    return out


# ----------------------------------------------------------------- fixed points


def _power_iterate(m: np.ndarray, v0: np.ndarray, tol: float, max_iter: int) -> tuple[complex, CArray, bool]:
    v = v0 / np.linalg.norm(v0)
    lam = 0j
    for _ in range(max_iter):
        w = m @ v
        lam = complex(np.vdot(v, w))
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0j, v, False
        if np.linalg.norm(w - lam * v) <= tol * max(abs(lam), 1e-300):
            return lam, w / nw, True
        v = w / nw
    return lam, v, False


def dominant_eigvec(m: np.ndarray, tol: float = 1e-12, max_iter: int = 10_000) -> tuple[complex, CArray]:
    """Dominant right eigenpair: power iteration, eigendecomposition fallback."""
    dim = m.shape[0]
    d = int(round(np.sqrt(dim)))
    v0 = vectorize(np.eye(d)) if d * d == dim else np.ones(dim, dtype=complex)
    lam, v, ok = _power_iterate(m, v0 + 0.1, tol, max_iter)
    if ok:
        # Rayleigh refinement: one inverse-iteration step at the converged shift
        try:
            w = np.linalg.solve(m - lam * (1 + 1e-13) * np.eye(dim), v)
            w /= np.linalg.norm(w)
            lam = complex(np.vdot(w, m @ w))
            v = w
        except np.linalg.LinAlgError:
            pass
        return lam, v
    vals, vecs = np.linalg.eig(m)
    k = int(np.argmax(np.abs(vals)))
    return complex(vals[k]), vecs[:, k]


def _hermitian_fixed_point(v: np.ndarray, d1: int, d2: int) -> CArray:
    x = devectorize(v, (d1, d2))
    if d1 == d2:
        tr = np.trace(x)
        if abs(tr) > 1e-300:
            x = x * (abs(tr) / tr)
        x = (x + x.conj().T) / 2 if np.allclose(x, x.conj().T, atol=1e-8 * np.abs(x).max()) else x
    return x


@dataclass(frozen=True, eq=False)
class TransferOperator:
    """Transfer matrix with cached fixed points, gap and Jordan profile.

    ``left_fixed`` and ``right_fixed`` satisfy <<l|E = rho <<l| and
    E|r>> = rho |r>>, normalized so that tr(l^dagger r) = 1 and tr(r) > 0.
    """

    matrix: CArray
    d1: int
    d2: int
    spectral_radius: float
    lambda2: float
    left_fixed: CArray
    right_fixed: CArray
    eigvals: CArray = field(repr=False)

    @cached_property
    def jordan(self) -> JordanProfile:
        return jordan_profile(self.matrix)

    @property
    def gap_part(self) -> CArray:
        """E minus its dominant projector |r>><<l|."""
        return self.matrix - self.spectral_radius * np.outer(
            vectorize(self.right_fixed), vectorize(self.left_fixed).conj())


def transfer_op(a: MpsTensor, b: MpsTensor | None = None) -> TransferOperator:
    b = a if b is None else b
    e = transfer_matrix(a, b)
    vals = np.linalg.eigvals(e)
    mods = np.sort(np.abs(vals))[::-1]
    rho = float(mods[0])
    lam2 = float(mods[1]) if len(mods) > 1 else 0.0
    _, vr = dominant_eigvec(e)
    _, vl = dominant_eigvec(e.conj().T)
    r = _hermitian_fixed_point(vr, a.D, b.D)
    ell = _hermitian_fixed_point(vl, a.D, b.D)
    ov = np.vdot(vectorize(ell), vectorize(r))
    if abs(ov) > 1e-300:
        ell = ell / np.conj(ov)
    return TransferOperator(e, a.D, b.D, rho, lam2, ell, r, vals)


def normalize_spectral_radius(a: MpsTensor) -> MpsTensor:
    rho = float(np.max(np.abs(np.linalg.eigvals(transfer_matrix(a)))))
    if rho == 0:
        raise ValueError("transfer operator is nilpotent")
    return a.scaled(1 / np.sqrt(rho))


@dataclass(frozen=True)
class InjectivityReport:
    injective: bool
    spectral_radius: float
    lambda2: float
    min_fixed_eig: float

    def __bool__(self) -> bool:
        return self.injective


def is_injective(a: MpsTensor, gap_tol: float = 1e-8) -> InjectivityReport:
    """Unique dominant eigenvalue in modulus and positive-definite right fixed point."""
    t = transfer_op(a)
    rho = t.spectral_radius
    if rho == 0:
        return InjectivityReport(False, 0.0, 0.0, 0.0)
    rel_gap = (rho - t.lambda2) / rho
    r = t.right_fixed
    herm = np.allclose(r, r.conj().T, atol=1e-8 * max(np.abs(r).max(), 1e-300))
    rn = r / np.trace(r).real if abs(np.trace(r)) > 0 else r
    min_eig = float(np.min(np.linalg.eigvalsh((rn + rn.conj().T) / 2))) if herm else -np.inf
    ok = bool(rel_gap > gap_tol and herm and min_eig > gap_tol)
    return InjectivityReport(ok, rho, t.lambda2, min_eig)


def canonicalize(a: MpsTensor, return_gauge: bool = False):
    """Gauge to r = I, l = diagonal positive with unit trace.

    With ``return_gauge`` the gauge matrix G is returned too; the canonical
    tensor is G^{-1} A G and a boundary X maps to G^{-1} X G.
    """
    rep = is_injective(a)
    if not rep:
        raise NotPrimitiveError("not primitive")
    scale = 1 / np.sqrt(rep.spectral_radius)
    a = a.scaled(scale)
    t = transfer_op(a)
    r = t.right_fixed
    r = (r + r.conj().T) / 2
    r = r / np.trace(r).real
    p_sqrt = hermitian_sqrt(r)
    a1 = a.gauge(p_sqrt)
    ell = transfer_op(a1).left_fixed
    ell = (ell + ell.conj().T) / 2
    w, u = np.linalg.eigh(ell)
    if w.sum() < 0:
        w = -w
    order = np.argsort(w)[::-1]
    w, u = w[order], u[:, order]
    a2 = a1.gauge(u)
    g = p_sqrt @ u
    out = MpsTensor(a2.matrices)
    if return_gauge:
        return out, g, scale
    return out


def canonical_residuals(a: MpsTensor) -> tuple[float, float, CArray]:
    """(||E|I>> - |I>>||, ||<<L|E - <<L|||, L) with L the left fixed point scaled to unit trace."""
    e = transfer_matrix(a)
    d = a.D
    eye = vectorize(np.eye(d))
    ell = transfer_op(a).left_fixed
    ell = ell / np.trace(ell)
    lv = vectorize(ell)
    return (float(np.linalg.norm(e @ eye - eye)), float(np.linalg.norm(lv.conj() @ e - lv.conj())), ell)


def random_injective_mps(p: int, D: int, seed: int | np.random.Generator, max_tries: int = 100) -> MpsTensor:  # noqa: N803
    if p < 2 or D < 1:
        raise ValueError("need p >= 2 and D >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    for _ in range(max_tries):
        m = rng.normal(size=(p, D, D)) + 1j * rng.normal(size=(p, D, D))
        a = normalize_spectral_radius(MpsTensor(m))
        if is_injective(a):
            return a
    raise RuntimeError(f"no injective tensor after {max_tries} draws")


# ------------------------------------------------------------------ dense states


def dense_state_sites(tensors: Sequence[np.ndarray], x: np.ndarray, cap: int = DENSE_CAP) -> CArray:
    """Amplitudes tr(T^{(0)}_{i_0} ... T^{(n-1)}_{i_{n-1}} X) for site-dependent tensors."""
    ps = [t.shape[0] for t in tensors]
    total = int(np.prod(ps))
    if total > cap:
        raise ValueError(f"dense state of {total} amplitudes exceeds cap {cap}")
    x = np.asarray(x, dtype=complex)
    d0 = tensors[0].shape[1]
    # rows: (configuration, starting bond index alpha); columns: current bond index
    acc = np.eye(d0, dtype=complex)[None, :, :]
    for t in tensors:
        acc = np.einsum("cab,ibd->ciad", acc, t).reshape(-1, d0, t.shape[2])
    return np.einsum("cab,ba->c", acc, x)


def dense_state(a: MpsTensor, x: np.ndarray, n: int, cap: int = DENSE_CAP) -> CArray:
    if a.p**n > cap:
        raise ValueError(f"p^n = {a.p}^{n} exceeds dense cap {cap}")
    return dense_state_sites([a.matrices] * n, x, cap)


def mpo_dense(o: MpoTensor, x: np.ndarray, n: int) -> CArray:
    """Dense operator sum tr(O_{i_0 j_0} ... O_{i_{n-1} j_{n-1}} X) |i><j|."""
    p = o.p
    flat = o.matrices.reshape(p * p, o.D, o.D)
    v = dense_state(MpsTensor(flat), x, n)
    t = v.reshape((p, p) * n)
    t = np.transpose(t, list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2)))
    return t.reshape(p**n, p**n)


# ------------------------------------------------------------ chain contraction


class _PowerCache:
    def __init__(self, e: np.ndarray):
        self.e = e
        self.cache: dict[int, np.ndarray] = {}

    def __call__(self, k: int) -> np.ndarray:
        if k not in self.cache:
            self.cache[k] = np.linalg.matrix_power(self.e, k)
        return self.cache[k]


def contract_chain(
    kernel: np.ndarray,
    n: int,
    f: np.ndarray | None,
    support: Sequence[int],
    closure: np.ndarray,
    transfer: np.ndarray | None = None,
) -> complex:
    """tr(T_0 ... T_{n-1} closure) with T_k = transfer off the support and the F-blob on it.

    ``kernel[m, n]`` is the per-site matrix for bra index m and ket index n;
    ``transfer`` defaults to its diagonal sum.  F acts on ``support`` in the
    listed order (sites mod n).  Cost is polynomial in n.
    """
    p = kernel.shape[0]
    e = kernel.trace(axis1=0, axis2=1) if transfer is None else transfer
    powers = _PowerCache(e)
    sites = [int(s) % n for s in support]
    d = len(sites)
    if len(set(sites)) != d:
        raise ValueError(f"support {list(support)} has repeated sites mod {n}")
    if d == 0:
        scalar = 1.0 if f is None else complex(np.asarray(f).reshape(-1)[0])
        return complex(scalar * np.trace(powers(n) @ closure))
    f = np.asarray(f, dtype=complex)
    if f.shape != (p**d, p**d):
        raise ValueError(f"operator shape {f.shape} does not match {d} sites of dim {p}")
    order = np.argsort(sites)
    sorted_sites = [sites[k] for k in order]
    if list(order) != list(range(d)):
        t = f.reshape((p,) * (2 * d))
        t = np.transpose(t, list(order) + [d + k for k in order])
        f = t.reshape(p**d, p**d)
    gaps = []
    for k in range(d):
        nxt = sorted_sites[k + 1] if k + 1 < d else n
        gaps.append(powers(nxt - sorted_sites[k] - 1))
    blob = _contract_blob(kernel, f, d, gaps, powers(sorted_sites[0]))
    return complex(np.trace(blob @ closure))


def matrix_element_transfer(
    a1: MpsTensor,
    x1: np.ndarray,
    a2: MpsTensor,
    x2: np.ndarray,
    f: np.ndarray | None,
    support: Sequence[int],
    n: int,
) -> complex:
    """<Psi(a1, x1)| F_support (x) I |Psi(a2, x2)> by transfer contraction."""
    kernel = local_kernel(a1, a2)
    closure = np.kron(np.asarray(x1, dtype=complex).conj(), np.asarray(x2, dtype=complex))
    return contract_chain(kernel, n, f, support, closure, transfer_matrix(a1, a2))


def product_matrix_element(
    a1: MpsTensor,
    x1: np.ndarray,
    a2: MpsTensor,
    x2: np.ndarray,
    ops: Mapping[int, np.ndarray],
    n: int,
) -> complex:
    """Matrix element of a product operator given as {site: single-site op}."""
    e = transfer_matrix(a1, a2)
    powers = _PowerCache(e)
    out = np.eye(e.shape[0], dtype=complex)
    pos = 0
    for site in sorted(int(s) % n for s in ops):
        out = out @ powers(site - pos) @ generalized_transfer(a1, a2, ops[site])
        pos = site + 1
    out = out @ powers(n - pos)
    closure = np.kron(np.asarray(x1, dtype=complex).conj(), np.asarray(x2, dtype=complex))
    return complex(np.trace(out @ closure))


def overlap(a1: MpsTensor, x1: np.ndarray, a2: MpsTensor, x2: np.ndarray, n: int) -> complex:
    """<Psi(a1, x1)|Psi(a2, x2)> = tr(E^n (conj(x1) (x) x2))."""
    return matrix_element_transfer(a1, x1, a2, x2, None, [], n)
