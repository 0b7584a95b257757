"""Heisenberg-XXX magnon descendants as matrix product states.

Conventions: ``sigma_minus = |0><1|`` lowers ``S3 = (|1><1| - |0><0|)/2``, so the
all-ones state is the highest-weight ferromagnetic ground state.  The
one-magnon state is ``Psi = sum_q w^q sigma_minus_q |1...1>`` (q 0-indexed,
``w = exp(2 pi i / n)``) and ``Psi_s = S_-^s Psi``.

Every magnon tensor depends on n through w.  Never reuse a tensor built for one
chain length at another.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import factorial
from typing import Sequence

import numpy as np

from .fit import FitError, FitResult, fit_exponent
from .linalg import (
    PAULIS,
    CArray,
    JordanProfile,
    apply_local,
    jordan_profile,
    kron_all,
    operator_norm,
)
from .mps import (
    MpoTensor,
    MpsTensor,
    apply_mpo,
    contract_chain,
    dense_state,
    local_kernel,
)

SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=complex)
S3 = np.diag([-0.5, 0.5]).astype(complex)
HAMILTONIAN_CAP = 14
ZERO_FLOOR = 1e-12


def omega(n: int) -> complex:
    return complex(np.exp(2j * np.pi / n))


# ------------------------------------------------------------------ Hamiltonian


def _swap_index(idx: np.ndarray, n: int, a: int, b: int) -> np.ndarray:
    # site 0 is the most significant bit
    sa, sb = n - 1 - a, n - 1 - b
    ba = (idx >> sa) & 1
    bb = (idx >> sb) & 1
    diff = ba ^ bb
    return idx ^ ((diff << sa) | (diff << sb))


def xxx_hamiltonian(n: int, cap: int = HAMILTONIAN_CAP) -> CArray:
    """H = -1/4 sum_m (XX + YY + ZZ)_{m,m+1}, periodic, built as n/4 - 1/2 sum F_{m,m+1}."""
    if n > cap:
        raise ValueError(f"n={n} exceeds dense Hamiltonian cap {cap}")
    if n < 2:
        raise ValueError("need n >= 2")
    dim = 2**n
    idx = np.arange(dim)
    h = np.zeros((dim, dim), dtype=complex)
    h[idx, idx] = n / 4
    bonds = [(m, (m + 1) % n) for m in range(n)] if n > 2 else [(0, 1), (1, 0)]
    for a, b in bonds:
        h[_swap_index(idx, n, a, b), idx] -= 0.5
    return h


def xxx_apply(psi: np.ndarray, n: int) -> CArray:
    """Matrix-free H|psi>."""
    idx = np.arange(2**n)
    out = (n / 4) * np.asarray(psi, dtype=complex)
    bonds = [(m, (m + 1) % n) for m in range(n)] if n > 2 else [(0, 1), (1, 0)]
    for a, b in bonds:
        out = out - 0.5 * psi[_swap_index(idx, n, a, b)]
    return out


def total_apply(psi: np.ndarray, op: np.ndarray, n: int) -> CArray:
    """(sum_k op_k)|psi> for a single-site op."""
    out = np.zeros_like(np.asarray(psi, dtype=complex))
    for k in range(n):
        out += apply_local(psi, op, [k], n)
    return out


def cyclic_shift(psi: np.ndarray, n: int, p: int = 2) -> CArray:
    """(T psi)(i_0, ..., i_{n-1}) = psi(i_{n-1}, i_0, ..., i_{n-2})."""
    t = np.asarray(psi).reshape((p,) * n)
    return np.moveaxis(t, 0, -1).reshape(-1)


# --------------------------------------------------------------- MPS and MPOs


def magnon_mps(n: int) -> tuple[MpsTensor, CArray]:
    """A_0 = |1><0|, A_1 = diag(1, w), X = |0><1|."""
    w = omega(n)
    a0 = np.array([[0, 0], [1, 0]], dtype=complex)
    a1 = np.diag([1, w])
    x = np.array([[0, 1], [0, 0]], dtype=complex)
    return MpsTensor(np.stack([a0, a1])), x


def lowering_mpo() -> tuple[MpoTensor, CArray]:
    """Bond-2 MPO of S_- = sum_k sigma_minus_k with boundary sigma_minus."""
    o = np.zeros((2, 2, 2, 2), dtype=complex)
    o[0, 0] = np.eye(2)
    o[1, 1] = np.eye(2)
    o[0, 1] = np.array([[0, 0], [1, 0]])
    return MpoTensor(o), SIGMA_MINUS.copy()


def ladder(s: int) -> CArray:
    """J_+ for spin s/2 in the basis m = -s/2, ..., s/2 (index 0 is the lowest weight)."""
    j = s / 2
    out = np.zeros((s + 1, s + 1), dtype=complex)
    for k in range(s):
        m = -j + k
        out[k + 1, k] = np.sqrt(j * (j + 1) - m * (m + 1))
    return out


def compressed_mpo(s: int) -> tuple[MpoTensor, CArray]:
    """Bond-(s+1) MPO of S_-^s with boundary |lowest><highest|."""
    if s < 0:
        raise ValueError("s must be nonnegative")
    o = np.zeros((2, 2, s + 1, s + 1), dtype=complex)
    o[0, 0] = np.eye(s + 1)
    o[1, 1] = np.eye(s + 1)
    o[0, 1] = ladder(s)
    x = np.zeros((s + 1, s + 1), dtype=complex)
    x[0, s] = 1
    return MpoTensor(o), x


def magnon_tensor(n: int, s: int) -> tuple[MpsTensor, CArray]:
    """MPS of Psi_s: tensor compressed_mpo(s) . A, boundary X_s (x) X."""
    a, x = magnon_mps(n)
    o, xs = compressed_mpo(s)
    return apply_mpo(o, a), np.kron(xs, x)


def magnon_norm2(n: int, s: int) -> float:
    """||Psi_s||^2 = n (n-2)! s! / (n-2-s)!, evaluated in exact integer arithmetic."""
    if not 0 <= s <= n - 2:
        raise ValueError(f"s={s} out of range for n={n}")
    return float(n * factorial(n - 2) * factorial(s) // factorial(n - 2 - s))


@dataclass(frozen=True, eq=False)
class MagnonState:
    n: int
    s: int
    representation: str
    tensor: MpsTensor
    boundary: CArray
    norm2: float
    vector: CArray | None = field(default=None, repr=False)


def magnon_state(n: int, s: int, representation: str = "dense") -> MagnonState:
    """Normalized psi_s; ``vector`` is populated in dense mode."""
    if not 0 <= s <= n - 2:
        raise ValueError(f"s={s} out of range for n={n}")
    if representation not in ("dense", "transfer"):
        raise ValueError(f"unknown representation {representation!r}")
    t, x = magnon_tensor(n, s)
    norm2 = magnon_norm2(n, s)
    vec = None
    if representation == "dense":
        vec = dense_state(t, x, n) / np.sqrt(norm2)
    return MagnonState(n, s, representation, t, x, norm2, vec)


def magnon_state_naive(n: int, s: int) -> CArray:
    """Unnormalized S_-^s Psi by repeated dense application of S_- (oracle path)."""
    a, x = magnon_mps(n)
    psi = dense_state(a, x, n)
    for _ in range(s):
        psi = total_apply(psi, SIGMA_MINUS, n)
    return psi


# ---------------------------------------------------------- transfer operators


@dataclass(frozen=True, eq=False)
class MagnonTransfer:
    """E_{r,s} on C^2 (x) C^2 (x) C^{r+1} (x) C^{s+1}."""

    r: int
    s: int
    n: int
    matrix: CArray

    @cached_property
    def jordan(self) -> JordanProfile:
        w = omega(self.n)
        return jordan_profile(self.matrix, seeds=[1.0, w, np.conj(w)])


def magnon_transfer_matrix(r: int, s: int, n: int) -> CArray:
    a, _ = magnon_mps(n)
    a0, a1 = a[0], a[1]
    ir, is_ = np.eye(r + 1), np.eye(s + 1)
    jr, js = ladder(r), ladder(s)
    return (
        kron_all([a0.conj(), a0, ir, is_])
        + kron_all([a1.conj(), a1, ir, is_])
        + kron_all([a0.conj(), a1, ir, js])
        + kron_all([a1.conj(), a0, jr, is_])
        + kron_all([a1.conj(), a1, jr, js])
    )


def magnon_transfer(r: int, s: int, n: int) -> MagnonTransfer:
    if r < 0 or s < 0:
        raise ValueError("r, s must be nonnegative")
    return MagnonTransfer(r, s, n, magnon_transfer_matrix(r, s, n))


def _to_rs_order(m: np.ndarray, r: int, s: int) -> np.ndarray:
    """Reorder the last two (M x M) axes from (ar, a, as, b) to (a, b, ar, as)."""
    lead = m.shape[:-2]
    dims = (r + 1, 2, s + 1, 2)
    t = m.reshape(lead + dims + dims)
    k = len(lead)
    perm = [k + 1, k + 3, k + 0, k + 2]
    t = np.transpose(t, list(range(k)) + perm + [4 + q for q in perm])
    size = 4 * (r + 1) * (s + 1)
    return t.reshape(lead + (size, size))


def magnon_kernel(n: int, r: int, s: int) -> tuple[CArray, CArray]:
    """Per-site kernel and boundary closure in the E_{r,s} factor order."""
    tr, xr = magnon_tensor(n, r)
    ts, xs = magnon_tensor(n, s)
    kernel = _to_rs_order(local_kernel(tr, ts), r, s)
    closure = _to_rs_order(np.kron(xr.conj(), xs), r, s)
    return kernel, closure


def magnon_matrix_element(
    n: int, r: int, s: int, f: np.ndarray | None, support: Sequence[int], normalized: bool = True
) -> complex:
    """<psi_r| F_support (x) I |psi_s> with E_{r,s} powers between support sites."""
    for q in (r, s):
        if not 0 <= q <= n - 2:
            raise ValueError(f"magnetization {q} out of range for n={n}")
    kernel, closure = magnon_kernel(n, r, s)
    e = magnon_transfer_matrix(r, s, n)
    val = contract_chain(kernel, n, f, support, closure, e)
    if normalized:
        val /= np.sqrt(magnon_norm2(n, r) * magnon_norm2(n, s))
    return val


def phase_conjugated_prefix(f: np.ndarray, support: Sequence[int], n: int) -> CArray:
    """F' = (Z^{c_0} (x) ... ) F (Z^{-c_0} (x) ...), c_k = a_k - k, Z = diag(1, w).

    Moving the support (a_0, ..., a_{d-1}) onto the prefix (0, ..., d-1) leaves
    one-magnon matrix elements invariant after this conjugation:
    <Psi|F_A|Psi> = <Psi|F'_{0..d-1}|Psi>.  The identity is specific to the
    one-magnon sector.
    """
    w = omega(n)
    d = len(support)
    phases = [np.diag([1.0, w ** ((int(a) % n) - k)]) for k, a in enumerate(support)]
    dmat = kron_all(phases) if d else np.eye(1)
    return dmat @ np.asarray(f, dtype=complex) @ dmat.conj().T


def transposition_phase(n: int, k: int) -> CArray:
    """Diagonal of I..I (x) Z^dagger_k (x) Z_{k+1} (x) I..I as a vector (sites mod n)."""
    w = omega(n)
    z = np.array([1.0, w])
    diag = np.ones(1, dtype=complex)
    for site in range(n):
        if site == k % n:
            f = z.conj()
        elif site == (k + 1) % n:
            f = z
        else:
            f = np.ones(2)
        diag = np.kron(diag, f)
    return diag


def transpose_sites(psi: np.ndarray, n: int, a: int, b: int) -> CArray:
    t = np.asarray(psi).reshape((2,) * n)
    return np.swapaxes(t, a, b).reshape(-1)


# ------------------------------------------------------------- reduced overlap


def reduced_overlap_check(n: int, s: int, d: int, method: str = "transfer") -> float:
    """<1|^{(x)d} tr_{n-d}(|psi_s><psi_s|) |1>^{(x)d} on the first d sites."""
    if d == 0:
        return 1.0
    if not 0 < d <= n:
        raise ValueError("need 0 <= d <= n")
    if method == "dense":
        psi = magnon_state(n, s, "dense").vector
        m = psi.reshape(2**d, 2 ** (n - d))
        rho = m @ m.conj().T
        return float(rho[-1, -1].real)
    if method != "transfer":
        raise ValueError(f"unknown method {method!r}")
    # the n-d site chain with n-site tensors equals the projected state up to a phase
    if n - d < s + 1:
        return 0.0
    t, x = magnon_tensor(n, s)
    kernel = local_kernel(t, t)
    closure = np.kron(x.conj(), x)
    m_short = contract_chain(kernel, n - d, None, [], closure)
    return float(m_short.real / magnon_norm2(n, s))


# ------------------------------------------------------------------- scaling


def random_unit_operators(d: int, count: int, rng: np.random.Generator, p: int = 2) -> list[CArray]:
    dim = p**d
    out = []
    for _ in range(count):
        g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        out.append(g / operator_norm(g))
    return out


def pauli_strings(d: int) -> list[CArray]:
    from itertools import product

    return [kron_all(ps) for ps in product(PAULIS, repeat=d)]


def operator_sample(d: int, seed: int, count: int = 64) -> list[CArray]:
    """Seeded random unit-norm d-local operators plus all Pauli strings for d <= 2."""
    rng = np.random.default_rng(seed)
    ops = random_unit_operators(d, count, rng)
    if d <= 2:
        ops += pauli_strings(d)
    return ops


@dataclass
class ScalingResult:
    r: int
    s: int
    d: int
    s0: int
    n_grid: list[int]
    offdiag: list[float]
    diag: list[float]
    offdiag_fit: FitResult | None
    diag_fit: FitResult | None
    notes: list[str]
    seed: int

    def rows(self) -> list[tuple]:
        out = []
        for n, v in zip(self.n_grid, self.offdiag):
            out.append((n, self.r, self.s, self.d, self.seed, v, "offdiag"))
        for n, v in zip(self.n_grid, self.diag):
            out.append((n, self.r, self.s, self.d, self.seed, v, "diag"))
        return out


def magnon_scaling_experiment(
    r: int,
    s: int,
    d: int,
    n_grid: Sequence[int],
    seed: int = 0,
    samples: int = 64,
    s0: int | None = None,
) -> ScalingResult:
    """Slopes of worst-of-sample |<psi_r|F|psi_s>| and of diagonal differences against n.

    F runs over ``operator_sample(d, seed, samples)`` on the prefix support
    (matrix elements of the translation-invariant magnon states only depend on
    the support up to translation).  The diagonal group is
    max_F max_{a,b <= s0} |<psi_a|F|psi_a> - <psi_b|F|psi_b>|.  Values below
    ``ZERO_FLOOR`` count as exact zeros; a group that vanishes identically has no fit.
    """
    n_grid = [int(n) for n in n_grid]
    if len(n_grid) < 4 or len(set(n_grid)) < len(n_grid):
        raise FitError("degenerate grid: need at least 4 distinct values of n")
    s0 = max(r, s) if s0 is None else s0
    ops = operator_sample(d, seed, samples)
    support = list(range(d))
    offdiag, diag = [], []
    for n in n_grid:
        if max(r, s, s0) > n - 2:
            raise ValueError(f"magnetization out of range at n={n}")
        offdiag.append(max(abs(magnon_matrix_element(n, r, s, f, support)) for f in ops))
        best = 0.0
        for f in ops:
            vals = [magnon_matrix_element(n, a, a, f, support).real for a in range(s0 + 1)]
            best = max(best, max(vals) - min(vals))
        diag.append(best)
    notes: list[str] = []

    def _fit(vals: list[float], name: str) -> FitResult | None:
        if all(v < ZERO_FLOOR for v in vals):
            notes.append(f"{name}: identically zero (below {ZERO_FLOOR:g}) on the whole grid")
            return None
        if any(v < ZERO_FLOOR for v in vals):
            notes.append(f"{name}: some values below {ZERO_FLOOR:g}")
            return None
        return fit_exponent(list(zip(n_grid, vals)))

    off_fit = _fit(offdiag, "offdiag") if r != s else None
    diag_fit = _fit(diag, "diag") if s0 > 0 else None
    return ScalingResult(r, s, d, s0, n_grid, offdiag, diag, off_fit, diag_fit, notes, seed)
