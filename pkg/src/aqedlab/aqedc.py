"""Approximate error-detection certificates, refutations and the boundary no-go experiment."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from itertools import combinations
from math import comb
from typing import Callable, Sequence

import numpy as np

from .linalg import (
    CArray,
    apply_local,
    embed_operator,
    fit_linear,
    hermitian_sqrt,
    numerical_rank,
    operator_norm,
)
from .magnon import magnon_matrix_element, magnon_state, pauli_strings, random_unit_operators
from .mps import MpsTensor, is_injective, normalize_spectral_radius, overlap, transfer_matrix

ElementFn = Callable[[np.ndarray | None, Sequence[int]], CArray]
RANK_CUTOFF = 1e-10
ENUM_LIMIT = 10**6
TRACE_FLOOR = 1e-13


# ------------------------------------------------------------------ code bases


@dataclass(frozen=True, eq=False)
class CodeBasis:
    """K orthonormal states on n sites, accessed through their local matrix elements.

    ``elements(f, support)[a, b] = <psi_a| F_support |psi_b>``.  ``states`` holds
    dense vectors when available.
    """

    n: int
    K: int  # noqa: N815
    elements: ElementFn
    provenance: str = "custom"
    p: int = 2
    states: CArray | None = field(default=None, repr=False)

    def gram(self) -> CArray:
        return self.elements(None, [])

    def check_orthonormal(self, tol: float = 1e-9) -> None:
        err = float(np.abs(self.gram() - np.eye(self.K)).max())
        if err > tol:
            raise ValueError(f"basis is not orthonormal (Gram deviation {err:.3g})")


def dense_basis(states: Sequence[np.ndarray], n: int, p: int = 2, provenance: str = "custom") -> CodeBasis:
    vs = np.stack([np.asarray(s, dtype=complex) for s in states])

    def elements(f, support):
        if f is None:
            return vs.conj() @ vs.T
        applied = np.stack([apply_local(v, f, support, n, p) for v in vs])
        return vs.conj() @ applied.T

    basis = CodeBasis(n, len(vs), elements, provenance, p, vs)
    basis.check_orthonormal()
    return basis


def magnon_basis(n: int, magnetizations: Sequence[int], representation: str = "dense") -> CodeBasis:
    ss = [int(s) for s in magnetizations]
    if len(set(ss)) != len(ss):
        raise ValueError("repeated magnetizations")
    if representation == "dense":
        return dense_basis([magnon_state(n, s, "dense").vector for s in ss], n, provenance="magnon")

    def elements(f, support):
        out = np.empty((len(ss), len(ss)), dtype=complex)
        for i, r in enumerate(ss):
            for j, s in enumerate(ss):
                out[i, j] = magnon_matrix_element(n, r, s, f, support)
        return out

    return CodeBasis(n, len(ss), elements, "magnon")


def kl_deviation(g: np.ndarray) -> CArray:
    """|<a|F|b> - delta_ab <1|F|1>| entrywise."""
    return np.abs(g - np.eye(g.shape[0]) * g[0, 0])


# ------------------------------------------------------------------- channels


def _check_completeness(n: int, p: int, kraus: Sequence[tuple[float, np.ndarray, Sequence[int]]]) -> None:
    bound = sum(w * operator_norm(op) ** 2 for w, op, _ in kraus)
    if bound <= 1 + 1e-8:
        return
    if p**n > 2**12:
        raise ValueError("cannot certify channel completeness: sum w ||F||^2 > 1 and n too large")
    total = sum(w * embed_operator(op.conj().T @ op, sup, n, p) for w, op, sup in kraus)
    top = float(np.max(np.linalg.eigvalsh((total + total.conj().T) / 2)))
    if top > 1 + 1e-8:
        raise ValueError(f"sum_j w_j F_j^dag F_j has eigenvalue {top:.6g} > 1")


def eps_approx(basis: CodeBasis, kraus: Sequence[tuple[float, np.ndarray, Sequence[int]]]) -> float:
    """max_{a,b} sum_j |<a|R_j|b> - delta_ab <1|R_j|1>|^2 with R_j = sqrt(w_j) F_j."""
    basis.check_orthonormal()
    _check_completeness(basis.n, basis.p, kraus)
    acc = np.zeros((basis.K, basis.K))
    for w, op, sup in kraus:
        if w < 0:
            raise ValueError("negative channel weight")
        acc += w * kl_deviation(basis.elements(op, sup)) ** 2
    return float(acc.max())


# ---------------------------------------------------------------- gamma search


def local_supports(n: int, d: int, mode: str = "arbitrary") -> list[tuple[int, ...]]:
    if mode == "connected":
        return [tuple((s + k) % n for k in range(d)) for s in range(n)] if d < n else [tuple(range(n))]
    return list(combinations(range(n), d))


@dataclass(frozen=True)
class GammaResult:
    gamma: float
    method: str
    evaluated: int
    argmax_support: tuple[int, ...]


def kl_gamma(
    basis: CodeBasis,
    d: int,
    source: str = "paulis",
    seed: int = 0,
    samples: int = 64,
    support_mode: str = "arbitrary",
) -> GammaResult:
    """Worst Knill-Laflamme deviation over unit-norm d-local operators.

    ``paulis`` enumerates every Pauli string on every size-d support;
    ``sampled`` draws ``samples`` random unit-norm operators, each on a random support.
    """
    n = basis.n
    if d < 1:
        raise ValueError("need d >= 1")
    best, arg, count = 0.0, (), 0
    if source == "paulis":
        sups = local_supports(n, d, support_mode)
        if n * 3**d * comb(n, d) > ENUM_LIMIT:
            raise ValueError("exhaustive Pauli enumeration too large; use source='sampled'")
        ops = pauli_strings(d)
        pairs = [(op, sup) for sup in sups for op in ops]
    elif source == "sampled":
        rng = np.random.default_rng(seed)
        sups = local_supports(n, d, support_mode)
        ops = random_unit_operators(d, samples, rng, basis.p)
        pairs = [(op, sups[int(rng.integers(len(sups)))]) for op in ops]
    else:
        raise ValueError(f"unknown operator source {source!r}")
    if not pairs:
        raise ValueError("empty operator source")
    for op, sup in pairs:
        dev = float(kl_deviation(basis.elements(op, sup)).max())
        count += 1
        if dev > best:
            best, arg = dev, tuple(sup)
    return GammaResult(best, "enumerated-paulis" if source == "paulis" else "sampled", count, arg)


# ----------------------------------------------------------------- certificates


@dataclass(frozen=True)
class CodeCertificate:
    n: int
    k: float
    d: int
    K: int  # noqa: N815
    gamma: float
    delta: float
    epsilon: float
    method: str
    quantity: str = "gamma"

    def to_json(self) -> str:
        return json.dumps({"status": "certified", **asdict(self)}, indent=2, sort_keys=True)


@dataclass(frozen=True)
class Rejection:
    n: int
    d: int
    K: int  # noqa: N815
    gamma: float
    delta: float
    threshold: float
    reason: str

    def to_json(self) -> str:
        return json.dumps({"status": "rejected", **asdict(self)}, indent=2, sort_keys=True)


def certify(
    K: int, gamma: float, delta: float, p: int, n: int, d: int,  # noqa: N803
    method: str = "enumerated-paulis", quantity: str = "gamma",
) -> CodeCertificate | Rejection:
    """Sufficient condition: delta > K^5 q implies epsilon = K^5 q / delta.

    ``quantity='gamma'`` uses q = gamma^2 (operator-norm form); ``'eps_approx'``
    uses q = gamma as a channel-specific eps_approx.
    """
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    q = gamma**2 if quantity == "gamma" else gamma
    threshold = K**5 * q
    if not delta > threshold:
        return Rejection(n, d, K, gamma, delta, threshold, f"delta <= K^5 * {quantity} term")
    k = float(np.log(K) / np.log(p))
    return CodeCertificate(n, k, d, K, gamma, delta, threshold / delta, method, quantity)


# ------------------------------------------------------------------ refutation


@dataclass(frozen=True)
class RefutationRecord:
    region: tuple[int, ...]
    zeta: float
    excluded_epsilon_bound: float
    excluded_delta_bound: float
    rank1: int
    rank2: int
    trace_overlap: float

    @property
    def fires(self) -> bool:
        return self.excluded_epsilon_bound > 0 and self.excluded_delta_bound > 0 and self.zeta < 0.1

    def excludes(self, epsilon: float, delta: float) -> bool:
        return epsilon < self.excluded_epsilon_bound and delta < self.excluded_delta_bound

    def to_json(self) -> str:
        return json.dumps({**asdict(self), "fires": self.fires}, indent=2, sort_keys=True)


def zeta_record(region, rank1: int, rank2: int, tr12: float) -> RefutationRecord:
    zeta = max(rank1, rank2) ** 2 * tr12
    return RefutationRecord(tuple(region), zeta, 1 - 10 * zeta, (1 - zeta) ** 2 if zeta < 1 else 0.0,
                            rank1, rank2, tr12)


def necessary_check(psi1: np.ndarray, psi2: np.ndarray, region: Sequence[int], n: int, p: int = 2) -> RefutationRecord:
    """zeta = max(rank rho1, rank rho2)^2 tr(rho1 rho2) on ``region``."""
    psi1 = np.asarray(psi1, dtype=complex)
    psi2 = np.asarray(psi2, dtype=complex)
    for v in (psi1, psi2):
        if abs(np.linalg.norm(v) - 1) > 1e-8:
            raise ValueError("inputs must be normalized")
    if abs(np.vdot(psi1, psi2)) > 1e-8:
        raise ValueError("inputs must be orthogonal")
    region = sorted(set(int(s) % n for s in region))
    rest = [k for k in range(n) if k not in region]
    perm = region + rest

    def reduced(v):
        m = np.transpose(v.reshape((p,) * n), perm).reshape(p ** len(region), -1)
        return m @ m.conj().T

    rho1, rho2 = reduced(psi1), reduced(psi2)
    tr12 = float(np.trace(rho1 @ rho2).real)
    return zeta_record(region, numerical_rank(rho1, RANK_CUTOFF), numerical_rank(rho2, RANK_CUTOFF), tr12)


def consistent(cert: CodeCertificate, ref: RefutationRecord) -> bool:
    """False when the refutation excludes the certified pair at a region no larger than d."""
    if len(ref.region) > cert.d:
        return True
    return not ref.excludes(cert.epsilon, cert.delta)


# ------------------------------------------------------------- no-go experiment


def _block_products(a: MpsTensor, length: int) -> CArray:
    acc = np.broadcast_to(np.eye(a.D, dtype=complex), (1, a.D, a.D))
    for _ in range(length):
        acc = np.einsum("cab,ibd->ciad", acc, a.matrices).reshape(-1, a.D, a.D)
    return acc


def boundary_region_factors(a: MpsTensor, x: np.ndarray, n: int, delta: int) -> tuple[CArray, CArray]:
    """(Q, G) with rho_S = Q G Q^dag for S = first delta and last delta sites.

    Q[(i_L, i_R), (al, be)] = (R(i_R) X L(i_L))_{al be};
    G[(al, be), (al', be')] = sum_mid M_{be al} conj(M_{be' al'}).
    """
    if not 0 < 2 * delta <= n:
        raise ValueError("need 0 < 2*delta <= n")
    d = a.D
    blocks = _block_products(a, delta)
    q = np.einsum("rab,bc,lcd->lrad", blocks, np.asarray(x, dtype=complex), blocks)
    q = q.reshape(blocks.shape[0] ** 2, d * d)
    em = np.linalg.matrix_power(transfer_matrix(a), n - 2 * delta).reshape(d, d, d, d)
    g = np.transpose(em, (3, 1, 2, 0)).reshape(d * d, d * d)
    return q, g


def orthonormal_boundary_pair(a: MpsTensor, x: np.ndarray, y: np.ndarray, n: int) -> tuple[CArray, CArray]:
    """Gram-Schmidt of (X, Y) under <X, Y> = <Psi_X|Psi_Y>; states are linear in the boundary."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    nx = overlap(a, x, a, x, n).real
    if nx <= 1e-14:
        raise ValueError("boundary X yields a vanishing state")
    x = x / np.sqrt(nx)
    y = y - overlap(a, x, a, y, n) * x
    ny = overlap(a, y, a, y, n).real
    if ny <= 1e-14 * max(1.0, float(np.linalg.norm(y)) ** 2):
        raise ValueError("boundary pair is degenerate: Y is parallel to X in state space")
    return x, y / np.sqrt(ny)


@dataclass
class NogoRow:
    n: int
    delta: int
    trace_overlap: float
    control_purity: float
    rank_x: int
    rank_y: int
    zeta: float
    x_norm: float
    y_norm: float


@dataclass
class NogoResult:
    lambda2: float
    rows: list[NogoRow]
    rates: dict[int, float]
    rate_bound: float
    constant_region: int | None

    @property
    def passes(self) -> bool:
        return all(r <= self.rate_bound for r in self.rates.values())


def region_gram(a: MpsTensor, x: np.ndarray, y: np.ndarray, n: int, delta: int) -> tuple[CArray, CArray]:
    """(C, G) with C = Q_X^dag Q_Y built from E^delta, so the cost does not grow with delta."""
    if not 0 < 2 * delta <= n:
        raise ValueError("need 0 < 2*delta <= n")
    d = a.D
    e = transfer_matrix(a)
    e4 = np.linalg.matrix_power(e, delta).reshape(d, d, d, d)
    c = np.einsum("ab,cd,uvac,bdwz->uwvz", np.asarray(x, dtype=complex).conj(),
                  np.asarray(y, dtype=complex), e4, e4).reshape(d * d, d * d)
    em = np.linalg.matrix_power(e, n - 2 * delta).reshape(d, d, d, d)
    g = np.transpose(em, (3, 1, 2, 0)).reshape(d * d, d * d)
    return c, (g + g.conj().T) / 2


def _rank_from_gram(c: np.ndarray, sg: np.ndarray) -> int:
    # nonzero spectrum of rho = Q G Q^dag equals that of G^1/2 Q^dag Q G^1/2
    w = np.linalg.eigvalsh(sg @ ((c + c.conj().T) / 2) @ sg)
    top = float(np.max(np.abs(w))) if w.size else 0.0
    return int(np.sum(np.abs(w) > RANK_CUTOFF * top)) if top > 0 else 0


def region_quantities(a: MpsTensor, x: np.ndarray, y: np.ndarray, n: int, delta: int) -> tuple[float, float, int, int]:
    """(tr rho_X rho_Y, tr rho_X^2, rank rho_X, rank rho_Y) on the 2*delta boundary sites."""
    cxy, g = region_gram(a, x, y, n, delta)
    cxx, _ = region_gram(a, x, x, n, delta)
    cyy, _ = region_gram(a, y, y, n, delta)
    sg = hermitian_sqrt(g)
    tr = float(np.trace(g @ cxy @ g @ cxy.conj().T).real)
    purity = float(np.trace(g @ cxx @ g @ cxx).real)
    return tr, purity, _rank_from_gram(cxx, sg), _rank_from_gram(cyy, sg)


def nogo_experiment(
    a: MpsTensor, x: np.ndarray, y: np.ndarray, n_grid: Sequence[int], delta_grid: Sequence[int]
) -> NogoResult:
    """tr(rho_X rho_Y) on 2*Delta boundary-straddling sites and its decay rate in Delta.

    The pair (X, Y) is re-orthonormalized for every n.  The fitted rate (slope of
    log tr against Delta, over points above ``TRACE_FLOOR``) is compared with
    1/2 log lambda2 + 0.1.  ``constant_region`` is the smallest 2*Delta at which
    the refuter fires (zeta < 0.1) for every n of the grid.
    """
    rep = is_injective(a)
    if not rep:
        raise ValueError("tensor is not injective")
    a = normalize_spectral_radius(a)
    lam2 = rep.lambda2 / rep.spectral_radius
    rows: list[NogoRow] = []
    rates: dict[int, float] = {}
    for n in n_grid:
        xn, yn = orthonormal_boundary_pair(a, x, y, n)
        ds, logs = [], []
        for dl in delta_grid:
            if 2 * dl >= n:
                continue
            tr, purity, rx, ry = region_quantities(a, xn, yn, n, dl)
            zeta = max(rx, ry) ** 2 * tr
            rows.append(NogoRow(n, dl, tr, purity, rx, ry, zeta,
                                float(np.linalg.norm(xn)), float(np.linalg.norm(yn))))
            if tr > TRACE_FLOOR:
                ds.append(dl)
                logs.append(np.log(tr))
        if len(ds) >= 3:
            rates[n] = fit_linear(ds, logs)[0]
    constant = None
    for dl in sorted(set(delta_grid)):
        sel = [r for r in rows if r.delta == dl]
        if sel and len(sel) == len([n for n in n_grid if 2 * dl < n]) and all(r.zeta < 0.1 for r in sel):
            constant = 2 * dl
            break
    return NogoResult(lam2, rows, rates, 0.5 * np.log(lam2) + 0.1, constant)

