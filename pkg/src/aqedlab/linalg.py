"""Dense complex linear algebra primitives.

Vectorization convention: ``|X>> = sum_{ab} X_ab |b> (x) |a>``, i.e. column-major
flattening.  With it ``kron(conj(A), A) |X>> = |A X A^dagger>>`` and
``<<X|Y>> = tr(X^dagger Y)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

CArray = NDArray[np.complex128]

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (PAULI_I, PAULI_X, PAULI_Y, PAULI_Z)


def kron(a: np.ndarray, b: np.ndarray) -> CArray:
    """Kronecker product in lexicographic block order."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def kron_all(ops: Sequence[np.ndarray]) -> CArray:
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = np.kron(out, op)
    return out


def vectorize(x: np.ndarray) -> CArray:
    return np.asarray(x, dtype=complex).reshape(-1, order="F")


def devectorize(v: np.ndarray, shape: tuple[int, int] | None = None) -> CArray:
    v = np.asarray(v, dtype=complex)
    if shape is None:
        d = int(round(np.sqrt(v.size)))
        if d * d != v.size:
            raise ValueError(f"vector of length {v.size} is not a square operator")
        shape = (d, d)
    return v.reshape(shape, order="F")


def partial_trace(rho: np.ndarray, local_dims: Sequence[int], keep: Sequence[int]) -> CArray:
    """Trace out every site not listed in ``keep``.

    The result is expressed in the lexicographic basis of the kept sites, taken
    in increasing site order.
    """
    rho = np.asarray(rho, dtype=complex)
    dims = [int(d) for d in local_dims]
    total = int(np.prod(dims)) if dims else 1
    if rho.shape != (total, total):
        raise ValueError(f"operator shape {rho.shape} does not match local dims {dims}")
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise ValueError(f"keep={keep} out of range for {len(dims)} sites")
    n = len(dims)
    t = rho.reshape(dims + dims)
    drop = [k for k in range(n) if k not in keep]
    # trace from the highest index down so axis positions stay valid
    cur = n
    for k in reversed(drop):
        t = np.trace(t, axis1=k, axis2=k + cur)
        cur -= 1
    kd = int(np.prod([dims[k] for k in keep])) if keep else 1
    return t.reshape(kd, kd)


def apply_local(
    psi: np.ndarray, op: np.ndarray, support: Sequence[int], n: int, p: int = 2
) -> CArray:
    """Apply an operator acting on ``support`` (in the given order) to a dense state."""
    support = [int(s) % n for s in support]
    d = len(support)
    if len(set(support)) != d:
        raise ValueError(f"support {support} has repeated sites")
    if d == 0:
        return np.asarray(psi, dtype=complex) * complex(np.asarray(op).reshape(-1)[0])
    op = np.asarray(op, dtype=complex).reshape((p,) * (2 * d))
    t = np.asarray(psi, dtype=complex).reshape((p,) * n)
    out = np.tensordot(op, t, axes=(list(range(d, 2 * d)), support))
    # tensordot puts the operator output legs first; move them back in place
    out = np.moveaxis(out, list(range(d)), support)
    return out.reshape(-1)


def embed_operator(op: np.ndarray, support: Sequence[int], n: int, p: int = 2) -> CArray:
    """Dense p^n x p^n matrix of a local operator (small n only)."""
    dim = p**n
    eye = np.eye(dim, dtype=complex)
    cols = [apply_local(eye[:, k], op, support, n, p) for k in range(dim)]
    return np.stack(cols, axis=1)


def operator_norm(op: np.ndarray) -> float:
    op = np.asarray(op, dtype=complex)
    if op.size == 0:
        return 0.0
    return float(np.linalg.norm(op, 2))


def hermitian_sqrt(h: np.ndarray) -> CArray:
    w, v = np.linalg.eigh((h + h.conj().T) / 2)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def numerical_rank(m: np.ndarray, rel_tol: float) -> int:
    s = np.linalg.svd(np.asarray(m, dtype=complex), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))


@dataclass(frozen=True)
class JordanProfile:
    """Per-eigenvalue Jordan block partition.

    ``clusters`` holds ``(eigenvalue, block_sizes)`` pairs, block sizes sorted
    in decreasing order.
    """

    clusters: list[tuple[complex, list[int]]]
    warnings: list[str] = field(default_factory=list)

    @property
    def dimension(self) -> int:
        return sum(sum(b) for _, b in self.clusters)

    @property
    def h_star(self) -> int:
        return max((b[0] for _, b in self.clusters if b), default=0)

    def multiplicity(self, value: complex, tol: float = 1e-7) -> int:
        return sum(sum(b) for lam, b in self.clusters if abs(lam - value) <= tol)

    def largest_block(self, value: complex, tol: float = 1e-7) -> int:
        sizes = [b[0] for lam, b in self.clusters if abs(lam - value) <= tol and b]
        return max(sizes, default=0)


def _is_triangular(m: np.ndarray) -> bool:
    return bool(np.all(np.tril(m, -1) == 0) or np.all(np.triu(m, 1) == 0))


def eigenvalues(m: np.ndarray) -> CArray:
    """Eigenvalues; exact diagonal read-off for triangular input."""
    m = np.asarray(m, dtype=complex)
    if _is_triangular(m):
        return np.diag(m).copy()
    return np.linalg.eigvals(m)


def _cluster(vals: np.ndarray, tol: float, seeds: Sequence[complex] | None) -> list[list[int]]:
    if seeds is not None:
        seeds = np.asarray(list(seeds), dtype=complex)
        groups: dict[int, list[int]] = {}
        for i, v in enumerate(vals):
            k = int(np.argmin(np.abs(seeds - v)))
            if abs(seeds[k] - v) > tol:
                raise ValueError(f"eigenvalue {v} is not within {tol:g} of any seed")
            groups.setdefault(k, []).append(i)
        return [groups[k] for k in sorted(groups)]
    # single-linkage clustering via union-find on the pairwise distance graph
    parent = list(range(len(vals)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(vals)):
        for j in range(i + 1, len(vals)):
            if abs(vals[i] - vals[j]) <= tol:
                parent[find(i)] = find(j)
    out: dict[int, list[int]] = {}
    for i in range(len(vals)):
        out.setdefault(find(i), []).append(i)
    return list(out.values())


def _rank_chain(shifted: np.ndarray, mult: int, rank_tol: float) -> list[int]:
    """[rank(S^0), rank(S^1), ...] via nested kernels ker S^{k+1} = {x : S x in ker S^k}.

    Each step is one SVD of a matrix with norm <= ||S||, so the cutoff
    ``rank_tol * ||S||`` keeps its meaning for every k; explicit powers S^k
    would mix in other eigenvalues at scale ||S||^k.
    """
    dim = shifted.shape[0]
    scale = float(np.linalg.norm(shifted, 2)) or 1.0
    ranks = [dim]
    kernel = np.zeros((dim, 0), dtype=complex)
    while len(ranks) <= mult:
        # complement of the current kernel, then null space of (I - KK^dag) S
        proj = np.eye(dim, dtype=complex) - kernel @ kernel.conj().T
        _, s, vh = np.linalg.svd(proj @ shifted)
        null = int(np.sum(s <= rank_tol * scale)) + (dim - s.size)
        kernel = vh[dim - null:].conj().T if null else np.zeros((dim, 0), dtype=complex)
        ranks.append(dim - null)
        if ranks[-1] <= dim - mult or ranks[-1] == ranks[-2]:
            break
    return ranks


def jordan_profile(
    m: np.ndarray,
    cluster_tol: float | None = None,
    rank_tol: float = 1e-9,
    seeds: Sequence[complex] | None = None,
) -> JordanProfile:
    """Recover the Jordan block structure from rank chains.

    Eigenvalues within ``cluster_tol`` (default ``1e-7 * ||m||_inf``) are merged,
    or assigned to the nearest of ``seeds`` when these are supplied.  For each
    cluster with value lam and algebraic multiplicity a, the ranks
    r_k = rank((m - lam I)^k) are computed by SVD with relative cutoff
    ``rank_tol`` and the number of blocks of size >= k is r_{k-1} - r_k.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("jordan_profile needs a square matrix")
    dim = m.shape[0]
    if dim == 0:
        return JordanProfile([])
    scale = float(np.linalg.norm(m, np.inf)) or 1.0
    tol = 1e-7 * scale if cluster_tol is None else cluster_tol
    vals = eigenvalues(m)
    groups = _cluster(vals, tol, seeds)
    warnings: list[str] = []
    clusters: list[tuple[complex, list[int]]] = []
    reps = [complex(np.mean(vals[g])) for g in groups]
    if seeds is not None:
        seed_arr = np.asarray(list(seeds), dtype=complex)
        reps = [complex(seed_arr[int(np.argmin(np.abs(seed_arr - vals[g[0]])))]) for g in groups]
    for i in range(len(reps)):
        for j in range(i + 1, len(reps)):
            if abs(reps[i] - reps[j]) <= 10 * tol:
                warnings.append(f"clusters {reps[i]:.3g} and {reps[j]:.3g} closer than 10x tolerance")
    eye = np.eye(dim, dtype=complex)
    for lam, g in zip(reps, groups):
        a = len(g)
        ranks = _rank_chain(m - lam * eye, a, rank_tol)
        # at least[k-1] = number of blocks of size >= k
        at_least = [ranks[k - 1] - ranks[k] for k in range(1, len(ranks))]
        sizes: list[int] = []
        for k, cnt in enumerate(at_least, start=1):
            nxt = at_least[k] if k < len(at_least) else 0
            sizes.extend([k] * max(cnt - nxt, 0))
        if sum(sizes) != a:
            warnings.append(f"rank chain at {lam:.3g} gives {sum(sizes)} != multiplicity {a}")
        clusters.append((lam, sorted(sizes, reverse=True)))
    return JordanProfile(clusters, warnings)


def matrix_power_norms(m: np.ndarray, powers: Sequence[int]) -> list[tuple[float, float]]:
    """(operator norm, Frobenius norm) of m^k for each k."""
    m = np.asarray(m, dtype=complex)
    out = []
    for k in powers:
        mk = np.linalg.matrix_power(m, int(k))
        out.append((float(np.linalg.norm(mk, 2)), float(np.linalg.norm(mk, "fro"))))
    return out


def jordan_block(lam: complex, h: int) -> CArray:
    return lam * np.eye(h, dtype=complex) + np.eye(h, k=1, dtype=complex)


def jordan_power_bound(lam: complex, h: int, m: int) -> float:
    """Upper bound 3 h^{3/2} m^{h-1} |lam|^{m-h+1} on ||(lam I + N)^m||_F."""
    return 3.0 * h**1.5 * float(m) ** (h - 1) * abs(lam) ** (m - h + 1)


def fit_loglog(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    """OLS slope, intercept and r^2 of log y against log x."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    return fit_linear(lx, ly)


def fit_linear(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    a = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2
