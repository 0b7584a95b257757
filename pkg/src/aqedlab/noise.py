"""Convex-combination d-local noise channels and code-projector detection rounds.

Detection statistics only need the K x K blocks <psi_a|F_j|psi_b> and
<psi_a|F_j^dag F_j|psi_b>, so they run on any ``CodeBasis`` (dense or transfer).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from itertools import combinations, product
from typing import Sequence

import numpy as np

from .aqedc import CodeBasis
from .linalg import PAULIS, CArray, apply_local, kron_all, operator_norm

MASS_FLOOR = 1e-14
MC_CHUNK = 10_000


@dataclass(frozen=True, eq=False)
class KrausTerm:
    weight: float
    op: CArray
    support: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class NoiseChannel:
    n: int
    d: int
    terms: tuple[KrausTerm, ...]
    p: int = 2

    def __post_init__(self) -> None:
        ws = np.array([t.weight for t in self.terms])
        if np.any(ws < 0):
            raise ValueError("weights must be nonnegative")
        if abs(ws.sum() - 1) > 1e-12:
            raise ValueError(f"weights sum to {ws.sum()!r}, not 1")
        for t in self.terms:
            if len(t.support) > self.d:
                raise ValueError(f"support {t.support} larger than d={self.d}")
            if any(s < 0 or s >= self.n for s in t.support):
                raise ValueError(f"support {t.support} out of range")
            if t.op.shape != (self.p ** len(t.support),) * 2:
                raise ValueError("Kraus operator does not match its support")
            if operator_norm(t.op) > 1 + 1e-10:
                raise ValueError("Kraus operator norm exceeds 1")

    def kraus(self) -> list[tuple[float, CArray, tuple[int, ...]]]:
        return [(t.weight, t.op, t.support) for t in self.terms]


def identity_channel(n: int) -> NoiseChannel:
    return NoiseChannel(n, 0, (KrausTerm(1.0, np.eye(1, dtype=complex), ()),))


def _supports(n: int, d: int, mode: str) -> list[tuple[int, ...]]:
    if mode == "connected":
        return [tuple((s + k) % n for k in range(d)) for s in range(n)] if d < n else [tuple(range(n))]
    if mode == "arbitrary":
        return list(combinations(range(n), d))
    raise ValueError(f"unknown support mode {mode!r}")


def _reduce(op_idx: Sequence[int], support: Sequence[int]) -> tuple[CArray, tuple[int, ...]]:
    keep = [(s, k) for s, k in zip(support, op_idx) if k != 0]
    return kron_all([PAULIS[k] for _, k in keep]), tuple(s for s, _ in keep)


def exhaustive_pauli_channel(
    n: int, d: int, include_identity: bool = False, support_mode: str = "arbitrary"
) -> NoiseChannel:
    """Uniform channel over every distinct nontrivial Pauli string of weight <= d."""
    if d > n:
        raise ValueError("d > n")
    if d == 0:
        return identity_channel(n)
    seen: dict[tuple, tuple[CArray, tuple[int, ...]]] = {}
    for sup in _supports(n, d, support_mode):
        for idx in product(range(4), repeat=d):
            if all(k == 0 for k in idx):
                continue
            op, red = _reduce(idx, sup)
            key = tuple(sorted(zip(red, [k for k in idx if k != 0])))
            seen.setdefault(key, (op, red))
    ops = [seen[k] for k in sorted(seen)]
    if include_identity:
        ops = [(np.eye(1, dtype=complex), ())] + ops
    w = 1.0 / len(ops)
    return NoiseChannel(n, d, tuple(KrausTerm(w, op, sup) for op, sup in ops))


def sample_pauli_channel(
    n: int, d: int, num_terms: int, seed: int, support_mode: str = "connected"
) -> NoiseChannel:
    """Uniform weights over ``num_terms`` sampled nontrivial Pauli strings of weight <= d."""
    if d > n:
        raise ValueError("d > n")
    if num_terms < 1:
        raise ValueError("num_terms must be positive")
    if d == 0:
        return identity_channel(n)
    rng = np.random.default_rng(seed)
    sups = _supports(n, d, support_mode)
    terms = []
    for _ in range(num_terms):
        sup = sups[int(rng.integers(len(sups)))]
        idx = [0] * d
        while all(k == 0 for k in idx):
            idx = [int(k) for k in rng.integers(0, 4, size=d)]
        op, red = _reduce(idx, sup)
        terms.append(KrausTerm(1.0 / num_terms, op, red))
    return NoiseChannel(n, d, tuple(terms))


def channel_completeness(channel: NoiseChannel) -> float:
    """Largest eigenvalue of sum_j w_j F_j^dag F_j (dense; small n)."""
    from .linalg import embed_operator

    n, p = channel.n, channel.p
    total = sum(t.weight * embed_operator(t.op.conj().T @ t.op, t.support, n, p) for t in channel.terms)
    return float(np.max(np.linalg.eigvalsh((total + total.conj().T) / 2)))


def apply_channel(channel: NoiseChannel, state: np.ndarray) -> list[tuple[float, CArray]]:
    """Ensemble (w_j ||F_j psi||^2, F_j psi / ||F_j psi||), dropping branches below MASS_FLOOR."""
    out = []
    for t in channel.terms:
        if any(s >= channel.n for s in t.support):
            raise ValueError("support index out of range")
        v = apply_local(state, t.op, t.support, channel.n, channel.p)
        nv = float(np.vdot(v, v).real)
        mass = t.weight * nv
        if mass > MASS_FLOOR:
            out.append((mass, v / np.sqrt(nv)))
    return out


# -------------------------------------------------------------- detection rounds


@dataclass(frozen=True)
class DetectionStats:
    trials: int
    acceptance_rate: float
    acceptance_stderr: float
    post_fidelity: float | None
    fidelity_stderr: float
    mass: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class ProjectedChannel:
    """Per-branch weight w_j, G_j = <a|F_j|b> and H_j = <a|F_j^dag F_j|b>."""

    weights: np.ndarray
    g: CArray
    h: CArray

    def branch_quantities(self, c: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(mass_j, accepted_j, fidelity numerator_j) for input coefficients c."""
        gc = self.g @ c
        mass = self.weights * np.einsum("a,jab,b->j", c.conj(), self.h, c).real
        acc = self.weights * np.sum(np.abs(gc) ** 2, axis=1)
        fid = self.weights * np.abs(gc @ c.conj()) ** 2
        return mass, acc, fid


def project_channel(basis: CodeBasis, channel: NoiseChannel) -> ProjectedChannel:
    ws, gs, hs = [], [], []
    for t in channel.terms:
        ws.append(t.weight)
        gs.append(basis.elements(t.op, t.support))
        hs.append(basis.elements(t.op.conj().T @ t.op, t.support))
    return ProjectedChannel(np.array(ws), np.array(gs), np.array(hs))


def _coefficients(basis: CodeBasis, state: np.ndarray) -> CArray:
    state = np.asarray(state, dtype=complex)
    if state.shape == (basis.K,):
        c = state
    else:
        if basis.states is None:
            raise ValueError("dense input needs a dense basis")
        c = basis.states.conj() @ state
        if np.linalg.norm(basis.states.T @ c - state) > 1e-8:
            raise ValueError("input state is not in the code space")
    if abs(np.linalg.norm(c) - 1) > 1e-8:
        raise ValueError("input state must be normalized")
    return c


def detection_round(basis: CodeBasis, channel: NoiseChannel | ProjectedChannel, state: np.ndarray) -> DetectionStats:
    """Exact acceptance tr(P N(psi)) and fidelity <psi|rho_{N,P}|psi>, conditioned on branch mass."""
    c = _coefficients(basis, state)
    pc = channel if isinstance(channel, ProjectedChannel) else project_channel(basis, channel)
    mass, acc, fid = pc.branch_quantities(c)
    total = float(mass.sum())
    acceptance = float(acc.sum()) / total if total > 0 else 0.0
    fidelity = float(fid.sum() / acc.sum()) if acceptance >= MASS_FLOOR else None
    return DetectionStats(0, acceptance, 0.0, fidelity, 0.0, total)


def detection_round_dense(basis: CodeBasis, channel: NoiseChannel, state: np.ndarray) -> DetectionStats:
    """Same quantities from the explicit branch ensemble and the dense code projector."""
    if basis.states is None:
        raise ValueError("dense basis required")
    psi = basis.states.T @ _coefficients(basis, state)
    ens = apply_channel(channel, psi)
    total = sum(m for m, _ in ens)
    acc = fid = 0.0
    for m, v in ens:
        proj = basis.states.T @ (basis.states.conj() @ v)
        acc += m * float(np.vdot(proj, proj).real)
        fid += m * abs(np.vdot(psi, proj)) ** 2
    acceptance = acc / total if total > 0 else 0.0
    return DetectionStats(0, acceptance, 0.0, float(fid / acc) if acceptance >= MASS_FLOOR else None, 0.0, float(total))


def monte_carlo_detect(
    basis: CodeBasis,
    channel: NoiseChannel | ProjectedChannel,
    trials: int,
    seed: int,
    state: np.ndarray | None = None,
) -> DetectionStats:
    """Sample a Kraus branch by mass, then the two-outcome measurement {P, I-P}.

    Accepted trials record the fidelity of the post-measurement state with the
    input.  Trials run in fixed chunks of MC_CHUNK, each with its own generator
    spawned from ``seed``, so results do not depend on scheduling.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    if state is None:
        state = np.eye(basis.K, dtype=complex)[0]
    c = _coefficients(basis, state)
    pc = channel if isinstance(channel, ProjectedChannel) else project_channel(basis, channel)
    mass, acc, fid = pc.branch_quantities(c)
    total = float(mass.sum())
    probs = mass / total
    p_acc = np.divide(acc, mass, out=np.zeros_like(acc), where=mass > 0)
    f_acc = np.divide(fid, acc, out=np.zeros_like(fid), where=acc > 0)
    chunks = [MC_CHUNK] * (trials // MC_CHUNK) + ([trials % MC_CHUNK] if trials % MC_CHUNK else [])
    gens = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(len(chunks))]
    accepted = 0
    fids: list[np.ndarray] = []
    for size, rng in zip(chunks, gens):
        branch = rng.choice(len(probs), size=size, p=probs)
        ok = rng.random(size) < np.clip(p_acc[branch], 0, 1)
        accepted += int(ok.sum())
        fids.append(f_acc[branch[ok]])
    fv = np.concatenate(fids) if fids else np.zeros(0)
    a = accepted / trials
    a_se = float(np.sqrt(max(a * (1 - a), 0) / trials))
    if accepted == 0:
        return DetectionStats(trials, a, a_se, None, 0.0, total)
    f_se = float(fv.std(ddof=1) / np.sqrt(accepted)) if accepted > 1 else 0.0
    return DetectionStats(trials, a, a_se, float(fv.mean()), f_se, total)


def haar_code_state(K: int, seed: int) -> CArray:  # noqa: N803
    rng = np.random.default_rng(seed)
    c = rng.normal(size=K) + 1j * rng.normal(size=K)
    return c / np.linalg.norm(c)
