"""Experiment runner: ``aqedlab <experiment> [--config c.json] [--out dir] [--seed s] [--threads k]``.

Configs are flat JSON objects (scalars or lists of scalars).  Every run writes
``<experiment>.csv`` and ``manifest.json`` to the output directory.  CSV bodies
are a pure function of the config; timestamps and versions live in the manifest.

Exit status: 0 success, 1 invariant violation, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .aqedc import certify, eps_approx, kl_gamma, magnon_basis, nogo_experiment
from .excitation import c_constant, excitation_norm2, make_family, momentum
from .fit import FitError, fit_exponent
from .io import config_hash, csv_text
from .linalg import eigenvalues
from .magnon import magnon_scaling_experiment, magnon_transfer, omega
from .mps import MpsTensor, random_injective_mps
from .noise import (
    detection_round,
    exhaustive_pauli_channel,
    haar_code_state,
    monte_carlo_detect,
    project_channel,
    sample_pauli_channel,
)

__all__ = ["main", "run", "fit_exponent", "ConfigError", "DEFAULTS"]

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, dict[str, Any]] = {
    "spectrum": {"r": [0], "s": [0], "n_grid": [4], "cluster_tol": 1e-7},
    "magnon-scan": {
        "r": 0, "s": 2, "d": 2, "n_grid": [32, 64, 128, 256], "samples": 64, "s0": None,
        "expected_slope": None, "slope_tol": 0.15,
    },
    "excitation-scan": {
        "D": 2, "phys": 2, "families": 5, "n_grid": [8, 10, 12], "ks": [1], "residual_tol": 1e-9,
    },
    "nogo": {
        "D": [2, 3], "instances": 10, "n_grid": [96, 128, 256], "delta_grid": list(range(1, 48)),
    },
    "certify": {
        "n": 128, "magnetizations": [0, 2], "d": 1, "delta": 0.5, "representation": "transfer",
        "source": "paulis", "quantity": "gamma", "support_mode": "connected", "samples": 64,
    },
    "noise-sim": {
        "n": 10, "magnetizations": [0, 2], "d": 1, "channel": "exhaustive", "num_terms": 32,
        "support_mode": "connected", "trials": 100_000, "states": 4, "delta": 0.5,
        "representation": "dense",
    },
}


@dataclass
class Outcome:
    header: list[str]
    rows: list[list[Any]]
    summary: dict[str, Any]
    violations: list[str]
    extra_files: dict[str, str]


# ---------------------------------------------------------------- config


def _as_list(v: Any, name: str) -> list:
    out = v if isinstance(v, list) else [v]
    if not out:
        raise ConfigError(f"{name} must be non-empty")
    return out


def load_config(experiment: str, path: str | None, seed: int | None) -> dict[str, Any]:
    if experiment not in DEFAULTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    cfg: dict[str, Any] = {}
    if path is not None:
        try:
            cfg = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    if cfg.get("experiment", experiment) != experiment:
        raise ConfigError(f"config is for {cfg['experiment']!r}, not {experiment!r}")
    for k, v in cfg.items():
        if isinstance(v, dict) or (isinstance(v, list) and any(isinstance(x, (dict, list)) for x in v)):
            raise ConfigError(f"config must be flat; key {k!r} is nested")
    allowed = set(DEFAULTS[experiment]) | {"experiment", "seed"}
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    merged = {**DEFAULTS[experiment], **cfg, "experiment": experiment}
    if seed is not None:
        merged["seed"] = int(seed)
    merged.setdefault("seed", 0)
    if "n_grid" in merged:
        merged["n_grid"] = [int(n) for n in _as_list(merged["n_grid"], "n_grid")]
    if "delta_grid" in merged:
        merged["delta_grid"] = [int(n) for n in _as_list(merged["delta_grid"], "delta_grid")]
    return merged


def thread_count(flag: int | None) -> int:
    if flag is not None:
        return max(1, flag)
    env = os.environ.get("AQEDC_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"AQEDC_THREADS={env!r} is not an integer") from exc
    return 1


def _ordered_map(fn: Callable, items: Sequence, threads: int) -> list:
    """Map in grid order regardless of completion order."""
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ------------------------------------------------------------ experiments


def _spectrum(cfg: dict[str, Any], threads: int) -> Outcome:
    tol = float(cfg["cluster_tol"])
    grid = [(r, s, n) for r in _as_list(cfg["r"], "r") for s in _as_list(cfg["s"], "s") for n in cfg["n_grid"]]

    def job(item):
        r, s, n = item
        t = magnon_transfer(int(r), int(s), int(n))
        return item, eigenvalues(t.matrix), t.jordan

    rows, violations, profiles = [], [], []
    for (r, s, n), vals, prof in _ordered_map(job, grid, threads):
        w = omega(n)
        m = (r + 1) * (s + 1)
        mult = {"1": prof.multiplicity(1.0, tol), "omega": prof.multiplicity(w, tol), "omega_bar": prof.multiplicity(np.conj(w), tol)}
        blocks = prof.h_star
        profiles.append({"n": n, "r": r, "s": s, "multiplicities": mult, "h_star": blocks,
                         "clusters": [[[c.real, c.imag], b] for c, b in prof.clusters]})
        if mult != {"1": 2 * m, "omega": m, "omega_bar": m} and n > 2:
            violations.append(f"n={n} r={r} s={s}: multiplicities {mult}")
        if blocks > min(r, s) + 2:
            violations.append(f"n={n} r={r} s={s}: Jordan block {blocks} > {min(r, s) + 2}")
        for v in sorted(vals, key=lambda z: (round(z.real, 12), round(z.imag, 12))):
            rows.append([n, r, s, float(v.real) + 0.0, float(v.imag) + 0.0])
    return Outcome(["n", "r", "s", "eig_re", "eig_im"], rows, {"profiles": profiles}, violations, {})


def _magnon_scan(cfg: dict[str, Any], threads: int) -> Outcome:
    res = magnon_scaling_experiment(int(cfg["r"]), int(cfg["s"]), int(cfg["d"]), cfg["n_grid"],
                                    seed=int(cfg["seed"]), samples=int(cfg["samples"]), s0=cfg["s0"])
    rows = [list(r) for r in res.rows()]
    summary = {
        "offdiag_fit": res.offdiag_fit.to_dict() if res.offdiag_fit else None,
        "diag_fit": res.diag_fit.to_dict() if res.diag_fit else None,
        "notes": res.notes,
    }
    violations = []
    if cfg["expected_slope"] is not None:
        if res.offdiag_fit is None:
            violations.append("expected an off-diagonal slope but the group has no fit")
        elif abs(res.offdiag_fit.slope - float(cfg["expected_slope"])) > float(cfg["slope_tol"]):
            violations.append(f"slope {res.offdiag_fit.slope:.4f} outside {cfg['expected_slope']} +- {cfg['slope_tol']}")
    return Outcome(["n", "r", "s", "d", "seed", "abs_value", "fit_group"], rows, summary, violations, {})


def _excitation_scan(cfg: dict[str, Any], threads: int) -> Outcome:
    seed, dim, phys = int(cfg["seed"]), int(cfg["D"]), int(cfg["phys"])
    ss = np.random.SeedSequence(seed).spawn(int(cfg["families"]))
    items = [(i, n, s) for i, s in enumerate(ss) for n in cfg["n_grid"]]

    def job(item):
        i, n, sq = item
        rng = np.random.default_rng(sq)
        a = random_injective_mps(phys, dim, rng)
        b = MpsTensor(rng.normal(size=(phys, dim, dim)) + 1j * rng.normal(size=(phys, dim, dim)))
        ks = sorted({int(k) % n for k in cfg["ks"]} - {0})
        fam = make_family(a, b, n, ks)
        out = []
        for k in ks:
            p = momentum(k, n)
            r1, r2 = fam.residuals()[k]
            cp = c_constant(fam, p, p).real
            nrm = np.sqrt(excitation_norm2(fam, p))
            dev = abs(nrm - np.sqrt(n * cp)) / np.sqrt(n * cp)
            bound = 10 * n * fam.lambda2 ** (n / 6)
            out.append([i, n, k, max(r1, r2), dev, bound, fam.lambda2])
        return out

    rows = [r for chunk in _ordered_map(job, items, threads) for r in chunk]
    tol = float(cfg["residual_tol"])
    violations = [f"family {r[0]} n={r[1]} k={r[2]}: residual {r[3]:.3g}" for r in rows if r[3] >= tol]
    violations += [f"family {r[0]} n={r[1]} k={r[2]}: norm deviation {r[4]:.3g} > {r[5]:.3g}" for r in rows if r[4] > r[5]]
    return Outcome(["family", "n", "k", "gauge_residual", "norm_deviation", "norm_bound", "lambda2"],
                   rows, {"families": int(cfg["families"])}, violations, {})


def _nogo(cfg: dict[str, Any], threads: int) -> Outcome:
    dims = [int(x) for x in _as_list(cfg["D"], "D")]
    count = int(cfg["instances"])
    ss = np.random.SeedSequence(int(cfg["seed"])).spawn(count)

    def job(i):
        rng = np.random.default_rng(ss[i])
        dim = dims[i % len(dims)]
        a = random_injective_mps(2, dim, rng)
        x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        y = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        return i, dim, nogo_experiment(a, x, y, cfg["n_grid"], cfg["delta_grid"])

    rows, violations, instances = [], [], []
    for i, dim, res in _ordered_map(job, list(range(count)), threads):
        instances.append({"instance": i, "D": dim, "lambda2": res.lambda2, "rate_bound": res.rate_bound,
                          "rates": {str(k): v for k, v in res.rates.items()}, "constant_region": res.constant_region})
        for r in res.rows:
            rows.append([i, dim, r.n, r.delta, r.trace_overlap, r.rank_x, r.rank_y, r.zeta])
        if not res.rates:
            violations.append(f"instance {i}: no decay rate could be fitted")
        if not res.passes:
            violations.append(f"instance {i}: rates {res.rates} exceed {res.rate_bound:.4f}")
        if res.constant_region is None:
            violations.append(f"instance {i}: refuter never fires on the grid")
    return Outcome(["instance", "D", "n", "delta", "trace_overlap", "rank_x", "rank_y", "zeta"],
                   rows, {"instances": instances}, violations, {})


def _certify(cfg: dict[str, Any], threads: int) -> Outcome:
    n, d = int(cfg["n"]), int(cfg["d"])
    basis = magnon_basis(n, [int(s) for s in cfg["magnetizations"]], cfg["representation"])
    basis.check_orthonormal()
    if cfg["quantity"] == "gamma":
        g = kl_gamma(basis, d, cfg["source"], int(cfg["seed"]), int(cfg["samples"]), cfg["support_mode"])
        value, method = g.gamma, g.method
    elif cfg["quantity"] == "eps_approx":
        ch = exhaustive_pauli_channel(n, d, support_mode=cfg["support_mode"])
        value, method = eps_approx(basis, ch.kraus()), "eps_approx-exhaustive-paulis"
    else:
        raise ConfigError(f"unknown quantity {cfg['quantity']!r}")
    rec = certify(basis.K, value, float(cfg["delta"]), 2, n, d, method, cfg["quantity"])
    status = "certified" if hasattr(rec, "epsilon") else "rejected"
    eps = getattr(rec, "epsilon", None)
    rows = [[n, d, basis.K, value, float(cfg["delta"]), eps, status]]
    return Outcome(["n", "d", "K", "kl_value", "delta", "epsilon", "status"], rows,
                   {"status": status}, [], {"certificate.json": rec.to_json()})


def _noise_sim(cfg: dict[str, Any], threads: int) -> Outcome:
    n, d, seed = int(cfg["n"]), int(cfg["d"]), int(cfg["seed"])
    basis = magnon_basis(n, [int(s) for s in cfg["magnetizations"]], cfg["representation"])
    if cfg["channel"] == "exhaustive":
        ch = exhaustive_pauli_channel(n, d, support_mode=cfg["support_mode"])
    elif cfg["channel"] == "sampled":
        ch = sample_pauli_channel(n, d, int(cfg["num_terms"]), seed, cfg["support_mode"])
    else:
        raise ConfigError(f"unknown channel {cfg['channel']!r}")
    pc = project_channel(basis, ch)
    ea = eps_approx(basis, ch.kraus())
    bound = basis.K**5 * ea
    seeds = np.random.SeedSequence(seed).generate_state(int(cfg["states"]))

    def job(i):
        c = haar_code_state(basis.K, int(seeds[i]))
        exact = detection_round(basis, pc, c)
        mc = monte_carlo_detect(basis, pc, int(cfg["trials"]), int(seeds[i]) + 1, c)
        return i, exact, mc

    rows, violations = [], []
    for i, exact, mc in _ordered_map(job, list(range(int(cfg["states"]))), threads):
        rows.append([i, exact.acceptance_rate, mc.acceptance_rate, mc.acceptance_stderr,
                     exact.post_fidelity, mc.post_fidelity, mc.fidelity_stderr])
        # sufficient-condition contract: (1 - F) * acceptance <= K^5 eps_approx
        if exact.post_fidelity is not None and (1 - exact.post_fidelity) * exact.acceptance_rate > bound + 1e-12:
            violations.append(f"state {i}: (1-F)*acc exceeds K^5 eps_approx = {bound:.4g}")
    summary = {"eps_approx": ea, "k5_eps_approx": bound, "terms": len(ch.terms)}
    return Outcome(["state", "acceptance_exact", "acceptance_mc", "acceptance_stderr",
                    "fidelity_exact", "fidelity_mc", "fidelity_stderr"], rows, summary, violations, {})


EXPERIMENTS: dict[str, Callable[[dict[str, Any], int], Outcome]] = {
    "spectrum": _spectrum,
    "magnon-scan": _magnon_scan,
    "excitation-scan": _excitation_scan,
    "nogo": _nogo,
    "certify": _certify,
    "noise-sim": _noise_sim,
}


# ------------------------------------------------------------------ runner


def _jsonable(v: Any) -> Any:
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


def run(cfg: dict[str, Any], out: Path, threads: int = 1) -> int:
    """Execute a merged config, write CSV + manifest, return the exit status."""
    experiment = cfg["experiment"]
    chash = config_hash(cfg)
    t0 = time.perf_counter()
    outcome = EXPERIMENTS[experiment](cfg, threads)
    wall = time.perf_counter() - t0
    out.mkdir(parents=True, exist_ok=True)
    if "seed" in outcome.header:
        header = outcome.header + ["config_hash"]
        rows = [r + [chash] for r in outcome.rows]
    else:
        header = outcome.header + ["seed", "config_hash"]
        rows = [r + [int(cfg["seed"]), chash] for r in outcome.rows]
    (out / f"{experiment}.csv").write_text(csv_text(header, rows))
    for name, text in outcome.extra_files.items():
        (out / name).write_text(text)
    manifest = {
        "experiment": experiment,
        "config": cfg,
        "config_hash": chash,
        "seed": cfg["seed"],
        "threads": threads,
        "wall_time_s": wall,
        "versions": {"aqedlab": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "summary": outcome.summary,
        "violations": outcome.violations,
        "status": "ok" if not outcome.violations else "invariant-violation",
    }
    (out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True))
    for v in outcome.violations:
        print(f"invariant violation: {v}", file=sys.stderr)
    return EXIT_OK if not outcome.violations else EXIT_INVARIANT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aqedlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"aqedlab {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat JSON config; missing keys take defaults")
        p.add_argument("--out", default=f"runs/{name}", help="output directory")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--threads", type=int, help="worker threads (default: AQEDC_THREADS or 1)")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        cfg = load_config(args.experiment, args.config, args.seed)
        threads = thread_count(args.threads)
        return run(cfg, Path(args.out), threads)
    except (ConfigError, FitError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
