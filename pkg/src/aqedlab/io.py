"""Serialization: MPS/MPO tensors, excitation families, noise channels, experiment CSVs.

Tensor files are a header/payload hybrid.  The first line is a JSON header
``{"format": "aqedlab-tensor", "p": .., "D": .., "role": "mps"|"mpo", "shape": [..]}``.
In binary mode the rest of the file is the row-major array as little-endian
complex128 (``<c16``, real/imaginary pairs of 64-bit floats).  In JSON mode the
header carries a ``"data"`` list of ``[re, im]`` pairs instead.
"""

from __future__ import annotations

import base64
import csv
import hashlib
import io
import json
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .excitation import ExcitationFamily, momentum
from .mps import MpoTensor, MpsTensor
from .noise import KrausTerm, NoiseChannel

TENSOR_FORMAT = "aqedlab-tensor"
LE_COMPLEX = np.dtype("<c16")


def _header(t: MpsTensor | MpoTensor) -> dict[str, Any]:
    role = "mps" if isinstance(t, MpsTensor) else "mpo"
    m = t.matrices
    return {"format": TENSOR_FORMAT, "p": int(m.shape[0]), "D": int(m.shape[-1]), "role": role, "shape": list(m.shape)}


def tensor_to_bytes(t: MpsTensor | MpoTensor) -> bytes:
    head = json.dumps(_header(t), sort_keys=True).encode() + b"\n"
    return head + np.ascontiguousarray(t.matrices, dtype=LE_COMPLEX).tobytes(order="C")


def tensor_to_json(t: MpsTensor | MpoTensor) -> str:
    flat = np.ascontiguousarray(t.matrices).reshape(-1)
    return json.dumps({**_header(t), "data": [[float(z.real), float(z.imag)] for z in flat]}, sort_keys=True)


def _build(head: dict[str, Any], arr: np.ndarray) -> MpsTensor | MpoTensor:
    if head.get("format") != TENSOR_FORMAT:
        raise ValueError("not an aqedlab tensor")
    arr = arr.reshape(head["shape"]).astype(complex)
    if head["role"] == "mps":
        return MpsTensor(arr)
    if head["role"] == "mpo":
        return MpoTensor(arr)
    raise ValueError(f"unknown tensor role {head['role']!r}")


def tensor_from_bytes(raw: bytes) -> MpsTensor | MpoTensor:
    line, _, payload = raw.partition(b"\n")
    head = json.loads(line)
    expected = int(np.prod(head["shape"])) * LE_COMPLEX.itemsize
    if len(payload) != expected:
        raise ValueError(f"payload has {len(payload)} bytes, expected {expected}")
    return _build(head, np.frombuffer(payload, dtype=LE_COMPLEX))


def tensor_from_json(text: str) -> MpsTensor | MpoTensor:
    head = json.loads(text)
    data = np.array(head.pop("data"), dtype=float)
    return _build(head, data[:, 0] + 1j * data[:, 1])


def save_tensor(t: MpsTensor | MpoTensor, path: str | Path, mode: str = "binary") -> None:
    path = Path(path)
    if mode == "binary":
        path.write_bytes(tensor_to_bytes(t))
    elif mode == "json":
        path.write_text(tensor_to_json(t))
    else:
        raise ValueError(f"unknown mode {mode!r}")


def load_tensor(path: str | Path) -> MpsTensor | MpoTensor:
    raw = Path(path).read_bytes()
    if b"\n" in raw and b'"data"' not in raw.partition(b"\n")[0]:
        return tensor_from_bytes(raw)
    return tensor_from_json(raw.decode())


# --------------------------------------------------------------- families


def save_family(fam: ExcitationFamily, directory: str | Path) -> Path:
    """Write A, every B(p) and a manifest (n, momenta, gauge residuals)."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    save_tensor(fam.a, out / "A.tensor")
    res = fam.residuals()
    entries = []
    for k in sorted(fam.b_of_k):
        name = f"B_{k}.tensor"
        save_tensor(fam.b_of_k[k], out / name)
        entries.append({"k": k, "p": momentum(k, fam.n), "file": name, "residuals": list(res[k])})
    manifest = {"n": fam.n, "lambda2": fam.lambda2, "momenta": entries, "A": "A.tensor"}
    path = out / "family.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_family(directory: str | Path) -> ExcitationFamily:
    """Rebuild a saved family; A is stored canonical and every B(p) already gauge fixed."""
    from .excitation import _left_fixed
    from .mps import transfer_op

    d = Path(directory)
    manifest = json.loads((d / "family.json").read_text())
    a = load_tensor(d / manifest["A"])
    bs = {int(e["k"]): load_tensor(d / e["file"]) for e in manifest["momenta"]}
    return ExcitationFamily(a, bs, int(manifest["n"]), _left_fixed(a), np.eye(a.D, dtype=complex),
                            transfer_op(a).lambda2)


# ---------------------------------------------------------------- channels


def _b64(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype=LE_COMPLEX).tobytes()).decode("ascii")


def _unb64(text: str, dim: int) -> np.ndarray:
    return np.frombuffer(base64.b64decode(text), dtype=LE_COMPLEX).reshape(dim, dim).astype(complex)


def channel_to_json(ch: NoiseChannel) -> str:
    terms = [
        {"weight": t.weight, "support": list(t.support), "dim": int(t.op.shape[0]), "kraus": _b64(t.op)}
        for t in ch.terms
    ]
    return json.dumps({"n": ch.n, "d": ch.d, "p": ch.p, "terms": terms}, sort_keys=True)


def channel_from_json(text: str) -> NoiseChannel:
    obj = json.loads(text)
    terms = tuple(
        KrausTerm(float(t["weight"]), _unb64(t["kraus"], t["dim"]), tuple(t["support"])) for t in obj["terms"]
    )
    return NoiseChannel(obj["n"], obj["d"], terms, obj.get("p", 2))


# --------------------------------------------------------------- experiments


def config_hash(config: dict[str, Any]) -> str:
    """sha256 of the canonical JSON form (sorted keys, no whitespace)."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def format_cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".16e")
    if v is None:
        return ""
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_cell(v) for v in row])
    return buf.getvalue()


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    Path(path).write_text(csv_text(header, rows))
