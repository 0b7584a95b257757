from __future__ import annotations

import json

import numpy as np
import pytest

from aqedlab.excitation import make_family, momentum
from aqedlab.io import (
    channel_from_json,
    channel_to_json,
    config_hash,
    csv_text,
    format_cell,
    load_family,
    load_tensor,
    save_family,
    save_tensor,
    tensor_from_bytes,
    tensor_to_bytes,
)
from aqedlab.magnon import compressed_mpo
from aqedlab.mps import MpoTensor, MpsTensor, random_injective_mps
from aqedlab.noise import sample_pauli_channel


@pytest.mark.parametrize("mode", ["binary", "json"])
def test_tensor_roundtrip(tmp_path, mode):
    a = random_injective_mps(2, 3, seed=1)
    o, _ = compressed_mpo(2)
    for t, cls in ((a, MpsTensor), (o, MpoTensor)):
        path = tmp_path / f"t.{mode}"
        save_tensor(t, path, mode)
        back = load_tensor(path)
        assert isinstance(back, cls)
        np.testing.assert_array_equal(back.matrices, t.matrices)


def test_binary_layout():
    a = MpsTensor(np.arange(8).reshape(2, 2, 2) * (1 + 2j))
    raw = tensor_to_bytes(a)
    head, _, payload = raw.partition(b"\n")
    meta = json.loads(head)
    assert (meta["p"], meta["D"], meta["role"]) == (2, 2, "mps")
    floats = np.frombuffer(payload, dtype="<f8")
    assert floats[2] == 1.0 and floats[3] == 2.0  # entry 1 as (re, im), row-major
    with pytest.raises(ValueError):
        tensor_from_bytes(raw[:-1])


def test_family_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    a = random_injective_mps(2, 2, rng)
    b = MpsTensor(rng.normal(size=(2, 2, 2)) + 0j)
    fam = make_family(a, b, 8, [1, 3])
    save_family(fam, tmp_path / "fam")
    manifest = json.loads((tmp_path / "fam" / "family.json").read_text())
    assert manifest["n"] == 8 and [e["k"] for e in manifest["momenta"]] == [1, 3]
    assert all(max(e["residuals"]) < 1e-9 for e in manifest["momenta"])
    back = load_family(tmp_path / "fam")
    for k in (1, 3):
        np.testing.assert_array_equal(back.b(momentum(k, 8)).matrices, fam.b_of_k[k].matrices)


def test_channel_roundtrip():
    ch = sample_pauli_channel(6, 2, 12, seed=4, support_mode="arbitrary")
    back = channel_from_json(channel_to_json(ch))
    assert (back.n, back.d) == (6, 2)
    for s, t in zip(ch.terms, back.terms):
        assert s.weight == t.weight and s.support == t.support
        np.testing.assert_array_equal(s.op, t.op)


def test_config_hash_canonical():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_csv_full_precision():
    assert format_cell(0.1) == "1.0000000000000001e-01"
    assert float(format_cell(np.pi)) == np.pi
    text = csv_text(["x", "y"], [[1, 2.5], [True, None]])
    assert text.splitlines() == ["x,y", "1,2.5000000000000000e+00", "true,"]
