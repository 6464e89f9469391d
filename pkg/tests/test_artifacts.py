"""Deterministic serialization: equal arrays must give equal bytes."""

import hashlib

import numpy as np
import pytest

from nkscreen.artifacts import (canonical_json, file_sha256,
                                savez_deterministic, write_json)


def test_equal_arrays_equal_bytes(tmp_path):
    arrays = {
        "A": np.arange(30.0).reshape(5, 6),
        "flags": np.array([True, False, True]),
        "meta_json": np.array('{"k": 2}'),
        "counts": np.array([10, 2, 3], dtype=np.int64),
    }
    p1, p2 = tmp_path / "a.npz", tmp_path / "b.npz"
    savez_deterministic(p1, **arrays)
    savez_deterministic(p2, **arrays)
    assert p1.read_bytes() == p2.read_bytes()


def test_numpy_load_roundtrip(tmp_path):
    arrays = {
        "x": np.linspace(-1, 1, 7),
        "m": np.zeros((2, 3), dtype=np.int32),
        "s": np.array("hello"),
    }
    path = tmp_path / "a.npz"
    savez_deterministic(path, **arrays)
    with np.load(path, allow_pickle=False) as z:
        assert set(z.files) == set(arrays)
        for name in ("x", "m"):
            got = z[name]
            assert got.dtype == arrays[name].dtype
            assert np.array_equal(got, arrays[name])
        assert str(z["s"]) == "hello"


def test_content_changes_bytes(tmp_path):
    p1, p2 = tmp_path / "a.npz", tmp_path / "b.npz"
    savez_deterministic(p1, x=np.array([1.0, 2.0]))
    savez_deterministic(p2, x=np.array([1.0, 2.0 + 1e-12]))
    assert p1.read_bytes() != p2.read_bytes()


def test_object_arrays_rejected(tmp_path):
    with pytest.raises(ValueError):
        savez_deterministic(tmp_path / "a.npz", x=np.array([{"a": 1}], dtype=object))


def test_file_sha256_matches_hashlib(tmp_path):
    path = tmp_path / "blob.bin"
    data = bytes(range(256)) * 100
    path.write_bytes(data)
    assert file_sha256(path) == hashlib.sha256(data).hexdigest()


def test_canonical_json_sorts_keys(tmp_path):
    a = canonical_json({"b": 1, "a": [2, 3]})
    b = canonical_json({"a": [2, 3], "b": 1})
    assert a == b and a.endswith("\n")
    path = tmp_path / "r.json"
    write_json(path, {"z": 1, "a": 2})
    import json
    assert json.loads(path.read_text()) == {"z": 1, "a": 2}
