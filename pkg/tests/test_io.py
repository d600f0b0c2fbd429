from __future__ import annotations

import struct

import numpy as np
import pytest
import scipy.sparse as sp

from sfcalc.io import (
    HEADER,
    MAGIC,
    RunManifest,
    file_digest,
    fmt,
    multivector_rows,
    read_csv,
    read_operator,
    sidecar_path,
    write_csv,
    write_operator,
)


def test_fmt_cells():
    assert [fmt(True), fmt(np.bool_(False)), fmt(np.int64(7))] == ["1", "0", "7"]
    assert fmt(-0.0) == "0" and fmt(0.1) == "0.10000000000000001"
    x = 1 / 3
    assert float(fmt(x)) == x
    assert fmt("abc") == "abc"


def test_csv_roundtrip(tmp_path):
    p = write_csv(tmp_path / "sub" / "t.csv", ["a", "b"], [(1, 0.5), (2, -1e-300)])
    assert p.read_bytes() == b"a,b\n1,0.5\n2,-1e-300\n"
    header, rows = read_csv(p)
    assert header == ["a", "b"] and rows[1] == ["2", "-1e-300"]
    assert multivector_rows([1.0, 0.0]) == [(0, 1.0), (1, 0.0)]


def test_operator_header_layout(tmp_path):
    M = np.arange(6.0).reshape(2, 3)
    p = write_operator(tmp_path / "op.bin", M, 1, 1, {"kind": "p"})
    raw = p.read_bytes()
    assert HEADER.size == 32 and raw[:8] == MAGIC
    assert struct.unpack("<ii", raw[8:16]) == (1, 1)
    assert struct.unpack("<qq", raw[16:32]) == (2, 3)
    # column-major payload
    assert np.array_equal(np.frombuffer(raw[32:], "<f8"), [0.0, 3.0, 1.0, 4.0, 2.0, 5.0])
    back, meta = read_operator(p)
    assert np.array_equal(back, M)
    assert meta["rows"] == 2 and meta["kind"] == "p"
    assert sidecar_path(p).name == "op.bin.meta.csv"


def test_operator_sparse_and_vector(tmp_path):
    S = sp.random(5, 4, density=0.4, random_state=1, format="csr")
    back, _ = read_operator(write_operator(tmp_path / "s.bin", S, 2, 1))
    assert np.array_equal(back, S.toarray())
    back, meta = read_operator(write_operator(tmp_path / "v.bin", np.ones(3), 0, 3))
    assert back.shape == (3, 1) and meta["cols"] == 1


def test_operator_corruption_detected(tmp_path):
    p = write_operator(tmp_path / "op.bin", np.eye(2), 1, 1)
    raw = p.read_bytes()
    p.write_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(ValueError, match="magic"):
        read_operator(p)
    p.write_bytes(raw[:-8])
    with pytest.raises(ValueError, match="expected"):
        read_operator(p)
    p.write_bytes(raw[:10])
    with pytest.raises(ValueError, match="truncated"):
        read_operator(p)


def test_manifest(tmp_path):
    a = write_csv(tmp_path / "b.csv", ["x"], [(1,)])
    m = RunManifest("validate", "abc", "0.1", 1.25)
    m.add(a)
    m.add(a)
    header, rows = read_csv(m.write(tmp_path))
    assert header == ["key", "value", "sha256"]
    keys = [r[0] for r in rows]
    assert keys == ["command", "config_hash", "version", "file:b.csv", "file:timing.csv"]
    assert rows[3][2] == file_digest(a) and rows[4][2] == ""
    assert (tmp_path / "timing.csv").read_text() == "key,value\nwall_time_s,00000001.250\n"
