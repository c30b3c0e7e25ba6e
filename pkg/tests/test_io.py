import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ipwmc.io import (FormatError, export_triplets, ingest_triplets, read_matrix, read_mcmx,
                      write_matrix, write_mcmx)


def test_mcmx_layout(tmp_path):
    M = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.5]])
    p = tmp_path / "m.mcmx"
    write_mcmx(p, M)
    raw = p.read_bytes()
    assert raw[:4] == b"MCMX"
    assert struct.unpack("<QQ", raw[4:20]) == (2, 3)
    assert struct.unpack("<6d", raw[20:]) == (1.0, 2.0, 3.0, 4.0, 5.0, 6.5)
    np.testing.assert_array_equal(read_mcmx(p), M)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(-1e300, 1e300, allow_nan=False)))
def test_roundtrip_bitwise(tmp_path_factory, M):
    d = tmp_path_factory.mktemp("rt")
    for name in ("m.mcmx", "m.csv"):
        write_matrix(d / name, M)
        back = read_matrix(d / name)
        assert back.shape == M.shape
        np.testing.assert_array_equal(back, M)


@pytest.mark.parametrize("payload", [b"XXXX" + b"\0" * 16, b"MCMX\x01", b"MCMX" +
                                     struct.pack("<QQ", 2, 2) + b"\0" * 8])
def test_mcmx_corrupt(tmp_path, payload):
    p = tmp_path / "bad.mcmx"
    p.write_bytes(payload)
    with pytest.raises(FormatError):
        read_mcmx(p)


def test_non_csv_suffix_means_binary(tmp_path):
    write_matrix(tmp_path / "m.bin", np.eye(2))
    assert (tmp_path / "m.bin").read_bytes()[:4] == b"MCMX"


def test_ingest_examples(tmp_path):
    p = tmp_path / "empty.txt"
    p.write_text("")
    Y, W = ingest_triplets(p, 2, 3)
    assert not Y.any() and not W.any() and Y.shape == (2, 3)
    p.write_text("1,1,4.0\n")
    Y, W = ingest_triplets(p, 2, 2)
    np.testing.assert_array_equal(W, [[1, 0], [0, 0]])
    np.testing.assert_array_equal(Y, [[4, 0], [0, 0]])


@pytest.mark.parametrize("text,line", [
    ("1,1,2\n1,1,3\n", 2),      # duplicate
    ("1,1,2\n3,1,1\n", 2),      # row out of range
    ("1,0,2\n", 1),             # zero index
    ("# c\n1,1\n", 2),          # too few fields
    ("1,1,abc\n", 1),           # bad number
])
def test_ingest_errors_carry_line(tmp_path, text, line):
    p = tmp_path / "t.txt"
    p.write_text(text)
    with pytest.raises(ValueError, match=f"line {line}"):
        ingest_triplets(p, 2, 2)


def test_triplet_roundtrip(tmp_path, rng):
    Y = rng.normal(size=(9, 7)) * 3
    W = (rng.uniform(size=Y.shape) < 0.4).astype(float)
    p = tmp_path / "trip.txt"
    export_triplets(p, Y, W)
    Y2, W2 = ingest_triplets(p, 9, 7)
    np.testing.assert_array_equal(W2, W)
    np.testing.assert_array_equal(Y2, np.where(W > 0, Y, 0.0))
