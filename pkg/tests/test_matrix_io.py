import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from subsparse.datagen import NoiseParams, generate
from subsparse.exceptions import FormatError
from subsparse.matrix_io import dumps_matrix, export_dataset, import_dataset, loads_matrix, read_matrix, write_matrix

finite = st.floats(allow_nan=False, allow_infinity=True, width=64)


@pytest.mark.parametrize("encoding", ["text", "f64le"])
@given(M=arrays(np.float64, st.tuples(st.integers(0, 5), st.integers(0, 5)), elements=finite))
def test_round_trip_bit_exact(encoding, M):
    back = loads_matrix(dumps_matrix(M, encoding))
    assert back.shape == M.shape
    assert back.tobytes() == np.asarray(M, dtype=float).tobytes()


def test_header_and_layout():
    M = np.array([[1.0, 2.0], [3.0, 4.0]])
    text = dumps_matrix(M, "text").decode()
    assert text == "SSMX v1 2 2 text\n1.0 3.0\n2.0 4.0\n"
    raw = dumps_matrix(M, "f64le")
    assert raw.startswith(b"SSMX v1 2 2 f64le\n")
    assert np.frombuffer(raw[len(b"SSMX v1 2 2 f64le\n"):], "<f8").tolist() == [1.0, 3.0, 2.0, 4.0]


def test_vector_is_stored_as_column(tmp_path):
    write_matrix(tmp_path / "v.ssmx", np.arange(3.0), "text")
    assert read_matrix(tmp_path / "v.ssmx").shape == (3, 1)


@pytest.mark.parametrize("encoding", ["text", "f64le"])
def test_truncated_file(encoding):
    data = dumps_matrix(np.ones((3, 4)), encoding)
    with pytest.raises(FormatError, match="truncated|expected") as info:
        loads_matrix(data[:-9])
    assert info.value.offset is not None


def test_trailing_bytes_and_bad_values():
    data = dumps_matrix(np.ones((2, 2)), "f64le")
    with pytest.raises(FormatError, match="trailing"):
        loads_matrix(data + b"\x00")
    with pytest.raises(FormatError, match="non-numeric"):
        loads_matrix(b"SSMX v1 2 1 text\n1.0 abc\n")
    with pytest.raises(FormatError, match="column 0"):
        loads_matrix(b"SSMX v1 2 1 text\n1.0\n")


def test_header_errors():
    with pytest.raises(FormatError, match="unsupported version 'v2'.*'v1'"):
        loads_matrix(b"SSMX v2 1 1 text\n1.0\n")
    with pytest.raises(FormatError):
        loads_matrix(b"NOPE v1 1 1 text\n1.0\n")
    with pytest.raises(FormatError, match="missing header"):
        loads_matrix(b"SSMX v1 1 1 text")
    with pytest.raises(FormatError, match="unknown encoding"):
        loads_matrix(b"SSMX v1 1 1 f32be\n")
    with pytest.raises(FormatError, match="byte offset"):
        loads_matrix(b"SSMX v1 x 1 text\n")


@pytest.mark.parametrize("encoding", ["text", "f64le"])
def test_dataset_round_trip(tmp_path, encoding):
    ds = generate(8, [2, 3], [5, 7], NoiseParams(0.1, 0.2), seed=3)
    back = import_dataset(export_dataset(ds, tmp_path / "d", encoding))
    for name in ("X", "Z", "Y"):
        assert getattr(back, name).tobytes() == getattr(ds, name).tobytes()
    np.testing.assert_array_equal(back.labels, ds.labels)
    np.testing.assert_array_equal(back.permutation, ds.permutation)
    for a, b in zip(back.subspaces, ds.subspaces):
        assert a.basis.tobytes() == b.basis.tobytes()
    assert back.noise == ds.noise and back.seed == ds.seed


def test_dataset_version_mismatch(tmp_path):
    ds = generate(4, [1], [2], NoiseParams(0.1), seed=0)
    d = export_dataset(ds, tmp_path / "d")
    meta = json.loads((d / "dataset.json").read_text())
    meta["version"] = 7
    (d / "dataset.json").write_text(json.dumps(meta))
    with pytest.raises(FormatError, match="version 7.*expected 1"):
        import_dataset(d)
    (d / "dataset.json").write_text("{not json")
    with pytest.raises(FormatError, match="byte offset 1"):
        import_dataset(d)
