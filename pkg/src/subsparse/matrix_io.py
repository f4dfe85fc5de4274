"""SSMX matrix files and dataset directories.

An SSMX file is one ASCII header line ``SSMX v1 <rows> <cols> <encoding>``
followed by the payload, column-major:

* ``text``  -- one column per line, values space-separated, written with
  ``repr(float)`` (shortest round-tripping decimal), so reading back is exact;
* ``f64le`` -- raw little-endian IEEE-754 doubles.

A dataset directory holds ``dataset.json`` (metadata) plus one SSMX file per
matrix (``X``, ``Z``, ``Y`` and one basis per subspace).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .datagen import Dataset, NoiseParams
from .exceptions import FormatError
from .geometry import Subspace

MAGIC = "SSMX"
VERSION = "v1"
ENCODINGS = ("text", "f64le")
DATASET_FORMAT = "subsparse-dataset"
DATASET_VERSION = 1


def dumps_matrix(M, encoding: str = "f64le") -> bytes:
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2:
        raise ValueError("only vectors and matrices can be stored")
    if encoding not in ENCODINGS:
        raise ValueError(f"encoding must be one of {ENCODINGS}")
    rows, cols = M.shape
    header = f"{MAGIC} {VERSION} {rows} {cols} {encoding}\n".encode("ascii")
    if encoding == "f64le":
        return header + np.asfortranarray(M).astype("<f8").tobytes(order="F")
    lines = (" ".join(repr(float(v)) for v in M[:, j]) for j in range(cols))
    return header + "".join(line + "\n" for line in lines).encode("ascii")


def loads_matrix(data: bytes) -> np.ndarray:
    end = data.find(b"\n")
    if end < 0:
        raise FormatError("missing header line", offset=len(data))
    try:
        fields = data[:end].decode("ascii").split()
    except UnicodeDecodeError:
        raise FormatError("header is not ASCII", offset=0) from None
    if len(fields) != 5 or fields[0] != MAGIC:
        raise FormatError(f"expected header '{MAGIC} {VERSION} rows cols encoding'", offset=0)
    if fields[1] != VERSION:
        raise FormatError(f"unsupported version {fields[1]!r}; this reader handles {VERSION!r}", offset=len(MAGIC) + 1)
    try:
        rows, cols = int(fields[2]), int(fields[3])
    except ValueError:
        raise FormatError("rows/cols must be integers", offset=0) from None
    if rows < 0 or cols < 0:
        raise FormatError("negative shape", offset=0)
    encoding = fields[4]
    body = data[end + 1 :]
    start = end + 1
    if encoding == "f64le":
        expected = rows * cols * 8
        if len(body) < expected:
            raise FormatError(f"truncated payload: expected {expected} bytes, found {len(body)}", offset=start + len(body))
        if len(body) > expected:
            raise FormatError("trailing bytes after payload", offset=start + expected)
        return np.frombuffer(body, dtype="<f8").reshape((rows, cols), order="F").astype(float)
    if encoding == "text":
        out = np.empty((rows, cols))
        pos = start
        lines = body.split(b"\n")
        if lines and lines[-1] == b"":
            lines.pop()
        if len(lines) < cols:
            raise FormatError(f"truncated payload: expected {cols} columns, found {len(lines)}", offset=len(data))
        if len(lines) > cols:
            raise FormatError("trailing lines after payload", offset=start + sum(len(l) + 1 for l in lines[:cols]))
        for j, line in enumerate(lines):
            values = line.split()
            if len(values) != rows:
                raise FormatError(f"column {j} has {len(values)} values, expected {rows}", offset=pos)
            try:
                out[:, j] = [float(v) for v in values]
            except ValueError:
                raise FormatError(f"column {j} holds a non-numeric value", offset=pos) from None
            pos += len(line) + 1
        return out
    raise FormatError(f"unknown encoding {encoding!r}", offset=0)


def write_matrix(path, M, encoding: str = "f64le") -> None:
    Path(path).write_bytes(dumps_matrix(M, encoding))


def read_matrix(path) -> np.ndarray:
    return loads_matrix(Path(path).read_bytes())


def export_dataset(dataset: Dataset, directory, encoding: str = "f64le") -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {"X": "X.ssmx", "Z": "Z.ssmx", "Y": "Y.ssmx"}
    for name, fname in files.items():
        write_matrix(directory / fname, getattr(dataset, name), encoding)
    bases = []
    for i, S in enumerate(dataset.subspaces):
        fname = f"basis_{i}.ssmx"
        write_matrix(directory / fname, S.basis, encoding)
        bases.append(fname)
    meta = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "seed": dataset.seed,
        "noise": {"epsilon_raw": dataset.noise.epsilon_raw, "rho": dataset.noise.rho},
        "labels": dataset.labels.tolist(),
        "permutation": dataset.permutation.tolist(),
        "uniform_points": dataset.uniform_points,
        "matrices": files,
        "bases": bases,
    }
    (directory / "dataset.json").write_text(json.dumps(meta, indent=1) + "\n")
    return directory


def import_dataset(directory) -> Dataset:
    directory = Path(directory)
    raw = (directory / "dataset.json").read_bytes()
    try:
        meta = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise FormatError(f"dataset.json: {exc.msg}", offset=exc.pos) from None
    if meta.get("format") != DATASET_FORMAT:
        raise FormatError(f"not a dataset manifest (format={meta.get('format')!r})", offset=0)
    if meta.get("version") != DATASET_VERSION:
        raise FormatError(
            f"dataset version {meta.get('version')!r} is not supported; expected {DATASET_VERSION}", offset=0
        )
    mats = {name: read_matrix(directory / fname) for name, fname in meta["matrices"].items()}
    subspaces = tuple(Subspace(read_matrix(directory / f)) for f in meta["bases"])
    return Dataset(
        subspaces=subspaces,
        X=mats["X"],
        Z=mats["Z"],
        Y=mats["Y"],
        labels=np.asarray(meta["labels"], dtype=int),
        permutation=np.asarray(meta["permutation"], dtype=int),
        noise=NoiseParams(**meta["noise"]),
        seed=int(meta["seed"]),
        uniform_points=bool(meta["uniform_points"]),
    )
