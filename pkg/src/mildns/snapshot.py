"""Binary field snapshots.

Layout: one ASCII header line ``mildns-field v1; <dim>; <M1>x<M2>...; <kind>``
terminated by a newline, followed by row-major little-endian float64 samples.
Vector fields store their components one after another.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .spectral import ScalarField, TorusGrid, VectorField

MAGIC = "mildns-field v1"


def encode_field(f: ScalarField | VectorField) -> bytes:
    kind = "scalar" if isinstance(f, ScalarField) else "vector"
    res = "x".join(str(m) for m in f.grid.resolution)
    header = f"{MAGIC}; {f.grid.dim}; {res}; {kind}\n".encode("ascii")
    return header + np.ascontiguousarray(f.values, dtype="<f8").tobytes(order="C")


def decode_field(data: bytes) -> ScalarField | VectorField:
    nl = data.find(b"\n")
    if nl < 0:
        raise ConfigurationError("snapshot has no header line")
    parts = [s.strip() for s in data[:nl].decode("ascii").split(";")]
    if len(parts) != 4 or parts[0] != MAGIC:
        raise ConfigurationError(f"unrecognised snapshot header {parts!r}")
    dim = int(parts[1])
    res = tuple(int(m) for m in parts[2].split("x"))
    if len(res) != dim:
        raise ConfigurationError("snapshot dimension does not match its resolution list")
    grid = TorusGrid(res)
    kind = parts[3]
    shape = grid.shape if kind == "scalar" else (dim, *grid.shape)
    if kind not in ("scalar", "vector"):
        raise ConfigurationError(f"unknown snapshot kind {kind!r}")
    body = np.frombuffer(data[nl + 1:], dtype="<f8")
    if body.size != int(np.prod(shape)):
        raise ConfigurationError(f"snapshot payload has {body.size} samples, expected {np.prod(shape)}")
    values = body.reshape(shape).astype(float)
    return ScalarField(grid, values) if kind == "scalar" else VectorField(grid, values)


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    """Write through a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_field(path: str | os.PathLike, f: ScalarField | VectorField) -> None:
    atomic_write_bytes(path, encode_field(f))


def load_field(path: str | os.PathLike) -> ScalarField | VectorField:
    return decode_field(Path(path).read_bytes())
