"""IOEM binary interchange: the byte layout the detector imports.

Little-endian: magic ``IOEM``, u32 version, u32 dim, u64 record count,
then per record a u16 id byte length, the UTF-8 id, and dim float32
values. Records must be sorted by id.
"""
from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"IOEM"
VERSION = 1


class InterchangeError(ValueError):
    pass


def write_interchange(path: str | Path, table: dict[str, np.ndarray]) -> None:
    """Atomic write: assemble in a temp file, then rename into place."""
    if not table:
        raise InterchangeError("refusing to write an empty interchange file")
    dims = {int(np.asarray(v).shape[0]) for v in table.values()}
    if len(dims) != 1:
        raise InterchangeError(f"vectors disagree on dimensionality: {sorted(dims)}")
    dim = dims.pop()
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<IIQ", VERSION, dim, len(table)))
            for key in sorted(table):
                encoded = key.encode("utf-8")
                fh.write(struct.pack("<H", len(encoded)))
                fh.write(encoded)
                fh.write(np.asarray(table[key], dtype="<f4").tobytes())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def read_interchange(path: str | Path) -> dict[str, np.ndarray]:
    """Reader used for self-verification of exported files."""
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise InterchangeError(f"{path}: bad magic {blob[:4]!r}")
    version, dim, count = struct.unpack_from("<IIQ", blob, 4)
    if version != VERSION:
        raise InterchangeError(f"{path}: unsupported version {version}")
    table: dict[str, np.ndarray] = {}
    offset = 20
    previous = None
    for _ in range(count):
        (id_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        key = blob[offset : offset + id_len].decode("utf-8")
        offset += id_len
        vec = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset).copy()
        offset += 4 * dim
        if previous is not None and key <= previous:
            raise InterchangeError(f"{path}: records not sorted at {key!r}")
        previous = key
        table[key] = vec
    if offset != len(blob):
        raise InterchangeError(f"{path}: trailing bytes")
    return table
