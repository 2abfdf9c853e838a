"""The ``MERT`` tensor container: a flat, checksummed list of named arrays.

Layout (little-endian throughout)::

    b"MERT"  u16 version  u32 entry_count
    per entry: u16 name_len, name (UTF-8), u8 dtype (1=f64, 2=f32),
               u8 rank, rank x u32 dims, row-major payload
    u32 CRC32 of every preceding byte
"""

from __future__ import annotations

import os
import struct
import tempfile
import zlib
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import BadCrc, BadMagic, TruncatedFile

MAGIC = b"MERT"
VERSION = 1
_DTYPES = {1: np.dtype("<f8"), 2: np.dtype("<f4")}
_TAGS = {np.dtype("f8"): 1, np.dtype("f4"): 2}


def encode(entries: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<HI", VERSION, len(entries))]
    for name, arr in entries.items():
        arr = np.asarray(arr)
        if arr.dtype not in _TAGS:
            arr = arr.astype(np.float64)
        tag = _TAGS[arr.dtype]
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF or arr.ndim > 0xFF:
            raise ValueError(f"entry {name!r} exceeds container limits")
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<BB", tag, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedFile(f"container ends at byte {len(self.buf)}, needed {self.pos + n}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode(buf: bytes) -> dict[str, np.ndarray]:
    """Parse a container. The entry headers are walked first, so a short file is
    reported as truncated; a structurally complete file must then match its CRC."""
    buf = bytes(buf)
    if len(buf) < 4:
        raise TruncatedFile("container shorter than its magic")
    if buf[:4] != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, found {buf[:4]!r}")
    r = _Reader(buf)
    r.take(4)
    version, count = r.unpack("<HI")
    if version != VERSION:
        raise BadMagic(f"unsupported container version {version}")
    raw = []
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name_bytes = r.take(name_len)
        tag, rank = r.unpack("<BB")
        if tag not in _DTYPES:
            raise BadMagic(f"entry {name_bytes!r}: unknown dtype tag {tag}")
        dims = r.unpack(f"<{rank}I")
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        raw.append((name_bytes, tag, dims, r.take(n * _DTYPES[tag].itemsize)))
    body_end = r.pos
    (crc,) = r.unpack("<I")
    if r.pos != len(buf) or zlib.crc32(buf[:body_end]) != crc:
        raise BadCrc("container checksum mismatch")

    out: dict[str, np.ndarray] = {}
    for name_bytes, tag, dims, payload in raw:
        name = name_bytes.decode("utf-8")
        if name in out:
            raise BadMagic(f"duplicate entry name {name!r}")
        out[name] = np.frombuffer(payload, dtype=_DTYPES[tag]).reshape(dims).copy()
    return out


def write_container(path, entries: Mapping[str, np.ndarray]) -> None:
    """Atomically write ``entries`` (tempfile + rename in the target directory)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = encode(entries)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_container(path) -> dict[str, np.ndarray]:
    return decode(Path(path).read_bytes())


def container_crc(path) -> int:
    return struct.unpack("<I", Path(path).read_bytes()[-4:])[0]
