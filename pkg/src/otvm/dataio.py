"""Dataset wire format: bit-exact encode/decode of value blobs.

Layout, all little-endian:

    magic   4 bytes  b"DOVE"
    version u8       1
    reserved u8      0
    nameLen u16      byte length of the UTF-8 name
    name    nameLen bytes
    rows    u64
    cols    u64
    cells   rows*cols IEEE-754 doubles, row-major

The missing-value marker is a NaN whose low 32-bit word equals 1954;
encode/decode move doubles as raw bytes so that payload survives the
trip. Decoding never performs float arithmetic on the cells.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

MAGIC = b"DOVE"
VERSION = 1

_HEAD = struct.Struct("<4sBBH")
_DIMS = struct.Struct("<QQ")


@dataclass(eq=False)
class DataError(Exception):
    """Blob defect; kind is MalformedHeader, TruncatedPayload, or
    DimensionMismatch (the last raised by callers that know the
    declared shape)."""

    kind: str
    message: str

    def __str__(self):
        return f"{self.kind}: {self.message}"


@dataclass(frozen=True)
class RawDataset:
    name: str
    rows: int
    cols: int
    cells: tuple[float, ...]  # row-major, NaN payloads preserved


def encode(name: str, rows: int, cols: int, cells) -> bytes:
    """Serialize; cells is rows*cols floats in row-major order."""
    raw = bytes(name, "utf-8")
    if len(raw) > 0xFFFF:
        raise ValueError("dataset name longer than 65535 bytes")
    if rows < 1 or cols < 1:
        raise ValueError("dataset dimensions must be positive")
    cells = list(cells)
    if len(cells) != rows * cols:
        raise ValueError(f"expected {rows * cols} cells, got {len(cells)}")
    out = bytearray()
    out += _HEAD.pack(MAGIC, VERSION, 0, len(raw))
    out += raw
    out += _DIMS.pack(rows, cols)
    out += struct.pack(f"<{len(cells)}d", *cells)
    return bytes(out)


def decode(blob: bytes) -> RawDataset:
    if len(blob) < _HEAD.size:
        raise DataError("MalformedHeader", "blob shorter than the header")
    magic, version, reserved, name_len = _HEAD.unpack_from(blob, 0)
    if magic != MAGIC:
        raise DataError("MalformedHeader", f"bad magic {magic!r}")
    if version != VERSION:
        raise DataError("MalformedHeader", f"unsupported version {version}")
    if reserved != 0:
        raise DataError("MalformedHeader", "reserved byte is not zero")
    pos = _HEAD.size
    if len(blob) < pos + name_len + _DIMS.size:
        raise DataError("MalformedHeader", "header truncated")
    try:
        name = blob[pos:pos + name_len].decode("utf-8")
    except UnicodeDecodeError:
        raise DataError("MalformedHeader", "dataset name is not UTF-8")
    pos += name_len
    rows, cols = _DIMS.unpack_from(blob, pos)
    pos += _DIMS.size
    if rows < 1 or cols < 1:
        raise DataError("MalformedHeader", f"dimensions {rows}x{cols}")
    want = rows * cols * 8
    got = len(blob) - pos
    if got < want:
        raise DataError("TruncatedPayload",
                        f"need {want} cell bytes, found {got}")
    if got > want:
        raise DataError("MalformedHeader", f"{got - want} trailing bytes")
    cells = struct.unpack_from(f"<{rows * cols}d", blob, pos)
    return RawDataset(name, rows, cols, cells)
