"""Binary serialization of attention slices (the .icra format, version 1).

Layout, all integers little-endian u32 unless noted:

    bytes 0-3   magic "ICRA"
    u32         format version (currently 1)
    u32         model name byte length, then that many bytes of UTF-8
    u32 x 4     layers, heads, context_len, num_rows
    u32         dtype code (0 = float32)
    u32 x num_rows   row indices, strictly ascending, < context_len
    body        layers * heads * num_rows * context_len float32 values,
                little-endian, layer-major then head then row

The decoder never trusts a length field before checking it against the
bytes actually present, and it raises only ``IcraError`` subclasses, so
arbitrary corrupt input yields a typed report instead of a crash.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .attention_core import AttentionSlice
from .errors import (
    BadMagic,
    InvalidHeader,
    IoFailure,
    NonAscendingRows,
    RowIndexOutOfRange,
    TrailingBytes,
    TruncatedBody,
    UnsupportedDtype,
    UnsupportedVersion,
)

MAGIC = b"ICRA"
FORMAT_VERSION = 1
DTYPE_F32 = 0

_MAX_NAME_BYTES = 1 << 16
_MAX_DIM = 1 << 24


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedBody(
                f"need {n} bytes for {what} at offset {self.pos}, "
                f"have {len(self.data) - self.pos}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def encode_dump(attn: AttentionSlice, model_name: str) -> bytes:
    """Serialize a slice; values are stored as float32."""
    name = model_name.encode("utf-8")
    if len(name) > _MAX_NAME_BYTES:
        raise InvalidHeader(f"model name of {len(name)} bytes is too long")
    parts = [
        MAGIC,
        struct.pack("<I", FORMAT_VERSION),
        struct.pack("<I", len(name)),
        name,
        struct.pack(
            "<IIII", attn.layers, attn.heads, attn.context_len, attn.num_rows
        ),
        struct.pack("<I", DTYPE_F32),
        np.asarray(attn.row_indices, dtype="<u4").tobytes(),
        np.ascontiguousarray(attn.values, dtype="<f4").tobytes(),
    ]
    return b"".join(parts)


def decode_dump(data: bytes) -> tuple[AttentionSlice, str]:
    """Parse bytes into a slice. Raises IcraError subclasses on any defect."""
    cur = _Cursor(data)
    if cur.take(4, "magic") != MAGIC:
        raise BadMagic("not an ICRA file")
    version = cur.u32("version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"format version {version}")
    name_len = cur.u32("name length")
    if name_len > _MAX_NAME_BYTES:
        raise InvalidHeader(f"model name length {name_len} exceeds limit")
    try:
        model_name = cur.take(name_len, "model name").decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InvalidHeader(f"model name is not valid UTF-8: {exc}") from None
    layers = cur.u32("layers")
    heads = cur.u32("heads")
    context_len = cur.u32("context_len")
    num_rows = cur.u32("num_rows")
    dtype_code = cur.u32("dtype code")
    if dtype_code != DTYPE_F32:
        raise UnsupportedDtype(f"dtype code {dtype_code}")
    for label, value in (("layers", layers), ("heads", heads),
                         ("context_len", context_len), ("num_rows", num_rows)):
        if value == 0:
            raise InvalidHeader(f"{label} is zero")
        if value > _MAX_DIM:
            raise InvalidHeader(f"{label} = {value} exceeds limit")

    rows_raw = cur.take(4 * num_rows, "row indices")
    rows = np.frombuffer(rows_raw, dtype="<u4")
    prev = -1
    for k in rows.tolist():
        if k <= prev:
            raise NonAscendingRows(f"row index {k} after {prev}")
        prev = k
    if prev >= context_len:
        raise RowIndexOutOfRange(f"row {prev} >= context_len {context_len}")

    expected = layers * heads * num_rows * context_len * 4
    remaining = len(data) - cur.pos
    if remaining < expected:
        raise TruncatedBody(f"body needs {expected} bytes, have {remaining}")
    if remaining > expected:
        raise TrailingBytes(f"{remaining - expected} bytes after body")
    body = np.frombuffer(cur.take(expected, "body"), dtype="<f4")
    values = body.reshape(layers, heads, num_rows, context_len)
    return (
        AttentionSlice(
            layers=layers,
            heads=heads,
            context_len=context_len,
            row_indices=tuple(int(k) for k in rows.tolist()),
            values=values,
        ),
        model_name,
    )


def write_dump(path, attn: AttentionSlice, model_name: str) -> None:
    data = encode_dump(attn, model_name)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_dump(path) -> tuple[AttentionSlice, str]:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return decode_dump(data)


def dump_paths(directory, query_id: str) -> tuple[str, str]:
    """Conventional on-disk names for a query's two attention dumps."""
    return (
        os.path.join(directory, f"{query_id}.q.icra"),
        os.path.join(directory, f"{query_id}.cal.icra"),
    )


@dataclass
class DumpReport:
    """Result of content validation; structural defects raise instead."""

    model_name: str
    layers: int
    heads: int
    context_len: int
    num_rows: int
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_dump(path, row_sum_tol: float = 1e-3) -> DumpReport:
    """Load a dump and report content-level violations without raising.

    Checks finiteness, exact causality (zero attention to future
    positions) and approximate row-stochasticity. Returns a report; file
    and format problems still raise as usual.
    """
    attn, model_name = read_dump(path)
    report = DumpReport(
        model_name=model_name,
        layers=attn.layers,
        heads=attn.heads,
        context_len=attn.context_len,
        num_rows=attn.num_rows,
    )
    v = attn.values
    bad = ~np.isfinite(v)
    if bad.any():
        report.violations.append(f"{int(bad.sum())} non-finite values")
        v = np.where(bad, 0.0, v)
    v64 = v.astype(np.float64)
    for r, k in enumerate(attn.row_indices):
        tail = v64[:, :, r, k + 1 :]
        leaked = int(np.count_nonzero(tail)) if tail.size else 0
        if leaked:
            report.violations.append(
                f"row {k}: {leaked} nonzero values at future positions"
            )
        sums = v64[:, :, r, : k + 1].sum(axis=-1)
        err = float(np.abs(sums - 1.0).max())
        if err > row_sum_tol:
            report.violations.append(
                f"row {k}: worst row-sum deviation {err:.3e} exceeds {row_sum_tol:g}"
            )
    return report
