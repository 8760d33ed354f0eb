"""Standalone .icra v1 writer.

Byte layout (little-endian throughout):

    magic   4s   b"ICRA"
    version u32  1
    name    u32 length + that many UTF-8 bytes
    layers, heads, context_len, num_rows   u32 x4
    dtype   u32  0 = float32
    rows    u32 x num_rows, strictly ascending, each < context_len
    body    float32, layer-major then head then row, context_len per row

This is written against the byte contract only; the reranking engine is
deliberately not imported so the cross-reader test in tests/ stays an
independent check.
"""
from __future__ import annotations

import os
import struct

import numpy as np

from .errors import IoFailure, SelfCheckFailure

MAGIC = b"ICRA"
FORMAT_VERSION = 1
DTYPE_F32 = 0


def encode_icra(name: str, values: np.ndarray, row_indices) -> bytes:
    rows = [int(r) for r in row_indices]
    if values.ndim != 4:
        raise SelfCheckFailure(f"values must be 4-d, got shape {values.shape}")
    layers, heads, num_rows, context_len = values.shape
    if num_rows != len(rows):
        raise SelfCheckFailure(
            f"{len(rows)} row indices for {num_rows} value rows"
        )
    prev = -1
    for r in rows:
        if r <= prev or r >= context_len:
            raise SelfCheckFailure(f"bad row index {r} (context {context_len})")
        prev = r
    name_bytes = name.encode("utf-8")
    head = bytearray()
    head += MAGIC
    head += struct.pack("<I", FORMAT_VERSION)
    head += struct.pack("<I", len(name_bytes)) + name_bytes
    head += struct.pack("<IIII", layers, heads, context_len, num_rows)
    head += struct.pack("<I", DTYPE_F32)
    head += struct.pack(f"<{num_rows}I", *rows)
    body = np.ascontiguousarray(values, dtype="<f4").tobytes()
    return bytes(head) + body


def renormalize_rows(
    values: np.ndarray, row_indices, max_correction: float = 0.01
) -> np.ndarray:
    """Divide each causal row by its sum, refusing gross corruption.

    Softmax output drifts from 1.0 by float noise (more under float16);
    that is corrected here. A row whose mass is off by more than
    ``max_correction`` is not attention output we trust, so the whole
    export is refused rather than smoothed over.
    """
    out = np.array(values, dtype=np.float64, copy=True)
    if not np.all(np.isfinite(out)):
        raise SelfCheckFailure("non-finite attention values")
    for r, k in enumerate(row_indices):
        future = np.abs(out[:, :, r, k + 1 :])
        if future.size and future.max() > 1e-6:
            raise SelfCheckFailure(
                f"row for position {k} attends to later positions "
                f"(max leak {future.max():.3e})"
            )
        out[:, :, r, k + 1 :] = 0.0
        sums = out[:, :, r, : k + 1].sum(axis=-1)
        off = np.abs(sums - 1.0).max()
        if off > max_correction:
            raise SelfCheckFailure(
                f"row for position {k} sums off by {off:.3e} "
                f"(limit {max_correction}); refusing to write"
            )
        out[:, :, r, : k + 1] /= sums[:, :, None]
    return out.astype(np.float32)


def self_check(values: np.ndarray, row_indices, tol: float = 1e-3) -> None:
    """The reader-side content rules, applied before anything hits disk."""
    if not np.all(np.isfinite(values)):
        raise SelfCheckFailure("non-finite attention values")
    for r, k in enumerate(row_indices):
        if values[:, :, r, k + 1 :].any():
            raise SelfCheckFailure(f"row for position {k} leaks past itself")
        off = np.abs(values[:, :, r, : k + 1].sum(axis=-1) - 1.0).max()
        if off > tol:
            raise SelfCheckFailure(
                f"row for position {k} sums off by {off:.3e} after "
                f"renormalization (tol {tol})"
            )


def write_icra(
    path: str,
    name: str,
    values: np.ndarray,
    row_indices,
    *,
    max_correction: float = 0.01,
    tol: float = 1e-3,
) -> None:
    """Renormalize, validate, then write. Refusal leaves no file behind."""
    fixed = renormalize_rows(values, row_indices, max_correction)
    self_check(fixed, row_indices, tol)
    blob = encode_icra(name, fixed, row_indices)
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        try:
            if os.path.exists(path):
                os.unlink(path)
        except OSError:
            pass
        raise IoFailure(f"cannot write {path}: {exc}") from exc
