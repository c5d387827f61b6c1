"""Deterministic binary container: one JSON header plus raw little-endian arrays.

Both the preprocessed-sample cache and model checkpoints use this format so
that writing the same payload twice yields byte-identical files (sorted keys,
no timestamps). Callers can then compare artifacts by content hash.

Layout:
    8 bytes   magic ``MCBLOB1\\n``
    8 bytes   header length, unsigned little-endian
    N bytes   header JSON: {"meta": {...}, "arrays": [{name, dtype, shape}]}
    ...       array payloads, C-order, in header order
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

MAGIC = b"MCBLOB1\n"

# dtypes permitted in blob files, by canonical name
_DTYPES = {
    "float64": np.dtype("<f8"),
    "int64": np.dtype("<i8"),
    "uint8": np.dtype("|u1"),
}


class BlobError(ValueError):
    """Unreadable, truncated, or inconsistent blob file."""


def _canonical_dtype(arr: np.ndarray) -> str:
    for name, dt in _DTYPES.items():
        if arr.dtype == dt:
            return name
    raise BlobError(f"unsupported dtype {arr.dtype}; use float64/int64/uint8")


def save_blob(path, meta: dict, arrays: dict) -> None:
    """Write meta + named arrays. Array order is sorted by name, so the
    output is a pure function of the payload."""
    names = sorted(arrays)
    entries = []
    for name in names:
        arr = np.ascontiguousarray(arrays[name])
        entries.append(
            {"name": name, "dtype": _canonical_dtype(arr), "shape": list(arr.shape)}
        )
        arrays[name] = arr
    header = json.dumps(
        {"meta": meta, "arrays": entries}, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        for name in names:
            fh.write(arrays[name].astype(_DTYPES[_canonical_dtype(arrays[name])]).tobytes("C"))


def load_blob(path) -> tuple[dict, dict]:
    """Read (meta, arrays). Raises BlobError on corruption or truncation."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise BlobError(f"cannot read {path}: {exc}") from exc
    if len(raw) < len(MAGIC) + 8 or raw[: len(MAGIC)] != MAGIC:
        raise BlobError(f"{path}: not a blob file (bad magic)")
    hlen = int.from_bytes(raw[len(MAGIC) : len(MAGIC) + 8], "little")
    off = len(MAGIC) + 8
    if off + hlen > len(raw):
        raise BlobError(f"{path}: truncated header")
    try:
        header = json.loads(raw[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BlobError(f"{path}: corrupt header: {exc}") from exc
    off += hlen
    arrays = {}
    for entry in header["arrays"]:
        dt = _DTYPES[entry["dtype"]]
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        if off + nbytes > len(raw):
            raise BlobError(f"{path}: truncated array {entry['name']}")
        arrays[entry["name"]] = (
            np.frombuffer(raw[off : off + nbytes], dtype=dt).reshape(shape).copy()
        )
        off += nbytes
    if off != len(raw):
        raise BlobError(f"{path}: {len(raw) - off} trailing bytes")
    return header["meta"], arrays


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
