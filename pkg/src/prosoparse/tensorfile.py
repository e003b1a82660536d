"""Deterministic binary container for named arrays.

Layout: one ASCII magic/version line, one JSON metadata line (free-form
``meta`` dict plus an ordered tensor index of name/dtype/shape), then the
raw little-endian array bytes concatenated in index order.  Writing the
same arrays and metadata twice produces byte-identical files, which the
feature cache and checkpoint round-trip tests rely on.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import FormatError

MAGIC = "prosoparse-tensors"
VERSION = 1

_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8"), "<i8": np.dtype("<i8"), "|b1": np.dtype("|b1")}


def _wire_dtype(arr):
    kind = arr.dtype.kind
    if kind == "f":
        return "<f8" if arr.dtype.itemsize == 8 else "<f4"
    if kind in "iu":
        return "<i8"
    if kind == "b":
        return "|b1"
    raise FormatError(f"unsupported dtype {arr.dtype} for tensor file")


def write_tensors(path, tensors, meta=None):
    """Write ``{name: array}`` in sorted-name order with optional metadata."""
    index = []
    blobs = []
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        wire = _wire_dtype(arr)
        index.append({"name": name, "dtype": wire, "shape": list(arr.shape)})
        blobs.append(arr.astype(_DTYPES[wire], copy=False).tobytes())
    header = json.dumps(
        {"meta": meta or {}, "tensors": index},
        sort_keys=True,
        separators=(",", ":"),
    )
    with open(path, "wb") as fh:
        fh.write(f"{MAGIC} {VERSION}\n".encode("ascii"))
        fh.write(header.encode("utf-8"))
        fh.write(b"\n")
        for blob in blobs:
            fh.write(blob)


def read_tensors(path):
    """Returns (meta, {name: array})."""
    with open(path, "rb") as fh:
        magic = fh.readline().decode("ascii", errors="replace").strip()
        parts = magic.split()
        if len(parts) != 2 or parts[0] != MAGIC:
            raise FormatError(f"{path}: not a {MAGIC} file (header {magic!r})")
        if int(parts[1]) != VERSION:
            raise FormatError(f"{path}: unsupported format version {parts[1]}")
        try:
            header = json.loads(fh.readline().decode("utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            raise FormatError(f"{path}: bad metadata line: {exc}") from None
        tensors = {}
        for entry in header["tensors"]:
            dtype = _DTYPES.get(entry["dtype"])
            if dtype is None:
                raise FormatError(f"{path}: unknown dtype {entry['dtype']!r}")
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize:
                raise FormatError(f"{path}: truncated data for {entry['name']!r}")
            tensors[entry["name"]] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
        return header.get("meta", {}), tensors
