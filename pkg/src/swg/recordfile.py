"""Flat on-disk container: ASCII header + little-endian binary blocks.

One format backs posterior-draw files, forecast files, and persisted EOF
bases.  The header lists metadata as key=value lines followed by block
declarations (name, dtype, shape) in payload order, then ``end`` and the raw
bytes.  Writing the same content twice yields byte-identical files; nothing
time- or environment-dependent goes in the header.
"""

from __future__ import annotations

import numpy as np

MAGIC = "#%SWG1"

_ALLOWED_DTYPES = {"<f8", "<i8", "|u1"}


def write_blocks(path, kind: str, meta: dict, blocks: dict) -> None:
    """Write ``blocks`` (name -> ndarray) with ``meta`` under format ``kind``."""
    lines = [f"{MAGIC} {kind}"]
    for key, val in meta.items():
        sval = str(val)
        if "\n" in sval or "=" in str(key):
            raise ValueError(f"metadata entry {key!r} not encodable")
        lines.append(f"{key} = {sval}")
    arrays = {}
    for name, arr in blocks.items():
        arr = np.asarray(arr)
        if arr.dtype.kind == "f" or arr.dtype.kind == "b":
            arr = arr.astype("<f8")
        elif arr.dtype.kind in "iu":
            arr = arr.astype("<i8")
        if arr.dtype.str not in _ALLOWED_DTYPES:
            raise ValueError(f"unsupported dtype for block {name}: {arr.dtype}")
        arrays[name] = np.ascontiguousarray(arr)
        shape = " ".join(str(s) for s in arr.shape)
        lines.append(f"block {name} {arr.dtype.str} {shape}".rstrip())
    lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for arr in arrays.values():
            fh.write(arr.tobytes())


def read_blocks(path):
    """Read a container; returns (kind, meta, blocks)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.find(b"\n")
    first = raw[:nl].decode("ascii")
    if not first.startswith(MAGIC + " "):
        raise ValueError(f"{path}: not a SWG container file")
    kind = first[len(MAGIC) + 1 :]
    meta, decls = {}, []
    pos = nl + 1
    while True:
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise ValueError(f"{path}: truncated header")
        line = raw[pos:nl].decode("ascii")
        pos = nl + 1
        if line == "end":
            break
        if line.startswith("block "):
            parts = line.split()
            name, dtype = parts[1], parts[2]
            shape = tuple(int(s) for s in parts[3:])
            decls.append((name, dtype, shape))
        else:
            key, _, val = line.partition(" = ")
            meta[key] = val
    blocks = {}
    for name, dtype, shape in decls:
        count = int(np.prod(shape)) if shape else 1
        dt = np.dtype(dtype)
        nbytes = count * dt.itemsize
        blocks[name] = np.frombuffer(raw[pos : pos + nbytes], dtype=dt).reshape(shape).copy()
        pos += nbytes
    if pos != len(raw):
        raise ValueError(f"{path}: {len(raw) - pos} trailing bytes")
    return kind, meta, blocks
