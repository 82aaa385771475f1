"""Binary tensor container used for datasets, checkpoints and results.

Layout: magic "DIFN", format version (u32 LE), record count (u32 LE), then
per record: name length (u16 LE), name bytes (utf-8), dtype code (u8,
0 = float64, 1 = complex128), rank (u8), dims (u64 LE each), payload
(little-endian, row-major).  Every length is validated against the
remaining file size before any allocation, so malformed files are rejected
instead of partially read.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"DIFN"
VERSION = 1

_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}
_CODES = {np.dtype(np.float64): 0, np.dtype(np.complex128): 1}


class ContainerError(ValueError):
    pass


def save_arrays(path, arrays: dict):
    """Write named arrays; keys are sorted so the byte stream is canonical."""
    items = []
    for name in sorted(arrays):
        arr = np.asarray(arrays[name])  # tobytes() emits row-major either way
        if arr.dtype not in _CODES:
            if np.issubdtype(arr.dtype, np.integer):
                arr = arr.astype(np.float64)
            elif np.issubdtype(arr.dtype, np.floating):
                arr = arr.astype(np.float64)
            elif np.issubdtype(arr.dtype, np.complexfloating):
                arr = arr.astype(np.complex128)
            else:
                raise ContainerError(f"record {name!r}: unsupported dtype {arr.dtype}")
        if arr.ndim > 255:
            raise ContainerError(f"record {name!r}: rank {arr.ndim} exceeds 255")
        items.append((name, arr))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(items)))
        for name, arr in items:
            nb = name.encode("utf-8")
            if len(nb) > 0xFFFF:
                raise ContainerError(f"record name too long ({len(nb)} bytes)")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
            for d in arr.shape:
                fh.write(struct.pack("<Q", d))
            fh.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())


def _need(buf, offset, count, what):
    if offset + count > len(buf):
        raise ContainerError(
            f"truncated file: {what} needs {count} bytes at offset {offset}, "
            f"file has {len(buf)}"
        )
    return offset + count


def load_arrays(path) -> dict:
    """Read all records; raises ContainerError naming the offending field."""
    with open(path, "rb") as fh:
        buf = fh.read()
    off = _need(buf, 0, 4, "magic")
    if buf[:4] != MAGIC:
        raise ContainerError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}")
    end = _need(buf, off, 8, "header")
    version, count = struct.unpack("<II", buf[off:end])
    off = end
    if version != VERSION:
        raise ContainerError(f"unsupported version {version}, expected {VERSION}")
    out = {}
    for i in range(count):
        end = _need(buf, off, 2, f"record {i} name length")
        (nlen,) = struct.unpack("<H", buf[off:end])
        off = end
        end = _need(buf, off, nlen, f"record {i} name")
        name = buf[off:end].decode("utf-8")
        off = end
        end = _need(buf, off, 2, f"record {name!r} dtype/rank")
        code, rank = struct.unpack("<BB", buf[off:end])
        off = end
        if code not in _DTYPES:
            raise ContainerError(f"record {name!r}: unknown dtype code {code}")
        dims = []
        for j in range(rank):
            end = _need(buf, off, 8, f"record {name!r} dim {j}")
            (d,) = struct.unpack("<Q", buf[off:end])
            dims.append(d)
            off = end
        dtype = _DTYPES[code]
        n_items = 1
        for d in dims:
            n_items *= d
        nbytes = n_items * dtype.itemsize
        end = _need(buf, off, nbytes, f"record {name!r} payload")
        arr = np.frombuffer(buf[off:end], dtype=dtype).reshape(dims).copy()
        out[name] = arr
        off = end
    if off != len(buf):
        raise ContainerError(f"{len(buf) - off} trailing bytes after last record")
    return out
