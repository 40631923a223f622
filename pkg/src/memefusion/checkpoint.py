"""Named-tensor checkpoint container.

Layout: ``MAGIC``, an 8-byte little-endian header length, a UTF-8 JSON header
(config, metadata, tensor index), then each tensor's row-major little-endian
payload in index order.  No timestamps, so equal weights give equal bytes.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CompatibilityError, InputError

MAGIC = b"MEMEFUSION-CKPT\x00\x01"
_DTYPES = {"float32": "<f4", "float64": "<f8"}


def save_checkpoint(path, tensors: dict[str, np.ndarray], config: dict, meta: dict | None = None) -> None:
    index = []
    payloads = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        dtype = arr.dtype.name
        if dtype not in _DTYPES:
            raise TypeError(f"unsupported dtype {dtype} for tensor {name}")
        raw = arr.astype(_DTYPES[dtype]).tobytes(order="C")
        index.append({"name": name, "shape": list(arr.shape), "dtype": dtype, "offset": offset, "nbytes": len(raw)})
        payloads.append(raw)
        offset += len(raw)
    header = json.dumps({"config": config, "meta": meta or {}, "tensors": index}, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for raw in payloads:
            fh.write(raw)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict, dict]:
    """Returns (tensors, config, meta)."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if not blob.startswith(MAGIC):
        raise CompatibilityError(f"{path} is not a memefusion checkpoint")
    pos = len(MAGIC)
    (hlen,) = struct.unpack_from("<Q", blob, pos)
    pos += 8
    try:
        header = json.loads(blob[pos : pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CompatibilityError(f"{path}: corrupt checkpoint header ({exc})") from None
    base = pos + hlen
    tensors = {}
    for entry in header["tensors"]:
        start = base + entry["offset"]
        raw = blob[start : start + entry["nbytes"]]
        if len(raw) != entry["nbytes"]:
            raise CompatibilityError(f"{path}: truncated payload for {entry['name']}")
        arr = np.frombuffer(raw, dtype=_DTYPES[entry["dtype"]]).reshape(entry["shape"])
        tensors[entry["name"]] = arr.astype(entry["dtype"])
    return tensors, header["config"], header["meta"]
