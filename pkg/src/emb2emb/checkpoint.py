"""Binary checkpoint container.

Layout::

    b"E2EC"                      magic
    uint64 little-endian         header length in bytes
    header                       UTF-8 JSON
    arrays                       raw little-endian float64, in header order

The header records the format version, the byte order and, per section, a
free-form ``meta`` dict plus the name and shape of every array.  A file can
hold several sections (an autoencoder, a mapping, its discriminator ...).
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"E2EC"
VERSION = 1
_LE = np.dtype("<f8")


class CheckpointError(ValueError):
    pass


class Section:
    def __init__(self, name: str, meta: dict | None = None, arrays: dict | None = None):
        self.name = name
        self.meta = meta or {}
        self.arrays = dict(arrays or {})

    def __repr__(self):
        return f"Section({self.name!r}, arrays={list(self.arrays)})"


def params_digest(arrays: dict) -> str:
    """SHA-256 over names, shapes and little-endian bytes, in sorted name order."""
    h = hashlib.sha256()
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype=_LE)
        h.update(name.encode("utf-8"))
        h.update(str(arr.shape).encode("ascii"))
        h.update(arr.tobytes())
    return h.hexdigest()


def save(path, sections: list[Section]) -> None:
    header = {"format": "emb2emb-container", "version": VERSION, "endianness": "little",
              "dtype": "float64", "sections": []}
    blobs = []
    for sec in sections:
        entries = []
        for name, arr in sec.arrays.items():
            arr = np.ascontiguousarray(arr, dtype=_LE)
            entries.append({"name": name, "shape": list(arr.shape)})
            blobs.append(arr.tobytes())
        header["sections"].append({"name": sec.name, "meta": sec.meta, "arrays": entries})
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        for blob in blobs:
            fh.write(blob)
    tmp.replace(path)


def load(path) -> dict[str, Section]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not an emb2emb checkpoint")
    (hlen,) = struct.unpack("<Q", data[4:12])
    try:
        header = json.loads(data[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    if header.get("version") != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {header.get('version')} != supported {VERSION}")
    if header.get("endianness") != "little" or header.get("dtype") != "float64":
        raise CheckpointError(f"{path}: unsupported array encoding")
    offset = 12 + hlen
    out = {}
    for sec in header["sections"]:
        arrays = {}
        for entry in sec["arrays"]:
            shape = tuple(entry["shape"])
            nbytes = int(np.prod(shape, dtype=np.int64)) * 8
            if offset + nbytes > len(data):
                raise CheckpointError(f"{path}: truncated while reading {sec['name']}/{entry['name']}")
            arrays[entry["name"]] = np.frombuffer(data, dtype=_LE, count=nbytes // 8,
                                                  offset=offset).reshape(shape).astype(np.float64)
            offset += nbytes
        out[sec["name"]] = Section(sec["name"], sec["meta"], arrays)
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes")
    return out


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
