"""Single-file binary checkpoint for model parameters and buffers.

Layout (little endian):

* bytes 0..7    magic ``b"ECGDXNN\\0"``
* bytes 8..11   uint32 length L of the JSON header
* bytes 12..12+L  UTF-8 JSON: ``{"format_version": 1, "config": {...},
  "arrays": [{"name": str, "kind": "param"|"buffer", "shape": [...]}]}``
* remainder     for each entry of ``arrays`` in order, the C-order
  float64 little-endian payload (8 bytes per element)
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .model import SeResNet, SeResNetConfig
from ..errors import HeaderParseError

MAGIC = b"ECGDXNN\x00"
FORMAT_VERSION = 1


def save_checkpoint(path, model: SeResNet) -> None:
    arrays = []
    payload = bytearray()
    for kind, table in (("param", model.params), ("buffer", model.buffers)):
        for name in sorted(table):
            arr = np.ascontiguousarray(table[name], dtype="<f8")
            arrays.append({"name": name, "kind": kind, "shape": list(arr.shape)})
            payload += arr.tobytes()
    header = json.dumps({
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "arrays": arrays,
    }, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(payload)


def load_checkpoint(path) -> SeResNet:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise HeaderParseError(f"{path}: not a checkpoint file (bad magic)")
    (header_len,) = struct.unpack("<I", blob[8:12])
    header = json.loads(blob[12:12 + header_len].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise HeaderParseError(
            f"{path}: unsupported checkpoint version {header.get('format_version')}")
    config = SeResNetConfig.from_dict(header["config"])
    offset = 12 + header_len
    params: dict[str, np.ndarray] = {}
    buffers: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = count * 8
        arr = np.frombuffer(blob, dtype="<f8", count=count,
                            offset=offset).reshape(entry["shape"]).copy()
        offset += nbytes
        (params if entry["kind"] == "param" else buffers)[entry["name"]] = arr
    if offset != len(blob):
        raise HeaderParseError(f"{path}: trailing bytes after arrays")
    return SeResNet(config, params=params, buffers=buffers)
