"""Binary parameter container and the text table of outfit codes.

Container layout (little-endian)::

    8 bytes   magic  b"PCLOTHCK"
    uint32    version (1)
    uint32    header length in bytes
    header    UTF-8 JSON: {"meta": {...}, "blocks": [{"name": str, "shape": [int, ...]}, ...]}
    payload   float64 blocks, in header order, row-major
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import DrapingModel, ModelConfig

MAGIC = b"PCLOTHCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, blocks, meta: dict | None = None) -> None:
    """``blocks`` is an ordered list of (name, array)."""
    names = [n for n, _ in blocks]
    if len(set(names)) != len(names):
        raise CheckpointError("duplicate block names")
    header = {"meta": meta or {},
              "blocks": [{"name": n, "shape": list(np.shape(a))} for n, a in blocks]}
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", VERSION, len(hb)) + hb)
        for _, a in blocks:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path):
    """(meta, {name: array}) with blocks in stored order."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    if len(data) < 16:
        raise CheckpointError(f"{path}: truncated header")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt header: {e}") from None
    off = 16 + hlen
    blocks = {}
    for b in header["blocks"]:
        shape = tuple(b["shape"])
        n = int(np.prod(shape, dtype=np.int64)) * 8
        if off + n > len(data):
            raise CheckpointError(f"{path}: block {b['name']!r} truncated: expected {n} bytes at "
                                  f"offset {off}, {len(data) - off} available")
        blocks[b["name"]] = np.frombuffer(data, "<f8", n // 8, off).reshape(shape).astype(np.float64)
        off += n
    if off != len(data):
        raise CheckpointError(f"{path}: {len(data) - off} trailing bytes")
    return header["meta"], blocks


def save_model(path, model: DrapingModel, extra=(), meta: dict | None = None) -> None:
    m = {"kind": "draping", "model": model.config.to_dict()}
    m.update(meta or {})
    save_checkpoint(path, list(model.named_blocks()) + list(extra), m)


def load_model(path):
    """(model, meta, leftover blocks not belonging to the network)."""
    meta, blocks = load_checkpoint(path)
    if meta.get("kind") != "draping":
        raise CheckpointError(f"{path}: not a draping-model checkpoint")
    model = DrapingModel(ModelConfig.from_dict(meta["model"]))
    model.load_blocks(blocks)
    own = {n for n, _ in model.named_blocks()}
    return model, meta, {k: v for k, v in blocks.items() if k not in own}


def write_codes(path, ids, codes) -> None:
    codes = np.asarray(codes, dtype=np.float64).reshape(len(ids), -1)
    lines = ["# outfit_id z_0 ... z_%d" % (codes.shape[1] - 1)]
    lines += [" ".join([str(int(i))] + [repr(float(x)) for x in row]) for i, row in zip(ids, codes)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_codes(path):
    """(ids, (K, d) codes) from a code table."""
    ids, rows = [], []
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            ids.append(int(tok[0]))
            rows.append([float(x) for x in tok[1:]])
        except ValueError as e:
            raise CheckpointError(f"{path}:{n}: {e}") from None
        if rows and len(rows[-1]) != len(rows[0]):
            raise CheckpointError(f"{path}:{n}: expected {len(rows[0])} values, got {len(rows[-1])}")
    if not rows:
        raise CheckpointError(f"{path}: no codes")
    return ids, np.array(rows)
