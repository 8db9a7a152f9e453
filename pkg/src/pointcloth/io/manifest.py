"""Tab-separated dataset index: one record per (outfit, frame)."""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = "# pointcloth-manifest 1"


class ManifestError(ValueError):
    pass


@dataclass
class ManifestRecord:
    outfit_id: int
    frame_id: int
    params: np.ndarray       # flat pose/shape/translation vector
    path: str                # relative to the manifest's directory

    def line(self) -> str:
        vec = " ".join(repr(float(x)) for x in self.params)
        return f"{self.outfit_id}\t{self.frame_id}\t{vec}\t{self.path}"


def write_manifest(path, records, stride: int) -> None:
    lines = [f"{MAGIC} stride={int(stride)}", "# outfit_id\tframe_id\tparams\tpath"]
    lines += [r.line() for r in records]
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path, check_files: bool = True):
    """(records, stride).  Referenced files must exist when ``check_files``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ManifestError(f"{path}: {e.strerror}") from e
    lines = text.splitlines()
    if not lines or not lines[0].startswith(MAGIC):
        raise ManifestError(f"{path}:1: missing '{MAGIC}' header")
    stride = None
    for tok in lines[0][len(MAGIC):].split():
        if tok.startswith("stride="):
            try:
                stride = int(tok[7:])
            except ValueError:
                raise ManifestError(f"{path}:1: bad stride {tok!r}") from None
    if stride is None or stride < 1:
        raise ManifestError(f"{path}:1: header lacks a positive stride")
    records, seen = [], set()
    base = path.parent
    for n, raw in enumerate(lines[1:], start=2):
        if not raw.strip() or raw.startswith("#"):
            continue
        cols = raw.split("\t")
        if len(cols) != 4:
            raise ManifestError(f"{path}:{n}: expected 4 tab-separated fields, got {len(cols)}")
        try:
            rec = ManifestRecord(int(cols[0]), int(cols[1]),
                                 np.array([float(x) for x in cols[2].split()]), cols[3])
        except ValueError as e:
            raise ManifestError(f"{path}:{n}: {e}") from None
        key = (rec.outfit_id, rec.frame_id)
        if key in seen:
            raise ManifestError(f"{path}:{n}: duplicate record for outfit {key[0]} frame {key[1]}")
        seen.add(key)
        if check_files and not os.path.exists(base / rec.path):
            raise ManifestError(f"{path}:{n}: referenced file {rec.path!r} does not exist")
        records.append(rec)
    return records, stride
