"""Small text formats: body parameter vectors and cameras."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..bodymodel.skinning import PARAM_SIZE, PoseShapeParams
from ..pointrender.camera import Camera


class TextFormatError(ValueError):
    pass


def _numbers(path):
    vals = []
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        for tok in raw.split("#", 1)[0].split():
            try:
                vals.append(float(tok))
            except ValueError:
                raise TextFormatError(f"{path}:{n}: not a number: {tok!r}") from None
    return np.array(vals)


def save_body(path, params: PoseShapeParams) -> None:
    v = params.to_vector()
    lines = ["# pose (16 x 3 axis-angle), shape (4), root translation (3)"]
    lines += [" ".join(repr(float(x)) for x in v[i:i + 3]) for i in range(0, 48, 3)]
    lines.append(" ".join(repr(float(x)) for x in v[48:-3]))
    lines.append(" ".join(repr(float(x)) for x in v[-3:]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_body(path) -> PoseShapeParams:
    v = _numbers(path)
    if len(v) != PARAM_SIZE:
        raise TextFormatError(f"{path}: expected {PARAM_SIZE} numbers, got {len(v)}")
    return PoseShapeParams.from_vector(v)


_CAM_FIELDS = {"fx": 1, "fy": 1, "cx": 1, "cy": 1, "width": 1, "height": 1, "rotation": 9,
               "translation": 3}


def save_camera(path, cam: Camera) -> None:
    lines = [f"fx {float(cam.fx)!r}", f"fy {float(cam.fy)!r}", f"cx {float(cam.cx)!r}",
             f"cy {float(cam.cy)!r}",
             f"width {cam.width}", f"height {cam.height}",
             "rotation " + " ".join(repr(float(x)) for x in cam.rotation.reshape(-1)),
             "translation " + " ".join(repr(float(x)) for x in cam.translation)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_camera(path) -> Camera:
    got = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        tok = raw.split("#", 1)[0].split()
        if not tok:
            continue
        key = tok[0]
        if key not in _CAM_FIELDS:
            raise TextFormatError(f"{path}:{n}: unknown camera field {key!r}")
        if len(tok) - 1 != _CAM_FIELDS[key]:
            raise TextFormatError(f"{path}:{n}: {key} needs {_CAM_FIELDS[key]} values")
        try:
            got[key] = [float(t) for t in tok[1:]]
        except ValueError:
            raise TextFormatError(f"{path}:{n}: non-numeric value") from None
    missing = [k for k in _CAM_FIELDS if k not in got]
    if missing:
        raise TextFormatError(f"{path}: missing camera fields {missing}")
    return Camera(got["fx"][0], got["fy"][0], got["cx"][0], got["cy"][0],
                  np.array(got["rotation"]).reshape(3, 3), np.array(got["translation"]),
                  int(got["width"][0]), int(got["height"][0]))
