"""Read-only Wavefront OBJ: vertex positions and faces (polygons fan-triangulated)."""
from __future__ import annotations

import numpy as np

from ..mesh import TriMesh


class ObjError(ValueError):
    pass


def load_obj(path) -> TriMesh:
    verts, faces = [], []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for n, raw in enumerate(fh, 1):
            tok = raw.split("#", 1)[0].split()
            if not tok:
                continue
            if tok[0] == "v":
                if len(tok) < 4:
                    raise ObjError(f"{path}:{n}: vertex needs 3 coordinates")
                try:
                    verts.append([float(t) for t in tok[1:4]])
                except ValueError:
                    raise ObjError(f"{path}:{n}: bad vertex coordinate") from None
            elif tok[0] == "f":
                try:
                    idx = [int(t.split("/")[0]) for t in tok[1:]]
                except ValueError:
                    raise ObjError(f"{path}:{n}: bad face index") from None
                if len(idx) < 3:
                    raise ObjError(f"{path}:{n}: face needs at least 3 vertices")
                nv = len(verts)
                idx = [i - 1 if i > 0 else nv + i for i in idx]
                if any(i < 0 or i >= nv for i in idx):
                    raise ObjError(f"{path}:{n}: face index out of range")
                faces += [(idx[0], idx[k], idx[k + 1]) for k in range(1, len(idx) - 1)]
    return TriMesh(np.array(verts).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))
