"""Triangle mesh container and exact point-to-surface distances."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class TriMesh:
    vertices: np.ndarray                 # (V, 3)
    faces: np.ndarray | None = None      # (F, 3) int
    groups: np.ndarray | None = None     # (V,) int labels

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        if self.faces is not None:
            self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.groups is not None:
            self.groups = np.asarray(self.groups, dtype=np.int64).reshape(-1)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return 0 if self.faces is None else len(self.faces)

    def triangles(self) -> np.ndarray:
        """(F, 3, 3) corner coordinates."""
        if self.faces is None:
            return np.zeros((0, 3, 3))
        return self.vertices[self.faces]


def triangle_areas(tris: np.ndarray) -> np.ndarray:
    return 0.5 * np.linalg.norm(np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]), axis=1)


def _closest_on_triangles(p: np.ndarray, a, b, c) -> np.ndarray:
    """Closest points on triangles (a, b, c) to points p, all arrays (..., 3).

    Region classification after Ericson, Real-Time Collision Detection 5.1.5.
    """
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("...i,...i", ab, ap)
    d2 = np.einsum("...i,...i", ac, ap)
    bp = p - b
    d3 = np.einsum("...i,...i", ab, bp)
    d4 = np.einsum("...i,...i", ac, bp)
    cp = p - c
    d5 = np.einsum("...i,...i", ab, cp)
    d6 = np.einsum("...i,...i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v_in = vb / denom
        w_in = vc / denom
        out = a + ab * v_in[..., None] + ac * w_in[..., None]

        # edge regions
        t_ab = d1 / (d1 - d3)
        m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        out = np.where(m[..., None], a + ab * t_ab[..., None], out)
        t_ac = d2 / (d2 - d6)
        m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        out = np.where(m[..., None], a + ac * t_ac[..., None], out)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        m = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
        out = np.where(m[..., None], b + (c - b) * t_bc[..., None], out)

    # vertex regions last so they win on shared boundaries
    out = np.where(((d1 <= 0) & (d2 <= 0))[..., None], a, out)
    out = np.where(((d3 >= 0) & (d4 <= d3))[..., None], b, out)
    out = np.where(((d6 >= 0) & (d5 <= d6))[..., None], c, out)
    return out


def point_surface_distance(points: np.ndarray, mesh: TriMesh, chunk: int = 65536) -> np.ndarray:
    """Exact Euclidean distance from each point to the nearest mesh triangle.

    The nearest corner bounds the answer from above, so only triangles whose
    centroid lies within that bound plus the triangle's radius can win.
    """
    from scipy.spatial import cKDTree

    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    tris = mesh.triangles()
    tris = tris[triangle_areas(tris) > 1e-15] if len(tris) else tris
    if len(tris) == 0:
        return np.full(len(points), np.inf)
    if len(points) == 0:
        return np.zeros(0)
    cen = tris.mean(axis=1)
    rad = np.linalg.norm(tris - cen[:, None], axis=2).max()
    ub, _ = cKDTree(tris.reshape(-1, 3)).query(points)
    cand = cKDTree(cen).query_ball_point(points, ub * (1 + 1e-9) + rad * (1 + 1e-9) + 1e-12)
    counts = np.fromiter((len(c) for c in cand), dtype=np.int64, count=len(points))
    pi = np.repeat(np.arange(len(points)), counts)
    ti = np.fromiter((t for c in cand for t in c), dtype=np.int64, count=int(counts.sum()))
    d2 = np.empty(len(pi))
    for s in range(0, len(pi), chunk):
        p, t = points[pi[s:s + chunk]], tris[ti[s:s + chunk]]
        q = _closest_on_triangles(p, t[:, 0], t[:, 1], t[:, 2])
        d2[s:s + chunk] = ((q - p) ** 2).sum(-1)
    out = np.full(len(points), np.inf)
    np.minimum.at(out, pi, d2)
    return np.sqrt(out)
