from __future__ import annotations

import numpy as np

from ..mesh import TriMesh, triangle_areas
from .skinning import PosedBody
from .template import GROUP_ID, BodyTemplate, TemplateError


class DegenerateGeometryError(ValueError):
    pass


def kept_structure(template: BodyTemplate):
    """Vertex ids and edges that survive dropping head, hands and feet."""
    if template.groups is None:
        raise TemplateError("template has no per-vertex group labels")
    keep = template.groups == GROUP_ID["torso_limbs"]
    e = template.edges
    edges = e[keep[e[:, 0]] & keep[e[:, 1]]]
    return np.flatnonzero(keep), edges


def body_point_cloud(body: PosedBody) -> np.ndarray:
    """Draping-network input: kept vertices followed by midpoints of kept edges."""
    verts_idx, edges = kept_structure(body.template)
    if len(verts_idx) == 0:
        raise DegenerateGeometryError("every template vertex is in a dropped group; body cloud is empty")
    v = body.vertices
    mids = 0.5 * (v[edges[:, 0]] + v[edges[:, 1]])
    return np.concatenate([v[verts_idx], mids])


def sample_surface(mesh: TriMesh, n: int, seed) -> np.ndarray:
    """``n`` points, triangle picked with probability proportional to area,
    uniform inside the triangle."""
    if n <= 0:
        raise ValueError("sample count must be positive")
    tris = mesh.triangles()
    areas = triangle_areas(tris) if len(tris) else np.zeros(0)
    total = areas.sum()
    if not total > 0:
        raise DegenerateGeometryError("mesh has no triangle with positive area")
    rng = np.random.default_rng(seed)
    which = rng.choice(len(tris), size=n, p=areas / total)
    u = rng.random((n, 2))
    flip = u.sum(axis=1) > 1.0
    u[flip] = 1.0 - u[flip]
    t = tris[which]
    return t[:, 0] + u[:, :1] * (t[:, 1] - t[:, 0]) + u[:, 1:] * (t[:, 2] - t[:, 0])
