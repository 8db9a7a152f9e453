"""Body depth maps, occlusion-aware visibility and z-buffered descriptor splats."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mesh import TriMesh
from ..numcore import Tensor, as_tensor, custom
from .camera import NEAR, Camera, pixel_of, project_points

DEPTH_EPS = 1e-3   # a point within this distance behind the body still counts as visible
_PAIR_CHUNK = 1 << 22


class RasterError(ValueError):
    pass


def _as_mesh(body):
    if body is None:
        return None
    if isinstance(body, TriMesh):
        return body
    return TriMesh(body.vertices, body.faces)


def body_depth_map(body, cam: Camera) -> np.ndarray:
    """Nearest body depth (camera z) per pixel center; +inf where uncovered.

    Triangles are rasterized with edge functions at pixel centers (both
    windings, edges inclusive) and depth is interpolated perspective
    correctly through 1/z.  Triangles with a corner at or behind the camera
    plane are skipped.
    """
    depth = np.full((cam.height, cam.width), np.inf)
    mesh = _as_mesh(body)
    if mesh is None or mesh.n_faces == 0:
        return depth
    q = cam.to_camera(mesh.vertices)
    z = q[:, 2]
    ok = z > NEAR
    with np.errstate(divide="ignore", invalid="ignore"):
        su = cam.fx * q[:, 0] / z + cam.cx
        sv = cam.fy * q[:, 1] / z + cam.cy
    f = mesh.faces[ok[mesh.faces].all(axis=1)]
    if len(f) == 0:
        return depth
    u = su[f]
    v = sv[f]
    iz = 1.0 / z[f]
    area = (u[:, 1] - u[:, 0]) * (v[:, 2] - v[:, 0]) - (v[:, 1] - v[:, 0]) * (u[:, 2] - u[:, 0])
    u0 = np.clip(np.ceil(u.min(axis=1)), 0, cam.width).astype(np.int64)
    u1 = np.clip(np.floor(u.max(axis=1)), -1, cam.width - 1).astype(np.int64)
    v0 = np.clip(np.ceil(v.min(axis=1)), 0, cam.height).astype(np.int64)
    v1 = np.clip(np.floor(v.max(axis=1)), -1, cam.height - 1).astype(np.int64)
    nu = np.maximum(u1 - u0 + 1, 0)
    nv = np.maximum(v1 - v0 + 1, 0)
    keep = (area != 0) & (nu > 0) & (nv > 0)
    tri = np.flatnonzero(keep)
    counts = (nu * nv)[tri]
    flat = depth.reshape(-1)
    # enumerate (triangle, pixel) pairs in bounded chunks
    start = 0
    cum = np.cumsum(counts)
    while start < len(tri):
        base = cum[start - 1] if start else 0
        stop = int(np.searchsorted(cum, base + _PAIR_CHUNK, side="right"))
        stop = max(stop, start + 1)
        t = tri[start:stop]
        c = counts[start:stop]
        owner = np.repeat(np.arange(len(t)), c)
        local = np.arange(c.sum()) - np.repeat(np.cumsum(c) - c, c)
        tt = t[owner]
        pu = u0[tt] + local % nu[tt]
        pv = v0[tt] + local // nu[tt]
        uu, vv = u[tt], v[tt]
        # barycentric weights from edge functions
        w0 = (uu[:, 2] - uu[:, 1]) * (pv - vv[:, 1]) - (vv[:, 2] - vv[:, 1]) * (pu - uu[:, 1])
        w1 = (uu[:, 0] - uu[:, 2]) * (pv - vv[:, 2]) - (vv[:, 0] - vv[:, 2]) * (pu - uu[:, 2])
        w2 = (uu[:, 1] - uu[:, 0]) * (pv - vv[:, 0]) - (vv[:, 1] - vv[:, 0]) * (pu - uu[:, 0])
        a = area[tt]
        b0, b1, b2 = w0 / a, w1 / a, w2 / a
        inside = (b0 >= 0) & (b1 >= 0) & (b2 >= 0)
        inv = b0 * iz[tt, 0] + b1 * iz[tt, 1] + b2 * iz[tt, 2]
        d = 1.0 / inv[inside]
        np.minimum.at(flat, pv[inside] * cam.width + pu[inside], d)
        start = stop
    return depth


def project_visible(points, body, cam: Camera, depth_map: np.ndarray | None = None,
                    eps: float = DEPTH_EPS):
    """Projections (N, 2), visibility flags (N,) and depths (N,).

    A point is visible when it is in front of the camera, its nearest pixel
    is inside the image, and it is no more than ``eps`` behind the body at
    that pixel.
    """
    pts = np.asarray(points.data if isinstance(points, Tensor) else points, dtype=np.float64)
    uv, depth, behind = project_points(pts, cam)
    if depth_map is None:
        depth_map = body_depth_map(body, cam)
    iu, iv, inside = pixel_of(uv, cam)
    visible = ~behind & inside
    visible &= depth < depth_map[iv, iu] + eps
    return uv, visible, depth


@dataclass
class SplatPlan:
    """Which point lands in which pixel after z-buffering (fixed for fixed points)."""
    height: int
    width: int
    pixel: np.ndarray        # flat pixel index of each winning splat
    point: np.ndarray        # index of the winning point
    depth: np.ndarray        # (H, W) winning depth, +inf where empty
    n_points: int

    @property
    def coverage(self) -> np.ndarray:
        cov = np.zeros(self.height * self.width)
        cov[self.pixel] = 1.0
        return cov.reshape(self.height, self.width)


def plan_splats(points, body, cam: Camera, depth_map: np.ndarray | None = None) -> SplatPlan:
    """1-pixel splats; per pixel the nearest point wins, ties to the lowest index."""
    pts = np.asarray(points.data if isinstance(points, Tensor) else points, dtype=np.float64)
    uv, visible, depth = project_visible(pts, body, cam, depth_map)
    iu, iv, _ = pixel_of(uv, cam)
    ids = np.flatnonzero(visible)
    pix = iv[ids] * cam.width + iu[ids]
    order = np.lexsort((ids, depth[ids], pix))
    pix, ids = pix[order], ids[order]
    first = np.r_[True, pix[1:] != pix[:-1]] if len(pix) else np.zeros(0, dtype=bool)
    pix, ids = pix[first], ids[first]
    zbuf = np.full(cam.height * cam.width, np.inf)
    zbuf[pix] = depth[ids]
    return SplatPlan(cam.height, cam.width, pix, ids, zbuf.reshape(cam.height, cam.width), len(pts))


def splat(plan: SplatPlan, descriptors) -> Tensor:
    """(H, W, p) image of winning descriptors; differentiable in the descriptors."""
    desc = as_tensor(descriptors)
    if desc.ndim != 2 or desc.shape[0] != plan.n_points:
        raise RasterError(f"{desc.shape[0] if desc.ndim else 0} descriptors for {plan.n_points} points")
    p = desc.shape[1]
    img = np.zeros((plan.height * plan.width, p))
    img[plan.pixel] = desc.data[plan.point]

    def back(g):
        gd = np.zeros(desc.shape)
        gd[plan.point] = g.reshape(-1, p)[plan.pixel]   # winners are distinct points
        return (gd,)

    return custom("splat", (desc,), img.reshape(plan.height, plan.width, p), back)


@dataclass
class RasterBuffer:
    channels: Tensor          # (H, W, p)
    coverage: np.ndarray      # (H, W) in {0, 1}
    depth: np.ndarray         # (H, W), +inf where empty
    plan: SplatPlan


def rasterize_descriptors(points, descriptors, body, cam: Camera,
                          depth_map: np.ndarray | None = None) -> RasterBuffer:
    desc = as_tensor(descriptors)
    n = len(points.data if isinstance(points, Tensor) else points)
    if desc.ndim != 2 or desc.shape[0] != n:
        raise RasterError(f"descriptor count {desc.shape[0] if desc.ndim else 0} does not match "
                          f"{n} points")
    plan = plan_splats(points, body, cam, depth_map)
    return RasterBuffer(splat(plan, desc), plan.coverage, plan.depth, plan)


def silhouette(points, body, cam: Camera, depth_map: np.ndarray | None = None) -> np.ndarray:
    """Boolean coverage of the visible points' 1-pixel splats."""
    return plan_splats(points, body, cam, depth_map).coverage > 0
