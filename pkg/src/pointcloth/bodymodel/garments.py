"""Quasi-static procedural garments: horizontal rings offset from body slices.

Each ring is the convex hull of the body's cross-section at that height,
pushed outward along the hull normals by ``offset + flare * drop`` where
``drop`` is the vertical distance below the garment's top edge.  Rings are
lofted into an open triangle strip.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..mesh import TriMesh
from .skinning import PosedBody
from .template import PART_ID

KINDS = ("skirt", "dress", "pants", "top")
RING_POINTS = 48
RING_SPACING = 0.02
CROTCH_GAP = 0.02   # vertical gap between the pants seat and the leg tubes

_TORSO = (PART_ID["torso"],)
_LEG_L = (PART_ID["leg_left"],)
_LEG_R = (PART_ID["leg_right"],)
_LOWER = _TORSO + _LEG_L + _LEG_R


class GarmentError(ValueError):
    pass


@dataclass(frozen=True)
class GarmentStyle:
    """Procedural garment parameters.

    ``waist_height`` places the waistline between the hip joints (0) and the
    armpits (1); it is the top edge of skirts and pants.  Tops and dresses
    start under the armpits.  ``length`` is the covered fraction of the span
    below the top edge: down to the ankles for skirts, dresses and pants
    (measured from the hips for dresses and from the crotch for pants) and
    down to the crotch for tops.
    """
    kind: str
    flare: float = 0.0
    length: float = 0.6
    offset: float = 0.02
    waist_height: float = 0.3

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GarmentError(f"unknown garment kind {self.kind!r}")
        if not self.flare >= 0:
            raise GarmentError("flare must be >= 0")
        if not 0.2 <= self.length <= 1.0:
            raise GarmentError("length must lie in [0.2, 1.0]")
        if not self.offset > 0:
            raise GarmentError("offset must be > 0")
        if not 0.0 <= self.waist_height <= 1.0:
            raise GarmentError("waist_height must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


def landmarks(body: PosedBody) -> dict:
    j = body.joints
    names = body.template.joint_names
    idx = {n: i for i, n in enumerate(names)}
    hip = 0.5 * (j[idx["l_hip"], 1] + j[idx["r_hip"], 1])
    shoulder = 0.5 * (j[idx["l_shoulder"], 1] + j[idx["r_shoulder"], 1])
    armpit = shoulder - 0.08
    ankle_l = j[idx["l_ankle"], 1] + 0.06
    ankle_r = j[idx["r_ankle"], 1] + 0.06
    return {
        "hip": hip,
        "armpit": armpit,
        "crotch": hip - 0.10,
        "ankle": min(ankle_l, ankle_r),
        "ankle_left": ankle_l,
        "ankle_right": ankle_r,
    }


def garment_span(style: GarmentStyle, body: PosedBody) -> tuple[float, float]:
    """(top, bottom) heights of the garment on this body."""
    lm = landmarks(body)
    waist = lm["hip"] + style.waist_height * (lm["armpit"] - lm["hip"])
    if style.kind == "skirt":
        top = waist
        bottom = top - style.length * (top - lm["ankle"])
    elif style.kind == "dress":
        top = lm["armpit"] - 0.02
        bottom = lm["hip"] - style.length * (lm["hip"] - lm["ankle"])
    elif style.kind == "pants":
        top = waist
        bottom = lm["crotch"] - style.length * (lm["crotch"] - lm["ankle"])
    else:
        top = lm["armpit"] - 0.02
        bottom = top - style.length * (top - lm["crotch"] - 0.02)
    if not top - bottom > 1e-3:
        raise GarmentError(f"{style.kind}: empty vertical span on this body ({top:.3f} to {bottom:.3f})")
    return top, bottom


def _part_triangles(body: PosedBody, parts) -> np.ndarray:
    vparts = body.template.parts
    if vparts is None:
        raise GarmentError("template has no body-part labels")
    ok = np.isin(vparts, parts)
    f = body.faces[ok[body.faces].all(axis=1)]
    return body.vertices[f]


def slice_points(tris: np.ndarray, h: float) -> np.ndarray:
    """(x, z) points where triangle edges cross the plane y = h."""
    ys = tris[:, :, 1]
    hit = (ys.min(axis=1) <= h) & (ys.max(axis=1) >= h)
    t = tris[hit]
    out = []
    for a, b in ((0, 1), (1, 2), (2, 0)):
        pa, pb = t[:, a], t[:, b]
        ya, yb = pa[:, 1], pb[:, 1]
        cross = (np.minimum(ya, yb) <= h) & (np.maximum(ya, yb) >= h) & (ya != yb)
        s = (h - ya[cross]) / (yb[cross] - ya[cross])
        p = pa[cross] + s[:, None] * (pb[cross] - pa[cross])
        out.append(p[:, [0, 2]])
    return np.concatenate(out) if out else np.zeros((0, 2))


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Counter-clockwise hull (monotone chain), no repeated end point."""
    pts = np.unique(np.round(points, 12), axis=0)
    if len(pts) < 3:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def offset_ring(hull: np.ndarray, distance: float, k: int = RING_POINTS) -> np.ndarray:
    """k points at fixed world angles around the hull centroid, each moved
    ``distance`` along the outward normal of the hull edge its ray crosses."""
    if len(hull) < 3:
        raise GarmentError("degenerate body cross-section")
    c = hull.mean(axis=0)
    a, b = hull, np.roll(hull, -1, axis=0)
    e = b - a
    normal = np.stack([e[:, 1], -e[:, 0]], axis=1)
    normal /= np.linalg.norm(normal, axis=1, keepdims=True)
    phi = 2 * np.pi * np.arange(k) / k
    d = np.stack([np.sin(phi), np.cos(phi)], axis=1)  # angle 0 faces +z (front)
    # ray c + s d meets edge a + t e
    den = d[:, None, 0] * e[None, :, 1] - d[:, None, 1] * e[None, :, 0]
    ac = a[None] - c
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (ac[..., 0] * e[None, :, 1] - ac[..., 1] * e[None, :, 0]) / den
        t = (ac[..., 0] * d[:, None, 1] - ac[..., 1] * d[:, None, 0]) / den
    valid = (t >= -1e-12) & (t <= 1 + 1e-12) & (s > 0) & np.isfinite(s)
    s = np.where(valid, s, np.inf)
    which = np.argmin(s, axis=1)
    sk = s[np.arange(k), which]
    if not np.all(np.isfinite(sk)):
        raise GarmentError("ring ray missed the cross-section hull")
    return c + sk[:, None] * d + distance * normal[which]


def _loft(rings: list[np.ndarray], heights: list[float], base: int):
    k = rings[0].shape[0]
    verts = np.concatenate([np.column_stack([r[:, 0], np.full(k, h), r[:, 1]])
                            for r, h in zip(rings, heights)])
    faces = []
    for r in range(len(rings) - 1):
        for i in range(k):
            a0 = base + r * k + i
            a1 = base + r * k + (i + 1) % k
            faces += [(a0, a0 + k, a1 + k), (a0, a1 + k, a1)]
    return verts, faces


def _section(body, style, parts, top, h_from, h_to, base):
    n = max(2, int(math.ceil((h_from - h_to) / RING_SPACING)) + 1)
    heights = np.linspace(h_from, h_to, n)
    tris = _part_triangles(body, parts)
    rings = []
    for h in heights:
        pts = slice_points(tris, h)
        if len(pts) < 3:
            raise GarmentError(f"{style.kind}: body has no cross-section at height {h:.3f}")
        rings.append(offset_ring(convex_hull(pts), style.offset + style.flare * (top - h)))
    return _loft(rings, list(heights), base)


def synth_garment(style: GarmentStyle, body: PosedBody) -> TriMesh:
    """Open garment surface for ``style`` draped (quasi-statically) on ``body``."""
    top, bottom = garment_span(style, body)
    pieces = []
    if style.kind == "pants":
        lm = landmarks(body)
        crotch = lm["crotch"]
        base = 0
        if top > crotch + 1e-3:
            pieces.append(_section(body, style, _LOWER, top, top, crotch, base))
            base += len(pieces[-1][0])
        for leg, ankle in ((_LEG_L, lm["ankle_left"]), (_LEG_R, lm["ankle_right"])):
            # each leg tube stops at its own fraction of the crotch-to-ankle drop
            leg_bottom = crotch - style.length * (crotch - ankle)
            leg_top = min(crotch, top) - CROTCH_GAP
            if leg_top - leg_bottom <= 1e-3:
                continue
            pieces.append(_section(body, style, leg, top, leg_top, leg_bottom, base))
            base += len(pieces[-1][0])
    else:
        pieces.append(_section(body, style, _LOWER, top, top, bottom, 0))
    verts = np.concatenate([p[0] for p in pieces])
    faces = np.array([f for p in pieces for f in p[1]], dtype=np.int64)
    return TriMesh(verts, faces)
