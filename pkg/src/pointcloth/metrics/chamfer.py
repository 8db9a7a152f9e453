"""Chamfer losses: 3D between clouds, 2D between projected points and a mask."""
from __future__ import annotations

import numpy as np
from scipy.ndimage import distance_transform_edt
from scipy.spatial import cKDTree

from ..numcore import Tensor, as_tensor, gather_rows, mean_reduce, square, sub, sum_reduce


class ChamferError(ValueError):
    pass


class DegenerateFitError(ChamferError):
    """Nothing to compare: empty mask or no visible points."""


def nearest(src: np.ndarray, dst: np.ndarray):
    """Index into ``dst`` and squared distance of the nearest point, per ``src`` row.

    Ties go to the candidate the tree returns; the squared distance is
    recomputed from coordinates so it matches a brute-force scan bit for bit.
    """
    _, idx = cKDTree(dst).query(src, k=1)
    diff = src - dst[idx]
    return idx, np.square(diff).sum(axis=1)


def chamfer3(a, b) -> float:
    """mean_a min_b |a-b|^2 + mean_b min_a |a-b|^2 (squared distances)."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise ChamferError("chamfer3 needs two non-empty clouds")
    _, dab = nearest(a, b)
    _, dba = nearest(b, a)
    return float(dab.mean() + dba.mean())


def one_sided_distances(a, b) -> np.ndarray:
    """Euclidean distance from every point of ``a`` to its nearest point of ``b``."""
    _, d2 = nearest(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
    return np.sqrt(d2)


class MaskField:
    """Foreground pixel centers of a mask plus its Euclidean distance transform.

    Pixel (row v, column u) has its center at the point (u, v).  Build once
    per mask and reuse across optimizer steps.
    """

    def __init__(self, mask):
        bits = np.asarray(mask, dtype=bool)
        if bits.ndim != 2:
            raise ChamferError(f"mask must be 2-D, got shape {bits.shape}")
        if not bits.any():
            raise DegenerateFitError("mask has no foreground pixel")
        self.bits = bits
        self.height, self.width = bits.shape
        rows, cols = np.nonzero(bits)
        self.pixels = np.stack([cols, rows], axis=1).astype(np.float64)   # (u, v)
        # distance and nearest foreground pixel for every pixel center
        self.dist, (self.near_v, self.near_u) = distance_transform_edt(~bits, return_indices=True)
        self._tree = None

    @property
    def tree(self):
        if self._tree is None:
            self._tree = cKDTree(self.pixels)
        return self._tree

    def nearest_pixel(self, pts: np.ndarray):
        """Nearest foreground pixel center for continuous points (u, v).

        Candidates are the transform's answers at the four surrounding pixel
        centers.  A candidate is accepted when it is provably nearest
        (triangle inequality against each corner's transform distance);
        otherwise the point falls back to an exact tree query.
        """
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        u0 = np.clip(np.floor(pts[:, 0]).astype(np.int64), 0, self.width - 1)
        v0 = np.clip(np.floor(pts[:, 1]).astype(np.int64), 0, self.height - 1)
        best = np.full(len(pts), np.inf)
        best_q = np.zeros((len(pts), 2))
        bound = np.full(len(pts), np.inf)
        for du in (0, 1):
            for dv in (0, 1):
                cu = np.minimum(u0 + du, self.width - 1)
                cv = np.minimum(v0 + dv, self.height - 1)
                q = np.stack([self.near_u[cv, cu], self.near_v[cv, cu]], axis=1).astype(np.float64)
                d = np.linalg.norm(pts - q, axis=1)
                take = d < best
                best[take] = d[take]
                best_q[take] = q[take]
                corner = np.stack([cu, cv], axis=1)
                bound = np.minimum(bound, self.dist[cv, cu] - np.linalg.norm(pts - corner, axis=1))
        # any foreground pixel is at least `bound` away; if the candidate beats the
        # bound by a rounding margin it is the nearest
        unsure = best > np.maximum(bound, 0.0) + 1e-9
        if np.any(unsure):
            _, idx = self.tree.query(pts[unsure], k=1)
            best_q[unsure] = self.pixels[idx]
        diff = pts - best_q
        d2 = np.einsum("ij,ij->i", diff, diff)
        return best_q, d2


def chamfer2_mask(points2d, mask) -> Tensor:
    """Two-sided mean squared 2D Chamfer between points (u, v) and mask pixels.

    ``mask`` is a boolean image or a prebuilt :class:`MaskField`.  Both
    correspondence sets are computed on the current values and frozen, so
    the gradient is that of a sum of squared distances to fixed partners.
    """
    field = mask if isinstance(mask, MaskField) else MaskField(mask)
    pts = as_tensor(points2d)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ChamferError(f"expected (N, 2) projected points, got {pts.shape}")
    if pts.shape[0] == 0:
        raise DegenerateFitError("no visible points")
    q, _ = field.nearest_pixel(pts.data)
    to_mask = mean_reduce(sum_reduce(square(sub(pts, q)), axis=1))
    _, idx = cKDTree(pts.data).query(field.pixels, k=1)
    to_points = mean_reduce(sum_reduce(square(sub(gather_rows(pts, idx), field.pixels)), axis=1))
    return to_mask + to_points
