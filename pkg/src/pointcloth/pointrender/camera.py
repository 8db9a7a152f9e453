"""Pinhole camera: x right, y down, z forward; pixel (row v, col u) is centered at (u, v)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numcore import Tensor, as_tensor, bias_add, columns, concat, div, matmul, mul, add

DEFAULT_SIZE = 128
NEAR = 1e-6


class CameraError(ValueError):
    pass


@dataclass
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    width: int = DEFAULT_SIZE
    height: int = DEFAULT_SIZE

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        self.width, self.height = int(self.width), int(self.height)
        self.validate()

    def validate(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise CameraError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width <= 0 or self.height <= 0:
            raise CameraError(f"image size must be positive, got {self.width}x{self.height}")
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if err > 1e-9 or np.linalg.det(self.rotation) < 0:
            raise CameraError(f"rotation is not a proper orthonormal matrix (error {err:.2e})")

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation

    def to_camera(self, points) -> np.ndarray:
        return np.asarray(points, dtype=np.float64).reshape(-1, 3) @ self.rotation.T + self.translation


def look_at(eye, target, up=(0.0, 1.0, 0.0), fov_deg: float = 40.0,
            width: int = DEFAULT_SIZE, height: int = DEFAULT_SIZE) -> Camera:
    eye = np.asarray(eye, dtype=np.float64)
    f = np.asarray(target, dtype=np.float64) - eye
    f /= np.linalg.norm(f)
    r = np.cross(f, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(r) < 1e-12:
        raise CameraError("view direction is parallel to the up vector")
    r /= np.linalg.norm(r)
    d = np.cross(f, r)
    R = np.stack([r, d, f])
    focal = 0.5 * width / np.tan(np.radians(fov_deg) / 2)
    return Camera(focal, focal, (width - 1) / 2, (height - 1) / 2, R, -R @ eye, width, height)


def orbit_cameras(n: int, target, radius: float = 2.6, height: float = 0.0, start_deg: float = 0.0,
                  fov_deg: float = 40.0, size: int = DEFAULT_SIZE) -> list[Camera]:
    """``n`` cameras evenly spaced on a horizontal circle around ``target``."""
    target = np.asarray(target, dtype=np.float64)
    cams = []
    for k in range(n):
        a = np.radians(start_deg) + 2 * np.pi * k / n
        eye = target + np.array([radius * np.sin(a), height, radius * np.cos(a)])
        cams.append(look_at(eye, target, fov_deg=fov_deg, width=size, height=size))
    return cams


def project_points(points, cam: Camera):
    """(uv (N, 2), depth (N,), behind (N,) bool) for world points."""
    q = cam.to_camera(points)
    depth = q[:, 2]
    behind = depth <= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        u = cam.fx * q[:, 0] / depth + cam.cx
        v = cam.fy * q[:, 1] / depth + cam.cy
    return np.stack([u, v], axis=1), depth, behind


def project_tensor(points, cam: Camera) -> Tensor:
    """Differentiable (N, 2) pixel coordinates of an (N, 3) point tensor."""
    q = bias_add(matmul(as_tensor(points), cam.rotation.T), cam.translation)
    z = columns(q, 2, 3)
    u = add(mul(div(columns(q, 0, 1), z), cam.fx), cam.cx)
    v = add(mul(div(columns(q, 1, 2), z), cam.fy), cam.cy)
    return concat([u, v], axis=1)


def pixel_of(uv: np.ndarray, cam: Camera):
    """Nearest pixel (iu, iv) of each projection and whether it lies inside the image."""
    uv = np.asarray(uv, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        iu = np.floor(uv[:, 0] + 0.5)
        iv = np.floor(uv[:, 1] + 0.5)
        inside = (iu >= 0) & (iu < cam.width) & (iv >= 0) & (iv < cam.height)
    iu = np.where(inside, iu, 0).astype(np.int64)
    iv = np.where(inside, iv, 0).astype(np.int64)
    return iu, iv, inside
