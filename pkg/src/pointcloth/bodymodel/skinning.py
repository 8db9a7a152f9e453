"""Pose/shape parameters and linear blend skinning."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..mesh import TriMesh
from .template import BodyTemplate

N_JOINTS = 16
N_SHAPES = 4
PARAM_SIZE = N_JOINTS * 3 + N_SHAPES + 3


def canonical_axis_angle(aa: np.ndarray) -> np.ndarray:
    """Rewrite rotations so every axis-angle norm is at most pi."""
    aa = np.array(aa, dtype=np.float64).reshape(-1, 3)
    theta = np.linalg.norm(aa, axis=1)
    wrapped = np.mod(theta + np.pi, 2 * np.pi) - np.pi
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(theta > np.pi, wrapped / theta, 1.0)   # leave in-range rotations bit-exact
    return aa * scale[:, None]


@dataclass
class PoseShapeParams:
    pose: np.ndarray = field(default_factory=lambda: np.zeros((N_JOINTS, 3)))
    shape: np.ndarray = field(default_factory=lambda: np.zeros(N_SHAPES))
    root_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.pose = canonical_axis_angle(self.pose)
        self.shape = np.asarray(self.shape, dtype=np.float64).reshape(-1)
        self.root_translation = np.asarray(self.root_translation, dtype=np.float64).reshape(3)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.pose.reshape(-1), self.shape, self.root_translation])

    @classmethod
    def from_vector(cls, vec, n_joints: int = N_JOINTS) -> "PoseShapeParams":
        vec = np.asarray(vec, dtype=np.float64).reshape(-1)
        nb = len(vec) - 3 * n_joints - 3
        if nb < 0:
            raise ValueError(f"parameter vector of length {len(vec)} is too short")
        return cls(vec[:3 * n_joints].reshape(n_joints, 3), vec[3 * n_joints:3 * n_joints + nb],
                   vec[-3:])


@dataclass
class PosedBody:
    vertices: np.ndarray
    faces: np.ndarray
    params: PoseShapeParams
    joints: np.ndarray          # posed joint positions
    template: BodyTemplate

    def mesh(self) -> TriMesh:
        return TriMesh(self.vertices, self.faces)


def rodrigues(aa: np.ndarray) -> np.ndarray:
    """(N, 3) axis-angle -> (N, 3, 3) rotation matrices."""
    aa = np.asarray(aa, dtype=np.float64).reshape(-1, 3)
    theta = np.linalg.norm(aa, axis=1)
    out = np.tile(np.eye(3), (len(aa), 1, 1))
    nz = theta > 0
    if np.any(nz):
        k = aa[nz] / theta[nz, None]
        K = np.zeros((k.shape[0], 3, 3))
        K[:, 0, 1], K[:, 0, 2] = -k[:, 2], k[:, 1]
        K[:, 1, 0], K[:, 1, 2] = k[:, 2], -k[:, 0]
        K[:, 2, 0], K[:, 2, 1] = -k[:, 1], k[:, 0]
        s = np.sin(theta[nz])[:, None, None]
        c = np.cos(theta[nz])[:, None, None]
        out[nz] = np.eye(3) + s * K + (1 - c) * (K @ K)
    return out


def joint_transforms(template: BodyTemplate, params: PoseShapeParams):
    """World rotation R_j and displacement D_j = t_j - J_j of every joint.

    Joint j maps a rest point v to ``R_j (v - J_j) + J_j + D_j``.  Keeping the
    displacement separate makes the identity pose reproduce the rest mesh
    bit for bit.
    """
    order = template.joint_order()
    shape = _shape_vector(template, params)
    rest_j = template.joints + template.joint_dirs @ shape
    local = rodrigues(params.pose[:template.n_joints])
    eye = np.eye(3)
    R = np.zeros((template.n_joints, 3, 3))
    D = np.zeros((template.n_joints, 3))
    for j in order:
        p = template.parents[j]
        if p < 0:
            R[j] = local[j]
        else:
            R[j] = R[p] @ local[j]
            D[j] = (R[p] - eye) @ (rest_j[j] - rest_j[p]) + D[p]
    return R, D, rest_j


def _shape_vector(template, params):
    shape = np.zeros(template.n_shapes)
    n = min(len(params.shape), template.n_shapes)
    shape[:n] = params.shape[:n]
    return shape


def pose_body(template: BodyTemplate, params: PoseShapeParams) -> PosedBody:
    """Shape blend, then linear blend skinning, then root translation."""
    R, D, rest_j = joint_transforms(template, params)
    shaped = template.vertices + template.shape_dirs @ _shape_vector(template, params)
    W = template.skin_weights
    rel = np.einsum("jab,vjb->vja", R - np.eye(3), shaped[:, None, :] - rest_j[None])
    verts = shaped + np.einsum("vj,vja->va", W, rel + D[None]) + params.root_translation
    joints = rest_j + D + params.root_translation
    return PosedBody(verts, template.faces, params, joints, template)
