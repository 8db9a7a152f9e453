"""Articulated body template: data type, file format, and the procedural builder.

The shipped template (``data/template.ply`` + ``data/template_rig.txt``) is
produced by :func:`build_template`.  Units are meters, +y is up, +z faces
forward and +x is the body's left.

Sidecar schema (``template_rig.txt``), whitespace separated, ``#`` comments::

    pointcloth-rig 1
    joints J
    <name> <parent> <x> <y> <z>          # J lines, parent -1 for the root
    weights V J
    <J floats>                           # V lines, rows sum to 1
    shape_dirs V B
    <3*B floats: dx_b0 dy_b0 dz_b0 dx_b1 ...>   # V lines
    joint_dirs J B
    <3*B floats>                         # J lines
    parts V
    <int>                                # V lines, body part id (see PARTS)
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from ..io.ply import load_ply, save_ply
from ..mesh import TriMesh

GROUPS = ("head", "hand_left", "hand_right", "foot_left", "foot_right", "torso_limbs")
GROUP_ID = {g: i for i, g in enumerate(GROUPS)}
DROPPED_GROUPS = ("head", "hand_left", "hand_right", "foot_left", "foot_right")

PARTS = ("torso", "head", "leg_left", "leg_right", "arm_left", "arm_right",
         "foot_left", "foot_right", "hand_left", "hand_right")
PART_ID = {p: i for i, p in enumerate(PARTS)}

JOINT_NAMES = ("pelvis", "chest", "neck", "head",
               "l_shoulder", "l_elbow", "l_wrist", "r_shoulder", "r_elbow", "r_wrist",
               "l_hip", "l_knee", "l_ankle", "r_hip", "r_knee", "r_ankle")
JOINT_PARENTS = (-1, 0, 1, 2, 1, 4, 5, 1, 7, 8, 0, 10, 11, 0, 13, 14)
SHAPE_NAMES = ("height", "girth", "leg_length", "shoulder_width")


class TemplateError(ValueError):
    pass


@dataclass
class BodyTemplate:
    vertices: np.ndarray        # (V, 3) rest pose
    faces: np.ndarray           # (F, 3)
    joints: np.ndarray          # (J, 3) rest joint positions
    parents: np.ndarray         # (J,) parent index, -1 at the root
    skin_weights: np.ndarray    # (V, J)
    shape_dirs: np.ndarray      # (V, 3, B)
    joint_dirs: np.ndarray      # (J, 3, B)
    groups: np.ndarray | None = None   # (V,) index into GROUPS
    parts: np.ndarray | None = None    # (V,) index into PARTS
    joint_names: tuple = JOINT_NAMES

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        self.joints = np.asarray(self.joints, dtype=np.float64)
        self.parents = np.asarray(self.parents, dtype=np.int64)
        self.skin_weights = np.asarray(self.skin_weights, dtype=np.float64)
        self.shape_dirs = np.asarray(self.shape_dirs, dtype=np.float64)
        self.joint_dirs = np.asarray(self.joint_dirs, dtype=np.float64)
        self._edges = None

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def n_shapes(self) -> int:
        return self.shape_dirs.shape[2]

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges (a < b), sorted lexicographically."""
        if self._edges is None:
            self._edges = mesh_edges(self.faces)
        return self._edges

    def joint_order(self) -> np.ndarray:
        """Topological order of joints (parents first); raises on a non-tree."""
        return joint_order(self.parents)

    def validate(self) -> None:
        v, j = self.n_vertices, self.n_joints
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= v):
            raise TemplateError("face index out of range")
        if self.skin_weights.shape != (v, j):
            raise TemplateError(f"skin weights {self.skin_weights.shape}, expected {(v, j)}")
        if np.any(self.skin_weights < 0) or \
                np.max(np.abs(self.skin_weights.sum(axis=1) - 1.0)) > 1e-9:
            raise TemplateError("skin weight rows must be nonnegative and sum to 1")
        if self.shape_dirs.shape[:2] != (v, 3) or self.joint_dirs.shape != (j, 3, self.n_shapes):
            raise TemplateError("shape direction arrays have inconsistent shapes")
        self.joint_order()


def joint_order(parents) -> np.ndarray:
    parents = np.asarray(parents, dtype=np.int64)
    n = len(parents)
    roots = np.flatnonzero(parents < 0)
    if len(roots) != 1:
        raise TemplateError(f"joint hierarchy needs exactly one root, found {len(roots)}")
    if np.any(parents >= n):
        raise TemplateError("joint parent index out of range")
    children = [[] for _ in range(n)]
    for j, p in enumerate(parents):
        if p >= 0:
            children[p].append(j)
    order, stack = [], [int(roots[0])]
    while stack:
        j = stack.pop()
        order.append(j)
        stack.extend(reversed(children[j]))
    if len(order) != n:
        raise TemplateError("joint hierarchy has a cycle or unreachable joints")
    return np.array(order)


def mesh_edges(faces) -> np.ndarray:
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e.sort(axis=1)
    return np.unique(e, axis=0)


# ---------------------------------------------------------------- file format

def save_template(template: BodyTemplate, ply_path, rig_path) -> None:
    save_ply(ply_path, TriMesh(template.vertices, template.faces, template.groups))
    v, j, b = template.n_vertices, template.n_joints, template.n_shapes
    out = ["pointcloth-rig 1", f"joints {j}"]
    for k in range(j):
        x, y, z = template.joints[k]
        out.append(f"{template.joint_names[k]} {int(template.parents[k])} {float(x)!r} {float(y)!r} {float(z)!r}")
    out.append(f"weights {v} {j}")
    out += [" ".join(repr(float(w)) for w in row) for row in template.skin_weights]
    out.append(f"shape_dirs {v} {b}")
    out += [" ".join(repr(float(x)) for x in row.T.reshape(-1)) for row in template.shape_dirs]
    out.append(f"joint_dirs {j} {b}")
    out += [" ".join(repr(float(x)) for x in row.T.reshape(-1)) for row in template.joint_dirs]
    parts = template.parts if template.parts is not None else np.zeros(v, dtype=np.int64)
    out.append(f"parts {v}")
    out += [str(int(p)) for p in parts]
    Path(rig_path).write_text("\n".join(out) + "\n")


def _rig_lines(text):
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield n, line.split()


def load_template(ply_path, rig_path) -> BodyTemplate:
    mesh = load_ply(ply_path)
    if mesh.faces is None:
        raise TemplateError(f"{ply_path}: template mesh has no faces")
    lines = list(_rig_lines(Path(rig_path).read_text()))
    pos = 0

    def take(keyword, nargs):
        nonlocal pos
        if pos >= len(lines):
            raise TemplateError(f"{rig_path}: missing section {keyword!r}")
        n, tok = lines[pos]
        if tok[0] != keyword or len(tok) != nargs + 1:
            raise TemplateError(f"{rig_path}:{n}: expected '{keyword}' with {nargs} counts")
        pos += 1
        return [int(t) for t in tok[1:]]

    def rows(count, width, where):
        nonlocal pos
        if pos + count > len(lines):
            raise TemplateError(f"{rig_path}: section {where} truncated")
        out = []
        for n, tok in lines[pos:pos + count]:
            if len(tok) != width:
                raise TemplateError(f"{rig_path}:{n}: expected {width} values, got {len(tok)}")
            out.append(tok)
        pos += count
        return out

    if pos >= len(lines) or lines[0][1][:2] != ["pointcloth-rig", "1"]:
        raise TemplateError(f"{rig_path}: bad magic line")
    pos = 1
    (j,) = take("joints", 1)
    jrows = rows(j, 5, "joints")
    names = tuple(r[0] for r in jrows)
    parents = np.array([int(r[1]) for r in jrows])
    joints = np.array([[float(x) for x in r[2:]] for r in jrows])
    v, j2 = take("weights", 2)
    if v != mesh.n_vertices or j2 != j:
        raise TemplateError(f"{rig_path}: weights section is {v}x{j2}, mesh has {mesh.n_vertices} vertices")
    weights = np.array(rows(v, j, "weights"), dtype=np.float64)
    v2, b = take("shape_dirs", 2)
    sd = np.array(rows(v2, 3 * b, "shape_dirs"), dtype=np.float64).reshape(v2, b, 3).transpose(0, 2, 1)
    j3, b2 = take("joint_dirs", 2)
    jd = np.array(rows(j3, 3 * b2, "joint_dirs"), dtype=np.float64).reshape(j3, b2, 3).transpose(0, 2, 1)
    (v3,) = take("parts", 1)
    parts = np.array([int(r[0]) for r in rows(v3, 1, "parts")])
    t = BodyTemplate(mesh.vertices, mesh.faces, joints, parents, weights, sd, jd,
                     groups=mesh.groups, parts=parts, joint_names=names)
    t.validate()
    return t


_DEFAULT = None


def default_template() -> BodyTemplate:
    """The shipped desk-scale humanoid (cached)."""
    global _DEFAULT
    if _DEFAULT is None:
        base = resources.files("pointcloth.bodymodel") / "data"
        with resources.as_file(base / "template.ply") as ply, \
                resources.as_file(base / "template_rig.txt") as rig:
            _DEFAULT = load_template(ply, rig)
    return _DEFAULT


# ---------------------------------------------------------------- builder

_J = {n: i for i, n in enumerate(JOINT_NAMES)}


def _rest_joints() -> np.ndarray:
    s45 = np.sqrt(0.5)
    arm = np.array([s45, -s45, 0.0])
    j = np.zeros((16, 3))
    j[_J["pelvis"]] = (0.0, 0.95, 0.0)
    j[_J["chest"]] = (0.0, 1.22, 0.0)
    j[_J["neck"]] = (0.0, 1.48, 0.0)
    j[_J["head"]] = (0.0, 1.58, 0.0)
    for side, sx in (("l", 1.0), ("r", -1.0)):
        m = np.array([sx, 1.0, 1.0])
        sh = np.array([0.19, 1.42, 0.0])
        j[_J[f"{side}_shoulder"]] = sh * m
        j[_J[f"{side}_elbow"]] = (sh + 0.27 * arm) * m
        j[_J[f"{side}_wrist"]] = (sh + 0.51 * arm) * m
        j[_J[f"{side}_hip"]] = np.array([0.10, 0.90, 0.0]) * m
        j[_J[f"{side}_knee"]] = np.array([0.10, 0.50, 0.01]) * m
        j[_J[f"{side}_ankle"]] = np.array([0.10, 0.09, 0.0]) * m
    return j


def _frame(axis):
    """Two unit vectors orthogonal to ``axis``; the first is horizontal when possible."""
    a = axis / np.linalg.norm(axis)
    ref = np.array([0.0, 0.0, 1.0]) if abs(a[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(ref, a)
    u /= np.linalg.norm(u)
    w = np.cross(a, u)
    return u, w


class _Builder:
    def __init__(self):
        self.verts, self.faces, self.parts, self.axis_pt, self.axis_s = [], [], [], [], []
        self.n = 0

    def tube(self, part, start, end, stations, k, cap_start=True, cap_end=True):
        """Lofted tube along start->end; stations are (t, ru, rw) ellipse radii."""
        start, end = np.asarray(start, float), np.asarray(end, float)
        axis = end - start
        u, w = _frame(axis)
        base = self.n
        ang = 2 * np.pi * np.arange(k) / k
        for t, ru, rw in stations:
            c = start + t * axis
            for a in ang:
                self.verts.append(c + ru * np.cos(a) * u + rw * np.sin(a) * w)
                self.parts.append(part)
                self.axis_pt.append(c)
                self.axis_s.append(t)
        nr = len(stations)
        for r in range(nr - 1):
            for i in range(k):
                a0 = base + r * k + i
                a1 = base + r * k + (i + 1) % k
                b0, b1 = a0 + k, a1 + k
                self.faces += [(a0, a1, b1), (a0, b1, b0)]
        self.n = base + nr * k
        for end_ring, flag, t in ((0, cap_start, stations[0][0]), (nr - 1, cap_end, stations[-1][0])):
            if not flag:
                continue
            c = start + t * axis
            self.verts.append(c)
            self.parts.append(part)
            self.axis_pt.append(c)
            self.axis_s.append(t)
            ci = self.n
            self.n += 1
            ring = base + end_ring * k
            for i in range(k):
                a0, a1 = ring + i, ring + (i + 1) % k
                self.faces.append((ci, a1, a0) if end_ring == 0 else (ci, a0, a1))
        return base


def _chain_weights(s, knots, joints, nj, blend):
    """Piecewise-rigid weights along a limb, blended linearly across each knot.

    ``knots`` are the boundaries between consecutive ``joints`` along the
    axis parameter ``s``; ``joints[k]`` owns [knots[k-1], knots[k]).
    """
    w = np.zeros(nj)
    for b, kn in enumerate(knots):
        d = s - kn
        if -blend < d < blend:
            t = 0.5 + 0.5 * d / blend
            w[joints[b]] += 1.0 - t
            w[joints[b + 1]] += t
            return w
    w[joints[int(np.searchsorted(knots, s, side="right"))]] = 1.0
    return w


def build_template() -> BodyTemplate:
    """Build the procedural humanoid (about 1100 vertices, 16 joints, 4 shape directions)."""
    J = _rest_joints()
    B = _Builder()
    P = PART_ID

    torso = [(0.00, 0.070, 0.070), (0.05, 0.140, 0.095), (0.12, 0.172, 0.110), (0.20, 0.168, 0.106),
             (0.28, 0.148, 0.096), (0.36, 0.140, 0.092), (0.44, 0.143, 0.096), (0.52, 0.150, 0.103),
             (0.60, 0.158, 0.108), (0.68, 0.163, 0.110), (0.76, 0.166, 0.106), (0.84, 0.170, 0.095),
             (0.92, 0.140, 0.080), (1.00, 0.075, 0.062)]
    B.tube(P["torso"], (0, 0.80, 0), (0, 1.48, 0), torso, 24)
    head = [(0.00, 0.060, 0.060), (0.10, 0.055, 0.055), (0.25, 0.060, 0.062), (0.40, 0.085, 0.090),
            (0.55, 0.098, 0.104), (0.70, 0.098, 0.104), (0.85, 0.080, 0.085), (1.00, 0.040, 0.045)]
    B.tube(P["head"], (0, 1.46, 0), (0, 1.80, 0.01), head, 12)

    legs = [(0.00, 0.062, 0.062), (0.08, 0.074, 0.076), (0.18, 0.075, 0.077), (0.28, 0.072, 0.074),
            (0.38, 0.066, 0.068), (0.46, 0.058, 0.060), (0.52, 0.055, 0.058), (0.60, 0.057, 0.062),
            (0.70, 0.052, 0.056), (0.80, 0.044, 0.047), (0.90, 0.038, 0.040), (1.00, 0.036, 0.038)]
    arms = [(0.00, 0.048, 0.050), (0.12, 0.046, 0.048), (0.26, 0.042, 0.044), (0.40, 0.038, 0.040),
            (0.52, 0.036, 0.038), (0.64, 0.037, 0.039), (0.78, 0.034, 0.036), (0.90, 0.030, 0.032),
            (1.00, 0.027, 0.029)]
    s45 = np.sqrt(0.5)
    for side, sx in (("left", 1.0), ("right", -1.0)):
        m = np.array([sx, 1.0, 1.0])
        hip, ank = J[_J[f"{side[0]}_hip"]], J[_J[f"{side[0]}_ankle"]]
        top = hip + np.array([0.0, 0.05, 0.0])
        bottom = ank + np.array([0.0, -0.01, 0.0])
        B.tube(P[f"leg_{side}"], top, bottom, legs, 14)
        B.tube(P[f"foot_{side}"], ank + np.array([0, -0.05, -0.04]), ank + np.array([0, -0.06, 0.16]),
               [(0.0, 0.040, 0.030), (0.5, 0.045, 0.030), (1.0, 0.040, 0.022)], 8)
        sh, wr = J[_J[f"{side[0]}_shoulder"]], J[_J[f"{side[0]}_wrist"]]
        arm_dir = np.array([s45, -s45, 0.0]) * m
        B.tube(P[f"arm_{side}"], sh - 0.04 * arm_dir, wr, arms, 10)
        B.tube(P[f"hand_{side}"], wr, wr + 0.16 * arm_dir,
               [(0.0, 0.030, 0.018), (0.5, 0.040, 0.016), (1.0, 0.030, 0.012)], 8)

    verts = np.array(B.verts)
    faces = np.array(B.faces, dtype=np.int64)
    parts = np.array(B.parts)
    axis_pt = np.array(B.axis_pt)
    nv, nj = len(verts), 16

    # skinning
    W = np.zeros((nv, nj))
    for i in range(nv):
        p, y = PARTS[parts[i]], verts[i, 1]
        if p == "torso":
            W[i] = _chain_weights(y, [1.10, 1.40], [_J["pelvis"], _J["chest"], _J["neck"]],
                                  nj, 0.06)
        elif p == "head":
            W[i] = _chain_weights(y, [1.49, 1.60], [_J["chest"], _J["neck"], _J["head"]],
                                  nj, 0.04)
        elif p.startswith("leg"):
            sd = p[4]
            W[i] = _chain_weights(-y, [-0.93, -J[_J[f"{sd}_knee"], 1], -0.12],
                                  [_J["pelvis"], _J[f"{sd}_hip"], _J[f"{sd}_knee"], _J[f"{sd}_ankle"]],
                                  nj, 0.05)
        elif p.startswith("arm"):
            sd = p[4]
            d = np.linalg.norm(verts[i] - J[_J[f"{sd}_shoulder"]]) * np.sign(
                np.dot(verts[i] - J[_J[f"{sd}_shoulder"]],
                       J[_J[f"{sd}_elbow"]] - J[_J[f"{sd}_shoulder"]]))
            W[i] = _chain_weights(d, [0.0, 0.27, 0.50],
                                  [_J["chest"], _J[f"{sd}_shoulder"], _J[f"{sd}_elbow"],
                                   _J[f"{sd}_wrist"]], nj, 0.04)
        elif p.startswith("foot"):
            W[i, _J[f"{p[5]}_ankle"]] = 1.0
        else:
            W[i, _J[f"{p[5]}_wrist"]] = 1.0

    # quantize through float32 so the PLY round trip is exact
    verts = verts.astype(np.float32).astype(np.float64)

    groups = np.full(nv, GROUP_ID["torso_limbs"])
    for name in ("head", "hand_left", "hand_right", "foot_left", "foot_right"):
        groups[parts == P[name]] = GROUP_ID[name]

    def shape_field(x, pts, part_of, axis_of):
        """Shape displacement for points ``x`` (rows) -> (N, 3, 4)."""
        d = np.zeros((len(x), 3, 4))
        d[:, 1, 0] = 0.03 * x[:, 1]
        if axis_of is not None:
            girth = np.where(part_of == P["torso"], 0.08, 0.05)
            d[:, :, 1] = girth[:, None] * (x - axis_of)
        legs_mask = np.isin(part_of, [P["leg_left"], P["leg_right"], P["foot_left"], P["foot_right"]])
        d[legs_mask, 1, 2] = 0.05 * (x[legs_mask, 1] - 0.90)
        arm_mask = np.isin(part_of, [P["arm_left"], P["arm_right"], P["hand_left"], P["hand_right"]])
        d[arm_mask, 0, 3] = 0.025 * np.sign(x[arm_mask, 0])
        up = part_of == P["torso"]
        d[up, 0, 3] = 0.14 * x[up, 0] * np.clip((x[up, 1] - 1.28) / 0.14, 0.0, 1.0)
        return d

    shape_dirs = shape_field(verts, verts, parts, axis_pt)
    joint_part = np.array([P["torso"], P["torso"], P["head"], P["head"],
                           P["arm_left"], P["arm_left"], P["arm_left"],
                           P["arm_right"], P["arm_right"], P["arm_right"],
                           P["leg_left"], P["leg_left"], P["leg_left"],
                           P["leg_right"], P["leg_right"], P["leg_right"]])
    joint_dirs = shape_field(J, J, joint_part, None)
    # shoulders sit at the torso/arm boundary: move them with the arms
    for nm in ("l_shoulder", "r_shoulder"):
        joint_dirs[_J[nm], 0, 3] = 0.025 * np.sign(J[_J[nm], 0])
    joint_dirs[[_J["l_hip"], _J["r_hip"]], 1, 2] = 0.0

    t = BodyTemplate(verts, faces, J, np.array(JOINT_PARENTS), W, shape_dirs, joint_dirs,
                     groups=groups, parts=parts)
    t.validate()
    return t
