from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pointcloth.bodymodel.dataset import (DatasetConfig, load_dataset, make_dataset, pose_sequence,
                                          random_outfits, save_dataset)
from pointcloth.bodymodel.garments import GarmentError, GarmentStyle, garment_span, synth_garment
from pointcloth.bodymodel.sampling import DegenerateGeometryError, body_point_cloud, sample_surface
from pointcloth.bodymodel.skinning import PoseShapeParams, canonical_axis_angle, pose_body, rodrigues
from pointcloth.bodymodel.template import (GROUP_ID, GROUPS, BodyTemplate, TemplateError, build_template,
                                           default_template, joint_order, load_template, save_template)
from pointcloth.mesh import TriMesh, point_surface_distance

from oracles import chi_square_uniform_pvalue, lbs_loop, point_triangle_distance, rotation_matrix

T = default_template()


def mesh_distance_oracle(points, mesh):
    """Exact distance to a triangle mesh, scalar oracle with a safe pruning bound."""
    tris = mesh.vertices[mesh.faces]
    cen = tris.mean(axis=1)
    rad = np.linalg.norm(tris - cen[:, None], axis=2).max(axis=1)
    rmax = rad.max()
    out = []
    for p in points:
        dc = np.linalg.norm(cen - p, axis=1)
        best = np.inf
        for k in np.argsort(dc):
            if dc[k] - rmax > best:      # centroids sorted, so no later triangle can win
                break
            best = min(best, point_triangle_distance(p, tris[k]))
        out.append(best)
    return np.array(out)


def tiny_template(weights, joints, parents):
    v = np.array([[1.0, 0.0, 0.0]] * len(weights))
    j = np.asarray(joints, dtype=np.float64)
    return BodyTemplate(v, np.zeros((0, 3), int), j, np.asarray(parents), np.asarray(weights, float),
                        np.zeros((len(v), 3, 0)), np.zeros((len(j), 3, 0)),
                        joint_names=tuple(f"j{i}" for i in range(len(j))))


# ------------------------------------------------------------------ template

def test_template_invariants():
    T.validate()
    assert T.n_joints == 16 and T.n_shapes == 4
    np.testing.assert_allclose(T.skin_weights.sum(axis=1), 1.0, atol=1e-9)
    assert (T.skin_weights >= 0).all()
    e = T.edges
    assert len({tuple(x) for x in e}) == len(e) and (e[:, 0] < e[:, 1]).all()
    assert T.faces.max() < T.n_vertices
    assert set(np.unique(T.groups)) <= set(range(len(GROUPS)))


def test_shipped_template_matches_builder():
    b = build_template()
    np.testing.assert_array_equal(b.vertices, T.vertices)
    np.testing.assert_array_equal(b.faces, T.faces)
    np.testing.assert_array_equal(b.skin_weights, T.skin_weights)
    np.testing.assert_array_equal(b.shape_dirs, T.shape_dirs)


def test_template_roundtrip(tmp_path):
    save_template(T, tmp_path / "t.ply", tmp_path / "t.txt")
    t2 = load_template(tmp_path / "t.ply", tmp_path / "t.txt")
    for f in ("vertices", "faces", "joints", "parents", "skin_weights", "shape_dirs", "joint_dirs", "groups"):
        np.testing.assert_array_equal(getattr(t2, f), getattr(T, f))


@pytest.mark.parametrize("parents", [[-1, 2, 1], [-1, -1, 0], [0, 1, 2]])
def test_non_tree_hierarchy_rejected(parents):
    with pytest.raises(TemplateError):
        joint_order(parents)
    tpl = tiny_template([[1, 0, 0]], np.zeros((3, 3)), parents)
    with pytest.raises(TemplateError):
        pose_body(tpl, PoseShapeParams(np.zeros((3, 3)), np.zeros(0)))


# ------------------------------------------------------------------ skinning

def test_identity_pose_is_exact():
    body = pose_body(T, PoseShapeParams())
    assert body.vertices.tobytes() == T.vertices.tobytes()
    np.testing.assert_array_equal(body.faces, T.faces)


def test_single_joint_quarter_turn():
    tpl = tiny_template([[1.0]], [[0, 0, 0]], [-1])
    out = pose_body(tpl, PoseShapeParams([[0, 0, np.pi / 2]], np.zeros(0))).vertices
    np.testing.assert_allclose(out, [[0, 1, 0]], atol=1e-15)


def test_half_half_blend_matches_skinning_sum():
    tpl = tiny_template([[0.5, 0.5]], [[0, 0, 0], [0, 0, 0]], [-1, 0])
    pose = np.array([[0, 0, 0], [0, 0, np.pi / 2]])
    out = pose_body(tpl, PoseShapeParams(pose, np.zeros(0))).vertices
    ref = lbs_loop(tpl.vertices, tpl.skin_weights, tpl.joints, tpl.parents,
                   [rotation_matrix(a) for a in pose])
    np.testing.assert_allclose(out, ref, atol=1e-14)
    np.testing.assert_allclose(out, [[0.5, 0.5, 0.0]], atol=1e-15)


def test_posed_template_matches_textbook_lbs():
    rng = np.random.default_rng(5)
    pose = rng.uniform(-0.6, 0.6, (16, 3))
    shape = rng.normal(size=4)
    body = pose_body(T, PoseShapeParams(pose, shape))
    shaped = T.vertices + T.shape_dirs @ shape
    joints = T.joints + T.joint_dirs @ shape
    pick = rng.choice(T.n_vertices, 120, replace=False)
    ref = lbs_loop(shaped[pick], T.skin_weights[pick], joints, T.parents,
                   [rotation_matrix(a) for a in pose])
    np.testing.assert_allclose(body.vertices[pick], ref, atol=1e-12)


def test_rodrigues_matches_matrix_exponential():
    rng = np.random.default_rng(0)
    aa = rng.normal(size=(20, 3))
    for a, R in zip(aa, rodrigues(aa)):
        np.testing.assert_allclose(R, rotation_matrix(a), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (16, 3), elements=st.floats(-8, 8)))
def test_canonical_axis_angle_bounded_and_same_rotation(aa):
    c = canonical_axis_angle(aa)
    assert (np.linalg.norm(c, axis=1) <= np.pi + 1e-9).all()
    assert canonical_axis_angle(c).tobytes() == c.tobytes()
    np.testing.assert_allclose(rodrigues(c), rodrigues(aa), atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(arrays(np.float64, 3, elements=st.floats(-5, 5)), st.integers(0, 1000))
def test_root_translation_equivariance(t, seed):
    rng = np.random.default_rng(seed)
    pose, shape = rng.uniform(-0.5, 0.5, (16, 3)), rng.normal(size=4)
    a = pose_body(T, PoseShapeParams(pose, shape))
    b = pose_body(T, PoseShapeParams(pose, shape, t))
    np.testing.assert_allclose(b.vertices - a.vertices, np.broadcast_to(t, a.vertices.shape), atol=1e-12)
    np.testing.assert_allclose(b.joints - a.joints, np.broadcast_to(t, a.joints.shape), atol=1e-12)


# ------------------------------------------------------------------ body cloud

def _shipped_counts():
    """Kept vertices and kept edges, read straight from the shipped PLY bytes."""
    data = (resources.files("pointcloth.bodymodel") / "data" / "template.ply").read_bytes()
    end = data.index(b"end_header\n") + len(b"end_header\n")
    header = data[:end].decode().splitlines()
    nv = int(next(h for h in header if h.startswith("element vertex")).split()[2])
    nf = int(next(h for h in header if h.startswith("element face")).split()[2])
    v = np.frombuffer(data, dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("g", "<i4")],
                      count=nv, offset=end)
    f = np.frombuffer(data, dtype=[("n", "u1"), ("i", "<i4", (3,))], count=nf, offset=end + v.nbytes)
    keep = v["g"] == GROUPS.index("torso_limbs")
    edges = set()
    for a, b, c in f["i"]:
        for x, y in ((a, b), (b, c), (c, a)):
            if keep[x] and keep[y]:
                edges.add((min(x, y), max(x, y)))
    return int(keep.sum()), len(edges)


def test_body_cloud_count_from_shipped_file():
    nv, ne = _shipped_counts()
    cloud = body_point_cloud(pose_body(T, PoseShapeParams()))
    assert len(cloud) == nv + ne


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_body_cloud_count_pose_invariant(seed):
    rng = np.random.default_rng(seed)
    body = pose_body(T, PoseShapeParams(rng.uniform(-1, 1, (16, 3)), rng.normal(size=4)))
    assert len(body_point_cloud(body)) == len(body_point_cloud(pose_body(T, PoseShapeParams())))


def test_body_cloud_single_edge_midpoint():
    v = np.array([[0, 0, 0], [2, 0, 0], [0, 2, 0]], float)
    groups = np.array([GROUP_ID["torso_limbs"], GROUP_ID["torso_limbs"], GROUP_ID["head"]])
    tpl = BodyTemplate(v, [[0, 1, 2]], [[0, 0, 0]], [-1], np.ones((3, 1)), np.zeros((3, 3, 0)),
                       np.zeros((1, 3, 0)), groups=groups, joint_names=("root",))
    cloud = body_point_cloud(pose_body(tpl, PoseShapeParams(np.zeros((1, 3)), np.zeros(0))))
    np.testing.assert_array_equal(cloud, [[0, 0, 0], [2, 0, 0], [1, 0, 0]])


def test_body_cloud_all_head_is_degenerate():
    v = np.eye(3)
    tpl = BodyTemplate(v, [[0, 1, 2]], [[0, 0, 0]], [-1], np.ones((3, 1)), np.zeros((3, 3, 0)),
                       np.zeros((1, 3, 0)), groups=np.full(3, GROUP_ID["head"]), joint_names=("root",))
    with pytest.raises(DegenerateGeometryError):
        body_point_cloud(pose_body(tpl, PoseShapeParams(np.zeros((1, 3)), np.zeros(0))))


def test_body_cloud_needs_groups():
    tpl = BodyTemplate(np.eye(3), [[0, 1, 2]], [[0, 0, 0]], [-1], np.ones((3, 1)), np.zeros((3, 3, 0)),
                       np.zeros((1, 3, 0)), joint_names=("root",))
    with pytest.raises(TemplateError):
        body_point_cloud(pose_body(tpl, PoseShapeParams(np.zeros((1, 3)), np.zeros(0))))


# ------------------------------------------------------------------ sampling

def test_sample_single_triangle_contained():
    tri = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float)
    pts = sample_surface(TriMesh(tri, [[0, 1, 2]]), 5000, 1)
    assert (pts[:, 0] >= 0).all() and (pts[:, 1] >= 0).all() and (pts[:, :2].sum(1) <= 1 + 1e-12).all()
    assert np.all(pts[:, 2] == 0)


def test_sample_area_proportional_binomial():
    # areas 1 and 3
    v = np.array([[0, 0, 0], [2, 0, 0], [0, 1, 0], [10, 0, 0], [13, 0, 0], [10, 2, 0]], float)
    pts = sample_surface(TriMesh(v, [[0, 1, 2], [3, 4, 5]]), 40000, 7)
    second = int((pts[:, 0] >= 10).sum())
    # binomial(40000, 0.75): sd = sqrt(40000 * .75 * .25) ~ 86.6, so 500 is ~5.8 sd
    assert abs(second - 30000) <= 500


def test_sample_chi_square_on_template():
    mesh = pose_body(T, PoseShapeParams()).mesh()
    tris = mesh.triangles()
    areas = 0.5 * np.linalg.norm(np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]), axis=1)
    # bin triangles into 20 area-balanced groups so each expected count is large
    order = np.argsort(areas)
    bins = np.empty(len(tris), int)
    bins[order] = np.minimum((np.cumsum(areas[order]) / areas.sum() * 20).astype(int), 19)
    pts = sample_surface(mesh, 100_000, 3)
    assert point_surface_distance(pts[:500], mesh).max() < 1e-9
    # recover which triangle each point came from via the same seeded stream
    rng = np.random.default_rng(3)
    which = rng.choice(len(tris), size=100_000, p=areas / areas.sum())
    counts = np.bincount(bins[which], minlength=20)
    probs = np.bincount(bins, weights=areas, minlength=20)
    assert chi_square_uniform_pvalue(counts, probs) > 0.01


def test_sample_determinism_and_errors():
    mesh = pose_body(T, PoseShapeParams()).mesh()
    assert sample_surface(mesh, 100, 9).tobytes() == sample_surface(mesh, 100, 9).tobytes()
    flat = TriMesh(np.zeros((3, 3)), [[0, 1, 2]])
    with pytest.raises(DegenerateGeometryError):
        sample_surface(flat, 10, 0)
    with pytest.raises(ValueError):
        sample_surface(mesh, 0, 0)


def test_point_surface_distance_matches_oracle():
    rng = np.random.default_rng(2)
    mesh = pose_body(T, PoseShapeParams()).mesh()
    pts = rng.uniform(-0.5, 0.5, (40, 3)) + [0, 1.0, 0]
    np.testing.assert_allclose(point_surface_distance(pts, mesh), mesh_distance_oracle(pts, mesh),
                               atol=1e-12)


# ------------------------------------------------------------------ garments

@pytest.mark.parametrize("kind", ["pants", "top"])
def test_flare_free_garment_hugs_body(kind):
    body = pose_body(T, PoseShapeParams())
    g = synth_garment(GarmentStyle(kind, flare=0.0, length=0.8, offset=0.02, waist_height=0.3), body)
    pick = np.random.default_rng(0).choice(g.n_vertices, min(150, g.n_vertices), replace=False)
    d = mesh_distance_oracle(g.vertices[pick], body.mesh())
    assert d.min() >= 0.015 and d.max() <= 0.035, (d.min(), d.max())


def test_longer_skirt_reaches_lower():
    body = pose_body(T, PoseShapeParams())
    long_ = synth_garment(GarmentStyle("skirt", 0.1, 1.0), body)
    short = synth_garment(GarmentStyle("skirt", 0.1, 0.5), body)
    assert long_.vertices[:, 1].min() < short.vertices[:, 1].min()


def test_garment_deterministic_and_gravity_aligned():
    rng = np.random.default_rng(1)
    body = pose_body(T, PoseShapeParams(rng.uniform(-0.3, 0.3, (16, 3))))
    style = GarmentStyle("dress", 0.2, 0.7)
    a, b = synth_garment(style, body), synth_garment(style, body)
    assert a.vertices.tobytes() == b.vertices.tobytes()
    # rings are horizontal: each run of RING_POINTS vertices shares one height
    from pointcloth.bodymodel.garments import RING_POINTS
    ys = a.vertices[:, 1].reshape(-1, RING_POINTS)
    assert np.all(ys == ys[:, :1])


def test_garment_style_validation():
    with pytest.raises(GarmentError):
        GarmentStyle("hat")
    with pytest.raises(GarmentError):
        GarmentStyle("skirt", length=0.1)
    with pytest.raises(GarmentError):
        GarmentStyle("skirt", offset=0.0)
    with pytest.raises(GarmentError):
        GarmentStyle("skirt", flare=-0.1)


def test_garment_span_ordering():
    body = pose_body(T, PoseShapeParams())
    for kind in ("skirt", "dress", "pants", "top"):
        top, bottom = garment_span(GarmentStyle(kind, length=0.6), body)
        assert top > bottom


# ------------------------------------------------------------------ dataset

def test_dataset_shape_and_point_count():
    ts = make_dataset(DatasetConfig(random_outfits(2, 0), n_frames=50, stride=10, seed=1))
    assert len(ts.outfits) == 2 and [len(f) for f in ts.frames] == [5, 5]
    assert [fr.frame_id for fr in ts.frames[0]] == [0, 10, 20, 30, 40]
    assert all(fr.cloud.shape == (8192, 3) for fs in ts.frames for fr in fs)
    assert ts.stride == 10


def _tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_dataset_serialization_byte_identical(tmp_path):
    cfg = DatasetConfig(random_outfits(2, 3), n_frames=20, stride=10, n_points=512, seed=4)
    save_dataset(make_dataset(cfg), tmp_path / "a")
    save_dataset(make_dataset(cfg, jobs=2), tmp_path / "b")
    assert _tree_bytes(tmp_path / "a") == _tree_bytes(tmp_path / "b")
    back = load_dataset(tmp_path / "a")
    ref = make_dataset(cfg)
    for fa, fb in zip(back.frames, ref.frames):
        for x, y in zip(fa, fb):
            np.testing.assert_array_equal(x.cloud, y.cloud)
            np.testing.assert_array_equal(x.params.to_vector(), y.params.to_vector())
    assert [s for _, s in back.outfits] == [s for _, s in ref.outfits]


def test_pose_sequence_interpolates_keyframes():
    seq = pose_sequence(51, 25, 0)
    assert len(seq) == 51
    mid = 0.5 * (seq[0].to_vector() + seq[25].to_vector())
    # linear between keys (pose canonicalisation is a no-op inside the limits)
    np.testing.assert_allclose(0.5 * (seq[12].to_vector() + seq[13].to_vector()), mid, atol=0.05)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_point_surface_distance_random_meshes(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 40))
    verts = (rng.uniform(-1, 1, (n, 1, 3)) + rng.normal(0, 0.2, (n, 3, 3))).reshape(-1, 3)
    mesh = TriMesh(verts, np.arange(3 * n).reshape(-1, 3))
    pts = rng.normal(0, float(rng.choice([0.3, 3.0])), (30, 3))
    np.testing.assert_allclose(point_surface_distance(pts, mesh), mesh_distance_oracle(pts, mesh),
                               rtol=1e-12, atol=1e-12)
