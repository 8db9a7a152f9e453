import numpy as np
import pytest

from pointcloth.io import (ConfigError, DEFAULTS, ManifestError, ManifestRecord, NetpbmError, ObjError,
                           PlyError, load_mask, load_obj, load_ply, load_ppm, parse_config, read_manifest,
                           save_ply, save_ppm, write_manifest)
from pointcloth.io.config import Config, format_defaults
from pointcloth.io.textfmt import TextFormatError, load_body, load_camera, save_body, save_camera
from pointcloth.bodymodel.skinning import PoseShapeParams
from pointcloth.mesh import TriMesh
from pointcloth.pointrender.camera import look_at


# ------------------------------------------------------------------ PLY

def test_ply_round_trip_8192(tmp_path):
    pts = np.random.default_rng(0).normal(size=(8192, 3)).astype(np.float32).astype(np.float64)
    save_ply(tmp_path / "a.ply", pts)
    np.testing.assert_array_equal(load_ply(tmp_path / "a.ply").vertices, pts)


def test_ply_minimal_ascii(tmp_path):
    p = tmp_path / "one.ply"
    p.write_text("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
                 "property float z\nend_header\n0 0 0\n")
    m = load_ply(p)
    np.testing.assert_array_equal(m.vertices, [[0, 0, 0]])
    assert m.faces is None and m.groups is None


def test_ply_truncated_binary(tmp_path):
    save_ply(tmp_path / "a.ply", np.ones((10, 3)))
    data = (tmp_path / "a.ply").read_bytes()
    (tmp_path / "b.ply").write_bytes(data[:-5])
    with pytest.raises(PlyError, match="expected 120 bytes.*got 115"):
        load_ply(tmp_path / "b.ply")


def test_ply_header_errors_are_located(tmp_path):
    p = tmp_path / "bad.ply"
    p.write_text("ply\nformat ascii 1.0\nelement vertex 1\nproperty quad x\nend_header\n0\n")
    with pytest.raises(PlyError, match="line 4"):
        load_ply(p)
    p.write_text("plx\n")
    with pytest.raises(PlyError, match="line 1"):
        load_ply(p)
    p.write_text("ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
                 "property float z\nend_header\n0 0 0\n")
    with pytest.raises(PlyError, match="expected 2 rows"):
        load_ply(p)


def test_ply_empty_cloud(tmp_path):
    save_ply(tmp_path / "e.ply", np.zeros((0, 3)))
    assert b"element vertex 0\n" in (tmp_path / "e.ply").read_bytes()
    assert load_ply(tmp_path / "e.ply").n_vertices == 0


def test_ply_deterministic_bytes(tmp_path):
    pts = np.random.default_rng(1).random((300, 3))
    save_ply(tmp_path / "a.ply", pts)
    save_ply(tmp_path / "b.ply", pts)
    assert (tmp_path / "a.ply").read_bytes() == (tmp_path / "b.ply").read_bytes()


@pytest.mark.parametrize("binary", [True, False])
def test_ply_groups_and_faces_round_trip(tmp_path, binary):
    rng = np.random.default_rng(2)
    v = rng.random((50, 3)).astype(np.float32).astype(np.float64)
    mesh = TriMesh(v, rng.integers(0, 50, (30, 3)), rng.integers(0, 7, 50))
    save_ply(tmp_path / "g.ply", mesh, binary=binary)
    back = load_ply(tmp_path / "g.ply")
    np.testing.assert_array_equal(back.vertices, v)
    np.testing.assert_array_equal(back.faces, mesh.faces)
    np.testing.assert_array_equal(back.groups, mesh.groups)


def test_ply_binary_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(3)
    mesh = TriMesh(rng.normal(size=(40, 3)), rng.integers(0, 40, (10, 3)), rng.integers(0, 3, 40))
    save_ply(tmp_path / "a.ply", mesh)
    save_ply(tmp_path / "b.ply", load_ply(tmp_path / "a.ply"))
    assert (tmp_path / "a.ply").read_bytes() == (tmp_path / "b.ply").read_bytes()


def test_ply_unwritable(tmp_path):
    with pytest.raises(OSError):
        save_ply(tmp_path / "missing" / "x.ply", np.zeros((1, 3)))


# ------------------------------------------------------------------ netpbm

def test_p5_mask_bits(tmp_path):
    (tmp_path / "m.pgm").write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 0, 255]))
    np.testing.assert_array_equal(load_mask(tmp_path / "m.pgm"), [[0, 1], [0, 1]])


def test_p5_threshold_at_128(tmp_path):
    (tmp_path / "m.pgm").write_bytes(b"P5 # c\n3 1\n255\n" + bytes([127, 128, 200]))
    np.testing.assert_array_equal(load_mask(tmp_path / "m.pgm"), [[False, True, True]])


def test_p6_round_trip_bytes(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, (5, 7, 3)).astype(np.uint8)
    save_ppm(tmp_path / "a.ppm", img)
    np.testing.assert_array_equal(load_ppm(tmp_path / "a.ppm"), img)
    save_ppm(tmp_path / "b.ppm", load_ppm(tmp_path / "a.ppm"))
    assert (tmp_path / "a.ppm").read_bytes() == (tmp_path / "b.ppm").read_bytes()


def test_netpbm_rejections(tmp_path):
    (tmp_path / "w.pgm").write_bytes(b"P5\n2 2\n65535\n" + bytes(8))
    with pytest.raises(NetpbmError, match="maxval"):
        load_mask(tmp_path / "w.pgm")
    (tmp_path / "m.pgm").write_bytes(b"P6\n1 1\n255\n" + bytes(3))
    with pytest.raises(NetpbmError, match="magic"):
        load_mask(tmp_path / "m.pgm")
    (tmp_path / "s.pgm").write_bytes(b"P5\n2 2\n255\n" + bytes(3))
    with pytest.raises(NetpbmError, match="expected 4"):
        load_mask(tmp_path / "s.pgm")


# ------------------------------------------------------------------ config

def test_config_defaults_complete():
    cfg = parse_config("")
    assert cfg.values == DEFAULTS
    assert parse_config(format_defaults()).values == DEFAULTS


def test_config_parses_and_types():
    cfg = parse_config("train.steps = 7  # short\n\nfit.lr=0.5\nmodel.trunk_widths = 4, 5\n")
    assert cfg["train.steps"] == 7 and cfg["fit.lr"] == 0.5
    assert cfg.int_list("model.trunk_widths") == (4, 5)
    assert cfg.section("fit")["lr"] == 0.5


@pytest.mark.parametrize("text,where", [
    ("train.bogus = 1\n", "cfg:1"),
    ("train.steps = 1\ntrain.steps = 2\n", "cfg:2"),
    ("\n\ntrain.steps = many\n", "cfg:3"),
    ("train.steps 3\n", "cfg:1"),
    ("train.steps = 2.5\n", "cfg:1"),
])
def test_config_errors_are_located(text, where):
    with pytest.raises(ConfigError, match=where):
        parse_config(text, "cfg")


def test_config_unknown_key_in_code():
    with pytest.raises(ConfigError):
        Config({"nope": 1})


# ------------------------------------------------------------------ manifest

def _records(tmp_path, n=3):
    out = []
    for i in range(n):
        (tmp_path / f"c{i}.ply").write_bytes(b"")
        out.append(ManifestRecord(i // 2, i % 2, np.arange(5.0) * 0.1 + i, f"c{i}.ply"))
    return out


def test_manifest_round_trip(tmp_path):
    recs = _records(tmp_path)
    write_manifest(tmp_path / "m.tsv", recs, stride=10)
    back, stride = read_manifest(tmp_path / "m.tsv")
    assert stride == 10
    for a, b in zip(recs, back):
        assert (a.outfit_id, a.frame_id, a.path) == (b.outfit_id, b.frame_id, b.path)
        np.testing.assert_array_equal(a.params, b.params)


def test_manifest_errors(tmp_path):
    recs = _records(tmp_path)
    write_manifest(tmp_path / "m.tsv", recs + [recs[0]], stride=10)
    with pytest.raises(ManifestError, match="duplicate"):
        read_manifest(tmp_path / "m.tsv")
    (tmp_path / "c1.ply").unlink()
    write_manifest(tmp_path / "m.tsv", recs, stride=10)
    with pytest.raises(ManifestError, match="c1.ply"):
        read_manifest(tmp_path / "m.tsv")
    assert len(read_manifest(tmp_path / "m.tsv", check_files=False)[0]) == 3
    (tmp_path / "m.tsv").write_text("nonsense\n")
    with pytest.raises(ManifestError, match=":1:"):
        read_manifest(tmp_path / "m.tsv")


# ------------------------------------------------------------------ obj and text formats

def test_obj_fan_triangulation(tmp_path):
    (tmp_path / "q.obj").write_text("# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 -1//1\n")
    m = load_obj(tmp_path / "q.obj")
    assert m.n_vertices == 4
    np.testing.assert_array_equal(m.faces, [[0, 1, 2], [0, 2, 3]])
    (tmp_path / "bad.obj").write_text("v 0 0 0\nf 1 2 3\n")
    with pytest.raises(ObjError, match=":2:"):
        load_obj(tmp_path / "bad.obj")


def test_body_and_camera_text_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    p = PoseShapeParams(rng.normal(0, 0.3, (16, 3)), rng.normal(size=4), rng.normal(size=3))
    save_body(tmp_path / "b.txt", p)
    q = load_body(tmp_path / "b.txt")
    np.testing.assert_array_equal(q.to_vector(), p.to_vector())
    cam = look_at([0.3, 1.2, 2.5], [0, 1, 0], width=64, height=48)
    save_camera(tmp_path / "c.txt", cam)
    c = load_camera(tmp_path / "c.txt")
    np.testing.assert_array_equal(c.rotation, cam.rotation)
    assert (c.fx, c.width, c.height) == (cam.fx, 64, 48)
    (tmp_path / "b.txt").write_text("1 2 3\n")
    with pytest.raises(TextFormatError, match="expected"):
        load_body(tmp_path / "b.txt")
