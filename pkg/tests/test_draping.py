import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

import pointcloth.numcore as nc
from pointcloth.bodymodel.dataset import DatasetConfig, make_dataset
from pointcloth.bodymodel.garments import GarmentStyle
from pointcloth.bodymodel.sampling import body_point_cloud
from pointcloth.bodymodel.skinning import PoseShapeParams, pose_body
from pointcloth.bodymodel.template import default_template
from pointcloth.draping import (CheckpointError, CodeError, DrapingModel, FitConfig, FitError, ModelConfig,
                                TrainConfig, average_codes, clip_code, deform, deform_seeds, encode_code,
                                evaluate_emd, fit_outfit_code, glo_train, init_codes, load_checkpoint,
                                load_model, make_seeds, read_codes, save_checkpoint, save_model,
                                write_codes)
from pointcloth.draping.fitting import SilhouetteObjective, _descend, random_codes
from pointcloth.pointrender.camera import orbit_cameras
from pointcloth.pointrender.raster import silhouette

TOY = ModelConfig(8, 16, 5, (8, 12, 16), (16, 12))
T = default_template()
REST = pose_body(T, PoseShapeParams())
CLOUD = body_point_cloud(REST)


def leaky(x):
    return np.where(x > 0, x, 0.2 * x)


# ------------------------------------------------------------------ codes

def test_clip_code_examples():
    z = np.array([2.0, 0, 0, 0, 0, 0, 0, 0])
    np.testing.assert_array_equal(clip_code(z), z / 2)
    assert np.linalg.norm(clip_code(z)) == 1.0
    h = np.full(8, 0.5 / np.sqrt(8))
    np.testing.assert_array_equal(clip_code(h), h)
    np.testing.assert_array_equal(clip_code(np.zeros(8)), np.zeros(8))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (5, 8), elements=st.floats(-1e3, 1e3)))
def test_clip_code_projects_rows(z):
    c = clip_code(z)
    n = np.linalg.norm(z, axis=1)
    assert (np.linalg.norm(c, axis=1) <= 1.0).all()
    inside = n <= 1
    np.testing.assert_array_equal(c[inside], z[inside])
    np.testing.assert_allclose(c[~inside], z[~inside] / n[~inside, None], rtol=1e-12)


def test_average_of_opposites_is_zero():
    z = np.random.default_rng(0).normal(size=8) * 0.1
    np.testing.assert_array_equal(average_codes([z, -z]), np.zeros(8))


# ------------------------------------------------------------------ network

def test_full_size_model_shapes():
    m = DrapingModel()
    e, mods = encode_code(m, np.zeros(8))
    assert e.shape == (512,)
    assert [s.shape for s, _ in mods] == [(64,), (128,), (256,)]
    out = deform(m, CLOUD, np.zeros(8), seed=0)
    assert out.shape == (8192, 3)


def test_encoder_at_zero_is_bias_only_pass():
    m = DrapingModel(TOY, seed=1)
    rng = np.random.default_rng(1)
    for t in m.parameters():
        if t.name.endswith("bias"):
            t.data = rng.normal(size=t.shape)
    h = np.zeros(8)
    for k, (w, b) in enumerate(m.encoder):
        h = b.data.copy() if k == 0 else h @ w.data + b.data
        if k < len(m.encoder) - 1:
            h = leaky(h)
    e, mods = encode_code(m, np.zeros(8))
    np.testing.assert_allclose(e.data, h, rtol=1e-14)
    ws, bs, wh, bh = m.modulation[0]
    np.testing.assert_allclose(mods[0][0].data, 1 + h @ ws.data + bs.data, rtol=1e-14)
    e2, _ = encode_code(m, np.zeros(8))
    assert e.data.tobytes() == e2.data.tobytes()


def test_code_validation():
    m = DrapingModel(TOY)
    with pytest.raises(CodeError):
        encode_code(m, np.zeros(3))
    with pytest.raises(CodeError):
        deform(m, CLOUD, np.full(8, 1.0))
    with pytest.raises(ValueError):
        deform(m, np.zeros((0, 3)), np.zeros(8))


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 20000), st.integers(0, 1000))
def test_output_cardinality_constant(n, seed):
    rng = np.random.default_rng(seed)
    cloud = rng.normal(size=(int(rng.integers(1, 300)), 3))
    m = DrapingModel(TOY, seed=seed)
    z = clip_code(rng.normal(size=8))
    assert deform(m, cloud, z, seed=seed, n_points=n).shape == (n, 3)


def test_make_seeds_uses_every_point():
    src, jit = make_seeds(1000, 8192, 3)
    counts = np.bincount(src, minlength=1000)
    assert counts.min() == 8 and counts.max() == 9 and counts.sum() == 8192
    assert jit.shape == (8192, 3) and abs(jit.std() - 0.005) < 3e-4


@settings(max_examples=15, deadline=None)
@given(arrays(np.float64, 3, elements=st.floats(-10, 10)), st.integers(0, 100))
def test_translation_equivariance(t, seed):
    m = DrapingModel(TOY, seed=seed)
    z = clip_code(np.random.default_rng(seed).normal(size=8))
    a = deform(m, CLOUD, z, seed=seed, n_points=500).data
    b = deform(m, CLOUD + t, z, seed=seed, n_points=500).data
    np.testing.assert_allclose(b - a, np.broadcast_to(t, a.shape), atol=1e-12 * max(1.0, np.abs(t).max()) * 10)


def test_seed_permutation_permutes_rows():
    m = DrapingModel(TOY, seed=2)
    z = clip_code(np.random.default_rng(2).normal(size=8))
    src, jit = make_seeds(len(CLOUD), 700, 5)
    perm = np.random.default_rng(9).permutation(700)
    a = deform_seeds(m, CLOUD, z, src, jit).data
    b = deform_seeds(m, CLOUD, z, src[perm], jit[perm]).data
    np.testing.assert_array_equal(b, a[perm])


def test_toy_network_gradcheck():
    rng = np.random.default_rng(0)
    m = DrapingModel(ModelConfig(8, 6, 5, (4, 5, 6), (5, 4)), seed=3)
    for t in m.parameters():
        t.data = t.data + rng.normal(0, 0.05, t.shape)
    cloud = rng.normal(0, 0.3, (24, 3))
    src, jit = make_seeds(24, 30, 1)
    z = nc.parameter(rng.normal(0, 0.2, 8))
    w = rng.normal(size=(30, 3))
    rep = nc.grad_check(lambda: nc.sum_reduce(nc.mul(deform_seeds(m, cloud, z, src, jit), w)),
                        m.parameters() + [z], tolerance=1e-5)
    assert rep.passed, rep.max_error


def test_frozen_context_blocks_gradients():
    m = DrapingModel(TOY)
    z = nc.parameter(np.zeros(8))
    with m.frozen():
        with nc.Graph() as g:
            loss = nc.mean_reduce(deform(m, CLOUD, z, n_points=50))
        grads = g.backward(loss)
    assert set(grads) == {z}
    assert all(t.requires_grad for t in m.parameters())


# ------------------------------------------------------------------ training

@pytest.fixture(scope="module")
def tiny_data():
    styles = [GarmentStyle("skirt", 0.1, 0.6), GarmentStyle("pants", 0.02, 0.8)]
    return make_dataset(DatasetConfig(styles, n_frames=20, stride=10, n_points=1024, seed=0))


def test_zero_learning_rate_is_identity(tiny_data):
    m = DrapingModel(TOY, seed=0)
    before = [t.data.copy() for t in m.parameters()]
    codes = nc.parameter(init_codes(2, 8, 0))
    c0 = codes.data.copy()
    e0 = evaluate_emd(m, codes, tiny_data, n_points=256)
    res = glo_train(m, codes, tiny_data, TrainConfig(steps=4, batch=2, lr_code=0.0, lr_net=0.0,
                                                     sample_points=128))
    for t, b in zip(m.parameters(), before):
        assert t.data.tobytes() == b.tobytes()
    assert codes.data.tobytes() == c0.tobytes()
    assert evaluate_emd(m, codes, tiny_data, n_points=256) == e0
    assert len(res.step_losses) == 4


def test_training_keeps_codes_in_ball(tiny_data):
    m = DrapingModel(TOY, seed=1)
    codes = nc.parameter(np.full((2, 8), 0.34))    # norm 0.96, pushed out by large steps
    res = glo_train(m, codes, tiny_data, TrainConfig(steps=15, batch=2, lr_code=0.5, sample_points=64))
    assert max(res.max_code_norms) <= 1.0
    assert (np.linalg.norm(codes.data, axis=1) <= 1.0).all()


def test_training_is_deterministic(tiny_data):
    def run():
        m = DrapingModel(TOY, seed=4)
        codes = nc.parameter(init_codes(2, 8, 4))
        r = glo_train(m, codes, tiny_data, TrainConfig(steps=5, batch=2, sample_points=64, seed=4))
        return r.step_losses, codes.data.tobytes(), m.parameters()[-1].data.tobytes()
    assert run() == run()


def test_training_aborts_on_nan(tiny_data):
    m = DrapingModel(TOY, seed=0)
    m.head_out[1].data[:] = np.nan
    codes = nc.parameter(init_codes(2, 8, 0))
    with pytest.raises(FloatingPointError, match="outfit"):
        glo_train(m, codes, tiny_data, TrainConfig(steps=1, batch=1, sample_points=32))


def test_training_rejects_bad_codes(tiny_data):
    with pytest.raises(ValueError):
        glo_train(DrapingModel(TOY), nc.parameter(np.zeros((3, 8))), tiny_data, TrainConfig(steps=1))


@pytest.mark.slow
def test_single_sample_overfit():
    style = GarmentStyle("skirt", 0.15, 0.7)
    data = make_dataset(DatasetConfig([style], n_frames=1, stride=10, n_points=2048, seed=3))
    m = DrapingModel(seed=0)
    codes = nc.parameter(init_codes(1, 8, 0))
    e0 = evaluate_emd(m, codes, data, n_points=1024)
    glo_train(m, codes, data, TrainConfig(steps=500, batch=1, sample_points=1024))
    e1 = evaluate_emd(m, codes, data, n_points=1024)
    assert e1 < 0.1 * e0, (e0, e1)


# ------------------------------------------------------------------ fitting

def _scene(model, z, n_views=2, size=48):
    cams = orbit_cameras(n_views, CLOUD.mean(axis=0), radius=2.0, size=size)
    pts = deform(model, CLOUD, z, seed=11, n_points=2048).data
    return [(silhouette(pts, REST, c), c) for c in cams]


def test_fit_schedule_single_start_is_plain_refinement():
    m = DrapingModel(TOY, seed=5)
    z_true = clip_code(np.random.default_rng(5).normal(size=8) * 0.3)
    views = _scene(m, z_true)
    cfg = FitConfig(T=1, warmup_steps=0, refine_min=5, refine_max=12, points=256, seed=2)
    res = fit_outfit_code(m, REST, views, cfg)
    start = random_codes(1, 8, cfg.init_radius, np.random.SeedSequence([cfg.seed, 0xF17]))[0]
    obj = SilhouetteObjective(m, REST, views, cfg.points, cfg.seed)
    with m.frozen():
        z, hist = _descend(obj, start, cfg.refine_max, cfg.lr, cfg.refine_min, cfg.tol, cfg.window)
    np.testing.assert_array_equal(res.code, z)
    assert res.refine_losses == hist


def test_fit_reduces_loss_and_respects_ball():
    m = DrapingModel(TOY, seed=6)
    z_true = clip_code(np.random.default_rng(6).normal(size=8) * 0.5)
    views = _scene(m, z_true)
    cfg = FitConfig(T=2, warmup_steps=10, refine_min=5, refine_max=30, points=256)
    res = fit_outfit_code(m, REST, views, cfg, jobs=2)
    assert np.linalg.norm(res.code) <= 1.0
    assert res.refine_losses[-1] <= res.refine_losses[0]
    assert len(res.hypotheses) == 2 and res.failed == 0
    # threads do not change the answer
    assert fit_outfit_code(m, REST, views, cfg, jobs=1).code.tobytes() == res.code.tobytes()


def test_fit_all_hypotheses_degenerate():
    m = DrapingModel(TOY, seed=7)
    cams = orbit_cameras(1, CLOUD.mean(axis=0), radius=2.0, size=32)
    # camera looking away from everything: no point can be visible
    cam = cams[0]
    R = np.diag([-1.0, 1.0, -1.0]) @ cam.rotation
    eye = -cam.rotation.T @ cam.translation
    away = type(cam)(cam.fx, cam.fy, cam.cx, cam.cy, R, -R @ eye, cam.width, cam.height)
    mask = np.zeros((32, 32), bool)
    mask[10:20, 10:20] = True
    with pytest.raises(FitError):
        fit_outfit_code(m, REST, [(mask, away)], FitConfig(T=2, warmup_steps=2, refine_min=1, refine_max=2,
                                                          points=64))


def test_fit_config_validation():
    with pytest.raises(ValueError):
        FitConfig(T=0)
    with pytest.raises(ValueError):
        FitConfig(refine_min=10, refine_max=5)


# ------------------------------------------------------------------ checkpoints

def test_checkpoint_roundtrip(tmp_path):
    m = DrapingModel(TOY, seed=8)
    codes = np.random.default_rng(8).normal(size=(3, 8))
    save_model(tmp_path / "m.pcm", m, [("codes", codes)], {"epoch": 3})
    m2, meta, extra = load_model(tmp_path / "m.pcm")
    assert meta["epoch"] == 3 and m2.config == TOY
    for (n1, a), (n2, b) in zip(m.named_blocks(), m2.named_blocks()):
        assert n1 == n2 and a.tobytes() == b.tobytes()
    np.testing.assert_array_equal(extra["codes"], codes)
    save_model(tmp_path / "m2.pcm", m2, [("codes", codes)], {"epoch": 3})
    assert (tmp_path / "m.pcm").read_bytes() == (tmp_path / "m2.pcm").read_bytes()


def test_checkpoint_errors(tmp_path):
    p = tmp_path / "x.pcm"
    save_checkpoint(p, [("a", np.ones((2, 3)))], {"kind": "other"})
    with pytest.raises(CheckpointError):
        load_model(p)
    data = p.read_bytes()
    p.write_bytes(data[:-5])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(p)
    p.write_bytes(b"NOTACKPT" + data[8:])
    with pytest.raises(CheckpointError):
        load_checkpoint(p)


def test_code_table_roundtrip(tmp_path):
    codes = np.random.default_rng(0).normal(size=(4, 8))
    write_codes(tmp_path / "c.txt", [3, 5, 7, 9], codes)
    ids, back = read_codes(tmp_path / "c.txt")
    assert list(ids) == [3, 5, 7, 9]
    np.testing.assert_array_equal(back, codes)
    (tmp_path / "bad.txt").write_text("1 0.1 0.2\n2 0.3\n")
    with pytest.raises(CheckpointError):
        read_codes(tmp_path / "bad.txt")
