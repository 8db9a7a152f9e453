"""Finite-difference checks for every differentiable piece of the pipeline."""
from __future__ import annotations

import numpy as np

from . import numcore as nc
from .metrics.chamfer import chamfer2_mask
from .metrics.dice import dice_loss
from .metrics.emd import auction_assignment, matched_distance


def _away_from_zero(rng, shape, margin=0.1):
    x = rng.uniform(margin, 1.0, shape)
    return x * rng.choice([-1.0, 1.0], shape)


def _weighted(out, rng):
    w = rng.normal(size=out.shape)
    return nc.sum_reduce(nc.mul(out, w))


def op_cases(rng):
    """(name, params, loss_fn) for each numcore op."""
    P = nc.parameter
    a, b = P(rng.normal(size=(4, 3)), "a"), P(rng.normal(size=(4, 3)), "b")
    pos = P(rng.uniform(0.5, 2.0, (4, 3)), "den")
    m1, m2 = P(rng.normal(size=(4, 5)), "lhs"), P(rng.normal(size=(5, 3)), "rhs")
    row = P(rng.normal(size=3), "row")
    scale, shift = P(rng.normal(size=3), "scale"), P(rng.normal(size=3), "shift")
    kinked = P(_away_from_zero(rng, (4, 3)), "x")
    distinct = P(rng.permutation(12).reshape(4, 3) + rng.uniform(0, 0.5, (4, 3)), "x")
    img = P(rng.normal(size=(5, 4, 2)), "image")
    ker, kb = P(rng.normal(size=(3, 3, 2, 3)), "kernel"), P(rng.normal(size=3), "kbias")
    idx = np.array([0, 2, 2, 3, 1, 0])
    cases = [
        ("add", [a, b], lambda: nc.add(a, b)),
        ("sub", [a, b], lambda: nc.sub(a, b)),
        ("neg", [a], lambda: nc.neg(a)),
        ("mul", [a, b], lambda: nc.mul(a, b)),
        ("scale", [a], lambda: nc.mul(a, 2.5)),
        ("div", [a, pos], lambda: nc.div(a, pos)),
        ("square", [a], lambda: nc.square(a)),
        ("abs", [kinked], lambda: nc.absolute(kinked)),
        ("matmul", [m1, m2], lambda: nc.matmul(m1, m2)),
        ("bias_add", [a, row], lambda: nc.bias_add(a, row)),
        ("affine", [a, scale, shift], lambda: nc.affine(a, scale, shift)),
        ("leaky_relu", [kinked], lambda: nc.leaky_relu(kinked)),
        ("tanh", [a], lambda: nc.tanh(a)),
        ("sigmoid", [a], lambda: nc.sigmoid(a)),
        ("concat", [a, b], lambda: nc.concat([a, b], axis=1)),
        ("gather_rows", [a], lambda: nc.gather_rows(a, idx)),
        ("max_reduce", [distinct], lambda: nc.max_reduce(distinct, axis=0)),
        ("sum_reduce", [a], lambda: nc.sum_reduce(a, axis=1)),
        ("mean_reduce", [a], lambda: nc.mean_reduce(a, axis=0)),
        ("row_norm", [a], lambda: nc.row_norm(a)),
        ("reshape", [a], lambda: nc.reshape(a, (3, 4))),
        ("columns", [a], lambda: nc.columns(a, 1, 3)),
        ("conv3x3", [img, ker, kb], lambda: nc.conv3x3(img, ker, kb)),
    ]
    out = []
    for name, params, fn in cases:
        w = rng.normal(size=fn().shape)
        out.append((name, params, (lambda fn=fn, w=w: nc.sum_reduce(nc.mul(fn(), w)))))
    return out


def draping_case(rng):
    from .draping.model import DrapingModel, ModelConfig, deform_seeds, make_seeds

    model = DrapingModel(ModelConfig(8, 6, 5, (4, 5, 6), (5, 4)), seed=int(rng.integers(1 << 31)))
    for t in model.parameters():
        t.data = t.data + rng.normal(0.0, 0.05, t.shape)
    cloud = rng.normal(0.0, 0.3, (20, 3))
    src, jitter = make_seeds(len(cloud), 30, 1)
    z = nc.parameter(rng.normal(0.0, 0.2, 8), "code")
    w = rng.normal(size=(30, 3))
    fn = lambda: nc.sum_reduce(nc.mul(deform_seeds(model, cloud, z, src, jitter), w))  # noqa: E731
    return "draping network (toy width)", model.parameters() + [z], fn


def emd_case(rng):
    a = nc.parameter(rng.random((32, 3)), "a")
    b = rng.random((32, 3))
    perm = auction_assignment(a.data, b).perm
    return "emd_approx (frozen matching)", [a], lambda: matched_distance(a, b, perm)


def chamfer2_case(rng):
    mask = rng.random((24, 20)) < 0.15
    mask[3, 4] = True
    pts = nc.parameter(rng.uniform(0, 19, (25, 2)), "points2d")
    return "chamfer2_mask", [pts], lambda: chamfer2_mask(pts, mask)


def dice_case(rng):
    pred = nc.parameter(rng.random((6, 7)), "pred")
    gt = rng.random((6, 7)) < 0.5
    return "dice_loss", [pred], lambda: dice_loss(pred, gt)


def projection_case(rng):
    from .pointrender.camera import look_at, project_tensor

    cam = look_at([0.3, 0.2, 3.0], [0, 0, 0], width=32, height=32)
    pts = nc.parameter(rng.normal(0.0, 0.3, (10, 3)), "points")
    w = rng.normal(size=(10, 2))
    return "projection", [pts], lambda: nc.sum_reduce(nc.mul(project_tensor(pts, cam), w))


def render_head_case(rng):
    from .pointrender.head import RendererHead, render_head

    head = RendererHead(8, seed=int(rng.integers(1 << 31)))
    for t in head.params[1::2]:
        t.data = rng.normal(0.0, 0.1, t.shape)
    ch = nc.parameter(rng.normal(size=(6, 5, 8)), "channels")
    cov = (rng.random((6, 5)) < 0.5) * 1.0
    return "render_head", head.params + [ch], lambda: nc.mean_reduce(render_head(ch, cov, head))


def run_suite(seed: int = 0, tolerance: float = 1e-5):
    """[(name, GradCheckReport)] over every op and composite."""
    rng = np.random.default_rng(seed)
    results = [(f"op {name}", nc.grad_check(fn, params, tolerance)) for name, params, fn in op_cases(rng)]
    for make in (draping_case, emd_case, chamfer2_case, dice_case, projection_case, render_head_case):
        name, params, fn = make(rng)
        results.append((name, nc.grad_check(fn, params, tolerance)))
    return results
