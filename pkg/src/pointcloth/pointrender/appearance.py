"""Stage-two appearance capture: per-point descriptors and the renderer head."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..metrics.dice import dice_loss
from ..numcore import (Adam, Graph, NonFiniteError, Tensor, absolute, add, columns, mul, parameter,
                       reshape, sub, sum_reduce)
from .camera import Camera
from .head import DESCRIPTOR_DIM, RendererHead, render_head
from .raster import SplatPlan, body_depth_map, plan_splats, splat


@dataclass
class AppearanceFrame:
    rgb: np.ndarray          # (H, W, 3) in [0, 1]
    mask: np.ndarray         # (H, W) bool
    camera: Camera
    points: np.ndarray       # (M, 3) garment points for this frame (draped, frozen)
    body: object = None      # mesh or posed body used for occlusion

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        shape = (self.camera.height, self.camera.width)
        if self.rgb.shape != shape + (3,) or self.mask.shape != shape:
            raise ValueError(f"frame images {self.rgb.shape}/{self.mask.shape} do not match the "
                             f"{self.camera.width}x{self.camera.height} camera")


@dataclass
class AppearanceConfig:
    steps: int = 2000
    lr_descriptors: float = 3e-4
    lr_head: float = 1e-2
    seed: int = 0
    p: int = DESCRIPTOR_DIM


@dataclass
class AppearanceResult:
    descriptors: Tensor
    head: RendererHead
    log: list = field(default_factory=list)


def frame_loss(rgba: Tensor, rgb: np.ndarray, mask: np.ndarray) -> Tensor:
    """Foreground L1 on RGB (mean over foreground pixels and channels) + Dice on the mask."""
    h, w = mask.shape
    flat = reshape(rgba, (h * w, 4))
    fg = mask.reshape(-1).astype(np.float64)
    nfg = max(fg.sum(), 1.0)
    diff = absolute(sub(columns(flat, 0, 3), rgb.reshape(-1, 3)))
    l1 = mul(sum_reduce(mul(diff, np.repeat(fg[:, None], 3, axis=1))), 1.0 / (3 * nfg))
    dice = dice_loss(reshape(columns(flat, 3, 4), (h, w)), mask)
    return add(l1, dice)


def _plans(frames):
    return [plan_splats(f.points, f.body, f.camera, body_depth_map(f.body, f.camera)) for f in frames]


def render_plan(plan: SplatPlan, descriptors, head: RendererHead) -> Tensor:
    return render_head(splat(plan, descriptors), plan.coverage, head)


def fit_appearance(frames: list[AppearanceFrame], config: AppearanceConfig = AppearanceConfig(),
                   descriptors=None, head: RendererHead | None = None) -> AppearanceResult:
    """Adam on descriptors and head; the garment points of every frame stay fixed,
    so the splat correspondences are computed once up front."""
    if len(frames) < 1:
        raise ValueError("fit_appearance needs at least one frame")
    m = len(frames[0].points)
    for k, f in enumerate(frames):
        if len(f.points) != m:
            raise ValueError(f"frame {k} has {len(f.points)} points, frame 0 has {m}")
    rng = np.random.default_rng(config.seed)
    if descriptors is None:
        descriptors = parameter(rng.normal(0.0, 0.1, (m, config.p)), "descriptors")
    if head is None:
        head = RendererHead(config.p, seed=rng.integers(2 ** 31))
    plans = _plans(frames)
    opt_d = Adam([descriptors], lr=config.lr_descriptors)
    opt_h = Adam(head.params, lr=config.lr_head)
    log = []
    for step in range(config.steps):
        with Graph() as g:
            total = None
            for f, plan in zip(frames, plans):
                loss = frame_loss(render_plan(plan, descriptors, head), f.rgb, f.mask)
                total = loss if total is None else add(total, loss)
            total = mul(total, 1.0 / len(frames))
        value = float(total.data)
        if not np.isfinite(value):
            raise NonFiniteError(f"appearance loss became non-finite at step {step}")
        grads = g.backward(total)
        opt_d.step(grads)
        opt_h.step(grads)
        log.append(value)
    return AppearanceResult(descriptors, head, log)


def evaluate_view(frame: AppearanceFrame, descriptors, head: RendererHead):
    """(foreground mean absolute RGB error, Dice of the 0.5-thresholded mask)."""
    plan = plan_splats(frame.points, frame.body, frame.camera, body_depth_map(frame.body, frame.camera))
    out = render_plan(plan, descriptors, head).data
    fg = frame.mask
    mae = float(np.abs(out[..., :3] - frame.rgb)[fg].mean()) if fg.any() else 0.0
    pred = out[..., 3] > 0.5
    denom = pred.sum() + fg.sum()
    dice = float(2 * (pred & fg).sum() / denom) if denom else 1.0
    return mae, dice, out
