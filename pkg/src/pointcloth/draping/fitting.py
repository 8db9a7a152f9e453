"""Outfit-code estimation from garment silhouettes with the network frozen.

Schedule: T random codes are optimized for a short warm-up each, their mean
(projected to the unit ball) is the start of a longer refinement that stops
once the loss stalls.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..bodymodel.sampling import body_point_cloud
from ..metrics.chamfer import DegenerateFitError, MaskField, chamfer2_mask
from ..numcore import Adam, Graph, add, gather_rows, mul, parameter
from ..pointrender.camera import project_tensor
from ..pointrender.raster import body_depth_map, project_visible
from .model import DrapingModel, clip_code, deform_seeds, make_seeds


class FitError(RuntimeError):
    pass


@dataclass
class FitConfig:
    T: int = 4
    warmup_steps: int = 100
    refine_min: int = 50
    refine_max: int = 400
    tol: float = 1e-4           # relative loss change over `window` steps
    window: int = 20
    lr: float = 0.02            # code learning rate; the network is frozen
    points: int = 2048          # garment points per evaluation
    init_radius: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.refine_min > self.refine_max:
            raise ValueError("refine_min must not exceed refine_max")


@dataclass
class FitResult:
    code: np.ndarray
    loss: float
    refine_losses: list = field(default_factory=list)
    hypotheses: list = field(default_factory=list)     # codes after warm-up
    failed: int = 0


def random_codes(n: int, dim: int, radius: float, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * (radius * rng.random(n) ** (1.0 / dim))[:, None]


def average_codes(codes) -> np.ndarray:
    return clip_code(np.mean(np.asarray(codes, dtype=np.float64), axis=0))


class SilhouetteObjective:
    """Mean over views of the 2D Chamfer between visible projected points and the mask."""

    def __init__(self, model: DrapingModel, body, views, points: int, seed):
        if not views:
            raise ValueError("need at least one (mask, camera) view")
        self.model = model
        self.cloud = body_point_cloud(body)
        self.src, self.jitter = make_seeds(len(self.cloud), points, seed)
        self.views = [(MaskField(mask), cam, body_depth_map(body, cam)) for mask, cam in views]

    def points(self, z):
        return deform_seeds(self.model, self.cloud, z, self.src, self.jitter)

    def __call__(self, z):
        out = self.points(z)
        total = None
        for field_, cam, depth in self.views:
            _, vis, _ = project_visible(out.data, None, cam, depth_map=depth)
            idx = np.flatnonzero(vis)
            if idx.size == 0:
                raise DegenerateFitError("no garment point is visible in a view")
            loss = chamfer2_mask(project_tensor(gather_rows(out, idx), cam), field_)
            total = loss if total is None else add(total, loss)
        return mul(total, 1.0 / len(self.views))

    def value(self, z) -> float:
        with self.model.frozen():
            return float(self(np.asarray(z, dtype=np.float64)).data)


def _descend(objective, z0, steps, lr, min_steps=None, tol=None, window=20):
    z = parameter(np.array(z0, dtype=np.float64), "code")
    opt = Adam([z], lr=lr)
    hist = []
    for step in range(steps):
        with Graph() as g:
            loss = objective(z)
        hist.append(float(loss.data))
        if not np.isfinite(hist[-1]):
            raise FloatingPointError(f"fit loss became non-finite at step {step}")
        if tol is not None and step >= window and step + 1 >= min_steps:
            prev = hist[step - window]
            if abs(hist[-1] - prev) <= tol * max(abs(prev), 1e-300):
                break
        opt.step(g.backward(loss))
        clip_code(z)
    return z.data.copy(), hist


def fit_outfit_code(model: DrapingModel, body, views, config: FitConfig = FitConfig(),
                    jobs: int = 1) -> FitResult:
    """Estimate the code whose draped garment matches the silhouettes in ``views``.

    ``views`` is a list of (boolean mask, camera) pairs.
    """
    with model.frozen():
        objective = SilhouetteObjective(model, body, views, config.points, config.seed)
        starts = random_codes(config.T, model.config.code_dim, config.init_radius,
                              np.random.SeedSequence([config.seed, 0xF17]))

        def warm(z0):
            try:
                return _descend(objective, z0, config.warmup_steps, config.lr)[0]
            except DegenerateFitError:
                return None

        if jobs > 1 and config.T > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                warmed = list(pool.map(warm, starts))
        else:
            warmed = [warm(z) for z in starts]
        ok = [z for z in warmed if z is not None]
        if not ok:
            raise FitError(f"all {config.T} hypotheses reached a state with no visible points")
        start = average_codes(ok)
        try:
            code, hist = _descend(objective, start, config.refine_max, config.lr,
                                  config.refine_min, config.tol, config.window)
        except DegenerateFitError as e:
            raise FitError(f"refinement from the averaged code failed: {e}") from None
        return FitResult(code, objective.value(code), hist, ok, config.T - len(ok))
