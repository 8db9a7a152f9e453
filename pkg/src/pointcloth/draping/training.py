"""Joint optimization of the draping network and one code per outfit."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..bodymodel.dataset import TrainingSet
from ..bodymodel.sampling import body_point_cloud
from ..bodymodel.skinning import pose_body
from ..metrics.emd import auction_assignment, matched_distance
from ..numcore import Adam, Graph, add, gather_rows, mul, parameter, reshape
from .model import DrapingModel, clip_code, deform_seeds, make_seeds

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    steps: int = 2000
    batch: int = 8
    lr_code: float = 1e-2
    lr_net: float = 1e-3
    sample_points: int = 512     # matched points per cloud and step
    seed: int = 0
    checkpoint_every: int = 0    # epochs; 0 disables the callback


@dataclass
class TrainResult:
    step_losses: list = field(default_factory=list)
    epoch_losses: list = field(default_factory=list)
    max_code_norms: list = field(default_factory=list)


def init_codes(n: int, dim: int, seed, radius: float = 0.3) -> np.ndarray:
    """Codes drawn uniformly from the ball of the given radius (inside the unit ball)."""
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / dim)
    return d * r[:, None]


def body_clouds(data: TrainingSet) -> list[list[np.ndarray]]:
    return [[body_point_cloud(pose_body(data.template, fr.params)) for fr in frames]
            for frames in data.frames]


def sample_loss(model, cloud, code_row, target, n, rng):
    """Auction EMD between ``n`` network points and ``n`` target points."""
    src, jitter = make_seeds(len(cloud), n, rng.integers(2 ** 63))
    out = deform_seeds(model, cloud, code_row, src, jitter)
    tgt = target[rng.choice(len(target), n, replace=False)] if n < len(target) else target
    perm = auction_assignment(out.data, tgt).perm
    return matched_distance(out, tgt, perm)


def glo_train(model: DrapingModel, codes, data: TrainingSet, config: TrainConfig = TrainConfig(),
              callback=None) -> TrainResult:
    """Minibatch Adam on the mean matched-point EMD over (outfit, frame) pairs.

    ``codes`` is a parameter tensor with one row per outfit; rows are projected
    onto the unit ball after every step.  ``callback(epoch, result)`` runs at
    the end of every ``checkpoint_every``-th epoch.
    """
    samples = data.samples()
    if not samples:
        raise ValueError("training set is empty")
    if codes.shape != (len(data.outfits), model.config.code_dim):
        raise ValueError(f"codes shape {codes.shape} does not match {len(data.outfits)} outfits")
    clip_code(codes)
    clouds = body_clouds(data)
    opt_net = Adam(model.parameters(), lr=config.lr_net)
    opt_code = Adam([codes], lr=config.lr_code)
    batch = min(config.batch, len(samples))
    steps_per_epoch = -(-len(samples) // batch)
    result = TrainResult()
    epoch_acc = []
    for step in range(config.steps):
        rng = np.random.default_rng([config.seed, step])
        pick = rng.choice(len(samples), batch, replace=False)
        names = ", ".join(f"outfit {samples[k][0]} frame {data.frames[samples[k][0]][samples[k][1]].frame_id}"
                          for k in pick)
        try:
            with Graph() as g:
                total = None
                for k in pick:
                    o, f = samples[k]
                    row = reshape(gather_rows(codes, [o]), (model.config.code_dim,))
                    loss = sample_loss(model, clouds[o][f], row, data.frames[o][f].cloud,
                                       config.sample_points, rng)
                    total = loss if total is None else add(total, loss)
                total = mul(total, 1.0 / batch)
        except FloatingPointError as e:
            raise TrainingDiverged(f"non-finite values at step {step} on batch [{names}]: {e}") from None
        value = float(total.data)
        if not np.isfinite(value):
            raise TrainingDiverged(f"non-finite loss at step {step} on batch [{names}]")
        grads = g.backward(total)
        opt_net.step(grads)
        opt_code.step(grads)
        clip_code(codes)
        norm = float(np.linalg.norm(codes.data, axis=1).max())
        if norm > 1.0:
            raise AssertionError(f"code norm {norm} left the unit ball after step {step}")
        result.step_losses.append(value)
        result.max_code_norms.append(norm)
        epoch_acc.append(value)
        if (step + 1) % steps_per_epoch == 0 or step == config.steps - 1:
            result.epoch_losses.append(float(np.mean(epoch_acc)))
            epoch_acc = []
            epoch = len(result.epoch_losses)
            log.info("epoch %d (step %d): mean loss %.5f", epoch, step + 1, result.epoch_losses[-1])
            if callback is not None and config.checkpoint_every and epoch % config.checkpoint_every == 0:
                callback(epoch, result)
    return result


def evaluate_emd(model, codes, data: TrainingSet, n_points: int = 1024, seed=0, clouds=None) -> float:
    """Mean auction EMD over every (outfit, frame) on fixed seeded subsamples."""
    clouds = clouds or body_clouds(data)
    vals = []
    with model.frozen():
        for o, f in data.samples():
            rng = np.random.default_rng([seed, o, f])
            z = codes.data[o] if hasattr(codes, "data") else np.asarray(codes)[o]
            vals.append(float(sample_loss(model, clouds[o][f], z, data.frames[o][f].cloud, n_points, rng).data))
    return float(np.mean(vals))
