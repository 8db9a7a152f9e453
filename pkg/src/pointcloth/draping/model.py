"""Latent-conditioned draping network.

A 5-layer perceptron encodes the outfit code into a 512-vector.  From it,
one linear map per trunk layer predicts a channel-wise (scale, shift) pair.
The trunk is a shared per-point perceptron over the root-centered body
cloud, modulated after every linear layer.  Its first layer runs on every
body point; the deeper layers run on every second point and their output is
max-pooled into a global feature.  Each output point comes from a seed (a jittered
copy of a body point): the head sees the seed's first-layer trunk feature,
the global feature and the seed coordinates, and predicts an absolute
(root-centered) position.
"""
from __future__ import annotations

import contextlib
from dataclasses import asdict, dataclass

import numpy as np

from ..numcore import (Tensor, add, affine, as_tensor, bias_add, gather_rows, leaky_relu, matmul,
                       max_reduce, mul, parameter, reshape)

N_POINTS = 8192
SEED_JITTER = 0.005
POOL_STRIDE = 2


@dataclass(frozen=True)
class ModelConfig:
    code_dim: int = 8
    encoder_width: int = 512
    encoder_layers: int = 5
    trunk_widths: tuple = (64, 128, 256)
    head_widths: tuple = (256, 128)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["trunk_widths"] = list(self.trunk_widths)
        d["head_widths"] = list(self.head_widths)
        return d

    @classmethod
    def from_dict(cls, d) -> "ModelConfig":
        return cls(int(d["code_dim"]), int(d["encoder_width"]), int(d["encoder_layers"]),
                   tuple(int(w) for w in d["trunk_widths"]), tuple(int(w) for w in d["head_widths"]))


class CodeError(ValueError):
    pass


class DrapingModel:
    def __init__(self, config: ModelConfig = ModelConfig(), seed=0):
        self.config = config
        rng = np.random.default_rng(seed)
        self._blocks: list[Tensor] = []

        def dense(name, fan_in, fan_out, gain=2.0):
            w = self._add(f"{name}.weight", rng.normal(0.0, np.sqrt(gain / fan_in), (fan_in, fan_out)))
            b = self._add(f"{name}.bias", np.zeros(fan_out))
            return w, b

        c = config
        self.encoder = []
        width = c.code_dim
        for k in range(c.encoder_layers):
            self.encoder.append(dense(f"encoder.{k}", width, c.encoder_width))
            width = c.encoder_width
        self.trunk = []
        self.modulation = []
        width = 3
        for k, w in enumerate(c.trunk_widths):
            self.trunk.append(dense(f"trunk.{k}", width, w))
            # scale = 1 + e @ Ws + bs, shift = e @ Wh + bh, starting close to the identity
            ws = self._add(f"mod.{k}.scale.weight", rng.normal(0.0, 0.1 / np.sqrt(c.encoder_width),
                                                                (c.encoder_width, w)))
            bs = self._add(f"mod.{k}.scale.bias", np.zeros(w))
            wh = self._add(f"mod.{k}.shift.weight", rng.normal(0.0, 0.1 / np.sqrt(c.encoder_width),
                                                                (c.encoder_width, w)))
            bh = self._add(f"mod.{k}.shift.bias", np.zeros(w))
            self.modulation.append((ws, bs, wh, bh))
            width = w
        local, glob = c.trunk_widths[0], c.trunk_widths[-1]
        h0 = c.head_widths[0]
        fan = local + glob + 3
        # first head layer acts on [local feature | global feature | seed xyz]; its weight is
        # stored as three row blocks so the global part is computed once per cloud
        self.head_in = (
            self._add("head.0.weight_local", rng.normal(0.0, np.sqrt(2.0 / fan), (local, h0))),
            self._add("head.0.weight_global", rng.normal(0.0, np.sqrt(2.0 / fan), (glob, h0))),
            self._add("head.0.weight_seed", rng.normal(0.0, np.sqrt(2.0 / fan), (3, h0))),
            self._add("head.0.bias", np.zeros(h0)),
        )
        self.head = []
        width = h0
        for k, w in enumerate(c.head_widths[1:], start=1):
            self.head.append(dense(f"head.{k}", width, w))
            width = w
        self.head_out = dense(f"head.{len(c.head_widths)}", width, 3, gain=0.1)

    def _add(self, name, value):
        t = parameter(value, name)
        self._blocks.append(t)
        return t

    # parameter bookkeeping -------------------------------------------------
    def parameters(self) -> list[Tensor]:
        return list(self._blocks)

    def named_blocks(self):
        return [(t.name, t.data) for t in self._blocks]

    def load_blocks(self, blocks: dict) -> None:
        for t in self._blocks:
            if t.name not in blocks:
                raise KeyError(f"missing parameter block {t.name!r}")
            arr = np.asarray(blocks[t.name], dtype=np.float64)
            if arr.shape != t.shape:
                raise ValueError(f"{t.name}: stored shape {arr.shape}, expected {t.shape}")
            t.data = arr.copy()

    def n_parameters(self) -> int:
        return sum(t.size for t in self._blocks)

    @contextlib.contextmanager
    def frozen(self):
        """Temporarily stop recording gradients for the network weights."""
        flags = [t.requires_grad for t in self._blocks]
        for t in self._blocks:
            t.requires_grad = False
        try:
            yield self
        finally:
            for t, f in zip(self._blocks, flags):
                t.requires_grad = f


def clip_code(z):
    """Project onto the unit ball (arrays or tensors, rows treated separately for 2-D input)."""
    data = z.data if isinstance(z, Tensor) else np.asarray(z, dtype=np.float64)
    norms = np.linalg.norm(data, axis=-1, keepdims=True)
    out = np.where(norms > 1.0, data / np.where(norms > 1.0, norms, 1.0), data)
    # rounding can leave z / |z| a few ulps outside; shrink those rows until they are in
    for _ in range(8):
        over = np.linalg.norm(out, axis=-1, keepdims=True) > 1.0
        if not over.any():
            break
        out = np.where(over, out * (1.0 - 2.0 ** -52), out)
    if isinstance(z, Tensor):
        z.data = out
        return z
    return out


def encode_code(model: DrapingModel, z):
    """(512-vector, [(scale, shift) per trunk layer]) for code ``z``."""
    z = as_tensor(z)
    if z.shape != (model.config.code_dim,):
        raise CodeError(f"code must have shape ({model.config.code_dim},), got {z.shape}")
    h = reshape(z, (1, model.config.code_dim))
    n = len(model.encoder)
    for k, (w, b) in enumerate(model.encoder):
        h = bias_add(matmul(h, w), b)
        if k < n - 1:
            h = leaky_relu(h)
    mods = []
    for ws, bs, wh, bh in model.modulation:
        scale = add(reshape(bias_add(matmul(h, ws), bs), (ws.shape[1],)), 1.0)
        shift = reshape(bias_add(matmul(h, wh), bh), (wh.shape[1],))
        mods.append((scale, shift))
    return reshape(h, (model.config.encoder_width,)), mods


def body_root(body_cloud: np.ndarray) -> np.ndarray:
    return np.asarray(body_cloud, dtype=np.float64).mean(axis=0)


def make_seeds(n_body: int, n: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Source body-point index and jitter for ``n`` seeds.

    Every body point is used floor(n / n_body) times, the remainder is a
    random subset; the order is then shuffled.
    """
    if n_body <= 0:
        raise ValueError("body cloud is empty")
    rng = np.random.default_rng(seed)
    reps, rest = divmod(n, n_body)
    src = np.concatenate([np.tile(np.arange(n_body), reps),
                          np.sort(rng.choice(n_body, rest, replace=False))])
    src = src[rng.permutation(n)]
    jitter = rng.normal(0.0, SEED_JITTER, (n, 3))
    return src, jitter


def check_code(z, dim):
    data = z.data if isinstance(z, Tensor) else np.asarray(z, dtype=np.float64)
    if data.shape != (dim,):
        raise CodeError(f"code must have shape ({dim},), got {data.shape}")
    if np.linalg.norm(data) > 1.0 + 1e-6:
        raise CodeError(f"code norm {np.linalg.norm(data):.6f} exceeds 1")


def pool_rows(n: int) -> np.ndarray:
    """Body points that feed the deeper trunk layers and the global max-pool."""
    return np.arange(0, n, POOL_STRIDE)


def zero(t):
    return np.zeros(t.shape)


def deform_seeds(model: DrapingModel, body_cloud, z, src: np.ndarray, jitter: np.ndarray) -> Tensor:
    """Network output for explicit seeds (root-centered input, root added back)."""
    cloud = np.asarray(body_cloud, dtype=np.float64)
    if cloud.ndim != 2 or cloud.shape[1] != 3 or len(cloud) == 0:
        raise ValueError(f"body cloud must be a non-empty (N, 3) array, got {cloud.shape}")
    check_code(z, model.config.code_dim)
    root = body_root(cloud)
    centered = cloud - root
    _, mods = encode_code(model, z)
    h = centered
    feats = []
    for k, ((w, b), (scale, shift)) in enumerate(zip(model.trunk, mods)):
        if k == 1:
            h = gather_rows(h, pool_rows(len(cloud)))
        # scale * (h W + b) + shift, folded into the weights to skip a full-size pass
        h = leaky_relu(bias_add(matmul(h, affine(w, scale, zero(scale))), add(mul(b, scale), shift)))
        feats.append(h)
    glob = reshape(max_reduce(feats[-1], axis=0), (1, feats[-1].shape[1]))
    wl, wg, ws, b0 = model.head_in
    seeds = centered[src] + jitter
    g_term = reshape(bias_add(matmul(glob, wg), b0), (wg.shape[1],))
    x = add(matmul(gather_rows(feats[0], src), wl), matmul(seeds, ws))
    x = leaky_relu(bias_add(x, g_term))
    for w, b in model.head:
        x = leaky_relu(bias_add(matmul(x, w), b))
    w, b = model.head_out
    out = bias_add(matmul(x, w), b)
    return bias_add(out, root)


def deform(model: DrapingModel, body_cloud, z, seed=0, n_points: int = N_POINTS) -> Tensor:
    """Garment cloud of exactly ``n_points`` (default 8192) for code ``z``."""
    cloud = np.asarray(body_cloud, dtype=np.float64)
    if cloud.ndim != 2 or len(cloud) == 0:
        raise ValueError("body cloud is empty")
    src, jitter = make_seeds(len(cloud), n_points, seed)
    return deform_seeds(model, cloud, z, src, jitter)
