"""Small convolutional renderer: descriptors + coverage -> RGB + mask."""
from __future__ import annotations

import numpy as np

from ..numcore import (Tensor, as_tensor, columns, concat, conv3x3, leaky_relu, parameter, reshape,
                       sigmoid)

DESCRIPTOR_DIM = 8
HEAD_WIDTHS = (16, 16, 4)


class RendererHead:
    """Three same-padded 3x3 convolutions, widths p+1 -> 16 -> 16 -> 4."""

    def __init__(self, p: int = DESCRIPTOR_DIM, seed=0, widths=HEAD_WIDTHS):
        rng = np.random.default_rng(seed)
        self.p = p
        self.params: list[Tensor] = []
        cin = p + 1
        for k, cout in enumerate(widths):
            scale = np.sqrt(2.0 / (9 * cin))
            self.params.append(parameter(rng.normal(0.0, scale, (3, 3, cin, cout)), f"head.conv{k}.kernel"))
            self.params.append(parameter(np.zeros(cout), f"head.conv{k}.bias"))
            cin = cout

    def named_blocks(self):
        return [(t.name, t.data) for t in self.params]

    def load_blocks(self, blocks: dict) -> None:
        for t in self.params:
            arr = np.asarray(blocks[t.name], dtype=np.float64)
            if arr.shape != t.shape:
                raise ValueError(f"{t.name}: stored shape {arr.shape}, expected {t.shape}")
            t.data = arr.copy()

    def copy(self) -> "RendererHead":
        h = RendererHead.__new__(RendererHead)
        h.p = self.p
        h.params = [parameter(t.data.copy(), t.name) for t in self.params]
        return h


def render_head(channels, coverage, head: RendererHead) -> Tensor:
    """(H, W, 4) image: linear RGB in channels 0-2, logistic mask in channel 3."""
    ch = as_tensor(channels)
    cov = np.asarray(coverage, dtype=np.float64)
    if ch.ndim != 3 or ch.shape[2] != head.p or cov.shape != ch.shape[:2]:
        raise ValueError(f"render_head: channels {ch.shape} and coverage {cov.shape} do not fit a "
                         f"{head.p}-descriptor head")
    h, w = cov.shape
    x = concat([ch, cov[:, :, None]], axis=2)
    ps = head.params
    n = len(ps) // 2
    for k in range(n):
        x = conv3x3(x, ps[2 * k], ps[2 * k + 1])
        if k < n - 1:
            x = leaky_relu(x)
    flat = reshape(x, (h * w, 4))
    out = concat([columns(flat, 0, 3), sigmoid(columns(flat, 3, 4))], axis=1)
    return reshape(out, (h, w, 4))
