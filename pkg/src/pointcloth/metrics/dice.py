from __future__ import annotations

import numpy as np

from ..numcore import Tensor, add, as_tensor, div, mul, sum_reduce

SMOOTH = 1.0


def dice_loss(pred, gt, smooth: float = SMOOTH) -> Tensor:
    """1 - (2 sum(pred*gt) + s) / (sum(pred) + sum(gt) + s); differentiable in ``pred``."""
    pred = as_tensor(pred)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"dice_loss: prediction {pred.shape} and mask {gt.shape} differ in shape")
    inter = sum_reduce(mul(pred, gt))
    num = add(mul(inter, 2.0), smooth)
    den = add(sum_reduce(pred), float(gt.sum()) + smooth)
    return add(mul(div(num, den), -1.0), 1.0)
