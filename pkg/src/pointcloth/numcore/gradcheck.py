from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, GraphError, Tensor, backward


@dataclass
class GradCheckReport:
    tolerance: float
    errors: dict[str, float] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def lines(self) -> list[str]:
        out = [f"{name:32s} rel_err={err:.3e}" for name, err in self.errors.items()]
        out.append(f"{'max':32s} rel_err={self.max_error:.3e} "
                   f"({'PASS' if self.passed else 'FAIL'} @ {self.tolerance:g})")
        return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Block relative error: max |a - n| / max(max |a|, max |n|, floor).

    Normalizing by the block's largest gradient keeps entries whose true
    gradient is ~0 from being judged on finite-difference round-off alone.
    """
    if analytic.size == 0:
        return 0.0
    diff = np.abs(analytic - numeric).max()
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), floor)
    return float(diff / scale)


def grad_check(fn, params, tolerance: float = 1e-5, h: float = 1e-6,
               max_entries: int | None = None, seed: int = 0,
               floor: float = 1e-8) -> GradCheckReport:
    """Compare reverse-mode gradients of ``fn()`` with central differences.

    ``fn`` takes no arguments and builds a scalar loss from ``params``
    (tensors with ``requires_grad``), which are perturbed in place.  Blocks
    larger than ``max_entries`` are checked on a seeded random subset.
    Each block's error is relative to its largest gradient entry (see
    :func:`relative_error`).
    """
    params = list(params)
    report = GradCheckReport(tolerance)
    if not params:
        return report
    with Graph() as g:
        loss = fn()
    if not isinstance(loss, Tensor):
        raise GraphError("grad_check: fn must return a Tensor")
    grads = backward(g, loss)
    rng = np.random.default_rng(seed)
    for k, p in enumerate(params):
        analytic = grads.get(p)
        if analytic is None:
            analytic = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, max_entries, replace=False))
        numeric = np.empty(idx.size)
        for n, i in enumerate(idx):
            old = flat[i]
            flat[i] = old + h
            up = float(fn().data)
            flat[i] = old - h
            down = float(fn().data)
            flat[i] = old
            numeric[n] = (up - down) / (2 * h)
        name = p.name or f"param{k}"
        report.errors[name] = relative_error(analytic.reshape(-1)[idx], numeric, floor)
    return report
