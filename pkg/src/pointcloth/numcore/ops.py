"""Differentiable ops over :class:`Tensor`.

Broadcasting is explicit: elementwise binary ops accept equal shapes or a
Python scalar.  Row-vector broadcasting is only done by the named ops
``bias_add`` and ``affine``.
"""
from __future__ import annotations

from numbers import Number

import numpy as np

from .graph import ShapeError, Tensor, as_tensor, next_node_label, record

LEAKY_SLOPE = 0.2


def _same_shape(op, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{next_node_label(op)}: shapes {a.shape} and {b.shape} differ")


def add(a, b) -> Tensor:
    if isinstance(b, Number):
        a = as_tensor(a)
        return record("add_scalar", (a,), a.data + b, lambda g, n: (g,))
    if isinstance(a, Number):
        return add(b, a)
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("add", a, b)
    return record("add", (a, b), a.data + b.data, lambda g, n: (g, g))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return record("neg", (a,), -a.data, lambda g, n: (-g,))


def sub(a, b) -> Tensor:
    if isinstance(b, Number):
        return add(a, -b)
    if isinstance(a, Number):
        return add(neg(b), a)
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("sub", a, b)
    return record("sub", (a, b), a.data - b.data, lambda g, n: (g, -g))


def mul(a, b) -> Tensor:
    if isinstance(b, Number):
        a = as_tensor(a)
        c = float(b)
        return record("scale", (a,), a.data * c, lambda g, n: (g * c,))
    if isinstance(a, Number):
        return mul(b, a)
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return record("mul", (a, b), ad * bd,
                  lambda g, n: (g * bd if n[0] else None, g * ad if n[1] else None))


def div(a, b) -> Tensor:
    if isinstance(b, Number):
        return mul(a, 1.0 / b)
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("div", a, b)
    ad, bd = a.data, b.data
    out = ad / bd

    def back(g, n):
        return (g / bd if n[0] else None, -g * out / bd if n[1] else None)

    return record("div", (a, b), out, back)


def square(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return record("square", (a,), ad * ad, lambda g, n: (2.0 * ad * g,))


def absolute(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return record("abs", (a,), np.abs(ad), lambda g, n: (np.sign(ad) * g,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"{next_node_label('matmul')}: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data

    def back(g, n):
        return (g @ bd.T if n[0] else None, ad.T @ g if n[1] else None)

    return record("matmul", (a, b), ad @ bd, back)


def bias_add(x, b) -> Tensor:
    """Add a length-C vector to every row of an (N, C) tensor."""
    x, b = as_tensor(x), as_tensor(b)
    if x.ndim != 2 or b.shape != (x.shape[1],):
        raise ShapeError(f"{next_node_label('bias_add')}: bias {b.shape} does not fit {x.shape}")
    return record("bias_add", (x, b), x.data + b.data,
                  lambda g, n: (g, g.sum(axis=0) if n[1] else None))


def affine(x, scale, shift) -> Tensor:
    """Per-channel modulation ``scale * x + shift`` for x of shape (N, C)."""
    x, scale, shift = as_tensor(x), as_tensor(scale), as_tensor(shift)
    if x.ndim != 2 or scale.shape != (x.shape[1],) or shift.shape != (x.shape[1],):
        raise ShapeError(
            f"{next_node_label('affine')}: x {x.shape}, scale {scale.shape}, shift {shift.shape}")
    xd, sd = x.data, scale.data

    def back(g, n):
        return (g * sd if n[0] else None,
                (g * xd).sum(axis=0) if n[1] else None,
                g.sum(axis=0) if n[2] else None)

    return record("affine", (x, scale, shift), xd * sd + shift.data, back)


def leaky_relu(x, slope: float = LEAKY_SLOPE) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    out = np.maximum(xd, slope * xd) if 0 <= slope <= 1 else np.where(xd > 0, xd, slope * xd)

    def back(g, n):
        return (np.where(xd > 0, g, slope * g),)

    return record("leaky_relu", (x,), out, back)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return record("tanh", (x,), out, lambda g, n: (g * (1.0 - out * out),))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return record("sigmoid", (x,), out, lambda g, n: (g * out * (1.0 - out),))


def concat(tensors, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError(f"{next_node_label('concat')}: nothing to concatenate")
    nd = ts[0].ndim
    ax = axis % nd
    for t in ts[1:]:
        if t.ndim != nd or any(t.shape[i] != ts[0].shape[i] for i in range(nd) if i != ax):
            raise ShapeError(
                f"{next_node_label('concat')}: shapes {[t.shape for t in ts]} disagree off axis {ax}")
    sizes = [t.shape[ax] for t in ts]
    bounds = np.cumsum([0] + sizes)

    def back(g, n):
        out = []
        for k, need in enumerate(n):
            if need:
                sl = [slice(None)] * nd
                sl[ax] = slice(bounds[k], bounds[k + 1])
                out.append(g[tuple(sl)])
            else:
                out.append(None)
        return tuple(out)

    return record("concat", tuple(ts), np.concatenate([t.data for t in ts], axis=ax), back)


def gather_rows(x, idx) -> Tensor:
    """Rows ``x[idx]``; repeated indices accumulate on the way back."""
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    if x.ndim < 1 or idx.ndim != 1:
        raise ShapeError(f"{next_node_label('gather_rows')}: x {x.shape}, index {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise ShapeError(f"{next_node_label('gather_rows')}: index out of range for {x.shape[0]} rows")
    rows = x.shape[0]

    def back(g, n):
        flat = g.reshape(g.shape[0], -1)
        acc = np.zeros((rows, flat.shape[1]))
        # bincount-per-column is much faster than np.add.at for wide rows
        if idx.size:
            order = np.argsort(idx, kind="stable")
            sorted_idx = idx[order]
            starts = np.flatnonzero(np.r_[True, sorted_idx[1:] != sorted_idx[:-1]])
            acc[sorted_idx[starts]] = np.add.reduceat(flat[order], starts, axis=0)
        return (acc.reshape((rows,) + g.shape[1:]),)

    return record("gather_rows", (x,), x.data[idx], back)


def max_reduce(x, axis: int = 0) -> Tensor:
    """Max along ``axis``; the gradient goes to the first maximal element."""
    x = as_tensor(x)
    ax = axis % x.ndim
    if x.ndim == 2 and ax == 0:
        arg = np.argmax(np.ascontiguousarray(x.data.T), axis=1)   # row scans are much faster
    else:
        arg = np.argmax(x.data, axis=ax)
    out = np.take_along_axis(x.data, np.expand_dims(arg, ax), axis=ax).squeeze(ax)

    def back(g, n):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, np.expand_dims(arg, ax), np.expand_dims(g, ax), axis=ax)
        return (gx,)

    return record("max_reduce", (x,), out, back)


def sum_reduce(x, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    if axis is None:
        return record("sum", (x,), np.array(x.data.sum()), lambda g, n: (np.full(shape, float(g)),))
    ax = axis % x.ndim
    return record("sum", (x,), x.data.sum(axis=ax),
                  lambda g, n: (np.broadcast_to(np.expand_dims(g, ax), shape).copy(),))


def mean_reduce(x, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    if axis is None:
        count = x.size
        return record("mean", (x,), np.array(x.data.mean()),
                      lambda g, n: (np.full(shape, float(g) / count),))
    ax = axis % x.ndim
    count = shape[ax]
    return record("mean", (x,), x.data.mean(axis=ax),
                  lambda g, n: (np.broadcast_to(np.expand_dims(g, ax) / count, shape).copy(),))


def row_norm(x) -> Tensor:
    """Euclidean norm of each row of an (N, D) tensor; zero rows get zero gradient."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"{next_node_label('row_norm')}: expected (N, D), got {x.shape}")
    xd = x.data
    out = np.sqrt(np.einsum("ij,ij->i", xd, xd))

    def back(g, n):
        safe = np.where(out > 0, out, 1.0)
        return (xd * (g / safe * (out > 0))[:, None],)

    return record("row_norm", (x,), out, back)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"{next_node_label('reshape')}: {old} -> {shape}: {e}") from None
    return record("reshape", (x,), out, lambda g, n: (g.reshape(old),))


def columns(x, start: int, stop: int) -> Tensor:
    """Column slice ``x[:, start:stop]``."""
    x = as_tensor(x)
    if x.ndim != 2 or not 0 <= start < stop <= x.shape[1]:
        raise ShapeError(f"{next_node_label('columns')}: bad slice {start}:{stop} of {x.shape}")
    shape = x.shape

    def back(g, n):
        gx = np.zeros(shape)
        gx[:, start:stop] = g
        return (gx,)

    return record("columns", (x,), x.data[:, start:stop], back)


def _im2col(x: np.ndarray) -> np.ndarray:
    h, w, c = x.shape
    p = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(p, (3, 3), axis=(0, 1))  # h, w, c, 3, 3
    return np.ascontiguousarray(win.transpose(0, 1, 3, 4, 2)).reshape(h * w, 9 * c)


def conv3x3(x, kernel, bias) -> Tensor:
    """Same-padded 3x3 convolution of an (H, W, C) image; kernel is (3, 3, C, O)."""
    x, kernel, bias = as_tensor(x), as_tensor(kernel), as_tensor(bias)
    if x.ndim != 3 or kernel.shape[:3] != (3, 3, x.shape[2]) or kernel.ndim != 4 \
            or bias.shape != (kernel.shape[3],):
        raise ShapeError(
            f"{next_node_label('conv3x3')}: image {x.shape}, kernel {kernel.shape}, bias {bias.shape}")
    h, w, c = x.shape
    o = kernel.shape[3]
    cols = _im2col(x.data)
    kmat = kernel.data.reshape(9 * c, o)
    out = (cols @ kmat + bias.data).reshape(h, w, o)

    def back(g, n):
        gf = g.reshape(h * w, o)
        gx = gk = gb = None
        if n[0]:
            gcols = (gf @ kmat.T).reshape(h, w, 3, 3, c)
            gp = np.zeros((h + 2, w + 2, c))
            for dy in range(3):
                for dx in range(3):
                    gp[dy:dy + h, dx:dx + w] += gcols[:, :, dy, dx]
            gx = gp[1:-1, 1:-1]
        if n[1]:
            gk = (cols.T @ gf).reshape(kernel.shape)
        if n[2]:
            gb = gf.sum(axis=0)
        return gx, gk, gb

    return record("conv3x3", (x, kernel, bias), out, back)


def custom(op: str, inputs, value: np.ndarray, backward_fn) -> Tensor:
    """Escape hatch for domain ops defined outside numcore.

    ``backward_fn(g)`` must return one gradient (or None) per input.
    """
    ins = tuple(as_tensor(t) for t in inputs)
    return record(op, ins, np.asarray(value, dtype=np.float64),
                  lambda g, n: tuple(gi if need else None for gi, need in zip(backward_fn(g), n)))
