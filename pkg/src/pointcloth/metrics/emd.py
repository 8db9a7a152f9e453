"""Earth mover's distance between equal-size point clouds.

``emd_exact`` solves the assignment problem exactly (shortest augmenting
paths with potentials, O(n^3)) and is meant as a reference for small clouds.
``emd_approx`` runs an epsilon-scaling auction compiled with numba and is
differentiable in the first cloud with the matching held fixed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from ..numcore import Tensor, as_tensor, mean_reduce, row_norm, sub

EXACT_MAX_POINTS = 256
EPS_START = 0.1      # times the median pairwise distance
EPS_END = 1e-4       # times the same scale
_DENSE_LIMIT = 2048  # above this the auction recomputes costs instead of caching an n x n matrix


class EMDError(ValueError):
    pass


@dataclass
class Assignment:
    perm: np.ndarray     # a[i] is matched with b[perm[i]]
    cost: float          # mean Euclidean distance under perm


def _points(x, name):
    x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 3:
        raise EMDError(f"{name}: expected an (n, 3) cloud, got shape {x.shape}")
    return x


def _check_pair(a, b):
    if len(a) != len(b):
        raise EMDError(f"cloud sizes differ: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise EMDError("clouds are empty")


def _mean_cost(a, b, perm):
    return float(np.linalg.norm(a - b[perm], axis=1).mean())


# ------------------------------------------------------------------ exact

def hungarian(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost perfect matching of a square cost matrix.

    Returns ``col`` with row i assigned to column ``col[i]``.
    """
    cost = np.asarray(cost, dtype=np.float64)
    n = cost.shape[0]
    if cost.ndim != 2 or cost.shape[1] != n:
        raise EMDError(f"cost matrix must be square, got {cost.shape}")
    # 1-based potentials/matching with a virtual column 0
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=np.int64)   # match[j] = row owning column j (1-based), 0 = free
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[match[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    col = np.empty(n, dtype=np.int64)
    col[match[1:] - 1] = np.arange(n)
    return col


def emd_exact(a, b) -> Assignment:
    """Globally optimal matching for clouds of at most 256 points."""
    a, b = _points(a, "a"), _points(b, "b")
    _check_pair(a, b)
    if len(a) > EXACT_MAX_POINTS:
        raise EMDError(f"emd_exact is limited to {EXACT_MAX_POINTS} points, got {len(a)}")
    cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    perm = hungarian(cost)
    return Assignment(perm, float(cost[np.arange(len(a)), perm].mean()))


# ------------------------------------------------------------------ auction

@numba.njit(cache=True)
def _dist(a, b, i, j):
    dx = a[i, 0] - b[j, 0]
    dy = a[i, 1] - b[j, 1]
    dz = a[i, 2] - b[j, 2]
    return np.sqrt(dx * dx + dy * dy + dz * dz)


@numba.njit(cache=True)
def _auction(a, b, eps0, eps_min, dense):
    n = a.shape[0]
    cost = np.empty((n if dense else 0, n))
    if dense:
        for i in range(n):
            for j in range(n):
                cost[i, j] = _dist(a, b, i, j)
    price = np.zeros(n)
    owner = np.empty(n, dtype=np.int64)
    target = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    eps = eps0
    while True:
        owner[:] = -1
        target[:] = -1
        for i in range(n):
            queue[i] = i
        head = 0
        count = n
        while count > 0:
            i = queue[head]
            head = (head + 1) % n
            count -= 1
            best = -np.inf
            second = -np.inf
            bj = -1
            for j in range(n):
                c = cost[i, j] if dense else _dist(a, b, i, j)
                val = -c - price[j]
                if val > best:
                    second = best
                    best = val
                    bj = j
                elif val > second:
                    second = val
            if n == 1:
                second = best
            price[bj] += best - second + eps
            prev = owner[bj]
            owner[bj] = i
            target[i] = bj
            if prev >= 0:
                target[prev] = -1
                queue[(head + count) % n] = prev
                count += 1
        if eps <= eps_min:
            break
        eps = max(0.5 * eps, eps_min)
    return target


def _median_distance(a, b, limit=256):
    ka = np.linspace(0, len(a) - 1, min(len(a), limit)).astype(np.int64)
    kb = np.linspace(0, len(b) - 1, min(len(b), limit)).astype(np.int64)
    d = np.linalg.norm(a[ka][:, None] - b[kb][None], axis=2)
    med = float(np.median(d))
    return med if med > 0 else float(d.max())


def auction_assignment(a, b) -> Assignment:
    """Epsilon-scaling auction (Gauss-Seidel bidding, FIFO queue).

    Epsilon starts at 0.1 x the median cross distance and is halved every
    round down to 1e-4 x that scale; prices carry over between rounds.
    """
    a, b = _points(a, "a"), _points(b, "b")
    _check_pair(a, b)
    n = len(a)
    scale = _median_distance(a, b)
    if not scale > 0:
        perm = np.arange(n)
        return Assignment(perm, 0.0)
    perm = _auction(a, b, EPS_START * scale, EPS_END * scale, n <= _DENSE_LIMIT)
    return Assignment(perm, _mean_cost(a, b, perm))


def matched_distance(a, b, perm) -> Tensor:
    """Mean distance between ``a[i]`` and ``b[perm[i]]``; differentiable in ``a``."""
    a = as_tensor(a)
    target = np.asarray(b.data if isinstance(b, Tensor) else b, dtype=np.float64)[perm]
    return mean_reduce(row_norm(sub(a, target)))


def emd_approx(a, b) -> Tensor:
    """Auction EMD as a scalar tensor; gradients flow into ``a`` only,
    through the matched distances with the matching frozen."""
    assign = auction_assignment(a, b)
    return matched_distance(a, b, assign.perm)
