"""Scalar minimisation helpers: coarse scan followed by golden-section refinement."""

from __future__ import annotations

import math
from typing import Callable, Tuple

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
_INV_PHI2 = (3.0 - math.sqrt(5.0)) / 2.0


def golden_min(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-10,
    max_iter: int = 300,
) -> Tuple[float, float]:
    """Golden-section minimum of ``f`` on ``[lo, hi]``.

    Assumes ``f`` is unimodal on the bracket; use :func:`bracketed_min` when the
    objective may have several local minima or infinite plateaus.

    Returns ``(x, f(x))``.
    """
    a, b = (lo, hi) if lo <= hi else (hi, lo)
    h = b - a
    if h <= tol or h == 0.0:
        x = 0.5 * (a + b)
        return x, f(x)
    c = a + _INV_PHI2 * h
    d = a + _INV_PHI * h
    yc, yd = f(c), f(d)
    n = int(math.ceil(math.log(tol / h) / math.log(_INV_PHI)))
    for _ in range(max(min(n, max_iter) - 1, 0)):
        if yc < yd:
            b, d, yd = d, c, yc
            h *= _INV_PHI
            c = a + _INV_PHI2 * h
            yc = f(c)
        else:
            a, c, yc = c, d, yd
            h *= _INV_PHI
            d = a + _INV_PHI * h
            yd = f(d)
    if yc < yd:
        return c, yc
    return d, yd


def bracketed_min(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    coarse: int = 64,
    tol: float = 1e-10,
) -> Tuple[float, float]:
    """Minimise ``f`` on ``[lo, hi]``: coarse grid scan, then golden refinement.

    The scan makes the search robust to +inf plateaus (infeasible regions) and
    mild multimodality; refinement happens between the scan neighbours of the
    best point.  Returns ``(x, f(x))`` for the best point seen.
    """
    if hi < lo:
        lo, hi = hi, lo
    if hi == lo:
        return lo, f(lo)
    step = (hi - lo) / (coarse - 1)
    xs = [lo + step * k for k in range(coarse - 1)] + [hi]
    ys = [f(x) for x in xs]
    k = min(range(len(xs)), key=lambda i: ys[i])
    if math.isinf(ys[k]):
        return xs[k], ys[k]
    lo2 = xs[max(k - 1, 0)]
    hi2 = xs[min(k + 1, len(xs) - 1)]
    x, y = golden_min(f, lo2, hi2, tol=tol)
    if ys[k] < y:
        x, y = xs[k], ys[k]
    return x, y


def chebyshev_grid(lo: float, hi: float, n: int):
    """Chebyshev-spaced nodes on ``[lo, hi]`` including both endpoints.

    Points cluster near the endpoints, which suits functions with endpoint
    singularities (moment envelopes near their support edge).
    """
    import numpy as np

    if n < 2:
        raise ValueError("need at least two grid points")
    k = np.arange(n, dtype=float)
    nodes = lo + (hi - lo) * 0.5 * (1.0 - np.cos(math.pi * k / (n - 1)))
    nodes[0] = lo
    nodes[-1] = hi
    return nodes
