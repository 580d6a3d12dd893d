"""Adaptive Gauss-Legendre quadrature in an mpmath context.

Each panel is integrated with two rules of consecutive degree; their
difference is the local error estimate and panels are bisected until the
estimate falls below their share of the tolerance.
"""
from __future__ import annotations

from functools import lru_cache

import mpmath
from mpmath.calculus.quadrature import GaussLegendre

from .errors import QuadratureError

__all__ = ["adaptive_gauss", "QuadResult"]


class QuadResult(tuple):
    """``(value, error, panels)``."""

    __slots__ = ()

    def __new__(cls, value, error, panels):
        return super().__new__(cls, (value, error, panels))

    value = property(lambda self: self[0])
    error = property(lambda self: self[1])
    panels = property(lambda self: self[2])


@lru_cache(maxsize=64)
def _nodes(degree: int, prec: int):
    ctx = mpmath.MPContext()
    ctx.prec = prec
    return tuple(GaussLegendre(ctx).calc_nodes(degree, prec))


def _panel(f, a, b, nodes, ctx):
    half = (b - a) / 2
    mid = (a + b) / 2
    return half * ctx.fsum(w * f(mid + half * x) for x, w in nodes)


def adaptive_gauss(f, a, b, tol, ctx=mpmath.mp, degree: int | None = None,
                   max_panels: int = 20000) -> QuadResult:
    """Integrate ``f`` over ``[a, b]`` to absolute tolerance ``tol``."""
    a, b = ctx.mpf(a), ctx.mpf(b)
    tol = ctx.mpf(tol)
    if degree is None:
        # 3 * 2^(degree-1) nodes; enough for ~dps digits on a smooth panel
        degree = max(3, int(ctx.dps).bit_length() - 1)
    prec = ctx.prec + 20
    lo, hi = _nodes(degree, prec), _nodes(degree + 1, prec)
    total = ctx.mpf(0)
    err = ctx.mpf(0)
    stack = [(a, b)]
    panels = 0
    width = b - a
    while stack:
        p, q = stack.pop()
        coarse = _panel(f, p, q, lo, ctx)
        fine = _panel(f, p, q, hi, ctx)
        est = abs(fine - coarse)
        panels += 1
        if est <= tol * (q - p) / width or panels >= max_panels:
            if panels >= max_panels and est > tol * (q - p) / width:
                raise QuadratureError(f"no convergence after {max_panels} panels on [{p}, {q}]")
            total += fine
            err += est
        else:
            m = (p + q) / 2
            stack.append((m, q))
            stack.append((p, m))
    return QuadResult(total, err, panels)
