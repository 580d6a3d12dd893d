"""Formal solutions of the inner equation in powers of ``z^-r`` and ``log z``.

Series are indexed by an integer ``k`` in units of ``r = 2/(n-1)``; the
coefficient at index ``k`` is a polynomial in ``L = log z`` stored as a list
(entry ``j`` multiplies ``L^j``).  Because ``2 = (n-1) r``, the operator
``D2 = sum_p 2/(2p)! d^(2p)`` maps index ``k`` to indices ``k + p(n-1)``.

Coefficients live either in the exact field ``Q(c0)`` with ``c0^(n-1) =
-r(r+1)`` (when the inner equation has rational tail coefficients), or in an
mpmath context at a chosen precision.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Mapping

import mpmath
import sympy

from .errors import ResonanceError, TruncationOverflow, DivergenceWarning
from .maps import POLYNOMIAL, InnerEquation, to_mp

__all__ = [
    "RootField",
    "LogPowerSeries",
    "FormalSolution",
    "formal_delta2",
    "compose_g",
    "lambda_N",
    "solve_formal",
    "residual_series",
    "residual_order",
    "eval_series",
]


# exact coefficient field ---------------------------------------------------


class RootField:
    """``Q(c)`` with ``c^d = q`` for a rational ``q``."""

    def __init__(self, d: int, q: Fraction):
        self.d = d
        self.q = Fraction(q)

    def lift(self, x) -> "Alg":
        return Alg(self, (Fraction(x),) + (Fraction(0),) * (self.d - 1))

    @property
    def gen(self) -> "Alg":
        if self.d == 1:
            return self.lift(self.q)
        return Alg(self, tuple(Fraction(int(i == 1)) for i in range(self.d)))

    @property
    def gen_inverse(self) -> "Alg":
        if self.d == 1:
            return self.lift(1 / self.q)
        return Alg(self, tuple(Fraction(int(i == self.d - 1)) for i in range(self.d))) * (1 / self.q)


class Alg:
    """Element ``sum a_i c^i`` of a :class:`RootField`."""

    __slots__ = ("F", "a")

    def __init__(self, F: RootField, a):
        self.F = F
        self.a = tuple(a)

    def _coerce(self, other):
        if isinstance(other, Alg):
            return other
        if isinstance(other, (int, Fraction)):
            return self.F.lift(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return Alg(self.F, (x + y for x, y in zip(self.a, other.a)))

    __radd__ = __add__

    def __neg__(self):
        return Alg(self.F, (-x for x in self.a))

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return Alg(self.F, (x - y for x, y in zip(self.a, other.a)))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return Alg(self.F, (x * other for x in self.a))
        if not isinstance(other, Alg):
            return NotImplemented
        d = self.F.d
        prod = [Fraction(0)] * (2 * d - 1)
        for i, x in enumerate(self.a):
            if x:
                for j, y in enumerate(other.a):
                    if y:
                        prod[i + j] += x * y
        for i in range(2 * d - 2, d - 1, -1):
            if prod[i]:
                prod[i - d] += prod[i] * self.F.q
        return Alg(self.F, prod[:d])

    __rmul__ = __mul__

    def __pow__(self, e: int):
        out = self.F.lift(1)
        base = self
        while e:
            if e & 1:
                out = out * base
            e >>= 1
            if e:
                base = base * base
        return out

    def __truediv__(self, other):
        if isinstance(other, (int, Fraction)):
            return self * (1 / Fraction(other))
        return NotImplemented

    def __eq__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return False
        return self.a == other.a

    def __hash__(self):
        return hash(self.a)

    def __bool__(self):
        return any(self.a)

    def __repr__(self):
        terms = [f"{x}*c^{i}" if i else str(x) for i, x in enumerate(self.a) if x]
        return " + ".join(terms) or "0"

    def evaluate(self, c, ctx=mpmath.mp):
        if self.F.d == 1:
            x = self.a[0]
            return ctx.mpf(x.numerator) / x.denominator
        out = ctx.mpf(0)
        for x in reversed(self.a):
            out = out * c + ctx.mpf(x.numerator) / x.denominator
        return out


class _ExactArith:
    exact = True

    def __init__(self, field: RootField):
        self.field = field
        self.zero = field.lift(0)

    def lift(self, q):
        return self.field.lift(q)

    def is_zero(self, x, scale=None):
        return not x


class _MpArith:
    exact = False

    def __init__(self, ctx):
        self.ctx = ctx
        self.zero = ctx.mpf(0)

    def lift(self, q):
        q = Fraction(q)
        return self.ctx.mpf(q.numerator) / q.denominator

    def is_zero(self, x, scale=1):
        return abs(x) <= self.ctx.eps * 2**24 * scale


# log-polynomial helpers ----------------------------------------------------


def _trim(p):
    p = list(p)
    while len(p) > 1 and _is_exact_zero(p[-1]):
        p.pop()
    return p


def _is_exact_zero(x):
    if isinstance(x, Alg):
        return not x
    return x == 0


def _lp_add(a, b):
    if len(a) < len(b):
        a, b = b, a
    out = list(a)
    for j, y in enumerate(b):
        out[j] = out[j] + y
    return out


def _lp_scale(a, s):
    return [x * s for x in a]


def _lp_mul(a, b):
    out = [None] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            t = x * y
            out[i + j] = t if out[i + j] is None else out[i + j] + t
    return out


@lru_cache(maxsize=None)
def _pochhammer_poly(p: int) -> tuple[Fraction, ...]:
    """Coefficients in ``a`` of ``a(a+1)...(a+2p-1)/(2p)!``."""
    poly = [Fraction(1)]
    for s in range(2 * p):
        nxt = [Fraction(0)] * (len(poly) + 1)
        for i, c in enumerate(poly):
            nxt[i] += c * s
            nxt[i + 1] += c
        poly = nxt
    f = math.factorial(2 * p)
    return tuple(c / f for c in poly)


@lru_cache(maxsize=None)
def _delta2_weight(a: Fraction, p: int, order: int) -> Fraction:
    """``2 (-1)^order d^order/da^order`` of the Pochhammer polynomial at ``a``."""
    poly = _pochhammer_poly(p)
    val = Fraction(0)
    for i in range(len(poly) - 1, order - 1, -1):
        val = val * a + poly[i] * math.perm(i, order)
    return 2 * (-1) ** order * val


def _delta2_term(a: Fraction, p: int, coeffs: list) -> list:
    """Log-poly multiplying ``z^(-a-2p)`` in ``D2(z^-a sum_j c_j L^j)``."""
    J = len(coeffs) - 1
    out = []
    for i in range(J + 1):
        acc = None
        for j in range(i, J + 1):
            w = math.comb(j, i) * _delta2_weight(a, p, j - i)
            if w:
                t = coeffs[j] * w
                acc = t if acc is None else acc + t
        out.append(acc if acc is not None else coeffs[0] * 0)
    return out


def _miller_next(a: dict, b: list, idx: int, q: int, skip: int | None = None):
    """Coefficient ``idx`` of ``(1 + sum a_i s^i)^q`` given ``b[0..idx-1]``."""
    acc = None
    for i in range(1, idx + 1):
        if i == skip or i not in a:
            continue
        w = Fraction((q + 1) * i - idx, idx)
        if w:
            t = _lp_scale(_lp_mul(a[i], b[idx - i]), w)
            acc = t if acc is None else _lp_add(acc, t)
    return acc


def _exp_next(v: dict, E: list, idx: int, skip: int | None = None):
    """Coefficient ``idx`` of ``exp(sum v_i s^i)`` given ``E[0..idx-1]``."""
    acc = None
    for i in range(1, idx + 1):
        if i == skip or i not in v:
            continue
        t = _lp_scale(_lp_mul(v[i], E[idx - i]), Fraction(i, idx))
        acc = t if acc is None else _lp_add(acc, t)
    return acc


# public series type ------------------------------------------------------


@dataclass(frozen=True)
class LogPowerSeries:
    """``sum_{k>=1} z^(-k r) sum_j c[k][j] log^j z`` (plus the trig prefix)."""

    r: Fraction
    coeffs: Mapping[int, tuple]
    trunc: int
    base: str = "plain"
    n: int | None = None

    @property
    def terms(self) -> dict[tuple[int, int], object]:
        """``(k, j) -> coefficient`` with ``k`` the index of ``z^(-k r)``."""
        return {(k, j): c for k, lp in self.coeffs.items() for j, c in enumerate(lp)
                if not _is_exact_zero(c)}

    def max_log_power(self, k: int) -> int:
        lp = _trim(self.coeffs.get(k, [0]))
        return -1 if len(lp) == 1 and _is_exact_zero(lp[0]) else len(lp) - 1


def _dense(s: LogPowerSeries, kmax: int) -> dict[int, list]:
    return {k: list(v) for k, v in s.coeffs.items() if 1 <= k <= kmax}


def _zero_like(s: dict):
    for v in s.values():
        return v[0] * 0
    return Fraction(0)


def _check_order(s: LogPowerSeries, order: int, step: int):
    # unknown coefficients past s.trunc first reach index s.trunc + 1 + step
    if order > s.trunc + step:
        raise TruncationOverflow(f"order {order} needs coefficients beyond index {s.trunc}")


def formal_delta2(s: LogPowerSeries, order: int) -> LogPowerSeries:
    """``D2 s`` truncated at index ``order`` (exponent ``order * r``)."""
    if s.n is None:
        raise ValueError("series needs n to map z^-2 onto its index grid")
    step = s.n - 1
    _check_order(s, order, step)
    out: dict[int, list] = {}
    for k, lp in s.coeffs.items():
        a = k * s.r
        p = 1
        while k + p * step <= order:
            out[k + p * step] = _lp_add(out.get(k + p * step, []), _delta2_term(a, p, list(lp)))
            p += 1
    if s.base == "trig_log":
        zero = _zero_like(s.coeffs) if s.coeffs else Fraction(0)
        q = 1
        while q * step <= order:
            out[q * step] = _lp_add(out.get(q * step, []), [zero + s.r / q])
            q += 1
    return LogPowerSeries(s.r, {k: tuple(_trim(v)) for k, v in sorted(out.items())}, order, "plain", s.n)


def _series_mul(A: dict, B: dict, kmax: int) -> dict:
    out: dict[int, list] = {}
    for i, x in A.items():
        for j, y in B.items():
            if i + j <= kmax:
                out[i + j] = _lp_add(out.get(i + j, []), _lp_mul(x, y))
    return out


def _series_pow(A: dict, q: int, kmax: int) -> dict:
    result = None
    base = A
    while q:
        if q & 1:
            result = base if result is None else _series_mul(result, base, kmax)
        q >>= 1
        if q:
            base = _series_mul(base, base, kmax)
    return result


def _series_exp(V: dict, kmax: int, one) -> dict:
    E = [[one]]
    for idx in range(1, kmax + 1):
        nxt = _exp_next(V, E, idx)
        E.append(nxt if nxt is not None else [one * 0])
    return {i: e for i, e in enumerate(E)}


def _arith_for(s_coeffs, ctx):
    for lp in s_coeffs.values():
        for x in lp:
            if isinstance(x, Alg):
                return _ExactArith(x.F)
    return _MpArith(ctx) if ctx is not None else None


def _G_values(inner: InnerEquation, arith, ctx):
    out = {}
    for q, v in inner.G.items():
        v = sympy.sympify(v)
        if arith.exact:
            if not v.is_Rational:
                raise ValueError("exact arithmetic needs rational tail coefficients")
            out[q] = arith.lift(Fraction(int(v.p), int(v.q)))
        else:
            out[q] = to_mp(v, ctx)
    return out


def _trig_weight(inner: InnerEquation, q: int, arith, ctx):
    """``exp(q phi0) = w_q z^(-q r)`` with ``w_q = (-r)^(q/(n-1))`` (principal)."""
    k = inner.n - 1
    r = inner.r
    if q % k == 0:
        return arith.lift((-r) ** (q // k))
    if arith.exact:
        raise ValueError("exact arithmetic needs (n-1) | k for trigonometric tail terms")
    return ctx.exp(ctx.mpf(q) / k * ctx.log(ctx.mpc(-ctx.mpf(r.numerator) / r.denominator)))


def compose_g(inner: InnerEquation, s: LogPowerSeries, order: int, ctx=None) -> LogPowerSeries:
    """``g(phi)`` for ``phi = s`` (polynomial) or ``phi = phi0 + s`` (trig), to index ``order``."""
    _check_order(s, order, inner.n - 1)
    A = _dense(s, order)
    arith = _arith_for(A, ctx) or _MpArith(mpmath.mp)
    one = arith.lift(1)
    G = _G_values(inner, arith, ctx or mpmath.mp)
    out: dict[int, list] = {}
    if inner.case == POLYNOMIAL:
        if not A:
            return LogPowerSeries(inner.r, {}, order, "plain", inner.n)
        for q, coef in [(inner.n, -one)] + sorted(G.items()):
            if q > order:
                continue
            P = _series_pow(A, q, order)
            for k, lp in P.items():
                out[k] = _lp_add(out.get(k, []), _lp_scale(lp, coef))
    else:
        step = inner.n - 1
        for q, coef, shift in [(step, arith.lift(inner.r), step)] + [
                (q, G[q] * _trig_weight(inner, q, arith, ctx or mpmath.mp), q) for q in sorted(G)]:
            V = {k: _lp_scale(lp, q) for k, lp in A.items()}
            E = _series_exp(V, order - shift, one) if order >= shift else {}
            for k, lp in E.items():
                out[k + shift] = _lp_add(out.get(k + shift, []), _lp_scale(lp, coef))
    return LogPowerSeries(inner.r, {k: tuple(_trim(v)) for k, v in sorted(out.items())}, order,
                          "plain", inner.n)


def lambda_N(inner: InnerEquation, N: int) -> Fraction:
    """Coefficient of the linear recurrence for the order-``N`` term."""
    if N < 1:
        raise ValueError("N must be >= 1")
    r = inner.r
    a = N * r
    if inner.case == POLYNOMIAL:
        return a * (a + 1) - inner.n * r * (r + 1)
    return a * (a + 1) - 2


# solver ------------------------------------------------------------------


@dataclass(frozen=True)
class FormalSolution:
    """Truncated formal solution ``sum_{k<=N}``; ``coeffs[k]`` is a log-poly."""

    inner: InnerEquation
    N: int
    coeffs: Mapping[int, tuple]
    exact: bool
    resonance: int | None
    prec: int | None = None
    _numeric: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n(self) -> int:
        return self.inner.n

    @property
    def m(self) -> int | None:
        return self.inner.m

    @property
    def series(self) -> LogPowerSeries:
        base = "plain" if self.inner.case == POLYNOMIAL else "trig_log"
        return LogPowerSeries(self.inner.r, self.coeffs, self.N, base, self.inner.n)

    def numeric_coeffs(self, ctx=mpmath.mp) -> dict[int, list]:
        key = ctx.prec
        if key not in self._numeric:
            if self.exact:
                c0 = to_mp(self.inner.c0, ctx) if self.inner.case == POLYNOMIAL else None
                conv = {k: [x.evaluate(c0, ctx) for x in lp] for k, lp in self.coeffs.items()}
            else:
                conv = {k: [ctx.mpmathify(x) for x in lp] for k, lp in self.coeffs.items()}
            self._numeric[key] = conv
        return self._numeric[key]

    def coefficient_table(self, ctx=mpmath.mp) -> list[tuple[int, int, object]]:
        """Rows ``(k, j, c_{k-1,j})`` as numbers."""
        rows = []
        for k, lp in sorted(self.numeric_coeffs(ctx).items()):
            for j, c in enumerate(lp):
                rows.append((k, j, ctx.mpc(c)))
        return rows


def _exact_field(inner: InnerEquation) -> RootField:
    r = inner.r
    if inner.case == POLYNOMIAL:
        return RootField(inner.n - 1, -r * (r + 1))
    return RootField(1, Fraction(1))


def solve_formal(inner: InnerEquation, N: int, ctx=None) -> FormalSolution:
    """Determine the coefficients order by order up to ``N``.

    ``ctx=None`` works in the exact field ``Q(c0)``; otherwise in the mpmath
    context ``ctx`` with ``c0`` the inner equation's chosen branch.  At the
    resonant order the log-free coefficient is normalized to zero.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if ctx is None:
        arith = _ExactArith(_exact_field(inner))
    else:
        arith = _MpArith(ctx)
    G = _G_values(inner, arith, ctx)
    one = arith.lift(1)
    zero = arith.zero
    n, r, step = inner.n, inner.r, inner.n - 1
    coeffs: dict[int, list] = {}
    resonance = None

    if inner.case == POLYNOMIAL:
        if arith.exact:
            c0, inv_c0 = arith.field.gen, arith.field.gen_inverse
        else:
            c0 = to_mp(inner.c0, ctx)
            inv_c0 = 1 / c0
        c0_pow = {q: c0**q for q in [n] + list(G)}
        coeffs[1] = [c0]
        a: dict[int, list] = {}
        B = {q: [[one]] for q in [n] + list(G)}

        def extend(q, upto):
            while len(B[q]) <= upto:
                idx = len(B[q])
                nxt = _miller_next(a, B[q], idx, q)
                B[q].append(nxt if nxt is not None else [zero])

        for k in range(2, N + 1):
            R = k + step
            res = [zero]
            p = 1
            while R - p * step >= 1:
                i = R - p * step
                if i < k:
                    res = _lp_add(res, _delta2_term(i * r, p, coeffs[i]))
                p += 1
            extend(n, k - 2)
            partial = _miller_next(a, B[n], k - 1, n, skip=k - 1)
            if partial is not None:
                res = _lp_add(res, _lp_scale(partial, c0_pow[n]))
            for q, gq in G.items():
                idx = R - q
                if idx >= 0:
                    extend(q, idx)
                    res = _lp_add(res, _lp_scale(B[q][idx], -gq * c0_pow[q]))
            res = _trim(res)
            lam = lambda_N(inner, k)
            coeffs[k], hit = _solve_level(res, lam, k * r, zero, arith)
            if hit:
                resonance = k
            a[k - 1] = _lp_scale(coeffs[k], inv_c0)
            if len(B[n]) == k - 1:
                full = _miller_next(a, B[n], k - 1, n)
                B[n].append(full if full is not None else [zero])
    else:
        W = {q: G[q] * _trig_weight(inner, q, arith, ctx) for q in G}
        v: dict[int, list] = {}
        E = [[one]]
        VG = {q: {} for q in G}
        EG = {q: [[one]] for q in G}
        for k in range(1, N + 1):
            R = k + step
            res = [zero]
            p = 1
            while R - p * step >= 1:
                i = R - p * step
                if i < k:
                    res = _lp_add(res, _delta2_term(i * r, p, coeffs[i]))
                p += 1
            if R % step == 0:
                res = _lp_add(res, [arith.lift(r / (R // step))])
            partial = _exp_next(v, E, k, skip=k)
            if partial is not None:
                res = _lp_add(res, _lp_scale(partial, -arith.lift(r)))
            for q in G:
                idx = R - q
                if idx >= 0:
                    while len(EG[q]) <= idx:
                        nxt = _exp_next(VG[q], EG[q], len(EG[q]))
                        EG[q].append(nxt if nxt is not None else [zero])
                    res = _lp_add(res, _lp_scale(EG[q][idx], -W[q]))
            res = _trim(res)
            coeffs[k], hit = _solve_level(res, lambda_N(inner, k), k * r, zero, arith)
            if hit:
                resonance = k
            v[k] = _lp_scale(coeffs[k], step)
            for q in G:
                VG[q][k] = _lp_scale(coeffs[k], q)
            full = _exp_next(v, E, k)
            E.append(full if full is not None else [zero])

    coeffs = {k: tuple(_trim(lp)) for k, lp in coeffs.items()}
    return FormalSolution(inner, N, coeffs, arith.exact, resonance, None if ctx is None else ctx.prec)


def _solve_level(res, lam: Fraction, a: Fraction, zero, arith):
    """Solve ``L(c) = -res`` for the log-poly ``c`` at exponent ``a``.

    ``L`` acts as ``lam c_j - (j+1)(2a+1) c_{j+1} + (j+2)(j+1) c_{j+2}``
    on the ``L^j`` component.  When ``lam = 0`` the log degree rises by one
    and the free log-free coefficient is set to zero.
    """
    J = len(res) - 1
    s = 2 * a + 1
    if lam != 0:
        c = [zero] * (J + 1)
        for j in range(J, -1, -1):
            acc = -res[j]
            if j + 1 <= J:
                acc = acc + c[j + 1] * ((j + 1) * s)
            if j + 2 <= J:
                acc = acc - c[j + 2] * ((j + 2) * (j + 1))
            c[j] = acc * (1 / lam)
        return c, False
    c = [zero] * (J + 2)
    for j in range(J, -1, -1):
        acc = res[j]
        if j + 2 <= J + 1:
            acc = acc + c[j + 2] * ((j + 2) * (j + 1))
        c[j + 1] = acc * Fraction(1, (j + 1)) * (1 / s)
    return c, True


# residual ----------------------------------------------------------------


def residual_series(inner: InnerEquation, fs: FormalSolution, kmax: int, ctx=None) -> dict[int, list]:
    """``D2(phi_N) - g(phi_N)`` through index ``kmax``, recomputed from scratch."""
    # phi_N is a finite sum, known exactly at every index
    S = fs.series
    S = LogPowerSeries(S.r, S.coeffs, kmax, S.base, S.n)
    d2 = formal_delta2(S, kmax)
    g = compose_g(inner, S, kmax, ctx=ctx)
    out: dict[int, list] = {}
    for k in range(1, kmax + 1):
        x = list(d2.coeffs.get(k, ()))
        y = list(g.coeffs.get(k, ()))
        if not x and not y:
            continue
        lp = _lp_add(x, [-t for t in y])
        out[k] = _trim(lp)
    return out


def residual_order(inner: InnerEquation, fs: FormalSolution, window: int | None = None, ctx=None):
    """Lowest surviving ``(exponent, log power)`` of the truncation residual.

    The exponent is returned as an exact rational (``index * r``).  If the
    residual vanishes through the window, ``(window exponent, -1)``.
    """
    step = inner.n - 1
    kmax = fs.N + step + (window if window is not None else 2 * step + 2)
    if not fs.exact and ctx is None:
        ctx = mpmath.mp.clone()
        ctx.prec = fs.prec or 53
    res = residual_series(inner, fs, kmax, ctx=ctx)
    arith = _MpArith(ctx) if not fs.exact else None
    scale = 1
    if arith is not None:
        scale = max((abs(x) for lp in fs.numeric_coeffs(ctx).values() for x in lp), default=1)
    for k in sorted(res):
        lp = res[k]
        nz = [j for j, x in enumerate(lp) if (x if fs.exact else not arith.is_zero(x, scale * 10**6))]
        if nz:
            return k * inner.r, max(nz)
    return kmax * inner.r, -1


# numeric evaluation --------------------------------------------------------


@dataclass(frozen=True)
class SeriesValue:
    value: object
    derivative: object
    tail_estimate: float
    terms_used: int


def eval_series(fs: FormalSolution, z, ctx=mpmath.mp, warn: bool = True) -> SeriesValue:
    """Optimally truncated value and derivative of the formal solution at ``z``.

    Principal branches of ``log z`` and ``z^-r``; points on the negative real
    axis are rejected.
    """
    z = ctx.mpc(z)
    if z.imag == 0 and z.real <= 0:
        raise ValueError("evaluation point on the branch cut of log z")
    coeffs = fs.numeric_coeffs(ctx)
    r = fs.inner.r
    rr = ctx.mpf(r.numerator) / r.denominator
    L = ctx.log(z)
    zr = ctx.exp(-rr * L)
    zinv = 1 / z
    terms, dterms, mags = [], [], []
    live = []
    # numerically cancelled coefficients must not pose as the smallest term
    noise = ctx.eps * 2**20
    scale = ctx.mpf(0)
    zpow = ctx.mpc(1)
    for k in range(1, fs.N + 1):
        zpow *= zr
        lp = coeffs.get(k, [0])
        pv = ctx.mpc(0)
        dv = ctx.mpc(0)
        for j in range(len(lp) - 1, -1, -1):
            pv = pv * L + lp[j]
        for j in range(len(lp) - 1, 0, -1):
            dv = dv * L + j * lp[j]
        t = zpow * pv
        terms.append(t)
        dterms.append(zpow * zinv * (-k * rr * pv + dv))
        mags.append(abs(t))
        size = max((abs(c) for c in lp), default=0)
        if size > noise * scale:
            live.append(k - 1)
        scale = max(scale, size)
    live = live or [0]
    kstar = min(live, key=lambda i: (mags[i], -i))
    seq = [mags[i] for i in live if i <= kstar]
    decreasing = sum(1 for a, b in zip(seq, seq[1:]) if b < a)
    if warn and decreasing < 2 and len(live) >= 4:
        warnings.warn(f"formal series not decreasing at z={ctx.nstr(z, 8)}", DivergenceWarning, stacklevel=2)
    value = ctx.fsum(terms[: kstar + 1])
    deriv = ctx.fsum(dterms[: kstar + 1])
    if fs.inner.case != POLYNOMIAL:
        k1 = fs.inner.n - 1
        value += (ctx.log(ctx.mpc(-rr)) - 2 * L) / k1
        deriv += -rr * zinv
    return SeriesValue(value, deriv, float(mags[kstar]), kstar + 1)


def check_capacity(fs: FormalSolution, order: int):
    if order > fs.N:
        raise TruncationOverflow(f"order {order} exceeds truncation {fs.N}")
