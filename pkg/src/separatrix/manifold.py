"""Unstable manifold of the origin, the first homoclinic point and the Lazutkin invariant.

The natural parametrization ``x(t+h) - 2x(t) + x(t-h) = f(x(t), h)`` of the
unstable branch is ``x(t) = sum_k b_k e^(k mu t)`` with ``b_1 = 1`` and
``2 cosh(mu h) - 2 = f'(0)`` (so ``mu = 1`` when ``f'(0) = 4 sinh^2(h/2)``).
The series seeds an orbit far back in time, which is then iterated with the
map itself.  Reversibility gives the stable branch as ``x(-h-t)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath

from .errors import (MarchOverflow, NoRootInWindow, PrecisionInsufficient, ResonanceError)
from .maps import POLYNOMIAL, MapSpec, f_prime, f_value

__all__ = [
    "ManifoldExpansion",
    "OrbitData",
    "SplittingResult",
    "digit_policy",
    "make_context",
    "unstable_coeffs",
    "recurrence_residuals",
    "eval_expansion",
    "choose_seed",
    "march_orbit",
    "first_homoclinic_phase",
    "lazutkin_omega",
    "omega_tilde",
]


def digit_policy(h, chi, guard: int = 30) -> int:
    """Decimal digits for ``omega ~ exp(-2 pi |chi| / h)`` plus a guard."""
    return int(math.ceil(2 * math.pi * abs(complex(chi)) / (float(h) * math.log(10)))) + guard


def make_context(digits: int):
    ctx = mpmath.MPContext()
    ctx.dps = digits
    return ctx


@dataclass(frozen=True)
class ManifoldExpansion:
    h: object
    M: int
    b: tuple
    b1: object
    mu: object
    lin: object
    precision_bits: int
    ctx: object = field(compare=False, repr=False)


@dataclass(frozen=True)
class OrbitData:
    """Values and ``t``-derivatives at consecutive grid times ``t_start + j h``."""

    t_start: object
    x: tuple
    dx: tuple
    steps: int
    max_residual: float


@dataclass(frozen=True)
class SplittingResult:
    h: float
    chi: complex
    omega: object
    omega_tilde: float
    shift: object
    diagnostics: dict


def _real(v, ctx):
    if isinstance(v, ctx.mpc):
        return v.real
    return v


def _linear_coefficient(spec: MapSpec, h, ctx):
    return _real(f_prime(spec, ctx.mpf(0), h, ctx), ctx)


def unstable_coeffs(spec: MapSpec, h, M: int, digits: int | None = None, ctx=None) -> ManifoldExpansion:
    """Coefficients ``b_1..b_M`` of the unstable parametrization, ``b_1 = 1``."""
    if M < 3:
        raise ValueError("M must be at least 3")
    ctx = ctx or make_context(digits or 50)
    hv = ctx.mpf(h)
    if hv <= 0:
        raise ValueError("h must be positive")
    F = spec.coefficient_values(h, ctx)
    lin = _linear_coefficient(spec, h, ctx)
    if lin <= 0:
        raise ResonanceError("origin is not hyperbolic: f'(0) <= 0")
    mu = ctx.acosh(1 + lin / 2) / hv
    b = [ctx.mpf(0), ctx.mpf(1)]
    if spec.case == POLYNOMIAL:
        degs = sorted(j for j in F if j >= 2)
        top = max(degs) if degs else 1
        # P[j][k]: coefficient of e^(k mu t) in x(t)^j
        P = {j: [ctx.mpf(0)] * (M + 1) for j in range(2, top + 1)}
        P[1] = b
        for k in range(2, M + 1):
            for j in range(2, top + 1):
                prev = P[j - 1]
                P[j][k] = ctx.fsum(b[i] * prev[k - i] for i in range(1, k - j + 2))
            rhs = ctx.fsum(F[j] * P[j][k] for j in degs)
            den = 4 * ctx.sinh(k * mu * hv / 2) ** 2 - lin
            if den == 0:
                raise ResonanceError(f"vanishing denominator at k={k}")
            b.append(rhs / den)
    else:
        js = [j for j in F if j != 0]
        # E[j][k]: coefficient of e^(k mu t) in exp(i j x(t)), b_k part added once b_k is known
        E = {j: [ctx.mpc(1), ctx.mpc(0, j) * b[1]] + [ctx.mpc(0)] * (M - 1) for j in js}
        for k in range(2, M + 1):
            rhs = ctx.mpc(0)
            for j in js:
                ij = ctx.mpc(0, j)
                E[j][k] = ctx.fsum(i * ij * b[i] * E[j][k - i] for i in range(1, k)) / k
                rhs += F[j] * E[j][k]
            den = 4 * ctx.sinh(k * mu * hv / 2) ** 2 - lin
            if den == 0:
                raise ResonanceError(f"vanishing denominator at k={k}")
            b.append(_real(rhs / den, ctx))
            for j in js:
                E[j][k] += ctx.mpc(0, j) * b[k]
    return ManifoldExpansion(hv, M, tuple(b), b[1], mu, lin, ctx.prec, ctx)


def _composition(spec: MapSpec, exp: ManifoldExpansion):
    """``[e^(k mu t)] f(x(t))`` for ``k <= M``, from scratch by dense products."""
    ctx = exp.ctx
    M = exp.M
    F = spec.coefficient_values(exp.h, ctx)
    b = list(exp.b)
    out = [ctx.mpf(0)] * (M + 1)
    if spec.case == POLYNOMIAL:
        power = [ctx.mpf(1)] + [ctx.mpf(0)] * M
        for j in range(1, max(F) + 1):
            power = [ctx.fsum(power[i] * b[k - i] for i in range(0, k)) for k in range(M + 1)]
            if j in F:
                out = [o + F[j] * p for o, p in zip(out, power)]
        return out
    for j, c in F.items():
        if j == 0:
            continue
        V = [ctx.mpc(0, j) * x for x in b]
        Ej = [ctx.mpc(1)] + [ctx.mpc(0)] * M
        for k in range(1, M + 1):
            Ej[k] = ctx.fsum(i * V[i] * Ej[k - i] for i in range(1, k + 1)) / k
        out = [o + c * e for o, e in zip(out, Ej)]
    return [_real(o, ctx) for o in out]


def recurrence_residuals(spec: MapSpec, exp: ManifoldExpansion) -> list:
    """``|4 sinh^2(k mu h/2) b_k - [e^(k mu t)] f(x)|`` for ``k = 1..M``, relative to ``|b_k|``."""
    ctx = exp.ctx
    comp = _composition(spec, exp)
    res = []
    for k in range(1, exp.M + 1):
        lhs = 4 * ctx.sinh(k * exp.mu * exp.h / 2) ** 2 * exp.b[k]
        scale = max(abs(lhs), abs(comp[k]), ctx.mpf(10) ** (-ctx.dps * 4))
        res.append(abs(lhs - comp[k]) / scale)
    return res


def eval_expansion(exp: ManifoldExpansion, t):
    """``x(t)`` and ``dx/dt`` from the series (Horner in ``e^(mu t)``)."""
    ctx = exp.ctx
    w = ctx.exp(exp.mu * t)
    x = ctx.mpf(0)
    dx = ctx.mpf(0)
    for k in range(exp.M, 0, -1):
        x = (x + exp.b[k]) * w
        dx = (dx + k * exp.b[k]) * w
    return x, dx * exp.mu


def choose_seed(exp: ManifoldExpansion, digits: int | None = None):
    """Latest ``t0`` at which the last retained terms are below ``10^-digits``."""
    ctx = exp.ctx
    digits = digits if digits is not None else ctx.dps
    target = -digits * math.log(10)
    best = None
    for k in range(max(1, exp.M - 4), exp.M + 1):
        bk = abs(exp.b[k])
        if bk == 0:
            continue
        t = (target - float(ctx.log(bk))) / (k * float(exp.mu))
        best = t if best is None else min(best, t)
    if best is None:
        raise ValueError("expansion has no nonzero tail coefficients")
    return best


def _march(spec: MapSpec, exp: ManifoldExpansion, t_start, steps: int, keep: int = 4, record=None):
    """Iterate from seeds at ``t_start - h`` and ``t_start``; return the last ``keep`` points."""
    ctx = exp.ctx
    h = exp.h
    x_prev, dx_prev = eval_expansion(exp, t_start - h)
    x_cur, dx_cur = eval_expansion(exp, t_start)
    xs, dxs = [x_prev, x_cur], [dx_prev, dx_cur]
    worst = ctx.mpf(0)
    limit = 10 * (spec.rho0 if math.isfinite(spec.rho0) else 1e6)
    for i in range(steps):
        fx = _real(f_value(spec, x_cur, h, ctx), ctx)
        fp = _real(f_prime(spec, x_cur, h, ctx), ctx)
        x_next = 2 * x_cur - x_prev + fx
        dx_next = 2 * dx_cur - dx_prev + fp * dx_cur
        worst = max(worst, abs(x_next - 2 * x_cur + x_prev - fx))
        if not ctx.isfinite(x_next) or abs(x_next) > limit:
            raise MarchOverflow(i, "orbit left the domain of the map")
        x_prev, x_cur, dx_prev, dx_cur = x_cur, x_next, dx_cur, dx_next
        if record is not None:
            record(i + 1, x_prev, x_cur)
        xs.append(x_cur)
        dxs.append(dx_cur)
        if len(xs) > keep:
            xs.pop(0)
            dxs.pop(0)
    return xs, dxs, worst


def march_orbit(spec: MapSpec, h, exp: ManifoldExpansion, t0, t_target) -> OrbitData:
    """Orbit values at ``t_target - 2h .. t_target`` from a seed at ``t0`` (shifted onto the grid)."""
    ctx = exp.ctx
    hv = exp.h
    steps = int(math.ceil(float((ctx.mpf(t_target) - t0) / hv) - 1e-9))
    if steps < 0:
        raise ValueError("t_target precedes the seed")
    if steps > 10**6:
        raise MarchOverflow(0, f"step cap exceeded ({steps} steps)")
    start = ctx.mpf(t_target) - steps * hv
    xs, dxs, worst = _march(spec, exp, start, steps, keep=3)
    return OrbitData(ctx.mpf(t_target) - (len(xs) - 1) * hv, tuple(xs), tuple(dxs), steps, float(worst))


def first_homoclinic_phase(spec: MapSpec, h, exp: ManifoldExpansion, t0=None, max_time: float = 60.0):
    """Time ``s`` with ``x(s) = x(s - h)`` on the first hump of the unstable branch.

    Shifting ``t -> t + s`` (``b_1 -> e^(mu s)``) puts the homoclinic point at
    ``t = 0``.  Returns ``(s, J)`` where ``J`` is the number of steps from the
    seed used by the Newton refinement.
    """
    ctx = exp.ctx
    hv = exp.h
    t0 = ctx.mpf(choose_seed(exp) if t0 is None else t0)
    crossing = {}

    def record(i, xp, xc):
        if "j" not in crossing and xc - xp <= 0 and i > 1:
            crossing["j"] = i

    steps = int((max_time - float(t0)) / float(hv))
    found = None
    x_prev, _ = eval_expansion(exp, t0 - hv)
    x_cur, _ = eval_expansion(exp, t0)
    if x_cur - x_prev <= 0:
        raise NoRootInWindow("y is not positive at the seed; the branch does not rise")
    ys = [x_cur - x_prev]
    for i in range(steps):
        fx = _real(f_value(spec, x_cur, hv, ctx), ctx)
        x_prev, x_cur = x_cur, 2 * x_cur - x_prev + fx
        if not ctx.isfinite(x_cur) or abs(x_cur) > 1e6:
            break
        ys.append(x_cur - x_prev)
        if ys[-1] <= 0:
            found = i + 1
            break
    if found is None:
        raise NoRootInWindow("no sign change of x(t) - x(t-h) before the orbit left the window")
    y0, y1 = ys[-2], ys[-1]
    t_hi = t0 + found * hv
    s = t_hi - hv * y1 / (y1 - y0)
    J = found
    # Newton on s with a fixed number of steps from the seed
    tol = ctx.mpf(10) ** (-(ctx.dps - 8))
    for _ in range(100):
        xs, dxs, _ = _march(spec, exp, s - J * hv, J, keep=2)
        g = xs[-1] - xs[-2]
        dg = dxs[-1] - dxs[-2]
        if dg == 0:
            raise NoRootInWindow("degenerate crossing (tangency)")
        ds = g / dg
        s -= ds
        if abs(ds) <= tol * max(1, abs(s)):
            break
    else:
        raise NoRootInWindow("Newton iteration for the phase did not converge")
    return s, J


def omega_tilde(omega, h, alpha, lam, chi, ctx=mpmath.mp):
    """``h^(2 alpha + 2) lam^-2 exp(2 pi |chi| / h) omega``."""
    if isinstance(omega, SplittingResult):
        omega = omega.omega
    hv = ctx.mpf(h)
    a = ctx.mpf(alpha.numerator) / alpha.denominator if hasattr(alpha, "denominator") else ctx.mpf(alpha)
    lam = ctx.mpmathify(complex(lam)) if not isinstance(lam, (int, float)) else ctx.mpf(lam)
    val = hv ** (2 * a + 2) * lam ** -2 * ctx.exp(2 * ctx.pi * abs(ctx.mpmathify(complex(chi))) / hv) * omega
    if isinstance(val, ctx.mpc) and abs(val.imag) <= 1e-10 * abs(val):
        val = val.real
    return val


def _inner_normalization(spec: MapSpec):
    from .maps import derive_inner
    inner = derive_inner(spec)
    lam = complex(inner.lam) if inner.lam is not None else 1.0
    return inner.alpha, lam


def lazutkin_omega(spec: MapSpec, h, chi=None, digits="auto", M: int | None = None, t0=None,
                   alpha=None, lam=None, guard: int = 30) -> SplittingResult:
    """Lazutkin invariant at the first homoclinic point and its normalization.

    With ``x^s(t) = x^u(-h-t)``: ``omega(p) = xdot(0)^2 - xdot(-h)^2`` and
    ``omega(F p) = xdot(h) xdot(-h) - xdot(0) xdot(-2h)``.
    """
    if chi is None:
        from .asymptotics import chi_for_map
        chi = chi_for_map(spec, float(h))
    chi = complex(chi)
    if alpha is None or lam is None:
        a0, l0 = _inner_normalization(spec)
        alpha = a0 if alpha is None else alpha
        lam = l0 if lam is None else lam
    if digits == "auto" or digits is None:
        digits = digit_policy(h, chi, guard)
    digits = int(digits)
    ctx = make_context(digits)
    hv = ctx.mpf(h)
    if M is None:
        M = max(20, int(math.ceil(digits * math.log(10) / 10)))
    while True:
        exp = unstable_coeffs(spec, h, M, ctx=ctx)
        seed = choose_seed(exp, digits)
        if seed >= -40 or M > 4000:
            break
        M = int(M * 1.5)
    if t0 is None:
        t0 = seed
    t0 = ctx.mpf(t0)
    s, J = first_homoclinic_phase(spec, h, exp, t0)
    # grid s - (J+1)h .. s + h
    xs, dxs, worst = _march(spec, exp, s - J * hv, J + 1, keep=4)
    x_m2, x_m1, x_0, x_p1 = xs
    d_m2, d_m1, d_0, d_p1 = dxs
    om = d_0**2 - d_m1**2
    om_next = d_p1 * d_m1 - d_0 * d_m2
    if om == 0 or abs(om) < ctx.mpf(10) ** (-digits + guard):
        raise PrecisionInsufficient(f"|omega| below 10^-{digits - guard}; raise the digits")
    res = recurrence_residuals(spec, exp)
    tilde = omega_tilde(om, h, alpha, lam, chi, ctx)
    diag = {
        "M": M,
        "t0": float(t0),
        "steps": J + 1,
        "digits": digits,
        "precision_bits": ctx.prec,
        "march_residual": float(worst),
        "recurrence_residual": float(max(res[1:])) if len(res) > 1 else 0.0,
        "omega_next": om_next,
        "x0": x_0,
        "y0": x_0 - x_m1,
        "alpha": str(alpha),
        "lambda": complex(lam),
        "mu": exp.mu,
    }
    return SplittingResult(float(h), chi, om, tilde, s, diag)
