"""Analytic inner solutions by seed-and-march, and the difference invariant.

``phi^u`` is seeded from the formal series far to the left of ``z`` and
marched rightwards with ``phi(w+1) = 2 phi(w) - phi(w-1) + g(phi(w))``;
``phi^s`` is seeded to the right and marched leftwards.  Derivatives follow
the linearized recurrence.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import mpmath

from .errors import (DivergenceWarning, MarchOverflow, PrecisionInsufficient,
                     SeedDivergence, TailNotConverged)
from .formal import FormalSolution, eval_series, solve_formal
from .maps import POLYNOMIAL, InnerEquation, to_mp

__all__ = [
    "UNSTABLE",
    "STABLE",
    "InnerSample",
    "OmegaInResult",
    "inner_context",
    "default_order",
    "default_shift",
    "eval_inner_solution",
    "omega_in",
    "linear_basis_H",
    "wronskian",
    "march_linear",
]

UNSTABLE = "unstable"
STABLE = "stable"


@dataclass(frozen=True)
class InnerSample:
    z: complex
    branch: str
    phi: object
    dphi: object
    residual: float
    seed_tail: float
    flagged: bool
    next_phi: object = None
    next_dphi: object = None


@dataclass(frozen=True)
class OmegaInResult:
    z: complex
    omega_in: object
    omega_in_tilde: float
    error_budget: float
    dps: int
    K: int
    N: int


def inner_context(z, dps: int | None = None) -> mpmath.ctx_mp.MPContext:
    """Fresh mpmath context with enough digits for ``Theta ~ exp(-2 pi |Im z|)``."""
    ctx = mpmath.MPContext()
    need = math.ceil(2 * math.pi * abs(complex(z).imag) / math.log(10)) + 20
    ctx.dps = max(30, need) if dps is None else dps
    return ctx


def default_order(inner: InnerEquation, dps: int, radius: float = 20.0) -> int:
    """Truncation order whose terms at ``radius`` drop below ``10^-dps``."""
    r = float(inner.r)
    return int(math.ceil(1.5 * dps * math.log(10) / (r * math.log(radius)))) + 4


def default_shift(z, radius: float = 20.0) -> int:
    """Smallest ``K`` with ``|z - K| >= radius`` (and ``|z + K| >= radius``)."""
    z = complex(z)
    K = 1
    while min(abs(z - K), abs(z + K)) < radius:
        K += 1
    return K


def _g_funcs(inner: InnerEquation, ctx):
    G = {q: to_mp(v, ctx) for q, v in inner.G.items()}
    n = inner.n
    if inner.case == POLYNOMIAL:
        def g(p):
            return -p**n + sum(c * p**q for q, c in G.items())

        def dg(p):
            return -n * p**(n - 1) + sum(q * c * p**(q - 1) for q, c in G.items())
    else:
        def g(p):
            return -ctx.exp((n - 1) * p) + sum(c * ctx.exp(q * p) for q, c in G.items())

        def dg(p):
            return -(n - 1) * ctx.exp((n - 1) * p) + sum(q * c * ctx.exp(q * p) for q, c in G.items())
    return g, dg


def _seed(fs: FormalSolution, w, ctx):
    with warnings.catch_warnings():
        warnings.simplefilter("error", DivergenceWarning)
        try:
            return eval_series(fs, w, ctx)
        except DivergenceWarning as exc:
            raise SeedDivergence(f"formal series not decreasing at seed {complex(w)}") from exc


def eval_inner_solution(inner: InnerEquation, fs: FormalSolution, z, K: int, branch: str,
                        ctx=None, tol: float | None = None) -> InnerSample:
    """``phi`` and ``dphi`` of the chosen branch at ``z`` (and at ``z + 1``)."""
    if branch not in (UNSTABLE, STABLE):
        raise ValueError(f"unknown branch {branch!r}")
    ctx = ctx or inner_context(z)
    z = ctx.mpc(z)
    g, dg = _g_funcs(inner, ctx)
    sgn = 1 if branch == UNSTABLE else -1
    s_far = _seed(fs, z - sgn * (K + 1), ctx)
    s_near = _seed(fs, z - sgn * K, ctx)
    # values keyed by integer offset from z; K + 1 steps cover z - 1, z, z + 1
    vals = {-sgn * (K + 1): (s_far.value, s_far.derivative), -sgn * K: (s_near.value, s_near.derivative)}
    (prev, dprev), (cur, dcur) = vals[-sgn * (K + 1)], vals[-sgn * K]
    for i in range(K + 1):
        gv = g(cur)
        nxt = 2 * cur - prev + gv
        dnxt = 2 * dcur - dprev + dg(cur) * dcur
        if not (ctx.isfinite(nxt.real) and ctx.isfinite(nxt.imag)) or abs(nxt) > 1e30:
            raise MarchOverflow(i, f"{branch} march left the finite range")
        prev, cur, dprev, dcur = cur, nxt, dcur, dnxt
        vals[-sgn * (K - 1 - i)] = (cur, dcur)
    phi, dphi = vals[0]
    phi_z1, dphi_z1 = vals[1]
    res = abs(phi_z1 - 2 * phi + vals[-1][0] - g(phi))
    # the march satisfies the recurrence to round-off; the seed pair does so only to its tail
    s_in = _seed(fs, z - sgn * (K - 1), ctx)
    res = max(res, abs(s_in.value - 2 * s_near.value + s_far.value - g(s_near.value)))
    seed_tail = max(s_far.tail_estimate, s_near.tail_estimate)
    if tol is None:
        tol = 10 * max(seed_tail, float(ctx.eps)) * max(1.0, float(abs(phi))) * (K + 2) ** 2
    return InnerSample(complex(z), branch, phi, dphi, float(res), seed_tail, float(res) > tol,
                       phi_z1, dphi_z1)


def wronskian(u1_z, u1_z1, u2_z, u2_z1):
    """``W(u1, u2)(z) = u1(z) u2(z+1) - u2(z) u1(z+1)``."""
    return u1_z * u2_z1 - u2_z * u1_z1


def omega_in(inner: InnerEquation, z, K: int | None = None, fs: FormalSolution | None = None,
             dps: int | None = None, N: int | None = None,
             c0_branch: int | str | None = None) -> OmegaInResult:
    """``omega_in(z)`` and ``omega_in_tilde(z) = 2 e^(2 pi i z) Re omega_in(z)``.

    ``omega_in = -d/dz W(Theta, xi_1)`` with ``Theta = phi^u - phi^s`` and
    ``xi_1`` replaced by ``dphi^s``; the ``k = -1`` Fourier mode dominates, so
    ``omega_in = 2 pi i W``.

    ``c0_branch`` overrides the leading-coefficient branch of ``inner``;
    ``"symmetric"`` picks the one that makes ``phi`` real on the negative
    imaginary axis.
    """
    if c0_branch == "symmetric":
        inner = inner.with_c0_branch(inner.symmetric_branch())
    elif c0_branch is not None:
        inner = inner.with_c0_branch(int(c0_branch))
    z = complex(z)
    ctx = inner_context(z, dps)
    digits_lost = 2 * math.pi * max(0.0, -z.imag) / math.log(10)
    if digits_lost > ctx.dps - 5:
        raise PrecisionInsufficient(
            f"Theta ~ 1e-{digits_lost:.0f} is below the working precision of {ctx.dps} digits")
    K = default_shift(z) if K is None else K
    if fs is None:
        N = default_order(inner, ctx.dps) if N is None else N
        fs = solve_formal(inner, N, ctx=ctx)
    su = eval_inner_solution(inner, fs, z, K, UNSTABLE, ctx)
    ss = eval_inner_solution(inner, fs, z, K, STABLE, ctx)
    theta, theta1 = su.phi - ss.phi, su.next_phi - ss.next_phi
    W = wronskian(theta, theta1, ss.dphi, ss.next_dphi)
    om = 2j * ctx.pi * W
    zc = ctx.mpc(z)
    scale = ctx.exp(2j * ctx.pi * zc)
    tilde = 2 * scale * ctx.re(om)
    tilde_val = float(ctx.re(tilde)) if abs(ctx.im(tilde)) <= 1e-8 * abs(tilde) else complex(tilde)
    r = float(inner.r)
    trunc = abs(tilde) * math.exp(-2 * math.pi * max(0.0, -z.imag)) * max(abs(z) ** (2 * r + 2), 1.0)
    noise = 4 * math.pi * abs(scale) * (abs(ss.dphi) + abs(ss.next_dphi)) * (
        max(su.residual, ss.residual, float(ctx.eps) * max(1.0, abs(su.phi))) * (K + 2) ** 2)
    return OmegaInResult(z, complex(om), tilde_val, float(trunc + noise), ctx.dps, K, fs.N)


def _power(ctx, w, E):
    return ctx.exp(E * ctx.log(w))


def linear_basis_H(E, dE, z, tail: int = 20, dps: int = 30, tol: float | None = None):
    """Basis of ``Delta^2 xi = H xi`` with ``H = (1+1/z)^E - 2 + (1-1/z)^E``.

    ``xi_s = z^E``; ``xi_p(z) = -z^E sum_{k>=1} 1/((z-k)^E (z-k+1)^E)``, so that
    ``W(xi_p, xi_s) = 1``.  The first ``tail`` terms are summed directly and
    the remainder by Euler-Maclaurin, whose error estimate is checked against
    ``tol``.  ``dE`` fixes a normalization upstream and does not enter here.
    """
    ctx = mpmath.MPContext()
    ctx.dps = dps
    tol = tol if tol is not None else 10.0 ** (-(dps // 2))
    if isinstance(E, (int, Fraction)):
        Em = ctx.mpf(Fraction(E).numerator) / Fraction(E).denominator
    else:
        Em = ctx.mpf(E)
    z = ctx.mpc(z)
    if z.imag == 0 and z.real <= 0:
        raise ValueError("z on the branch cut")
    xs = _power(ctx, z, Em)

    def term(k):
        return 1 / (_power(ctx, z - k, Em) * _power(ctx, z - k + 1, Em))

    head = ctx.fsum(term(k) for k in range(1, tail + 1))
    rest, err = ctx.sumem(term, [tail + 1, ctx.inf], error=True)
    total = head + rest
    rel = float(abs(err) / max(abs(total), ctx.eps))
    if not rel <= tol:
        raise TailNotConverged(f"xi_p remainder {rel:.2e} exceeds {tol:.1e}")
    return xs, -xs * total


def march_linear(M, u0, u1, z0, steps: int, ctx=mpmath.mp):
    """March ``u(w+1) = (2 + M(w)) u(w) - u(w-1)`` from ``u(z0-1)=u0, u(z0)=u1``."""
    out = [u0, u1]
    w = ctx.mpc(z0)
    for _ in range(steps):
        out.append((2 + M(w)) * out[-1] - out[-2])
        w += 1
    return out
