"""Singularity of the limit flow, extrapolation in ``h`` and the comparison report."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import mpmath
import numpy as np
import sympy

from .errors import ConfigError, DomainError, IllConditioned, NoRootInWindow
from .maps import POLYNOMIAL, MapSpec, epsilon_of_h, to_mp
from .quadrature import adaptive_gauss

__all__ = [
    "F1_ENERGY",
    "F2_ENERGY",
    "RhoResult",
    "ExtrapolationModel",
    "singularity_constant",
    "energy_from_map",
    "singularity_rho",
    "chi_for_map",
    "extrapolate",
    "chi_drift_factor",
    "compare_report",
    "report_json",
]

# ``xdot^2 = P(x)`` along the homoclinic of the (higher-order) limit flow,
# as ``(power of x, power of eps) -> coefficient``
F2_ENERGY = {(2, 0): Fraction(1), (4, 0): Fraction(-1, 2)}
F1_ENERGY = {(2, 0): Fraction(1), (4, 0): Fraction(-1, 2), (8, 1): Fraction(-1, 4)}

_ENERGIES = {"f1": F1_ENERGY, "f2": F2_ENERGY}


@dataclass(frozen=True)
class RhoResult:
    h: float
    eps: object
    x_turn: object
    rho: object
    quadrature_error: float


@dataclass(frozen=True)
class ExtrapolationModel:
    basis: tuple
    samples: tuple
    limit: float
    fit_residual: float
    coefficients: tuple
    condition: float
    limit_without_largest: float | None = None


def singularity_constant(ctx=mpmath.mp):
    """``2^(1/4) Gamma(3/4)^2 / sqrt(pi)``."""
    return ctx.mpf(2) ** ctx.mpf(0.25) * ctx.gamma(ctx.mpf(3) / 4) ** 2 / ctx.sqrt(ctx.pi)


def energy_from_map(spec: MapSpec) -> dict[tuple[int, int], Fraction]:
    """``xdot^2`` polynomial of ``xddot = f(x, h)/eps`` for an eps-basis polynomial map."""
    if spec.case != POLYNOMIAL or spec.eps_coeffs is None:
        raise ConfigError("limit-flow energy needs a polynomial map written in powers of eps")
    out: dict[tuple[int, int], Fraction] = {}
    for (p, j), v in spec.eps_coeffs.items():
        v = sympy.Rational(sympy.nsimplify(v))
        if v == 0:
            continue
        key = (j + 1, p - 1)
        out[key] = out.get(key, Fraction(0)) + Fraction(2 * int(v.p), (j + 1) * int(v.q))
    return out


def _poly(energy: Mapping, eps, ctx) -> list:
    """Dense coefficients of ``P(x)`` at the given ``eps``."""
    deg = max(k for k, _ in energy)
    coeffs = [ctx.mpf(0)] * (deg + 1)
    for (k, p), c in energy.items():
        c = Fraction(c)
        term = ctx.mpf(c.numerator) / c.denominator
        if p:
            term *= eps**p
        coeffs[k] += term
    while len(coeffs) > 1 and coeffs[-1] == 0:
        coeffs.pop()
    return coeffs


def _horner(coeffs, x):
    out = 0
    for c in reversed(coeffs):
        out = out * x + c
    return out


def _deflate(coeffs, root):
    """Quotient of the polynomial by ``(x - root)``."""
    q = [0] * (len(coeffs) - 1)
    acc = 0
    for i in range(len(coeffs) - 1, 0, -1):
        acc = acc * root + coeffs[i]
        q[i - 1] = acc
    return q


def _turning_point(R, ctx):
    """Smallest positive root of ``R`` by bracketing plus safeguarded Newton."""
    dR = [i * c for i, c in enumerate(R)][1:]
    if _horner(R, 0) <= 0:
        raise NoRootInWindow("energy is not positive near the origin")
    a, b = ctx.mpf(0), ctx.mpf("0.125")
    while _horner(R, b) > 0:
        a, b = b, 2 * b
        if b > 1e6:
            raise NoRootInWindow("no positive turning point")
    x = (a + b) / 2
    for _ in range(10 * ctx.prec):
        fx = _horner(R, x)
        if fx > 0:
            a = x
        else:
            b = x
        d = _horner(dR, x)
        step = fx / d if d != 0 else 0
        nx = x - step
        if d == 0 or not (a < nx < b):
            nx = (a + b) / 2
        if abs(nx - x) <= ctx.eps * abs(x) * 4 or b - a <= ctx.eps * b:
            x = nx
            break
        x = nx
    if _horner(dR, x) == 0:
        raise NoRootInWindow("turning point is not simple")
    return x


def _check_open_path(Q, x0, ctx):
    # -P must stay positive on (x0, inf): no further turning point, P -> -inf
    if Q[-1] >= 0:
        raise DomainError("energy grows at infinity; the orbit never escapes")
    if len(Q) > 1:
        roots = ctx.polyroots(list(reversed(Q)), maxsteps=200, extraprec=2 * ctx.prec)
        tiny = ctx.mpf(10) ** (-ctx.dps // 2)
        if any(abs(ctx.im(z)) < tiny and ctx.re(z) > x0 for z in roots):
            raise DomainError("a second turning point blocks the real path to infinity")


def singularity_rho(energy_coeffs: Mapping = F1_ENERGY, h=0, tol=1e-20, ctx=None, eps=None) -> RhoResult:
    """``rho(h) = i * int_{x_turn}^inf dx / sqrt(-P(x))`` for ``xdot^2 = P(x)``.

    ``P`` must vanish to second order at the origin.  The turning-point end
    uses ``x = x_turn + u^2`` and the infinite end ``v = 1/x``.
    """
    if ctx is None:
        ctx = mpmath.MPContext()
        ctx.dps = max(30, int(-math.log10(float(tol))) + 15)
    eps = epsilon_of_h(ctx.mpf(h), ctx) if eps is None else ctx.mpf(eps)
    P = _poly(energy_coeffs, eps, ctx)
    if len(P) < 3 or P[0] != 0 or P[1] != 0:
        raise ConfigError("energy must vanish to second order at the origin")
    d = len(P) - 1
    if d % 2:
        raise ConfigError("odd-degree energy has no symmetric homoclinic")
    R = P[2:]
    x0 = _turning_point(R, ctx)
    Q = _deflate(R, x0)
    _check_open_path(Q, x0, ctx)
    x1 = 2 * x0

    def near(u):
        x = x0 + u * u
        return 2 / (x * ctx.sqrt(-_horner(Q, x)))

    Pt = list(reversed(P))  # v^d P(1/v)

    def far(v):
        return v ** (d // 2 - 2) / ctx.sqrt(-_horner(Pt, v))

    tol = ctx.mpf(tol)
    a = adaptive_gauss(near, 0, ctx.sqrt(x1 - x0), tol / 2, ctx)
    vmax = 1 / x1
    # geometric breakpoints resolve the scale |v| ~ |P_d|^(1/(d-4)) where the far piece turns
    scale = abs(P[-1]) ** (ctx.mpf(1) / (d - 4)) if d > 4 and P[-1] != 0 else vmax
    cuts = [vmax]
    while cuts[-1] > scale / 16 and len(cuts) < 200:
        cuts.append(cuts[-1] / 4)
    cuts.append(ctx.mpf(0))
    total_b, err_b = ctx.mpf(0), ctx.mpf(0)
    share = tol / 2 / (len(cuts) - 1)
    for hi, lo in zip(cuts, cuts[1:]):
        part = adaptive_gauss(far, lo, hi, share, ctx)
        total_b += part.value
        err_b += part.error
    val = a.value + total_b
    return RhoResult(float(h), eps, x0, ctx.mpc(0, val), float(a.error + err_b))


def chi_for_map(map_id, h, rule: str | complex | None = None, tol=1e-25):
    """Singularity ``chi`` (``Im chi > 0``) used to normalize the splitting.

    Rules: ``"constant"`` (``i pi/2``), ``"truncated"`` (``i(pi/2 - C h^(1/2))``),
    ``"full"`` (``rho(h)`` of the higher-order limit flow) or a number.
    """
    if rule is not None and not isinstance(rule, str):
        return complex(rule)
    name = map_id.name if isinstance(map_id, MapSpec) else str(map_id)
    if name == "f2":
        return complex(0, math.pi / 2)
    if name == "f1":
        rule = rule or "truncated"
        if h == 0 or rule == "constant":
            return complex(0, math.pi / 2)
        if rule == "truncated":
            return complex(0, math.pi / 2 - float(singularity_constant()) * math.sqrt(h))
        if rule == "full":
            return complex(singularity_rho(F1_ENERGY, h, tol).rho)
        raise ConfigError(f"unknown chi rule {rule!r}")
    if isinstance(map_id, MapSpec) and rule in ("full", None):
        if rule is None:
            raise ConfigError(f"no default chi rule for map {name!r}; pass rule='full' or a value")
        return complex(singularity_rho(energy_from_map(map_id), h, tol).rho)
    if rule == "constant":
        return complex(0, math.pi / 2)
    raise ConfigError(f"unknown map {name!r} without a chi rule")


def chi_drift_factor(h, chi, energy=F1_ENERGY, tol=1e-25) -> float:
    """``exp(2 pi (|chi| - |rho(h)|) / h)``: what a truncated ``chi`` leaves in the normalization."""
    rho = singularity_rho(energy, h, tol).rho
    return math.exp(2 * math.pi * (abs(complex(chi)) - float(abs(rho))) / float(h))


def _basis(basis, k_terms):
    if isinstance(basis, str):
        if basis in ("h2", "even"):
            seq = [2 * (i + 1) for i in range(k_terms)]
        elif basis in ("sqrt", "half"):
            seq = [Fraction(i + 1, 2) for i in range(k_terms)]
        else:
            raise ConfigError(f"unknown basis {basis!r}")
        return tuple(seq)
    seq = tuple(basis)
    return seq[:k_terms] if k_terms is not None else seq


def _fit(hs, vs, exps, cond_max):
    A = np.column_stack([np.ones_like(hs)] + [hs ** float(e) for e in exps])
    scale = np.abs(A).max(axis=0)
    As = A / scale
    cond = float(np.linalg.cond(As))
    if not np.isfinite(cond) or cond > cond_max:
        raise IllConditioned(f"design matrix condition number {cond:.3g} exceeds {cond_max:.1g}")
    coef, *_ = np.linalg.lstsq(As, vs, rcond=None)
    coef = coef / scale
    resid = float(np.linalg.norm(A @ coef - vs))
    return coef, resid, cond


def extrapolate(samples: Sequence[tuple], basis="h2", k_terms: int | None = None,
                cond_max: float = 1e12, factors: Sequence[float] | None = None) -> ExtrapolationModel:
    """Least-squares ``value(h) = K(h) (limit + sum_i a_i h^basis_i)``.

    ``K(h)`` defaults to 1; ``factors`` supplies known multiplicative factors
    per sample (same order as ``samples``) that tend to 1 as ``h -> 0``.
    """
    if factors is not None:
        if len(factors) != len(samples):
            raise ValueError("one factor per sample")
        samples = [(h, float(v) / float(k)) for (h, v), k in zip(samples, factors)]
    pts = sorted((float(h), float(v)) for h, v in samples)
    if k_terms is None:
        k_terms = len(basis) if not isinstance(basis, str) else max(1, len(pts) - 2)
    exps = _basis(basis, k_terms)
    if len(pts) < len(exps) + 1:
        raise IllConditioned(f"{len(pts)} samples cannot fit {len(exps) + 1} parameters")
    hs = np.array([p[0] for p in pts])
    if len(set(hs)) != len(hs):
        raise IllConditioned("sample abscissae must be distinct")
    vs = np.array([p[1] for p in pts])
    coef, resid, cond = _fit(hs, vs, exps, cond_max)
    without = None
    if len(pts) >= len(exps) + 2:
        without = float(_fit(hs[:-1], vs[:-1], exps, cond_max)[0][0])
    return ExtrapolationModel(tuple(str(e) for e in exps), tuple(pts), float(coef[0]), resid,
                              tuple(float(c) for c in coef[1:]), cond, without)


def compare_report(inner_result, splitting_results, chi_rule=None, basis="h2",
                   k_terms: int | None = None, energy=None) -> dict:
    """Splitting sequence against the inner plateau, as a dict with a ``text`` field.

    With ``energy`` given, the fit divides out :func:`chi_drift_factor` for
    each sample's ``chi``.
    """
    plateau = None
    if inner_result is not None:
        plateau = float(getattr(inner_result, "omega_in_tilde", inner_result))
    rows = []
    for res in sorted(splitting_results, key=lambda r: -float(r.h)):
        val = float(res.omega_tilde)
        rows.append({
            "h": float(res.h),
            "omega_tilde": val,
            "rel_discrepancy": None if plateau is None else abs(val - plateau) / abs(plateau),
            "digits": res.diagnostics.get("digits"),
        })
    report = {"inner_plateau": plateau, "chi_rule": chi_rule, "rows": rows,
              "complete": bool(rows) and plateau is not None}
    model = None
    if len(rows) >= 2:
        k = k_terms if k_terms is not None else min(len(rows) - 1, 2)
        try:
            factors = None
            if energy is not None:
                chis = {float(res.h): res.chi for res in splitting_results}
                factors = [chi_drift_factor(r["h"], chis[r["h"]], energy) for r in rows]
            model = extrapolate([(r["h"], r["omega_tilde"]) for r in rows], basis, k, factors=factors)
        except IllConditioned as exc:
            report["extrapolation_error"] = str(exc)
    if model is not None:
        report["extrapolation"] = {k: v for k, v in asdict(model).items() if k != "samples"}
        report["limit"] = model.limit
        if plateau is not None:
            report["limit_rel_discrepancy"] = abs(model.limit - plateau) / abs(plateau)
    report["text"] = _report_text(report)
    return report


def _report_text(report) -> str:
    lines = []
    plateau = report["inner_plateau"]
    lines.append(f"inner plateau  {plateau!r}" if plateau is not None else "inner plateau  (missing)")
    lines.append(f"{'h':>12}  {'omega_tilde':>22}  {'rel diff':>10}")
    for r in report["rows"]:
        rd = "" if r["rel_discrepancy"] is None else f"{r['rel_discrepancy']:.3e}"
        lines.append(f"{r['h']:>12.6g}  {r['omega_tilde']:>22.12g}  {rd:>10}")
    if "limit" in report:
        tail = ""
        if "limit_rel_discrepancy" in report:
            tail = f"  rel diff {report['limit_rel_discrepancy']:.3e}"
        lines.append(f"extrapolated   {report['limit']:.12g}{tail}")
    if not report["complete"]:
        lines.append("incomplete: missing splitting data or inner plateau")
    return "\n".join(lines)


def report_json(report) -> str:
    return json.dumps({k: v for k, v in report.items() if k != "text"}, indent=2, sort_keys=True)
