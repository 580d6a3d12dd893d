"""Generalized standard maps and derivation of their inner equation.

A map is ``x* = x + y + f(x, h)``, ``y* = y + f(x, h)`` with
``f(x, h) = sum_k f_k(x) h^(k+2)``.  Coefficients are kept exact (sympy
rationals, possibly complex) so that the classification and the inner
equation are derived in exact arithmetic; numeric values are produced on
demand at whatever precision the caller's mpmath context carries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Mapping

import mpmath
import sympy

from .errors import ConfigError, DomainError, InvalidMapError

POLYNOMIAL = "polynomial"
TRIGONOMETRIC = "trigonometric"

__all__ = [
    "MapSpec",
    "Classification",
    "InnerEquation",
    "epsilon_of_h",
    "eps_power_series",
    "validate_hypotheses",
    "derive_inner",
    "eval_map",
    "jacobian",
    "f_value",
    "f_prime",
    "builtin_map",
    "load_map_config",
    "parse_value",
    "to_mp",
]


def epsilon_of_h(h, ctx=mpmath.mp):
    """Return ``4 sinh(h/2)^2`` evaluated in ``ctx``."""
    s = ctx.sinh(ctx.mpf(h) / 2)
    return 4 * s * s


@lru_cache(maxsize=None)
def eps_power_series(p: int, order: int) -> tuple[Fraction, ...]:
    """Taylor coefficients in h of ``eps(h)**p`` up to ``h**order`` (exact)."""
    base = [Fraction(0)] * (order + 1)
    for m in range(1, order // 2 + 1):
        base[2 * m] = Fraction(2, math.factorial(2 * m))
    out = [Fraction(0)] * (order + 1)
    out[0] = Fraction(1)
    for _ in range(p):
        nxt = [Fraction(0)] * (order + 1)
        for i, a in enumerate(out):
            if a:
                for j in range(order + 1 - i):
                    if base[j]:
                        nxt[i + j] += a * base[j]
        out = nxt
    return tuple(out)


def _sym(q) -> sympy.Expr:
    if isinstance(q, Fraction):
        return sympy.Rational(q.numerator, q.denominator)
    return sympy.sympify(q)


def parse_value(raw) -> sympy.Expr:
    """Parse a coefficient: ``"p/q"``, a decimal string, or ``[re, im]``.

    Decimal strings are converted exactly (``"0.1"`` is 1/10), so a single
    configuration serves every working precision.
    """
    try:
        if isinstance(raw, (list, tuple)):
            if len(raw) != 2:
                raise ConfigError(f"complex coefficient needs [re, im], got {raw!r}")
            re, im = (Fraction(str(v).strip()) for v in raw)
            return _sym(re) + sympy.I * _sym(im)
        return _sym(Fraction(str(raw).strip()))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad coefficient value {raw!r}: {exc}") from None


def to_mp(expr, ctx=mpmath.mp):
    """Convert an exact sympy number to an mpmath number of ``ctx``."""
    expr = sympy.sympify(expr)
    if expr.is_Rational:
        return ctx.mpf(int(expr.p)) / int(expr.q)
    val = sympy.N(expr, ctx.dps + 15)
    re, im = val.as_real_imag()
    re_mp = ctx.mpf(str(sympy.Float(re, ctx.dps + 15)))
    im_mp = ctx.mpf(str(sympy.Float(im, ctx.dps + 15)))
    if im_mp == 0:
        return re_mp
    return ctx.mpc(re_mp, im_mp)


@dataclass(frozen=True)
class MapSpec:
    """Coefficient family ``f_{k,j}`` of ``f(x,h) = sum f_k(x) h^(k+2)``.

    ``coeffs`` is the h-basis table used for classification.  When the map
    is naturally written in powers of ``eps = 4 sinh^2(h/2)`` the exact
    family is kept in ``eps_coeffs`` (``(p, j) -> v`` meaning ``v eps^p x^j``
    or ``v eps^p e^{ijx}``) and numeric evaluation uses it instead of the
    truncated h-table.
    """

    case: str
    coeffs: Mapping[tuple[int, int], sympy.Expr]
    k_max: int
    rho0: float = math.inf
    h0: float = math.inf
    eps_coeffs: Mapping[tuple[int, int], sympy.Expr] | None = None
    name: str = ""
    declared_zero: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.case not in (POLYNOMIAL, TRIGONOMETRIC):
            raise ConfigError(f"unknown case {self.case!r}")
        if self.k_max < 0:
            raise ConfigError("k_max must be non-negative")

    @classmethod
    def from_eps(cls, case: str, eps_coeffs, k_max: int, **kw) -> "MapSpec":
        table: dict[tuple[int, int], sympy.Expr] = {}
        zeros = set()
        for (p, j), v in eps_coeffs.items():
            v = sympy.sympify(v)
            if v == 0:
                zeros.add((p, j))
                continue
            ser = eps_power_series(p, k_max + 2)
            for power, c in enumerate(ser):
                if c and 2 <= power <= k_max + 2:
                    key = (power - 2, j)
                    table[key] = table.get(key, sympy.Integer(0)) + v * _sym(c)
        table = {key: sympy.nsimplify(v) if not v.is_Rational else v for key, v in table.items()}
        return cls(case, table, k_max, eps_coeffs=dict(eps_coeffs), **kw)

    def scaled(self, kappa) -> "MapSpec":
        kappa = sympy.sympify(kappa)
        eps = None if self.eps_coeffs is None else {k: v * kappa for k, v in self.eps_coeffs.items()}
        return MapSpec(self.case, {k: v * kappa for k, v in self.coeffs.items()}, self.k_max,
                       self.rho0, self.h0, eps, self.name, self.declared_zero)

    def degrees(self) -> dict[int, int]:
        """``k -> d_k`` over retained orders with a nonzero ``f_k``."""
        out: dict[int, int] = {}
        for (k, j), v in self.coeffs.items():
            if v != 0 and k <= self.k_max:
                d = abs(j) if self.case == TRIGONOMETRIC else j
                out[k] = max(out.get(k, 0), d)
        return out

    # numeric evaluation -------------------------------------------------

    def coefficient_values(self, h, ctx=mpmath.mp) -> dict[int, object]:
        """``j -> F_j(h)`` so that ``f(x,h) = sum_j F_j(h) x^j`` (or ``e^{ijx}``)."""
        key = (str(h), ctx.prec)
        cache = self.__dict__.setdefault("_cache", {})
        if key in cache:
            return cache[key]
        hv = ctx.mpf(h)
        out: dict[int, object] = {}
        if self.eps_coeffs is not None:
            eps = epsilon_of_h(hv, ctx)
            for (p, j), v in self.eps_coeffs.items():
                out[j] = out.get(j, 0) + to_mp(v, ctx) * eps**p
        else:
            for (k, j), v in self.coeffs.items():
                out[j] = out.get(j, 0) + to_mp(v, ctx) * hv ** (k + 2)
        cache[key] = out
        return out


def f_value(spec: MapSpec, x, h, ctx=mpmath.mp):
    coeffs = spec.coefficient_values(h, ctx)
    if spec.case == POLYNOMIAL:
        return sum((c * x**j for j, c in coeffs.items()), ctx.mpf(0))
    val = sum((c * ctx.expj(j * x) for j, c in coeffs.items()), ctx.mpf(0))
    return _real_if_close(val, ctx)


def f_prime(spec: MapSpec, x, h, ctx=mpmath.mp):
    coeffs = spec.coefficient_values(h, ctx)
    if spec.case == POLYNOMIAL:
        return sum((j * c * x ** (j - 1) for j, c in coeffs.items() if j), ctx.mpf(0))
    val = sum((1j * j * c * ctx.expj(j * x) for j, c in coeffs.items() if j), ctx.mpf(0))
    return _real_if_close(val, ctx)


def _real_if_close(val, ctx):
    if isinstance(val, ctx.mpc) and abs(val.imag) <= abs(val) * ctx.eps * 64:
        return val.real
    return val


def _check_domain(spec: MapSpec, x):
    if abs(x) >= spec.rho0:
        raise DomainError(f"|x| = {float(abs(x)):.6g} exceeds analyticity radius {spec.rho0}")


def eval_map(spec: MapSpec, state, h, ctx=mpmath.mp):
    x, y = state
    _check_domain(spec, x)
    fx = f_value(spec, x, h, ctx)
    return x + y + fx, y + fx


def jacobian(spec: MapSpec, state, h, ctx=mpmath.mp):
    """Exact derivative of the map: ``[[1 + f', 1], [f', 1]]``."""
    x, _ = state
    _check_domain(spec, x)
    fp = f_prime(spec, x, h, ctx)
    return ctx.matrix([[1 + fp, 1], [fp, 1]])


# classification ----------------------------------------------------------


@dataclass(frozen=True)
class Classification:
    kind: str
    n: int | None = None
    alpha: Fraction | None = None
    I: tuple[int, ...] = ()
    reason: str = ""
    degrees: Mapping[int, int] = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return self.kind != "invalid"


def _invalid(reason, degrees=None):
    return Classification("invalid", reason=reason, degrees=degrees or {})


def _origin_checks(spec: MapSpec) -> str:
    """Return an invalid-reason or ``""``; exact on retained orders."""
    for k in range(spec.k_max + 1):
        power = k + 2
        target = Fraction(2, math.factorial(power)) if power % 2 == 0 else Fraction(0)
        row = {j: v for (kk, j), v in spec.coeffs.items() if kk == k}
        if spec.case == POLYNOMIAL:
            if any(j <= 0 and v != 0 for j, v in row.items()):
                return "f_nonzero_at_origin"
            slope = row.get(1, 0)
        else:
            if sympy.simplify(sum(row.values(), sympy.Integer(0))) != 0:
                return "f_nonzero_at_origin"
            slope = sympy.simplify(sum((sympy.I * j * v for j, v in row.items()), sympy.Integer(0)))
        if sympy.simplify(slope - _sym(target)) != 0:
            return "not_weakly_hyperbolic"
    return ""


def validate_hypotheses(spec: MapSpec) -> Classification:
    """Classify ``spec`` on the retained orders (polynomial or trigonometric hypotheses)."""
    reason = _origin_checks(spec)
    if reason:
        return _invalid(reason)
    degrees = spec.degrees()
    if not degrees:
        return _invalid("empty_family")
    for k, j in spec.declared_zero:
        d = degrees.get(k)
        jj = abs(j) if spec.case == TRIGONOMETRIC else j
        if d is None or jj > d:
            return _invalid("zero_leading", degrees)
    if spec.case == TRIGONOMETRIC:
        for k, d in degrees.items():
            if spec.coeffs.get((k, -d), 0) == 0:
                return _invalid("zero_leading", degrees)
        ratio = {k: Fraction(d, k + 2) for k, d in degrees.items()}
    else:
        ratio = {k: Fraction(d - 1, k + 2) for k, d in degrees.items()}
    best = max(ratio.values())
    I = tuple(sorted(k for k, v in ratio.items() if v == best))
    last = max(degrees)
    if I == (last,) and last != min(degrees):
        return _invalid("no_global_max", degrees)
    if best <= 0:
        return _invalid("no_nonlinearity", degrees)
    alpha = 1 / best
    if spec.case == POLYNOMIAL:
        n = min(degrees[k] for k in I)
        return Classification(POLYNOMIAL, n, alpha, I, degrees=degrees)
    n = min(degrees[k] for k in I) + 1
    return Classification(TRIGONOMETRIC, n, alpha, I, degrees=degrees)


# inner equation ----------------------------------------------------------


def _root_smallest_arg(w: sympy.Expr, m: int, index: int = 0) -> sympy.Expr:
    """The m-th root of ``w`` with smallest non-negative argument (then ``index`` steps on)."""
    w = sympy.nsimplify(w)
    mod = sympy.Abs(w)
    arg = sympy.arg(w)
    if arg.is_negative:
        arg = arg + 2 * sympy.pi
    theta = (arg + 2 * sympy.pi * index) / m
    root = mod ** sympy.Rational(1, m) * sympy.exp(sympy.I * theta)
    return sympy.nsimplify(sympy.simplify(root))


@dataclass(frozen=True)
class InnerEquation:
    """``D2 phi = -phi^n + sum G_k phi^k`` or ``-e^{(n-1)phi} + sum G_k e^{k phi}``."""

    case: str
    n: int
    alpha: Fraction | None = None
    I: tuple[int, ...] = ()
    lam: sympy.Expr = sympy.Integer(1)
    Gtilde: Mapping[int, sympy.Expr] = field(default_factory=dict)
    G: Mapping[int, sympy.Expr] = field(default_factory=dict)
    c0_branch: int = 0

    @classmethod
    def polynomial(cls, n: int, G=None, c0_branch: int = 0) -> "InnerEquation":
        G = {int(k): sympy.sympify(v) for k, v in (G or {}).items() if sympy.sympify(v) != 0}
        if n < 2 or any(k <= n for k in G):
            raise ValueError("need n >= 2 and G_k only for k >= n+1")
        return cls(POLYNOMIAL, n, G=G, c0_branch=c0_branch)

    @classmethod
    def trigonometric(cls, n: int, G=None) -> "InnerEquation":
        G = {int(k): sympy.sympify(v) for k, v in (G or {}).items() if sympy.sympify(v) != 0}
        if n < 2 or any(k < n for k in G):
            raise ValueError("need n >= 2 and G_k only for k >= n")
        return cls(TRIGONOMETRIC, n, G=G)

    @property
    def r(self) -> Fraction:
        return Fraction(2, self.n - 1)

    @property
    def m(self) -> int | None:
        """Resonance index for odd ``n = 2m - 1``."""
        return (self.n + 1) // 2 if self.n % 2 == 1 else None

    @property
    def E(self) -> Fraction:
        return self.r + 2 if self.case == POLYNOMIAL else Fraction(2)

    @property
    def c0(self) -> sympy.Expr | None:
        """Leading coefficient, ``c0^(n-1) = -r(r+1)`` (principal branch by default)."""
        if self.case != POLYNOMIAL:
            return None
        r = _sym(self.r)
        k = self.n - 1
        theta = (sympy.pi + 2 * sympy.pi * self.c0_branch) / k
        return (r * (r + 1)) ** sympy.Rational(1, k) * sympy.exp(sympy.I * theta)

    @property
    def dE(self) -> sympy.Expr:
        return self.c0 if self.case == POLYNOMIAL else sympy.Integer(1)

    def with_c0_branch(self, branch: int) -> "InnerEquation":
        return InnerEquation(self.case, self.n, self.alpha, self.I, self.lam,
                             self.Gtilde, self.G, branch)

    def symmetric_branch(self) -> int:
        """Branch whose leading term ``c0 z^-r`` is real on the negative imaginary axis.

        Negative values are preferred (they exist for odd ``n``).  Returns the
        current branch for the trigonometric case.
        """
        if self.case != POLYNOMIAL:
            return self.c0_branch
        k = self.n - 1
        r = self.r

        def miss(b):
            # arg of c0 (-i)^-r over pi, reduced mod 2
            t = (r / 2) * (1 + 2 * b) + r / 2
            return min((t - 1) % 2, (1 - t) % 2), min(t % 2, (-t) % 2)

        return min(range(k), key=lambda b: (min(miss(b)), miss(b)[0]))

    def G_is_rational(self) -> bool:
        return all(sympy.sympify(v).is_Rational for v in self.G.values())

    def describe(self) -> dict:
        out = {
            "case": self.case,
            "n": self.n,
            "r": str(self.r),
            "alpha": None if self.alpha is None else str(self.alpha),
            "I": list(self.I),
            "lambda": str(self.lam),
            "G": {str(k): str(v) for k, v in sorted(self.G.items())},
            "E": str(self.E),
            "dE": str(self.dE),
        }
        if self.case == POLYNOMIAL:
            out["c0"] = str(self.c0)
            out["equation"] = "D2 phi = -phi^%d%s" % (
                self.n, "".join(f" + ({v}) phi^{k}" for k, v in sorted(self.G.items())))
        else:
            out["equation"] = "D2 phi = -exp(%d phi)%s" % (
                self.n - 1, "".join(f" + ({v}) exp({k} phi)" for k, v in sorted(self.G.items())))
        return out


def derive_inner(spec: MapSpec, lambda_index: int = 0, c0_branch: int = 0) -> InnerEquation:
    """Keep the ``h^0`` part of the rescaled invariance equation.

    Polynomial case: ``x(chi + hz) = h^-alpha lam phi(z)``; trigonometric case:
    ``x(chi + hz) = -i log(h^alpha lam) + i phi(z)``.
    """
    cls = validate_hypotheses(spec)
    if not cls.valid:
        raise InvalidMapError(cls.reason)
    deg = cls.degrees
    n = cls.n
    if cls.kind == POLYNOMIAL:
        Gt = {deg[k]: spec.coeffs[(k, deg[k])] for k in cls.I}
        lam = _root_smallest_arg(-1 / Gt[n], n - 1, lambda_index)
        G = {d: sympy.nsimplify(sympy.expand(v * lam ** (d - 1))) for d, v in Gt.items() if d != n}
        return InnerEquation(POLYNOMIAL, n, cls.alpha, cls.I, lam, Gt, G, c0_branch)
    # e^{-i d x} terms dominate; rhs = -i sum f_{k,-d} lam^{-d} e^{d phi}
    Gt = {deg[k]: -sympy.I * spec.coeffs[(k, -deg[k])] for k in cls.I}
    lam = _root_smallest_arg(-Gt[n - 1], n - 1, lambda_index)
    G = {d: sympy.nsimplify(sympy.simplify(v * lam ** (-d))) for d, v in Gt.items() if d != n - 1}
    return InnerEquation(TRIGONOMETRIC, n, cls.alpha, cls.I, lam, Gt, G)


# builtin maps and configuration ---------------------------------------------


BUILTIN_MAPS = ("f1", "f2", "f5", "trig")


def builtin_map(name: str, k_max: int = 12) -> MapSpec:
    """Maps used throughout: ``f1``, ``f2``, ``f5`` and the trigonometric ``trig``."""
    one = sympy.Integer(1)
    if name == "f1":  # eps (x - x^3) - eps^2 x^7
        eps = {(1, 1): one, (1, 3): -one, (2, 7): -one}
    elif name == "f2":  # eps (x - x^3)
        eps = {(1, 1): one, (1, 3): -one}
    elif name == "f5":  # eps (x - x^3) + eps^2 x^5
        eps = {(1, 1): one, (1, 3): -one, (2, 5): one}
    elif name == "trig":  # eps sin x + sum_k h^(2k+2) sin((k+1)x)
        half = sympy.Rational(1, 2)
        table: dict[tuple[int, int], sympy.Expr] = {}
        for (p, j), v in MapSpec.from_eps(TRIGONOMETRIC, {(1, 1): -sympy.I * half, (1, -1): sympy.I * half},
                                          k_max).coeffs.items():
            table[(p, j)] = v
        # sin((k+1)x) - (k+1) sin x keeps f'(0,h) = eps without changing d_k
        for k in range(1, k_max // 2 + 1):
            for j, w in ((k + 1, 1), (1, -(k + 1))):
                table[(2 * k, j)] = table.get((2 * k, j), 0) - sympy.I * half * w
                table[(2 * k, -j)] = table.get((2 * k, -j), 0) + sympy.I * half * w
        return MapSpec(TRIGONOMETRIC, table, k_max, name=name)
    else:
        raise ConfigError(f"unknown builtin map {name!r}")
    return MapSpec.from_eps(POLYNOMIAL, eps, k_max, name=name)


def _load_toml(path):
    try:
        import tomllib  # type: ignore[import-not-found]
    except ModuleNotFoundError:  # python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None


def _radius(raw) -> float:
    val = float(str(raw))
    if not val > 0:
        raise ConfigError(f"analyticity radius must be positive, got {raw!r}")
    return val


def load_map_config(path) -> MapSpec:
    """Read a TOML map configuration (see README for the schema)."""
    data = _load_toml(path)
    try:
        case = data["case"]
        k_max = int(data["k_max"])
        rows = data["coeffs"]
    except KeyError as exc:
        raise ConfigError(f"{path}: missing field {exc.args[0]}") from None
    basis = data.get("basis", "h")
    table: dict[tuple[int, int], sympy.Expr] = {}
    zeros = set()
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != 3:
            raise ConfigError(f"{path}: coeffs[{i}] must be [k, j, value]")
        k, j, raw = row
        v = parse_value(raw)
        if v == 0:
            zeros.add((int(k), int(j)))
        else:
            table[(int(k), int(j))] = table.get((int(k), int(j)), 0) + v
    kw = dict(rho0=_radius(data.get("rho0", "inf")), h0=_radius(data.get("h0", "inf")),
              name=str(data.get("name", "")))
    if basis == "eps":
        spec = MapSpec.from_eps(case, table, k_max, **kw)
        return MapSpec(spec.case, spec.coeffs, spec.k_max, spec.rho0, spec.h0, spec.eps_coeffs,
                       spec.name, frozenset((2 * p - 2, j) for p, j in zeros))
    if basis != "h":
        raise ConfigError(f"{path}: basis must be 'h' or 'eps', got {basis!r}")
    return MapSpec(case, table, k_max, declared_zero=frozenset(zeros), **kw)
