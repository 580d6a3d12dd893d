"""Command line front end: ``separatrix <subcommand> ...``.

Subcommands: derive, formal, inner-omega, splitting, rho, compare.  Tables
go out as CSV (default) or JSON; multiprecision numbers are written as
decimal strings with every digit of the working precision.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction

import mpmath
import sympy

from . import __version__
from .asymptotics import (F1_ENERGY, F2_ENERGY, chi_for_map, compare_report, energy_from_map,
                          report_json, singularity_rho)
from .errors import ConfigError, SeparatrixError
from .formal import residual_order, solve_formal
from .inner import omega_in
from .manifold import SplittingResult, digit_policy, lazutkin_omega
from .maps import (BUILTIN_MAPS, InnerEquation, builtin_map, derive_inner, load_map_config,
                   validate_hypotheses)

WORKERS_ENV = "SEPARATRIX_WORKERS"


# formatting --------------------------------------------------------------


def _num(x, digits: int | None = None):
    """Round-trip text for floats, mp numbers, fractions and sympy values."""
    if isinstance(x, bool) or x is None:
        return x
    if isinstance(x, (int, Fraction)):
        return str(x)
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, complex):
        return f"{x.real!r}{x.imag:+.17g}j" if x.imag else repr(x.real)
    if isinstance(x, sympy.Basic):
        return str(x)
    if hasattr(x, "imag") and hasattr(x, "real") and not isinstance(x, (int, float)):
        n = digits or mpmath.mp.dps
        if getattr(x, "imag", 0) != 0 and type(x).__name__ == "mpc":
            return f"{mpmath.nstr(x.real, n)}{'+' if x.imag >= 0 else '-'}{mpmath.nstr(abs(x.imag), n)}j"
        return mpmath.nstr(x.real if type(x).__name__ == "mpc" else x, n)
    return str(x)


def _write(rows: list[dict], fmt: str, out, meta: dict | None = None):
    if fmt == "json":
        payload = {"rows": rows}
        if meta:
            payload.update(meta)
        out.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return
    if not rows:
        return
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    out.write(buf.getvalue())


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def _pmap(fn, items):
    n = min(_workers(), len(items))
    if n <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# map selection -------------------------------------------------------------


def _load_map(ref: str):
    if ref in BUILTIN_MAPS:
        return builtin_map(ref)
    if not os.path.exists(ref):
        raise ConfigError(f"map {ref!r} is neither a builtin ({', '.join(BUILTIN_MAPS)}) nor a file")
    return load_map_config(ref)


def _inner_from_args(args) -> InnerEquation:
    if getattr(args, "n", None):
        if args.case == "trigonometric":
            return InnerEquation.trigonometric(args.n, {})
        return InnerEquation.polynomial(args.n, {})
    if not args.map:
        raise ConfigError("give --map or --n")
    return derive_inner(_load_map(args.map))


def _branch(inner: InnerEquation, choice: str) -> InnerEquation:
    if choice == "symmetric":
        return inner.with_c0_branch(inner.symmetric_branch())
    if choice == "principal":
        return inner.with_c0_branch(0)
    return inner.with_c0_branch(int(choice))


# subcommands -----------------------------------------------------------------


def cmd_derive(args, out):
    spec = _load_map(args.map)
    cls = validate_hypotheses(spec)
    row = {"map": spec.name or args.map, "case": spec.case, "valid": cls.valid,
           "reason": cls.reason or ""}
    if cls.valid:
        inner = derive_inner(spec)
        desc = inner.describe()
        row.update({
            "n": inner.n,
            "alpha": str(inner.alpha),
            "I": " ".join(str(k) for k in sorted(inner.I)),
            "lambda": str(inner.lam),
            "E": str(inner.E),
            "c0": str(inner.c0) if inner.c0 is not None else "",
            "equation": desc["equation"],
        })
    _write([row], args.format, out)
    return 0 if cls.valid else 1


def cmd_formal(args, out):
    inner = _branch(_inner_from_args(args), args.c0_branch)
    ctx = None
    if not args.exact:
        ctx = mpmath.MPContext()
        ctx.dps = args.dps
    fs = solve_formal(inner, args.N, ctx=ctx)
    num_ctx = mpmath.MPContext()
    num_ctx.dps = args.dps
    k_min, j_max = residual_order(inner, fs, ctx=ctx)
    rows = []
    for k, j, c in fs.coefficient_table(num_ctx):
        rows.append({"k": k, "j": j, "re": _num(c.real, args.dps), "im": _num(c.imag, args.dps),
                     "N": args.N, "dps": args.dps, "exact": fs.exact})
    bound = (args.N + 1) * inner.r + 2
    report = {"residual_exponent": str(k_min), "residual_log_power": j_max,
              "bound_exponent": str(bound), "contract_met": k_min >= bound,
              "resonance": fs.resonance}
    if args.format == "json":
        _write(rows, "json", out, {"residual_order": report, "equation": inner.describe()["equation"]})
    else:
        _write(rows, "csv", out)
    print("residual order: exponent {residual_exponent} (bound {bound_exponent}), "
          "log power {residual_log_power}".format(**report), file=sys.stderr)
    return 0


def _omega_job(job):
    inner, rho, K, dps = job
    res = omega_in(inner, complex(0, -rho), K=K, dps=dps)
    return rho, res


def cmd_inner_omega(args, out):
    inner = _branch(_inner_from_args(args), args.c0_branch)
    if args.rho is not None:
        rhos = _floats(args.rho)
    else:
        if args.steps < 1:
            raise ConfigError("--steps must be positive")
        step = (args.rho_to - args.rho_from) / max(1, args.steps - 1)
        rhos = [args.rho_from + i * step for i in range(args.steps)]
    if any(r <= 0 for r in rhos):
        raise ConfigError("rho values must be positive")
    results = _pmap(_omega_job, [(inner, r, args.K, args.dps) for r in rhos])
    rows = []
    for rho, res in sorted(results, key=lambda t: t[0]):
        rows.append({"rho": repr(rho), "omega_in_tilde": _num(res.omega_in_tilde),
                     "error_budget": _num(res.error_budget), "dps": res.dps, "K": res.K,
                     "N": res.N, "c0_branch": inner.c0_branch})
    _write(rows, args.format, out)
    return 0


def _split_job(job):
    spec, h, digits, chi_rule, M = job
    chi = chi_for_map(spec, h, chi_rule)
    return lazutkin_omega(spec, h, chi=chi, digits=digits, M=M)


def _split_row(res: SplittingResult, digits_out: int):
    d = res.diagnostics
    return {
        "h": repr(res.h),
        "digits": d["digits"],
        "omega": _num(res.omega, min(digits_out, d["digits"])),
        "omega_tilde": _num(res.omega_tilde, min(digits_out, d["digits"])),
        "shift": _num(res.shift, min(digits_out, d["digits"])),
        "residual": _num(d["march_residual"]),
        "chi": _num(res.chi),
        "M": d["M"],
        "t0": _num(d["t0"]),
    }


def _splitting_runs(args, spec):
    hs = sorted(_floats(args.h_list), reverse=True)
    if any(h <= 0 for h in hs):
        raise ConfigError("h values must be positive")
    digits = args.digits if args.digits == "auto" else int(args.digits)
    return _pmap(_split_job, [(spec, h, digits, args.chi_rule, args.M) for h in hs])


def cmd_splitting(args, out):
    spec = _load_map(args.map)
    results = _splitting_runs(args, spec)
    _write([_split_row(r, args.out_digits) for r in results], args.format, out)
    return 0


def cmd_rho(args, out):
    if args.energy == "f1":
        energy = F1_ENERGY
    elif args.energy == "f2":
        energy = F2_ENERGY
    else:
        energy = energy_from_map(_load_map(args.energy))
    rows = []
    for h in sorted(_floats(args.h_list)):
        res = singularity_rho(energy, h, args.tol)
        rows.append({"h": repr(h), "x_turn": _num(res.x_turn, 30), "rho": _num(res.rho.imag, 30),
                     "quadrature_error": _num(res.quadrature_error), "tol": _num(args.tol)})
    _write(rows, args.format, out)
    return 0


def cmd_compare(args, out):
    spec = _load_map(args.map)
    inner = _branch(derive_inner(spec), args.c0_branch)
    plateau = omega_in(inner, complex(0, -args.rho), K=args.K)
    results = _splitting_runs(args, spec) if args.h_list else []
    rep = compare_report(plateau, results, args.chi_rule, args.basis, args.k_terms)
    if args.format == "json":
        out.write(report_json(rep) + "\n")
    else:
        out.write(rep["text"] + "\n")
    return 0


# parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="separatrix", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="{derive,formal,inner-omega,splitting,rho,compare}")
    sub.required = True

    def common(sp):
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--output", "-o", default="-", help="output path (default stdout)")

    sp = sub.add_parser("derive", help="classify a map and print its inner equation")
    sp.add_argument("--map", required=True, help="builtin name or TOML config path")
    common(sp)
    sp.set_defaults(func=cmd_derive)

    def inner_args(sp):
        sp.add_argument("--map", help="builtin name or TOML config path")
        sp.add_argument("--n", type=int, help="pure inner equation of this degree instead of --map")
        sp.add_argument("--case", choices=("polynomial", "trigonometric"), default="polynomial")
        sp.add_argument("--c0-branch", default="symmetric",
                        help="'symmetric', 'principal' or a branch index")

    sp = sub.add_parser("formal", help="formal solution coefficients and residual order")
    inner_args(sp)
    sp.add_argument("--N", type=int, default=10)
    sp.add_argument("--exact", action="store_true", help="exact arithmetic in Q(c0)")
    sp.add_argument("--dps", type=int, default=30)
    common(sp)
    sp.set_defaults(func=cmd_formal)

    sp = sub.add_parser("inner-omega", help="omega_in_tilde(-i rho) of the inner equation")
    inner_args(sp)
    sp.add_argument("--rho", help="comma-separated rho values")
    sp.add_argument("--rho-from", type=float, default=3.0)
    sp.add_argument("--rho-to", type=float, default=5.0)
    sp.add_argument("--steps", type=int, default=5)
    sp.add_argument("--K", type=int, default=None, help="seed shift (default: |z -+ K| >= 20)")
    sp.add_argument("--dps", type=int, default=None)
    common(sp)
    sp.set_defaults(func=cmd_inner_omega)

    def split_args(sp, required=True):
        sp.add_argument("--map", required=True)
        sp.add_argument("--h-list", required=required, help="comma-separated step sizes")
        sp.add_argument("--digits", default="auto")
        sp.add_argument("--chi-rule", default=None, help="truncated, full, constant or a number")
        sp.add_argument("--M", type=int, default=None)
        sp.add_argument("--out-digits", type=int, default=40)

    sp = sub.add_parser("splitting", help="Lazutkin invariant of the map")
    split_args(sp)
    common(sp)
    sp.set_defaults(func=cmd_splitting)

    sp = sub.add_parser("rho", help="singularity of the higher-order limit flow")
    sp.add_argument("--energy", default="f1", help="f1, f2 or a map (builtin/config)")
    sp.add_argument("--h-list", required=True)
    sp.add_argument("--tol", type=float, default=1e-20)
    common(sp)
    sp.set_defaults(func=cmd_rho)

    sp = sub.add_parser("compare", help="splitting sequence against the inner plateau")
    split_args(sp, required=False)
    sp.add_argument("--rho", type=float, default=4.0)
    sp.add_argument("--K", type=int, default=None)
    sp.add_argument("--c0-branch", default="symmetric")
    sp.add_argument("--basis", default="h2")
    sp.add_argument("--k-terms", type=int, default=None)
    common(sp)
    sp.set_defaults(func=cmd_compare)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out, close = _open_out(args.output)
    try:
        return args.func(args, out)
    except SeparatrixError as exc:
        print(f"separatrix {args.command}: error: {exc}", file=sys.stderr)
        return 1
    finally:
        if close:
            out.close()


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
