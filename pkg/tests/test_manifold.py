import math

import mpmath
import pytest

from separatrix import (
    NoRootInWindow,
    PrecisionInsufficient,
    builtin_map,
    first_homoclinic_phase,
    lazutkin_omega,
    march_orbit,
    omega_tilde,
    unstable_coeffs,
)
from separatrix.maps import epsilon_of_h, f_value
from separatrix.manifold import (
    _march,
    choose_seed,
    digit_policy,
    eval_expansion,
    make_context,
    recurrence_residuals,
)

F1, F2 = builtin_map("f1"), builtin_map("f2")
GUARD = 30


@pytest.fixture(scope="module")
def f2_run():
    return lazutkin_omega(F2, 0.1)


def test_digit_policy():
    assert digit_policy(0.1, 1j * math.pi / 2) == math.ceil(math.pi**2 / (0.1 * math.log(10))) + 30
    assert digit_policy(0.05, 1.4j, guard=10) == math.ceil(2 * math.pi * 1.4 / (0.05 * math.log(10))) + 10


def test_linear_rate():
    exp = unstable_coeffs(F2, 0.3, 10, digits=40)
    ctx = exp.ctx
    assert exp.b1 == 1
    assert abs(2 * ctx.cosh(exp.mu * exp.h) - 2 - exp.lin) < ctx.mpf(10) ** -38
    # f'(0) = eps exactly, so the rate is 1
    assert abs(exp.mu - 1) < ctx.mpf(10) ** -38


def test_odd_map_coefficients():
    h = mpmath.mpf("0.3")
    exp = unstable_coeffs(F2, h, 15, digits=50)
    ctx = exp.ctx
    assert all(exp.b[k] == 0 for k in range(2, 16, 2))
    eps = epsilon_of_h(ctx.mpf(h), ctx)
    b3 = -eps / (4 * ctx.sinh(3 * ctx.mpf(h) / 2) ** 2 - eps)
    assert abs(exp.b[3] - b3) < ctx.mpf(10) ** -45


@pytest.mark.parametrize("name, digits", [("f1", 60), ("f2", 80), ("trig", 50)])
def test_recurrence_residuals(name, digits):
    spec = builtin_map(name)
    exp = unstable_coeffs(spec, 0.2, 40, digits=digits)
    res = recurrence_residuals(spec, exp)
    assert max(res[1:]) < 10.0 ** (-digits + 5)


def test_expansion_satisfies_invariance():
    ctx = make_context(60)
    exp = unstable_coeffs(F1, 0.15, 120, ctx=ctx)
    for t in (-6, -3, -1.5):
        t = ctx.mpf(t)
        xs = [eval_expansion(exp, t + d * exp.h)[0] for d in (-1, 0, 1)]
        lhs = xs[2] - 2 * xs[1] + xs[0]
        assert abs(lhs - f_value(F1, xs[1], exp.h, ctx)) < ctx.mpf(10) ** -50


def test_reflected_stable_branch():
    # x^s(t) = x^u(-h - t) solves the same second-order recurrence
    ctx = make_context(50)
    exp = unstable_coeffs(F2, 0.2, 100, ctx=ctx)
    for t in (2, 4):
        t = ctx.mpf(t)
        xs = [eval_expansion(exp, -exp.h - (t + d * exp.h))[0] for d in (-1, 0, 1)]
        assert abs(xs[2] - 2 * xs[1] + xs[0] - f_value(F2, xs[1], exp.h, ctx)) < ctx.mpf(10) ** -40


def test_march_matches_series():
    ctx = make_context(60)
    exp = unstable_coeffs(F2, 0.1, 20, ctx=ctx)
    t0 = choose_seed(exp, 60)
    assert t0 < -6
    orbit = march_orbit(F2, exp.h, exp, t0, -2)
    assert orbit.max_residual < 1e-55
    # a short expansion seeds far out; a long one is accurate at t = -2 itself
    x_series, _ = eval_expansion(unstable_coeffs(F2, 0.1, 200, ctx=ctx), ctx.mpf(-2))
    assert abs(orbit.x[-1] - x_series) < ctx.mpf(10) ** -55


def test_branch_rises_before_hump():
    ctx = make_context(60)
    exp = unstable_coeffs(F2, 0.1, 150, ctx=ctx)
    t0 = ctx.mpf(choose_seed(exp, 60))
    s, J = first_homoclinic_phase(F2, exp.h, exp, t0)
    ys = []
    _march(F2, exp, s - J * exp.h, J, record=lambda i, xp, xc: ys.append(xc - xp))
    assert all(y > 0 for y in ys[:-1])
    assert abs(ys[-1]) < ctx.mpf(10) ** -45


def test_sign_change_across_phase():
    ctx = make_context(60)
    exp = unstable_coeffs(F2, 0.1, 150, ctx=ctx)
    t0 = ctx.mpf(choose_seed(exp, 60))
    s, J = first_homoclinic_phase(F2, exp.h, exp, t0)
    vals = []
    for shift in (-exp.h / 4, exp.h / 4):
        xs, _, _ = _march(F2, exp, s + shift - J * exp.h, J, keep=2)
        vals.append(xs[-1] - xs[-2])
    assert vals[0] > 0 > vals[1]


def test_point_near_limit_flow_peak(f2_run):
    x0 = f2_run.diagnostics["x0"]
    assert abs(x0 - mpmath.sqrt(2)) < f2_run.h**2
    assert abs(f2_run.diagnostics["y0"]) < 1e-60


def test_invariant_along_orbit(f2_run):
    om, nxt = f2_run.omega, f2_run.diagnostics["omega_next"]
    assert abs(om - nxt) <= 1e-8 * abs(om)


def test_f2_normalized_value(f2_run):
    assert abs(f2_run.omega_tilde - 1.00083e5) < 0.01 * 1.00083e5


@pytest.mark.parametrize("change", ["t0", "M", "digits"])
def test_omega_stable(f2_run, change):
    d = f2_run.diagnostics
    kw = {"t0": {"t0": d["t0"] - 5}, "M": {"M": d["M"] + 20}, "digits": {"digits": d["digits"] + 20}}
    other = lazutkin_omega(F2, 0.1, **kw[change])
    assert abs(other.omega - f2_run.omega) <= 10.0 ** (-GUARD + 5) * abs(f2_run.omega)


def test_f1_stable_and_invariant():
    a = lazutkin_omega(F1, 0.025)
    b = lazutkin_omega(F1, 0.025, digits=a.diagnostics["digits"] + 20)
    assert abs(a.omega - b.omega) <= 10.0 ** (-GUARD + 5) * abs(a.omega)
    assert abs(a.diagnostics["omega_next"] - a.omega) <= 1e-8 * abs(a.omega)
    assert a.diagnostics["recurrence_residual"] < 10.0 ** (-a.diagnostics["digits"] + 5)


def test_omega_tilde_identity():
    ctx = make_context(30)
    om = ctx.mpf("1.25e-20")
    h = ctx.mpf("0.2")
    assert omega_tilde(om, h, 0, 1, 0, ctx) == h**2 * om
    h, chi = ctx.mpf("0.1"), 1j * math.pi / 2
    want = h**4 * ctx.exp(2 * ctx.pi * abs(ctx.mpc(chi)) / h) * om
    assert omega_tilde(om, h, 1, 1, chi, ctx) == want


def test_precision_insufficient():
    with pytest.raises(PrecisionInsufficient):
        lazutkin_omega(F2, 0.1, digits=40)


def test_rotational_separatrix_has_no_hump():
    with pytest.raises(NoRootInWindow):
        lazutkin_omega(builtin_map("trig"), 0.5, chi=1.5j)
