import json
import math

import mpmath
import numpy as np
import pytest

from separatrix import (
    ConfigError,
    DomainError,
    IllConditioned,
    MapSpec,
    builtin_map,
    chi_for_map,
    compare_report,
    extrapolate,
    singularity_rho,
)
from separatrix.asymptotics import (
    F1_ENERGY,
    F2_ENERGY,
    chi_drift_factor,
    energy_from_map,
    report_json,
    singularity_constant,
)
from separatrix.manifold import SplittingResult
from separatrix.quadrature import adaptive_gauss


def _oracle_C():
    # independent closed form: 2^(1/4) Gamma(3/4)^2 / sqrt(pi)
    ctx = mpmath.MPContext()
    ctx.dps = 40
    return ctx.mpf(2) ** 0.25 * ctx.gamma(ctx.mpf(3) / 4) ** 2 / ctx.sqrt(ctx.pi)


def test_quadrature_polynomial_exact():
    ctx = mpmath.MPContext()
    ctx.dps = 30
    res = adaptive_gauss(lambda x: x**7 - 3 * x**2, 0, 2, 1e-25, ctx)
    assert abs(res.value - (ctx.mpf(2) ** 8 / 8 - 8)) < ctx.mpf(10) ** -25
    assert res.panels == 1


def test_quadrature_endpoint_singularity():
    ctx = mpmath.MPContext()
    ctx.dps = 30
    res = adaptive_gauss(lambda x: ctx.sqrt(x), 0, 1, 1e-15, ctx)
    assert abs(res.value - ctx.mpf(2) / 3) < 1e-14
    assert res.error <= 1e-15


def test_limit_flow_distance():
    res = singularity_rho(F2_ENERGY, h=0)
    ctx = mpmath.MPContext()
    ctx.dps = 30
    assert res.rho.real == 0
    assert abs(res.rho.imag - ctx.pi / 2) < 1e-25
    assert abs(res.x_turn - ctx.sqrt(2)) < 1e-25


def test_singularity_constant_oracle():
    C = singularity_constant()
    assert abs(C - _oracle_C()) < 1e-15
    assert abs(float(C) - 1.0075) < 1e-4


def test_singularity_constant_fit():
    hs = [1e-6 * 2**k for k in range(6)]
    gaps = [math.pi / 2 - float(abs(singularity_rho(F1_ENERGY, h).rho)) for h in hs]
    # pi/2 - |rho| = C h^(1/2) + c h^(3/2); the O(h) term is absent
    A = np.array([[math.sqrt(h), h**1.5] for h in hs])
    C = np.linalg.lstsq(A, np.array(gaps), rcond=None)[0][0]
    assert abs(C - float(_oracle_C())) < 1e-4 * float(_oracle_C())


def test_rho_monotone():
    hs = np.linspace(0.005, 0.2, 25)
    rhos = [float(abs(singularity_rho(F1_ENERGY, h, tol=1e-15).rho)) for h in hs]
    assert all(b < a for a, b in zip(rhos, rhos[1:]))


def test_quadrature_error_tracks_tol():
    for tol in (1e-12, 1e-16, 1e-20):
        a = singularity_rho(F1_ENERGY, 0.05, tol=tol)
        b = singularity_rho(F1_ENERGY, 0.05, tol=tol / 2)
        assert a.quadrature_error <= tol
        assert b.quadrature_error <= tol / 2
        assert abs(a.rho - b.rho) <= tol


def test_chi_rules():
    assert chi_for_map("f2", 0.07) == 1j * math.pi / 2
    assert chi_for_map("f1", 0) == 1j * math.pi / 2
    assert chi_for_map("f1", 0.04, rule="constant") == 1j * math.pi / 2
    want = math.pi / 2 - float(_oracle_C()) * 0.2
    assert abs(chi_for_map("f1", 0.04).imag - want) < 1e-12
    full = chi_for_map("f1", 0.04, rule="full")
    # the truncated rule differs from the full one at O(h^(3/2))
    assert 0 < want - full.imag < 2 * 0.04**1.5
    assert chi_for_map("f1", 0.04, rule=1.5j) == 1.5j


def test_chi_rule_from_spec():
    spec = builtin_map("f5")
    with pytest.raises(ConfigError):
        chi_for_map(spec, 0.05)
    with pytest.raises(ConfigError):
        chi_for_map("unknown", 0.05)
    with pytest.raises(ConfigError):
        chi_for_map("f1", 0.05, rule="bogus")
    # x^5 term: a second turning point cuts the real path to infinity
    with pytest.raises(DomainError):
        chi_for_map(spec, 0.05, rule="full")
    base = builtin_map("f1")
    anonymous = MapSpec.from_eps(base.case, base.eps_coeffs, base.k_max)
    chi = chi_for_map(anonymous, 0.05, rule="full")
    assert chi.real == 0
    assert abs(chi - chi_for_map("f1", 0.05, rule="full")) < 1e-20


def test_energy_from_map():
    assert energy_from_map(builtin_map("f1")) == F1_ENERGY
    assert energy_from_map(builtin_map("f2")) == F2_ENERGY


def test_chi_rate_exponent():
    hs = np.geomspace(1e-7, 1e-5, 6)
    gaps = [math.pi / 2 - chi_for_map("f1", h, rule="full").imag for h in hs]
    slope = np.polyfit(np.log(hs), np.log(gaps), 1)[0]
    assert abs(slope - 0.5) < 0.02


def test_drift_factor():
    assert chi_drift_factor(0.02, chi_for_map("f1", 0.02, rule="full")) == pytest.approx(1, abs=1e-12)
    assert chi_drift_factor(0.02, chi_for_map("f1", 0.02)) > 1


def test_extrapolate_exact():
    hs = [0.1, 0.08, 0.06, 0.05, 0.04]
    samples = [(h, 3 + 2 * h - h * h) for h in hs]
    model = extrapolate(samples, basis=[1, 2])
    assert abs(model.limit - 3) <= 1e3 * np.finfo(float).eps * 3
    assert np.allclose(model.coefficients, [2, -1])
    assert model.fit_residual <= 1e3 * np.finfo(float).eps * 3


def test_extrapolate_half_basis():
    hs = [0.02, 0.015, 0.0125, 0.01]
    samples = [(h, 871.683 - 40 * h**0.5 + 90 * h) for h in hs]
    model = extrapolate(samples, basis="sqrt", k_terms=2)
    assert model.basis == ("1/2", "1")
    assert abs(model.limit - 871.683) < 1e-9


def test_extrapolate_factors():
    hs = [0.1, 0.08, 0.06]
    factors = [1.5, 2.0, 3.0]
    samples = [(h, f * (5 + h**2)) for h, f in zip(hs, factors)]
    assert abs(extrapolate(samples, "h2", 1, factors=factors).limit - 5) < 1e-12


def test_extrapolate_ill_conditioned():
    samples = [(0.1, 1.0), (0.1 + 1e-12, 1.1), (0.1 + 2e-12, 1.2)]
    with pytest.raises(IllConditioned):
        extrapolate(samples, "h2", 2)


# report -----------------------------------------------------------------

# omega_tilde for f2, computed once with lazutkin_omega (see test_acceptance for the live run)
F2_SAMPLES = [(0.1, 99820.534737880941513), (0.08, 99915.19354570), (0.0625, 99980.7165409),
              (0.05, 100017.648359403)]
PLATEAU3 = 100083.27432943


def _results(samples):
    return [SplittingResult(h, 1j * math.pi / 2, None, v, 0, {"digits": 0}) for h, v in samples]


def test_report_monotone_discrepancy():
    limits = []
    for k in range(2, len(F2_SAMPLES) + 1):
        rep = compare_report(PLATEAU3, _results(F2_SAMPLES[:k]), k_terms=k - 1)
        rows = [r["rel_discrepancy"] for r in rep["rows"]]
        assert all(b < a for a, b in zip(rows, rows[1:]))
        limits.append(rep["limit_rel_discrepancy"])
    assert all(b < a for a, b in zip(limits, limits[1:]))
    assert limits[-1] < 5e-3


def test_report_contents():
    rep = compare_report(PLATEAU3, _results(F2_SAMPLES), k_terms=2)
    assert rep["complete"] and rep["inner_plateau"] == PLATEAU3
    assert [r["h"] for r in rep["rows"]] == [0.1, 0.08, 0.0625, 0.05]
    assert "extrapolated" in rep["text"]
    data = json.loads(report_json(rep))
    assert data["limit"] == rep["limit"]


def test_report_empty():
    rep = compare_report(PLATEAU3, [])
    assert not rep["complete"]
    assert rep["rows"] == [] and "limit" not in rep
    assert "incomplete" in rep["text"]
    assert rep["inner_plateau"] == PLATEAU3
