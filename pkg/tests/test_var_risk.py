import dataclasses
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from mvvar.errors import InfeasibleProblemError, ParameterError
from mvvar.market_model import MarketParams, correlated_increments
from mvvar.var_risk import (Case, FeasibleSet, RiskSpec, classify_case, feasible_set, quantile_of_gain,
                            var_of_strategy)

Z99 = 2.3263478740408408  # Phi^-1(0.99)


def mp_boundary_roots(m: MarketParams, spec: RiskSpec):
    """Roots of N^2 var_rate(f) = (f mu + M)^2 at 50 digits, filtered to f mu + M >= 0."""
    with mp.workdps(50):
        N = mp.sqrt(2) * mp.erfinv(1 - 2 * mp.mpf(spec.p)) / mp.sqrt(mp.mpf(spec.tau))
        M = mp.mpf(m.alpha) + mp.mpf(spec.var_cap) / mp.mpf(spec.tau)
        mu, s, b, r = (mp.mpf(v) for v in (m.mu, m.sigma, m.beta, m.rho))
        a2 = N**2 * s**2 - mu**2
        a1 = 2 * (r * s * b * N**2 - mu * M)
        a0 = N**2 * b**2 - M**2
        roots = sorted(mp.re(z) for z in mp.polyroots([a2, a1, a0], maxsteps=200, extraprec=200))
        return [float(z) for z in roots], [bool(z * mu + M >= 0) for z in roots]


class TestRiskSpec:
    def test_constants(self, table1, risk):
        assert risk.N == pytest.approx(Z99 * math.sqrt(260), rel=1e-14)
        assert risk.N == pytest.approx(37.511232345447254, rel=1e-14)
        assert risk.M(table1) == pytest.approx(5.21, rel=1e-14)

    @pytest.mark.parametrize("kw", [dict(p=0.5), dict(p=0.0), dict(p=0.7), dict(tau=0.0),
                                    dict(var_cap=-1.0), dict(var_cap=math.inf)])
    def test_rejects(self, kw):
        base = dict(p=0.01, tau=1 / 260, var_cap=0.02)
        with pytest.raises(ParameterError):
            RiskSpec(**{**base, **kw})

    def test_nonpositive_M_rejected(self, risk):
        m = MarketParams(0.05, 0.3, -6.0, 0.14, 0.2)
        with pytest.raises(ParameterError, match="M"):
            classify_case(m, risk)


class TestVaR:
    def test_riskless_positive_drift(self, risk):
        m = MarketParams(0.05, 0.3, 0.01, 0.0, 0.2)  # beta = 0 injected
        assert var_of_strategy(m, risk, 0.0) == 0.0

    def test_table1_zero_stock(self, table1, risk):
        expected = -(0.01 / 260 - 0.14 * Z99 / math.sqrt(260))
        assert var_of_strategy(table1, risk, 0.0) == pytest.approx(expected, rel=1e-14)
        assert var_of_strategy(table1, risk, 0.0) == pytest.approx(0.02016, abs=5e-6)

    def test_zero_stock_quantile(self, table1, risk):
        tau = risk.tau
        assert quantile_of_gain(table1, risk, 0.0) == pytest.approx(tau * (0.01 - 0.14 * Z99 / math.sqrt(tau)),
                                                                     rel=1e-14)

    def test_positive_quantile_gives_zero_var(self, risk):
        m = MarketParams(50.0, 0.3, 0.01, 0.14, 0.2)
        f = 10.0
        assert quantile_of_gain(m, risk, f) > 0
        assert var_of_strategy(m, risk, f) == 0.0

    def test_median_injection(self, table1, risk):
        spec = dataclasses.replace(risk)
        object.__setattr__(spec, "p", 0.5)  # bypasses validation on purpose
        f = np.array([-1.0, 0.0, 2.5])
        np.testing.assert_allclose(quantile_of_gain(table1, spec, f), spec.tau * (f * 0.05 + 0.01), rtol=1e-15)

    def test_vectorized(self, table1, risk):
        f = np.linspace(-1, 1, 7)
        np.testing.assert_array_equal(var_of_strategy(table1, risk, f),
                                      [var_of_strategy(table1, risk, float(v)) for v in f])

    @pytest.mark.parametrize("f,n", [(0.0, 1_000_000), (-0.1, 10_000_000)])
    def test_empirical_quantile(self, table1, risk, f, n):
        dw1, dw2 = correlated_increments(table1.rho, risk.tau, n, seed=2024)
        gain = risk.tau * (f * table1.mu + table1.alpha) + f * table1.sigma * dw1 + table1.beta * dw2
        emp = np.quantile(gain, risk.p)
        q = quantile_of_gain(table1, risk, f)
        sd = math.sqrt(risk.tau * table1.variance_rate(f))
        density = math.exp(-0.5 * Z99**2) / math.sqrt(2 * math.pi) / sd
        se = math.sqrt(risk.p * (1 - risk.p) / n) / density
        assert abs(emp - q) < 4 * se


class TestClassification:
    def test_table1_closed_interval(self, table1, risk):
        d = classify_case(table1, risk)
        assert d.case is Case.CLOSED_INTERVAL and d.case.number == 3
        assert d.N == pytest.approx(37.511, abs=1e-3) and d.M == pytest.approx(5.21, rel=1e-14)
        assert d.delta == pytest.approx(314.146, abs=1e-3)
        assert all(d.conditions[k] for k in ("Delta_nonnegative", "rho_beta_mu_lt_sigma_M",
                                              "N2sigma2_minus_mu2_le_bound"))
        assert not d.conditions["N_sigma_lt_mu"]

    def test_table2_half_line(self, table2, risk):
        d = classify_case(table2, risk)
        assert d.case is Case.HALF_LINE and d.case.number == 2
        assert d.conditions["N_sigma_lt_mu"]

    def test_delta_matches_discriminant(self, table1, risk):
        d = classify_case(table1, risk)
        assert d.delta == pytest.approx(d.quad_b**2 - 4 * d.quad_a * d.quad_c, rel=1e-9)

    def test_as_dict_keys(self, table1, risk):
        out = classify_case(table1, risk).as_dict()
        assert out["case"] == "ClosedInterval" and out["case_number"] == 3
        assert set(out) == {"case", "case_number", "N", "M", "Delta", "N2sigma2_minus_mu2", "conditions"}

    def test_degenerate_half_line(self, risk):
        N = risk.N
        m = MarketParams(0.05, 0.05 / N, 0.01, 0.14, 0.2)
        d = classify_case(m, risk)
        assert d.case is Case.DEGENERATE_HALF_LINE and d.case.number == 1
        fs = feasible_set(m, risk)
        M = risk.M(m)
        assert fs.lower == pytest.approx((M**2 - N**2 * 0.14**2) / (2 * 0.05 * (0.2 * 0.14 * N - M)), rel=1e-14)
        assert fs.upper == math.inf
        # linear boundary: VaR equals the cap at the bound
        assert var_of_strategy(m, risk, fs.lower) == pytest.approx(risk.var_cap, rel=1e-9)

    def test_degenerate_contradiction_is_empty(self, risk):
        N = risk.N
        beta, rho = 0.14, 0.2
        alpha = rho * beta * N - risk.var_cap / risk.tau  # makes M = rho beta N
        m = MarketParams(0.05, 0.05 / N, alpha, beta, rho)
        assert classify_case(m, risk).case is Case.EMPTY
        assert feasible_set(m, risk).is_empty

    def test_negative_discriminant_is_empty(self, table1):
        spec = RiskSpec(0.01, 1 / 260, 0.015)
        d = classify_case(table1, spec)
        assert d.quad_a > 0 and d.delta < 0
        assert d.case is Case.EMPTY
        f = np.linspace(-5, 5, 100_001)
        assert np.min(var_of_strategy(table1, spec, f)) > spec.var_cap

    def test_empty_project_raises(self):
        with pytest.raises(InfeasibleProblemError):
            FeasibleSet(Case.EMPTY).project(0.0)


class TestFeasibleSet:
    def test_table1_roots_against_high_precision_oracle(self, table1, risk):
        roots, ok = mp_boundary_roots(table1, risk)
        fs = feasible_set(table1, risk)
        assert all(ok)
        assert fs.lower == pytest.approx(roots[0], rel=1e-12)
        assert fs.upper == pytest.approx(roots[1], rel=1e-12)
        # frozen from the oracle
        assert fs.lower == pytest.approx(-0.161258972084414599, rel=1e-12)
        assert fs.upper == pytest.approx(-0.0212972202037032985, rel=1e-12)
        assert fs.lower <= fs.upper < 0

    def test_table2_root_against_high_precision_oracle(self, table2, risk):
        roots, ok = mp_boundary_roots(table2, risk)
        fs = feasible_set(table2, risk)
        assert ok == [False, True]
        assert fs.lower == pytest.approx(roots[1], rel=1e-12)
        assert fs.lower == pytest.approx(0.064288680661066865, rel=1e-12)
        assert fs.upper == math.inf

    @pytest.mark.parametrize("fixture", ["table1", "table2"])
    def test_boundary_identity(self, fixture, risk, request):
        m = request.getfixturevalue(fixture)
        fs = feasible_set(m, risk)
        N, M = risk.N, risk.M(m)
        for f in (b for b in (fs.lower, fs.upper) if math.isfinite(b)):
            lhs = N**2 * m.variance_rate(f)
            rhs = (f * m.mu + M) ** 2
            assert abs(lhs - rhs) <= 1e-9 * max(lhs, rhs)
            assert f * m.mu + M >= 0

    @pytest.mark.parametrize("fixture,span", [("table1", (-2.0, 2.0)), ("table2", (-2.0, 10.0))])
    def test_set_equivalence_grid(self, fixture, span, risk, request):
        m = request.getfixturevalue(fixture)
        fs = feasible_set(m, risk)
        hi = fs.upper if math.isfinite(fs.upper) else fs.lower
        f = np.linspace(fs.lower + span[0], hi + span[1], 10_000)
        v = var_of_strategy(m, risk, f)
        inside = fs.contains(f)
        assert np.all(v[inside] <= risk.var_cap + 1e-12)
        assert np.all(v[~inside] > risk.var_cap - 1e-12)

    def test_project(self, table1, risk):
        fs = feasible_set(table1, risk)
        np.testing.assert_array_equal(fs.project(np.array([-1.0, -0.1, 1.0])), [fs.lower, -0.1, fs.upper])


params_st = st.builds(
    MarketParams,
    mu=st.floats(0.01, 2.0), sigma=st.floats(0.005, 1.0), alpha=st.floats(-0.05, 0.1),
    beta=st.floats(0.01, 0.5), rho=st.floats(-0.95, 0.95),
)
cap_st = st.floats(0.001, 0.2)


@given(m=params_st, cap=cap_st)
@settings(max_examples=300, deadline=None)
def test_set_equivalence_property(m, cap):
    spec = RiskSpec(0.01, 1 / 260, cap)
    assume(spec.M(m) > 0)
    fs = feasible_set(m, spec)
    if fs.is_empty:
        f = np.linspace(-50, 50, 20_001)
        assert np.min(var_of_strategy(m, spec, f)) > cap - 1e-12
        return
    hi = fs.upper if math.isfinite(fs.upper) else fs.lower + 10.0
    f = np.linspace(fs.lower - 2.0, hi + 2.0, 4_001)
    v = var_of_strategy(m, spec, f)
    inside = fs.contains(f)
    scale = cap * 1e-9  # rounding in the quantile near a boundary
    assert np.all(v[inside] <= cap + 1e-12 + scale)
    assert np.all(v[~inside] > cap - 1e-12 - scale)
    if fs.case is Case.CLOSED_INTERVAL:
        assert fs.lower <= fs.upper


@given(m=params_st, cap=cap_st, extra=st.floats(0.0, 0.1))
@settings(max_examples=200, deadline=None)
def test_cap_monotonicity(m, cap, extra):
    small = RiskSpec(0.01, 1 / 260, cap)
    large = RiskSpec(0.01, 1 / 260, cap + extra)
    assume(small.M(m) > 0)
    a, b = feasible_set(m, small), feasible_set(m, large)
    if a.is_empty:
        return
    assert not b.is_empty
    tol = 1e-9 * (1 + abs(a.lower))
    assert b.lower <= a.lower + tol
    assert b.upper >= a.upper - 1e-9 * (1 + abs(a.upper)) if math.isfinite(a.upper) else b.upper == math.inf
