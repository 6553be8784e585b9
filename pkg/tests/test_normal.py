import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvvar.normal import norm_cdf, norm_ppf

mp.mp.dps = 50


def mp_ppf(p):
    with mp.workdps(400):
        return float(mp.sqrt(2) * mp.erfinv(2 * mp.mpf(p) - 1))


@pytest.mark.parametrize("p", [1e-300, 1e-12, 1e-6, 0.001, 0.01, 0.02425, 0.05, 0.3, 0.5,
                               0.7, 0.97575, 0.99, 0.999, 1 - 1e-9, 1 - 1e-12])
def test_ppf_against_mpmath(p):
    assert norm_ppf(p) == pytest.approx(mp_ppf(p), abs=1e-12)


def test_ppf_dense_sweep_error_below_1e12():
    ps = np.concatenate([np.logspace(-12, -1, 200), np.linspace(0.1, 0.9, 200), 1 - np.logspace(-12, -1, 200)])
    err = max(abs(norm_ppf(float(p)) - mp_ppf(float(p))) for p in ps)
    assert err < 1e-12


def test_ppf_reference_value():
    # Phi^-1(0.99), tabulated
    assert norm_ppf(0.99) == pytest.approx(2.3263478740408408, abs=1e-15)


def test_ppf_rejects_out_of_range():
    for p in (0.0, 1.0, -0.1, 1.5, math.nan):
        with pytest.raises(ValueError):
            norm_ppf(p)


@given(st.floats(min_value=1e-10, max_value=1 - 1e-10))
@settings(max_examples=300, deadline=None)
def test_ppf_inverts_cdf(p):
    assert norm_cdf(norm_ppf(p)) == pytest.approx(p, rel=1e-12, abs=1e-15)


@given(st.floats(min_value=0.5, max_value=1 - 1e-10))
@settings(max_examples=200, deadline=None)
def test_ppf_antisymmetric(q):
    # 1 - q is exact for q >= 0.5
    assert norm_ppf(q) == pytest.approx(-norm_ppf(1 - q), abs=1e-12)
