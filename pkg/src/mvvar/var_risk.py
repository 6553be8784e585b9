"""One-period value-at-risk and the set of strategies that respect a VaR ceiling.

For a strategy frozen over a horizon tau the gain is Gaussian with mean
tau (f mu + alpha) and variance tau (f^2 sigma^2 + beta^2 + 2 rho sigma beta f),
so VaR = (tau (f mu + alpha) + sqrt(tau var) Phi^-1(p))^-.  Requiring
VaR <= cap is equivalent to

    N^2 (f^2 sigma^2 + beta^2 + 2 rho sigma beta f) <= (f mu + M)^2,   f mu + M >= 0,

with N = Phi^-1(1 - p) / sqrt(tau) and M = alpha + cap / tau.  The admissible
f therefore form a half-line, a closed interval or nothing, depending on the
sign of N^2 sigma^2 - mu^2.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleProblemError, ParameterError
from .market_model import MarketParams
from .normal import norm_ppf

DEGENERACY_RTOL = 1e-12
TANGENCY_RTOL = 1e-10


@dataclass(frozen=True)
class RiskSpec:
    p: float        # tail probability of the VaR quantile
    tau: float      # VaR horizon, years
    var_cap: float  # VaR ceiling

    def __post_init__(self):
        if not (0.0 < self.p < 0.5):
            raise ParameterError("p must lie in (0, 0.5)")
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise ParameterError("tau must be positive")
        if not (math.isfinite(self.var_cap) and self.var_cap >= 0):
            raise ParameterError("var_cap must be finite and non-negative")

    @property
    def N(self) -> float:
        return norm_ppf(1.0 - self.p) / math.sqrt(self.tau)

    def M(self, params: MarketParams) -> float:
        return params.alpha + self.var_cap / self.tau


def validate_risk(params: MarketParams, spec: RiskSpec) -> RiskSpec:
    if not spec.M(params) > 0:
        raise ParameterError("M = alpha + var_cap / tau must be positive")
    return spec


class Case(str, enum.Enum):
    DEGENERATE_HALF_LINE = "DegenerateHalfLine"
    HALF_LINE = "HalfLine"
    CLOSED_INTERVAL = "ClosedInterval"
    EMPTY = "Empty"

    @property
    def number(self) -> int | None:
        """Case number used when the clamped policy is listed (1, 2, 3)."""
        return {"DegenerateHalfLine": 1, "HalfLine": 2, "ClosedInterval": 3}.get(self.value)


@dataclass(frozen=True)
class FeasibleSet:
    case: Case
    lower: float = -math.inf
    upper: float = math.inf
    roots: tuple[float, float] | None = None  # (f2, f1), f2 <= f1

    @property
    def is_empty(self) -> bool:
        return self.case is Case.EMPTY

    def contains(self, f):
        f = np.asarray(f, dtype=float)
        if self.is_empty:
            return np.zeros(f.shape, dtype=bool)
        return (f >= self.lower) & (f <= self.upper)

    def project(self, f):
        """Closest admissible strategy to `f`."""
        if self.is_empty:
            raise InfeasibleProblemError("the VaR ceiling admits no strategy")
        return np.minimum(np.maximum(f, self.lower), self.upper)


@dataclass(frozen=True)
class CaseDiagnostics:
    case: Case
    N: float
    M: float
    delta: float | None
    quad_a: float  # N^2 sigma^2 - mu^2
    quad_b: float  # 2 (rho sigma beta N^2 - mu M)
    quad_c: float  # N^2 beta^2 - M^2
    conditions: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "case": self.case.value,
            "case_number": self.case.number,
            "N": self.N,
            "M": self.M,
            "Delta": self.delta,
            "N2sigma2_minus_mu2": self.quad_a,
            "conditions": dict(self.conditions),
        }


def quantile_of_gain(params: MarketParams, spec: RiskSpec, f):
    """p-quantile of the gain over one VaR horizon with f held fixed."""
    tau = spec.tau
    return tau * (f * params.mu + params.alpha) + math.sqrt(tau) * np.sqrt(params.variance_rate(f)) * norm_ppf(spec.p)


def var_of_strategy(params: MarketParams, spec: RiskSpec, f):
    """Value-at-risk (negative part of the gain quantile); never negative."""
    q = quantile_of_gain(params, spec, f)
    return np.maximum(0.0, -q)


def _delta(params: MarketParams, N: float, M: float) -> float:
    mu, sigma, beta, rho = params.mu, params.sigma, params.beta, params.rho
    return 4.0 * N * N * ((1.0 - rho * rho) * beta * beta * (mu * mu - N * N * sigma * sigma)
                          + (sigma * M - rho * beta * mu) ** 2)


def classify_case(params: MarketParams, spec: RiskSpec) -> CaseDiagnostics:
    """Decide which shape the admissible set takes and return every quantity used."""
    validate_risk(params, spec)
    mu, sigma, beta, rho = params.mu, params.sigma, params.beta, params.rho
    N, M = spec.N, spec.M(params)
    n2s2 = N * N * sigma * sigma
    a = n2s2 - mu * mu
    b = 2.0 * (rho * sigma * beta * N * N - mu * M)
    c = N * N * beta * beta - M * M
    degenerate = abs(a) <= DEGENERACY_RTOL * max(n2s2, mu * mu)
    cond = {"N_sigma_eq_mu": degenerate}

    if degenerate:
        # equality (within rounding) leaves no admissible strategy
        cond["rho_beta_N_lt_M"] = M - rho * beta * N > DEGENERACY_RTOL * max(M, abs(rho * beta * N))
        case = Case.DEGENERATE_HALF_LINE if cond["rho_beta_N_lt_M"] else Case.EMPTY
        return CaseDiagnostics(case, N, M, None, a, b, c, cond)

    delta = _delta(params, N, M)
    if delta < 0:
        eps = TANGENCY_RTOL * 4.0 * N * N * max(abs((1.0 - rho * rho) * beta * beta * (mu * mu - n2s2)),
                                                 (sigma * M - rho * beta * mu) ** 2)
        if delta >= -eps:
            delta = 0.0
    cond["N_sigma_lt_mu"] = a < 0
    cond["Delta_nonnegative"] = delta >= 0
    cond["rho_beta_mu_lt_sigma_M"] = rho * beta * mu < sigma * M
    if a < 0:
        case = Case.HALF_LINE
    else:
        bound = (sigma * M - rho * beta * mu) ** 2 / ((1.0 - rho * rho) * beta * beta)
        cond["N2sigma2_minus_mu2_le_bound"] = a <= bound
        # delta >= 0 is the same test as a <= bound, with the tangency tolerance applied
        if delta >= 0 and cond["rho_beta_mu_lt_sigma_M"]:
            case = Case.CLOSED_INTERVAL
        else:
            case = Case.EMPTY
    return CaseDiagnostics(case, N, M, delta, a, b, c, cond)


def _roots(a: float, b: float, c: float, delta: float) -> tuple[float, float]:
    # b^2 - 4ac equals delta algebraically; use the cancellation-free form
    sq = math.sqrt(delta)
    q = -0.5 * (b + math.copysign(sq, b))
    r1 = q / a
    r2 = c / q if q != 0.0 else r1
    lo, hi = min(r1, r2), max(r1, r2)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ArithmeticError("non-finite VaR boundary roots")
    return lo, hi


def feasible_set(params: MarketParams, spec: RiskSpec, diagnostics: CaseDiagnostics | None = None) -> FeasibleSet:
    """Admissible strategies under the VaR ceiling.

    Returns a `FeasibleSet`; an empty set is a valid result, not an error.
    """
    d = diagnostics or classify_case(params, spec)
    if d.case is Case.EMPTY:
        return FeasibleSet(Case.EMPTY)
    if d.case is Case.DEGENERATE_HALF_LINE:
        mu, beta, rho = params.mu, params.beta, params.rho
        fb = (d.M**2 - d.N**2 * beta**2) / (2.0 * mu * (rho * beta * d.N - d.M))
        return FeasibleSet(Case.DEGENERATE_HALF_LINE, lower=fb, upper=math.inf)
    f2, f1 = _roots(d.quad_a, d.quad_b, d.quad_c, d.delta)
    if d.case is Case.HALF_LINE:
        return FeasibleSet(Case.HALF_LINE, lower=f1, upper=math.inf, roots=(f2, f1))
    return FeasibleSet(Case.CLOSED_INTERVAL, lower=f2, upper=f1, roots=(f2, f1))
