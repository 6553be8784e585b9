"""VaR-constrained optimal strategy and its piecewise value function.

The pointwise HJB objective is a downward parabola in f, so the constrained
optimum is the unconstrained optimum projected onto the admissible set:

    half-line [f1, inf)   ->  max(f1, f*)
    interval  [f2, f1]    ->  max(f2, min(f1, f*))
    degenerate [f_b, inf) ->  max(f_b, f*)

Where the projection is active the value is that of holding the bound
constant until T, which solves a linear PDE with drift D = f mu + alpha and
half-variance E = (f^2 sigma^2 + beta^2 + 2 rho sigma beta f) / 2:

    V = 1/(4 gamma) - gamma [y^2 + 2 D y s + D^2 s^2 + 2 E s],   s = T - t.

The same formula is applied to the degenerate half-line bound.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import InfeasibleProblemError
from .market_model import MarketParams, Preference
from .unconstrained import Mode, optimal_f_unconstrained, value_unconstrained
from .var_risk import Case, FeasibleSet, RiskSpec, feasible_set


class Branch(enum.IntEnum):
    INTERIOR = 0
    CLAMP_LOWER = 1
    CLAMP_UPPER = 2
    CASE1_CLAMP = 3


@dataclass(frozen=True)
class ClampConstants:
    f1: float | None = None
    D1: float | None = None
    E1: float | None = None
    f2: float | None = None
    D2: float | None = None
    E2: float | None = None
    fb: float | None = None
    Db: float | None = None
    Eb: float | None = None


@dataclass(frozen=True)
class PolicyEval:
    t: float
    x: float
    f_star: float
    f_var: float
    branch: Branch
    V_unconstrained: float
    V_constrained: float
    mode: Mode = Mode.PAPER

    @property
    def constraint_active(self) -> bool:
        return self.branch is not Branch.INTERIOR

    def as_dict(self) -> dict:
        return {
            "t": self.t,
            "x": self.x,
            "mode": self.mode.value,
            "f_star": self.f_star,
            "f_var": self.f_var,
            "branch": self.branch.name,
            "branch_code": int(self.branch),
            "constraint_active": self.constraint_active,
            "V_unconstrained": self.V_unconstrained,
            "V_constrained": self.V_constrained,
        }


def drift_and_half_variance(params: MarketParams, f: float) -> tuple[float, float]:
    return f * params.mu + params.alpha, 0.5 * params.variance_rate(f)


def clamp_constants(params: MarketParams, spec: RiskSpec, feasible: FeasibleSet | None = None) -> ClampConstants:
    fs = feasible if feasible is not None else feasible_set(params, spec)
    if fs.is_empty:
        raise InfeasibleProblemError("the VaR ceiling admits no strategy")
    if fs.case is Case.DEGENERATE_HALF_LINE:
        Db, Eb = drift_and_half_variance(params, fs.lower)
        return ClampConstants(fb=fs.lower, Db=Db, Eb=Eb)
    f2, f1 = fs.roots
    D1, E1 = drift_and_half_variance(params, f1)
    if fs.case is Case.HALF_LINE:
        return ClampConstants(f1=f1, D1=D1, E1=E1)
    D2, E2 = drift_and_half_variance(params, f2)
    return ClampConstants(f1=f1, D1=D1, E1=E1, f2=f2, D2=D2, E2=E2)


def constant_strategy_value(params: MarketParams, pref: Preference, f, t, x):
    """E[X_T - gamma X_T^2 | X_t = x] when the amount f is held on [t, T]."""
    g = pref.gamma
    s = pref.T - np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    y = x - 0.5 / g
    D = f * params.mu + params.alpha
    E = 0.5 * params.variance_rate(f)
    # 1/(4g) - g y^2 == x - g x^2
    out = x - g * x * x - g * s * (2.0 * D * y + D * D * s + 2.0 * E)
    return out[()] if isinstance(out, np.ndarray) else out


def _require_feasible(params, spec, feasible):
    fs = feasible if feasible is not None else feasible_set(params, spec)
    if fs.is_empty:
        raise InfeasibleProblemError("the VaR ceiling admits no strategy")
    return fs


def clamp_arrays(fs: FeasibleSet, f_star):
    """Project f* onto the admissible set; returns (f_var, branch codes, bound used)."""
    f_star = np.asarray(f_star, dtype=float)
    branch = np.zeros(f_star.shape, dtype=np.int8)
    below = f_star < fs.lower
    above = f_star > fs.upper
    if fs.case is Case.DEGENERATE_HALF_LINE:
        branch[below] = Branch.CASE1_CLAMP
    else:
        branch[below] = Branch.CLAMP_LOWER
        branch[above] = Branch.CLAMP_UPPER
    f_var = np.where(below, fs.lower, np.where(above, fs.upper, f_star))
    return f_var, branch


def evaluate_arrays(params: MarketParams, pref: Preference, spec: RiskSpec, t, x,
                    mode: Mode = Mode.PAPER, feasible: FeasibleSet | None = None) -> dict:
    """Vectorised policy and value layers over broadcast (t, x)."""
    fs = _require_feasible(params, spec, feasible)
    t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
    f_star = np.asarray(optimal_f_unconstrained(params, pref, t, x, mode), dtype=float)
    f_var, branch = clamp_arrays(fs, f_star)
    v_unc = np.asarray(value_unconstrained(params, pref, t, x, mode), dtype=float)
    v_con = v_unc.copy()
    lower_mask = (branch == Branch.CLAMP_LOWER) | (branch == Branch.CASE1_CLAMP)
    upper_mask = branch == Branch.CLAMP_UPPER
    if lower_mask.any():
        v_con[lower_mask] = constant_strategy_value(params, pref, fs.lower, t[lower_mask], x[lower_mask])
    if upper_mask.any():
        v_con[upper_mask] = constant_strategy_value(params, pref, fs.upper, t[upper_mask], x[upper_mask])
    return {
        "f_star": f_star,
        "f_var": f_var,
        "branch": branch,
        "V_unc": v_unc,
        "V_con": v_con,
        "active": branch != Branch.INTERIOR,
    }


def optimal_f_constrained(params: MarketParams, pref: Preference, spec: RiskSpec, t: float, x: float,
                          mode: Mode = Mode.PAPER, feasible: FeasibleSet | None = None) -> PolicyEval:
    """Optimal holding under the VaR ceiling at a single state.

    Raises
    ------
    InfeasibleProblemError
        If no strategy satisfies the ceiling.
    """
    mode = Mode(mode)
    layers = evaluate_arrays(params, pref, spec, t, x, mode, feasible)
    return PolicyEval(
        t=float(t),
        x=float(x),
        f_star=float(layers["f_star"]),
        f_var=float(layers["f_var"]),
        branch=Branch(int(layers["branch"])),
        V_unconstrained=float(layers["V_unc"]),
        V_constrained=float(layers["V_con"]),
        mode=mode,
    )


def value_constrained(params: MarketParams, pref: Preference, spec: RiskSpec, t, x,
                      mode: Mode = Mode.PAPER, feasible: FeasibleSet | None = None):
    out = evaluate_arrays(params, pref, spec, t, x, mode, feasible)["V_con"]
    return out[()] if out.ndim == 0 else out


class ConstrainedPolicy:
    """Feedback rule (t, x) -> f_VaR*(t, x) for simulation."""

    def __init__(self, params, pref, spec, mode: Mode = Mode.PAPER):
        self.params, self.pref, self.spec, self.mode = params, pref, spec, Mode(mode)
        self.feasible = _require_feasible(params, spec, None)

    def __call__(self, t, x):
        f_star = optimal_f_unconstrained(self.params, self.pref, t, x, self.mode)
        return clamp_arrays(self.feasible, f_star)[0]


def activation_times(params: MarketParams, pref: Preference, spec: RiskSpec, x: float,
                     mode: Mode = Mode.PAPER, samples: int = 2001) -> list[float]:
    """Times in [0, T] at which f*(t, x) crosses a bound of the admissible set.

    A dense scan brackets sign changes of f* - bound, each refined by Brent's
    method.  An empty list means the constraint status at wealth x never
    changes over the horizon.
    """
    fs = _require_feasible(params, spec, None)
    bounds = [b for b in (fs.lower, fs.upper) if math.isfinite(b)]
    ts = np.linspace(0.0, pref.T, samples)
    found = []
    for b in bounds:
        def gap(t, b=b):
            return float(optimal_f_unconstrained(params, pref, t, x, mode)) - b
        vals = np.array([gap(t) for t in ts])
        for i in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0):
            found.append(brentq(gap, ts[i], ts[i + 1], xtol=1e-12))
        found.extend(float(ts[i]) for i in np.flatnonzero(vals == 0.0))
    return sorted(found)
