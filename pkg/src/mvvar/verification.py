"""Independent checks of the closed forms.

* HJB residual of a candidate value function on a (t, x) grid.
* Brute-force maximisation of the pointwise HJB objective over the
  admissible set.
* Monte Carlo utility of a policy against a closed-form value.
* A side-by-side report of the two unconstrained coefficient modes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constrained import ConstrainedPolicy, constant_strategy_value, evaluate_arrays
from .errors import DegenerateCurvatureError
from .market_model import ConstantPolicy, MarketParams, Preference, SimConfig, simulate_paths
from .unconstrained import (Mode, UnconstrainedValue, hjb_constants, optimal_f_unconstrained, value_partials,
                            value_unconstrained)
from .var_risk import FeasibleSet, feasible_set

CURVATURE_FLOOR = 1e-10


@dataclass
class ResidualReport:
    t: np.ndarray
    x: np.ndarray
    residual: np.ndarray  # shape (len(t), len(x))
    mode: str
    method: str

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.residual)))

    @property
    def mean_abs(self) -> float:
        return float(np.mean(np.abs(self.residual)))

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "method": self.method,
            "grid": {"nt": int(self.t.size), "nx": int(self.x.size),
                     "t_range": [float(self.t[0]), float(self.t[-1])],
                     "x_range": [float(self.x[0]), float(self.x[-1])]},
            "max_abs": self.max_abs,
            "mean_abs": self.mean_abs,
        }


@dataclass
class OracleComparison:
    t: float
    x: float
    solver_value: float
    oracle_value: float
    tolerance: float
    std_error: float | None = None
    label: str = ""

    @property
    def abs_gap(self) -> float:
        return abs(self.solver_value - self.oracle_value)

    @property
    def rel_gap(self) -> float:
        scale = max(abs(self.solver_value), abs(self.oracle_value))
        return self.abs_gap / scale if scale > 0 else 0.0

    @property
    def passed(self) -> bool:
        return self.abs_gap <= self.tolerance

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "t": self.t,
            "x": self.x,
            "solver_value": self.solver_value,
            "oracle_value": self.oracle_value,
            "std_error": self.std_error,
            "abs_gap": self.abs_gap,
            "rel_gap": self.rel_gap,
            "tolerance": self.tolerance,
            "verdict": "pass" if self.passed else "fail",
        }


# -- finite differences -----------------------------------------------------

def _richardson(d_h, d_h2):
    # both estimates are O(h^2)
    return (4.0 * d_h2 - d_h) / 3.0


def _fd_t(V, t, x, h, T):
    # central where t + h stays inside [.., T], second-order backward otherwise
    central = (V(np.minimum(t + h, T), x) - V(t - h, x)) / (2.0 * h)
    backward = (3.0 * V(t, x) - 4.0 * V(t - h, x) + V(t - 2.0 * h, x)) / (2.0 * h)
    return np.where(t + h <= T, central, backward)


def _fd_x(V, t, x, h):
    return (V(t, x + h) - V(t, x - h)) / (2.0 * h)


def _fd_xx(V, t, x, h):
    return (V(t, x + h) - 2.0 * V(t, x) + V(t, x - h)) / (h * h)


def numeric_partials(V, t, x, T: float, ht: float | None = None, hx_scale: float = 1e-5,
                     hxx_scale: float = 1e-3, richardson: bool = True):
    """Central-difference V_t, V_x, V_xx.

    Default steps: 1e-5 T in t, 1e-5 max(1, |x|) in x for V_x.  V_xx uses
    1e-3 max(1, |x|): with a 1e-5 step its rounding error alone is ~1e-6.
    """
    ht = 1e-5 * T if ht is None else ht
    hx = hx_scale * np.maximum(1.0, np.abs(x))
    hxx = hxx_scale * np.maximum(1.0, np.abs(x))
    if richardson:
        vt = _richardson(_fd_t(V, t, x, ht, T), _fd_t(V, t, x, ht / 2, T))
        vx = _richardson(_fd_x(V, t, x, hx), _fd_x(V, t, x, hx / 2))
        vxx = _richardson(_fd_xx(V, t, x, hxx), _fd_xx(V, t, x, hxx / 2))
    else:
        vt, vx, vxx = _fd_t(V, t, x, ht, T), _fd_x(V, t, x, hx), _fd_xx(V, t, x, hxx)
    return vt, vx, vxx


def hjb_residual(value_fn, params: MarketParams, grid, T: float | None = None,
                 analytic: bool = True, **fd_options) -> ResidualReport:
    """Residual of V_t + A V_x + B V_x^2 / V_xx + C V_xx on a grid.

    Parameters
    ----------
    value_fn : callable
        ``value_fn(t, x)`` vectorised.  Optional attributes ``dt``, ``dx``,
        ``dxx`` (callables or None) supply analytic partials; anything
        missing, or everything when ``analytic`` is False, falls back to
        Richardson-extrapolated central differences.
    grid : (t_values, x_values)
    T : float
        Terminal time; defaults to ``value_fn.pref.T``.

    Raises
    ------
    DegenerateCurvatureError
        If |V_xx| <= 1e-10 at any grid point.
    """
    t_vals, x_vals = (np.asarray(g, dtype=float) for g in grid)
    T = value_fn.pref.T if T is None else T
    tt, xx = np.meshgrid(t_vals, x_vals, indexing="ij")
    k = hjb_constants(params)

    partials = {}
    methods = []
    numeric = None
    for name in ("dt", "dx", "dxx"):
        fn = getattr(value_fn, name, None) if analytic else None
        if fn is not None:
            partials[name] = np.broadcast_to(fn(tt, xx), tt.shape)
            methods.append(f"{name}:analytic")
        else:
            if numeric is None:
                numeric = numeric_partials(value_fn, tt, xx, T, **fd_options)
            partials[name] = numeric[("dt", "dx", "dxx").index(name)]
            methods.append(f"{name}:fd")

    vxx = partials["dxx"]
    if np.any(np.abs(vxx) <= CURVATURE_FLOOR):
        i, j = np.argwhere(np.abs(vxx) <= CURVATURE_FLOOR)[0]
        raise DegenerateCurvatureError(f"|V_xx| <= {CURVATURE_FLOOR:g} at t={tt[i, j]!r}, x={xx[i, j]!r}")
    vx = partials["dx"]
    res = partials["dt"] + k.A * vx + k.B * vx * vx / vxx + k.C * vxx
    mode = getattr(getattr(value_fn, "mode", None), "value", "custom")
    return ResidualReport(t_vals, x_vals, res, mode, ",".join(methods))


# -- pointwise HJB objective ------------------------------------------------

def hjb_objective(v_x, v_xx, params: MarketParams, f):
    """f-dependent part of the HJB supremand: V_xx sigma^2 f^2 / 2 + (mu V_x + rho sigma beta V_xx) f."""
    return 0.5 * v_xx * params.sigma**2 * f * f + (params.mu * v_x + params.rho * params.sigma * params.beta * v_xx) * f


def static_quadratic_oracle(v_x: float, v_xx: float, params: MarketParams, feasible: FeasibleSet,
                            n_points: int = 100_001, max_step: float | None = None):
    """Dense-grid argmax of the HJB objective over the admissible set.

    Half-lines are truncated 10 units beyond the larger of the finite
    endpoint and the analytic vertex.  When ``max_step`` is finer than the
    first grid allows, the search is repeated on dense grids around the
    incumbent (the objective is unimodal) until the step is at most
    ``max_step``.  Returns (argmax, max, final grid step).
    """
    if not v_xx < 0:
        raise ValueError("v_xx must be negative")
    if feasible.is_empty:
        raise ValueError("feasible set is empty")
    vertex = -(params.mu * v_x + params.rho * params.beta * params.sigma * v_xx) / (params.sigma**2 * v_xx)
    lo, hi = feasible.lower, feasible.upper
    if not math.isfinite(hi):
        hi = max(lo, vertex) + 10.0
    quad = v_xx * params.sigma**2
    lin = params.mu * v_x + params.rho * params.sigma * params.beta * v_xx
    a, b = lo, hi
    while True:
        c = 0.5 * (a + b)
        d = np.linspace(a - c, b - c, n_points)
        # objective minus its value at c; avoids rounding of large g far from 0
        g = d * (quad * c + lin) + 0.5 * quad * d * d
        i = int(np.argmax(g))
        step = (b - a) / (n_points - 1) if n_points > 1 else 0.0
        f = c + d[i]
        if max_step is None or step <= max_step or step == 0.0:
            return float(f), float(hjb_objective(v_x, v_xx, params, c) + g[i]), step
        a, b = max(lo, f - 2.0 * step), min(hi, f + 2.0 * step)


# -- Monte Carlo --------------------------------------------------------------

def mc_utility(params: MarketParams, pref: Preference, policy, cfg: SimConfig, closed_form: float,
               t0: float = 0.0, x0: float | None = None, k_se: float = 4.0, label: str = "",
               fast_constant: bool = True) -> OracleComparison:
    """Compare a closed-form value with the Monte Carlo utility of `policy`.

    The verdict passes when the gap is within ``k_se`` standard errors.
    """
    x_start = pref.x0 if x0 is None else x0
    batch = simulate_paths(params, pref, policy, cfg, t0=t0, x0=x_start, fast_constant=fast_constant)
    return OracleComparison(t=t0, x=x_start, solver_value=float(closed_form), oracle_value=batch.mean_utility,
                            tolerance=k_se * batch.std_error, std_error=batch.std_error, label=label)


def constant_policy_check(params, pref, f, cfg: SimConfig, t0=0.0, x0=None, k_se=4.0) -> OracleComparison:
    x_start = pref.x0 if x0 is None else x0
    v = constant_strategy_value(params, pref, f, t0, x_start)
    return mc_utility(params, pref, ConstantPolicy(f), cfg, v, t0, x_start, k_se, label=f"constant f={f!r}")


def clamp_policy_gap(params, pref, spec, cfg: SimConfig, mode: Mode = Mode.PAPER, t0=0.0, x0=None) -> dict:
    """Monte Carlo utility of the dynamic clamped policy and of its constant-bound restriction.

    Both runs share the seed (common random numbers).  The piecewise closed
    form is the value of the constant bound; the dynamic policy re-evaluates
    the clamp along each path, so the two can differ.
    """
    x_start = pref.x0 if x0 is None else x0
    fs = feasible_set(params, spec)
    layers = evaluate_arrays(params, pref, spec, t0, x_start, mode, fs)
    branch = int(layers["branch"])
    f_bound = float(layers["f_var"])
    closed = float(layers["V_con"])
    dyn = simulate_paths(params, pref, ConstrainedPolicy(params, pref, spec, mode), cfg, t0, x_start,
                         fast_constant=False)
    const = simulate_paths(params, pref, ConstantPolicy(f_bound), cfg, t0, x_start, fast_constant=False)
    diff = dyn.terminal_wealth - pref.gamma * dyn.terminal_wealth**2 - (
        const.terminal_wealth - pref.gamma * const.terminal_wealth**2)
    paired_se = float(diff.std(ddof=1) / math.sqrt(diff.size)) if diff.size > 1 else 0.0
    return {
        "t": t0,
        "x": x_start,
        "mode": Mode(mode).value,
        "branch_code": branch,
        "f_at_start": f_bound,
        "closed_form_V_con": closed,
        "mc_dynamic_policy": {"mean_utility": dyn.mean_utility, "std_error": dyn.std_error},
        "mc_constant_policy": {"mean_utility": const.mean_utility, "std_error": const.std_error},
        "dynamic_minus_constant": float(diff.mean()),
        "paired_std_error": paired_se,
        "dynamic_not_worse_4se": bool(diff.mean() >= -4.0 * paired_se),
    }


# -- mode comparison ----------------------------------------------------------

def mode_discrimination_report(params: MarketParams, pref: Preference, cfg: SimConfig | None = None,
                               points=None, grid_n: int = 101) -> dict:
    """Compare the printed and rederived unconstrained solutions.

    Contents: HJB residual maxima, f* and V at sample states, and the Monte
    Carlo utility of each mode's own feedback policy against its own V.
    """
    if points is None:
        points = [(0.0, pref.x0), (pref.T / 2, pref.x0), (pref.T, pref.x0), (0.0, 0.5 / pref.gamma)]
    grid = (np.linspace(0.0, pref.T, grid_n), np.linspace(0.0, 1.0, grid_n))
    report: dict = {"residual": {}, "points": [], "monte_carlo": {}}
    for mode in Mode:
        vf = UnconstrainedValue(params, pref, mode)
        try:
            report["residual"][mode.value] = hjb_residual(vf, params, grid).as_dict()
        except DegenerateCurvatureError as exc:
            report["residual"][mode.value] = {"mode": mode.value, "error": str(exc)}
    for t, x in points:
        row = {"t": float(t), "x": float(x)}
        for mode in Mode:
            row[f"f_star_{mode.value}"] = float(optimal_f_unconstrained(params, pref, t, x, mode))
            row[f"V_{mode.value}"] = float(value_unconstrained(params, pref, t, x, mode))
        report["points"].append(row)
    if cfg is not None:
        for mode in Mode:
            vf = UnconstrainedValue(params, pref, mode)
            cmp_ = mc_utility(params, pref, vf.policy(), cfg, float(vf(0.0, pref.x0)),
                              label=f"unconstrained {mode.value} policy vs own V")
            report["monte_carlo"][mode.value] = cmp_.as_dict()
        verdicts = {m: r["verdict"] for m, r in report["monte_carlo"].items()}
        report["modes_matching_mc"] = sorted(m for m, v in verdicts.items() if v == "pass")
    return report


def clamp_oracle_sweep(params, pref, spec, n_samples: int, seed: int, mode: Mode = Mode.PAPER,
                       grid=None, max_step: float = 1e-5) -> dict:
    """Compare the solver's clamped strategy with brute-force maximisation at random grid nodes.

    Partials are scaled by 1/|V_xx|, which leaves the argmax and the relative
    objective gap unchanged.
    """
    fs = feasible_set(params, spec)
    rng = np.random.default_rng(seed)
    if grid is None:
        grid = (np.linspace(0.0, pref.T, 101), np.linspace(0.0, 1.0, 101))
    t_vals, x_vals = grid
    worst_arg = 0.0
    worst_obj = 0.0
    worst_step = 0.0
    for _ in range(n_samples):
        t = float(t_vals[rng.integers(t_vals.size)])
        x = float(x_vals[rng.integers(x_vals.size)])
        vx, vxx = (float(v) for v in value_partials(params, pref, t, x, mode, normalized=True))
        f_var = float(evaluate_arrays(params, pref, spec, t, x, mode, fs)["f_var"])
        arg, best, step = static_quadratic_oracle(vx, vxx, params, fs, max_step=max_step)
        g_solver = float(hjb_objective(vx, vxx, params, f_var))
        worst_arg = max(worst_arg, abs(arg - f_var))
        worst_step = max(worst_step, step)
        if best != 0:
            worst_obj = max(worst_obj, (best - g_solver) / abs(best))
    return {"n_samples": n_samples, "max_argmax_gap": worst_arg, "max_grid_step": worst_step,
            "max_relative_objective_shortfall": worst_obj}

