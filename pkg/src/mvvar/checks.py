"""Invariant suites behind the ``verify`` command.

Each check returns a dict with ``name``, ``status`` (pass / fail / info /
skipped) and details.  Only ``fail`` makes the command exit non-zero; the
comparison of the two unconstrained modes is informational.
"""

from __future__ import annotations

import math
import time

import numpy as np

from .constrained import constant_strategy_value, evaluate_arrays
from .errors import DegenerateCurvatureError, SimulationError
from .market_model import SimConfig, gaussian_terminal_law
from .scenario import ScenarioConfig, run_scenario
from .unconstrained import Mode, UnconstrainedValue, optimal_f_unconstrained, value_partials, value_unconstrained
from .var_risk import Case, classify_case, feasible_set, var_of_strategy
from .verification import (clamp_oracle_sweep, clamp_policy_gap, constant_policy_check, hjb_residual,
                           mode_discrimination_report)

FAST_MC_PATHS = 10_000
FULL_MC_PATHS = 100_000


def _check(name, ok, **details):
    return {"name": name, "status": "pass" if ok else "fail", **details}


def _case_conditions_independent(cfg: ScenarioConfig) -> str:
    """Case label from the raw inequalities, without the classifier."""
    m, r = cfg.market, cfg.risk
    d = classify_case(m, r)
    N, M = d.N, d.M
    a = N * N * m.sigma**2 - m.mu**2
    if abs(a) <= 1e-12 * max(N * N * m.sigma**2, m.mu**2):
        rbn = m.rho * m.beta * N
        return Case.DEGENERATE_HALF_LINE.value if M - rbn > 1e-12 * max(M, abs(rbn)) else Case.EMPTY.value
    if N * m.sigma < m.mu:
        return Case.HALF_LINE.value
    bound = (m.sigma * M - m.rho * m.beta * m.mu) ** 2 / ((1 - m.rho**2) * m.beta**2)
    if 0 < a <= bound * (1 + 1e-10) and m.rho * m.beta * m.mu < m.sigma * M:
        return Case.CLOSED_INTERVAL.value
    return Case.EMPTY.value


def classification_checks(cfg: ScenarioConfig) -> list[dict]:
    m, r = cfg.market, cfg.risk
    d = classify_case(m, r)
    fs = feasible_set(m, r, d)
    out = [_check("case_classification", d.case.value == _case_conditions_independent(cfg),
                  case=d.case.value, N=d.N, M=d.M, Delta=d.delta)]

    if fs.is_empty:
        f = np.linspace(-50.0, 50.0, 20_001)
        worst = float(np.min(var_of_strategy(m, r, f)))
        out.append(_check("empty_set_has_no_feasible_point", worst > r.var_cap - 1e-12, min_var=worst))
        return out

    lo = fs.lower
    hi = fs.upper if math.isfinite(fs.upper) else lo + 10.0
    f = np.linspace(lo - 2.0, hi + 2.0, 10_000)
    var = var_of_strategy(m, r, f)
    inside = fs.contains(f)
    agree = np.where(inside, var <= r.var_cap + 1e-12, var > r.var_cap - 1e-12)
    out.append(_check("set_equivalence", bool(agree.all()), grid_points=int(f.size),
                      disagreements=int((~agree).sum())))

    if fs.roots is not None:
        N, M = d.N, d.M
        worst = 0.0
        for root in fs.roots:
            lhs = N * N * m.variance_rate(root)
            rhs = (root * m.mu + M) ** 2
            worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs)))
        # on a half-line the smaller root is spurious and sits left of -M/mu
        bounds = [fs.lower] if fs.case is Case.HALF_LINE else list(fs.roots)
        sign_ok = all(b * m.mu + M >= 0 for b in bounds)
        out.append(_check("root_identities", worst <= 1e-9 and sign_ok and fs.roots[0] <= fs.roots[1],
                          f2=fs.roots[0], f1=fs.roots[1], max_relative_error=worst))
    return out


def solver_checks(cfg: ScenarioConfig, n_random: int, seed: int) -> list[dict]:
    m, p, r = cfg.market, cfg.preference, cfg.risk
    rng = np.random.default_rng(seed)
    out = []

    x = rng.uniform(-5.0, 5.0, n_random)
    worst = 0.0
    for mode in Mode:
        worst = max(worst, float(np.max(np.abs(value_unconstrained(m, p, p.T, x, mode) - (x - p.gamma * x * x)))))
        worst = max(worst, float(np.max(np.abs(
            evaluate_arrays(m, p, r, p.T, x, mode)["V_con"] - (x - p.gamma * x * x)))))
    out.append(_check("terminal_condition", worst <= 1e-14, max_abs_error=worst))

    t_axis, x_axis = cfg.grid.axes()
    tt, xx = np.meshgrid(t_axis, x_axis, indexing="ij")
    vx, vxx = value_partials(m, p, tt, xx, Mode.PAPER, normalized=True)
    via_v = -(m.mu / m.sigma**2) * vx / vxx - m.rho * m.beta / m.sigma
    direct = optimal_f_unconstrained(m, p, tt, xx, Mode.PAPER)
    rel = float(np.max(np.abs(via_v - direct) / np.maximum(1.0, np.abs(direct))))
    out.append(_check("stationarity_identity", rel <= 1e-10, max_relative_error=rel))

    for mode in Mode:
        name = f"hjb_residual_{mode.value}"
        try:
            rep = hjb_residual(UnconstrainedValue(m, p, mode), m, (t_axis, x_axis))
        except DegenerateCurvatureError as exc:
            out.append({"name": name, "status": "skipped", "reason": str(exc)})
            continue
        if mode is Mode.REDERIVED:
            out.append(_check(name, rep.max_abs < 1e-8, **rep.as_dict()))
        else:
            out.append({"name": name, "status": "info", **rep.as_dict()})

    fs = feasible_set(m, r)
    bounds = [b for b in (fs.lower, fs.upper) if math.isfinite(b)]
    ts = rng.uniform(0.0, p.T, n_random)
    xs = rng.uniform(-2.0, 3.0, n_random)
    fb = np.array(bounds)[rng.integers(len(bounds), size=n_random)]
    closed = constant_strategy_value(m, p, fb, ts, xs)
    mean, var = gaussian_terminal_law(m, fb, ts, xs, p.T)
    moment = mean - p.gamma * (mean * mean + var)
    err = float(np.max(np.abs(closed - moment) / np.maximum(1.0, np.abs(moment))))
    out.append(_check("constant_branch_identity", err <= 1e-12, max_error=err))

    sweep = clamp_oracle_sweep(m, p, r, n_random // 10 or 1, seed, cfg.mode, grid=(t_axis, x_axis))
    out.append(_check("clamp_optimality",
                      sweep["max_argmax_gap"] <= max(1e-5, sweep["max_grid_step"])
                      and sweep["max_relative_objective_shortfall"] <= 1e-9, **sweep))
    return out


def surface_checks(cfg: ScenarioConfig) -> list[dict]:
    res = run_scenario(cfg)
    L = res.surface.layers
    dom = float(np.max(L["V_con"] - L["V_unc"]))
    var = var_of_strategy(cfg.market, cfg.risk, L["f_var"])
    worst_var = float(np.max(var))
    return [
        _check("dominance", dom <= 1e-12, max_V_con_minus_V_unc=dom),
        _check("feasibility", worst_var <= cfg.risk.var_cap + 1e-12, max_var=worst_var),
        {"name": "active_window", "status": "info",
         "active_fraction": res.summary["active_fraction"],
         "inactive_t_window": res.summary["inactive_t_window"],
         "inactive_x_window": res.summary["inactive_x_window"]},
    ]


def monte_carlo_checks(cfg: ScenarioConfig, suite: str) -> list[dict]:
    m, p, r = cfg.market, cfg.preference, cfg.risk
    n = FAST_MC_PATHS if suite == "fast" else max(FULL_MC_PATHS, min(cfg.simulation.n_paths, 1_000_000))
    sim = SimConfig(n_paths=n, dt=cfg.simulation.dt, master_seed=cfg.simulation.master_seed,
                    chunk_size=cfg.simulation.chunk_size, workers=cfg.simulation.workers)
    fs = feasible_set(m, r)
    out = []
    for bound in (fs.lower, fs.upper):
        if not math.isfinite(bound):
            continue
        cmp_ = constant_policy_check(m, p, bound, sim)
        out.append({"name": f"mc_constant_clamp_f={bound:.6g}", "status": "pass" if cmp_.passed else "fail",
                    **cmp_.as_dict()})
    if suite == "full":
        coarse = SimConfig(n_paths=min(n, 20_000), dt=max(cfg.simulation.dt, 1.0 / 52.0),
                           master_seed=cfg.simulation.master_seed)
        # feedback policies pull wealth back at rate (mu/sigma)^2; explicit Euler diverges once gain*dt > 2
        gain = (m.mu / m.sigma) ** 2 * coarse.dt
        runs = (("mode_discrimination", lambda: mode_discrimination_report(m, p, coarse)),
                ("dynamic_vs_constant_clamp", lambda: clamp_policy_gap(m, p, r, coarse, cfg.mode)))
        for name, run in runs:
            if gain > 1.0:
                out.append({"name": name, "status": "skipped", "euler_gain": gain,
                            "reason": f"feedback gain (mu/sigma)^2 dt = {gain:.3g} > 1: Euler steps are unstable"})
                continue
            try:
                out.append({"name": name, "status": "info", **run()})
            except SimulationError as exc:
                out.append({"name": name, "status": "skipped", "reason": str(exc)})
    return out


def verify_command(cfg: ScenarioConfig, suite: str = "fast", seed: int = 12345) -> tuple[int, dict]:
    """Run the invariant suites; exit code 1 if any hard check fails."""
    if suite not in ("fast", "full"):
        raise ValueError("suite must be 'fast' or 'full'")
    start = time.perf_counter()
    checks = classification_checks(cfg)
    feasible = not feasible_set(cfg.market, cfg.risk).is_empty
    if feasible:
        checks += solver_checks(cfg, 10_000 if suite == "full" else 1_000, seed)
        checks += surface_checks(cfg)
        checks += monte_carlo_checks(cfg, suite)
    else:
        checks.append({"name": "solver_checks", "status": "skipped",
                       "reason": "infeasible: the VaR ceiling admits no strategy"})
    failed = [c["name"] for c in checks if c["status"] == "fail"]
    report = {
        "scenario": cfg.name,
        "suite": suite,
        "feasible": feasible,
        "passed": not failed,
        "failed": failed,
        "elapsed_seconds": round(time.perf_counter() - start, 3),
        "checks": checks,
    }
    return (1 if failed else 0), report
