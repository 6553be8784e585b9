"""Market parameters and Monte Carlo simulation of the wealth process.

Wealth follows

    dX_t = (f_t mu + alpha) dt + f_t sigma dW1_t + beta dW2_t,

where f_t is the amount held in the stock, the cash flow has drift alpha
and diffusion beta, and corr(dW1, dW2) = rho.  The risk-free rate is zero.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ParameterError, SimulationError

Policy = Callable[[float, np.ndarray], "np.ndarray | float"]


@dataclass(frozen=True)
class MarketParams:
    mu: float     # stock appreciation rate, per year
    sigma: float  # stock volatility, per sqrt(year)
    alpha: float  # cash-flow drift, per year
    beta: float   # cash-flow diffusion, per sqrt(year)
    rho: float    # correlation between the two Brownian drivers

    def variance_rate(self, f):
        """Instantaneous variance f^2 sigma^2 + beta^2 + 2 rho sigma beta f."""
        return f * f * self.sigma**2 + self.beta**2 + 2.0 * self.rho * self.sigma * self.beta * f


@dataclass(frozen=True)
class Preference:
    gamma: float  # weight on the second moment in E[X_T - gamma X_T^2]
    T: float      # terminal time, years
    x0: float = 1.0


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 100_000
    dt: float = 1.0 / 260.0
    master_seed: int = 20240601
    chunk_size: int = 65_536
    workers: int = 1


@dataclass
class PathBatch:
    terminal_wealth: np.ndarray
    mean_utility: float
    std_error: float
    gamma: float = field(repr=False, default=1.0)

    @property
    def n_paths(self) -> int:
        return int(self.terminal_wealth.size)

    def summary(self) -> dict:
        w = self.terminal_wealth
        return {
            "n_paths": self.n_paths,
            "mean_terminal_wealth": float(w.mean()),
            "var_terminal_wealth": float(w.var(ddof=1)) if w.size > 1 else 0.0,
            "mean_utility": self.mean_utility,
            "std_error": self.std_error,
        }


def validate_params(params: MarketParams, pref: Preference) -> tuple[MarketParams, Preference]:
    """Check the standing assumptions and return the inputs unchanged.

    Raises
    ------
    ParameterError
        Naming the first violated invariant.
    """
    checks = [
        (math.isfinite(params.mu) and params.mu > 0, "mu must be positive"),
        (math.isfinite(params.sigma) and params.sigma > 0, "sigma must be positive"),
        (math.isfinite(params.beta) and params.beta > 0, "beta must be positive"),
        (math.isfinite(params.alpha), "alpha must be finite"),
        (math.isfinite(params.rho) and params.rho**2 < 1, "correlation must satisfy ρ²<1"),
        (math.isfinite(pref.gamma) and pref.gamma > 0, "gamma must be positive"),
        (math.isfinite(pref.T) and pref.T > 0, "T must be positive"),
        (math.isfinite(pref.x0), "x0 must be finite"),
    ]
    for ok, message in checks:
        if not ok:
            raise ParameterError(message)
    return params, pref


def validate_sim_config(cfg: SimConfig, T: float) -> SimConfig:
    if cfg.n_paths < 1:
        raise ParameterError("n_paths must be at least 1")
    if not (0 < cfg.dt <= T):
        raise ParameterError("dt must satisfy 0 < dt <= T")
    if cfg.chunk_size < 1:
        raise ParameterError("chunk_size must be at least 1")
    if cfg.workers < 1:
        raise ParameterError("workers must be at least 1")
    if not 0 <= cfg.master_seed < 2**64:
        raise ParameterError("master_seed must be an unsigned 64-bit integer")
    return cfg


def _rng(seed: int, chunk_index: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(chunk_index),))
    return np.random.Generator(np.random.SFC64(ss))


def correlated_increments(rho: float, dt: float, count: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw `count` pairs of Brownian increments with correlation `rho`.

    dW2 is built as rho * dW1 + sqrt(1 - rho^2) * dW_perp, so rho = +-1 is
    allowed here and gives dW2 = +-dW1 exactly.
    """
    if dt <= 0:
        raise ParameterError("dt must be positive")
    if not -1.0 <= rho <= 1.0:
        raise ParameterError("rho must lie in [-1, 1]")
    rng = _rng(seed)
    sd = math.sqrt(dt)
    dw1 = sd * rng.standard_normal(count)
    dw_perp = sd * rng.standard_normal(count)
    dw2 = rho * dw1 + math.sqrt(1.0 - rho * rho) * dw_perp
    return dw1, dw2


def gaussian_terminal_law(params: MarketParams, f: float, t: float, x: float, T: float) -> tuple[float, float]:
    """Mean and variance of X_T when the constant amount f is held on [t, T]."""
    horizon = T - np.asarray(t, dtype=float)
    if np.any(horizon < 0):
        raise ParameterError("t must not exceed T")
    if horizon.ndim == 0:
        horizon = float(horizon)
    mean = x + (f * params.mu + params.alpha) * horizon
    var = params.variance_rate(f) * horizon
    return mean, var


class ConstantPolicy:
    """Hold the fixed amount `f` in the stock regardless of time and wealth."""

    def __init__(self, f: float):
        self.f = float(f)

    def __call__(self, t, x):
        return np.full_like(np.asarray(x, dtype=float), self.f)

    def __repr__(self):
        return f"ConstantPolicy({self.f!r})"


def _step_count(horizon: float, dt: float) -> int:
    return max(1, int(math.ceil(horizon / dt - 1e-9)))


def _simulate_chunk(params, x0, t0, policy, horizon, n_steps, seed, chunk_index, n, fast_constant):
    rng = _rng(seed, chunk_index)
    h = horizon / n_steps
    sh = math.sqrt(h)
    mu, sigma, alpha, beta, rho = params.mu, params.sigma, params.alpha, params.beta, params.rho
    rho_perp = math.sqrt(max(0.0, 1.0 - rho * rho))
    x = np.full(n, float(x0))
    z = np.empty(n)

    if fast_constant and isinstance(policy, ConstantPolicy):
        # one combined shock per step: same Euler step and law, half the draws
        f = policy.f
        acc = np.zeros(n)
        for _ in range(n_steps):
            rng.standard_normal(out=z)
            acc += z
        x += n_steps * (f * mu + alpha) * h
        x += math.sqrt(params.variance_rate(f) * h) * acc
    else:
        z2 = np.empty(n)
        for k in range(n_steps):
            f = np.broadcast_to(np.asarray(policy(t0 + k * h, x), dtype=float), x.shape)
            rng.standard_normal(out=z)
            rng.standard_normal(out=z2)
            # dW1 = sh*z, dW2 = sh*(rho*z + rho_perp*z2)
            x += (f * mu + alpha) * h + sh * ((f * sigma + beta * rho) * z + beta * rho_perp * z2)
    bad = np.flatnonzero(~np.isfinite(x))
    return x, (int(bad[0]) if bad.size else None)


def simulate_paths(params: MarketParams, pref: Preference, policy: Policy, cfg: SimConfig,
                   t0: float = 0.0, x0: float | None = None, fast_constant: bool = True) -> PathBatch:
    """Euler-Maruyama simulation of terminal wealth under `policy`.

    Parameters
    ----------
    policy : callable
        ``policy(t, x)`` with ``x`` a 1-D array of current wealth; returns the
        amount in the stock for each path (array or scalar).
    cfg : SimConfig
        Paths are split into chunks of ``cfg.chunk_size``; chunk ``i`` draws
        from a stream derived from ``(master_seed, i)``, so the result does not
        depend on ``cfg.workers``.
    t0, x0 : float
        Start of the simulation; ``x0`` defaults to ``pref.x0``.
    fast_constant : bool
        For a ``ConstantPolicy`` draw one combined shock per step instead of
        two correlated ones.  Pass False to keep common random numbers with a
        non-constant policy run on the same seed.
    """
    validate_sim_config(cfg, pref.T)
    x_start = pref.x0 if x0 is None else x0
    if t0 >= pref.T:
        w = np.full(cfg.n_paths, float(x_start))
    else:
        horizon = pref.T - t0
        n_steps = _step_count(horizon, cfg.dt)
        sizes = [min(cfg.chunk_size, cfg.n_paths - i) for i in range(0, cfg.n_paths, cfg.chunk_size)]
        jobs = [(params, x_start, t0, policy, horizon, n_steps, cfg.master_seed, i, n, fast_constant)
                for i, n in enumerate(sizes)]
        if cfg.workers > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(lambda a: _simulate_chunk(*a), jobs))
        else:
            results = [_simulate_chunk(*a) for a in jobs]
        offset = 0
        for (chunk, bad), n in zip(results, sizes):
            if bad is not None:
                raise SimulationError("non-finite wealth encountered", offset + bad)
            offset += n
        w = np.concatenate([r[0] for r in results])
    mean_u, se = utility_statistics(w, pref.gamma)
    return PathBatch(terminal_wealth=w, mean_utility=mean_u, std_error=se, gamma=pref.gamma)


def utility_statistics(terminal_wealth: np.ndarray, gamma: float) -> tuple[float, float]:
    """Sample mean of X_T - gamma X_T^2 and its standard error."""
    u = terminal_wealth - gamma * terminal_wealth**2
    n = u.size
    mean = float(u.mean())
    if n < 2 or np.ptp(u) == 0.0:
        return mean, 0.0
    se = float(u.std(ddof=1) / math.sqrt(n))
    return mean, se
