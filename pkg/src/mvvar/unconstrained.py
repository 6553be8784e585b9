"""Unconstrained optimal strategy and value function.

With y = x - 1/(2 gamma) and s = T - t the value function solves

    V_t + A V_x + B V_x^2 / V_xx + C V_xx = 0,   V(T, x) = x - gamma x^2,

A = alpha - rho beta mu / sigma, B = -(mu / sigma)^2 / 2, C = beta^2 (1 - rho^2) / 2,
and the optimal holding is f* = -(mu / sigma^2) V_x / V_xx - rho beta / sigma.

Two coefficient sets are provided:

``Mode.PAPER``
    The closed form V = -gamma y^2 e^{k1 s} + k2 s y + k3 s + 1/(4 gamma)
    with k1 = 2B and time-dependent k2, k3 (see `printed_coefficients`).
    Its derivation treats k2 and k3 as constants in t, so this V is not an
    exact solution of the PDE; its residual is reported.
``Mode.REDERIVED``
    V = -gamma P y^2 + Q y + R + 1/(4 gamma) with
    P' = -2BP, Q' = 2A gamma P - 2BQ, R' = -AQ + BQ^2/(2 gamma P) + 2C gamma P,
    P(T) = 1, Q(T) = R(T) = 0.  In closed form
    P = e^{2Bs}, Q = -2A gamma s P, R = -gamma A^2 s^2 P - gamma C expm1(2Bs) / B,
    i.e. V = -gamma P (y + A s)^2 - gamma C expm1(2Bs) / B + 1/(4 gamma).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .market_model import MarketParams, Preference


class Mode(str, enum.Enum):
    PAPER = "paper"
    REDERIVED = "rederived"


@dataclass(frozen=True)
class HJBConstants:
    A: float
    B: float
    C: float


def hjb_constants(params: MarketParams) -> HJBConstants:
    mu, sigma, alpha, beta, rho = params.mu, params.sigma, params.alpha, params.beta, params.rho
    return HJBConstants(
        A=alpha - rho * beta * mu / sigma,
        B=-0.5 * (mu / sigma) ** 2,
        C=0.5 * beta**2 * (1.0 - rho**2),
    )


def _horizon(pref: Preference, t):
    s = pref.T - np.asarray(t, dtype=float)
    if np.any(s < 0):
        raise ValueError("t must not exceed T")
    return s


def printed_coefficients(params: MarketParams, pref: Preference, t):
    """(k1, k2, k3) of the printed closed form, evaluated at time(s) t."""
    k = hjb_constants(params)
    g = pref.gamma
    s = _horizon(pref, t)
    P = np.exp(2.0 * k.B * s)
    u = s / (2.0 * k.B * s - 1.0)
    k1 = 2.0 * k.B
    k2 = 2.0 * k.A * g * P / (2.0 * k.B * s - 1.0)
    # C/A^2 multiplied through so that A = 0 stays finite
    k3 = 2.0 * g * P * (k.A**2 * u - k.A**2 * k.B * u * u - k.C)
    return k1, k2, k3


def rederived_coefficients(params: MarketParams, pref: Preference, t):
    """(P, Q, R) of the quadratic ansatz, evaluated at time(s) t."""
    k = hjb_constants(params)
    g = pref.gamma
    s = _horizon(pref, t)
    P = np.exp(2.0 * k.B * s)
    Q = -2.0 * k.A * g * s * P
    R = -g * k.A**2 * s * s * P - g * k.C * np.expm1(2.0 * k.B * s) / k.B
    return P, Q, R


def optimal_f_unconstrained(params: MarketParams, pref: Preference, t, x, mode: Mode = Mode.PAPER):
    """Optimal amount in the stock without a VaR ceiling."""
    mode = Mode(mode)
    k = hjb_constants(params)
    mu, sigma = params.mu, params.sigma
    s = _horizon(pref, t)
    y = np.asarray(x, dtype=float) - 0.5 / pref.gamma
    if mode is Mode.PAPER:
        middle = mu * k.A * s / (mu * mu * s + sigma * sigma)
    else:
        middle = (mu / sigma**2) * k.A * s
    out = -(mu / sigma**2) * y - middle - params.rho * params.beta / sigma
    return out[()] if isinstance(out, np.ndarray) else out


def value_unconstrained(params: MarketParams, pref: Preference, t, x, mode: Mode = Mode.PAPER):
    mode = Mode(mode)
    g = pref.gamma
    s = _horizon(pref, t)
    x = np.asarray(x, dtype=float)
    y = x - 0.5 / g
    # -g y^2 + 1/(4g) rewritten as x - g x^2: exact terminal values, no cancellation
    terminal = x - g * x * x
    if mode is Mode.PAPER:
        k1, k2, k3 = printed_coefficients(params, pref, t)
        out = terminal - g * y * y * np.expm1(k1 * s) + k2 * s * y + k3 * s
    else:
        k = hjb_constants(params)
        _, Q, R = rederived_coefficients(params, pref, t)
        out = terminal - g * y * y * np.expm1(2.0 * k.B * s) + Q * y + R
    return out[()] if isinstance(out, np.ndarray) else out


def value_partials(params: MarketParams, pref: Preference, t, x, mode: Mode = Mode.PAPER,
                   normalized: bool = False):
    """Analytic V_x and V_xx.

    In PAPER mode these are the partials of the printed formula in x,
    which is what its optimal strategy is built from.  With ``normalized``
    both are divided by |V_xx| (returned as (V_x / |V_xx|, -1)); the ratio is
    formed without the factor e^{2B(T-t)}, which underflows when mu/sigma is
    large.
    """
    mode = Mode(mode)
    g = pref.gamma
    s = _horizon(pref, t)
    y = np.asarray(x, dtype=float) - 0.5 / g
    if normalized:
        k = hjb_constants(params)
        if mode is Mode.PAPER:
            ratio = -y + k.A * s / (2.0 * k.B * s - 1.0)
        else:
            ratio = -(y + k.A * s)
        return ratio, -np.ones_like(ratio)
    if mode is Mode.PAPER:
        k1, k2, _ = printed_coefficients(params, pref, t)
        e = np.exp(k1 * s)
        vx = -2.0 * g * e * y + k2 * s
        vxx = -2.0 * g * e * np.ones_like(y)
    else:
        P, Q, _ = rederived_coefficients(params, pref, t)
        vx = -2.0 * g * P * y + Q
        vxx = -2.0 * g * P * np.ones_like(y)
    return vx, vxx


def value_time_derivative_rederived(params: MarketParams, pref: Preference, t, x):
    """V_t of the rederived value: 2 gamma P (B z^2 + A z + C) with z = y + A s."""
    k = hjb_constants(params)
    g = pref.gamma
    s = _horizon(pref, t)
    z = np.asarray(x, dtype=float) - 0.5 / g + k.A * s
    P = np.exp(2.0 * k.B * s)
    return 2.0 * g * P * (k.B * z * z + k.A * z + k.C)


class UnconstrainedValue:
    """V(t, x) in one mode, bundled with whatever partials are known analytically."""

    def __init__(self, params: MarketParams, pref: Preference, mode: Mode = Mode.PAPER):
        self.params, self.pref, self.mode = params, pref, Mode(mode)

    def __call__(self, t, x):
        return value_unconstrained(self.params, self.pref, t, x, self.mode)

    def dx(self, t, x):
        return value_partials(self.params, self.pref, t, x, self.mode)[0]

    def dxx(self, t, x):
        return value_partials(self.params, self.pref, t, x, self.mode)[1]

    @property
    def dt(self):
        if self.mode is Mode.REDERIVED:
            return lambda t, x: value_time_derivative_rederived(self.params, self.pref, t, x)
        return None  # the printed formula has no consistent analytic V_t

    def policy(self):
        params, pref, mode = self.params, self.pref, self.mode
        return lambda t, x: optimal_f_unconstrained(params, pref, t, x, mode)
