"""Independent pricing oracles: CRR binomial tree and quadrature European valuer."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.stats import norm

from .model import EvalPoint, MarketParams, OptionKind, OptionSpec, payoff


class OracleError(RuntimeError):
    """Raised when an oracle cannot produce a trustworthy value."""


@dataclass(frozen=True)
class TreeConfig:
    steps: int = 20000
    parameterization: str = "CRR"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.parameterization != "CRR":
            raise ValueError(f"unsupported parameterization {self.parameterization!r}")


def _tree_price(
    params: MarketParams,
    spec: OptionSpec,
    point: EvalPoint,
    cfg: TreeConfig,
    american: bool,
) -> float:
    tau = params.T - point.s
    if tau <= 0:
        return payoff(spec, point.x)
    n = cfg.steps
    dt = tau / n
    sig_sqdt = params.sigma * math.sqrt(dt)
    if sig_sqdt > 300.0:
        raise OracleError(f"step volatility {sig_sqdt:.3g} overflows the up factor")
    up = math.exp(sig_sqdt)
    down = 1.0 / up
    growth = math.exp((params.r - params.d) * dt)
    p = (growth - down) / (up - down)
    if not 0.0 < p < 1.0:
        raise OracleError(
            f"risk-neutral probability {p:.6g} outside (0,1); "
            "reduce the step size or check parameter magnitudes"
        )
    disc = math.exp(-params.r * dt)

    # terminal stock values, lowest node first
    j = np.arange(n + 1)
    stock = point.x * np.exp((2 * j - n) * sig_sqdt)
    values = payoff(spec, stock)
    for i in range(n - 1, -1, -1):
        values = disc * (p * values[1 : i + 2] + (1.0 - p) * values[: i + 1])
        if american:
            stock = stock[: i + 1] * up
            values = np.maximum(values, payoff(spec, stock))
    price = float(values[0])
    if not math.isfinite(price):
        raise OracleError("tree produced a non-finite value; parameters too extreme")
    return price


def tree_price_american(
    params: MarketParams, spec: OptionSpec, point: EvalPoint, cfg: TreeConfig
) -> float:
    """CRR backward induction with the early-exercise max at every node."""
    return _tree_price(params, spec, point, cfg, american=True)


def tree_price_european(
    params: MarketParams, spec: OptionSpec, point: EvalPoint, cfg: TreeConfig
) -> float:
    """Same lattice without early exercise: discounted expectation of the payoff."""
    return _tree_price(params, spec, point, cfg, american=False)


def oracle_price(
    params: MarketParams,
    spec: OptionSpec,
    point: EvalPoint,
    steps: int = 20000,
    american: bool = True,
) -> float:
    """Reference value: Richardson extrapolation of the (steps/2, steps) CRR pair."""
    half = _tree_price(params, spec, point, TreeConfig(steps=steps // 2), american)
    full = _tree_price(params, spec, point, TreeConfig(steps=steps), american)
    return 2.0 * full - half


def _d1_d2(params: MarketParams, strike: float, tau, x):
    v = params.sigma * np.sqrt(tau)
    d1 = (np.log(x / strike) + (params.r - params.d + 0.5 * params.sigma**2) * tau) / v
    return d1, d1 - v


def european_closed_form(params: MarketParams, spec: OptionSpec, t, x) -> np.ndarray:
    """Closed-form European value at time t and spot x (vectorized).

    Used as a control variate inside regressions; the quadrature and tree
    routes remain the independent oracles.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    tau = np.maximum(params.T - t, 0.0)
    expired = tau <= 1e-14
    zero_spot = x <= 0.0
    tau_s = np.where(expired, 1.0, tau)
    x_s = np.where(zero_spot, 1.0, x)
    d1, d2 = _d1_d2(params, spec.strike, tau_s, x_s)
    df_r = np.exp(-params.r * tau_s)
    df_d = np.exp(-params.d * tau_s)
    if spec.kind is OptionKind.CALL:
        val = x_s * df_d * norm.cdf(d1) - spec.strike * df_r * norm.cdf(d2)
        val = np.where(zero_spot, 0.0, val)
    else:
        val = spec.strike * df_r * norm.cdf(-d2) - x_s * df_d * norm.cdf(-d1)
        val = np.where(zero_spot, spec.strike * df_r, val)
    val = np.where(expired, payoff(spec, np.maximum(x, 0.0)), val)
    return val if val.ndim else float(val)


def european_delta(params: MarketParams, spec: OptionSpec, t, x) -> np.ndarray:
    """Closed-form European delta at time t and spot x (vectorized)."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    tau = np.maximum(params.T - t, 0.0)
    degenerate = (tau <= 1e-14) | (x <= 0.0)
    tau_s = np.where(degenerate, 1.0, tau)
    x_s = np.where(degenerate, 1.0, x)
    d1, _ = _d1_d2(params, spec.strike, tau_s, x_s)
    df_d = np.exp(-params.d * tau_s)
    if spec.kind is OptionKind.CALL:
        delta = df_d * norm.cdf(d1)
        at_expiry = (x > spec.strike).astype(float)
    else:
        delta = -df_d * norm.cdf(-d1)
        at_expiry = -(x < spec.strike).astype(float)
    delta = np.where(degenerate, at_expiry, delta)
    return delta if delta.ndim else float(delta)


def european_quadrature(
    params: MarketParams, spec: OptionSpec, point: EvalPoint, tol: float = 1e-10
) -> float:
    """Discounted expected payoff by adaptive Gaussian quadrature.

    Integrates g against the lognormal terminal density, substituting
    y = x*exp(m + v*z) so the integrand is payoff times the standard
    normal density over z.
    """
    if point.x <= 0:
        raise ValueError("need x > 0")
    tau = params.T - point.s
    if tau <= 0:
        return payoff(spec, point.x)
    m = (params.r - params.d - 0.5 * params.sigma**2) * tau
    v = params.sigma * math.sqrt(tau)

    def integrand(z):
        if abs(z) > 39.0:  # normal density underflows; avoids exp overflow
            return 0.0
        y = point.x * math.exp(m + v * z)
        return payoff(spec, y) * norm.pdf(z)

    # split at the strike's z-coordinate where the payoff kinks
    z_k = (math.log(spec.strike / point.x) - m) / v
    pieces = []
    for lo, hi in ((-np.inf, z_k), (z_k, np.inf)):
        val, err = integrate.quad(integrand, lo, hi, epsabs=tol, limit=200)
        if err > 1e-6 * max(1.0, abs(val)):
            raise OracleError(f"quadrature error estimate {err:.3g} did not converge")
        pieces.append(val)
    return math.exp(-params.r * tau) * sum(pieces)
