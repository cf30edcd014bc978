"""Market primitives: contract types, payoff, exercise-region driver,
exact GBM path simulation and the lognormal transition density."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class OptionKind(enum.Enum):
    CALL = "call"
    PUT = "put"


@dataclass(frozen=True)
class MarketParams:
    """Constant-coefficient market: rate, dividend yield, volatility, horizon."""

    r: float
    d: float
    sigma: float
    T: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.T <= 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if self.r < 0:
            raise ValueError(f"r must be nonnegative, got {self.r}")
        if self.d < 0:
            raise ValueError(f"d must be nonnegative, got {self.d}")


@dataclass(frozen=True)
class OptionSpec:
    kind: OptionKind
    strike: float

    def __post_init__(self):
        if not isinstance(self.kind, OptionKind):
            object.__setattr__(self, "kind", OptionKind(self.kind))
        if self.strike <= 0:
            raise ValueError(f"strike must be positive, got {self.strike}")


@dataclass(frozen=True)
class EvalPoint:
    """Start time and spot price at which a value is requested."""

    s: float
    x: float

    def __post_init__(self):
        if self.s < 0:
            raise ValueError(f"start time must be nonnegative, got {self.s}")
        if self.x < 0:
            raise ValueError(f"spot must be nonnegative, got {self.x}")


@dataclass(frozen=True)
class TimeSchedule:
    """Strictly increasing time grid from the start time to expiry."""

    times: np.ndarray
    policy: str = "uniform"

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("schedule needs at least two times")
        if not np.all(np.diff(times) > 0):
            raise ValueError("schedule times must be strictly increasing")
        times = times.copy()
        times.flags.writeable = False
        object.__setattr__(self, "times", times)

    @classmethod
    def uniform(cls, start: float, end: float, n_steps: int) -> "TimeSchedule":
        if n_steps < 1:
            raise ValueError("need at least one step")
        if end <= start:
            raise ValueError("end must exceed start")
        return cls(np.linspace(start, end, n_steps + 1), policy="uniform")

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)


@dataclass(frozen=True)
class PathBundle:
    """Simulated stock paths on a schedule, with full RNG provenance."""

    schedule: TimeSchedule
    values: np.ndarray  # (n_paths, n_times)
    seed: int
    block_size: int = 4096
    scheme: str = "exact-lognormal"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != self.schedule.times.size:
            raise ValueError("values must be (n_paths, n_times)")
        if np.any(values < 0):
            raise ValueError("stock paths must be nonnegative")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]


def indicator_slack(strike: float) -> float:
    """Floating-point slack for the inclusive contact indicator y <= g(x)."""
    return 1e-12 * max(1.0, strike)


def payoff(spec: OptionSpec, x):
    """Intrinsic value: (x-K)^+ for a call, (K-x)^+ for a put."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("price must be nonnegative")
    if spec.kind is OptionKind.CALL:
        out = np.maximum(x - spec.strike, 0.0)
    else:
        out = np.maximum(spec.strike - x, 0.0)
    return out if out.ndim else float(out)


def exercise_rate(spec: OptionSpec, params: MarketParams, x):
    """Cash-flow rate earned while exercised: (d*x - r*K)^+ call, (r*K - d*x)^+ put."""
    x = np.asarray(x, dtype=float)
    if spec.kind is OptionKind.CALL:
        out = np.maximum(params.d * x - params.r * spec.strike, 0.0)
    else:
        out = np.maximum(params.r * spec.strike - params.d * x, 0.0)
    return out if out.ndim else float(out)


def driver_gain(spec: OptionSpec, params: MarketParams, x, y):
    """Discontinuous driver: exercise_rate gated by the inclusive indicator y <= g(x)."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("price must be nonnegative")
    y = np.asarray(y, dtype=float)
    active = y <= payoff(spec, x) + indicator_slack(spec.strike)
    out = np.where(active, exercise_rate(spec, params, x), 0.0)
    return out if out.ndim else float(out)


def full_driver(spec: OptionSpec, params: MarketParams, x, y):
    """Complete BSDE driver -r*y + driver_gain(x, y)."""
    y = np.asarray(y, dtype=float)
    out = -params.r * y + driver_gain(spec, params, x, y)
    return out if out.ndim else float(out)


def transition_density(params: MarketParams, s: float, x: float, t: float, y):
    """Lognormal transition density of GBM with drift (r - d) and volatility sigma.

    Zero for y <= 0. Vectorized over y.
    """
    if t <= s:
        raise ValueError("need t > s")
    if x <= 0:
        raise ValueError("need x > 0")
    y = np.asarray(y, dtype=float)
    tau = t - s
    sig2 = params.sigma**2
    pos = y > 0
    yp = np.where(pos, y, 1.0)
    z = np.log(yp / x) - (params.r - params.d - 0.5 * sig2) * tau
    dens = np.exp(-z * z / (2.0 * sig2 * tau)) / (
        yp * params.sigma * math.sqrt(2.0 * math.pi * tau)
    )
    out = np.where(pos, dens, 0.0)
    return out if out.ndim else float(out)


def _fill_block(rng, x0, drift_dt, vol_dt, n_paths):
    normals = rng.standard_normal((n_paths, drift_dt.size))
    log_incr = drift_dt[None, :] + vol_dt[None, :] * normals
    values = np.empty((n_paths, drift_dt.size + 1))
    values[:, 0] = x0
    values[:, 1:] = x0 * np.exp(np.cumsum(log_incr, axis=1))
    return values


def simulate_paths(
    params: MarketParams,
    point: EvalPoint,
    schedule: TimeSchedule,
    n_paths: int,
    seed: int,
    block_size: int = 4096,
) -> PathBundle:
    """Exact lognormal GBM stepping from (s, x) along the schedule.

    Paths are generated in blocks, each drawing from its own Philox substream,
    so results do not depend on how blocks are scheduled across workers.
    """
    if n_paths < 1:
        raise ValueError("need at least one path")
    if abs(schedule.start - point.s) > 1e-12 * max(1.0, abs(point.s)):
        raise ValueError("schedule must start at the evaluation time")
    dt = schedule.dt
    drift_dt = (params.r - params.d - 0.5 * params.sigma**2) * dt
    vol_dt = params.sigma * np.sqrt(dt)

    values = np.empty((n_paths, schedule.times.size))
    if point.x == 0.0:
        values[:] = 0.0
    else:
        base = np.random.Philox(key=seed)
        n_blocks = (n_paths + block_size - 1) // block_size
        for b in range(n_blocks):
            lo = b * block_size
            hi = min(lo + block_size, n_paths)
            rng = np.random.Generator(base.jumped(b))
            values[lo:hi] = _fill_block(rng, point.x, drift_dt, vol_dt, hi - lo)
    return PathBundle(schedule=schedule, values=values, seed=seed, block_size=block_size)


def brownian_increments(params: MarketParams, bundle: PathBundle) -> np.ndarray:
    """Recover the driving Brownian increments from exact-lognormal paths."""
    if bundle.scheme != "exact-lognormal":
        raise ValueError("increments only recoverable from exact-lognormal paths")
    dt = bundle.schedule.dt
    drift_dt = (params.r - params.d - 0.5 * params.sigma**2) * dt
    log_incr = np.log(bundle.values[:, 1:] / bundle.values[:, :-1])
    return (log_incr - drift_dt[None, :]) / params.sigma
