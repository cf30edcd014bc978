"""Finite-difference solvers on a log-price grid: projected-SOR obstacle solve,
penalized solve, semilinear solve with the discontinuous source, plus boundary
extraction, reflection-measure reconstruction and the exercise-premium quadrature."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.integrate import simpson
from scipy.linalg import solve_banded
from scipy.stats import norm

from .model import (
    EvalPoint,
    MarketParams,
    OptionKind,
    OptionSpec,
    exercise_rate,
    indicator_slack,
    payoff,
)


class SolverError(RuntimeError):
    """Raised when an iterative solve fails to converge."""


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    n_space: int = 800
    n_time: int = 800
    stepping: str = "implicit-euler"  # or "cn-rannacher"

    def __post_init__(self):
        if not 0 < self.x_min < self.x_max:
            raise ValueError("need 0 < x_min < x_max")
        if self.n_space < 3:
            raise ValueError("need at least 3 interior nodes")
        if self.n_time < 1:
            raise ValueError("need at least 1 time step")
        if self.stepping not in ("implicit-euler", "cn-rannacher"):
            raise ValueError(f"unknown stepping {self.stepping!r}")

    @classmethod
    def default(
        cls,
        params: MarketParams,
        spec: OptionSpec,
        n_space: int = 800,
        n_time: int = 800,
        width: float = 6.0,
        stepping: str = "implicit-euler",
    ) -> "GridSpec":
        span = width * params.sigma * math.sqrt(params.T)
        return cls(
            x_min=spec.strike * math.exp(-span),
            x_max=spec.strike * math.exp(span),
            n_space=n_space,
            n_time=n_time,
            stepping=stepping,
        )

    def validate_strike(self, strike: float) -> None:
        if not self.x_min < strike < self.x_max:
            raise ValueError("grid must bracket the strike")


@dataclass(frozen=True)
class WeightSpec:
    """Polynomial decay weight (1+x^2)^(-alpha) for the diagnostic L2 norm."""

    alpha: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0.75:
            raise ValueError("alpha must exceed 3/4 for x^2-integrability")

    def __call__(self, x):
        return (1.0 + np.asarray(x, dtype=float) ** 2) ** (-self.alpha)


@dataclass
class PdeSolution:
    grid: GridSpec
    times: np.ndarray  # (n_time+1,)
    x: np.ndarray  # (n_nodes,) node prices, boundaries included
    u: np.ndarray  # (n_time+1, n_nodes)
    contact_mask: np.ndarray  # bool, same shape as u
    boundary: np.ndarray  # (n_time+1,) price level, nan for "none"
    method: str
    spec: OptionSpec
    params: MarketParams
    diagnostics: dict = field(default_factory=dict)

    def value(self, s: float, x) -> float | np.ndarray:
        """Bilinear interpolation of the surface at (s, x), linear in (t, ln x)."""
        x = np.asarray(x, dtype=float)
        if np.any((x < self.x[0]) | (x > self.x[-1])):
            raise ValueError("x outside the grid")
        if not self.times[0] <= s <= self.times[-1]:
            raise ValueError("s outside the grid")
        xi = np.log(x)
        xi_nodes = np.log(self.x)
        k = min(np.searchsorted(self.times, s, side="right"), self.times.size - 1)
        k0, k1 = k - 1, k
        lo = np.interp(xi, xi_nodes, self.u[k0])
        hi = np.interp(xi, xi_nodes, self.u[k1])
        w = (s - self.times[k0]) / (self.times[k1] - self.times[k0])
        out = (1.0 - w) * lo + w * hi
        return out if out.ndim else float(out)

    def space_gradient(self) -> np.ndarray:
        """du/dx on the grid, central differences interior, one-sided at edges."""
        return np.gradient(self.u, np.log(self.x), axis=1) / self.x[None, :]


@dataclass
class BoundaryResult:
    times: np.ndarray
    levels: np.ndarray  # nan for "none"
    contact_counts: np.ndarray
    violations: list  # (time index, reason) for non-interval contact sets

    @property
    def clean(self) -> bool:
        return not self.violations


@dataclass
class MeasureDensity:
    """Density of the reflection measure per unit time x price on the grid."""

    times: np.ndarray
    x: np.ndarray
    density: np.ndarray  # formula route: exercise_rate on the contact set
    residual: np.ndarray  # discrete-residual route
    rel_l1_discrepancy: float


# --- discrete operator machinery -------------------------------------------


def _grid_axes(grid: GridSpec):
    xi = np.linspace(math.log(grid.x_min), math.log(grid.x_max), grid.n_space + 2)
    return xi, np.exp(xi)


def _operator_coeffs(params: MarketParams, dxi: float):
    a = 0.5 * params.sigma**2
    b = params.r - params.d - 0.5 * params.sigma**2
    c_lo = a / dxi**2 - b / (2.0 * dxi)
    c_di = -2.0 * a / dxi**2
    c_up = a / dxi**2 + b / (2.0 * dxi)
    return c_lo, c_di, c_up


def _boundary_values(params: MarketParams, spec: OptionSpec, t: float, x_lo, x_hi):
    tau = params.T - t
    if spec.kind is OptionKind.PUT:
        return payoff(spec, x_lo), 0.0
    hi = x_hi * math.exp(-params.d * tau) - spec.strike * math.exp(-params.r * tau)
    return 0.0, max(hi, payoff(spec, x_hi))


def _substeps(stepping: str, steps_done: int, t_hi: float, t_lo: float):
    """Sub-intervals (t_from, t_to, theta) covering one macro step backward."""
    if stepping == "cn-rannacher" and steps_done < 2:
        mid = 0.5 * (t_hi + t_lo)
        return [(t_hi, mid, 1.0), (mid, t_lo, 1.0)]
    theta = 1.0 if stepping == "implicit-euler" else 0.5
    return [(t_hi, t_lo, theta)]


def _implicit_system(params, spec, coeffs, u_full, t_from, t_to, theta, x):
    """Tridiagonal (lower, diag, upper) and rhs for one backward substep.

    Boundary (Dirichlet) values enter the rhs; the unknowns are interior nodes.
    """
    c_lo, c_di, c_up = coeffs
    dt = t_from - t_to
    n_int = x.size - 2
    lower = np.full(n_int, -theta * dt * c_lo)
    diag = np.full(n_int, 1.0 + theta * dt * (params.r - c_di))
    upper = np.full(n_int, -theta * dt * c_up)

    rhs = u_full[1:-1].copy()
    if theta < 1.0:
        w = (1.0 - theta) * dt
        a_u = c_lo * u_full[:-2] + c_di * u_full[1:-1] + c_up * u_full[2:]
        rhs += w * (a_u - params.r * u_full[1:-1])
    left, right = _boundary_values(params, spec, t_to, x[0], x[-1])
    rhs[0] += theta * dt * c_lo * left
    rhs[-1] += theta * dt * c_up * right
    return (lower, diag, upper), rhs, (left, right), dt


def _solve_tridiag(tri, rhs):
    lower, diag, upper = tri
    n = diag.size
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, rhs)


@njit(cache=True)
def _psor_sweeps(lower, diag, upper, rhs, obstacle, u, omega, tol, max_sweeps):
    """Projected SOR on the interior unknowns; returns (sweeps, residual).

    sweeps == -1 flags non-convergence; residual is the worst complementarity
    defect min(u - obstacle, M u - rhs) in sup norm.
    """
    n = u.shape[0]
    res = 0.0
    for sweep in range(max_sweeps):
        for i in range(n):
            yi = rhs[i]
            if i > 0:
                yi -= lower[i] * u[i - 1]
            if i < n - 1:
                yi -= upper[i] * u[i + 1]
            yi /= diag[i]
            un = u[i] + omega * (yi - u[i])
            if un < obstacle[i]:
                un = obstacle[i]
            u[i] = un
        res = 0.0
        for i in range(n):
            mu = diag[i] * u[i]
            if i > 0:
                mu += lower[i] * u[i - 1]
            if i < n - 1:
                mu += upper[i] * u[i + 1]
            ri = min(u[i] - obstacle[i], mu - rhs[i])
            if abs(ri) > res:
                res = abs(ri)
        if res <= tol:
            return sweep + 1, res
    return -1, res


def _contact_mask(u, g, strike):
    eps = 1e-7 * strike
    return (np.abs(u - g) <= eps) & (g > 0)


def _finalize(grid, times, x, u, spec, params, method, diagnostics):
    g = payoff(spec, x)
    mask = _contact_mask(u, g[None, :], spec.strike)
    levels, counts, _ = _boundary_scan(mask, x, spec.kind)
    return PdeSolution(
        grid=grid,
        times=times,
        x=x,
        u=u,
        contact_mask=mask,
        boundary=levels,
        method=method,
        spec=spec,
        params=params,
        diagnostics=diagnostics,
    )


# --- solvers ----------------------------------------------------------------


def solve_obstacle(
    params: MarketParams,
    spec: OptionSpec,
    grid: GridSpec,
    omega: float = 1.5,
    tol: float | None = None,
    max_sweeps: int = 10000,
) -> PdeSolution:
    """Backward stepping with the linear complementarity problem solved by
    projected SOR at each step; u >= payoff holds exactly by projection."""
    grid.validate_strike(spec.strike)
    xi, x = _grid_axes(grid)
    times = np.linspace(0.0, params.T, grid.n_time + 1)
    coeffs = _operator_coeffs(params, xi[1] - xi[0])
    g = payoff(spec, x)
    g_int = g[1:-1]
    tol = 1e-9 * spec.strike if tol is None else tol

    u = np.empty((grid.n_time + 1, x.size))
    u[-1] = g
    worst_res = 0.0
    max_used = 0
    for k in range(grid.n_time - 1, -1, -1):
        u_full = u[k + 1].copy()
        for t_from, t_to, theta in _substeps(grid.stepping, grid.n_time - 1 - k, times[k + 1], times[k]):
            tri, rhs, bc, _ = _implicit_system(params, spec, coeffs, u_full, t_from, t_to, theta, x)
            u_int = np.maximum(u_full[1:-1], g_int)
            sweeps, res = _psor_sweeps(*tri, rhs, g_int, u_int, omega, tol, max_sweeps)
            if sweeps < 0:
                raise SolverError(
                    f"PSOR failed at t={t_to:.6g}: residual {res:.3g} > tol {tol:.3g} "
                    f"after {max_sweeps} sweeps"
                )
            max_used = max(max_used, sweeps)
            worst_res = max(worst_res, res)
            u_full = np.concatenate(([bc[0]], u_int, [bc[1]]))
        u[k] = u_full
    diag = {"psor_max_sweeps": max_used, "psor_worst_residual": worst_res, "psor_tol": tol}
    return _finalize(grid, times, x, u, spec, params, "obstacle", diag)


def solve_penalized(
    params: MarketParams,
    spec: OptionSpec,
    grid: GridSpec,
    n: float,
    tol: float | None = None,
    max_newton: int = 100,
) -> PdeSolution:
    """Penalty approximation: the constraint is replaced by the stiff source
    n*(u - g)^-, solved per step by semismooth Newton on the active set."""
    if n < 1:
        raise ValueError("penalty parameter must be >= 1")
    grid.validate_strike(spec.strike)
    xi, x = _grid_axes(grid)
    times = np.linspace(0.0, params.T, grid.n_time + 1)
    coeffs = _operator_coeffs(params, xi[1] - xi[0])
    g = payoff(spec, x)
    g_int = g[1:-1]
    tol = 1e-10 * spec.strike if tol is None else tol

    u = np.empty((grid.n_time + 1, x.size))
    u[-1] = g
    newton_max = 0
    for k in range(grid.n_time - 1, -1, -1):
        u_full = u[k + 1].copy()
        for t_from, t_to, theta in _substeps(grid.stepping, grid.n_time - 1 - k, times[k + 1], times[k]):
            tri, rhs, bc, dt = _implicit_system(params, spec, coeffs, u_full, t_from, t_to, theta, x)
            lower, diag_, upper = tri
            u_int = u_full[1:-1].copy()
            converged = False
            active = u_int < g_int
            for it in range(max_newton):
                pen = dt * n * active
                u_new = _solve_tridiag((lower, diag_ + pen, upper), rhs + pen * g_int)
                new_active = u_new < g_int
                residual = (
                    diag_ * u_new
                    + np.concatenate(([0.0], lower[1:] * u_new[:-1]))
                    + np.concatenate((upper[:-1] * u_new[1:], [0.0]))
                    - dt * n * np.maximum(g_int - u_new, 0.0)
                    - rhs
                )
                u_int = u_new
                if np.array_equal(new_active, active) and np.max(np.abs(residual)) <= tol:
                    converged = True
                    newton_max = max(newton_max, it + 1)
                    break
                active = new_active
            if not converged:
                raise SolverError(
                    f"penalty Newton diverged at t={t_to:.6g} with n={n:g}"
                )
            u_full = np.concatenate(([bc[0]], u_int, [bc[1]]))
        u[k] = u_full
    diag = {"newton_max_iterations": newton_max, "penalty": n, "newton_tol": tol}
    return _finalize(grid, times, x, u, spec, params, f"penalized({n:g})", diag)


def solve_semilinear(
    params: MarketParams,
    spec: OptionSpec,
    grid: GridSpec,
    tol: float | None = None,
    max_active_set: int = 50,
    max_damped: int = 300,
) -> PdeSolution:
    """Semilinear formulation: the discontinuous source replaces the obstacle
    constraint; no projection is performed, the obstacle property must emerge.

    Each step fixes the exercise indicator from the previous iterate, solves
    the linear system and repeats; cells straddling the free boundary flicker,
    which is resolved by damping the indicator weight (the damped limit plays
    the role of the fractional multiplier on the contact boundary).
    """
    grid.validate_strike(spec.strike)
    xi, x = _grid_axes(grid)
    times = np.linspace(0.0, params.T, grid.n_time + 1)
    coeffs = _operator_coeffs(params, xi[1] - xi[0])
    g = payoff(spec, x)
    g_int = g[1:-1]
    slack = indicator_slack(spec.strike)
    tol = 1e-10 * spec.strike if tol is None else tol
    # the value function is strictly positive, so the source cannot act where
    # the payoff vanishes; gating by g > 0 keeps truncation-boundary zeros out
    rate_int = exercise_rate(spec, params, x[1:-1]) * (g_int > 0)

    u = np.empty((grid.n_time + 1, x.size))
    u[-1] = g
    worst_iters = 0
    for k in range(grid.n_time - 1, -1, -1):
        u_full = u[k + 1].copy()
        for t_from, t_to, theta in _substeps(grid.stepping, grid.n_time - 1 - k, times[k + 1], times[k]):
            tri, rhs, bc, dt = _implicit_system(params, spec, coeffs, u_full, t_from, t_to, theta, x)
            w = ((u_full[1:-1] <= g_int + slack) & (g_int > 0)).astype(float)
            seen = {w.tobytes()}
            u_int = None
            eta = 1.0
            it = 0
            while True:
                it += 1
                u_prev = u_int
                u_int = _solve_tridiag(tri, rhs + dt * rate_int * w)
                new_ind = ((u_int <= g_int + slack) & (g_int > 0)).astype(float)
                if np.array_equal(new_ind, w):
                    break
                if u_prev is not None and np.max(np.abs(u_int - u_prev)) <= tol:
                    break
                if it >= max_active_set + max_damped:
                    raise SolverError(
                        f"semilinear source iteration still cycling at t={t_to:.6g} "
                        f"after {it} iterations"
                    )
                key = new_ind.tobytes()
                if key in seen or it >= max_active_set:
                    # a revisited active set means cells straddle the free
                    # boundary; shrink the relaxation so the indicator weight
                    # bisects toward the fractional contact multiplier
                    eta *= 0.5
                else:
                    seen.add(key)
                w = w + eta * (new_ind - w)
            worst_iters = max(worst_iters, it)
            u_full = np.concatenate(([bc[0]], u_int, [bc[1]]))
        u[k] = u_full
    diag = {"source_max_iterations": worst_iters, "fixed_point_tol": tol}
    return _finalize(grid, times, x, u, spec, params, "semilinear", diag)


# --- derived quantities -----------------------------------------------------


def _boundary_scan(mask: np.ndarray, x: np.ndarray, kind: OptionKind):
    """Per-slice free endpoint of the contact interval; reports structure breaks."""
    n_t, n_x = mask.shape
    levels = np.full(n_t, np.nan)
    counts = mask.sum(axis=1)
    violations = []
    xi = np.log(x)
    for k in range(n_t):
        idx = np.flatnonzero(mask[k])
        if idx.size == 0:
            continue
        contiguous = idx[-1] - idx[0] + 1 == idx.size
        if kind is OptionKind.PUT:
            anchored = idx[0] == 0
            edge = idx[-1]
            if contiguous and anchored:
                if edge == n_x - 1:
                    levels[k] = x[-1]
                else:
                    levels[k] = math.exp(0.5 * (xi[edge] + xi[edge + 1]))
                continue
        else:
            anchored = idx[-1] == n_x - 1
            edge = idx[0]
            if contiguous and anchored:
                if edge == 0:
                    levels[k] = x[0]
                else:
                    levels[k] = math.exp(0.5 * (xi[edge - 1] + xi[edge]))
                continue
        reason = "not contiguous" if not contiguous else "not anchored at the in-the-money edge"
        violations.append((k, reason))
    return levels, counts, violations


def extract_boundary(sol: PdeSolution) -> BoundaryResult:
    """Exercise boundary per time slice, with structural validation.

    The contact set of each slice must be a single interval touching the
    in-the-money end of the grid; anything else is reported, not repaired.
    """
    levels, counts, violations = _boundary_scan(sol.contact_mask, sol.x, sol.spec.kind)
    return BoundaryResult(
        times=sol.times, levels=levels, contact_counts=counts, violations=violations
    )


def reconstruct_measure(
    sol: PdeSolution, params: MarketParams, spec: OptionSpec
) -> MeasureDensity:
    """Reflection-measure density on the grid, two independent ways.

    (i) the discrete parabolic residual the complementarity solve leaves
    behind, and (ii) the closed-form rate on the contact set. The returned
    density is (ii); (i) is kept for the diagnostic comparison.
    """
    if not sol.method.startswith("obstacle"):
        raise ValueError("measure reconstruction expects an obstacle solution")
    grid = sol.grid
    xi = np.log(sol.x)
    coeffs = _operator_coeffs(params, xi[1] - xi[0])
    n_t = sol.times.size
    residual = np.zeros_like(sol.u)
    for k in range(n_t - 1):
        subs = _substeps(grid.stepping, grid.n_time - 1 - k, sol.times[k + 1], sol.times[k])
        # residual densities of substeps average to the macro-step density
        if len(subs) > 1:
            subs = [(sol.times[k + 1], sol.times[k], 1.0)]
        t_from, t_to, theta = subs[0]
        tri, rhs, _, dt = _implicit_system(
            params, spec, coeffs, sol.u[k + 1].copy(), t_from, t_to, theta, sol.x
        )
        lower, diag_, upper = tri
        u_int = sol.u[k][1:-1]
        mu = (
            diag_ * u_int
            + np.concatenate(([0.0], lower[1:] * u_int[:-1]))
            + np.concatenate((upper[:-1] * u_int[1:], [0.0]))
            - rhs
        )
        residual[k, 1:-1] = mu / dt

    density = exercise_rate(spec, params, sol.x)[None, :] * sol.contact_mask
    density[-1] = 0.0

    # contact interior: contact cells whose spatial neighbors are also contact,
    # excluding the terminal slice
    interior = sol.contact_mask.copy()
    interior[:, 1:-1] &= sol.contact_mask[:, :-2] & sol.contact_mask[:, 2:]
    interior[:, 0] = interior[:, -1] = False
    interior[-1] = False
    denom = np.abs(density[interior]).sum()
    if denom > 0:
        rel = np.abs(residual[interior] - density[interior]).sum() / denom
    else:
        rel = 0.0
    return MeasureDensity(
        times=sol.times,
        x=sol.x,
        density=density,
        residual=residual,
        rel_l1_discrepancy=float(rel),
    )


def eep_premium(
    params: MarketParams,
    spec: OptionSpec,
    point: EvalPoint,
    boundary: BoundaryResult,
    n_quad: int = 4096,
) -> float:
    """Early-exercise premium: time quadrature of the discounted expected
    exercise-region cash flow, inner price integral in closed form."""
    if point.x <= 0:
        raise ValueError("need x > 0")
    r, d, sig, strike = params.r, params.d, params.sigma, spec.strike
    valid = ~np.isnan(boundary.levels)
    if not np.any(valid):
        return 0.0
    bt, bl = boundary.times[valid], boundary.levels[valid]

    t = np.linspace(point.s, params.T, n_quad + 1)
    tau = np.maximum(t - point.s, 1e-14)
    # boundary level at each quadrature time; nan regions contribute nothing
    b = np.interp(t, bt, bl, left=np.nan, right=np.nan)
    inside_gap = (t < bt[0]) | (t > bt[-1])
    b[inside_gap] = np.nan

    v = sig * np.sqrt(tau)
    mu = (r - d - 0.5 * sig**2) * tau
    grow = np.exp((r - d) * tau)
    disc = np.exp(-r * tau)

    def z_of(level):
        return (np.log(level / point.x) - mu) / v

    integrand = np.zeros_like(t)
    ok = ~np.isnan(b) & (b > 0)
    if spec.kind is OptionKind.PUT:
        b_eff = b.copy()
        if d > 0:
            b_eff = np.minimum(b_eff, r * strike / d)
        z = z_of(np.where(ok, b_eff, 1.0))
        val = r * strike * norm.cdf(z) - d * point.x * grow * norm.cdf(z - v)
        integrand[ok] = (disc * val)[ok]
    else:
        b_eff = b.copy()
        if d > 0:
            b_eff = np.maximum(b_eff, r * strike / d)
            z = z_of(np.where(ok, b_eff, 1.0))
            val = d * point.x * grow * norm.cdf(v - z) - r * strike * norm.cdf(-z)
            integrand[ok] = (disc * val)[ok]
        # d == 0 call: the exercise-region cash flow (d*x - r*K)^+ vanishes
    premium = float(simpson(integrand, x=t))
    return max(premium, 0.0)


def weighted_norm(values: np.ndarray, x: np.ndarray, weight: WeightSpec, times=None) -> float:
    """Discrete weighted L2 norm: sqrt of the integral of v^2 * rho^2 over the
    grid (space only for a slice, space-time for a surface)."""
    values = np.asarray(values, dtype=float)
    w2 = weight(x) ** 2
    if values.ndim == 1:
        return float(math.sqrt(np.trapezoid(values**2 * w2, x)))
    if values.ndim == 2:
        if times is None:
            raise ValueError("a surface norm needs the time axis")
        inner = np.trapezoid(values**2 * w2[None, :], x, axis=1)
        return float(math.sqrt(np.trapezoid(inner, times)))
    raise ValueError("values must be 1-D or 2-D")
