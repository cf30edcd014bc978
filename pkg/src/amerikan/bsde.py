"""Monte Carlo backward schemes: reflected dynamic programming with
least-squares regression, the non-reflected scheme with the explicit
discontinuous driver, and the two routes to the increasing process.

All regressions run on discounted values and subtract the closed-form
European value as a control variate, so the fitted residual is the small,
smooth early-exercise correction rather than the full value function.
Per-time-slice quantities (payoffs, control variates, Brownian increments)
are computed column by column; only the value/continuation/K surfaces are
held in full, which keeps the large-path configurations inside a few GB."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .lattice import european_closed_form, european_delta
from .model import (
    EvalPoint,
    MarketParams,
    OptionKind,
    OptionSpec,
    PathBundle,
    exercise_rate,
    indicator_slack,
    payoff,
    simulate_paths,
)
from .pde import BoundaryResult, PdeSolution

EVAL_SEED_JUMP = 1 << 20  # Philox jump offset separating the low-bias path set


@dataclass(frozen=True)
class RegressionBasis:
    """Monomials in moneyness x/K up to `degree`, plus the payoff itself.

    Stopping-decision regressions use in-the-money paths only; there the
    payoff column is collinear with the affine monomials and is dropped.

    With `split_contact` the backward-recursion fits are piecewise: separate
    polynomials on the deep-contact region (below the running exercise
    boundary estimate), the band between boundary and strike, and the
    out-of-the-money region. A single global polynomial carries a systematic
    bias in the contact region that accumulates linearly in the number of
    steps when extracting the increasing process; the piecewise fit removes
    it because the deep-contact target is nearly affine."""

    degree: int = 3
    itm_only_stopping: bool = True
    split_contact: bool = True

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("degree must be >= 1")

    def design(self, spec: OptionSpec, x: np.ndarray, include_payoff: bool = True) -> np.ndarray:
        m = x / spec.strike
        cols = [m**k for k in range(self.degree + 1)]
        if include_payoff:
            cols.append(payoff(spec, x) / spec.strike)
        return np.column_stack(cols)

    def _pieces(self, spec: OptionSpec, x: np.ndarray, b_hint: float | None):
        itm = payoff(spec, x) > 0
        if not self.split_contact or b_hint is None or not np.isfinite(b_hint):
            return [itm, ~itm]
        if spec.kind is OptionKind.PUT:
            deep = itm & (x <= b_hint)
        else:
            deep = itm & (x >= b_hint)
        return [deep, itm & ~deep, ~itm]

    def piecewise_fit(
        self,
        spec: OptionSpec,
        x: np.ndarray,
        target: np.ndarray,
        b_hint: float | None,
        diagnostics: list,
        label: str,
        extra: np.ndarray | None = None,
    ) -> np.ndarray:
        """Least-squares projection of `target`, fitted per region with plain
        monomials (the payoff column is affine within each region) plus an
        optional extra column, e.g. the European value, which carries the
        curvature the low-degree monomials miss in the deep-contact region."""
        m = x / spec.strike
        fitted = np.zeros_like(target)
        for i, mask in enumerate(self._pieces(spec, x, b_hint)):
            ns = int(mask.sum())
            if ns == 0:
                continue
            if ns == 1:
                fitted[mask] = target[mask]
                continue
            deg = min(self.degree, ns - 2)
            cols = [m[mask] ** j for j in range(deg + 1)]
            if extra is not None and ns > deg + 3:
                cols.append(extra[mask])
            design = np.column_stack(cols)
            _, fitted[mask] = _fit(design, target[mask], diagnostics, f"{label}/piece{i}")
        return fitted

    def value_fit(self, spec, x, target, b_hint, diagnostics, label, extra=None) -> np.ndarray:
        """Piecewise fit of the (discounted) early-exercise premium target.

        The premium is nonnegative, so the fit is floored at zero; this stops
        polynomial tails in sparsely populated regions from pushing the
        continuation below the European value."""
        return np.maximum(
            self.piecewise_fit(spec, x, target, b_hint, diagnostics, label, extra=extra), 0.0
        )


@dataclass
class BsdeSolution:
    paths: PathBundle
    spec: OptionSpec
    params: MarketParams
    method: str  # "reflected-snell" | "driver-bsde"
    y: np.ndarray  # (paths, times)
    z: np.ndarray | None  # (paths, times)
    k: np.ndarray | None  # (paths, times), None for the driver scheme
    continuation: np.ndarray | None  # discounted regressed E[ybar_{k+1}|F_k]
    y0: float
    y0_stderr: float
    y0_high_bias: float | None
    diagnostics: dict = field(default_factory=dict)

    @property
    def discounts(self) -> np.ndarray:
        t = self.paths.schedule.times
        return np.exp(-self.params.r * (t - t[0]))


@dataclass
class BoundReport:
    """Pairwise check of the increasing-process increment bound."""

    max_violation: float
    violation_fraction: float
    n_pairs: int
    tolerance_per_step: float


@dataclass
class ResidualReport:
    probe_times: np.ndarray
    residuals: np.ndarray
    thresholds: np.ndarray

    @property
    def ok(self) -> bool:
        return bool(np.all(self.residuals <= self.thresholds))


@dataclass
class GradientReport:
    rel_l2: float
    n_times: int


def _fit(design: np.ndarray, target: np.ndarray, diagnostics: list, label: str):
    """Least-squares fit with rank monitoring; falls back to a truncated
    design on rank deficiency rather than returning garbage coefficients."""
    coef, _, rank, sv = np.linalg.lstsq(design, target, rcond=None)
    cond = sv[0] / sv[-1] if sv.size and sv[-1] > 0 else np.inf
    if rank < design.shape[1]:
        warnings.warn(f"rank-deficient regression at {label}; reducing basis")
        keep = max(min(rank, design.shape[1] - 1), 1)
        coef = np.zeros(design.shape[1])
        sub, *_ = np.linalg.lstsq(design[:, :keep], target, rcond=None)
        coef[:keep] = sub
    fitted = design @ coef
    ss_res = float(np.sum((target - fitted) ** 2))
    ss_tot = float(np.sum((target - target.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    diagnostics.append({"step": label, "cond": float(cond), "r2": r2})
    return coef, fitted


def _payoff_slope(spec: OptionSpec, x: np.ndarray) -> np.ndarray:
    if spec.kind is OptionKind.CALL:
        return (x > spec.strike).astype(float)
    return -(x < spec.strike).astype(float)


class _SliceCache:
    """Column-wise access to discounted payoff, control variates and Brownian
    increments along a path bundle, without materializing full surfaces."""

    def __init__(self, paths: PathBundle, spec: OptionSpec, params: MarketParams):
        self.x = paths.values
        self.t = paths.schedule.times
        self.dt = paths.schedule.dt
        self.spec = spec
        self.params = params
        self.disc = np.exp(-params.r * (self.t - self.t[0]))
        self._drift_dt = (params.r - params.d - 0.5 * params.sigma**2) * self.dt

    def g(self, k: int) -> np.ndarray:
        return payoff(self.spec, self.x[:, k])

    def gbar(self, k: int) -> np.ndarray:
        return self.disc[k] * self.g(k)

    def mbar(self, k: int) -> np.ndarray:
        return self.disc[k] * european_closed_form(
            self.params, self.spec, self.t[k], self.x[:, k]
        )

    def zbar_euro(self, k: int) -> np.ndarray:
        return (
            self.disc[k]
            * self.params.sigma
            * self.x[:, k]
            * european_delta(self.params, self.spec, self.t[k], self.x[:, k])
        )

    def dw(self, k: int) -> np.ndarray:
        log_incr = np.log(self.x[:, k + 1] / self.x[:, k])
        return (log_incr - self._drift_dt[k]) / self.params.sigma


def snell_lsmc(
    paths: PathBundle,
    spec: OptionSpec,
    params: MarketParams,
    basis: RegressionBasis,
    eval_paths: PathBundle | None = None,
    compute_z: bool = True,
) -> BsdeSolution:
    """Least-squares Monte Carlo dynamic programming for the reflected value.

    The in-sample recursion Y = max(continuation, payoff) gives the high-bias
    estimate; the reported price is the low-bias estimate from an independent
    path set following the fitted stopping rule."""
    if paths.n_paths < 2:
        raise ValueError("need at least two paths")
    sl = _SliceCache(paths, spec, params)
    x, t, dt, disc = sl.x, sl.t, sl.dt, sl.disc
    n_paths, n_times = x.shape

    diagnostics: list = []
    stop_coefs: list = [None] * n_times

    ybar = np.empty_like(x)
    cbar = np.empty_like(x)
    ybar[:, -1] = sl.gbar(-1)
    cbar[:, -1] = ybar[:, -1]
    cashflow = ybar[:, -1].copy()  # realized payoff along the fitted rule
    zbar = np.zeros_like(x) if compute_z else None

    mbar_next = sl.mbar(n_times - 1)
    b_hint: float | None = None  # exercise-boundary estimate from the later step
    for k in range(n_times - 2, 0, -1):
        mbar_k = sl.mbar(k)
        g_k = sl.g(k)
        gbar_k = disc[k] * g_k
        target = ybar[:, k + 1] - mbar_next
        fitted = basis.value_fit(
            spec, x[:, k], target, b_hint, diagnostics, f"value@{t[k]:.6g}",
            extra=mbar_k / spec.strike,
        )
        cbar[:, k] = fitted + mbar_k
        ybar[:, k] = np.maximum(cbar[:, k], gbar_k)
        contact = (g_k > 0) & (cbar[:, k] <= gbar_k)
        if np.any(contact):
            xc = x[contact, k]
            b_hint = float(xc.max() if spec.kind is OptionKind.PUT else xc.min())
        else:
            b_hint = None

        itm = g_k > 0 if basis.itm_only_stopping else np.ones(n_paths, bool)
        if itm.sum() > basis.degree + 2:
            s_design = basis.design(spec, x[itm, k], include_payoff=not basis.itm_only_stopping)
            coef, stop_fit = _fit(
                s_design, cashflow[itm] - mbar_k[itm], diagnostics, f"stop@{t[k]:.6g}"
            )
            stop_coefs[k] = coef
            exercise = itm.copy()
            exercise[itm] = gbar_k[itm] >= stop_fit + mbar_k[itm]
            cashflow[exercise] = gbar_k[exercise]
        if compute_z:
            zfit = basis.piecewise_fit(
                spec, x[:, k], target * sl.dw(k), b_hint, diagnostics, f"z@{t[k]:.6g}"
            )
            zbar[:, k] = zfit / dt[k] + sl.zbar_euro(k)
        mbar_next = mbar_k

    # all paths share the start state: plain means instead of regressions
    g_0 = float(sl.g(0)[0])
    cbar[:, 0] = ybar[:, 1].mean()
    ybar[:, 0] = max(cbar[0, 0], disc[0] * g_0)
    if compute_z:
        zbar[:, 0] = ((ybar[:, 1] - mbar_next) * sl.dw(0)).mean() / dt[0] + sl.zbar_euro(0)[0]
        zbar[:, -1] = disc[-1] * params.sigma * x[:, -1] * _payoff_slope(spec, x[:, -1])
    exercise_at_start = g_0 >= cbar[0, 0]
    if exercise_at_start:
        cashflow[:] = disc[0] * g_0
    y0_high = float(ybar[0, 0])

    if eval_paths is None:
        eval_paths = simulate_paths(
            params,
            EvalPoint(t[0], x[0, 0]),
            paths.schedule,
            n_paths,
            seed=paths.seed + EVAL_SEED_JUMP,
            block_size=paths.block_size,
        )
    low, low_se = _evaluate_stopping_rule(
        eval_paths, spec, params, basis, stop_coefs, exercise_at_start
    )

    y = ybar / disc[None, :]
    z = zbar / disc[None, :] if compute_z else None
    sol = BsdeSolution(
        paths=paths,
        spec=spec,
        params=params,
        method="reflected-snell",
        y=y,
        z=z,
        k=None,
        continuation=cbar,
        y0=low,
        y0_stderr=low_se,
        y0_high_bias=y0_high,
        diagnostics={"regressions": diagnostics, "in_sample_cashflow": float(cashflow.mean())},
    )
    sol.k = doob_meyer_K(sol, spec, params)
    return sol


def _evaluate_stopping_rule(paths, spec, params, basis, stop_coefs, exercise_at_start):
    """Discounted payoff of the fitted stopping rule on an independent path set."""
    sl = _SliceCache(paths, spec, params)
    x, disc = sl.x, sl.disc
    n_paths, n_times = x.shape
    if exercise_at_start:
        val = np.full(n_paths, sl.gbar(0)[0])
        return float(val.mean()), float(val.std(ddof=1) / np.sqrt(n_paths))
    cash = sl.gbar(-1).copy()
    stopped = np.zeros(n_paths, bool)
    for k in range(1, n_times - 1):
        coef = stop_coefs[k]
        if coef is None:
            continue
        g_k = sl.g(k)
        itm = (g_k > 0) & ~stopped
        if not np.any(itm):
            continue
        design = basis.design(spec, x[itm, k], include_payoff=not basis.itm_only_stopping)
        cont = design @ coef + sl.mbar(k)[itm]
        ex = disc[k] * g_k[itm] >= cont
        hit = np.flatnonzero(itm)[ex]
        cash[hit] = disc[k] * g_k[hit]
        stopped[hit] = True
    return float(cash.mean()), float(cash.std(ddof=1) / np.sqrt(n_paths))


def doob_meyer_K(sol: BsdeSolution, spec: OptionSpec, params: MarketParams) -> np.ndarray:
    """Increasing process from the discrete reflection: the positive part of
    (discounted obstacle minus regressed continuation), accumulated in
    undiscounted units; starts at zero and grows only where reflection binds."""
    if sol.continuation is None:
        raise ValueError("solution carries no continuation estimates")
    sl = _SliceCache(sol.paths, spec, params)
    n_times = sl.t.size
    k_mat = np.zeros_like(sl.x)
    for k in range(n_times - 1):
        incr = np.maximum(sl.gbar(k) - sol.continuation[:, k], 0.0) / sl.disc[k]
        k_mat[:, k + 1] = k_mat[:, k] + incr
    return k_mat


def k_formula(
    paths: PathBundle,
    spec: OptionSpec,
    params: MarketParams,
    boundary: BoundaryResult | None = None,
    y_matrix: np.ndarray | None = None,
    y_tol: float | None = None,
) -> np.ndarray:
    """Explicit form of the increasing process: left-endpoint time integral of
    the exercise-region cash-flow rate along each path.

    The contact criterion is either a PDE exercise boundary (sharp) or the
    Monte Carlo condition |Y - g(X)| <= y_tol."""
    if (boundary is None) == (y_matrix is None):
        raise ValueError("supply exactly one contact criterion")
    x = paths.values
    t = paths.schedule.times
    dt = paths.schedule.dt
    if boundary is not None:
        valid = ~np.isnan(boundary.levels)
        if np.any(valid):
            lv = np.interp(
                t, boundary.times[valid], boundary.levels[valid], left=np.nan, right=np.nan
            )
            lv = np.where(np.isnan(lv), -np.inf if spec.kind is OptionKind.PUT else np.inf, lv)
        else:
            lv = np.full(t.size, -np.inf if spec.kind is OptionKind.PUT else np.inf)
    elif y_tol is None:
        y_tol = indicator_slack(spec.strike)
    spec_is_put = spec.kind is OptionKind.PUT
    k_mat = np.zeros_like(x)
    for k in range(t.size - 1):
        xk = x[:, k]
        if boundary is not None:
            contact = xk <= lv[k] if spec_is_put else xk >= lv[k]
        else:
            g_k = payoff(spec, xk)
            contact = (np.abs(y_matrix[:, k] - g_k) <= y_tol) & (g_k > 0)
        incr = exercise_rate(spec, params, xk) * contact * dt[k]
        k_mat[:, k + 1] = k_mat[:, k] + incr
    return k_mat


def prop_bound_check(
    k_dm: np.ndarray,
    k_tilde: np.ndarray,
    n_sigma: float = 3.0,
    chunk: int = 256,
) -> BoundReport:
    """Every pairwise increment of the extracted process must stay below the
    formula integral, up to a statistical tolerance scaled per step count."""
    diff = k_dm - k_tilde  # violation iff diff(t) - diff(tau) > tolerance
    incr_gap = np.diff(diff, axis=1)
    sigma_inc = float(incr_gap.std())
    n_paths, n_times = diff.shape
    steps = np.abs(np.arange(n_times)[None, :] - np.arange(n_times)[:, None])
    tol = n_sigma * sigma_inc * np.sqrt(np.maximum(steps, 1))
    upper = np.triu(np.ones((n_times, n_times), bool), k=1)

    n_pairs = 0
    n_viol = 0
    max_viol = 0.0
    for lo in range(0, n_paths, chunk):
        d = diff[lo : lo + chunk]
        gap = d[:, None, :] - d[:, :, None]  # gap[p, tau, t] = diff_t - diff_tau
        over = gap - tol[None, :, :]
        over = np.where(upper[None, :, :], over, -np.inf)
        max_viol = max(max_viol, float(over.max()))
        n_viol += int(np.count_nonzero(over > 0))
        n_pairs += d.shape[0] * int(upper.sum())
    return BoundReport(
        max_violation=max(max_viol, 0.0),
        violation_fraction=n_viol / n_pairs,
        n_pairs=n_pairs,
        tolerance_per_step=n_sigma * sigma_inc,
    )


def driver_bsde_solve(
    paths: PathBundle,
    spec: OptionSpec,
    params: MarketParams,
    basis: RegressionBasis,
    compute_z: bool = True,
) -> BsdeSolution:
    """Backward scheme for the non-reflected equation: no max with the payoff,
    the discontinuous driver is solved implicitly per node.

    With exact one-step discounting the per-node problem is
    y = c + dt*gain(x, y); the gain is non-increasing in y, so the unique
    solution is piecewise explicit, with y = g(x) across the jump. The
    reported price is the conditional-expectation representation at the start
    (terminal payoff plus accumulated discounted gains), whose error is a
    plain Monte Carlo average over the scheme's exercise indicator."""
    sl = _SliceCache(paths, spec, params)
    x, t, dt, disc = sl.x, sl.t, sl.dt, sl.disc
    n_paths, n_times = x.shape
    if np.max(dt) * params.r >= 1.0:
        raise ValueError("need dt*r < 1 for the implicit per-node solve")
    slack = indicator_slack(spec.strike)

    diagnostics: list = []
    y = np.empty_like(x)
    y[:, -1] = sl.g(-1)
    zbar = np.zeros_like(x) if compute_z else None
    # tail accumulates discounted exercise-region gains for the start estimate
    tail = sl.gbar(-1).copy()

    def implicit_node(c, k, g_k, cap):
        # the value function is strictly positive, so the gain cannot act
        # where the payoff vanishes
        y_hi = c + dt[k] * cap  # driver active branch
        return np.where(y_hi <= g_k + slack, y_hi, np.where(c > g_k + slack, c, g_k))

    mbar_next = sl.mbar(n_times - 1)
    b_hint: float | None = None
    for k in range(n_times - 2, 0, -1):
        mbar_k = sl.mbar(k)
        g_k = sl.g(k)
        cap = exercise_rate(spec, params, x[:, k]) * (g_k > 0)
        target = disc[k + 1] * y[:, k + 1] - mbar_next
        fitted = basis.value_fit(
            spec, x[:, k], target, b_hint, diagnostics, f"value@{t[k]:.6g}",
            extra=mbar_k / spec.strike,
        )
        cont = (fitted + mbar_k) / disc[k]
        y[:, k] = implicit_node(cont, k, g_k, cap)
        active = (y[:, k] <= g_k + slack) & (g_k > 0)
        tail += cap * active * disc[k] * dt[k]
        if np.any(active):
            xa = x[active, k]
            b_hint = float(xa.max() if spec.kind is OptionKind.PUT else xa.min())
        else:
            b_hint = None
        if compute_z:
            zfit = basis.piecewise_fit(
                spec, x[:, k], target * sl.dw(k), b_hint, diagnostics, f"z@{t[k]:.6g}"
            )
            zbar[:, k] = zfit / dt[k] + sl.zbar_euro(k)
        mbar_next = mbar_k
    g_0 = sl.g(0)
    cap_0 = exercise_rate(spec, params, x[:, 0]) * (g_0 > 0)
    c0 = float((disc[1] * y[:, 1]).mean()) / disc[0]
    y[:, 0] = implicit_node(np.full(n_paths, c0), 0, g_0, cap_0)
    active_0 = (y[:, 0] <= g_0 + slack) & (g_0 > 0)
    tail += cap_0 * active_0 * disc[0] * dt[0]
    if compute_z:
        zbar[:, 0] = (
            (disc[1] * y[:, 1] - mbar_next) * sl.dw(0)
        ).mean() / dt[0] + sl.zbar_euro(0)[0]
        zbar[:, -1] = disc[-1] * params.sigma * x[:, -1] * _payoff_slope(spec, x[:, -1])

    # start-value estimate from the representation identity
    y0 = float(tail.mean())
    se = float(tail.std(ddof=1) / np.sqrt(n_paths))

    z = zbar / disc[None, :] if compute_z else None
    return BsdeSolution(
        paths=paths,
        spec=spec,
        params=params,
        method="driver-bsde",
        y=y,
        z=z,
        k=None,
        continuation=None,
        y0=y0,
        y0_stderr=se,
        y0_high_bias=None,
        diagnostics={"regressions": diagnostics, "scheme_y0": float(y[0, 0])},
    )


def snell_representation_check(
    sol: BsdeSolution,
    spec: OptionSpec,
    params: MarketParams,
    basis: RegressionBasis,
    n_probe: int = 5,
    n_boot: int = 200,
    boot_seed: int = 7,
) -> ResidualReport:
    """Conditional-expectation identity for the discounted value: the terminal
    payoff plus remaining discounted driver gains, projected at probe times,
    must reproduce the discounted value within regression noise."""
    if sol.method != "driver-bsde":
        raise ValueError("representation check expects a driver-scheme solution")
    sl = _SliceCache(sol.paths, spec, params)
    x, t, dt, disc = sl.x, sl.t, sl.dt, sl.disc
    slack = indicator_slack(spec.strike)

    n_times = t.size
    probes = np.unique(np.linspace(1, n_times - 2, n_probe).astype(int))
    # remaining tail at each probe, accumulated backward column by column
    tail = sl.gbar(-1).copy()
    tails = {}
    for k in range(n_times - 2, 0, -1):
        g_k = sl.g(k)
        gain = (
            exercise_rate(spec, params, x[:, k])
            * (g_k > 0)
            * (sol.y[:, k] <= g_k + slack)
        )
        tail = tail + disc[k] * gain * dt[k]
        if k in probes:
            tails[k] = tail.copy()

    rng = np.random.Generator(np.random.Philox(key=boot_seed))
    residuals = np.empty(probes.size)
    thresholds = np.empty(probes.size)
    n_paths = x.shape[0]
    for i, k in enumerate(probes):
        mbar_k = sl.mbar(k)
        design = basis.design(spec, x[:, k])
        lhs = disc[k] * sol.y[:, k]
        target = tails[k] - mbar_k
        coef, fitted = _fit(design, target, [], f"probe@{t[k]:.6g}")
        scale = max(1.0, float(np.abs(lhs).mean()))
        residuals[i] = float(np.sqrt(np.mean((fitted + mbar_k - lhs) ** 2))) / scale
        boot = np.empty(n_boot)
        for b in range(n_boot):
            idx = rng.integers(0, n_paths, n_paths)
            bcoef, *_ = np.linalg.lstsq(design[idx], target[idx], rcond=None)
            bfit = design @ bcoef
            boot[b] = float(np.sqrt(np.mean((bfit + mbar_k - lhs) ** 2))) / scale
        thresholds[i] = float(boot.mean()) + 3.0 * float(boot.std(ddof=1))
    return ResidualReport(probe_times=t[probes], residuals=residuals, thresholds=thresholds)


def z_identification_check(
    sol: BsdeSolution,
    pde: PdeSolution,
    skip_start: int = 1,
    skip_end: int = 1,
) -> GradientReport:
    """Compares the regressed integrand against sigma * x * du/dx from the PDE
    surface, interpolated along the simulated paths."""
    if sol.z is None:
        raise ValueError("solution carries no integrand estimates")
    from scipy.interpolate import RegularGridInterpolator

    grad = pde.space_gradient()
    interp = RegularGridInterpolator(
        (pde.times, np.log(pde.x)), grad, bounds_error=False, fill_value=None
    )
    x = sol.paths.values
    t = sol.paths.schedule.times
    cols = list(range(skip_start, t.size - skip_end))
    num = 0.0
    den = 0.0
    for k in cols:
        xk = np.clip(x[:, k], pde.x[0], pde.x[-1])
        pts = np.column_stack([np.full(xk.size, t[k]), np.log(xk)])
        z_ref = sol.params.sigma * xk * interp(pts)
        num += float(np.sum((sol.z[:, k] - z_ref) ** 2))
        den += float(np.sum(z_ref**2))
    return GradientReport(rel_l2=float(np.sqrt(num / den)), n_times=len(cols))
