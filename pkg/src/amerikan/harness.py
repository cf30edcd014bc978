"""Cross-method consistency suites and refinement studies.

Runs the oracle, the three PDE formulations and the two Monte Carlo schemes
on configured parameter sets, measures every advertised equivalence, and
aggregates machine-readable reports. All pass thresholds come from the
tolerance table in the configuration; check code contains no hard-coded
numbers."""

from __future__ import annotations

import csv
import json
import platform
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import bsde as bsde_mod
from . import lattice, pde
from .model import EvalPoint, MarketParams, OptionKind, OptionSpec, TimeSchedule, simulate_paths

DEFAULT_TOLERANCES: dict[str, float] = {
    # pairwise sup-norm agreement of the PDE formulations, in units of strike
    "pde_pairwise_sup_rel": 1e-3,
    # relative error of each PDE price against the tree oracle
    "pde_vs_oracle_rel": 1e-3,
    # Monte Carlo estimates within this many standard errors of the PDE value
    "bsde_sigmas": 3.0,
    # fraction of (tau, t) pairs allowed to violate the increment bound
    "prop_bound_frac": 1e-2,
    # discrete Skorokhod sum relative to strike * E[K_T]
    "skorokhod_rel": 1e-4,
    # relative L1 discrepancy of the reconstructed measure density
    "measure_l1_rel": 5e-2,
    # premium decomposition vs the tree oracle, relative
    "premium_rel": 2e-3,
    # degenerate-driver collapse: PDE vs European quadrature, relative
    "degenerate_pde_rel": 5e-4,
}

ALL_CHECKS = (
    "pde_pairwise",
    "pde_vs_oracle",
    "bsde_snell",
    "bsde_driver",
    "kprocess",
    "skorokhod",
    "measure_identity",
    "premium_decomposition",
    "boundary_structure",
    "degenerate_collapse",
)


@dataclass(frozen=True)
class ParamSet:
    """One market/contract configuration plus the spots to price at."""

    label: str
    params: MarketParams
    spec: OptionSpec
    spots: tuple[float, ...]
    checks: tuple[str, ...]

    def __post_init__(self):
        if not self.spots:
            raise ValueError("need at least one evaluation spot")
        unknown = set(self.checks) - set(ALL_CHECKS)
        if unknown:
            raise ValueError(f"unknown checks: {sorted(unknown)}")


@dataclass(frozen=True)
class SuiteConfig:
    param_sets: tuple[ParamSet, ...]
    grid: tuple[int, int] = (800, 800)
    fine_grid: tuple[int, int] = (1600, 1600)
    penalty_n: float = 1e5
    bsde_steps: int = 50
    bsde_paths: int = 100_000
    kprocess_ladder: tuple[tuple[int, int], ...] = (
        (25, 25_000),
        (50, 100_000),
        (100, 400_000),
    )
    seed: int = 20260823
    tolerances: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))

    def __post_init__(self):
        if not self.param_sets:
            raise ValueError("need at least one parameter set")
        steps = [s for s, _ in self.kprocess_ladder]
        paths = [p for _, p in self.kprocess_ladder]
        if steps != sorted(steps) or paths != sorted(paths):
            raise ValueError("kprocess ladder must be non-decreasing in steps and paths")
        missing = set(DEFAULT_TOLERANCES) - set(self.tolerances)
        if missing:
            raise ValueError(f"tolerance table missing entries: {sorted(missing)}")

    @classmethod
    def default(cls) -> "SuiteConfig":
        """The shipped configuration: canonical put plus degenerate sets."""
        canonical = ParamSet(
            label="canonical-put",
            params=MarketParams(r=0.05, d=0.0, sigma=0.2, T=1.0),
            spec=OptionSpec(OptionKind.PUT, 100.0),
            spots=(80.0, 100.0, 120.0),
            checks=(
                "pde_pairwise",
                "pde_vs_oracle",
                "bsde_snell",
                "bsde_driver",
                "kprocess",
                "skorokhod",
                "measure_identity",
                "premium_decomposition",
                "boundary_structure",
            ),
        )
        call_d0 = ParamSet(
            label="degenerate-call-d0",
            params=MarketParams(r=0.05, d=0.0, sigma=0.2, T=1.0),
            spec=OptionSpec(OptionKind.CALL, 100.0),
            spots=(100.0,),
            checks=("degenerate_collapse",),
        )
        put_r0 = ParamSet(
            label="degenerate-put-r0",
            params=MarketParams(r=0.0, d=0.02, sigma=0.2, T=1.0),
            spec=OptionSpec(OptionKind.PUT, 100.0),
            spots=(100.0,),
            checks=("degenerate_collapse",),
        )
        return cls(param_sets=(canonical, call_d0, put_r0))

    def to_json(self) -> str:
        def encode(obj):
            if isinstance(obj, (MarketParams, OptionSpec, ParamSet)):
                d = asdict(obj)
                if isinstance(obj, ParamSet):
                    d["spec"]["kind"] = obj.spec.kind.value
                return d
            raise TypeError(f"cannot encode {type(obj)}")

        return json.dumps(asdict(self) | {"param_sets": list(self.param_sets)}, default=encode, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SuiteConfig":
        raw = json.loads(text)
        sets = []
        for ps in raw.pop("param_sets"):
            sets.append(
                ParamSet(
                    label=ps["label"],
                    params=MarketParams(**ps["params"]),
                    spec=OptionSpec(OptionKind(ps["spec"]["kind"]), ps["spec"]["strike"]),
                    spots=tuple(ps["spots"]),
                    checks=tuple(ps["checks"]),
                )
            )
        kwargs = {}
        for key in ("grid", "fine_grid", "penalty_n", "bsde_steps", "bsde_paths", "seed"):
            if key in raw:
                kwargs[key] = tuple(raw[key]) if key in ("grid", "fine_grid") else raw[key]
        if "kprocess_ladder" in raw:
            kwargs["kprocess_ladder"] = tuple(tuple(r) for r in raw["kprocess_ladder"])
        if "tolerances" in raw:
            kwargs["tolerances"] = dict(DEFAULT_TOLERANCES) | raw["tolerances"]
        return cls(param_sets=tuple(sets), **kwargs)


@dataclass
class CheckResult:
    check: str
    param_set: str
    measured: float
    tolerance: float
    passed: bool
    runtime: float
    details: dict = field(default_factory=dict)


@dataclass
class SuiteReport:
    checks: list[CheckResult]
    environment: dict
    config_json: str

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> str:
        return json.dumps(
            {
                "environment": self.environment,
                "all_passed": self.all_passed,
                "checks": [asdict(c) for c in self.checks],
                "config": json.loads(self.config_json),
            },
            indent=2,
        )

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["check", "parameter_set", "measured", "tolerance", "pass"])
            for c in self.checks:
                writer.writerow(
                    [c.check, c.param_set, repr(c.measured), repr(c.tolerance), c.passed]
                )


def _environment_fingerprint() -> dict:
    import numba
    import scipy

    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "platform": platform.platform(),
    }


class _SetContext:
    """Shared computations for one parameter set, built lazily so cheap
    checks do not pay for solves they never read."""

    def __init__(self, ps: ParamSet, cfg: SuiteConfig):
        self.ps = ps
        self.cfg = cfg
        self._cache: dict = {}

    def _get(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    @property
    def obstacle(self) -> pde.PdeSolution:
        return self._get(
            "obstacle",
            lambda: pde.solve_obstacle(
                self.ps.params,
                self.ps.spec,
                pde.GridSpec.default(self.ps.params, self.ps.spec, *self.cfg.grid),
            ),
        )

    @property
    def penalized(self) -> pde.PdeSolution:
        return self._get(
            "penalized",
            lambda: pde.solve_penalized(
                self.ps.params,
                self.ps.spec,
                pde.GridSpec.default(self.ps.params, self.ps.spec, *self.cfg.grid),
                self.cfg.penalty_n,
            ),
        )

    @property
    def semilinear(self) -> pde.PdeSolution:
        return self._get(
            "semilinear",
            lambda: pde.solve_semilinear(
                self.ps.params,
                self.ps.spec,
                pde.GridSpec.default(self.ps.params, self.ps.spec, *self.cfg.grid),
            ),
        )

    def oracle_at(self, x: float) -> float:
        key = ("oracle", x)
        return self._get(
            key, lambda: lattice.oracle_price(self.ps.params, self.ps.spec, EvalPoint(0.0, x))
        )

    @property
    def snell(self) -> bsde_mod.BsdeSolution:
        def build():
            sched = TimeSchedule.uniform(0.0, self.ps.params.T, self.cfg.bsde_steps)
            paths = simulate_paths(
                self.ps.params,
                EvalPoint(0.0, self.ps.spots[min(1, len(self.ps.spots) - 1)]),
                sched,
                self.cfg.bsde_paths,
                seed=self.cfg.seed,
            )
            return bsde_mod.snell_lsmc(
                paths, self.ps.spec, self.ps.params, bsde_mod.RegressionBasis(), compute_z=False
            )

        return self._get("snell", build)

    @property
    def driver(self) -> bsde_mod.BsdeSolution:
        def build():
            return bsde_mod.driver_bsde_solve(
                self.snell.paths,
                self.ps.spec,
                self.ps.params,
                bsde_mod.RegressionBasis(),
                compute_z=False,
            )

        return self._get("driver", build)


def _norms(a: np.ndarray, b: np.ndarray, x: np.ndarray) -> tuple[float, float]:
    sup = float(np.max(np.abs(a - b)))
    w = pde.WeightSpec(alpha=1.0)
    wl2 = pde.weighted_norm((a - b)[-1], x, w)
    return sup, wl2


def _check_pde_pairwise(ctx: _SetContext, tol: dict) -> list[CheckResult]:
    t0 = time.time()
    sols = {"obstacle": ctx.obstacle, "penalized": ctx.penalized, "semilinear": ctx.semilinear}
    K = ctx.ps.spec.strike
    worst = 0.0
    details = {}
    names = list(sols)
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            sup, wl2 = _norms(sols[a].u, sols[b].u, sols[a].x)
            details[f"{a}-{b}"] = {"sup": sup, "weighted_l2": wl2}
            worst = max(worst, sup)
    limit = tol["pde_pairwise_sup_rel"] * K
    return [
        CheckResult(
            "pde_pairwise", ctx.ps.label, worst, limit, worst <= limit, time.time() - t0, details
        )
    ]


def _check_pde_vs_oracle(ctx: _SetContext, tol: dict) -> list[CheckResult]:
    t0 = time.time()
    worst = 0.0
    details = {}
    for x in ctx.ps.spots:
        ref = ctx.oracle_at(x)
        for name, sol in (
            ("obstacle", ctx.obstacle),
            ("penalized", ctx.penalized),
            ("semilinear", ctx.semilinear),
        ):
            rel = abs(sol.value(0.0, x) - ref) / max(abs(ref), 1e-12)
            details[f"{name}@{x:g}"] = {"pde": sol.value(0.0, x), "oracle": ref, "rel": rel}
            worst = max(worst, rel)
    limit = tol["pde_vs_oracle_rel"]
    return [
        CheckResult(
            "pde_vs_oracle", ctx.ps.label, worst, limit, worst <= limit, time.time() - t0, details
        )
    ]


def _check_bsde(ctx: _SetContext, tol: dict, which: str) -> list[CheckResult]:
    t0 = time.time()
    sol = ctx.snell if which == "bsde_snell" else ctx.driver
    x0 = float(sol.paths.values[0, 0])
    ref = ctx.obstacle.value(0.0, x0)
    sigmas = abs(sol.y0 - ref) / sol.y0_stderr
    limit = tol["bsde_sigmas"]
    details = {"y0": sol.y0, "stderr": sol.y0_stderr, "pde": ref, "method": sol.method}
    return [
        CheckResult(which, ctx.ps.label, sigmas, limit, sigmas <= limit, time.time() - t0, details)
    ]


def _check_kprocess(ctx: _SetContext, tol: dict) -> list[CheckResult]:
    """Joint-refinement decrease of the K discrepancy plus the increment
    bound. The formula integral uses the PDE boundary for the discrepancy
    (decoupled from regression noise) and the solution's own contact
    indicator for the bound, matching the bound's right-hand side."""
    t0 = time.time()
    boundary = pde.extract_boundary(ctx.obstacle)
    gaps = []
    worst_frac = 0.0
    details = {"rungs": []}
    for steps, n_paths in ctx.cfg.kprocess_ladder:
        sched = TimeSchedule.uniform(0.0, ctx.ps.params.T, steps)
        paths = simulate_paths(
            ctx.ps.params,
            EvalPoint(0.0, ctx.ps.spots[min(1, len(ctx.ps.spots) - 1)]),
            sched,
            n_paths,
            seed=ctx.cfg.seed,
        )
        sol = bsde_mod.snell_lsmc(
            paths, ctx.ps.spec, ctx.ps.params, bsde_mod.RegressionBasis(), compute_z=False
        )
        k_bnd = bsde_mod.k_formula(paths, ctx.ps.spec, ctx.ps.params, boundary=boundary)
        k_own = bsde_mod.k_formula(paths, ctx.ps.spec, ctx.ps.params, y_matrix=sol.y)
        gap = float(np.abs(sol.k - k_bnd).max(axis=1).mean())
        bound = bsde_mod.prop_bound_check(sol.k[:2000], k_own[:2000])
        gaps.append(gap)
        worst_frac = max(worst_frac, bound.violation_fraction)
        details["rungs"].append(
            {
                "steps": steps,
                "paths": n_paths,
                "mean_sup_gap": gap,
                "bound_violation_fraction": bound.violation_fraction,
            }
        )
    decreasing = all(b < a for a, b in zip(gaps, gaps[1:]))
    frac_limit = tol["prop_bound_frac"]
    runtime = time.time() - t0
    return [
        CheckResult(
            "kprocess",
            ctx.ps.label,
            worst_frac,
            frac_limit,
            decreasing and worst_frac <= frac_limit,
            runtime,
            details | {"gap_sequence_decreasing": decreasing},
        )
    ]


def _check_skorokhod(ctx: _SetContext, tol: dict) -> list[CheckResult]:
    t0 = time.time()
    sol = ctx.snell
    from .model import payoff as payoff_fn

    g = payoff_fn(ctx.ps.spec, sol.paths.values)
    dk = np.diff(sol.k, axis=1)
    flat_sum = float(np.mean(np.sum((sol.y[:, :-1] - g[:, :-1]) * dk, axis=1)))
    e_kt = float(sol.k[:, -1].mean())
    limit = tol["skorokhod_rel"] * ctx.ps.spec.strike * max(e_kt, 1e-12)
    return [
        CheckResult(
            "skorokhod",
            ctx.ps.label,
            flat_sum,
            limit,
            flat_sum <= limit,
            time.time() - t0,
            {"mean_K_T": e_kt},
        )
    ]


def _check_measure(ctx: _SetContext, tol: dict) -> list[CheckResult]:
    t0 = time.time()
    coarse = pde.reconstruct_measure(ctx.obstacle, ctx.ps.params, ctx.ps.spec)
    fine_sol = pde.solve_obstacle(
        ctx.ps.params,
        ctx.ps.spec,
        pde.GridSpec.default(ctx.ps.params, ctx.ps.spec, *ctx.cfg.fine_grid),
    )
    fine = pde.reconstruct_measure(fine_sol, ctx.ps.params, ctx.ps.spec)
    limit = tol["measure_l1_rel"]
    ok = coarse.rel_l1_discrepancy <= limit and fine.rel_l1_discrepancy < coarse.rel_l1_discrepancy
    return [
        CheckResult(
            "measure_identity",
            ctx.ps.label,
            coarse.rel_l1_discrepancy,
            limit,
            ok,
            time.time() - t0,
            {"fine_rel_l1": fine.rel_l1_discrepancy, "decreasing": fine.rel_l1_discrepancy < coarse.rel_l1_discrepancy},
        )
    ]


def _check_premium(ctx: _SetContext, tol: dict) -> list[CheckResult]:
    t0 = time.time()
    boundary = pde.extract_boundary(ctx.obstacle)
    worst = 0.0
    details = {}
    for x in ctx.ps.spots:
        euro = lattice.european_quadrature(ctx.ps.params, ctx.ps.spec, EvalPoint(0.0, x))
        prem = pde.eep_premium(ctx.ps.params, ctx.ps.spec, EvalPoint(0.0, x), boundary)
        ref = ctx.oracle_at(x)
        rel = abs(euro + prem - ref) / max(abs(ref), 1e-12)
        details[f"x={x:g}"] = {"european": euro, "premium": prem, "oracle": ref, "rel": rel}
        worst = max(worst, rel)
    limit = tol["premium_rel"]
    return [
        CheckResult(
            "premium_decomposition",
            ctx.ps.label,
            worst,
            limit,
            worst <= limit,
            time.time() - t0,
            details,
        )
    ]


def _check_boundary(ctx: _SetContext, tol: dict) -> list[CheckResult]:
    t0 = time.time()
    boundary = pde.extract_boundary(ctx.obstacle)
    n_struct = len(boundary.violations)
    monotone_required = (
        ctx.ps.spec.kind is OptionKind.PUT and ctx.ps.params.d == 0.0 and ctx.ps.params.r > 0
    )
    monotone_ok = True
    if monotone_required:
        lv = boundary.levels[~np.isnan(boundary.levels)]
        # one-cell slack: levels live on the spatial grid
        dx = np.min(np.diff(ctx.obstacle.x))
        monotone_ok = bool(np.all(np.diff(lv) >= -dx)) and lv.size > 0
    measured = float(n_struct + (0 if monotone_ok else 1))
    return [
        CheckResult(
            "boundary_structure",
            ctx.ps.label,
            measured,
            0.0,
            measured == 0.0,
            time.time() - t0,
            {"violations": list(boundary.violations), "monotone_checked": monotone_required},
        )
    ]


def _check_degenerate(ctx: _SetContext, tol: dict) -> list[CheckResult]:
    """Where the driver vanishes identically the American value collapses to
    the European one; every method must reproduce the quadrature value."""
    t0 = time.time()
    x = ctx.ps.spots[0]
    euro = lattice.european_quadrature(ctx.ps.params, ctx.ps.spec, EvalPoint(0.0, x))
    worst = 0.0
    details = {"european_quadrature": euro}
    for name, sol in (
        ("obstacle", ctx.obstacle),
        ("penalized", ctx.penalized),
        ("semilinear", ctx.semilinear),
    ):
        rel = abs(sol.value(0.0, x) - euro) / max(abs(euro), 1e-12)
        details[name] = {"value": sol.value(0.0, x), "rel": rel}
        worst = max(worst, rel)
    pde_ok = worst <= tol["degenerate_pde_rel"]
    mc_ok = True
    for name, sol in (("snell", ctx.snell), ("driver", ctx.driver)):
        sigmas = abs(sol.y0 - euro) / sol.y0_stderr
        details[f"bsde_{name}"] = {"y0": sol.y0, "stderr": sol.y0_stderr, "sigmas": sigmas}
        mc_ok = mc_ok and sigmas <= tol["bsde_sigmas"]
    return [
        CheckResult(
            "degenerate_collapse",
            ctx.ps.label,
            worst,
            tol["degenerate_pde_rel"],
            pde_ok and mc_ok,
            time.time() - t0,
            details,
        )
    ]


_CHECK_DISPATCH = {
    "pde_pairwise": _check_pde_pairwise,
    "pde_vs_oracle": _check_pde_vs_oracle,
    "bsde_snell": lambda ctx, tol: _check_bsde(ctx, tol, "bsde_snell"),
    "bsde_driver": lambda ctx, tol: _check_bsde(ctx, tol, "bsde_driver"),
    "kprocess": _check_kprocess,
    "skorokhod": _check_skorokhod,
    "measure_identity": _check_measure,
    "premium_decomposition": _check_premium,
    "boundary_structure": _check_boundary,
    "degenerate_collapse": _check_degenerate,
}


def run_equivalence_suite(cfg: SuiteConfig) -> SuiteReport:
    """Executes every configured check on every parameter set.

    Check failures are recorded and the suite continues; exceptions from the
    numerical kernels (solver non-convergence, oracle breakdown) abort."""
    results: list[CheckResult] = []
    for ps in cfg.param_sets:
        ctx = _SetContext(ps, cfg)
        for name in ps.checks:
            results.extend(_CHECK_DISPATCH[name](ctx, cfg.tolerances))
    executed = {(c.param_set, c.check) for c in results}
    configured = {(ps.label, name) for ps in cfg.param_sets for name in ps.checks}
    if executed != configured:
        raise RuntimeError("executed checks do not match configured checks")
    return SuiteReport(
        checks=results, environment=_environment_fingerprint(), config_json=cfg.to_json()
    )


@dataclass
class RefinementRow:
    rung: str
    error: float


@dataclass
class RefinementTable:
    study: str
    rows: list[RefinementRow]
    fitted_order: float | None
    monotone: bool

    def to_dict(self) -> dict:
        return {
            "study": self.study,
            "rows": [asdict(r) for r in self.rows],
            "fitted_order": self.fitted_order,
            "monotone": self.monotone,
        }


def refinement_study(cfg: SuiteConfig) -> list[RefinementTable]:
    """Three convergence ladders on the first parameter set: obstacle-grid
    error against the oracle, penalty-parameter distance to the obstacle
    solution, and the Monte Carlo standard-error law."""
    ps = cfg.param_sets[0]
    x0 = ps.spots[min(1, len(ps.spots) - 1)]
    oracle = lattice.oracle_price(ps.params, ps.spec, EvalPoint(0.0, x0))
    tables = []

    grid_rungs = [(100, 100), (200, 200), (400, 400), (800, 800)]
    rows = []
    for nt, nx in grid_rungs:
        sol = pde.solve_obstacle(ps.params, ps.spec, pde.GridSpec.default(ps.params, ps.spec, nt, nx))
        rows.append(RefinementRow(f"{nt}x{nx}", abs(sol.value(0.0, x0) - oracle)))
    errs = np.array([r.error for r in rows])
    hs = np.array([1.0 / nt for nt, _ in grid_rungs])
    order = float(np.polyfit(np.log(hs), np.log(np.maximum(errs, 1e-16)), 1)[0])
    tables.append(
        RefinementTable("obstacle-grid", rows, order, bool(np.all(np.diff(errs) < 0)))
    )

    ref = pde.solve_obstacle(
        ps.params, ps.spec, pde.GridSpec.default(ps.params, ps.spec, *cfg.grid)
    )
    rows = []
    for n in (1e2, 1e3, 1e4, 1e5):
        sol = pde.solve_penalized(
            ps.params, ps.spec, pde.GridSpec.default(ps.params, ps.spec, *cfg.grid), n
        )
        rows.append(RefinementRow(f"n={n:g}", float(np.max(np.abs(sol.u - ref.u)))))
    errs = np.array([r.error for r in rows])
    tables.append(RefinementTable("penalty-ladder", rows, None, bool(np.all(np.diff(errs) < 0))))

    rows = []
    sched = TimeSchedule.uniform(0.0, ps.params.T, cfg.bsde_steps)
    for n_paths in (10_000, 40_000, 160_000):
        paths = simulate_paths(ps.params, EvalPoint(0.0, x0), sched, n_paths, seed=cfg.seed)
        sol = bsde_mod.snell_lsmc(
            paths, ps.spec, ps.params, bsde_mod.RegressionBasis(), compute_z=False
        )
        rows.append(RefinementRow(f"paths={n_paths}", sol.y0_stderr))
    errs = np.array([r.error for r in rows])
    order = float(np.polyfit(np.log([10_000, 40_000, 160_000]), np.log(errs), 1)[0])
    tables.append(RefinementTable("lsmc-stderr", rows, order, bool(np.all(np.diff(errs) < 0))))
    return tables
