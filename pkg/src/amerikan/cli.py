"""Command-line surface: batch pricing, boundary extraction, per-path
K-process inspection, and the validation suite.

Every price invocation prints exactly one JSON record to stdout; diagnostics
go to stderr. Exit codes: 0 success, 1 numerical/check failure, 2 usage or
configuration error. All floats are emitted with 17 significant digits so
files round-trip bit-exactly."""

from __future__ import annotations

import json
import os
import sys
import time

import click
import numpy as np

from . import bsde as bsde_mod
from . import harness, lattice, pde
from .lattice import OracleError
from .model import EvalPoint, MarketParams, OptionKind, OptionSpec, TimeSchedule, simulate_paths
from .pde import SolverError


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot encode {type(obj)}")


def _emit(record: dict) -> None:
    click.echo(json.dumps(record, default=_json_default))


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"cannot read config file {path}: {exc}")


_MARKET_OPTIONS = [
    click.option("--kind", type=click.Choice(["call", "put"]), default=None, help="Option kind."),
    click.option("--strike", type=float, default=None, help="Strike price K."),
    click.option("--rate", type=float, default=None, help="Risk-free rate r."),
    click.option("--dividend", type=float, default=None, help="Dividend yield d."),
    click.option("--sigma", type=float, default=None, help="Volatility."),
    click.option("--expiry", type=float, default=None, help="Expiry T."),
    click.option("--spot", type=float, default=None, help="Spot price x."),
    click.option("--start", type=float, default=None, help="Valuation time s."),
    click.option("--config", "config_path", type=str, default=None,
                 help="JSON file with the same keys; flags override the file."),
]


def _market_options(fn):
    for opt in reversed(_MARKET_OPTIONS):
        fn = opt(fn)
    return fn


def _resolve_problem(config_path, **flags):
    """Merge config file and flags (flags win) into the problem triple."""
    conf = _load_config_file(config_path)
    merged = {k: flags[k] if flags.get(k) is not None else conf.get(k) for k in
              ("kind", "strike", "rate", "dividend", "sigma", "expiry", "spot", "start")}
    missing = [k for k in ("kind", "strike", "sigma", "expiry", "spot") if merged[k] is None]
    if missing:
        raise click.UsageError(f"missing required parameters: {', '.join(missing)}")
    for key, default in (("rate", 0.0), ("dividend", 0.0), ("start", 0.0)):
        if merged[key] is None:
            merged[key] = default
    try:
        params = MarketParams(
            r=merged["rate"], d=merged["dividend"], sigma=merged["sigma"], T=merged["expiry"]
        )
        spec = OptionSpec(OptionKind(merged["kind"]), merged["strike"])
        point = EvalPoint(merged["start"], merged["spot"])
    except ValueError as exc:
        raise click.UsageError(str(exc))
    if point.s >= params.T:
        raise click.UsageError("valuation time must precede expiry")
    return params, spec, point


def _resolve_seed(seed: int) -> int:
    env = os.environ.get("AMERIKAN_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise click.UsageError(f"AMERIKAN_SEED is not an integer: {env!r}")
    return seed


def _parse_grid(grid: str) -> tuple[int, int]:
    try:
        n_space, n_time = (int(p) for p in grid.lower().split("x"))
    except ValueError:
        raise click.UsageError(f"--grid must look like 800x800, got {grid!r}")
    return n_space, n_time


def _price_record(price, method, params, spec, point, t0, stderr=None, extra=None):
    rec = {
        "price": float(price),
        "method": method,
        "params": {
            "kind": spec.kind.value,
            "strike": spec.strike,
            "rate": params.r,
            "dividend": params.d,
            "sigma": params.sigma,
            "expiry": params.T,
            "spot": point.x,
            "start": point.s,
        },
        "runtime": time.time() - t0,
    }
    if stderr is not None:
        rec["stderr"] = float(stderr)
    if extra:
        rec.update(extra)
    return rec


@click.group()
def main():
    """American option pricing: lattice oracle, PDE solvers, BSDE Monte Carlo."""


@main.group()
def price():
    """Price a contract with one of the methods."""


@price.command("tree")
@_market_options
@click.option("--steps", type=int, default=20000, show_default=True, help="Lattice steps.")
def price_tree(config_path, steps, **flags):
    """Binomial-lattice price (backward induction with early exercise)."""
    params, spec, point = _resolve_problem(config_path, **flags)
    t0 = time.time()
    try:
        value = lattice.tree_price_american(params, spec, point, lattice.TreeConfig(steps=steps))
    except OracleError as exc:
        click.echo(f"oracle failure: {exc}", err=True)
        sys.exit(1)
    _emit(_price_record(value, "tree", params, spec, point, t0, extra={"steps": steps}))


@price.command("pde")
@_market_options
@click.option("--method", type=click.Choice(["obstacle", "penalized", "semilinear"]),
              default="obstacle", show_default=True)
@click.option("--grid", default="800x800", show_default=True, help="space x time nodes.")
@click.option("--penalty", type=float, default=1e5, show_default=True,
              help="Penalty parameter n (penalized method only).")
@click.option("--out", type=str, default=None,
              help="Optional CSV path for the full value surface.")
def price_pde(config_path, method, grid, penalty, out, **flags):
    """Finite-difference price from one of the three PDE formulations."""
    params, spec, point = _resolve_problem(config_path, **flags)
    n_space, n_time = _parse_grid(grid)
    t0 = time.time()
    gs = pde.GridSpec.default(params, spec, n_space, n_time)
    try:
        if method == "obstacle":
            sol = pde.solve_obstacle(params, spec, gs)
        elif method == "penalized":
            sol = pde.solve_penalized(params, spec, gs, penalty)
        else:
            sol = pde.solve_semilinear(params, spec, gs)
        value = sol.value(point.s, point.x)
    except (SolverError, ValueError) as exc:
        click.echo(f"solver failure: {exc}", err=True)
        sys.exit(1)
    if out is not None:
        _write_surface_csv(out, sol, params, spec)
        click.echo(f"surface written to {out}", err=True)
    _emit(_price_record(value, f"pde-{method}", params, spec, point, t0,
                        extra={"grid": f"{n_space}x{n_time}"}))


@price.command("bsde")
@_market_options
@click.option("--method", type=click.Choice(["snell", "driver"]), default="snell",
              show_default=True)
@click.option("--paths", type=int, default=100_000, show_default=True)
@click.option("--steps", type=int, default=50, show_default=True)
@click.option("--seed", type=int, default=20260823, show_default=True)
def price_bsde(config_path, method, paths, steps, seed, **flags):
    """Monte Carlo price from one of the two backward schemes."""
    params, spec, point = _resolve_problem(config_path, **flags)
    seed = _resolve_seed(seed)
    t0 = time.time()
    sched = TimeSchedule.uniform(point.s, params.T, steps)
    bundle = simulate_paths(params, point, sched, paths, seed=seed)
    basis = bsde_mod.RegressionBasis()
    try:
        if method == "snell":
            sol = bsde_mod.snell_lsmc(bundle, spec, params, basis, compute_z=False)
        else:
            sol = bsde_mod.driver_bsde_solve(bundle, spec, params, basis, compute_z=False)
    except (ValueError, np.linalg.LinAlgError) as exc:
        click.echo(f"scheme failure: {exc}", err=True)
        sys.exit(1)
    _emit(_price_record(sol.y0, f"bsde-{method}", params, spec, point, t0,
                        stderr=sol.y0_stderr,
                        extra={"paths": paths, "steps": steps, "seed": seed}))


def _write_surface_csv(path, sol, params, spec):
    measure = None
    if sol.method.startswith("obstacle"):
        measure = pde.reconstruct_measure(sol, params, spec).density
    with open(path, "w", newline="") as fh:
        fh.write("time,price,value,contact,measure_density\n")
        for k, t in enumerate(sol.times):
            for j, xj in enumerate(sol.x):
                dens = measure[k, j] if measure is not None else 0.0
                fh.write(
                    f"{_fmt(t)},{_fmt(xj)},{_fmt(sol.u[k, j])},"
                    f"{int(sol.contact_mask[k, j])},{_fmt(dens)}\n"
                )


@main.command()
@_market_options
@click.option("--grid", default="800x800", show_default=True)
@click.option("--out", type=str, default=None, help="CSV path (default stdout).")
def boundary(config_path, grid, out, **flags):
    """Exercise boundary of the obstacle solution as (time, level) CSV."""
    params, spec, point = _resolve_problem(config_path, **flags)
    n_space, n_time = _parse_grid(grid)
    try:
        sol = pde.solve_obstacle(params, spec, pde.GridSpec.default(params, spec, n_space, n_time))
    except SolverError as exc:
        click.echo(f"solver failure: {exc}", err=True)
        sys.exit(1)
    result = pde.extract_boundary(sol)
    if not result.clean:
        for idx, reason in result.violations:
            click.echo(f"boundary violation at time index {idx}: {reason}", err=True)
        sys.exit(1)
    lines = ["time,boundary_price,contact_nodes"]
    for t, level, count in zip(result.times, result.levels, result.contact_counts):
        level_txt = "none" if np.isnan(level) else _fmt(level)
        lines.append(f"{_fmt(t)},{level_txt},{int(count)}")
    text = "\n".join(lines) + "\n"
    if out is None:
        click.echo(text, nl=False)
    else:
        with open(out, "w") as fh:
            fh.write(text)


@main.command()
@_market_options
@click.option("--paths", type=int, default=10_000, show_default=True)
@click.option("--steps", type=int, default=50, show_default=True)
@click.option("--seed", type=int, default=20260823, show_default=True)
@click.option("--grid", default="800x800", show_default=True,
              help="Grid for the boundary used by the formula integral.")
@click.option("--max-dump", type=int, default=64, show_default=True,
              help="Number of paths written to the CSV.")
@click.option("--out", type=str, required=True, help="Per-path CSV output path.")
def kprocess(config_path, paths, steps, seed, grid, max_dump, out, **flags):
    """Increasing process along simulated paths, extracted two ways."""
    params, spec, point = _resolve_problem(config_path, **flags)
    seed = _resolve_seed(seed)
    n_space, n_time = _parse_grid(grid)
    try:
        sol_pde = pde.solve_obstacle(params, spec, pde.GridSpec.default(params, spec, n_space, n_time))
    except SolverError as exc:
        click.echo(f"solver failure: {exc}", err=True)
        sys.exit(1)
    bnd = pde.extract_boundary(sol_pde)
    sched = TimeSchedule.uniform(point.s, params.T, steps)
    bundle = simulate_paths(params, point, sched, paths, seed=seed)
    sol = bsde_mod.snell_lsmc(bundle, spec, params, bsde_mod.RegressionBasis(), compute_z=False)
    k_tilde = bsde_mod.k_formula(bundle, spec, params, boundary=bnd)
    sup = np.abs(sol.k - k_tilde).max(axis=1)

    n_dump = min(max_dump, paths)
    with open(out, "w", newline="") as fh:
        fh.write("path_id,time,x,y,k_dm,k_formula\n")
        for p in range(n_dump):
            for k, t in enumerate(sched.times):
                fh.write(
                    f"{p},{_fmt(t)},{_fmt(bundle.values[p, k])},{_fmt(sol.y[p, k])},"
                    f"{_fmt(sol.k[p, k])},{_fmt(k_tilde[p, k])}\n"
                )
    _emit(
        {
            "paths": paths,
            "steps": steps,
            "seed": seed,
            "csv": out,
            "paths_written": n_dump,
            "sup_discrepancy_mean": float(sup.mean()),
            "sup_discrepancy_max": float(sup.max()),
            "y0": sol.y0,
            "y0_stderr": sol.y0_stderr,
        }
    )


@main.command()
@click.option("--config", "config_path", type=str, default=None,
              help="Suite configuration JSON (default: shipped configuration).")
@click.option("--out", type=str, default=None, help="Report JSON output path.")
@click.option("--csv", "csv_path", type=str, default=None, help="Flat CSV output path.")
def validate(config_path, out, csv_path):
    """Run the cross-method equivalence suite; exit 0 iff all checks pass."""
    if config_path is None:
        cfg = harness.SuiteConfig.default()
    else:
        try:
            with open(config_path) as fh:
                cfg = harness.SuiteConfig.from_json(fh.read())
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            click.echo(f"bad suite config: {exc}", err=True)
            sys.exit(2)
    report = harness.run_equivalence_suite(cfg)
    text = report.to_json()
    if out is None:
        click.echo(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)
    if csv_path is not None:
        report.write_csv(csv_path)
    for c in report.checks:
        status = "PASS" if c.passed else "FAIL"
        click.echo(
            f"{status} {c.param_set}/{c.check}: measured={c.measured:.6g} "
            f"tolerance={c.tolerance:.6g}",
            err=True,
        )
    sys.exit(0 if report.all_passed else 1)


if __name__ == "__main__":
    main()
