import numpy as np
import pytest

from amerikan import (
    EvalPoint,
    GridSpec,
    MarketParams,
    OptionKind,
    OptionSpec,
    RegressionBasis,
    TimeSchedule,
    doob_meyer_K,
    driver_bsde_solve,
    k_formula,
    oracle_price,
    payoff,
    prop_bound_check,
    simulate_paths,
    snell_lsmc,
    solve_obstacle,
)
from amerikan.bsde import (
    _fit,
    snell_representation_check,
    z_identification_check,
)
from amerikan.lattice import european_closed_form

PARAMS = MarketParams(r=0.05, d=0.0, sigma=0.2, T=1.0)
PUT = OptionSpec(OptionKind.PUT, 100.0)
START = EvalPoint(0.0, 100.0)
SCHED = TimeSchedule.uniform(0.0, 1.0, 25)
BASIS = RegressionBasis()
N_PATHS = 20_000
SEED = 321


@pytest.fixture(scope="module")
def paths():
    return simulate_paths(PARAMS, START, SCHED, N_PATHS, seed=SEED)


@pytest.fixture(scope="module")
def snell_sol(paths):
    return snell_lsmc(paths, PUT, PARAMS, BASIS)


@pytest.fixture(scope="module")
def driver_sol(paths):
    return driver_bsde_solve(paths, PUT, PARAMS, BASIS)


@pytest.fixture(scope="module")
def reference():
    return oracle_price(PARAMS, PUT, START, steps=8000)


def test_snell_determinism(paths, snell_sol):
    again = snell_lsmc(paths, PUT, PARAMS, BASIS)
    assert again.y0 == snell_sol.y0
    assert again.y0_high_bias == snell_sol.y0_high_bias
    assert np.array_equal(again.y, snell_sol.y)
    assert np.array_equal(again.k, snell_sol.k)


def test_snell_estimators_bracket_reference(snell_sol, reference):
    # low-bias rule evaluation cannot beat the true value by more than noise
    assert snell_sol.y0 <= reference + 3.0 * snell_sol.y0_stderr
    # both estimates must sit near the reference: MC noise plus a modest
    # time-discretization budget at 25 steps
    budget = 3.0 * snell_sol.y0_stderr + 0.1
    assert abs(snell_sol.y0 - reference) <= budget
    assert abs(snell_sol.y0_high_bias - reference) <= 0.15


def test_driver_matches_reference(driver_sol, reference):
    budget = 3.0 * driver_sol.y0_stderr + 0.1
    assert abs(driver_sol.y0 - reference) <= budget


def test_reflection_keeps_value_above_payoff(snell_sol, paths):
    g = payoff(PUT, paths.values)
    assert np.all(snell_sol.y >= g - 1e-9 * PUT.strike)


def test_terminal_value_is_payoff(snell_sol, driver_sol, paths):
    g_T = payoff(PUT, paths.values[:, -1])
    np.testing.assert_allclose(snell_sol.y[:, -1], g_T, atol=1e-12)
    np.testing.assert_allclose(driver_sol.y[:, -1], g_T, atol=1e-12)


def test_increasing_process_shape(snell_sol):
    k = snell_sol.k
    assert np.all(k[:, 0] == 0.0)
    assert np.all(k >= 0.0)
    assert np.all(np.diff(k, axis=1) >= -1e-12)


def test_doob_meyer_matches_stored(snell_sol):
    np.testing.assert_allclose(
        doob_meyer_K(snell_sol, PUT, PARAMS), snell_sol.k, atol=1e-12
    )


def test_zero_rate_put_has_no_reflection():
    params = MarketParams(r=0.0, d=0.02, sigma=0.2, T=1.0)
    p = simulate_paths(params, START, SCHED, N_PATHS, seed=SEED)
    sol = snell_lsmc(p, PUT, params, BASIS, compute_z=False)
    euro = european_closed_form(params, PUT, 0.0, 100.0)
    assert abs(sol.y0 - euro) <= 3.0 * sol.y0_stderr + 0.05
    # exercise-region cash-flow rate vanishes, so the formula integral is zero
    kt = k_formula(p, PUT, params, y_matrix=sol.y)
    assert np.all(kt == 0.0)


def test_k_formula_criteria_are_exclusive(paths, snell_sol):
    with pytest.raises(ValueError):
        k_formula(paths, PUT, PARAMS)
    with pytest.raises(ValueError):
        k_formula(
            paths,
            PUT,
            PARAMS,
            boundary=object(),
            y_matrix=snell_sol.y,
        )


def test_k_formula_boundary_route_agrees_with_y_route(paths, snell_sol):
    grid = GridSpec.default(PARAMS, PUT, 300, 300)
    from amerikan import extract_boundary

    bnd = extract_boundary(solve_obstacle(PARAMS, PUT, grid))
    k_b = k_formula(paths, PUT, PARAMS, boundary=bnd)
    k_y = k_formula(paths, PUT, PARAMS, y_matrix=snell_sol.y)
    # both integrate the same rate over nearby contact sets; at 25 time steps
    # the Monte Carlo contact set is noticeably wider than the sharp boundary
    assert abs(k_b[:, -1].mean() - k_y[:, -1].mean()) <= 0.2


def test_prop_bound_identical_processes(snell_sol):
    rep = prop_bound_check(snell_sol.k[:500], snell_sol.k[:500])
    assert rep.max_violation == 0.0
    assert rep.violation_fraction == 0.0
    assert rep.n_pairs > 0


def test_prop_bound_on_solution(paths, snell_sol):
    k_tilde = k_formula(paths, PUT, PARAMS, y_matrix=snell_sol.y)
    rep = prop_bound_check(snell_sol.k[:2000], k_tilde[:2000])
    assert rep.violation_fraction <= 0.05


def test_driver_has_no_reflection_process(driver_sol):
    assert driver_sol.k is None
    with pytest.raises(ValueError):
        doob_meyer_K(driver_sol, PUT, PARAMS)


def test_representation_identity(driver_sol):
    rep = snell_representation_check(driver_sol, PUT, PARAMS, BASIS, n_boot=50)
    assert rep.ok
    assert rep.residuals.size == rep.thresholds.size


def test_representation_rejects_snell_solution(snell_sol):
    with pytest.raises(ValueError):
        snell_representation_check(snell_sol, PUT, PARAMS, BASIS)


def test_z_identification(snell_sol):
    pde_sol = solve_obstacle(PARAMS, PUT, GridSpec.default(PARAMS, PUT, 300, 300))
    rep = z_identification_check(snell_sol, pde_sol)
    assert rep.rel_l2 <= 0.25


def test_z_check_needs_gradients(paths):
    sol = snell_lsmc(paths, PUT, PARAMS, BASIS, compute_z=False)
    pde_sol = solve_obstacle(PARAMS, PUT, GridSpec.default(PARAMS, PUT, 100, 100))
    with pytest.raises(ValueError):
        z_identification_check(sol, pde_sol)


def test_snell_needs_paths():
    single = simulate_paths(PARAMS, START, SCHED, 1, seed=1)
    with pytest.raises(ValueError):
        snell_lsmc(single, PUT, PARAMS, BASIS)


def test_driver_step_size_guard():
    wild = MarketParams(r=0.6, d=0.0, sigma=0.2, T=2.0)
    sched = TimeSchedule.uniform(0.0, 2.0, 1)
    p = simulate_paths(wild, START, sched, 100, seed=2)
    with pytest.raises(ValueError):
        driver_bsde_solve(p, PUT, wild, BASIS)


def test_basis_validation():
    with pytest.raises(ValueError):
        RegressionBasis(degree=0)


def test_fit_warns_on_rank_deficiency():
    rng = np.random.Generator(np.random.Philox(key=5))
    col = rng.normal(size=200)
    design = np.column_stack([np.ones(200), col, col])  # duplicated column
    target = 2.0 + 3.0 * col
    with pytest.warns(UserWarning, match="rank-deficient"):
        coef, fitted = _fit(design, target, [], "dup")
    np.testing.assert_allclose(fitted, target, atol=1e-8)
