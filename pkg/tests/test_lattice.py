import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amerikan import (
    EvalPoint,
    MarketParams,
    OptionKind,
    OptionSpec,
    OracleError,
    TreeConfig,
    european_quadrature,
    oracle_price,
    payoff,
    tree_price_american,
    tree_price_european,
)
from amerikan.lattice import european_closed_form, european_delta

PARAMS = MarketParams(r=0.05, d=0.02, sigma=0.2, T=1.0)
PUT = OptionSpec(OptionKind.PUT, 100.0)
CALL = OptionSpec(OptionKind.CALL, 100.0)
AT_MONEY = EvalPoint(0.0, 100.0)


def test_european_tree_matches_closed_form():
    cfg = TreeConfig(steps=4000)
    for spec in (PUT, CALL):
        tree = tree_price_european(PARAMS, spec, AT_MONEY, cfg)
        exact = european_closed_form(PARAMS, spec, 0.0, 100.0)
        assert tree == pytest.approx(exact, rel=5e-4)


def test_quadrature_matches_closed_form():
    for spec in (PUT, CALL):
        for x in (60.0, 100.0, 170.0):
            quad = european_quadrature(PARAMS, spec, EvalPoint(0.0, x))
            exact = european_closed_form(PARAMS, spec, 0.0, x)
            assert quad == pytest.approx(exact, abs=1e-8)


def test_american_dominates_european_and_payoff():
    cfg = TreeConfig(steps=2000)
    for spec in (PUT, CALL):
        amer = tree_price_american(PARAMS, spec, AT_MONEY, cfg)
        euro = tree_price_european(PARAMS, spec, AT_MONEY, cfg)
        assert amer >= euro - 1e-12
        assert amer >= payoff(spec, 100.0)


def test_tree_self_convergence():
    diffs = []
    for n in (250, 500, 1000, 2000):
        a = tree_price_american(PARAMS, PUT, AT_MONEY, TreeConfig(steps=n))
        b = tree_price_american(PARAMS, PUT, AT_MONEY, TreeConfig(steps=2 * n))
        diffs.append(abs(b - a))
    assert all(later < earlier for earlier, later in zip(diffs, diffs[1:]))


def test_oracle_richardson_close_to_fine_tree():
    rich = oracle_price(PARAMS, PUT, AT_MONEY, steps=4000)
    fine = tree_price_american(PARAMS, PUT, AT_MONEY, TreeConfig(steps=16000))
    assert rich == pytest.approx(fine, abs=2e-4)


def test_expired_contract_returns_payoff():
    point = EvalPoint(1.0, 80.0)
    assert tree_price_american(PARAMS, PUT, point, TreeConfig(steps=100)) == 20.0
    assert european_quadrature(PARAMS, PUT, point) == 20.0


def test_probability_breakdown_raises():
    wild = MarketParams(r=5.0, d=0.0, sigma=0.01, T=1.0)
    with pytest.raises(OracleError):
        tree_price_american(wild, PUT, AT_MONEY, TreeConfig(steps=4))


def test_tree_config_validation():
    with pytest.raises(ValueError):
        TreeConfig(steps=0)
    with pytest.raises(ValueError):
        TreeConfig(steps=100, parameterization="JR")


@given(
    strike=st.floats(50.0, 150.0),
    x=st.floats(50.0, 150.0),
    sigma=st.floats(0.1, 0.5),
)
@settings(max_examples=25, deadline=None)
def test_put_price_decreasing_in_spot(strike, x, sigma):
    params = MarketParams(r=0.03, d=0.0, sigma=sigma, T=0.5)
    spec = OptionSpec(OptionKind.PUT, strike)
    cfg = TreeConfig(steps=200)
    lo = tree_price_american(params, spec, EvalPoint(0.0, x), cfg)
    hi = tree_price_american(params, spec, EvalPoint(0.0, x * 1.1), cfg)
    assert hi <= lo + 1e-9


@given(strike=st.floats(50.0, 150.0), bump=st.floats(0.0, 20.0))
@settings(max_examples=25, deadline=None)
def test_put_price_increasing_in_strike(strike, bump):
    params = MarketParams(r=0.03, d=0.0, sigma=0.25, T=0.5)
    cfg = TreeConfig(steps=200)
    lo = tree_price_american(params, OptionSpec(OptionKind.PUT, strike), AT_MONEY, cfg)
    hi = tree_price_american(params, OptionSpec(OptionKind.PUT, strike + bump), AT_MONEY, cfg)
    assert hi >= lo - 1e-9


def test_closed_form_put_call_parity():
    for x in (70.0, 100.0, 140.0):
        call = european_closed_form(PARAMS, CALL, 0.0, x)
        put = european_closed_form(PARAMS, PUT, 0.0, x)
        forward = x * np.exp(-PARAMS.d * PARAMS.T) - 100.0 * np.exp(-PARAMS.r * PARAMS.T)
        assert call - put == pytest.approx(forward, abs=1e-10)


def test_closed_form_delta_is_derivative():
    h = 1e-4
    for spec in (PUT, CALL):
        for x in (80.0, 100.0, 125.0):
            fd = (
                european_closed_form(PARAMS, spec, 0.2, x + h)
                - european_closed_form(PARAMS, spec, 0.2, x - h)
            ) / (2 * h)
            assert european_delta(PARAMS, spec, 0.2, x) == pytest.approx(fd, abs=1e-6)


def test_closed_form_vectorizes_with_edge_cases():
    x = np.array([0.0, 50.0, 100.0, 200.0])
    t = np.array([0.0, 0.5, 1.0, 1.0])
    val = european_closed_form(PARAMS, PUT, t, x)
    assert val.shape == (4,)
    assert val[0] == pytest.approx(100.0 * np.exp(-PARAMS.r * PARAMS.T))
    assert val[2] == pytest.approx(payoff(PUT, 100.0))  # expired at the money
