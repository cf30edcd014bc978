import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amerikan import (
    EvalPoint,
    MarketParams,
    OptionKind,
    OptionSpec,
    PathBundle,
    TimeSchedule,
    payoff,
    simulate_paths,
)
from amerikan.model import (
    brownian_increments,
    driver_gain,
    exercise_rate,
    full_driver,
    indicator_slack,
    transition_density,
)

prices = st.floats(min_value=0.0, max_value=1e6, allow_nan=False)
strikes = st.floats(min_value=1e-3, max_value=1e4, allow_nan=False)


@given(x=prices, strike=strikes)
def test_payoff_nonnegative_and_complementary(x, strike):
    call = payoff(OptionSpec(OptionKind.CALL, strike), x)
    put = payoff(OptionSpec(OptionKind.PUT, strike), x)
    assert call >= 0 and put >= 0
    assert call - put == pytest.approx(x - strike, abs=1e-9 * max(1.0, strike, x))
    assert put <= strike


@given(x=prices, strike=strikes, r=st.floats(0.0, 0.5), d=st.floats(0.0, 0.5))
def test_exercise_rate_sign(x, strike, r, d):
    params = MarketParams(r=r, d=d, sigma=0.2, T=1.0)
    put = exercise_rate(OptionSpec(OptionKind.PUT, strike), params, x)
    call = exercise_rate(OptionSpec(OptionKind.CALL, strike), params, x)
    assert put >= 0 and call >= 0
    assert put == pytest.approx(max(r * strike - d * x, 0.0))
    assert call == pytest.approx(max(d * x - r * strike, 0.0))


@given(
    x=st.floats(1.0, 500.0),
    y1=st.floats(-10.0, 500.0),
    dy=st.floats(0.0, 100.0),
)
@settings(max_examples=200)
def test_full_driver_non_increasing_in_y(x, y1, dy):
    params = MarketParams(r=0.05, d=0.01, sigma=0.2, T=1.0)
    spec = OptionSpec(OptionKind.PUT, 100.0)
    assert full_driver(spec, params, x, y1 + dy) <= full_driver(spec, params, x, y1) + 1e-12


def test_driver_gating_is_inclusive():
    params = MarketParams(r=0.05, d=0.0, sigma=0.2, T=1.0)
    spec = OptionSpec(OptionKind.PUT, 100.0)
    x = 80.0
    g = payoff(spec, x)
    slack = indicator_slack(spec.strike)
    assert driver_gain(spec, params, x, g) == pytest.approx(0.05 * 100.0)
    assert driver_gain(spec, params, x, g + slack / 2) == pytest.approx(0.05 * 100.0)
    assert driver_gain(spec, params, x, g + 1e-6) == 0.0


def test_degenerate_drivers_vanish():
    spec_call = OptionSpec(OptionKind.CALL, 100.0)
    params_d0 = MarketParams(r=0.05, d=0.0, sigma=0.2, T=1.0)
    x = np.linspace(1.0, 400.0, 50)
    assert np.all(exercise_rate(spec_call, params_d0, x) == 0.0)
    spec_put = OptionSpec(OptionKind.PUT, 100.0)
    params_r0 = MarketParams(r=0.0, d=0.03, sigma=0.2, T=1.0)
    assert np.all(exercise_rate(spec_put, params_r0, x) == 0.0)


class TestTimeSchedule:
    def test_uniform(self):
        sched = TimeSchedule.uniform(0.0, 1.0, 4)
        assert sched.n_steps == 4
        np.testing.assert_allclose(sched.dt, 0.25)
        assert sched.start == 0.0 and sched.end == 1.0

    def test_rejects_non_increasing(self):
        with pytest.raises(ValueError):
            TimeSchedule(np.array([0.0, 0.5, 0.5, 1.0]))

    def test_rejects_short(self):
        with pytest.raises(ValueError):
            TimeSchedule(np.array([0.3]))

    def test_times_are_read_only(self):
        sched = TimeSchedule.uniform(0.0, 1.0, 4)
        with pytest.raises(ValueError):
            sched.times[0] = -1.0


class TestSimulation:
    params = MarketParams(r=0.05, d=0.02, sigma=0.25, T=1.0)
    sched = TimeSchedule.uniform(0.0, 1.0, 16)

    def test_shape_and_start(self):
        b = simulate_paths(self.params, EvalPoint(0.0, 90.0), self.sched, 1000, seed=3)
        assert b.values.shape == (1000, 17)
        assert np.all(b.values[:, 0] == 90.0)
        assert np.all(b.values > 0)

    def test_seed_determinism(self):
        a = simulate_paths(self.params, EvalPoint(0.0, 90.0), self.sched, 500, seed=11)
        b = simulate_paths(self.params, EvalPoint(0.0, 90.0), self.sched, 500, seed=11)
        assert np.array_equal(a.values, b.values)
        c = simulate_paths(self.params, EvalPoint(0.0, 90.0), self.sched, 500, seed=12)
        assert not np.array_equal(a.values, c.values)

    def test_block_substreams_give_prefix_stability(self):
        # growing the path count must not change earlier blocks, which is
        # what makes the result independent of how blocks are scheduled
        small = simulate_paths(self.params, EvalPoint(0.0, 90.0), self.sched, 5000, seed=11)
        large = simulate_paths(self.params, EvalPoint(0.0, 90.0), self.sched, 9000, seed=11)
        assert np.array_equal(small.values[:4096], large.values[:4096])

    def test_zero_spot_absorbs(self):
        b = simulate_paths(self.params, EvalPoint(0.0, 0.0), self.sched, 10, seed=5)
        assert np.all(b.values == 0.0)

    def test_martingale_property(self):
        b = simulate_paths(self.params, EvalPoint(0.0, 100.0), self.sched, 200_000, seed=21)
        growth = np.exp((self.params.r - self.params.d) * self.sched.times)
        ratios = b.values.mean(axis=0) / (100.0 * growth)
        assert np.max(np.abs(ratios - 1.0)) < 5e-3

    def test_brownian_increments_roundtrip(self):
        b = simulate_paths(self.params, EvalPoint(0.0, 90.0), self.sched, 100, seed=7)
        dw = brownian_increments(self.params, b)
        drift = (self.params.r - self.params.d - 0.5 * self.params.sigma**2) * self.sched.dt
        rebuilt = 90.0 * np.exp(
            np.cumsum(drift[None, :] + self.params.sigma * dw, axis=1)
        )
        np.testing.assert_allclose(rebuilt, b.values[:, 1:], rtol=1e-12)

    def test_bundle_validates_shape(self):
        with pytest.raises(ValueError):
            PathBundle(schedule=self.sched, values=np.ones((3, 4)), seed=0)


class TestTransitionDensity:
    params = MarketParams(r=0.05, d=0.0, sigma=0.2, T=1.0)

    def test_zero_below_origin(self):
        assert transition_density(self.params, 0.0, 100.0, 0.5, -1.0) == 0.0
        assert transition_density(self.params, 0.0, 100.0, 0.5, 0.0) == 0.0

    def test_normalizes(self):
        from scipy import integrate

        val, err = integrate.quad(
            lambda y: transition_density(self.params, 0.0, 100.0, 1.0, y),
            0.0,
            np.inf,
            limit=200,
        )
        assert abs(val - 1.0) < 1e-8

    def test_requires_forward_time(self):
        with pytest.raises(ValueError):
            transition_density(self.params, 1.0, 100.0, 1.0, 90.0)


def test_market_params_validation():
    with pytest.raises(ValueError):
        MarketParams(r=0.05, d=0.0, sigma=0.0, T=1.0)
    with pytest.raises(ValueError):
        MarketParams(r=-0.01, d=0.0, sigma=0.2, T=1.0)
    with pytest.raises(ValueError):
        MarketParams(r=0.05, d=0.0, sigma=0.2, T=0.0)


def test_option_spec_coerces_kind_string():
    spec = OptionSpec("put", 100.0)
    assert spec.kind is OptionKind.PUT
    with pytest.raises(ValueError):
        OptionSpec(OptionKind.CALL, -5.0)
