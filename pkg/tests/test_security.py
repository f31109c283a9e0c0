import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fragsim.security import (
    FundamentalParams,
    FundamentalSeries,
    fundamental_recurrence,
    generate_fundamental,
    round_half_away,
)


def series_from(values, kappa=0.05, mean=100_000.0):
    params = FundamentalParams(mean, kappa, 0.0, len(values) - 1)
    return FundamentalSeries(params, np.asarray(values, dtype=np.float64))


def test_zero_shocks_stay_at_mean():
    s = generate_fundamental(FundamentalParams(100_000, 0.05, 0.0, 50), np.random.default_rng(0))
    assert np.all(s.values == 100_000.0)


def test_full_reversion():
    out = fundamental_recurrence(np.zeros(3), 100_000.0, 1.0)
    assert list(out) == [100_000.0] * 4


def test_recurrence_hand_value():
    # a -10000 shock lands on 90000; one quiet step then reverts 5% of the gap
    out = fundamental_recurrence(np.array([-10_000.0, 0.0]), 100_000.0, 0.05)
    assert out[1] == 90_000.0
    assert out[2] == 90_500.0


def test_clipped_at_zero():
    out = fundamental_recurrence(np.array([-1e9, 0.0]), 100_000.0, 0.05)
    assert out[1] == 0.0 and out[2] == pytest.approx(5_000.0)


@pytest.mark.parametrize("x, want", [(100_000.0, 100_000), (99_999.5, 100_000), (0.2, 0), (2.5, 3), (-2.5, -3),
                                     (0.49999999999999994, 0), (-0.4, 0)])
def test_rounding_rule(x, want):
    assert round_half_away(x) == want


def test_lookup_rounds_and_checks_range():
    s = series_from([100_000.0, 99_999.5, 0.2])
    assert s.at(1) == 100_000 and s.at(2) == 0
    with pytest.raises(IndexError):
        s.at(0)
    with pytest.raises(IndexError):
        s.at(3)


def test_estimate_at_horizon_is_rounded_value():
    s = series_from([100_000.0, 95_000.4, 93_210.6])
    assert s.estimate_terminal(2) == 93_211


def test_estimate_without_reversion():
    s = series_from([100_000.0, 91_234.4, 0.0], kappa=0.0)
    assert s.estimate_terminal(1) == 91_234


def test_estimate_two_steps_out():
    s = series_from([100_000.0, 90_000.0, 0.0, 0.0], kappa=0.05)
    assert s.estimate_terminal(1) == 90_975


def test_exactly_horizon_draws_consumed():
    rng = np.random.default_rng(9)
    generate_fundamental(FundamentalParams(100_000, 0.05, 5e6, 123), rng)
    ref = np.random.default_rng(9)
    ref.normal(size=123)
    assert rng.random() == ref.random()


def test_series_non_negative_and_sized():
    s = generate_fundamental(FundamentalParams(100, 0.01, 1e6, 500), np.random.default_rng(1))
    assert len(s) == 501 and s.values[0] == 100 and np.all(s.values >= 0)


def test_invalid_params():
    with pytest.raises(ValueError):
        FundamentalParams(kappa=1.5)
    with pytest.raises(ValueError):
        FundamentalParams(shock_var=-1)


@given(st.floats(0, 200_000), st.floats(0, 200_000), st.integers(1, 40))
def test_estimate_monotone_in_current_value(a, b, t):
    lo, hi = sorted((a, b))
    horizon = 40
    va = np.full(horizon + 1, 100_000.0)
    vb = va.copy()
    va[t], vb[t] = lo, hi
    assert series_from(va).estimate_terminal(t) <= series_from(vb).estimate_terminal(t)


def test_series_csv(tmp_path):
    s = series_from([100_000.0, 1.5])
    s.to_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text() == "t,r_t\n0,100000.0\n1,1.5\n"
