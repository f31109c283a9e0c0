import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from fragsim.metrics import RunResult
from fragsim.stats import (
    ALIGN_COLUMNS,
    MixtureGroupedSample,
    aggregate_rows,
    alignment_rows,
    alignment_test,
    bootstrap_ci,
    one_sample_t_test,
    percentile_rank_bounds,
    self_alignment_experiment,
    write_rows,
)
from oracles import bootstrap_oracle


def synthetic(seed, m=40, runs=5, loc=1000, spread=300):
    rng = np.random.default_rng(seed)
    return [rng.integers(loc - spread, loc + spread, size=runs).tolist() for _ in range(m)]


def test_rank_bounds():
    assert percentile_rank_bounds(95, 1000) == (25, 975)
    assert percentile_rank_bounds(99, 1000) == (5, 995)
    assert percentile_rank_bounds(95, 500) == (13, 488)
    assert percentile_rank_bounds(95, 1) == (1, 1)


def test_constant_sample_degenerate_ci():
    s = MixtureGroupedSample([[7.0, 7.0]] * 10)
    rep = bootstrap_ci(s, B=200, draw_size=5, rng=np.random.default_rng(0))
    assert rep.ci[95] == (7.0, 7.0) and rep.se == 0.0 and np.all(rep.means == 7.0)
    assert alignment_test(rep, 7.0).accept == {95: True, 99: True}


def test_two_point_support():
    s = MixtureGroupedSample([[0.0], [10.0]])
    rep = bootstrap_ci(s, B=5000, draw_size=1, rng=np.random.default_rng(1))
    assert set(rep.means.tolist()) == {0.0, 10.0}


def test_draw_size_bounds():
    s = MixtureGroupedSample([[1.0], [2.0]])
    with pytest.raises(ValueError):
        bootstrap_ci(s, B=10, draw_size=3)
    with pytest.raises(ValueError):
        MixtureGroupedSample([[1.0], []])


@pytest.mark.parametrize("seed", range(5))
def test_matches_independent_resampler(seed):
    groups = synthetic(seed)
    rep = bootstrap_ci(MixtureGroupedSample(groups), 300, 25, (95, 99), np.random.default_rng(seed))
    means, ci, se = bootstrap_oracle(groups, 300, 25, (95, 99), np.random.default_rng(seed))
    assert rep.means.tolist() == means
    assert rep.ci == ci
    assert rep.se == pytest.approx(se, rel=1e-12)


def test_unequal_group_sizes_weight_by_runs():
    s = MixtureGroupedSample([[0.0], [10.0, 10.0, 10.0]])
    assert s.mean([0, 1]) == 7.5
    assert s.mean() == 7.5


def test_target_below_all_means_rejects():
    rep = bootstrap_ci(MixtureGroupedSample(synthetic(0)), 200, 20, rng=np.random.default_rng(0))
    rep = alignment_test(rep, rep.means.min() - 1)
    assert rep.accept == {95: False, 99: False}
    assert rep.diff_ci[95][0] > 0


def test_target_on_upper_endpoint_accepts():
    rep = bootstrap_ci(MixtureGroupedSample(synthetic(1)), 200, 20, rng=np.random.default_rng(0))
    hi = rep.ci[95][1]
    assert alignment_test(rep, hi).accept[95]
    assert rep.diff_ci[95][1] == 0.0
    assert not alignment_test(rep, np.nextafter(rep.ci[99][1], np.inf)).accept[99]


def test_translation_leaves_decisions_unchanged():
    groups = synthetic(2)
    shifted = [[v + 12_345 for v in g] for g in groups]
    for target in (900, 1000, 1010, 1100):
        a = alignment_test(bootstrap_ci(MixtureGroupedSample(groups), 300, 20, rng=np.random.default_rng(3)), target)
        b = alignment_test(
            bootstrap_ci(MixtureGroupedSample(shifted), 300, 20, rng=np.random.default_rng(3)), target + 12_345
        )
        assert a.accept == b.accept


def test_permuting_runs_within_mixture_changes_nothing():
    groups = synthetic(4)
    flipped = [g[::-1] for g in groups]
    a = bootstrap_ci(MixtureGroupedSample(groups), 300, 20, rng=np.random.default_rng(9))
    b = bootstrap_ci(MixtureGroupedSample(flipped), 300, 20, rng=np.random.default_rng(9))
    assert a.ci == b.ci and np.array_equal(a.means, b.means)


def test_mean_of_means_converges_to_sample_mean():
    s = MixtureGroupedSample(synthetic(5, m=60))
    rep = bootstrap_ci(s, B=100_000, draw_size=30, rng=np.random.default_rng(5))
    assert abs(rep.mean_of_means - s.mean()) <= 3 * rep.se / np.sqrt(100_000)


def test_t_test_symmetric_values_p_one():
    assert one_sample_t_test([9.0, 11.0, 8.0, 12.0], 10.0) == pytest.approx(1.0, abs=1e-12)


def test_t_test_shifted_values_p_zero():
    assert one_sample_t_test([20.0, 20.001, 19.999], 10.0) < 1e-6


def test_t_test_zero_variance():
    assert one_sample_t_test([3.0, 3.0], 3.0) == 1.0
    assert one_sample_t_test([3.0, 3.0], 4.0) == 0.0
    with pytest.raises(ValueError):
        one_sample_t_test([1.0], 0.0)


def test_t_test_matches_scipy_fixed_data():
    x = [27_310.5, 27_620.0, 27_455.25, 27_390.0, 27_501.75, 27_700.0]
    assert one_sample_t_test(x, 27_482) == pytest.approx(sps.ttest_1samp(x, 27_482).pvalue, abs=1e-10)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-10**6, 10**6), min_size=2, max_size=200), st.integers(-10**6, 10**6))
def test_t_test_matches_scipy(values, target):
    if len(set(values)) == 1:
        return
    assert one_sample_t_test(values, target) == pytest.approx(sps.ttest_1samp(values, target).pvalue, abs=1e-10)


def test_self_alignment_constant_sample_never_rejects():
    s = MixtureGroupedSample([[5.0, 5.0]] * 30)
    res = self_alignment_experiment(s, trials=10, holdout=10, draw_size=10, B=50, rng=np.random.default_rng(0))
    assert set(res.rates().values()) == {0.0}
    assert set(res.rates()) == {("bootstrap", "95"), ("bootstrap", "99"), ("t-test", "0.05"), ("t-test", "0.01")}


def test_self_alignment_needs_enough_mixtures():
    with pytest.raises(ValueError):
        self_alignment_experiment(MixtureGroupedSample([[1.0]] * 10), trials=1, holdout=6, draw_size=5, B=10)


def test_self_alignment_reproducible():
    s = MixtureGroupedSample(synthetic(6, m=80))
    a = self_alignment_experiment(s, 20, 30, 30, 100, np.random.default_rng(4))
    b = self_alignment_experiment(s, 20, 30, 30, 100, np.random.default_rng(4))
    assert a == b


def test_self_alignment_gaussian_calibration():
    # holdout small next to the pool, so target and remainder are close to independent
    rng = np.random.default_rng(8)
    s = MixtureGroupedSample(rng.normal(0, 1, size=(2000, 1)).tolist())
    res = self_alignment_experiment(s, trials=400, holdout=50, draw_size=50, B=400, rng=np.random.default_rng(2))
    rate = res.rates()[("bootstrap", "95")]
    assert 0.02 <= rate <= 0.09


def rr(exp, mix, run, zi, nbbo=None, config="cda", latency=0):
    return RunResult(exp, "3", config, latency, mix, run, 0, zi, 0.0, nbbo, None, None, 2, 0)


def test_alignment_rows_skip_missing_targets():
    results = [rr("a", m, r, 10.0 + m) for m in range(4) for r in range(2)] + [rr("b", 0, 0, 1.0)]
    warnings = []
    rows = alignment_rows(results, {("a", "zi_surplus"): 11.0}, B=100, draw_size=4, warn=warnings.append)
    assert len(rows) == 1 and rows[0]["mixtures"] == 4 and rows[0]["accept95"] == 1
    assert len(warnings) == 1 and "'b'" in warnings[0]
    buf = io.StringIO()
    write_rows(rows, ALIGN_COLUMNS, buf)
    assert buf.getvalue().splitlines()[0] == ",".join(ALIGN_COLUMNS)


def test_aggregate_skips_absent():
    rows = aggregate_rows([rr("a", 0, 0, 10.0, nbbo=4.0), rr("a", 0, 1, 20.0)])
    by_metric = {r["metric"]: r for r in rows}
    assert by_metric["zi_surplus"]["mean"] == 15.0 and by_metric["zi_surplus"]["n"] == 2
    assert by_metric["nbbo_spread_median"]["mean"] == 4.0 and by_metric["nbbo_spread_median"]["n"] == 1
    assert by_metric["exec_time_mean"]["mean"] == "" and by_metric["exec_time_mean"]["n"] == 0


def test_aggregate_long_format_grid():
    results = [rr(f"e-{c}-{d}", 0, 0, float(d), config=c, latency=d) for c in ("2mnola", "2mla") for d in (0, 25)]
    rows = aggregate_rows(results)
    keys = [(r["config"], r["latency"], r["metric"]) for r in rows]
    assert len(keys) == len(set(keys)) == 4 * 7
    assert {r["mean"] for r in rows if r["metric"] == "zi_surplus"} == {0.0, 25.0}
