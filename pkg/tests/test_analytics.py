import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from flexsim import thermal as th
from flexsim.analytics import (
    AnalysisError,
    Contents,
    LoadShape,
    cluster_shapes,
    compute_epi,
    correlate,
    estimate_deadband,
    estimate_duty_cycle,
    fit_exponential,
    fit_poisson,
    hourly_profile,
    ks_two_sample,
    normalize_shape,
    sbd,
    weekend_weekday_ratio,
)
from flexsim.analytics.stats import parse_outlier_rule
from flexsim.kernel import DeviceConfig, ScenarioConfig, run_scenario
from flexsim.loadshapes import ARCHETYPE_NAMES, archetype, synthetic_shapes

small_floats = st.floats(-1e3, 1e3, allow_nan=False).map(lambda v: round(v, 3))


# --------------------------------------------------------------------------
# load shapes


def test_constant_shape_is_ones():
    assert normalize_shape([2.0] * 24).values == (1.0,) * 24


def test_zero_shape_stays_zero():
    assert normalize_shape([0.0] * 24).values == (0.0,) * 24


def test_shape_divides_by_max():
    x = [1.0, 2.0, 4.0] + [0.5] * 21
    assert normalize_shape(x).values[:3] == (0.25, 0.5, 1.0)


@pytest.mark.parametrize("bad", [[1.0] * 23, [-1.0] + [1.0] * 23, [math.nan] * 24])
def test_shape_validation(bad):
    with pytest.raises(AnalysisError):
        normalize_shape(bad)


def test_hourly_profile_mean_and_median():
    t = np.arange(0, 3 * 86400, 600.0)
    kw = np.where((t // 86400) == 2, 3.0, 1.0)  # third day triples
    assert np.allclose(hourly_profile(t, kw, 600.0, "mean"), 5.0 / 3)
    assert np.allclose(hourly_profile(t, kw, 600.0, "median"), 1.0)


def test_archetypes_are_distinct_and_normalized():
    shapes = [archetype(n) for n in ARCHETYPE_NAMES]
    assert len(shapes) == 5
    assert all(s.max() == pytest.approx(1.0) and s.min() >= 0 for s in shapes)


def test_identical_shapes_one_cluster():
    x = [archetype("midday")] * 6
    res = cluster_shapes(x, 1)
    assert set(res.assignments.tolist()) == {0}
    assert res.dispersion == pytest.approx(0.0, abs=1e-12)


def test_too_many_clusters():
    with pytest.raises(AnalysisError):
        cluster_shapes([archetype(n) for n in ARCHETYPE_NAMES[:4]], 5)


def test_unknown_distance():
    with pytest.raises(AnalysisError):
        cluster_shapes([archetype("midday")] * 3, 1, distance="dtw")


@pytest.mark.parametrize("distance", ["euclidean_znorm", "shape_based"])
def test_clustering_is_seed_deterministic(distance):
    shapes, _ = synthetic_shapes(4, 0.1, np.random.default_rng(0))
    a = cluster_shapes(shapes, 5, distance, seed=3)
    b = cluster_shapes(shapes, 5, distance, seed=3)
    assert np.array_equal(a.assignments, b.assignments) and np.array_equal(a.centroids, b.centroids)


def test_clustering_accepts_load_shapes():
    shapes, labels = synthetic_shapes(3, 0.02, np.random.default_rng(1))
    objs = [LoadShape(f"d{i}", tuple(s)) for i, s in enumerate(shapes)]
    res = cluster_shapes(objs, 5)
    # members of one archetype always share a cluster at this noise level
    for lab in set(labels.tolist()):
        assert len(set(res.assignments[labels == lab].tolist())) == 1


@settings(max_examples=50, deadline=None)
@given(st.lists(small_floats, min_size=24, max_size=24), st.lists(small_floats, min_size=24, max_size=24))
def test_sbd_bounds_and_identity(x, y):
    x, y = np.array(x), np.array(y)
    assume(np.linalg.norm(x) > 0 and np.linalg.norm(y) > 0)
    d, aligned = sbd(x, y)
    assert 0.0 <= d <= 2.0
    assert aligned.shape == y.shape
    assert sbd(x, x)[0] == pytest.approx(0.0, abs=1e-12)
    assert sbd(x, 3.0 * x)[0] == pytest.approx(0.0, abs=1e-12)


def test_sbd_sees_through_shifts():
    x = archetype("midday")
    shifted = np.concatenate([np.zeros(2), x[:-2]])
    assert sbd(x, shifted)[0] < 0.05


# --------------------------------------------------------------------------
# correlations


def test_linear_pearson_is_one():
    x = np.arange(12.0)
    assert correlate(x, 2 * x + 1).r == pytest.approx(1.0)
    assert correlate(x, 2 * x + 1).p == 0.0


def test_monotone_spearman_is_one():
    x = np.linspace(0, 3, 12)
    assert correlate(x, np.exp(x), "spearman").r == 1.0


def test_missing_pairs_dropped():
    c = correlate([1, 2, None, 4, 5, math.nan], [2, 4, 6, 8, 11, 12])
    assert c.n == 4


@pytest.mark.parametrize("x,y", [([1, 2], [3, 4]), ([1, 1, 1, 1], [1, 2, 3, 4]), ([1, 2, 3], [1, 2])])
def test_correlation_errors(x, y):
    with pytest.raises(AnalysisError):
        correlate(x, y)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(small_floats, small_floats), min_size=3, max_size=40), st.sampled_from(["pearson", "spearman"]))
def test_correlation_properties(pairs, method):
    x, y = map(np.array, zip(*pairs))
    assume(np.ptp(x) > 0 and np.ptp(y) > 0)
    c = correlate(x, y, method)
    assert -1.0 <= c.r <= 1.0 and 0.0 <= c.p <= 1.0
    assert correlate(y, x, method).r == pytest.approx(c.r, abs=1e-12)
    assert correlate(x, -y, method).r == pytest.approx(-c.r, abs=1e-12)
    if method == "spearman":
        assert correlate(np.exp(x / 1e3), y, method).r == pytest.approx(c.r, abs=1e-12)


# --------------------------------------------------------------------------
# KS


def test_ks_identical():
    assert ks_two_sample([1, 2, 3], [1, 2, 3])[0] == 0.0


def test_ks_disjoint():
    assert ks_two_sample([1, 2, 3], [10, 11])[0] == 1.0


def test_ks_small_case():
    assert ks_two_sample([1, 2, 3], [1.5, 2.5, 3.5])[0] == pytest.approx(1 / 3)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=1, max_size=15), st.lists(st.integers(0, 6), min_size=1, max_size=15))
def test_ks_properties(a, b):
    d, p = ks_two_sample(a, b)
    assert d == ks_two_sample(b, a)[0]
    assert 0.0 <= d <= 1.0 and 0.0 <= p <= 1.0
    pooled = sorted(set(a) | set(b))
    brute = max(abs(sum(v <= x for v in a) / len(a) - sum(v <= x for v in b) / len(b)) for x in pooled)
    assert d == brute


def test_ks_matches_scipy_statistic():
    from scipy.stats import ks_2samp

    rng = np.random.default_rng(0)
    a, b = rng.exponential(1, 300), rng.exponential(1.2, 200)
    assert ks_two_sample(a, b)[0] == pytest.approx(ks_2samp(a, b).statistic, abs=1e-15)


# --------------------------------------------------------------------------
# distribution fits


def test_poisson_all_zero_degenerate():
    f = fit_poisson([0] * 10)
    assert f.degenerate and f.parameter == 0.0


def test_poisson_mean():
    assert fit_poisson([1, 2, 3]).parameter == 2.0


def test_poisson_recovery_and_fit():
    counts = np.random.default_rng(8).poisson(0.7, 10_000)
    f = fit_poisson(counts)
    assert f.parameter == pytest.approx(0.7, rel=0.05)
    assert f.p_value > 0.01


def test_poisson_rejects_overdispersed():
    rng = np.random.default_rng(8)
    counts = rng.poisson(rng.gamma(0.5, 2.0, 5000))
    assert fit_poisson(counts).p_value < 0.01


@pytest.mark.parametrize("bad", [[], [1, -1], [0.5, 1]])
def test_poisson_validation(bad):
    with pytest.raises(AnalysisError):
        fit_poisson(bad)


def test_exponential_constant():
    f = fit_exponential([60.0, 60.0, 60.0])
    assert (f.parameter, f.outliers_removed) == (60.0, 0)


def test_exponential_recovery():
    x = np.random.default_rng(5).exponential(258.0, 10_000)
    f = fit_exponential(x, "none")
    assert f.parameter == pytest.approx(258.0, rel=0.05)
    assert f.median == pytest.approx(258.0 * math.log(2), rel=0.05)
    assert f.outliers_removed == 0


def test_exponential_outlier_removed():
    x = np.append(np.random.default_rng(5).exponential(258.0, 10_000), 12_360.0)
    f = fit_exponential(x, "iqr(3)")
    assert f.outliers_removed >= 1
    assert f.parameter == pytest.approx(258.0, rel=0.05)
    assert 12_360.0 > np.percentile(x, 75) + 3 * (np.percentile(x, 75) - np.percentile(x, 25))


@pytest.mark.parametrize("rule,k", [("none", None), ("iqr(3)", 3.0), (" iqr(1.5) ", 1.5)])
def test_outlier_rule_parse(rule, k):
    assert parse_outlier_rule(rule) == k


@pytest.mark.parametrize("bad", [[], [0.0, 1.0], [-3.0]])
def test_exponential_validation(bad):
    with pytest.raises(AnalysisError):
        fit_exponential(bad)


# --------------------------------------------------------------------------
# weekend ratio


def test_identical_days():
    assert weekend_weekday_ratio([(d, 2.0) for d in range(7)]) == (0.0, 0.0)


def test_skewed_weekends_median_above_mean():
    days = [(d, 1.0) for d in range(5) for _ in range(3)]
    days += [(5, 1.28), (5, 1.28), (6, 1.28), (6, 0.7), (6, 0.7)]
    mean_r, median_r = weekend_weekday_ratio(days)
    assert median_r == pytest.approx(0.28) and mean_r < median_r


@pytest.mark.parametrize("days", [[(0, 1.0)], [(5, 1.0), (0, 0.0)], [(7, 1.0), (0, 1.0)]])
def test_weekend_errors(days):
    with pytest.raises(AnalysisError):
        weekend_weekday_ratio(days)


# --------------------------------------------------------------------------
# TCL estimators


def test_duty_always_on():
    t = np.arange(0, 86400, 60.0)
    assert np.all(estimate_duty_cycle(t, np.full(t.size, 0.2)) == 1.0)


def test_duty_square_wave():
    t = np.arange(0, 86400, 60.0)
    p = np.where((t // 300) % 2 == 0, 0.2, 0.0)
    assert np.allclose(estimate_duty_cycle(t, p), 0.5)


def test_duty_missing_hours_nan():
    d = estimate_duty_cycle(np.arange(0, 3600, 60.0), np.zeros(60))
    assert d[0] == 0.0 and np.all(np.isnan(d[1:]))


@pytest.fixture(scope="module")
def diurnal_run():
    devs = tuple(DeviceConfig(th.TclParams(f"f{i}", R=120.0 + 5 * i, C=0.03, eta=2.0, P=0.3, theta_set=-14.0,
                                           delta=4.0, device_class="freezer")) for i in range(8))
    cfg = ScenarioConfig(horizon=5 * 86400.0, tick_seconds=30.0, devices=devs, gateway_enabled=False,
                         ambient=th.AmbientModel(mean=30.0, diurnal_amplitude=4.0, peak_hour=14.0))
    return run_scenario(cfg)


def _hour_gap(a, b):
    return min((a - b) % 24, (b - a) % 24)


def test_duty_peaks_near_ambient_peak(diurnal_run):
    duty = np.nanmean([estimate_duty_cycle(diurnal_run.times, p) for p in diurnal_run.series["tcl_kw"]], axis=0)
    assert _hour_gap(int(np.argmax(duty)), 14) <= 2


def test_epi_lowest_when_hottest(diurnal_run):
    hourly = []
    for theta, p in zip(diurnal_run.series["theta"], diurnal_run.series["tcl_kw"]):
        hourly.append(compute_epi(diurnal_run.times, theta, p, Contents.from_volume(100.0)).hourly)
    epi = np.nanmedian(hourly, axis=0)
    assert _hour_gap(int(np.nanargmin(epi)), 14) <= 3


def cycling_trace(p, hours=48.0, dt=10.0):
    state = th.TclState(p.theta_set, 0)
    out = []
    for _ in range(int(hours * 3600 / dt)):
        state = th.step_tcl(p, state, 30.0, 0.0, dt)
        out.append(state.theta)
    return np.array(out)


ZERO_SET = th.TclParams("z", R=200.0, C=0.014, eta=2.0, P=0.15, theta_set=0.0, delta=4.0)


def test_deadband_clean_trace():
    est = estimate_deadband(cycling_trace(ZERO_SET))
    assert est.theta_set == pytest.approx(0.0, abs=0.2)
    assert est.delta == pytest.approx(4.0, abs=0.2)


def test_deadband_with_door_excursions():
    # the probe near the door reads room-like air for a couple of minutes
    x = cycling_trace(ZERO_SET)
    for h in range(2, 48, 5):
        i = h * 360
        x[i:i + 12] = np.linspace(x[i], 20.0, 12)
    assert estimate_deadband(x).delta == pytest.approx(4.0, abs=0.5)


def test_deadband_with_daily_unplug():
    # three hours unplugged per day lifts the freezer far above its band
    p = th.TclParams("u", R=100.0, C=0.04, eta=2.0, P=0.35, theta_set=-15.0, delta=5.0, device_class="freezer")
    state, x = th.TclState(p.theta_set, 0), []
    for k in range(3 * 8640):
        state = th.set_plugged(p, state, not 1 <= (k * 10 / 3600) % 24 < 4)
        state = th.step_tcl(p, state, 30.0, 0.0, 10.0)
        x.append(state.theta)
    assert max(x) > 0.0
    est = estimate_deadband(x)
    assert est.theta_set == pytest.approx(-15.0, abs=0.3)
    assert est.delta == pytest.approx(5.0, abs=0.5)


def test_deadband_flat_trace():
    with pytest.raises(AnalysisError, match="no cycles"):
        estimate_deadband(np.full(500, 4.0))


def test_epi_zero_when_no_temperature_drop():
    t = np.arange(0, 600, 60.0)
    r = compute_epi(t, np.full(t.size, 4.0), np.full(t.size, 0.1), Contents(10.0, 0.0))
    assert r.values.tolist() == [0.0]


def test_epi_hand_case():
    # 10 kg water, 1 degC drop, 0.05 kWh = 180 kJ
    r = compute_epi([0.0, 1800.0, 3600.0, 5400.0], [5.0, 4.5, 4.0, 4.2], [0.05, 0.05, 0.0, 0.0], Contents(10.0, 0.0))
    assert r.values[0] == pytest.approx(41.86 / 180.0, rel=1e-12)
    assert r.hourly[0] == pytest.approx(0.2326, abs=1e-4)


def test_contents_from_volume():
    c = Contents.from_volume(100.0, fill=0.75)
    assert c.water_mass_kg == pytest.approx(75.0)
    assert c.air_mass_kg == pytest.approx(25.0 * 1.2e-3)
    with pytest.raises(AnalysisError):
        Contents.from_volume(100.0, fill=1.5)
