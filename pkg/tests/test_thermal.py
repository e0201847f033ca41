import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexsim import thermal as th
from flexsim.rng import device_stream


def duty_over_cycles(p, theta_a, dt=1.0, cycles=6):
    state = th.TclState(p.upper, 1)
    t, on, first, last, seen = 0.0, 0.0, None, None, 0
    while seen <= cycles:
        nxt = th.step_tcl(p, state, theta_a, 0.0, dt)
        if first is not None:
            on += dt * state.m
        t += dt
        if state.m == 0 and nxt.m == 1:
            seen += 1
            if first is None:
                first = t
            last = t
        state = nxt
    return on / (last - first)


def test_fixed_point_at_ambient():
    p = th.REFERENCE_REFRIGERATOR
    s = th.step_tcl(p, th.TclState(5.0, 0), 5.0, 0.0, 10.0)
    assert s.theta == 5.0
    assert s.m == 0  # 5 < upper edge 6


def test_step_matches_exponential_solution():
    p = th.REFERENCE_FREEZER
    s = th.step_tcl(p, th.TclState(-12.0, 1), 30.0, 0.0, 600.0)
    ss = 30.0 - p.eta * p.P * p.R
    assert s.theta == pytest.approx(ss + (-12.0 - ss) * math.exp(-600.0 / p.time_constant_s), rel=1e-14)


@pytest.mark.parametrize("p", [th.REFERENCE_REFRIGERATOR, th.REFERENCE_FREEZER], ids=lambda p: p.device_id)
def test_cycling_stays_in_band_within_one_tick(p):
    dt = 10.0
    state = th.TclState(p.theta_set, 0)
    lo = hi = p.theta_set
    for _ in range(int(2 * 86400 / dt)):
        state = th.step_tcl(p, state, 30.0, 0.0, dt)
        lo, hi = min(lo, state.theta), max(hi, state.theta)
    decay = 1 - math.exp(-dt / p.time_constant_s)
    eps_up = (30.0 - p.upper) * decay
    eps_down = (p.lower - th.steady_state(p, 30.0, 1)) * decay
    assert hi <= p.upper + eps_up + 1e-12
    assert lo >= p.lower - eps_down - 1e-12


def test_mid_range_device_duty_in_field_range():
    p = th.TclParams("mid", R=150.0, C=0.03, eta=2.0, P=0.25, theta_set=-10.0, delta=4.0, device_class="freezer")
    assert 0.1 <= th.analytic_duty_cycle(p, 30.0).duty <= 0.9


def test_symmetric_case_gives_half_duty():
    # ON and OFF steady states mirror about the set point when theta_a = theta_set + eta*P*R/2
    p = th.TclParams("sym", R=100.0, C=0.02, eta=2.0, P=0.2, theta_set=4.0, delta=2.0)
    d = th.analytic_duty_cycle(p, 4.0 + 2.0 * 0.2 * 100.0 / 2)
    assert d.duty == pytest.approx(0.5, abs=1e-12)
    assert d.on_time_s == pytest.approx(d.off_time_s, rel=1e-12)


@settings(max_examples=8, deadline=None)
@given(
    R=st.floats(80, 250),
    C=st.floats(0.005, 0.02),
    P=st.floats(0.1, 0.35),
    theta_set=st.floats(-18, 5),
    delta=st.floats(2, 6),
)
def test_analytic_duty_matches_simulation(R, C, P, theta_set, delta):
    p = th.TclParams("h", R=R, C=C, eta=2.0, P=P, theta_set=theta_set, delta=delta)
    try:
        analytic = th.analytic_duty_cycle(p, 30.0).duty
    except th.ThermalError:
        return
    if not 0.05 < analytic < 0.95:
        return  # very long traversals make the dt=1 s run slow without testing anything new
    assert duty_over_cycles(p, 30.0) == pytest.approx(analytic, rel=0.02)


def test_never_turns_on():
    p = th.TclParams("x", R=100.0, C=0.02, eta=2.0, P=0.2, theta_set=4.0, delta=4.0)
    with pytest.raises(th.ThermalError, match="never turns on"):
        th.analytic_duty_cycle(p, 5.0)


def test_cannot_reach_lower_bound():
    p = th.TclParams("weak", R=20.0, C=0.04, eta=2.0, P=0.2, theta_set=4.0, delta=4.0)
    with pytest.raises(th.ThermalError, match="cannot reach"):
        th.analytic_duty_cycle(p, 30.0)


@pytest.mark.parametrize("field,value", [("R", 0.0), ("C", -1.0), ("delta", 0.0), ("theta_set", 12.0)])
def test_param_validation(field, value):
    kw = dict(device_id="bad", R=100.0, C=0.02, eta=2.0, P=0.2, theta_set=4.0, delta=4.0)
    kw[field] = value
    with pytest.raises(th.ThermalError):
        th.TclParams(**kw)


def test_unplugged_state_cannot_run():
    with pytest.raises(th.ThermalError):
        th.TclState(4.0, 1, plugged=False)
    p = th.REFERENCE_REFRIGERATOR
    s = th.set_plugged(p, th.TclState(7.0, 1), False)
    assert (s.m, th.tcl_power(p, s)) == (0, 0.0)
    s = th.step_tcl(p, s, 30.0, 0.0, 60.0)
    assert s.m == 0 and s.theta > 7.0
    assert th.set_plugged(p, s, True).m == 1


def test_forced_off_holds_compressor_off():
    p = th.REFERENCE_REFRIGERATOR
    s = th.TclState(8.0, 0, forced_until=100.0)
    assert th.step_tcl(p, s, 30.0, 0.0, 10.0).m == 0
    assert th.release(p, s).m == 1


def test_no_disturbance_events_at_zero_rates():
    day = th.sample_disturbances(th.DisturbanceModel(), 0, np.random.default_rng(0), adopts_unplug=True)
    assert day.door_events == [] and day.unplug_intervals == []


def test_door_rate_recovery():
    model = th.DisturbanceModel(door_rate=(2.0,) * 24)
    rng = device_stream(1, "d", "door")
    total = sum(len(th.sample_disturbances(model, k, rng).door_events) for k in range(10_000))
    assert total / 10_000 == pytest.approx(48.0, rel=0.02)


def test_unplug_adoption_fraction():
    model = th.DisturbanceModel(unplug_probability=0.71)
    rng = np.random.default_rng(3)
    frac = np.mean([th.draw_unplug_adoption(model, rng) for _ in range(10_000)])
    assert 0.69 <= frac <= 0.73


def test_unplug_intervals_follow_schedule():
    model = th.DisturbanceModel(unplug_schedule=((19, 24),), unplug_probability=1.0)
    day = th.sample_disturbances(model, 2, np.random.default_rng(0), adopts_unplug=True)
    assert day.unplug_intervals == [(2 * 86400 + 19 * 3600.0, 3 * 86400.0)]


def test_door_open_fraction_merges_overlaps():
    assert th.door_open_fraction([(0.0, 30.0), (20.0, 20.0), (100.0, 500.0)], 0.0, 200.0) == pytest.approx(0.7)


def test_constant_ambient():
    t = np.linspace(0, 3 * 86400, 97)
    assert np.all(th.ambient_at(th.AmbientModel(mean=30.0), t) == 30.0)


def test_diurnal_swing_is_twice_amplitude():
    model = th.AmbientModel(mean=30.0, diurnal_amplitude=1.5, peak_hour=14.0)
    v = th.ambient_at(model, np.arange(0, 86400, 60.0))
    assert v.max() - v.min() == pytest.approx(3.0, abs=1e-6)
    assert th.ambient_at(model, 14 * 3600.0) == pytest.approx(31.5)


def test_offset_spread():
    off = th.draw_offsets(th.AmbientModel(per_unit_offset_spread=4.0), 30, np.random.default_rng(0))
    assert off.max() - off.min() <= 4.0


def test_ambient_trace_interpolates_and_bounds():
    model = th.AmbientModel(trace=((0.0, 3600.0), (28.0, 30.0)))
    assert th.ambient_at(model, 1800.0) == pytest.approx(29.0)
    with pytest.raises(th.ThermalError):
        th.ambient_at(model, 7200.0)
