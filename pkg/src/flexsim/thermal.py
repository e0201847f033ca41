"""Hybrid first-order thermal model of refrigerators and freezers.

The cabinet temperature follows

    C * dtheta/dt = (theta_a - theta) / R - m * eta * P + w

with R in degC/kW, C in kWh/degC, P in kW and a door heat gain w in kW. Over a
step of constant inputs the solution is an exact exponential relaxation toward

    theta_ss = theta_a - m * eta * P * R + R * w

and the compressor mode m is a hysteresis relay on the dead-band
[theta_set - delta/2, theta_set + delta/2].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

SECONDS_PER_HOUR = 3600.0
SECONDS_PER_DAY = 86400.0

# Calibrated with scripts/calibrate_door_gain.py so that an opening spanning a
# whole undisturbed cycle costs at least 4x that cycle's energy for both
# reference devices below.
DOOR_HEAT_GAIN_KW = 0.30


class ThermalError(ValueError):
    pass


@dataclass(frozen=True)
class TclParams:
    device_id: str
    R: float  # degC/kW
    C: float  # kWh/degC
    eta: float
    P: float  # kW
    theta_set: float
    delta: float
    kind: str = "cooling"
    device_class: str = "refrigerator"

    def __post_init__(self):
        for name in ("R", "C", "eta", "P", "delta"):
            if not getattr(self, name) > 0:
                raise ThermalError(f"{name} must be > 0 (device {self.device_id!r})")
        if not -30.0 <= self.theta_set <= 10.0:
            raise ThermalError(f"theta_set must lie in [-30, 10] degC (device {self.device_id!r})")
        if self.kind != "cooling":
            raise ThermalError(f"kind must be 'cooling' (device {self.device_id!r})")

    @property
    def upper(self) -> float:
        return self.theta_set + self.delta / 2

    @property
    def lower(self) -> float:
        return self.theta_set - self.delta / 2

    @property
    def time_constant_s(self) -> float:
        return self.R * self.C * SECONDS_PER_HOUR


@dataclass(frozen=True)
class TclState:
    theta: float
    m: int = 0
    plugged: bool = True
    door_open: bool = False
    forced_until: Optional[float] = None

    def __post_init__(self):
        if not math.isfinite(self.theta):
            raise ThermalError("theta must be finite")
        if not self.plugged and self.m != 0:
            raise ThermalError("an unplugged load cannot run its compressor")

    @property
    def forced(self) -> bool:
        return self.forced_until is not None


def effective_mode(state: TclState) -> int:
    if not state.plugged or state.forced:
        return 0
    return state.m


def tcl_power(params: TclParams, state: TclState) -> float:
    """Electrical draw (kW) over the tick that starts in ``state``."""
    return effective_mode(state) * params.P


def relay(params: TclParams, theta: float, m: int) -> int:
    if theta >= params.upper:
        return 1
    if theta <= params.lower:
        return 0
    return m


def steady_state(params: TclParams, theta_a: float, m: int, w: float = 0.0) -> float:
    return theta_a - m * params.eta * params.P * params.R + params.R * w


def step_tcl(
    params: TclParams,
    state: TclState,
    theta_a: float,
    w: float,
    dt: float,
    noise: float = 0.0,
) -> TclState:
    """Advance one load by ``dt`` seconds with inputs held constant.

    ``noise`` is an optional additive temperature perturbation applied after
    the exact update.
    """
    if not dt > 0:
        raise ThermalError("dt must be > 0")
    m_eff = effective_mode(state)
    theta_ss = steady_state(params, theta_a, m_eff, w)
    decay = math.exp(-dt / params.time_constant_s)
    theta = theta_ss + (state.theta - theta_ss) * decay + noise
    if not state.plugged:
        m = 0
    elif state.forced:
        m = 0
    else:
        m = relay(params, theta, state.m)
    return TclState(theta, m, state.plugged, state.door_open, state.forced_until)


def release(params: TclParams, state: TclState) -> TclState:
    """Clear any forced-off override and let the thermostat re-evaluate."""
    if not state.plugged:
        return replace(state, forced_until=None, m=0)
    return replace(state, forced_until=None, m=relay(params, state.theta, 0))


def set_plugged(params: TclParams, state: TclState, plugged: bool) -> TclState:
    if plugged == state.plugged:
        return state
    if not plugged:
        return replace(state, plugged=False, m=0)
    return replace(state, plugged=True, m=relay(params, state.theta, 0))


@dataclass(frozen=True)
class DutyCycle:
    duty: float
    on_time_s: float
    off_time_s: float

    @property
    def period_s(self) -> float:
        return self.on_time_s + self.off_time_s


def analytic_duty_cycle(params: TclParams, theta_a: float) -> DutyCycle:
    """Closed-form ON/OFF dead-band traversal times at constant ambient."""
    theta_on = steady_state(params, theta_a, 1)
    lo, hi = params.lower, params.upper
    if theta_a <= hi:
        raise ThermalError(
            f"never turns on: ambient {theta_a} degC does not exceed the upper band edge {hi} degC"
        )
    if theta_on >= lo:
        raise ThermalError(
            f"cannot reach lower bound: ON steady state {theta_on:.3f} degC >= {lo} degC"
        )
    tau = params.time_constant_s
    t_on = tau * math.log((hi - theta_on) / (lo - theta_on))
    t_off = tau * math.log((theta_a - lo) / (theta_a - hi))
    return DutyCycle(t_on / (t_on + t_off), t_on, t_off)


# --------------------------------------------------------------------------
# Disturbances


@dataclass(frozen=True)
class DisturbanceModel:
    door_rate: tuple = (0.0,) * 24  # openings per hour, by hour of day
    door_duration: float = 20.0  # mean seconds, exponential
    door_heat_gain: float = DOOR_HEAT_GAIN_KW
    unplug_schedule: tuple = ()  # daily (start_hour, end_hour) pairs
    unplug_probability: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "door_rate", tuple(float(r) for r in self.door_rate))
        object.__setattr__(
            self, "unplug_schedule", tuple((float(a), float(b)) for a, b in self.unplug_schedule)
        )
        if len(self.door_rate) != 24:
            raise ThermalError("door_rate needs 24 hourly values")
        if any(r < 0 for r in self.door_rate):
            raise ThermalError("door_rate values must be >= 0")
        if not self.door_duration > 0:
            raise ThermalError("door_duration must be > 0")
        if self.door_heat_gain < 0:
            raise ThermalError("door_heat_gain must be >= 0")
        if not 0.0 <= self.unplug_probability <= 1.0:
            raise ThermalError("unplug_probability must lie in [0, 1]")
        for a, b in self.unplug_schedule:
            if not 0.0 <= a < b <= 24.0:
                raise ThermalError("unplug_schedule intervals must satisfy 0 <= start < end <= 24")


@dataclass(frozen=True)
class DayDisturbances:
    day_index: int
    door_events: list = field(default_factory=list)  # (start_s, duration_s)
    unplug_intervals: list = field(default_factory=list)  # (start_s, end_s)


def draw_unplug_adoption(model: DisturbanceModel, rng: np.random.Generator) -> bool:
    """Whether a device follows the daily unplug schedule for a whole scenario."""
    return bool(rng.random() < model.unplug_probability)


def sample_disturbances(
    model: DisturbanceModel,
    day_index: int,
    rng: np.random.Generator,
    adopts_unplug: bool = False,
) -> DayDisturbances:
    """Door openings for one day from the piecewise-constant hourly rate table.

    Counts per hour are Poisson with placement uniform inside the hour, which
    is an exact draw of the nonhomogeneous process.
    """
    day0 = day_index * SECONDS_PER_DAY
    events = []
    for hour, rate in enumerate(model.door_rate):
        if rate <= 0:
            continue
        n = int(rng.poisson(rate))
        if n == 0:
            continue
        offsets = np.sort(rng.uniform(0.0, SECONDS_PER_HOUR, size=n))
        durations = rng.exponential(model.door_duration, size=n)
        base = day0 + hour * SECONDS_PER_HOUR
        events.extend((base + float(o), float(d)) for o, d in zip(offsets, durations))
    unplug = []
    if adopts_unplug:
        unplug = [
            (day0 + a * SECONDS_PER_HOUR, day0 + b * SECONDS_PER_HOUR) for a, b in model.unplug_schedule
        ]
    return DayDisturbances(day_index, events, unplug)


def door_open_fraction(events: Sequence[tuple], t0: float, t1: float) -> float:
    """Fraction of [t0, t1) covered by the union of door-open intervals."""
    covered = 0.0
    cursor = t0
    for start, duration in sorted(events):
        a = max(start, cursor)
        b = min(start + duration, t1)
        if b > a:
            covered += b - a
            cursor = b
    return covered / (t1 - t0)


# --------------------------------------------------------------------------
# Ambient


@dataclass(frozen=True)
class AmbientModel:
    mean: float = 30.0
    diurnal_amplitude: float = 0.0
    peak_hour: float = 14.0
    per_unit_offset_spread: float = 0.0
    noise_sd: float = 0.0
    trace: Optional[tuple] = None  # (times_s, values_degC)

    def __post_init__(self):
        if self.diurnal_amplitude < 0:
            raise ThermalError("diurnal_amplitude must be >= 0")
        if self.per_unit_offset_spread < 0:
            raise ThermalError("per_unit_offset_spread must be >= 0")
        if self.noise_sd < 0:
            raise ThermalError("noise_sd must be >= 0")
        if self.trace is not None:
            times, values = (np.asarray(x, dtype=float) for x in self.trace)
            if times.shape != values.shape or times.size < 2 or np.any(np.diff(times) <= 0):
                raise ThermalError("ambient trace needs >= 2 strictly increasing times")
            object.__setattr__(self, "trace", (tuple(times), tuple(values)))


def draw_offsets(model: AmbientModel, n: int, rng: np.random.Generator) -> np.ndarray:
    half = model.per_unit_offset_spread / 2
    return rng.uniform(-half, half, size=n)


def ambient_at(
    model: AmbientModel,
    t,
    device_offset: float = 0.0,
    rng: Optional[np.random.Generator] = None,
):
    """Room temperature at time(s) ``t`` in seconds.

    Accepts a scalar or an array. Noise is added only when ``rng`` is given.
    """
    t_arr = np.asarray(t, dtype=float)
    if model.trace is not None:
        times, values = model.trace
        if np.any(t_arr < times[0]) or np.any(t_arr > times[-1]):
            raise ThermalError("time outside the ambient trace range")
        base = np.interp(t_arr, times, values)
    else:
        phase = 2 * np.pi * (t_arr / SECONDS_PER_HOUR - model.peak_hour) / 24.0
        base = model.mean + model.diurnal_amplitude * np.cos(phase)
    out = base + device_offset
    if rng is not None and model.noise_sd > 0:
        out = out + rng.normal(0.0, model.noise_sd, size=t_arr.shape)
    if out.ndim == 0:
        return float(out)
    return out


# --------------------------------------------------------------------------
# Door-opening calibration


def continuous_opening_ratio(
    params: TclParams, theta_a: float, door_heat_gain: float, dt: float = 1.0
) -> float:
    """Energy of a cycle disturbed by one opening lasting a whole cycle, over
    the energy of the undisturbed cycle.

    The load starts at the upper band edge with the compressor switching on.
    The door stays open for one undisturbed period; the disturbed cycle ends at
    the first OFF->ON transition after the door closes.
    """
    cycle = analytic_duty_cycle(params, theta_a)
    base_energy = params.P * cycle.on_time_s
    state = TclState(params.upper, 1)
    t = 0.0
    energy = 0.0
    limit = 1000 * cycle.period_s
    while t < limit:
        door = door_heat_gain if t < cycle.period_s else 0.0
        energy += tcl_power(params, state) * dt
        nxt = step_tcl(params, state, theta_a, door, dt)
        t += dt
        if t >= cycle.period_s and state.m == 0 and nxt.m == 1:
            break
        state = nxt
    return energy / base_energy


REFERENCE_FREEZER = TclParams("ref-freezer", R=100.0, C=0.04, eta=2.0, P=0.35,
                              theta_set=-15.0, delta=6.0, device_class="freezer")
REFERENCE_REFRIGERATOR = TclParams("ref-refrigerator", R=200.0, C=0.014, eta=2.0, P=0.15,
                                   theta_set=4.0, delta=4.0, device_class="refrigerator")
