"""Fixed-tick scenario engine.

Tick ``k`` covers ``[k*dt, (k+1)*dt)``. Within a tick the stages run in a fixed
order: ambient, disturbances, thermal, sensors/gateway, channel, aggregator.
Recorded series sample the state at the start of the tick (temperatures) or
average over it (power, door). Every device draws from its own random
streams, so traces do not depend on declaration order.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from typing import Optional

import numpy as np

from flexsim import aggregator as agg
from flexsim import gateway as gw
from flexsim import thermal as th
from flexsim.loadshapes import archetype
from flexsim.netsim import (BANDWIDTH_INTERVAL_S, PING_INTERVAL_S, Channel, ChannelParams,
                            run_bandwidth_probe, run_ping_probe, deliver)
from flexsim.rng import DeviceStreams

SERIES_KINDS = ("theta", "room", "tcl_kw", "house_kw", "door")


class ConfigError(ValueError):
    """Invalid scenario configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class FaultModel:
    sensor_failure_rate: float = 0.0  # per sensor per hour
    sensor_repair_mean_s: float = 1800.0
    comm_error_rate: float = 0.0  # per gateway per hour
    meter_link_failure_rate: float = 0.0  # per hour
    meter_link_recovery_mean_s: float = 600.0


@dataclass(frozen=True)
class DeviceConfig:
    params: th.TclParams
    disturbance: th.DisturbanceModel = th.DisturbanceModel()
    sensors: tuple = ()
    house_profile: str = "midday"
    house_base_kw: float = 0.3
    initial_theta: Optional[float] = None
    initial_m: Optional[int] = None

    def __post_init__(self):
        if not self.sensors:
            object.__setattr__(self, "sensors", tuple(gw.default_sensors()))
        archetype(self.house_profile)

    @property
    def device_id(self) -> str:
        return self.params.device_id


@dataclass(frozen=True)
class ScenarioConfig:
    tick_seconds: float = 10.0
    horizon: float = 86400.0
    seed: int = 0
    devices: tuple = ()
    channels: tuple = ()
    ambient: th.AmbientModel = th.AmbientModel()
    dr_schedule: tuple = ()
    faults: FaultModel = FaultModel()
    override_margin: float = agg.DEFAULT_OVERRIDE_MARGIN
    resume_mode: str = "simultaneous"
    resume_stagger_s: float = 600.0
    start_weekday: int = 0  # 0 = Monday
    weekend_factor: float = 1.0
    house_noise_sd: float = 0.1
    sensor_noise_sd: float = 0.05
    process_noise_sd: float = 0.0
    gateway_enabled: bool = True
    exogenous: tuple = ()  # optional (timestamp_s, value) grid/weather series
    analytics_toggles: tuple = ()  # (name, bool) pairs

    def __post_init__(self):
        for name in ("devices", "channels", "dr_schedule", "exogenous", "analytics_toggles"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @property
    def n_ticks(self) -> int:
        return int(round(self.horizon / self.tick_seconds))

    @property
    def device_ids(self) -> tuple:
        return tuple(d.device_id for d in self.devices)

    def validate(self) -> "ScenarioConfig":
        if not self.tick_seconds > 0:
            raise ConfigError("tick_seconds", "must be > 0")
        if not self.horizon >= self.tick_seconds:
            raise ConfigError("horizon", "must be >= tick_seconds")
        if abs(self.n_ticks * self.tick_seconds - self.horizon) > 1e-9 * self.horizon:
            raise ConfigError("horizon", "must be a whole number of ticks")
        ids = self.device_ids
        dup = sorted({d for d in ids if ids.count(d) > 1})
        if dup:
            raise ConfigError("devices", f"duplicate device id(s) {', '.join(dup)}")
        known = set(ids)
        chan_ids = [c.device_id for c in self.channels]
        dup = sorted({d for d in chan_ids if chan_ids.count(d) > 1})
        if dup:
            raise ConfigError("channels", f"more than one channel for {', '.join(dup)}")
        missing = [c for c in chan_ids if c not in known]
        if missing:
            raise ConfigError("channels", f"channel references unknown device {missing[0]!r}")
        sig_ids = [s.signal_id for s in self.dr_schedule]
        if len(set(sig_ids)) != len(sig_ids):
            raise ConfigError("dr_schedule", "duplicate signal ids")
        for s in self.dr_schedule:
            bad = [d for d in s.targets if d not in known]
            if bad:
                raise ConfigError("dr_schedule", f"signal {s.signal_id!r} targets unknown device {bad[0]!r}")
        if self.resume_mode not in ("simultaneous", "staggered"):
            raise ConfigError("resume_mode", "must be 'simultaneous' or 'staggered'")
        if self.override_margin < 0:
            raise ConfigError("override_margin", "must be >= 0")
        if not 0 <= self.start_weekday <= 6:
            raise ConfigError("start_weekday", "must be in 0..6")
        for name in ("house_noise_sd", "sensor_noise_sd", "process_noise_sd"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "must be >= 0")
        return self


def _canonical(obj):
    if is_dataclass(obj):
        return {f.name: _canonical(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, float):
        return repr(obj)
    return obj


def config_digest(config: ScenarioConfig, include_dr: bool = True) -> str:
    if not include_dr:
        config = replace(config, dr_schedule=())
    blob = json.dumps(_canonical(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class SimOutput:
    config_digest: str
    baseline_key: str
    seed: int
    tick_seconds: float
    times: np.ndarray
    device_ids: tuple
    series: dict  # kind -> (n_devices, n_ticks) array
    stored_rows: tuple
    uplink_rows: tuple  # (UplinkRow, delivered_at or None)
    probes: tuple
    outages: tuple  # (device_id, start_s, end_s)
    dispatch: tuple
    events: tuple  # (t, device_id, kind, detail)
    fleet_estimate: dict
    exogenous: tuple = ()

    def trace(self, kind: str, device_id: str) -> np.ndarray:
        return self.series[kind][self.device_ids.index(device_id)]

    def aggregate(self, kind: str = "tcl_kw", devices=None) -> np.ndarray:
        if devices is None:
            rows = self.series[kind]
        else:
            idx = [self.device_ids.index(d) for d in devices if d in self.device_ids]
            rows = self.series[kind][idx]
        return rows.sum(axis=0) if len(rows) else np.zeros_like(self.times)


# --------------------------------------------------------------------------


def _renewal_intervals(rng, rate_per_h: float, mean_down_s: float, horizon: float) -> list:
    """Alternating renewal fault intervals over [0, horizon)."""
    if rate_per_h <= 0:
        return []
    out = []
    t = rng.exponential(3600.0 / rate_per_h)
    while t < horizon:
        d = rng.exponential(mean_down_s)
        out.append((t, t + d))
        t = t + d + rng.exponential(3600.0 / rate_per_h)
    return out


def _poisson_times(rng, rate_per_h: float, horizon: float) -> list:
    if rate_per_h <= 0:
        return []
    n = int(rng.poisson(rate_per_h * horizon / 3600.0))
    return sorted(float(x) for x in rng.uniform(0.0, horizon, size=n))


class _IntervalCursor:
    """Membership test for sorted disjoint intervals under increasing queries."""

    def __init__(self, intervals):
        self.iv = sorted(intervals)
        self.i = 0

    def active(self, t: float) -> bool:
        while self.i < len(self.iv) and self.iv[self.i][1] <= t:
            self.i += 1
        return self.i < len(self.iv) and self.iv[self.i][0] <= t


class _DeviceRun:
    def __init__(self, cfg: DeviceConfig, config: ScenarioConfig, channel: Optional[ChannelParams]):
        self.cfg = cfg
        self.p = cfg.params
        self.streams = DeviceStreams(config.seed, cfg.device_id)
        self.offset = float(th.draw_offsets(config.ambient, 1, self.streams["ambient"])[0])
        init = self.streams["init"]
        theta0 = init.uniform(self.p.lower, self.p.upper)
        m0 = int(init.random() < 0.5)
        if cfg.initial_theta is not None:
            theta0 = cfg.initial_theta
        if cfg.initial_m is not None:
            m0 = cfg.initial_m
        self.state = th.TclState(float(theta0), int(m0))
        self.adopts_unplug = th.draw_unplug_adoption(cfg.disturbance, self.streams["unplug"])
        self.house_shape = archetype(cfg.house_profile)
        self.channel = Channel.from_seed(channel, config.seed) if channel is not None else None
        horizon = config.horizon
        f = config.faults
        faults = self.streams["faults"]
        self.gateway = None
        if config.gateway_enabled:
            self.gateway = gw.GatewayState.create(cfg.device_id, cfg.sensors)
            self.broken = {
                s.sensor_id: _IntervalCursor(
                    _renewal_intervals(faults, f.sensor_failure_rate, f.sensor_repair_mean_s, horizon))
                for s in cfg.sensors
            }
            self.comm_errors = _poisson_times(faults, f.comm_error_rate, horizon)
            self.comm_i = 0
            self.link_down = _IntervalCursor(
                _renewal_intervals(faults, f.meter_link_failure_rate, f.meter_link_recovery_mean_s, horizon))
        self.day = -1
        self.door_events: list = []
        self.unplug = _IntervalCursor([])
        self.pending: list = []  # (apply_at, signal, expiry)
        self.noise_day = -1

    def start_day(self, day: int, config: ScenarioConfig, k_start: int, k_stop: int):
        self.day = day
        self.tick0 = k_start
        dist = th.sample_disturbances(self.cfg.disturbance, day, self.streams["door"], self.adopts_unplug)
        self.door_events = sorted(dist.door_events)
        self.door_i = 0
        self.unplug = _IntervalCursor(dist.unplug_intervals)
        n = k_stop - k_start
        tt = np.arange(k_start, k_stop) * config.tick_seconds
        self.room_day = th.ambient_at(config.ambient, tt, self.offset, self.streams["ambient"])
        self.room_day = np.atleast_1d(self.room_day)
        self.house_noise = self.streams["house"].normal(0.0, config.house_noise_sd, n)
        self.sensor_noise = self.streams["sensor_noise"].normal(0.0, config.sensor_noise_sd, (n, 2))
        if config.process_noise_sd > 0:
            self.process_noise = self.streams["init"].normal(0.0, config.process_noise_sd, n)
        else:
            self.process_noise = np.zeros(n)

    def door_fraction(self, t0: float, t1: float) -> float:
        while self.door_i < len(self.door_events) and sum(self.door_events[self.door_i]) <= t0:
            self.door_i += 1
        covered = 0.0
        cursor = t0
        for start, dur in self.door_events[self.door_i:]:
            if start >= t1:
                break
            a, b = max(start, cursor), min(start + dur, t1)
            if b > a:
                covered += b - a
                cursor = b
        return covered / (t1 - t0)


def _humidity(room: float, mean: float) -> float:
    return min(100.0, max(0.0, 70.0 - 2.0 * (room - mean)))


def run_scenario(config: ScenarioConfig) -> SimOutput:
    config.validate()
    dt = config.tick_seconds
    n = config.n_ticks
    times = np.arange(n) * dt
    chan_by_dev = {c.device_id: c for c in config.channels}
    runs = [_DeviceRun(d, config, chan_by_dev.get(d.device_id)) for d in config.devices]
    by_id = {r.cfg.device_id: r for r in runs}
    nd = len(runs)
    series = {k: np.zeros((nd, n)) for k in SERIES_KINDS}
    stored_rows: list = []
    probes: list = []
    uplinks: list = []  # [UplinkRow, delivered_at]
    pending_uplinks = {r.cfg.device_id: [] for r in runs}
    dispatches: list = []
    events: list = []
    signals = sorted(config.dr_schedule, key=lambda s: (s.issue_time, s.signal_id))
    sig_i = 0
    channels = {r.cfg.device_id: r.channel for r in runs if r.channel is not None}
    dispatch_rngs = {d: by_id[d].streams["dispatch"] for d in channels}
    next_ping = {d: 0.0 for d in channels}
    next_bw = {d: 0.0 for d in channels}
    next_uplink = 0.0
    mean_room = config.ambient.mean

    for k in range(n):
        t = k * dt
        t_end = t + dt
        day = int(t // th.SECONDS_PER_DAY)
        weekday = (config.start_weekday + day) % 7
        hour = int(t // 3600) % 24
        house_scale = config.weekend_factor if weekday >= 5 else 1.0
        uplink_due = next_uplink < t_end
        for i, r in enumerate(runs):
            p = r.p
            # ambient
            if day != r.day:
                r.start_day(day, config, k, min(n, int(math.ceil((day + 1) * th.SECONDS_PER_DAY / dt))))
            j = k - r.tick0
            room = float(r.room_day[j])
            # disturbances and DR state
            state = r.state
            frac = r.door_fraction(t, t_end)
            state = th.set_plugged(p, state, not r.unplug.active(t))
            if r.pending:
                keep = []
                for apply_at, sig, expiry in r.pending:
                    if apply_at <= t:
                        state = agg.apply_signal(p, state, sig, expiry)
                        events.append((t, p.device_id, "dr_" + sig.action, sig.signal_id))
                    else:
                        keep.append((apply_at, sig, expiry))
                r.pending = keep
            if state.forced and state.forced_until <= t:
                state = th.release(p, state)
                events.append((t, p.device_id, "dr_expired", ""))
            if (frac > 0) != state.door_open:
                state = replace(state, door_open=frac > 0)
            # thermal
            power = th.tcl_power(p, state)
            series["theta"][i, k] = state.theta
            series["room"][i, k] = room
            series["tcl_kw"][i, k] = power
            series["door"][i, k] = 1.0 if frac > 0 else 0.0
            house = power + r.cfg.house_base_kw * house_scale * r.house_shape[hour] * (1.0 + r.house_noise[j])
            house = max(house, power)
            series["house_kw"][i, k] = house
            theta_now = state.theta
            state = th.step_tcl(p, state, room, r.cfg.disturbance.door_heat_gain * frac, dt,
                                float(r.process_noise[j]))
            state, fired = agg.safety_override(state, p, config.override_margin)
            if fired:
                events.append((t_end, p.device_id, "safety_override", f"{state.theta:.3f}"))
            r.state = state
            # gateway
            g = r.gateway
            if g is not None:
                while r.comm_i < len(r.comm_errors) and r.comm_errors[r.comm_i] < t_end:
                    g.error_flag = True
                    g.log(t, "comm_error", "")
                    r.comm_i += 1
                if gw.restart_due(g, t):
                    gw.hourly_restart(g, t)
                for sid, cur in r.broken.items():
                    if cur.active(t):
                        if g.healthy[sid]:
                            g.mark_unhealthy(sid)
                physical_up = not r.link_down.active(t)
                if g.meter_link_up and not physical_up:
                    g.meter_link_up = False
                    g.log(t, "meter_link_down", "")
                if not g.meter_link_up and not g.meter_waiting:
                    gw.meter_reconnect(g, physical_up, t)
                truths = {
                    "fridge_temp_1": theta_now + r.sensor_noise[j, 0],
                    "fridge_temp_2": theta_now + r.sensor_noise[j, 1],
                    "room_temp": room,
                    "humidity": _humidity(room, mean_room),
                    "door": 1.0 if frac > 0 else 0.0,
                    "tcl_power_meter": power * 1000.0,
                    "house_power_meter": house * 1000.0,
                }
                for sid, spec in g.sensors.items():
                    row = gw.poll_sensor(spec, float(truths[spec.kind]), g, t)
                    if row is not None:
                        stored_rows.append(row)
                if uplink_due:
                    pending_uplinks[p.device_id].append(gw.build_uplink_row(g, next_uplink))
            # channel
            ch = r.channel
            if ch is not None:
                d = p.device_id
                if ch.params.probes:
                    while next_ping[d] < t_end:
                        probes.append(run_ping_probe(ch, next_ping[d]))
                        next_ping[d] += PING_INTERVAL_S
                    while next_bw[d] < t_end:
                        probes.append(run_bandwidth_probe(ch, next_bw[d]))
                        next_bw[d] += BANDWIDTH_INTERVAL_S
                if uplink_due and pending_uplinks[d]:
                    still = []
                    for row in pending_uplinks[d]:
                        dl = deliver(row, ch, next_uplink, ch.latency_rng)
                        if dl.dropped:
                            still.append(row)
                            events.append((next_uplink, d, "uplink_dropped", f"{row.timestamp:g}"))
                        else:
                            uplinks.append((row, dl.delivered_at))
                    pending_uplinks[d] = still
            elif uplink_due and g is not None:
                for row in pending_uplinks[p.device_id]:
                    uplinks.append((row, None))
                pending_uplinks[p.device_id] = []
        if uplink_due:
            next_uplink += gw.UPLINK_INTERVAL_S
        # aggregator
        while sig_i < len(signals) and signals[sig_i].issue_time < t_end:
            sig = signals[sig_i]
            sig_i += 1
            outcome = agg.dispatch(sig, channels, max(sig.issue_time, t), dispatch_rngs)
            dispatches.append(outcome)
            for dev, when in outcome.delivered.items():
                if when is None or dev not in by_id:
                    continue
                expiry = None
                if sig.action == "force_off" and config.resume_mode == "staggered":
                    expiry = sig.end_time + float(by_id[dev].streams["dispatch"].uniform(0, config.resume_stagger_s))
                by_id[dev].pending.append((when, sig, expiry))

    outages = []
    for r in runs:
        if r.channel is not None:
            for a, b in r.channel.outages.events_until(config.horizon):
                outages.append((r.cfg.device_id, a, b))
        if r.gateway is not None:
            events.extend(r.gateway.events)
    received = [row for row, at in uplinks if at is not None and at <= config.horizon]
    estimate = agg.ingest_uplink(received, config.horizon)
    for arr in series.values():
        arr.setflags(write=False)
    times.setflags(write=False)
    events.sort(key=lambda e: (e[0], e[1], e[2]))
    return SimOutput(
        config_digest=config_digest(config),
        baseline_key=config_digest(config, include_dr=False),
        seed=config.seed,
        tick_seconds=dt,
        times=times,
        device_ids=config.device_ids,
        series=series,
        stored_rows=tuple(sorted(stored_rows, key=lambda r: (r.timestamp, r.device_id, r.sensor_id))),
        uplink_rows=tuple(uplinks),
        probes=tuple(sorted(probes, key=lambda p: (p.timestamp, p.device_id, p.kind))),
        outages=tuple(sorted(outages, key=lambda o: (o[1], o[0]))),
        dispatch=tuple(dispatches),
        events=tuple(events),
        fleet_estimate=estimate,
        exogenous=config.exogenous,
    )


# --------------------------------------------------------------------------


def summarize(output: SimOutput) -> dict:
    """Aggregate statistics of one run."""
    hours = output.times.size * output.tick_seconds / 3600.0
    n_chan = len({o[0] for o in output.outages}) or 0
    pings = [p for p in output.probes if p.kind == "ping"]
    lost = sum(p.losses for p in pings)
    tcl = output.series["tcl_kw"]
    return {
        "seed": output.seed,
        "devices": len(output.device_ids),
        "hours": hours,
        "mean_tcl_kw": float(tcl.mean()) if tcl.size else 0.0,
        "tcl_kwh": float(tcl.sum() * output.tick_seconds / 3600.0),
        "house_kwh": float(output.series["house_kw"].sum() * output.tick_seconds / 3600.0),
        "mean_theta": float(output.series["theta"].mean()) if tcl.size else 0.0,
        "outage_events": len(output.outages),
        "outage_channels": n_chan,
        "outage_seconds": float(sum(b - a for _, a, b in output.outages)),
        "pings": len(pings) * 6,
        "ping_loss_fraction": lost / (len(pings) * 6) if pings else 0.0,
        "stored_rows": len(output.stored_rows),
        "uplinks_delivered": sum(1 for _, at in output.uplink_rows if at is not None),
        "dispatch_attempts": sum(d.n_attempts for d in output.dispatch),
        "dispatch_dropped": sum(d.n_dropped for d in output.dispatch),
    }


def _run_summary(config: ScenarioConfig) -> dict:
    return summarize(run_scenario(config))


def replicate(config: ScenarioConfig, n_seeds: int, workers: int = 1) -> list:
    """Summaries of runs at seeds ``seed .. seed + n_seeds - 1``."""
    if n_seeds < 1:
        raise ConfigError("n_seeds", "must be >= 1")
    config.validate()
    configs = [replace(config, seed=config.seed + i) for i in range(n_seeds)]
    if workers <= 1:
        return [_run_summary(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_summary, configs))


def evaluate_event(output: SimOutput, signal: agg.DrSignal, baseline: SimOutput,
                   rebound_window_s: float = 3600.0) -> agg.DispatchOutcome:
    """Curtailment and rebound of ``signal`` relative to a run without it."""
    if (output.baseline_key != baseline.baseline_key or output.times.shape != baseline.times.shape
            or output.device_ids != baseline.device_ids):
        raise ValueError("event and baseline runs do not share a configuration")
    outcome = next((d for d in output.dispatch if d.signal_id == signal.signal_id), None)
    if outcome is None:
        outcome = agg.DispatchOutcome(signal.signal_id, signal.action, signal.issue_time, {},
                                      (signal.issue_time, signal.end_time))
    targets = [d for d in signal.targets if d in output.device_ids]
    ev = output.aggregate("tcl_kw", targets)
    base = baseline.aggregate("tcl_kw", targets)
    t = output.times
    start, end = signal.issue_time, signal.end_time
    in_event = (t >= start) & (t < end)
    dt_h = output.tick_seconds / 3600.0
    curtail = float((base[in_event] - ev[in_event]).sum() * dt_h)
    post = (t >= end) & (t < end + rebound_window_s)
    rebound = float(ev[post].max() - base[post].max()) if post.any() else 0.0
    return replace(outcome, curtailment_kwh=curtail, rebound_peak_kw=rebound)
