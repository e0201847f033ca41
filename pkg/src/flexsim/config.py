"""Scenario files: INI-style key/value tree plus a fleet CSV.

Sections::

    [scenario]               seed, tick_seconds, horizon_hours | horizon_s, ...
    [ambient]                AmbientModel fields, or trace_csv = path
    [fleet]                  csv = path to the fleet table
    [disturbance:<class>]    DisturbanceModel fields for a device class
    [channel:default]        ChannelParams applied to every device
    [channel:<device_id>]    per-device overrides (creates a channel if no default)
    [faults]                 FaultModel fields
    [aggregator]             override_margin, resume_mode, resume_stagger_s
    [dr:<signal_id>]         targets, action, issue_time_s | issue_hour, duration_s, retry
    [analytics]              free-form settings for the analyze step

Relative paths resolve against the directory of the scenario file.
"""

from __future__ import annotations

import configparser
import csv
from dataclasses import replace
from pathlib import Path
from typing import Optional

from flexsim.aggregator import DrSignal, RetryPolicy
from flexsim.gateway import default_sensors
from flexsim.kernel import ConfigError, DeviceConfig, FaultModel, ScenarioConfig
from flexsim.netsim import ChannelParams
from flexsim.thermal import AmbientModel, DisturbanceModel, TclParams, ThermalError

FLEET_COLUMNS = ("device_id", "device_class", "R", "C", "eta", "P", "theta_set", "delta")
FLEET_OPTIONAL = ("house_profile", "house_base_kw", "door_rate_scale", "door_duration",
                  "door_heat_gain", "unplug_probability", "heartbeat_s")


def _floats(text: str) -> list:
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _intervals(text: str) -> list:
    out = []
    for part in text.replace(",", ";").split(";"):
        part = part.strip()
        if part:
            a, b = part.split("-")
            out.append((float(a), float(b)))
    return out


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def apply_overrides(parser: configparser.ConfigParser, overrides) -> list:
    """``key=value`` (scenario section) or ``section.key=value``."""
    applied = []
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError("override", f"expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        key, value = key.strip(), value.strip()
        section, _, name = key.rpartition(".")
        section = section or "scenario"
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, name, value)
        applied.append(f"{section}.{name}={value}")
    return applied


def read_parser(path) -> configparser.ConfigParser:
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.optionxform = str
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    return parser


def _section(parser, name) -> dict:
    return dict(parser.items(name)) if parser.has_section(name) else {}


def _get(d: dict, key: str, conv, default, field_name: str):
    if key not in d or d[key] == "":
        return default
    try:
        return conv(d[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(field_name, f"bad value {d[key]!r} ({exc})") from None


def _disturbance(d: dict, cls: str) -> DisturbanceModel:
    base = DisturbanceModel()
    try:
        return DisturbanceModel(
            door_rate=_get(d, "door_rate", _floats, base.door_rate, f"disturbance:{cls}.door_rate"),
            door_duration=_get(d, "door_duration", float, base.door_duration, f"disturbance:{cls}.door_duration"),
            door_heat_gain=_get(d, "door_heat_gain", float, base.door_heat_gain, f"disturbance:{cls}.door_heat_gain"),
            unplug_schedule=_get(d, "unplug_schedule", _intervals, (), f"disturbance:{cls}.unplug_schedule"),
            unplug_probability=_get(d, "unplug_probability", float, 0.0, f"disturbance:{cls}.unplug_probability"),
        )
    except ThermalError as exc:
        raise ConfigError(f"disturbance:{cls}", str(exc)) from None


CHANNEL_FIELDS = {
    "latency_mean": float, "latency_sd": float, "latency_floor": float,
    "hourly_speed_factor": lambda s: tuple(_floats(s)), "outage_rate": float,
    "outage_duration_mean": float, "bandwidth_mean": float, "bandwidth_sd": float,
    "probes": _bool,
}


def _channel_kwargs(d: dict, section: str) -> dict:
    out = {}
    for key, value in d.items():
        if key not in CHANNEL_FIELDS:
            raise ConfigError(f"{section}.{key}", "unknown channel field")
        out[key] = _get(d, key, CHANNEL_FIELDS[key], None, f"{section}.{key}")
    return out


def load_fleet_csv(path, disturbances: dict, default_heartbeat: float = 60.0) -> list:
    path = Path(path)
    devices = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in FLEET_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ConfigError("fleet.csv", f"{path.name} lacks column {missing[0]!r}")
        for line, row in enumerate(reader, start=2):
            where = f"fleet.csv:{line}"
            try:
                cls = row["device_class"]
                params = TclParams(row["device_id"], float(row["R"]), float(row["C"]), float(row["eta"]),
                                   float(row["P"]), float(row["theta_set"]), float(row["delta"]),
                                   device_class=cls)
                dist = disturbances.get(cls, DisturbanceModel())
                scale = _get(row, "door_rate_scale", float, 1.0, where)
                dist = replace(
                    dist,
                    door_rate=tuple(r * scale for r in dist.door_rate),
                    door_duration=_get(row, "door_duration", float, dist.door_duration, where),
                    door_heat_gain=_get(row, "door_heat_gain", float, dist.door_heat_gain, where),
                    unplug_probability=_get(row, "unplug_probability", float, dist.unplug_probability, where),
                )
                hb = _get(row, "heartbeat_s", float, default_heartbeat, where)
                devices.append(DeviceConfig(
                    params, dist, tuple(default_sensors(hb)),
                    house_profile=row.get("house_profile") or "midday",
                    house_base_kw=_get(row, "house_base_kw", float, 0.3, where),
                ))
            except (ThermalError, ValueError) as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(where, str(exc)) from None
    return devices


def _read_series_csv(path) -> tuple:
    times, values = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            times.append(float(row["timestamp_s"]))
            values.append(float(row["value"]))
    return tuple(times), tuple(values)


def build_config(parser: configparser.ConfigParser, base_dir) -> ScenarioConfig:
    base_dir = Path(base_dir)
    sc = _section(parser, "scenario")
    tick = _get(sc, "tick_seconds", float, 10.0, "scenario.tick_seconds")
    if "horizon_s" in sc:
        horizon = _get(sc, "horizon_s", float, 86400.0, "scenario.horizon_s")
    else:
        horizon = _get(sc, "horizon_hours", float, 24.0, "scenario.horizon_hours") * 3600.0

    am = _section(parser, "ambient")
    trace = None
    if am.get("trace_csv"):
        trace = _read_series_csv(base_dir / am["trace_csv"])
    try:
        ambient = AmbientModel(
            mean=_get(am, "mean", float, 30.0, "ambient.mean"),
            diurnal_amplitude=_get(am, "diurnal_amplitude", float, 0.0, "ambient.diurnal_amplitude"),
            peak_hour=_get(am, "peak_hour", float, 14.0, "ambient.peak_hour"),
            per_unit_offset_spread=_get(am, "per_unit_offset_spread", float, 0.0, "ambient.per_unit_offset_spread"),
            noise_sd=_get(am, "noise_sd", float, 0.0, "ambient.noise_sd"),
            trace=trace,
        )
    except ThermalError as exc:
        raise ConfigError("ambient", str(exc)) from None

    disturbances = {
        name.split(":", 1)[1]: _disturbance(dict(parser.items(name)), name.split(":", 1)[1])
        for name in parser.sections() if name.startswith("disturbance:")
    }
    fleet_sec = _section(parser, "fleet")
    devices = []
    if fleet_sec.get("csv"):
        heartbeat = _get(fleet_sec, "heartbeat_s", float, 60.0, "fleet.heartbeat_s")
        fleet_path = base_dir / fleet_sec["csv"]
        if not fleet_path.exists():
            raise FileNotFoundError(f"fleet table not found: {fleet_path}")
        devices = load_fleet_csv(fleet_path, disturbances, heartbeat)
    ids = [d.device_id for d in devices]

    default_chan = _channel_kwargs(_section(parser, "channel:default"), "channel:default") \
        if parser.has_section("channel:default") else None
    per_dev = {name.split(":", 1)[1]: _channel_kwargs(dict(parser.items(name)), name)
               for name in parser.sections()
               if name.startswith("channel:") and name != "channel:default"}
    channels = []
    for dev in ids:
        if default_chan is None and dev not in per_dev:
            continue
        kwargs = dict(default_chan or {})
        kwargs.update(per_dev.get(dev, {}))
        try:
            channels.append(ChannelParams(dev, **kwargs))
        except ValueError as exc:
            raise ConfigError(f"channel:{dev}", str(exc)) from None
    unknown = sorted(set(per_dev) - set(ids))
    if unknown:
        raise ConfigError("channels", f"channel references unknown device {unknown[0]!r}")

    fa = _section(parser, "faults")
    faults = FaultModel(**{k: _get(fa, k, float, getattr(FaultModel(), k), f"faults.{k}")
                           for k in FaultModel.__dataclass_fields__})

    signals = []
    for name in parser.sections():
        if not name.startswith("dr:"):
            continue
        d = dict(parser.items(name))
        sid = name.split(":", 1)[1]
        targets = d.get("targets", "all").strip()
        target_ids = tuple(ids) if targets == "all" else tuple(x.strip() for x in targets.split(",") if x.strip())
        if "issue_time_s" in d:
            issue = _get(d, "issue_time_s", float, 0.0, f"{name}.issue_time_s")
        else:
            issue = _get(d, "issue_hour", float, 0.0, f"{name}.issue_hour") * 3600.0
        try:
            signals.append(DrSignal(
                sid, target_ids, d.get("action", "force_off").strip(), issue,
                _get(d, "duration_s", float, 0.0, f"{name}.duration_s"),
                RetryPolicy.parse(d.get("retry", "none")),
            ))
        except ValueError as exc:
            raise ConfigError(name, str(exc)) from None

    ag = _section(parser, "aggregator")
    exogenous = ()
    if sc.get("exogenous_csv"):
        times, values = _read_series_csv(base_dir / sc["exogenous_csv"])
        exogenous = tuple(zip(times, values))
    analytics = tuple(sorted(_section(parser, "analytics").items()))
    config = ScenarioConfig(
        tick_seconds=tick,
        horizon=horizon,
        seed=_get(sc, "seed", int, 0, "scenario.seed"),
        devices=tuple(devices),
        channels=tuple(channels),
        ambient=ambient,
        dr_schedule=tuple(signals),
        faults=faults,
        override_margin=_get(ag, "override_margin", float, 2.0, "aggregator.override_margin"),
        resume_mode=ag.get("resume_mode", "simultaneous").strip(),
        resume_stagger_s=_get(ag, "resume_stagger_s", float, 600.0, "aggregator.resume_stagger_s"),
        start_weekday=_get(sc, "start_weekday", int, 0, "scenario.start_weekday"),
        weekend_factor=_get(sc, "weekend_factor", float, 1.0, "scenario.weekend_factor"),
        house_noise_sd=_get(sc, "house_noise_sd", float, 0.1, "scenario.house_noise_sd"),
        sensor_noise_sd=_get(sc, "sensor_noise_sd", float, 0.05, "scenario.sensor_noise_sd"),
        process_noise_sd=_get(sc, "process_noise_sd", float, 0.0, "scenario.process_noise_sd"),
        gateway_enabled=_get(sc, "gateway", _bool, True, "scenario.gateway"),
        exogenous=exogenous,
        analytics_toggles=analytics,
    )
    return config.validate()


def load_config(path, overrides=None) -> tuple[ScenarioConfig, list]:
    """Parse a scenario file; returns the config and the applied overrides."""
    path = Path(path)
    parser = read_parser(path)
    applied = apply_overrides(parser, overrides)
    return build_config(parser, path.parent), applied


def bundled_config_path(name: str = "example_managua_30.cfg") -> Path:
    return Path(__file__).parent / "data" / name


def analytics_settings(config: ScenarioConfig) -> dict:
    return dict(config.analytics_toggles)
