"""Data-acquisition state machine of one sensor gateway.

Sensors are stored on change (beyond a per-sensor threshold) or on a
heartbeat, collectors are restarted every hour or on any communication error,
and the wireless plug meter gets at most four reconnect attempts before the
gateway waits for the next restart. Gateway operations mutate the state in
place and also return it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from flexsim.store import MemoryStore

SENSOR_KINDS = (
    "fridge_temp_1",
    "fridge_temp_2",
    "room_temp",
    "humidity",
    "door",
    "tcl_power_meter",
    "house_power_meter",
)
METER_KINDS = ("tcl_power_meter",)
DEFAULT_THRESHOLDS = {
    "fridge_temp_1": 0.25,
    "fridge_temp_2": 0.25,
    "room_temp": 0.25,
    "humidity": 1.0,
    "door": 0.0,
    "tcl_power_meter": 5.0,
    "house_power_meter": 5.0,
}
MAX_RETRIES = 4
RESTART_INTERVAL_S = 3600.0
UPLINK_INTERVAL_S = 4 * 3600.0
UPLINK_FIELDS = ("timestamp_s", "device_id") + SENSOR_KINDS + (
    "meter_link_up",
    "meter_waiting",
    "unhealthy_sensors",
)


@dataclass(frozen=True)
class SensorSpec:
    sensor_id: str
    kind: str
    change_threshold: Optional[float] = None
    heartbeat: float = 60.0

    def __post_init__(self):
        if self.kind not in SENSOR_KINDS:
            raise ValueError(f"unknown sensor kind {self.kind!r}")
        if self.change_threshold is None:
            object.__setattr__(self, "change_threshold", DEFAULT_THRESHOLDS[self.kind])
        if self.change_threshold < 0:
            raise ValueError("change_threshold must be >= 0")
        if not self.heartbeat > 0:
            raise ValueError("heartbeat must be > 0")


def default_sensors(heartbeat: float = 60.0) -> list[SensorSpec]:
    return [SensorSpec(kind, kind, heartbeat=heartbeat) for kind in SENSOR_KINDS]


@dataclass(frozen=True)
class StoredRow:
    timestamp: float
    device_id: str
    sensor_id: str
    value: float
    store_reason: str  # "change" | "heartbeat"

    def to_dict(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "device_id": self.device_id,
            "sensor_id": self.sensor_id,
            "value": self.value,
            "store_reason": self.store_reason,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StoredRow":
        reason = d["store_reason"]
        if reason not in ("change", "heartbeat"):
            raise ValueError(f"bad store_reason {reason!r}")
        return cls(float(d["timestamp"]), str(d["device_id"]), str(d["sensor_id"]),
                   float(d["value"]), reason)


@dataclass(frozen=True)
class UplinkRow:
    timestamp: float
    device_id: str
    values: dict  # kind -> value or None when absent
    meter_link_up: bool
    meter_waiting: bool
    unhealthy_sensors: int

    def to_flat(self) -> list:
        """One flat record in ``UPLINK_FIELDS`` order; absent values are ``None``."""
        return [self.timestamp, self.device_id, *(self.values.get(k) for k in SENSOR_KINDS),
                int(self.meter_link_up), int(self.meter_waiting), self.unhealthy_sensors]

    @classmethod
    def from_flat(cls, rec) -> "UplinkRow":
        if len(rec) != len(UPLINK_FIELDS):
            raise ValueError(f"uplink record needs {len(UPLINK_FIELDS)} fields, got {len(rec)}")

        def value(v):
            if v is None or v == "":
                return None
            x = float(v)
            return None if math.isnan(x) else x

        ts = float(rec[0])
        if not math.isfinite(ts):
            raise ValueError("uplink timestamp must be finite")
        values = {k: value(v) for k, v in zip(SENSOR_KINDS, rec[2:2 + len(SENSOR_KINDS)])}
        tail = rec[2 + len(SENSOR_KINDS):]
        return cls(ts, str(rec[1]), values, bool(int(float(tail[0]))),
                   bool(int(float(tail[1]))), int(float(tail[2])))

    @property
    def present(self) -> int:
        return sum(v is not None for v in self.values.values())


@dataclass
class GatewayState:
    device_id: str
    sensors: dict = field(default_factory=dict)  # sensor_id -> SensorSpec
    last_value: dict = field(default_factory=dict)
    last_time: dict = field(default_factory=dict)
    healthy: dict = field(default_factory=dict)
    meter_link_up: bool = True
    meter_waiting: bool = False
    retry_count: int = 0
    next_restart: float = RESTART_INTERVAL_S
    error_flag: bool = False
    store: object = field(default_factory=MemoryStore)
    events: list = field(default_factory=list)  # (t, device_id, kind, detail)
    _reported_down: set = field(default_factory=set)

    @classmethod
    def create(cls, device_id: str, sensors=None, store=None, t0: float = 0.0) -> "GatewayState":
        sensors = list(sensors) if sensors is not None else default_sensors()
        ids = [s.sensor_id for s in sensors]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate sensor ids on device {device_id!r}")
        return cls(
            device_id=device_id,
            sensors={s.sensor_id: s for s in sensors},
            healthy={s.sensor_id: True for s in sensors},
            next_restart=(math.floor(t0 / RESTART_INTERVAL_S) + 1) * RESTART_INTERVAL_S,
            store=store if store is not None else MemoryStore(),
        )

    def log(self, t: float, kind: str, detail: str = "") -> None:
        self.events.append((t, self.device_id, kind, detail))

    def meter_available(self) -> bool:
        return self.meter_link_up and not self.meter_waiting

    def collector_ok(self, spec: SensorSpec) -> bool:
        if not self.healthy.get(spec.sensor_id, False):
            return False
        if spec.kind in METER_KINDS:
            return self.meter_available()
        return True

    def mark_unhealthy(self, sensor_id: str) -> None:
        self.healthy[sensor_id] = False


def poll_sensor(spec: SensorSpec, truth, state: GatewayState, t: float) -> Optional[StoredRow]:
    """Store a reading iff it moved by more than the threshold or a heartbeat is due."""
    sid = spec.sensor_id
    if not state.collector_ok(spec) or truth is None:
        if sid not in state._reported_down:
            state._reported_down.add(sid)
            state.log(t, "sensor_unhealthy", sid)
        return None
    if sid in state._reported_down:
        state._reported_down.discard(sid)
        state.log(t, "sensor_healthy", sid)
    last = state.last_value.get(sid)
    if last is None or abs(truth - last) > spec.change_threshold:
        reason = "change"
    elif t - state.last_time[sid] >= spec.heartbeat:
        reason = "heartbeat"
    else:
        return None
    row = StoredRow(t, state.device_id, sid, float(truth), reason)
    state.last_value[sid] = float(truth)
    state.last_time[sid] = t
    state.store.append(row)
    return row


def restart_due(state: GatewayState, t: float) -> bool:
    return t >= state.next_restart or state.error_flag


def hourly_restart(state: GatewayState, t: float) -> GatewayState:
    """Reinitialise every collector; the stored history survives."""
    for sid in state.healthy:
        state.healthy[sid] = True
    state.retry_count = 0
    state.meter_waiting = False
    state.error_flag = False
    state.next_restart = (math.floor(t / RESTART_INTERVAL_S) + 1) * RESTART_INTERVAL_S
    state.log(t, "restart", "")
    return state


def meter_reconnect(state: GatewayState, link_up: bool, t: float = math.nan) -> GatewayState:
    """One reconnect attempt for the plug meter's wireless link."""
    if state.meter_waiting:
        return state
    state.retry_count += 1
    state.log(t, "meter_link_reset", str(state.retry_count))
    if link_up:
        state.retry_count = 0
        state.meter_link_up = True
        state.log(t, "meter_link_up", "")
    else:
        state.meter_link_up = False
        if state.retry_count >= MAX_RETRIES:
            state.meter_waiting = True
            state.log(t, "meter_wait", "")
    return state


def build_uplink_row(state: GatewayState, t: float) -> UplinkRow:
    """Snapshot of the latest stored value per sensor kind."""
    values = {}
    for kind in SENSOR_KINDS:
        values[kind] = None
        for sid, spec in state.sensors.items():
            if spec.kind == kind and state.collector_ok(spec) and sid in state.last_value:
                values[kind] = state.last_value[sid]
                break
    unhealthy = sum(not state.collector_ok(s) for s in state.sensors.values())
    return UplinkRow(t, state.device_id, values, state.meter_link_up, state.meter_waiting, unhealthy)


def on_uplink_grid(t: float, interval: float = UPLINK_INTERVAL_S) -> bool:
    return t % interval == 0
