"""Central server: fleet estimates, virtual-storage capacity and direct load control."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from flexsim.gateway import UplinkRow
from flexsim.netsim import Channel, Delivery, deliver
from flexsim.thermal import TclParams, TclState, ThermalError, analytic_duty_cycle, release

logger = logging.getLogger(__name__)

DEFAULT_OVERRIDE_MARGIN = 2.0
STALE_AFTER_S = 8 * 3600.0


@dataclass(frozen=True)
class RetryPolicy:
    count: int = 0
    spacing_s: float = 30.0

    def __post_init__(self):
        if self.count < 0 or not self.spacing_s > 0:
            raise ValueError("retry count must be >= 0 and spacing > 0")

    @classmethod
    def parse(cls, text: str) -> "RetryPolicy":
        """``none`` or ``retry_n(count, spacing_s)``."""
        text = text.strip().replace(" ", "")
        if text in ("", "none"):
            return cls()
        if text.startswith("retry_n(") and text.endswith(")"):
            count, spacing = text[len("retry_n("):-1].split(",")
            return cls(int(count), float(spacing))
        raise ValueError(f"bad retry policy {text!r}")

    def __str__(self):
        return "none" if self.count == 0 else f"retry_n({self.count},{self.spacing_s:g})"


@dataclass(frozen=True)
class DrSignal:
    signal_id: str
    targets: tuple
    action: str  # "force_off" | "resume"
    issue_time: float
    duration: float = 0.0
    retry_policy: RetryPolicy = RetryPolicy()

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if self.action not in ("force_off", "resume"):
            raise ValueError(f"signal {self.signal_id!r}: unknown action {self.action!r}")
        if self.action == "force_off" and not self.duration > 0:
            raise ValueError(f"signal {self.signal_id!r}: force_off needs duration > 0")
        if not self.targets:
            raise ValueError(f"signal {self.signal_id!r}: targets must be non-empty")

    @property
    def end_time(self) -> float:
        return self.issue_time + self.duration


@dataclass(frozen=True)
class CapacityReport:
    timestamp: float
    theta_a: float
    e_cap_kwh: float
    p_cap_range: tuple
    baseline_p_kw: float
    contributions: dict  # device_id -> (e_i kWh, P_i kW, D_i)
    excluded: tuple = ()

    def rows(self) -> list:
        return [
            (self.timestamp, d, e, p, duty) for d, (e, p, duty) in sorted(self.contributions.items())
        ]


def device_energy_capacity(params: TclParams) -> float:
    """Electrical kWh equivalent of the heat held across the dead-band."""
    return params.C * params.delta / params.eta


def compute_capacity(fleet: Sequence[TclParams], theta_a: float, timestamp: float = 0.0) -> CapacityReport:
    contributions = {}
    excluded = []
    for p in fleet:
        try:
            duty = analytic_duty_cycle(p, theta_a).duty
        except ThermalError:
            excluded.append(p.device_id)
            continue
        contributions[p.device_id] = (device_energy_capacity(p), p.P, duty)
    e_cap = math.fsum(e for e, _, _ in contributions.values())
    p_max = math.fsum(pw for _, pw, _ in contributions.values())
    baseline = math.fsum(pw * d for _, pw, d in contributions.values())
    return CapacityReport(timestamp, theta_a, e_cap, (0.0, p_max), baseline, contributions, tuple(excluded))


# --------------------------------------------------------------------------
# Dispatch


@dataclass(frozen=True)
class DispatchOutcome:
    signal_id: str
    action: str
    issue_time: float
    attempts: dict  # device_id -> tuple of Delivery
    window: tuple  # (start_s, end_s)
    curtailment_kwh: Optional[float] = None
    rebound_peak_kw: Optional[float] = None

    def delivered_at(self, device_id: str) -> Optional[float]:
        for d in self.attempts[device_id]:
            if not d.dropped:
                return d.delivered_at
        return None

    @property
    def delivered(self) -> dict:
        return {dev: self.delivered_at(dev) for dev in self.attempts}

    @property
    def n_attempts(self) -> int:
        return sum(len(a) for a in self.attempts.values())

    @property
    def n_delivered(self) -> int:
        return sum(1 for a in self.attempts.values() for d in a if not d.dropped)

    @property
    def n_dropped(self) -> int:
        return sum(1 for a in self.attempts.values() for d in a if d.dropped)


def dispatch(
    signal: DrSignal, channels: dict, t: Optional[float] = None, rng=None
) -> DispatchOutcome:
    """Send ``signal`` to each target over its channel, retrying per the policy.

    ``rng`` is one generator or a mapping of device id to generator; by
    default each channel's latency stream is used. Targets without a channel
    are recorded as a single dropped attempt.
    """
    t = signal.issue_time if t is None else t
    attempts = {}
    for dev in signal.targets:
        channel: Optional[Channel] = channels.get(dev)
        tries = []
        for k in range(signal.retry_policy.count + 1):
            at = t + k * signal.retry_policy.spacing_s
            if channel is None:
                tries.append(Delivery(at, None))
                break
            d = deliver(signal, channel, at, rng.get(dev) if isinstance(rng, dict) else rng)
            tries.append(d)
            if not d.dropped:
                break
        attempts[dev] = tuple(tries)
    window = (t, t + signal.duration)
    return DispatchOutcome(signal.signal_id, signal.action, t, attempts, window)


def apply_signal(params: TclParams, state: TclState, signal: DrSignal, expiry: Optional[float] = None) -> TclState:
    if signal.action == "force_off":
        return replace(state, forced_until=signal.end_time if expiry is None else expiry)
    return release(params, state)


def override_bound(params: TclParams, margin: float = DEFAULT_OVERRIDE_MARGIN) -> float:
    return params.upper + margin


def safety_override(
    state: TclState, params: TclParams, margin: float = DEFAULT_OVERRIDE_MARGIN
) -> tuple[TclState, bool]:
    """Drop a forced-off override once the cabinet is ``margin`` above the band.

    Returns the new state and whether the override fired.
    """
    if state.forced and state.theta >= override_bound(params, margin):
        return release(params, state), True
    return state, False


# --------------------------------------------------------------------------
# Uplink ingestion


@dataclass(frozen=True)
class DeviceEstimate:
    device_id: str
    last_seen: float
    staleness_s: float
    stale: bool
    row: UplinkRow


def ingest_uplink(rows, now: float, stale_after: float = STALE_AFTER_S) -> dict:
    """Latest-known state per device with its age; malformed rows are skipped."""
    latest: dict = {}
    for raw in rows:
        try:
            row = raw if isinstance(raw, UplinkRow) else UplinkRow.from_flat(raw)
        except (TypeError, ValueError, IndexError) as exc:
            logger.warning("malformed uplink row skipped: %s", exc)
            continue
        cur = latest.get(row.device_id)
        if cur is None or row.timestamp > cur.timestamp:
            latest[row.device_id] = row
    out = {}
    for dev, row in sorted(latest.items()):
        age = now - row.timestamp
        out[dev] = DeviceEstimate(dev, row.timestamp, age, age > stale_after, row)
    return out


def flag_silent(known_devices, estimates: dict, now: float, since: float = 0.0,
                stale_after: float = STALE_AFTER_S) -> list:
    """Devices with no row at all or a row older than ``stale_after``."""
    out = []
    for dev in known_devices:
        est = estimates.get(dev)
        if est is None:
            if now - since > stale_after:
                out.append(dev)
        elif est.stale:
            out.append(dev)
    return out
