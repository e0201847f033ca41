"""Lossy cellular channel: latency, outage process, probes and delivery."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

PINGS_PER_PROBE = 6
PING_INTERVAL_S = 30.0
PING_SPACING_S = 1.0
BANDWIDTH_INTERVAL_S = 2 * 3600.0
BANDWIDTH_PAYLOAD_BITS = 3e6

# Morning hours (05-12) run faster; the profile averages to exactly 1.
_MORNING = range(5, 12)
_FAST = 0.9
_SLOW = (24 - _FAST * len(_MORNING)) / (24 - len(_MORNING))
DEFAULT_HOURLY_FACTORS = tuple(_FAST if h in _MORNING else _SLOW for h in range(24))

PROBE_FIELDS = (
    "timestamp_s", "device_id", "kind", "seq",
    "p1_ms", "p2_ms", "p3_ms", "p4_ms", "p5_ms", "p6_ms",
    "losses", "avg_ms", "max_ms", "bandwidth_bps", "failed",
)


@dataclass(frozen=True)
class ChannelParams:
    device_id: str
    latency_mean: float = 642.0  # ms, round trip
    latency_sd: float = 185.0
    latency_floor: float = 50.0
    hourly_speed_factor: tuple = DEFAULT_HOURLY_FACTORS
    outage_rate: float = 1.0  # events per hour
    outage_duration_mean: float = 258.0  # s
    bandwidth_mean: float = 1.0e6  # bits/s
    bandwidth_sd: float = 3.0e5
    probes: bool = True
    latency_samples: Optional[tuple] = None  # empirical round trips (ms), overrides the parametric family

    def __post_init__(self):
        object.__setattr__(self, "hourly_speed_factor", tuple(float(f) for f in self.hourly_speed_factor))
        for name in ("latency_mean", "latency_sd", "latency_floor", "outage_rate",
                     "bandwidth_mean", "bandwidth_sd"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0 (device {self.device_id!r})")
        if not self.outage_duration_mean > 0:
            raise ValueError(f"outage_duration_mean must be > 0 (device {self.device_id!r})")
        if len(self.hourly_speed_factor) != 24 or min(self.hourly_speed_factor) <= 0:
            raise ValueError(f"hourly_speed_factor needs 24 positive values (device {self.device_id!r})")
        if self.latency_floor > self.latency_mean:
            raise ValueError(f"latency_floor exceeds latency_mean (device {self.device_id!r})")
        if self.outage_rate > 0 and 3600.0 / self.outage_rate <= self.outage_duration_mean:
            raise ValueError(
                f"outage_rate too high for the mean outage duration (device {self.device_id!r})"
            )
        if self.latency_samples is not None:
            samples = tuple(sorted(float(x) for x in self.latency_samples))
            if not samples or samples[0] < 0:
                raise ValueError("latency_samples must be non-empty and >= 0")
            object.__setattr__(self, "latency_samples", samples)

    @property
    def mean_up_s(self) -> float:
        """Mean up-time so that outage starts occur at ``outage_rate`` per hour."""
        return 3600.0 / self.outage_rate - self.outage_duration_mean

    @property
    def down_fraction(self) -> float:
        if self.outage_rate == 0:
            return 0.0
        return self.outage_duration_mean * self.outage_rate / 3600.0


def _hour_of_day(t: float) -> int:
    return int(t // 3600.0) % 24


def _lognormal_params(mean: float, sd: float) -> tuple[float, float]:
    sigma2 = math.log1p((sd / mean) ** 2)
    return math.log(mean) - sigma2 / 2, math.sqrt(sigma2)


def sample_latency(params: ChannelParams, t: float, rng: np.random.Generator) -> float:
    """One round-trip latency draw in ms.

    Shifted log-normal: the floor is the shift and the log-normal part carries
    mean ``latency_mean - latency_floor`` and sd ``latency_sd``. The draw is then
    scaled by the hour-of-day factor and clipped at the floor.
    """
    factor = params.hourly_speed_factor[_hour_of_day(t)]
    if params.latency_samples is not None:
        base = float(rng.choice(np.asarray(params.latency_samples)))
    else:
        excess = params.latency_mean - params.latency_floor
        if params.latency_sd == 0 or excess == 0:
            # consume one draw regardless, keeping stream positions aligned
            rng.standard_normal()
            base = params.latency_mean
        else:
            mu, sigma = _lognormal_params(excess, params.latency_sd)
            base = params.latency_floor + math.exp(mu + sigma * rng.standard_normal())
    return max(params.latency_floor, factor * base)


# --------------------------------------------------------------------------
# Outages


@dataclass(frozen=True)
class OutageState:
    up: bool = True
    next_change: float = math.inf
    last_change: float = 0.0


def init_outage(params: ChannelParams, t0: float, rng: np.random.Generator) -> OutageState:
    if params.outage_rate == 0:
        return OutageState(True, math.inf, t0)
    return OutageState(True, t0 + rng.exponential(params.mean_up_s), t0)


def step_outage(
    state: OutageState, params: ChannelParams, t: float, rng: np.random.Generator, log: Optional[list] = None
) -> OutageState:
    """Advance the alternating up/down renewal process to time ``t``.

    Completed outages are appended to ``log`` as (start_s, end_s).
    """
    while state.next_change <= t:
        change = state.next_change
        if state.up:
            nxt = change + rng.exponential(params.outage_duration_mean)
            state = OutageState(False, nxt, change)
        else:
            if log is not None:
                log.append((state.last_change, change))
            state = OutageState(True, change + rng.exponential(params.mean_up_s), change)
    return state


class OutageProcess:
    """Outage schedule that can be queried at arbitrary times going forward.

    Intervals are generated lazily ahead of the query horizon; queries must not
    go back further than the oldest interval still kept.
    """

    def __init__(self, params: ChannelParams, rng: np.random.Generator, t0: float = 0.0):
        self.params = params
        self.rng = rng
        self.state = init_outage(params, t0, rng)
        self.t0 = t0
        self.intervals: list = []  # completed and pending (start, end), in order
        self._starts: list = []

    def _extend(self, t: float) -> None:
        # generate through any outage that starts at or before t
        while self.state.next_change <= t or not self.state.up:
            if self.state.up:
                start = self.state.next_change
                self.state = step_outage(self.state, self.params, start, self.rng)
            else:
                start = self.state.last_change
                end = self.state.next_change
                self.intervals.append((start, end))
                self._starts.append(start)
                self.state = step_outage(self.state, self.params, end, self.rng)

    def is_down(self, t: float) -> bool:
        self._extend(t)
        i = bisect.bisect_right(self._starts, t) - 1
        return i >= 0 and self.intervals[i][0] <= t < self.intervals[i][1]

    def down_between(self, t0: float, t1: float) -> bool:
        """True if any outage overlaps [t0, t1)."""
        self._extend(t1)
        i = bisect.bisect_right(self._starts, t1) - 1
        while i >= 0:
            a, b = self.intervals[i]
            if b <= t0:
                break
            if a < t1:
                return True
            i -= 1
        return False

    def events_until(self, t: float) -> list:
        """Outages that started before ``t`` (end may lie beyond ``t``)."""
        self._extend(t)
        k = bisect.bisect_left(self._starts, t)
        return self.intervals[:k]


# --------------------------------------------------------------------------
# Probes


@dataclass(frozen=True)
class ProbeRecord:
    kind: str  # "ping" | "bandwidth"
    timestamp: float
    device_id: str
    seq: int
    rtts_ms: tuple = ()  # None for lost pings
    bandwidth_bps: Optional[float] = None
    failed: bool = False

    @property
    def lost(self) -> tuple:
        return tuple(r is None for r in self.rtts_ms)

    @property
    def losses(self) -> int:
        return sum(self.lost)

    @property
    def avg_ms(self) -> Optional[float]:
        ok = [r for r in self.rtts_ms if r is not None]
        return sum(ok) / len(ok) if ok else None

    @property
    def max_ms(self) -> Optional[float]:
        ok = [r for r in self.rtts_ms if r is not None]
        return max(ok) if ok else None

    def to_flat(self) -> list:
        rtts = list(self.rtts_ms) + [None] * (PINGS_PER_PROBE - len(self.rtts_ms))
        return [self.timestamp, self.device_id, self.kind, self.seq, *rtts,
                self.losses if self.kind == "ping" else None, self.avg_ms, self.max_ms,
                self.bandwidth_bps, int(self.failed)]


class Channel:
    """A device's channel: parameters, its outage schedule and probe counters."""

    def __init__(self, params: ChannelParams, latency_rng, outage_rng, bandwidth_rng, t0: float = 0.0):
        self.params = params
        self.latency_rng = latency_rng
        self.bandwidth_rng = bandwidth_rng
        self.outages = OutageProcess(params, outage_rng, t0)
        self.ping_seq = 0
        self.bw_seq = 0

    @classmethod
    def from_seed(cls, params: ChannelParams, seed: int, t0: float = 0.0) -> "Channel":
        from flexsim.rng import device_stream

        d = params.device_id
        return cls(params, device_stream(seed, d, "latency"), device_stream(seed, d, "outage"),
                   device_stream(seed, d, "bandwidth"), t0)

    def is_up(self, t: float) -> bool:
        return not self.outages.is_down(t)


def run_ping_probe(channel: Channel, t: float, rng: Optional[np.random.Generator] = None) -> ProbeRecord:
    """Six pings spaced one second apart; pings sent during an outage are lost."""
    rng = rng if rng is not None else channel.latency_rng
    rtts = []
    for i in range(PINGS_PER_PROBE):
        send = t + i * PING_SPACING_S
        latency = sample_latency(channel.params, send, rng)
        rtts.append(None if channel.outages.is_down(send) else latency)
    channel.ping_seq += 1
    failed = all(r is None for r in rtts)
    return ProbeRecord("ping", t, channel.params.device_id, channel.ping_seq, tuple(rtts), None, failed)


def run_bandwidth_probe(
    channel: Channel, t: float, rng: Optional[np.random.Generator] = None, throughput: Optional[float] = None
) -> ProbeRecord:
    """Timed upload of a 3 Mbit random payload; an outage during it fails the probe."""
    rng = rng if rng is not None else channel.bandwidth_rng
    p = channel.params
    drawn = rng.normal(p.bandwidth_mean, p.bandwidth_sd)
    if throughput is None:
        throughput = max(drawn, 1e3)
    transfer = BANDWIDTH_PAYLOAD_BITS / throughput
    channel.bw_seq += 1
    failed = channel.outages.down_between(t, t + transfer)
    measured = None if failed else BANDWIDTH_PAYLOAD_BITS / transfer
    return ProbeRecord("bandwidth", t, p.device_id, channel.bw_seq, (), measured, failed)


@dataclass(frozen=True)
class Delivery:
    sent_at: float
    delivered_at: Optional[float]  # None when dropped

    @property
    def dropped(self) -> bool:
        return self.delivered_at is None


def deliver(message, channel: Channel, t: float, rng: Optional[np.random.Generator] = None) -> Delivery:
    """One-way delivery taking half a round-trip latency; dropped during outages."""
    rng = rng if rng is not None else channel.latency_rng
    latency = sample_latency(channel.params, t, rng)
    if channel.outages.is_down(t):
        return Delivery(t, None)
    return Delivery(t, t + latency / 2000.0)


def hourly_event_counts(starts: Sequence[float], t0: float, t1: float) -> np.ndarray:
    """Outage starts per whole clock hour in [t0, t1)."""
    n_hours = int((t1 - t0) // 3600)
    counts = np.zeros(n_hours, dtype=int)
    for s in starts:
        k = int((s - t0) // 3600)
        if 0 <= k < n_hours:
            counts[k] += 1
    return counts
