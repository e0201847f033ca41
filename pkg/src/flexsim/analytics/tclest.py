"""Field estimates from temperature and power traces: duty cycle, dead-band, EPI."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from flexsim.analytics.stats import AnalysisError

C_WATER = 4.186  # kJ/(kg degC)
C_AIR = 1.005
WATER_DENSITY = 1.0  # kg/l
AIR_DENSITY = 1.2e-3


def estimate_duty_cycle(times_s, power_kw, on_threshold: float = 0.01) -> np.ndarray:
    """Fraction of samples per hour of day with power above ``on_threshold``.

    Hours with no samples are NaN.
    """
    t = np.asarray(times_s, dtype=float)
    p = np.asarray(power_kw, dtype=float)
    if t.size == 0:
        raise AnalysisError("empty power trace")
    if t.shape != p.shape:
        raise AnalysisError("times and power differ in length")
    hour = (t // 3600).astype(np.int64) % 24
    total = np.bincount(hour, minlength=24).astype(float)
    on = np.bincount(hour, weights=(p > on_threshold).astype(float), minlength=24)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, on / np.where(total > 0, total, 1.0), np.nan)


@dataclass(frozen=True)
class DeadbandEstimate:
    theta_set: float
    delta: float
    n_cycles: int
    peaks: tuple
    troughs: tuple


def _zigzag(x: np.ndarray, h: float):
    """Alternating extrema whose reversals exceed ``h``; the endpoints are not extrema."""
    peaks, troughs = [], []
    imax = imin = 0
    direction = 0
    for i in range(1, x.size):
        v = x[i]
        if direction == 0:
            imax = i if v > x[imax] else imax
            imin = i if v < x[imin] else imin
            if v - x[imin] >= h:
                troughs.append(imin)
                direction, imax = 1, i
            elif x[imax] - v >= h:
                peaks.append(imax)
                direction, imin = -1, i
        elif direction == 1:
            if v > x[imax]:
                imax = i
            elif x[imax] - v >= h:
                peaks.append(imax)
                direction, imin = -1, i
        else:
            if v < x[imin]:
                imin = i
            elif v - x[imin] >= h:
                troughs.append(imin)
                direction, imax = 1, i
    return [i for i in peaks if i > 0], [i for i in troughs if i > 0]


def _trimmed(v: np.ndarray, frac: float) -> float:
    v = np.sort(v)
    cut = int(frac * v.size)
    return float(v[cut: v.size - cut].mean()) if v.size - 2 * cut > 0 else float(np.median(v))


def estimate_deadband(temps, trim: float = 0.25) -> DeadbandEstimate:
    """Set point and dead-band width from the cycling extrema of a temperature trace.

    Peaks and troughs are found with a zig-zag filter; each side is reduced
    with a ``trim``-trimmed mean so door excursions do not widen the band.
    """
    x = np.asarray(temps, dtype=float)
    x = x[np.isfinite(x)]
    if x.size < 3:
        raise AnalysisError("no cycles detected: trace too short")
    lo, hi = np.percentile(x, [10, 90])
    if hi - lo <= 1e-9:
        raise AnalysisError("no cycles detected: flat trace")
    # long excursions (unplugging, defrost) stretch the percentile spread past
    # the band itself and hide the real cycles at a coarse reversal size; keep
    # whichever size sees the most cycles, preferring the coarsest on ties
    best = None
    for frac in (0.4, 0.2, 0.1):
        peaks, troughs = _zigzag(x, frac * (hi - lo))
        n = min(len(peaks), len(troughs))
        if best is None or n > best[0]:
            best = (n, peaks, troughs)
    n_cycles, peaks, troughs = best
    if n_cycles < 3:
        raise AnalysisError(f"no cycles detected: found {n_cycles}, need 3")
    pv = x[peaks]
    tv = x[troughs]
    top = _trimmed(pv, trim)
    bottom = _trimmed(tv, trim)
    return DeadbandEstimate((top + bottom) / 2.0, top - bottom, n_cycles, tuple(pv), tuple(tv))


# --------------------------------------------------------------------------
# efficiency performance index


@dataclass(frozen=True)
class Contents:
    water_mass_kg: float
    air_mass_kg: float = 0.0

    def __post_init__(self):
        if self.water_mass_kg < 0 or self.air_mass_kg < 0:
            raise AnalysisError("contents masses must be non-negative")

    @classmethod
    def from_volume(cls, volume_l: float, fill: float = 0.75, water_density: float = WATER_DENSITY,
                    air_density: float = AIR_DENSITY) -> "Contents":
        """Interior volume ``fill`` occupied by water-equivalent mass, the rest air."""
        if not 0 <= fill <= 1:
            raise AnalysisError("fill fraction must be in [0, 1]")
        return cls(volume_l * fill * water_density, volume_l * (1 - fill) * air_density)

    @property
    def heat_capacity(self) -> float:
        """kJ/degC"""
        return self.water_mass_kg * C_WATER + self.air_mass_kg * C_AIR


@dataclass(frozen=True)
class EpiSeries:
    intervals: tuple  # (start_s, end_s, q_kj, w_kj, epi)
    hourly: np.ndarray  # hour-of-day sum(Q)/sum(W); NaN where no interval

    @property
    def values(self) -> np.ndarray:
        return np.array([iv[4] for iv in self.intervals])


def compute_epi(times_s, temps, power_kw, contents: Contents, on_threshold: float = 0.01) -> EpiSeries:
    """Q_c/W for every compressor-on run.

    Q_c is the contents' heat capacity times the temperature drop across the
    run (clipped at 0). W integrates power over the run's samples. Runs with
    W = 0 are skipped. Hourly values are binned by run start.
    """
    t = np.asarray(times_s, dtype=float)
    th = np.asarray(temps, dtype=float)
    p = np.asarray(power_kw, dtype=float)
    if not (t.shape == th.shape == p.shape):
        raise AnalysisError("temperature and power traces are not aligned")
    if t.size < 2:
        return EpiSeries((), np.full(24, np.nan))
    dt = np.diff(t, append=t[-1] + (t[-1] - t[-2]))
    on = p > on_threshold
    edges = np.flatnonzero(np.diff(np.concatenate([[0], on.astype(np.int8), [0]])))
    intervals = []
    q_h = np.zeros(24)
    w_h = np.zeros(24)
    for a, b in zip(edges[::2], edges[1::2]):
        end = min(b, t.size - 1)
        w = float(np.sum(p[a:b] * dt[a:b]))  # kJ
        if w <= 0:
            continue
        q = contents.heat_capacity * max(0.0, float(th[a] - th[end]))
        intervals.append((float(t[a]), float(t[a] + dt[a:b].sum()), q, w, q / w))
        hour = int(t[a] // 3600) % 24
        q_h[hour] += q
        w_h[hour] += w
    with np.errstate(invalid="ignore", divide="ignore"):
        hourly = np.where(w_h > 0, q_h / np.where(w_h > 0, w_h, 1.0), np.nan)
    return EpiSeries(tuple(intervals), hourly)
