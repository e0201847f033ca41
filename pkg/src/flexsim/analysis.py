"""Trace directory -> analytics result tables and a plain-text report."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from flexsim.analytics import (AnalysisError, Contents, cluster_shapes, compute_epi, correlate,
                               estimate_deadband, estimate_duty_cycle, fit_exponential, fit_poisson,
                               hourly_profile, ks_two_sample, normalize_shape, weekend_weekday_ratio)
from flexsim.netsim import hourly_event_counts
from flexsim.traces import find_traces, read_trace

SECTIONS = ("shapes", "duty", "weekend", "deadband", "epi", "correlations", "network")
FLEET = "__fleet__"


class NoTracesError(AnalysisError):
    pass


@dataclass
class Settings:
    k: int = 5
    distance: str = "euclidean_znorm"
    basis: str = "mean"
    on_threshold_kw: float = 0.01
    outlier_rule: str = "iqr(3)"
    volume_l: float = 100.0
    fill: float = 0.75
    start_weekday: int = 0
    seed: int = 0
    horizon_s: float | None = None
    enabled: dict = field(default_factory=lambda: {s: True for s in SECTIONS})

    @classmethod
    def from_mapping(cls, values: dict, base: "Settings | None" = None) -> "Settings":
        s = base or cls()
        conv = {"k": int, "distance": str, "basis": str, "on_threshold_kw": float, "outlier_rule": str,
                "volume_l": float, "fill": float, "start_weekday": int, "seed": int, "horizon_s": float}
        for key, value in values.items():
            if key in conv:
                setattr(s, key, conv[key](value))
            elif key in SECTIONS:
                s.enabled[key] = str(value).strip().lower() in ("1", "true", "yes", "on")
            else:
                raise AnalysisError(f"unknown analytics setting {key!r}")
        return s


@dataclass
class Analysis:
    tables: dict = field(default_factory=dict)  # file name -> DataFrame
    notices: list = field(default_factory=list)
    lines: list = field(default_factory=list)

    def note(self, text: str):
        self.notices.append(text)


def load_settings(trace_dir) -> Settings:
    """Defaults, updated from the run manifest when one is present."""
    s = Settings()
    path = Path(trace_dir) / "manifest.json"
    if path.exists():
        m = json.loads(path.read_text(encoding="utf-8"))
        vals = dict(m.get("analytics", {}))
        for key in ("start_weekday", "seed", "horizon_s"):
            if key in m:
                vals.setdefault(key, m[key])
        s = Settings.from_mapping(vals, s)
    return s


def _device_series(power: pd.DataFrame, meter: str) -> dict:
    sub = power[power["meter"] == meter]
    out = {}
    for dev, g in sub.groupby("device_id", sort=True):
        g = g.sort_values("timestamp_s", kind="mergesort")
        out[dev] = (g["timestamp_s"].to_numpy(float), g["watts"].to_numpy(float) / 1000.0)
    return out


def _dt(t: np.ndarray) -> float:
    return float(np.median(np.diff(t))) if t.size > 1 else 3600.0


def _shapes(a: Analysis, s: Settings, house: dict):
    rows, shapes, devs = [], [], []
    for dev, (t, kw) in house.items():
        shape = normalize_shape(hourly_profile(t, kw, _dt(t), s.basis), s.basis, dev)
        shapes.append(shape)
        devs.append(dev)
        rows += [(dev, h, v) for h, v in enumerate(shape.values)]
    a.tables["shapes.csv"] = pd.DataFrame(rows, columns=["device_id", "hour", "value"])
    if len(shapes) < s.k:
        a.note(f"shapes: {len(shapes)} devices is fewer than k={s.k}; clustering skipped")
        return
    res = cluster_shapes(shapes, s.k, s.distance, seed=s.seed)
    a.tables["clusters.csv"] = pd.DataFrame({"device_id": devs, "cluster": res.assignments})
    a.tables["centroids.csv"] = pd.DataFrame(
        [(j, h, float(v)) for j, c in enumerate(res.centroids) for h, v in enumerate(c)],
        columns=["cluster", "hour", "value"])
    sizes = np.bincount(res.assignments, minlength=s.k)
    a.lines.append(f"load shapes: {len(shapes)} devices, k={s.k}, distance={s.distance}, "
                   f"dispersion={res.dispersion:.4g}, sizes={sizes.tolist()}")


def _duty(a: Analysis, s: Settings, tcl: dict):
    rows = []
    curves = []
    for dev, (t, kw) in tcl.items():
        d = estimate_duty_cycle(t, kw, s.on_threshold_kw)
        curves.append(d)
        rows += [(dev, h, v) for h, v in enumerate(d)]
    fleet = np.nanmean(np.array(curves), axis=0)
    rows += [(FLEET, h, v) for h, v in enumerate(fleet)]
    a.tables["duty_cycle.csv"] = pd.DataFrame(rows, columns=["device_id", "hour", "duty"])
    a.lines.append(f"duty cycle: fleet mean {np.nanmean(fleet):.3f}, peak hour {int(np.nanargmax(fleet))}")


def _weekend(a: Analysis, s: Settings, house: dict):
    rows = []
    fleet_days: dict = {}
    for dev, (t, kw) in house.items():
        dt = _dt(t)
        day = (t // 86400).astype(int)
        per_day = np.bincount(day, weights=kw * dt / 3600.0)
        counts = np.bincount(day)
        full = [d for d in range(per_day.size) if counts[d] * dt >= 86400 - 1e-6]
        days = [((s.start_weekday + d) % 7, per_day[d]) for d in full]
        for d in full:
            fleet_days[d] = fleet_days.get(d, 0.0) + per_day[d]
        try:
            rows.append((dev, *weekend_weekday_ratio(days)))
        except AnalysisError:
            continue
    if not rows:
        a.note("weekend: no device has both a full weekend and a full weekday; skipped")
        return
    fleet = weekend_weekday_ratio([((s.start_weekday + d) % 7, v) for d, v in sorted(fleet_days.items())])
    rows.append((FLEET, *fleet))
    a.tables["weekend.csv"] = pd.DataFrame(rows, columns=["device_id", "mean_ratio", "median_ratio"])
    a.lines.append(f"weekend vs weekday energy: mean {fleet[0]:+.1%}, median {fleet[1]:+.1%}")


def _fridge_temps(temps: pd.DataFrame) -> dict:
    sub = temps[temps["sensor_id"] != "room"]
    out = {}
    for dev, g in sub.groupby("device_id", sort=True):
        sensor = sorted(g["sensor_id"].unique())[0]
        g = g[g["sensor_id"] == sensor].sort_values("timestamp_s", kind="mergesort")
        out[dev] = (g["timestamp_s"].to_numpy(float), g["celsius"].to_numpy(float))
    return out


def _deadband(a: Analysis, fridge: dict):
    rows = []
    failed = []
    for dev, (_, x) in fridge.items():
        try:
            e = estimate_deadband(x)
        except AnalysisError:
            failed.append(dev)
            continue
        rows.append((dev, e.theta_set, e.delta, e.n_cycles))
    a.tables["deadband.csv"] = pd.DataFrame(rows, columns=["device_id", "theta_set_est", "delta_est", "n_cycles"])
    if failed:
        a.note(f"deadband: no cycles detected for {', '.join(failed)}")


def _epi(a: Analysis, s: Settings, fridge: dict, tcl: dict):
    contents = Contents.from_volume(s.volume_l, s.fill)
    hourly_rows, iv_rows = [], []
    for dev in sorted(set(fridge) & set(tcl)):
        tt, x = fridge[dev]
        tp, kw = tcl[dev]
        common, i, j = np.intersect1d(tt, tp, return_indices=True)
        if common.size < 2:
            continue
        e = compute_epi(common, x[i], kw[j], contents, s.on_threshold_kw)
        hourly_rows += [(dev, h, v) for h, v in enumerate(e.hourly)]
        iv_rows += [(dev, *iv) for iv in e.intervals]
    if not iv_rows:
        a.note("epi: no aligned compressor-on intervals; skipped")
        return
    hourly = pd.DataFrame(hourly_rows, columns=["device_id", "hour", "epi"])
    a.tables["epi_hourly.csv"] = hourly
    a.tables["epi_intervals.csv"] = pd.DataFrame(iv_rows, columns=["device_id", "start_s", "end_s", "q_kj", "w_kj",
                                                                   "epi"])
    fleet = hourly.groupby("hour")["epi"].median()
    a.lines.append(f"EPI (Q_c/W, {s.volume_l:g} l at {s.fill:g} full): median {np.nanmedian(hourly['epi']):.3g}, "
                   f"lowest hour {int(fleet.idxmin())}")


def _correlations(a: Analysis, temps, power, door):
    frames = []
    if temps is not None:
        t = temps.assign(var=np.where(temps["sensor_id"] == "room", "room_c", "fridge_c"),
                         value=temps["celsius"])
        frames.append(t[["timestamp_s", "device_id", "var", "value"]])
    if power is not None:
        p = power.assign(var=power["meter"] + "_kw", value=power["watts"] / 1000.0)
        frames.append(p[["timestamp_s", "device_id", "var", "value"]])
    if door is not None:
        frames.append(door.assign(var="door", value=door["open"])[["timestamp_s", "device_id", "var", "value"]])
    long = pd.concat(frames, ignore_index=True)
    long["hour_index"] = (long["timestamp_s"] // 3600).astype(np.int64)
    wide = long.pivot_table(index=["device_id", "hour_index"], columns="var", values="value", aggfunc="mean")
    wide = wide.sort_index()
    rows = []
    for x, y in itertools.combinations(sorted(wide.columns), 2):
        for method in ("pearson", "spearman"):
            try:
                c = correlate(wide[x].tolist(), wide[y].tolist(), method)
                rows.append((x, y, method, c.r, c.p, c.n))
            except AnalysisError as exc:
                rows.append((x, y, method, None, None, 0))
                a.note(f"correlations: {x} vs {y} ({method}): {exc}")
    a.tables["correlations.csv"] = pd.DataFrame(rows, columns=["x", "y", "method", "r", "p", "n"])
    a.lines.append(f"correlations: {len(rows)} pairs over {len(wide)} device-hours")


def _network(a: Analysis, s: Settings, probes, outages):
    fits = []
    if outages is not None:
        horizon = s.horizon_s
        if horizon is None:
            horizon = float(math.ceil(max(outages["end_s"].max(), 1.0) / 3600.0) * 3600.0) if len(outages) else 0.0
        devs = set(outages["device_id"])
        if probes is not None:
            devs |= set(probes["device_id"])
        all_counts = []
        for dev in sorted(devs):
            g = outages[outages["device_id"] == dev]
            counts = hourly_event_counts(g["start_s"].tolist(), 0.0, horizon)
            if counts.size == 0:
                continue
            all_counts.append(counts)
            fits.append((dev, fit_poisson(counts)))
            if len(g):
                fits.append((dev, fit_exponential(g["duration_s"].tolist(), s.outlier_rule)))
        if all_counts:
            fits.append((FLEET, fit_poisson(np.concatenate(all_counts))))
        if len(outages):
            pooled = fit_exponential(outages["duration_s"].tolist(), s.outlier_rule)
            fits.append((FLEET, pooled))
            a.lines.append(f"outages: {len(outages)} events, mean duration {pooled.parameter:.0f} s "
                           f"(median {pooled.median:.0f} s, {pooled.outliers_removed} outliers removed)")
    if fits:
        a.tables["network_fits.csv"] = pd.DataFrame(
            [(d, f.family, f.parameter, f.n, f.outliers_removed, f.goodness, f.p_value, f.median, int(f.degenerate))
             for d, f in fits],
            columns=["device_id", "family", "parameter", "n", "outliers_removed", "goodness", "p_value", "median",
                     "degenerate"])
    if probes is not None:
        pings = probes[probes["kind"] == "ping"]
        rtt_cols = [f"p{i}_ms" for i in range(1, 7)]
        lat = {dev: g[rtt_cols].to_numpy(float).ravel() for dev, g in pings.groupby("device_id", sort=True)}
        lat = {d: v[np.isfinite(v)] for d, v in lat.items()}
        bw = probes[probes["kind"] == "bandwidth"].groupby("device_id")["bandwidth_bps"].mean()
        rows = []
        for dev, v in lat.items():
            sent = 6 * int((pings["device_id"] == dev).sum())
            rows.append((dev, v.size, float(v.mean()) if v.size else None, float(v.std(ddof=1)) if v.size > 1 else None,
                         float(np.median(v)) if v.size else None, 1.0 - v.size / sent if sent else None,
                         float(bw.get(dev, np.nan))))
        a.tables["latency_summary.csv"] = pd.DataFrame(
            rows, columns=["device_id", "n", "mean_ms", "sd_ms", "median_ms", "loss_fraction", "bandwidth_bps"])
        ks = []
        for x, y in itertools.combinations(sorted(d for d, v in lat.items() if v.size), 2):
            d, p = ks_two_sample(lat[x], lat[y])
            ks.append((x, y, d, p))
        if ks:
            a.tables["ks_latency.csv"] = pd.DataFrame(ks, columns=["a", "b", "D", "p"])
        allv = np.concatenate([v for v in lat.values()]) if lat else np.array([])
        if allv.size:
            a.lines.append(f"latency: {allv.size} round trips, mean {allv.mean():.0f} ms, sd {allv.std(ddof=1):.0f} ms")


def analyze(trace_dir, settings: Settings | None = None) -> Analysis:
    trace_dir = Path(trace_dir)
    if not trace_dir.is_dir():
        raise FileNotFoundError(f"trace directory not found: {trace_dir}")
    s = settings or load_settings(trace_dir)
    found = find_traces(trace_dir)
    usable = [k for k in ("temps", "power", "door", "probes", "outages") if k in found]
    if not usable:
        raise NoTracesError(f"no trace files (temps/power/door/probes/outages .csv) in {trace_dir}")
    frames = {k: read_trace(found[k], k) for k in usable}
    a = Analysis()
    power, temps, door = frames.get("power"), frames.get("temps"), frames.get("door")
    on = s.enabled
    if power is None:
        a.note("thermal sections skipped: no power trace")
    else:
        tcl = _device_series(power, "tcl")
        house = _device_series(power, "house") or tcl
        if on["shapes"]:
            _shapes(a, s, house)
        if on["duty"] and tcl:
            _duty(a, s, tcl)
        if on["weekend"]:
            _weekend(a, s, house)
    if temps is None:
        a.note("temperature sections skipped: no temps trace")
    else:
        fridge = _fridge_temps(temps)
        if on["deadband"]:
            _deadband(a, fridge)
        if on["epi"] and power is not None:
            _epi(a, s, fridge, _device_series(power, "tcl"))
    if on["correlations"] and (temps is not None or power is not None):
        _correlations(a, temps, power, door)
    if on["network"]:
        if "probes" in frames or "outages" in frames:
            _network(a, s, frames.get("probes"), frames.get("outages"))
        else:
            a.note("network sections skipped: no probes or outages trace")
    return a


def write_analysis(a: Analysis, out_dir, title: str = "analysis") -> list:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(a.tables):
        a.tables[name].to_csv(out_dir / name, index=False, lineterminator="\n", float_format="%.10g")
        written.append(name)
    text = [title, "=" * len(title), ""] + a.lines
    if a.notices:
        text += ["", "notices:"] + [f"  - {n}" for n in a.notices]
    (out_dir / "report.txt").write_text("\n".join(text) + "\n", encoding="utf-8")
    written.append("report.txt")
    return written
