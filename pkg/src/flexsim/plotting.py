"""PNG figures rendered from analysis tables and traces."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from flexsim.analysis import FLEET, Analysis  # noqa: E402

# no timestamps or version strings, so reruns are byte-identical
_META = {"Software": None}


def _save(fig, path: Path) -> str:
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path.name


def _centroids(a: Analysis, out: Path):
    df = a.tables["centroids.csv"]
    fig, ax = plt.subplots(figsize=(7, 4))
    for j, g in df.groupby("cluster"):
        ax.plot(g["hour"], g["value"], marker="o", ms=3, label=f"cluster {j}")
    ax.set(xlabel="hour of day", ylabel="z-normalized load", title="Daily load shape centroids")
    ax.legend(fontsize=8)
    return _save(fig, out / "load_shapes.png")


def _duty(a: Analysis, out: Path):
    df = a.tables["duty_cycle.csv"]
    fig, ax = plt.subplots(figsize=(7, 4))
    for dev, g in df.groupby("device_id"):
        if dev == FLEET:
            continue
        ax.plot(g["hour"], g["duty"], color="0.75", lw=0.8)
    g = df[df["device_id"] == FLEET]
    ax.plot(g["hour"], g["duty"], color="C3", lw=2, label="fleet mean")
    ax.set(xlabel="hour of day", ylabel="duty cycle", ylim=(0, 1), title="Compressor duty cycle by hour")
    ax.legend()
    return _save(fig, out / "duty_cycle.png")


def _epi(a: Analysis, out: Path):
    df = a.tables["epi_hourly.csv"]
    fig, ax = plt.subplots(figsize=(7, 4))
    med = df.groupby("hour")["epi"].median()
    q1 = df.groupby("hour")["epi"].quantile(0.25)
    q3 = df.groupby("hour")["epi"].quantile(0.75)
    ax.fill_between(med.index, q1, q3, alpha=0.3)
    ax.plot(med.index, med.values, marker="o", ms=3)
    ax.set(xlabel="hour of day", ylabel="EPI (Q_c / W)", title="Efficiency performance index")
    return _save(fig, out / "epi.png")


def _latency(probes, out: Path):
    pings = probes[probes["kind"] == "ping"]
    cols = [f"p{i}_ms" for i in range(1, 7)]
    fig, ax = plt.subplots(figsize=(7, 4))
    for dev, g in pings.groupby("device_id"):
        v = g[cols].to_numpy(float).ravel()
        v = np.sort(v[np.isfinite(v)])
        if v.size:
            ax.step(v, np.arange(1, v.size + 1) / v.size, where="post", label=dev)
    ax.set(xlabel="round-trip latency (ms)", ylabel="cumulative fraction", title="Latency distributions")
    ax.legend(fontsize=8)
    return _save(fig, out / "latency_cdf.png")


def _outages(outages, out: Path):
    fig, ax = plt.subplots(figsize=(7, 4))
    d = outages["duration_s"].to_numpy(float)
    ax.hist(d, bins=40, density=True, alpha=0.6)
    if d.size:
        x = np.linspace(0, d.max(), 200)
        ax.plot(x, np.exp(-x / d.mean()) / d.mean(), color="C3", label=f"exponential, mean {d.mean():.0f} s")
        ax.legend()
    ax.set(xlabel="outage duration (s)", ylabel="density", title="Dropped-packet event durations")
    return _save(fig, out / "outage_durations.png")


def _aggregate(power, out: Path):
    tcl = power[power["meter"] == "tcl"]
    agg = tcl.groupby("timestamp_s")["watts"].sum() / 1000.0
    fig, ax = plt.subplots(figsize=(9, 3.5))
    ax.plot(agg.index / 3600.0, agg.values, lw=0.6)
    ax.set(xlabel="hours", ylabel="kW", title="Aggregate refrigeration power")
    return _save(fig, out / "aggregate_power.png")


def render_figures(a: Analysis, frames: dict, out_dir) -> list:
    """Write every figure whose inputs are available; returns file names."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "centroids.csv" in a.tables:
        written.append(_centroids(a, out))
    if "duty_cycle.csv" in a.tables:
        written.append(_duty(a, out))
    if "epi_hourly.csv" in a.tables:
        written.append(_epi(a, out))
    if frames.get("probes") is not None:
        written.append(_latency(frames["probes"], out))
    if frames.get("outages") is not None and len(frames["outages"]):
        written.append(_outages(frames["outages"], out))
    if frames.get("power") is not None:
        written.append(_aggregate(frames["power"], out))
    return written
