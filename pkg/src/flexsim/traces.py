"""CSV trace schemas shared by ``simulate``, ``ingest`` and ``analyze``."""

from __future__ import annotations

import csv
import hashlib
import json
import platform
from pathlib import Path

import numpy as np
import pandas as pd

from flexsim.gateway import UPLINK_FIELDS
from flexsim.netsim import PROBE_FIELDS

SCHEMAS = {
    "temps": ("timestamp_s", "device_id", "sensor_id", "celsius"),
    "power": ("timestamp_s", "device_id", "watts", "meter"),
    "door": ("timestamp_s", "device_id", "open"),
    "stored_rows": ("timestamp_s", "device_id", "sensor_id", "value", "store_reason"),
    "uplink_rows": UPLINK_FIELDS + ("delivered_at_s",),
    "probes": PROBE_FIELDS,
    "outages": ("device_id", "start_s", "end_s", "duration_s"),
    "dispatch": ("signal_id", "action", "issue_time_s", "device_id", "attempt", "sent_at_s",
                 "delivered_at_s", "dropped"),
    "events": ("timestamp_s", "device_id", "kind", "detail"),
    "capacity": ("timestamp_s", "device_id", "e_kwh", "p_kw", "duty"),
    "exogenous": ("timestamp_s", "value"),
}
TRACE_KINDS = ("temps", "power", "door", "probes", "outages")


class SchemaError(ValueError):
    def __init__(self, kind: str, column: str, message: str = ""):
        super().__init__(message or f"{kind}.csv: missing required column {column!r}")
        self.kind = kind
        self.column = column


def _fmt(x, spec: str = ".6f") -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        if x != x:
            return ""
        if x == int(x) and abs(x) < 1e15:
            return str(int(x))
        return format(x, spec).rstrip("0").rstrip(".")
    return str(x)


def write_rows(path: Path, kind: str, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCHEMAS[kind])
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _series_frame(output, kind: str, scale: float, decimals: int) -> pd.DataFrame:
    arr = output.series[kind]
    nd, nt = arr.shape
    return pd.DataFrame({
        "timestamp_s": np.tile(output.times, nd).astype(np.int64) if np.all(output.times == np.round(output.times))
        else np.tile(output.times, nd),
        "device_id": np.repeat(np.array(output.device_ids, dtype=object), nt),
        "value": np.round(arr.reshape(-1) * scale, decimals),
    })


def write_sim_output(output, out_dir, capacity=None) -> list:
    """Write every trace kind of a run; returns the file names written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    def frame_to_csv(df, name):
        df.to_csv(out_dir / name, index=False, lineterminator="\n")
        written.append(name)

    theta = _series_frame(output, "theta", 1.0, 4).assign(sensor_id="fridge")
    room = _series_frame(output, "room", 1.0, 4).assign(sensor_id="room")
    temps = pd.concat([theta, room], ignore_index=True).rename(columns={"value": "celsius"})
    temps = temps.sort_values(["timestamp_s", "device_id", "sensor_id"], kind="mergesort")
    frame_to_csv(temps[list(SCHEMAS["temps"])], "temps.csv")

    tcl = _series_frame(output, "tcl_kw", 1000.0, 2).assign(meter="tcl")
    house = _series_frame(output, "house_kw", 1000.0, 2).assign(meter="house")
    power = pd.concat([tcl, house], ignore_index=True).rename(columns={"value": "watts"})
    power = power.sort_values(["timestamp_s", "device_id", "meter"], kind="mergesort")
    frame_to_csv(power[list(SCHEMAS["power"])], "power.csv")

    door = _series_frame(output, "door", 1.0, 0).rename(columns={"value": "open"})
    door["open"] = door["open"].astype(int)
    door = door.sort_values(["timestamp_s", "device_id"], kind="mergesort")
    frame_to_csv(door[list(SCHEMAS["door"])], "door.csv")

    stored = pd.DataFrame(
        [(r.timestamp, r.device_id, r.sensor_id, round(r.value, 4), r.store_reason) for r in output.stored_rows],
        columns=SCHEMAS["stored_rows"],
    )
    frame_to_csv(stored, "stored_rows.csv")

    write_rows(out_dir / "uplink_rows.csv", "uplink_rows",
               (row.to_flat() + [at] for row, at in output.uplink_rows))
    write_rows(out_dir / "probes.csv", "probes", (p.to_flat() for p in output.probes))
    write_rows(out_dir / "outages.csv", "outages", ((d, a, b, b - a) for d, a, b in output.outages))
    write_rows(out_dir / "dispatch.csv", "dispatch", dispatch_rows(output.dispatch))
    write_rows(out_dir / "events.csv", "events", output.events)
    written += ["uplink_rows.csv", "probes.csv", "outages.csv", "dispatch.csv", "events.csv"]
    if capacity is not None:
        rows = list(capacity.rows())
        rows.append((capacity.timestamp, "__fleet__", capacity.e_cap_kwh, capacity.p_cap_range[1],
                     capacity.baseline_p_kw))
        write_rows(out_dir / "capacity.csv", "capacity", rows)
        written.append("capacity.csv")
    if output.exogenous:
        write_rows(out_dir / "exogenous.csv", "exogenous", output.exogenous)
        written.append("exogenous.csv")
    return written


def dispatch_rows(outcomes):
    for o in outcomes:
        for dev in sorted(o.attempts):
            for k, d in enumerate(o.attempts[dev]):
                yield (o.signal_id, o.action, o.issue_time, dev, k, d.sent_at, d.delivered_at, int(d.dropped))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, config_path, config_digest: str, seed: int, overrides, files, extra=None) -> Path:
    from flexsim import __version__

    out_dir = Path(out_dir)
    manifest = {
        "config_path": str(config_path),
        "config_sha256": config_digest,
        "seed": seed,
        "overrides": list(overrides),
        "versions": {
            "flexsim": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "pandas": pd.__version__,
        },
        "files": {name: sha256_file(out_dir / name) for name in sorted(files)},
    }
    manifest.update(extra or {})
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_trace(path, kind: str) -> pd.DataFrame:
    """Read one trace file and check its columns against the schema."""
    df = pd.read_csv(path, dtype={"device_id": str})
    for col in SCHEMAS[kind]:
        if col not in df.columns:
            raise SchemaError(kind, col)
    return df


def find_traces(trace_dir) -> dict:
    trace_dir = Path(trace_dir)
    return {k: trace_dir / f"{k}.csv" for k in SCHEMAS if (trace_dir / f"{k}.csv").exists()}
