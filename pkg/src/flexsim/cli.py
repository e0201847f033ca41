"""``flexsim`` command line.

Exit codes: 0 success, 1 validation error, 2 I/O error, 3 internal error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import shutil
import sys
import tempfile
import traceback
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pandas as pd

from flexsim import __version__
from flexsim.aggregator import compute_capacity
from flexsim.analysis import Settings, analyze, load_settings, write_analysis
from flexsim.analytics import AnalysisError
from flexsim.config import bundled_config_path, load_config
from flexsim.kernel import ConfigError, config_digest, run_scenario, summarize
from flexsim.store import LocalStore
from flexsim.traces import (SCHEMAS, SchemaError, find_traces, read_trace, write_manifest, write_rows,
                            write_sim_output)

log = logging.getLogger("flexsim")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_INTERNAL = 0, 1, 2, 3


class ValidationError(Exception):
    pass


@contextmanager
def staged_output(out_dir: Path):
    """Write into a scratch directory and move files into ``out_dir`` only on success."""
    out_dir = Path(out_dir)
    parent = out_dir.parent if out_dir.parent != Path("") else Path(".")
    parent.mkdir(parents=True, exist_ok=True)
    scratch = Path(tempfile.mkdtemp(prefix=".flexsim-", dir=parent))
    try:
        yield scratch
        out_dir.mkdir(parents=True, exist_ok=True)
        for f in sorted(scratch.iterdir()):
            os.replace(f, out_dir / f.name)
    finally:
        shutil.rmtree(scratch, ignore_errors=True)


# --------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg_path = Path(args.config) if args.config else bundled_config_path()
    if not cfg_path.is_file():
        raise FileNotFoundError(f"config not found: {cfg_path}")
    config, applied = load_config(cfg_path, args.override)
    log.info("simulating %d devices for %.1f h at %g s ticks (seed %d)", len(config.devices),
             config.horizon / 3600, config.tick_seconds, config.seed)
    output = run_scenario(config)
    capacity = compute_capacity([d.params for d in config.devices], config.ambient.mean)
    with staged_output(Path(args.out)) as tmp:
        files = write_sim_output(output, tmp, capacity)
        summary = summarize(output)
        (tmp / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        files.append("summary.json")
        write_manifest(tmp, cfg_path.name, config_digest(config), config.seed, applied, files, extra={
            "start_weekday": config.start_weekday,
            "horizon_s": config.horizon,
            "tick_seconds": config.tick_seconds,
            "analytics": dict(config.analytics_toggles),
        })
    print(f"wrote {len(files) + 1} files to {args.out}: {summary['devices']} devices, "
          f"{summary['tcl_kwh']:.1f} kWh refrigeration, {summary['outage_events']} outages")
    return EXIT_OK


def _settings(args) -> Settings:
    s = load_settings(args.traces)
    vals = {}
    if args.config:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        parser.optionxform = str
        with open(args.config, encoding="utf-8") as fh:
            parser.read_file(fh)
        if parser.has_section("analytics"):
            vals.update(parser.items("analytics"))
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ValidationError(f"expected key=value, got {item!r}")
        vals[key.strip()] = value.strip()
    return Settings.from_mapping(vals, s)


def cmd_analyze(args, figures: bool = False) -> int:
    settings = _settings(args)
    result = analyze(args.traces, settings)
    with staged_output(Path(args.out)) as tmp:
        files = write_analysis(result, tmp, "report" if figures else "analysis")
        if figures:
            from flexsim.plotting import render_figures

            found = find_traces(args.traces)
            frames = {k: read_trace(found[k], k) for k in ("probes", "outages", "power") if k in found}
            files += render_figures(result, frames, tmp)
    for n in result.notices:
        log.warning(n)
    print(f"wrote {len(files)} files to {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# ingest



def read_mapping(path) -> dict:
    """Column mapping: one section per trace kind, ``internal = external``.

    A value starting with ``=`` is a literal filled into every row.
    """
    parser = configparser.ConfigParser()
    parser.optionxform = str
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    mapping = {}
    for section in parser.sections():
        if section not in SCHEMAS:
            raise ValidationError(f"mapping section [{section}] is not a trace kind")
        mapping[section] = dict(parser.items(section))
    return mapping


def _match_kind(header, mapping: dict):
    for kind, cols in mapping.items():
        externals = [v for v in cols.values() if not v.startswith("=")]
        if externals and all(e in header for e in externals):
            return kind
    return None


NUMERIC = {"timestamp_s", "celsius", "watts", "open"}


def ingest_file(path: Path, mapping: dict):
    raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    kind = _match_kind(set(raw.columns), mapping)
    if kind is None:
        raise ValidationError(f"{path.name}: columns {list(raw.columns)} match no mapping section")
    cols = mapping[kind]
    out = {}
    for col in SCHEMAS[kind]:
        if col not in cols:
            raise SchemaError(kind, col, f"{path.name}: required column {col!r} is not mapped")
        src = cols[col]
        out[col] = pd.Series([src[1:]] * len(raw), dtype=object) if src.startswith("=") else raw[src]
    df = pd.DataFrame(out)
    bad = pd.Series(False, index=df.index)
    for col in SCHEMAS[kind]:
        if col in NUMERIC:
            num = pd.to_numeric(df[col], errors="coerce")
            if col == "timestamp_s" and num.isna().any():
                # ISO timestamps become epoch seconds
                dt = pd.to_datetime(df[col].where(num.isna()), errors="coerce", utc=True)
                epoch = (dt - pd.Timestamp("1970-01-01", tz="UTC")).dt.total_seconds()
                num = num.fillna(epoch)
            bad |= num.isna()
            df[col] = num
    bad |= df["device_id"].astype(str).str.strip() == ""
    return kind, df, int(bad.sum()), df[~bad].copy()


def cmd_ingest(args) -> int:
    mapping = read_mapping(args.mapping)
    parts: dict = {}
    for p in args.inputs:
        path = Path(p)
        if not path.is_file():
            raise FileNotFoundError(f"input not found: {path}")
        kind, _, n_bad, good = ingest_file(path, mapping)
        if n_bad:
            log.warning("%s: %d malformed row(s) skipped", path.name, n_bad)
        parts.setdefault(kind, []).append(good)
    with staged_output(Path(args.out)) as tmp:
        for kind, frames in sorted(parts.items()):
            df = pd.concat(frames, ignore_index=True)
            key = [c for c in ("device_id", "sensor_id", "meter", "kind") if c in df.columns]
            # rows out of order within a stream count as a warning; repeated timestamps are rejected
            order_breaks = 0
            for _, g in df.groupby(key, sort=False):
                order_breaks += int((np.diff(g["timestamp_s"].to_numpy(float)) < 0).sum())
            df = df.sort_values(key + ["timestamp_s"], kind="mergesort")
            dup = df.duplicated(key + ["timestamp_s"], keep="first")
            if order_breaks:
                log.warning("%s: %d row(s) out of timestamp order; output sorted", kind, order_breaks)
            if dup.any():
                log.warning("%s: %d row(s) with non-monotone timestamps rejected", kind, int(dup.sum()))
            df = df[~dup].sort_values(["timestamp_s"] + key, kind="mergesort")
            write_rows(tmp / f"{kind}.csv", kind, df[list(SCHEMAS[kind])].itertuples(index=False, name=None))
            print(f"{kind}: {len(df)} rows")
    return EXIT_OK


# --------------------------------------------------------------------------


def cmd_inspect(args) -> int:
    path = Path(args.path)
    if not path.exists():
        raise FileNotFoundError(f"not found: {path}")
    if path.is_dir():
        manifest = path / "manifest.json"
        if manifest.exists():
            m = json.loads(manifest.read_text(encoding="utf-8"))
            print(f"run: seed {m['seed']}, config {m['config_path']} ({m['config_sha256'][:12]})")
            if m.get("overrides"):
                print("overrides: " + ", ".join(m["overrides"]))
        for kind, f in sorted(find_traces(path).items()):
            n = sum(1 for _ in open(f, encoding="utf-8")) - 1
            print(f"{kind:12s} {n:9d} rows")
        return EXIT_OK
    if path.suffix == ".cfg":
        config, _ = load_config(path, args.override)
        n_cls = {}
        for d in config.devices:
            n_cls[d.params.device_class] = n_cls.get(d.params.device_class, 0) + 1
        print(f"valid scenario: {len(config.devices)} devices "
              f"({', '.join(f'{v} {k}' for k, v in sorted(n_cls.items()))}), "
              f"{config.horizon / 3600:g} h at {config.tick_seconds:g} s, seed {config.seed}")
        print(f"channels: {len(config.channels)}; DR signals: {len(config.dr_schedule)}")
        cap = compute_capacity([d.params for d in config.devices], config.ambient.mean)
        print(f"capacity at {config.ambient.mean:g} degC: E_cap {cap.e_cap_kwh:.3f} kWh, "
              f"P_cap [0, {cap.p_cap_range[1]:.2f}] kW, baseline {cap.baseline_p_kw:.2f} kW")
        return EXIT_OK
    store = LocalStore(path)
    rows = store.scan()
    print(f"local store: {len(rows)} records")
    if store.last_scan_warnings:
        print(f"warning: {store.last_scan_warnings} unreadable record(s) skipped")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="flexsim", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"flexsim {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario and write the trace set")
    p.add_argument("config", nargs="?", help="scenario .cfg (default: bundled 30-device example)")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--override", action="append", metavar="KEY=VALUE",
                   help="override a config value; KEY or SECTION.KEY")

    for name, help_ in (("analyze", "run the analytics over a trace directory"),
                        ("report", "analyze and render PNG figures next to the tables")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("traces")
        p.add_argument("-o", "--out", required=True)
        p.add_argument("--config", help="take [analytics] settings from this .cfg")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="analytics setting, e.g. k=4 or epi=off")

    p = sub.add_parser("ingest", help="normalize field CSVs into the trace schemas")
    p.add_argument("inputs", nargs="+")
    p.add_argument("-m", "--mapping", required=True, help="column mapping .cfg")
    p.add_argument("-o", "--out", required=True)

    p = sub.add_parser("inspect", help="describe a scenario, trace directory or local store")
    p.add_argument("path")
    p.add_argument("--override", action="append", metavar="KEY=VALUE")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    handlers = {
        "simulate": cmd_simulate,
        "analyze": cmd_analyze,
        "report": lambda a: cmd_analyze(a, figures=True),
        "ingest": cmd_ingest,
        "inspect": cmd_inspect,
    }
    try:
        return handlers[args.command](args)
    except SchemaError as exc:
        print(f"error: schema mismatch: {exc} (column {exc.column})", file=sys.stderr)
        return EXIT_VALIDATION
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValidationError, AnalysisError, configparser.Error, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception:  # pragma: no cover - last resort
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
