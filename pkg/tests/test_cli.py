import json
import logging
import shutil

import numpy as np
import pandas as pd
import pytest

from flexsim.cli import main
from flexsim.config import bundled_config_path
from flexsim.traces import SCHEMAS, sha256_file

KEEP = ("me01", "me02", "me03", "me11", "me17", "hh01", "hh02", "hh07")
SHORT = ["--override", "horizon_hours=48", "--override", "dr:evt1.issue_hour=26"]


@pytest.fixture(scope="module")
def scenario(tmp_path_factory):
    """Bundled scenario cut down to eight devices."""
    root = tmp_path_factory.mktemp("scenario")
    src = bundled_config_path()
    shutil.copy(src, root / "small.cfg")
    fleet = pd.read_csv(src.parent / "managua_30_fleet.csv")
    fleet[fleet["device_id"].isin(KEEP)].to_csv(root / "managua_30_fleet.csv", index=False)
    return root / "small.cfg"


@pytest.fixture(scope="module")
def traces(scenario, tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "traces"
    assert main(["simulate", str(scenario), "-o", str(out), "--override", "seed=7"] + SHORT) == 0
    return out


def test_simulate_writes_trace_set(traces):
    names = {p.name for p in traces.iterdir()}
    assert {f"{k}.csv" for k in ("temps", "power", "door", "probes", "outages", "dispatch")} <= names
    temps = pd.read_csv(traces / "temps.csv")
    assert list(temps.columns) == list(SCHEMAS["temps"])
    assert sorted(temps["device_id"].unique()) == sorted(KEEP)


def test_manifest_records_override_and_hashes(traces):
    m = json.loads((traces / "manifest.json").read_text())
    assert "scenario.seed=7" in m["overrides"] and m["seed"] == 7
    for name, digest in m["files"].items():
        assert sha256_file(traces / name) == digest


def test_missing_config_leaves_nothing(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["simulate", str(tmp_path / "nope.cfg"), "-o", str(out)]) == 2
    assert not out.exists() and list(tmp_path.iterdir()) == []
    assert "not found" in capsys.readouterr().err


def test_invalid_config_value(scenario, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["simulate", str(scenario), "-o", str(out), "--override", "tick_seconds=-1"]) == 1
    assert not out.exists()
    assert "tick_seconds" in capsys.readouterr().err


def test_analyze_produces_tables(traces, tmp_path):
    out = tmp_path / "analysis"
    assert main(["analyze", str(traces), "-o", str(out), "--set", "k=5"]) == 0
    clusters = pd.read_csv(out / "clusters.csv")
    assert clusters["cluster"].nunique() == 5
    assert (out / "report.txt").read_text().startswith("analysis")
    db = pd.read_csv(out / "deadband.csv")
    assert set(db["device_id"]) == set(KEEP)


def test_analyze_settings_from_flags(traces, tmp_path):
    out = tmp_path / "a"
    assert main(["analyze", str(traces), "-o", str(out), "--set", "k=3", "--set", "epi=off"]) == 0
    assert pd.read_csv(out / "clusters.csv")["cluster"].nunique() == 3
    assert not (out / "epi_hourly.csv").exists()


def test_report_renders_figures(traces, tmp_path):
    out = tmp_path / "report"
    assert main(["report", str(traces), "-o", str(out)]) == 0
    pngs = sorted(p.name for p in out.glob("*.png"))
    assert pngs == ["aggregate_power.png", "duty_cycle.png", "epi.png", "latency_cdf.png", "load_shapes.png",
                    "outage_durations.png"]
    assert all((out / p).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n" for p in pngs)


def test_analyze_empty_dir(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert main(["analyze", str(tmp_path / "empty"), "-o", str(tmp_path / "out")]) != 0
    assert not (tmp_path / "out").exists()


def test_analyze_missing_dir(tmp_path):
    assert main(["analyze", str(tmp_path / "nowhere"), "-o", str(tmp_path / "out")]) == 2


def test_analyze_probes_only(traces, tmp_path, caplog):
    only = tmp_path / "probes_only"
    only.mkdir()
    shutil.copy(traces / "probes.csv", only / "probes.csv")
    out = tmp_path / "out"
    with caplog.at_level(logging.WARNING):
        assert main(["analyze", str(only), "-o", str(out)]) == 0
    assert (out / "latency_summary.csv").exists()
    assert not (out / "clusters.csv").exists()
    assert "skipped" in caplog.text


def test_schema_mismatch_names_column(traces, tmp_path, capsys):
    bad = tmp_path / "bad"
    bad.mkdir()
    pd.read_csv(traces / "temps.csv").drop(columns=["celsius"]).to_csv(bad / "temps.csv", index=False)
    assert main(["analyze", str(bad), "-o", str(tmp_path / "out")]) == 1
    assert "celsius" in capsys.readouterr().err


def test_inspect_variants(traces, scenario, tmp_path, capsys):
    assert main(["inspect", str(scenario)]) == 0
    assert "valid scenario: 8 devices" in capsys.readouterr().out
    assert main(["inspect", str(traces)]) == 0
    assert "seed 7" in capsys.readouterr().out
    (tmp_path / "store.log").write_bytes(b"")
    assert main(["inspect", str(tmp_path / "store.log")]) == 0
    assert "0 records" in capsys.readouterr().out


# --------------------------------------------------------------------------
# ingest

MAPPING = """\
[temps]
timestamp_s = time
device_id = logger
sensor_id = =fridge
celsius = temp
"""


def field_file(path, n, rng, shuffle=False, iso=False):
    t = np.arange(n) * 60.0
    df = pd.DataFrame({"logger": "shop1", "time": t, "temp": np.round(-15 + rng.normal(0, 1, n), 3)})
    if iso:
        df["time"] = pd.to_datetime(t, unit="s", utc=True).strftime("%Y-%m-%dT%H:%M:%SZ")
    if shuffle:
        df = df.sample(frac=1.0, random_state=0)
    df.to_csv(path, index=False)
    return df


@pytest.fixture
def mapping(tmp_path):
    p = tmp_path / "map.cfg"
    p.write_text(MAPPING)
    return p


def test_ingest_well_formed(tmp_path, mapping):
    field_file(tmp_path / "f.csv", 100, np.random.default_rng(0))
    assert main(["ingest", str(tmp_path / "f.csv"), "-m", str(mapping), "-o", str(tmp_path / "out")]) == 0
    out = pd.read_csv(tmp_path / "out" / "temps.csv")
    assert list(out.columns) == list(SCHEMAS["temps"]) and len(out) == 100
    assert set(out["sensor_id"]) == {"fridge"}


def test_ingest_skips_one_malformed_row(tmp_path, mapping, caplog):
    df = field_file(tmp_path / "f.csv", 1000, np.random.default_rng(0))
    df["temp"] = df["temp"].astype(object)
    df.loc[417, "temp"] = "n/a"
    df.to_csv(tmp_path / "f.csv", index=False)
    with caplog.at_level(logging.WARNING):
        assert main(["ingest", str(tmp_path / "f.csv"), "-m", str(mapping), "-o", str(tmp_path / "out")]) == 0
    assert len(pd.read_csv(tmp_path / "out" / "temps.csv")) == 999
    assert "1 malformed row(s) skipped" in caplog.text


def test_ingest_sorts_shuffled_rows(tmp_path, mapping, caplog):
    field_file(tmp_path / "f.csv", 200, np.random.default_rng(0), shuffle=True)
    with caplog.at_level(logging.WARNING):
        assert main(["ingest", str(tmp_path / "f.csv"), "-m", str(mapping), "-o", str(tmp_path / "out")]) == 0
    ts = pd.read_csv(tmp_path / "out" / "temps.csv")["timestamp_s"]
    assert ts.is_monotonic_increasing and len(ts) == 200
    assert "out of timestamp order" in caplog.text


def test_ingest_iso_timestamps(tmp_path, mapping):
    field_file(tmp_path / "f.csv", 10, np.random.default_rng(0), iso=True)
    assert main(["ingest", str(tmp_path / "f.csv"), "-m", str(mapping), "-o", str(tmp_path / "out")]) == 0
    ts = pd.read_csv(tmp_path / "out" / "temps.csv")["timestamp_s"]
    assert ts.tolist() == [60.0 * k for k in range(10)]


def test_ingest_rejects_duplicate_timestamps(tmp_path, mapping, caplog):
    df = field_file(tmp_path / "f.csv", 50, np.random.default_rng(0))
    pd.concat([df, df.iloc[[10]]]).to_csv(tmp_path / "f.csv", index=False)
    with caplog.at_level(logging.WARNING):
        assert main(["ingest", str(tmp_path / "f.csv"), "-m", str(mapping), "-o", str(tmp_path / "out")]) == 0
    assert len(pd.read_csv(tmp_path / "out" / "temps.csv")) == 50
    assert "non-monotone" in caplog.text


def test_ingest_unmapped_columns(tmp_path, mapping, capsys):
    pd.DataFrame({"a": [1], "b": [2]}).to_csv(tmp_path / "f.csv", index=False)
    assert main(["ingest", str(tmp_path / "f.csv"), "-m", str(mapping), "-o", str(tmp_path / "out")]) == 1
    assert "match no mapping" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_ingested_traces_analyze(tmp_path, mapping):
    field_file(tmp_path / "f.csv", 3000, np.random.default_rng(0))
    assert main(["ingest", str(tmp_path / "f.csv"), "-m", str(mapping), "-o", str(tmp_path / "norm")]) == 0
    assert main(["analyze", str(tmp_path / "norm"), "-o", str(tmp_path / "out")]) == 0
