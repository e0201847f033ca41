import shutil

import pytest

from flexsim.aggregator import RetryPolicy
from flexsim.config import bundled_config_path, load_config
from flexsim.kernel import ConfigError


def test_bundled_fleet_mix(bundled_config):
    classes = [d.params.device_class for d in bundled_config.devices]
    assert (classes.count("freezer"), classes.count("refrigerator")) == (20, 10)
    assert len(bundled_config.channels) == 30
    assert sum(c.probes for c in bundled_config.channels) == 5
    (sig,) = bundled_config.dr_schedule
    assert sig.targets == bundled_config.device_ids and sig.retry_policy == RetryPolicy(20, 60.0)


def test_overrides_applied_and_reported():
    cfg, applied = load_config(bundled_config_path(), ["seed=3", "ambient.mean=28", "channel:me03.outage_rate=0"])
    assert applied == ["scenario.seed=3", "ambient.mean=28", "channel:me03.outage_rate=0"]
    assert cfg.seed == 3 and cfg.ambient.mean == 28.0
    assert next(c for c in cfg.channels if c.device_id == "me03").outage_rate == 0.0


@pytest.mark.parametrize("override,field", [
    ("tick_seconds=abc", "scenario.tick_seconds"),
    ("channel:me03.jitter=4", "channel:me03.jitter"),
    ("channel:zz99.outage_rate=1", "channels"),
    ("aggregator.resume_mode=never", "resume_mode"),
    ("disturbance:freezer.unplug_probability=2", "disturbance:freezer"),
])
def test_bad_values_name_the_field(override, field):
    with pytest.raises(ConfigError) as err:
        load_config(bundled_config_path(), [override])
    assert err.value.field == field


def test_fleet_table_missing_column(tmp_path):
    shutil.copy(bundled_config_path(), tmp_path / "s.cfg")
    src = (bundled_config_path().parent / "managua_30_fleet.csv").read_text().splitlines()
    header = src[0].replace(",delta", "")
    rows = [",".join(r.split(",")[:7] + r.split(",")[8:]) for r in src[1:]]
    (tmp_path / "managua_30_fleet.csv").write_text("\n".join([header] + rows) + "\n")
    with pytest.raises(ConfigError, match="delta"):
        load_config(tmp_path / "s.cfg")


def test_fleet_table_missing_file(tmp_path):
    shutil.copy(bundled_config_path(), tmp_path / "s.cfg")
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "s.cfg")
