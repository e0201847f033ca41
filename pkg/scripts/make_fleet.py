"""Regenerate src/flexsim/data/managua_30_fleet.csv.

Twenty micro-enterprise freezers and ten household refrigerators with
parameters drawn around the two reference devices. Draws are rejected until
the device cycles with a duty cycle in [0.15, 0.85] across 25-35 degC rooms.
"""

import csv
from pathlib import Path

import numpy as np

from flexsim.loadshapes import ARCHETYPE_NAMES
from flexsim.thermal import TclParams, ThermalError, analytic_duty_cycle

OUT = Path(__file__).resolve().parents[1] / "src" / "flexsim" / "data" / "managua_30_fleet.csv"

CLASSES = {
    "freezer": dict(R=(80, 120), C=(0.03, 0.05), eta=(1.6, 2.4), P=(0.28, 0.42),
                    theta_set=(-18, -12), delta=(4, 8), house_base_kw=(0.3, 0.9)),
    "refrigerator": dict(R=(160, 240), C=(0.011, 0.018), eta=(1.6, 2.4), P=(0.12, 0.18),
                         theta_set=(2, 6), delta=(3, 5), house_base_kw=(0.15, 0.5)),
}


def draw(rng, cls):
    spec = CLASSES[cls]
    while True:
        v = {k: round(float(rng.uniform(*r)), 4) for k, r in spec.items()}
        p = TclParams("probe", v["R"], v["C"], v["eta"], v["P"], v["theta_set"], v["delta"])
        try:
            duties = [analytic_duty_cycle(p, ta).duty for ta in (25.0, 30.0, 35.0)]
        except ThermalError:
            continue
        if 0.15 <= min(duties) and max(duties) <= 0.85:
            return v


def main():
    rng = np.random.default_rng(20150701)
    rows = []
    for i in range(20):
        rows.append(("me%02d" % (i + 1), "freezer", draw(rng, "freezer")))
    for i in range(10):
        rows.append(("hh%02d" % (i + 1), "refrigerator", draw(rng, "refrigerator")))
    with open(OUT, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["device_id", "device_class", "R", "C", "eta", "P", "theta_set", "delta",
                    "house_profile", "house_base_kw"])
        for k, (dev, cls, v) in enumerate(rows):
            w.writerow([dev, cls, v["R"], v["C"], v["eta"], v["P"], v["theta_set"], v["delta"],
                        ARCHETYPE_NAMES[k % len(ARCHETYPE_NAMES)], v["house_base_kw"]])
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
