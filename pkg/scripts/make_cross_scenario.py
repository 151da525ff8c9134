#!/usr/bin/env python3
"""Regenerate the bundled cross-intersection scenario (scenarios/cross.*).

Five gNBs sit on a crossroads (one at the junction, four 300 m out along
the arms); 60 vehicles travel the two roads for 10 s, with a slow queue
near the junction.  Deterministic: fixed RNG seed, stable row order.
"""

import argparse
import csv
import math
from pathlib import Path

import numpy as np

CENTER = 1000.0
SEED = 2024
T_END = 10.0
SAMPLE_STEP = 0.5

CONFIG = """\
# Synthetic cross-intersection scenario: 5 gNBs, 60 vehicles, 10 s.
# Regenerate with scripts/make_cross_scenario.py.

[area]
origin = [0.0, 0.0]
width_m = 2000.0
height_m = 2000.0
zone_side_m = 10.0

[trace]
path = "cross_trace.csv"

[limits]
max_configs = 48
widths_deg = [5.0, 10.0, 15.0]
direction_quantum_deg = 1.0
range_m = 400.0
gain_window = 1000

[[gnbs]]
id = 0
x = 1000.0
y = 1000.0
psi_deg = 0.0
p_dbm = 33.0
nt = 64
b_max = 2
rf_chains = 2

[[gnbs]]
id = 1
x = 700.0
y = 1000.0
psi_deg = 0.0
p_dbm = 33.0
nt = 64
b_max = 2
rf_chains = 2

[[gnbs]]
id = 2
x = 1300.0
y = 1000.0
psi_deg = 180.0
p_dbm = 33.0
nt = 64
b_max = 2
rf_chains = 2

[[gnbs]]
id = 3
x = 1000.0
y = 700.0
psi_deg = 90.0
p_dbm = 33.0
nt = 64
b_max = 2
rf_chains = 2

[[gnbs]]
id = 4
x = 1000.0
y = 1300.0
psi_deg = 270.0
p_dbm = 33.0
nt = 64
b_max = 2
rf_chains = 2
"""


def vehicle_tracks():
    """60 vehicles in platoons plus a few singletons, on the two roads.

    Traffic pockets (red-light queues and moving platoons) make beam choices
    genuinely distinct; singleton vehicles are below clustering density.
    Each track is (vid, axis, offset_from_center, lane, speed).
    """
    rng = np.random.default_rng(SEED)
    # (axis, head offset, lane sign, speed, size)
    platoons = [
        ("x", -45.0, +1, 1.5, 9),    # eastbound queue at the junction
        ("y", -50.0, +1, 1.2, 8),    # northbound queue at the junction
        ("x", 185.0, +1, 9.0, 8),    # eastbound platoon leaving
        ("x", -320.0, -1, -11.0, 7),  # westbound platoon far west, heading out
        ("y", 255.0, -1, -8.0, 8),   # southbound platoon north of the junction
        ("y", -300.0, +1, 10.0, 7),  # northbound platoon approaching
        ("x", 395.0, -1, -12.0, 7),  # westbound platoon far east, approaching
    ]
    tracks = []
    vid = 0
    for axis, head, lane_sign, speed, size in platoons:
        for k in range(size):
            gap = float(rng.uniform(8.0, 13.0))
            offset = head - math.copysign(gap * k, speed)
            tracks.append((vid, axis, offset, 2.5 * lane_sign, speed))
            vid += 1
    singles = [
        ("x", 520.0, +1, 13.0),
        ("x", -480.0, -1, -12.0),
        ("y", 455.0, +1, 11.0),
        ("y", -460.0, -1, -13.0),
        ("x", 320.0, +1, 12.0),
        ("y", 130.0, -1, -9.0),
    ]
    for axis, offset, lane_sign, speed in singles:
        tracks.append((vid, axis, offset, 2.5 * lane_sign, speed))
        vid += 1
    assert vid == 60
    return tracks


def write_trace(path: Path):
    rows = []
    times = np.arange(0.0, T_END + 1e-9, SAMPLE_STEP)
    for vid, axis, offset, lane, speed in vehicle_tracks():
        for t in times:
            along = CENTER + offset + speed * t
            if axis == "x":
                x, y = along, CENTER + lane
            else:
                x, y = CENTER + lane, along
            rows.append((f"{t:.1f}", vid, f"{x:.2f}", f"{y:.2f}"))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_s", "vehicle_id", "x_m", "y_m"])
        writer.writerows(rows)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--outdir", default=Path(__file__).resolve().parent.parent / "scenarios")
    args = parser.parse_args()
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "cross.toml").write_text(CONFIG)
    write_trace(outdir / "cross_trace.csv")
    print(f"wrote {outdir / 'cross.toml'} and {outdir / 'cross_trace.csv'}")


if __name__ == "__main__":
    main()
