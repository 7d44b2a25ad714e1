"""Integrated shading losses over a period, with daily rollups.

Simulates one week of clear-sky operation for the wall + panel scene and
prints the loss report: the wall to the west costs energy every evening.

Run: python demos/annual_losses.py
"""

from datetime import datetime, timedelta, timezone

import numpy as np

from helios import PVGeneratorSpec, Scene, SceneObject, Site
from helios.engine import SimulationConfig, WeatherSource, simulate_period
import os, sys
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
from _toys import box  # same toy geometry

wall = SceneObject(id="wall", mesh=box((-3.0, 0.0, 1.5), (0.2, 4.0, 3.0)))
panel = PVGeneratorSpec(
    id="panel",
    origin_m=np.array([-1.0, -1.0, 0.5]),
    azimuth_deg=180.0,
    tilt_deg=30.0,
    cell_rows=6,
    cell_cols=6,
    substrings=(tuple(range(18)), tuple(range(18, 36))),
    subdivision=3,
)
scene = Scene(site=Site(40.0, -3.0), objects=(wall,), generators=(panel,))

start = datetime(2023, 6, 19, tzinfo=timezone.utc)
results, report = simulate_period(
    scene,
    WeatherSource("clear_sky"),
    start,
    start + timedelta(days=7),
    timedelta(minutes=10),
    SimulationConfig(resolution=512),
)

total = report.total("all")
print(f"week of {start:%Y-%m-%d}: {len(results)} daylight instants")
print(
    f"unshaded {total.e_unshaded_kwh:.3f} kWh, shaded {total.e_shaded_kwh:.3f} kWh, "
    f"loss {total.e_loss_kwh:.3f} kWh ({total.loss_fraction:.1%})"
)
print("\nper day:")
for row in report.rows:
    if row.scope.startswith("all:day:"):
        print(
            f"  {row.scope.split(':')[-1]}: loss {row.e_loss_kwh:.3f} kWh "
            f"({row.loss_fraction:.1%})"
        )
