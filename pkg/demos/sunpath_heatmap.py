"""Sun-path heatmap of the effective shading factor.

A roof array with a tree to the south-east and a house to the west: the
tree bites into low winter-morning sun, the house into summer evenings.
A coarse annual run (1 h steps) renders the azimuth-zenith heatmap.
Writes sunpath_heatmap.png.

Run: python demos/sunpath_heatmap.py   (about a minute)
"""

from datetime import datetime, timedelta, timezone

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from helios import CellParams, PVGeneratorSpec, Scene, SceneObject, Site
from helios.engine import SimulationConfig, WeatherSource, build_heatmap, simulate_period
import os, sys
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
from _toys import box

house = SceneObject(id="house", mesh=box((-10.0, 2.0, 3.0), (8.0, 6.0, 6.0)))
tree = SceneObject(id="tree", mesh=box((9.0, -6.0, 4.0), (4.0, 4.0, 8.0)))
roof = PVGeneratorSpec(
    id="roof",
    origin_m=np.array([-6.5, 0.0, 2.0]),
    azimuth_deg=180.0,
    tilt_deg=30.0,
    module_rows=3,
    module_cols=13,
    cell_rows=6,
    cell_cols=6,
    substrings=(tuple(range(18)), tuple(range(18, 36))),
    modules_per_string=39,
    subdivision=1,
    cell_params=CellParams(),
)
scene = Scene(site=Site(40.0, 0.0), objects=(house, tree), generators=(roof,))

results, report = simulate_period(
    scene,
    WeatherSource("clear_sky"),
    datetime(2023, 1, 1, tzinfo=timezone.utc),
    datetime(2024, 1, 1, tzinfo=timezone.utc),
    timedelta(hours=1),
    SimulationConfig(resolution=512),
)
print(f"annual loss fraction: {report.total('all').loss_fraction:.1%}")

hm = build_heatmap(results)
masked = np.where(hm.count.T > 0, hm.mean_factor.T, np.nan)

fig, ax = plt.subplots(figsize=(9, 4))
im = ax.imshow(
    masked,
    origin="lower",
    extent=(0, 360, 0, 90),
    aspect="auto",
    cmap="inferno",
    vmin=0,
    vmax=1,
)
ax.set_xlabel("solar azimuth (deg, clockwise from N)")
ax.set_ylabel("solar zenith (deg)")
ax.set_title("mean effective shading factor on the sun path")
fig.colorbar(im, label="effective shading factor")
fig.tight_layout()
fig.savefig("sunpath_heatmap.png", dpi=120)
print("wrote sunpath_heatmap.png")
