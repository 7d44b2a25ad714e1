"""Shadow classification on a simple scene, step by step.

A wall stands west of a small south-facing PV panel. We pick an evening
instant, rasterize the depth map from the sun, classify every sub-cell
sample, and look at the per-cell shaded fractions. Writes depth.pgm for
visual inspection (near occluders dark, empty sky white).

Run: python demos/shadow_mask_basics.py
"""

from datetime import datetime, timezone

import numpy as np

from helios import (
    Mesh,
    PVGeneratorSpec,
    Scene,
    SceneObject,
    Site,
    sun_direction,
    sun_position,
)
from helios.scene import generator_samples, generator_plane_axes, scene_occluders, sample_positions
import os, sys
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
from _toys import box
from helios.shadows import (
    build_depth_map,
    classify,
    default_depth_bias,
    depth_map_to_pgm16,
)


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

instant = datetime(2023, 6, 21, 16, 0, tzinfo=timezone.utc)
sun = sun_position(scene.site, instant)
print(f"sun at {instant:%H:%M} UTC: azimuth {sun.azimuth_deg:.1f} deg, zenith {sun.zenith_deg:.1f} deg")

s_dir = sun_direction(sun)
occluders = scene_occluders(scene, "panel")
print(f"{len(occluders)} occluder triangles")

samples = generator_samples(panel)
footprint = sample_positions(panel)
depth_map = build_depth_map(occluders, s_dir, footprint, resolution=512)

_, _, normal = generator_plane_axes(panel)
bias = default_depth_bias(depth_map.texel_world_size, abs(float(s_dir @ normal)))
mask = classify(depth_map, samples, bias, instant=instant)

fractions = mask.cell_fractions()[0].reshape(6, 6)
print(f"\nshaded samples: {int(mask.shaded.sum())} / {mask.shaded.size}")
print("per-cell shaded fractions (cell rows top to bottom):")
for row in fractions[::-1]:
    print("  " + " ".join(f"{f:4.2f}" for f in row))

with open("depth.pgm", "wb") as fh:
    fh.write(depth_map_to_pgm16(depth_map))
print("\nwrote depth.pgm (16-bit grayscale, view with any image tool)")
