"""Roof-mounted PV fixture: a 3x13-module generator shaded by a tree to the
south-east (low winter-morning sun), a house to the west (summer-evening sun)
and a streetlight pole. The leaf count scales the scene to any triangle
budget; ~80,000 triangles matches the heaviest published scenario."""

from __future__ import annotations

import numpy as np

from helios.electrical import CellParams
from helios.geometry import Mesh
from helios.scene import PVGeneratorSpec, Scene, SceneObject
from helios.solarpos import Site

from .conftest import box_mesh


def foliage_mesh(rng: np.random.Generator, n_triangles: int, center, crown_radius, crown_height):
    """Leaf triangles scattered in a cone-ish crown plus a boxy trunk."""
    n_leaves = max(1, n_triangles // 2)
    cx, cy, cz = center
    h = rng.uniform(0.0, crown_height, n_leaves)
    r_max = crown_radius * (1.0 - 0.8 * h / crown_height)
    r = np.sqrt(rng.uniform(0.0, 1.0, n_leaves)) * r_max
    ang = rng.uniform(0, 2 * np.pi, n_leaves)
    centers = np.stack([cx + r * np.cos(ang), cy + r * np.sin(ang), cz + h], axis=1)

    size = 0.06
    a = rng.normal(size=(n_leaves, 3))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    b = rng.normal(size=(n_leaves, 3))
    b -= (a * b).sum(axis=1, keepdims=True) * a
    b /= np.linalg.norm(b, axis=1, keepdims=True)

    v0 = centers - size * a
    v1 = centers + size * a
    v2 = centers + size * b
    v3 = centers - size * b
    verts = np.concatenate([v0, v1, v2, v3])
    n = n_leaves
    idx = np.arange(n)
    tris = np.concatenate(
        [
            np.stack([idx, idx + n, idx + 2 * n], axis=1),
            np.stack([idx, idx + 2 * n, idx + 3 * n], axis=1),
        ]
    )
    return Mesh(verts, tris.astype(np.int32))


def roof_generator(subdivision=1):
    """39 panels (3x13), 36 cells each, two bypass groups, one series string."""
    return PVGeneratorSpec(
        id="roof",
        origin_m=np.array([-6.5, 0.0, 2.0]),
        azimuth_deg=180.0,
        tilt_deg=30.0,
        module_rows=3,
        module_cols=13,
        module_w_m=0.99,
        module_h_m=1.65,
        gap_row_m=0.02,
        gap_col_m=0.02,
        cell_rows=6,
        cell_cols=6,
        substrings=(tuple(range(18)), tuple(range(18, 36))),
        modules_per_string=39,
        strings_parallel=1,
        subdivision=subdivision,
        cell_params=CellParams(),
    )


def build_roof_scene(total_triangles=2000, seed=20230321, subdivision=1) -> Scene:
    rng = np.random.default_rng(seed)
    house = box_mesh((-10.0, 2.0, 3.0), (8.0, 6.0, 6.0))
    pole = box_mesh((9.0, -3.0, 4.0), (0.3, 0.3, 8.0))
    trunk = box_mesh((9.0, -6.0, 1.5), (0.5, 0.5, 3.0))
    budget = max(2, total_triangles - house.triangle_count - pole.triangle_count - trunk.triangle_count)
    crown = foliage_mesh(rng, budget, center=(9.0, -6.0, 3.0), crown_radius=2.4, crown_height=5.0)
    objects = (
        SceneObject(id="house", mesh=house),
        SceneObject(id="streetlight", mesh=pole),
        SceneObject(id="trunk", mesh=trunk),
        SceneObject(id="tree", mesh=crown),
    )
    return Scene(site=Site(40.0, 0.0), objects=objects, generators=(roof_generator(subdivision),))
