import json
from pathlib import Path

import numpy as np
import pytest

from helios.electrical import CellParams
from helios.geometry import Mesh
from helios.scene import PVGeneratorSpec, Scene, SceneObject, scene_to_dict
from helios.solarpos import Site


def box_mesh(center, size):
    """Axis-aligned box as 12 triangles."""
    cx, cy, cz = center
    sx, sy, sz = (s / 2 for s in size)
    v = np.array(
        [
            [cx - sx, cy - sy, cz - sz],
            [cx + sx, cy - sy, cz - sz],
            [cx + sx, cy + sy, cz - sz],
            [cx - sx, cy + sy, cz - sz],
            [cx - sx, cy - sy, cz + sz],
            [cx + sx, cy - sy, cz + sz],
            [cx + sx, cy + sy, cz + sz],
            [cx - sx, cy + sy, cz + sz],
        ]
    )
    quads = [
        (0, 3, 2, 1),
        (4, 5, 6, 7),
        (0, 1, 5, 4),
        (1, 2, 6, 5),
        (2, 3, 7, 6),
        (3, 0, 4, 7),
    ]
    tris = []
    for a, b, c, d in quads:
        tris.append((a, b, c))
        tris.append((a, c, d))
    return Mesh(v, np.array(tris, dtype=np.int32))


def cone_mesh(center, radius, height, segments=24):
    """Cone (tree-crown stand-in): fan sides plus a fan base."""
    cx, cy, cz = center
    ang = np.linspace(0, 2 * np.pi, segments, endpoint=False)
    ring = np.stack([cx + radius * np.cos(ang), cy + radius * np.sin(ang), np.full(segments, cz)], axis=1)
    apex = np.array([[cx, cy, cz + height]])
    base = np.array([[cx, cy, cz]])
    verts = np.concatenate([ring, apex, base])
    tris = []
    for k in range(segments):
        nk = (k + 1) % segments
        tris.append((k, nk, segments))      # side
        tris.append((nk, k, segments + 1))  # base
    return Mesh(verts, np.array(tris, dtype=np.int32))


def two_substring_generator(gid="g1", origin=(0.0, 0.0, 0.5), subdivision=3, **kw):
    """One-module, 36-cell generator with two 18-cell bypass groups."""
    defaults = dict(
        id=gid,
        origin_m=np.asarray(origin, dtype=float),
        azimuth_deg=180.0,
        tilt_deg=30.0,
        module_rows=1,
        module_cols=1,
        module_w_m=0.99,
        module_h_m=1.65,
        cell_rows=6,
        cell_cols=6,
        substrings=(tuple(range(18)), tuple(range(18, 36))),
        modules_per_string=1,
        strings_parallel=1,
        subdivision=subdivision,
        cell_params=CellParams(),
    )
    defaults.update(kw)
    return PVGeneratorSpec(**defaults)


@pytest.fixture
def wall_scene():
    """Fig.1-style fixture: a wall west of a south-facing panel at lat 40."""
    wall = SceneObject(id="wall", mesh=box_mesh((-3.0, 0.0, 1.5), (0.2, 4.0, 3.0)))
    gen = two_substring_generator()
    return Scene(site=Site(40.0, -3.0), objects=(wall,), generators=(gen,))


@pytest.fixture
def bike_scene():
    """Wall + small 'bike' object + 2-module panel (Fig.1 flavor)."""
    wall = SceneObject(id="wall", mesh=box_mesh((-3.0, 0.0, 1.5), (0.2, 4.0, 3.0)))
    bike = SceneObject(id="bike", mesh=box_mesh((0.8, -1.6, 0.5), (1.4, 0.25, 1.0)))
    gen = two_substring_generator(
        gid="panel", module_cols=2, modules_per_string=2, origin=(-0.5, 0.0, 0.4)
    )
    return Scene(site=Site(40.0, -3.0), objects=(wall, bike), generators=(gen,))


def write_scene_files(scene: Scene, directory: Path) -> Path:
    """Persist a Scene as scene.json plus one OBJ per object; returns the
    scene path. Used by CLI/service tests."""
    directory.mkdir(parents=True, exist_ok=True)
    doc = scene_to_dict(scene)
    for obj, od in zip(scene.objects, doc["objects"]):
        obj_path = directory / f"{obj.id}.obj"
        lines = []
        base = obj.mesh
        for vx, vy, vz in base.vertices:
            lines.append(f"v {float(vx)!r} {float(vy)!r} {float(vz)!r}")
        for a, b, c in base.triangles:
            lines.append(f"f {a + 1} {b + 1} {c + 1}")
        obj_path.write_text("\n".join(lines) + "\n")
        od["obj_path"] = f"{obj.id}.obj"
    path = directory / "scene.json"
    path.write_text(json.dumps(doc, indent=1))
    return path
