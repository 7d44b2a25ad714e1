"""Scene description: transformable mesh objects plus PV generators, their
geometric instantiation (module quads, cell sample points) and the versioned
JSON document format."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .electrical import CellParams
from .geometry import GeometryError, Mesh, Transform, parse_obj, transform_mesh, unit
from .solarpos import Site

__all__ = [
    "SceneError",
    "SceneObject",
    "PVGeneratorSpec",
    "SamplePoint",
    "Scene",
    "scene_occluders",
    "generator_samples",
    "generator_plane_axes",
    "generator_panel_quads",
    "load_scene",
    "scene_from_dict",
    "scene_to_dict",
]

SCENE_SCHEMA_VERSION = 1
DEFAULT_SUBDIVISION = 3


class SceneError(ValueError):
    """Invalid scene document or scene query."""


@dataclass(frozen=True)
class SceneObject:
    """A mesh instance with its placement; hidden objects cast no shadows."""

    id: str
    mesh: Mesh
    transform: Transform = field(default_factory=Transform.identity)
    visible: bool = True
    obj_path: str | None = None

    def world_triangles(self) -> np.ndarray:
        return transform_mesh(self.mesh, self.transform).world_triangles()


@dataclass(frozen=True)
class PVGeneratorSpec:
    """Geometric layout and electrical wiring of one PV generator.

    The module grid lies in the generator plane: origin is the lower-left
    corner, columns run along the in-plane width axis, rows up the slope.
    substrings maps each bypass-diode group to the cell indices it protects
    (row-major within a module); the same grouping applies to every module.
    """

    id: str
    origin_m: np.ndarray
    mode: str = "fixed"  # "fixed" | "two_axis"
    azimuth_deg: float = 180.0
    tilt_deg: float = 30.0
    module_rows: int = 1
    module_cols: int = 1
    module_w_m: float = 0.99
    module_h_m: float = 1.65
    gap_row_m: float = 0.02
    gap_col_m: float = 0.02
    cell_rows: int = 6
    cell_cols: int = 6
    substrings: tuple[tuple[int, ...], ...] = ()
    modules_per_string: int = 0
    strings_parallel: int = 1
    subdivision: int = DEFAULT_SUBDIVISION
    self_occluding: bool = False
    cell_params: CellParams = field(default_factory=CellParams)

    def __post_init__(self):
        origin = np.asarray(self.origin_m, dtype=np.float64).reshape(3)
        origin.setflags(write=False)
        object.__setattr__(self, "origin_m", origin)
        if self.mode not in ("fixed", "two_axis"):
            raise SceneError(f"generator {self.id}: unknown mode {self.mode!r}")
        if self.module_rows < 1 or self.module_cols < 1:
            raise SceneError(f"generator {self.id}: module grid must be >= 1x1")
        if self.cell_rows < 1 or self.cell_cols < 1:
            raise SceneError(f"generator {self.id}: cell grid must be >= 1x1")
        if self.subdivision < 1:
            raise SceneError(f"generator {self.id}: subdivision must be >= 1")
        if min(self.module_w_m, self.module_h_m) <= 0:
            raise SceneError(f"generator {self.id}: module size must be positive")
        if self.gap_row_m < 0 or self.gap_col_m < 0:
            raise SceneError(f"generator {self.id}: gaps must be >= 0")

        n_cells = self.cell_rows * self.cell_cols
        subs = self.substrings or (tuple(range(n_cells)),)
        subs = tuple(tuple(int(c) for c in group) for group in subs)
        covered = [c for group in subs for c in group]
        if sorted(covered) != list(range(n_cells)):
            missing = sorted(set(range(n_cells)) - set(covered))
            dupes = sorted({c for c in covered if covered.count(c) > 1})
            raise SceneError(
                f"generator {self.id}: substring map must cover every cell exactly once"
                + (f"; missing cell {missing[0]}" if missing else "")
                + (f"; duplicate cell {dupes[0]}" if dupes else "")
            )
        object.__setattr__(self, "substrings", subs)

        n_modules = self.module_rows * self.module_cols
        mps = self.modules_per_string or n_modules
        object.__setattr__(self, "modules_per_string", mps)
        if mps * self.strings_parallel != n_modules:
            raise SceneError(
                f"generator {self.id}: wiring covers {mps * self.strings_parallel} "
                f"modules, grid has {n_modules}"
            )

    @property
    def module_count(self) -> int:
        return self.module_rows * self.module_cols

    @property
    def cells_per_module(self) -> int:
        return self.cell_rows * self.cell_cols

    @property
    def sample_count(self) -> int:
        return self.module_count * self.cells_per_module * self.subdivision**2

    def fixed_normal(self) -> np.ndarray:
        t = math.radians(self.tilt_deg)
        a = math.radians(self.azimuth_deg)
        return np.array(
            [math.sin(t) * math.sin(a), math.sin(t) * math.cos(a), math.cos(t)]
        )


@dataclass(frozen=True)
class SamplePoint:
    """One shading sample: a sub-cell center in world coordinates."""

    position: np.ndarray
    generator_id: str
    module_index: int
    cell_index: int
    sub_index: int


@dataclass(frozen=True)
class Scene:
    """Immutable scene snapshot: site, occluder objects, PV generators."""

    site: Site
    objects: tuple[SceneObject, ...] = ()
    generators: tuple[PVGeneratorSpec, ...] = ()

    def __post_init__(self):
        ids = [o.id for o in self.objects] + [g.id for g in self.generators]
        seen = set()
        for i in ids:
            if i in seen:
                raise SceneError(f"duplicate id {i!r} in scene")
            seen.add(i)
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "generators", tuple(self.generators))

    def object(self, oid: str) -> SceneObject:
        for o in self.objects:
            if o.id == oid:
                return o
        raise SceneError(f"unknown object id {oid!r}")

    def generator(self, gid: str) -> PVGeneratorSpec:
        for g in self.generators:
            if g.id == gid:
                return g
        raise SceneError(f"unknown generator id {gid!r}")

    def with_object(self, oid: str, **changes) -> "Scene":
        """New scene revision with one object's transform/visibility replaced."""
        obj = self.object(oid)
        new = replace(obj, **changes)
        return replace(
            self, objects=tuple(new if o.id == oid else o for o in self.objects)
        )

    def with_generator(self, gid: str, **changes) -> "Scene":
        gen = self.generator(gid)
        new = replace(gen, **changes)
        return replace(
            self, generators=tuple(new if g.id == gid else g for g in self.generators)
        )


def generator_plane_axes(
    spec: PVGeneratorSpec, plane_normal: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(u, v, n): in-plane width axis, in-plane up-slope axis, unit normal.

    Fixed mode derives the axes from azimuth/tilt; tracker mode builds a
    stable in-plane frame around the supplied instantaneous normal.
    """
    if spec.mode == "fixed" and plane_normal is None:
        t = math.radians(spec.tilt_deg)
        a = math.radians(spec.azimuth_deg)
        n = spec.fixed_normal()
        v = np.array(
            [-math.sin(a) * math.cos(t), -math.cos(a) * math.cos(t), math.sin(t)]
        )
        u = np.cross(v, n)
        return u, v, n
    if plane_normal is None:
        raise SceneError(f"generator {spec.id}: tracker mode needs the instant's normal")
    n = unit(np.asarray(plane_normal, dtype=np.float64))
    up = np.array([0.0, 0.0, 1.0])
    if abs(float(np.dot(n, up))) > 0.999:
        up = np.array([0.0, 1.0, 0.0])
    u = unit(np.cross(up, n))
    v = np.cross(n, u)
    return u, v, n


def _cell_grid_offsets(spec: PVGeneratorSpec) -> tuple[np.ndarray, np.ndarray]:
    """(per-sample u, v offsets within one module), row-major by cell then sub."""
    cw = spec.module_w_m / spec.cell_cols
    ch = spec.module_h_m / spec.cell_rows
    s = spec.subdivision
    us, vs = [], []
    for cr in range(spec.cell_rows):
        for cc in range(spec.cell_cols):
            for sr in range(s):
                for sc in range(s):
                    us.append(cc * cw + (sc + 0.5) * cw / s)
                    vs.append(cr * ch + (sr + 0.5) * ch / s)
    return np.array(us), np.array(vs)


def generator_samples(
    spec: PVGeneratorSpec, plane_normal: np.ndarray | None = None
) -> list[SamplePoint]:
    """Sub-cell-center sample points in world space, row-major order:
    modules, then cells within the module, then the sub-cell grid."""
    u, v, _ = generator_plane_axes(spec, plane_normal)
    offs_u, offs_v = _cell_grid_offsets(spec)
    pts: list[SamplePoint] = []
    n_sub = spec.subdivision**2
    for mr in range(spec.module_rows):
        for mc in range(spec.module_cols):
            m_idx = mr * spec.module_cols + mc
            base_u = mc * (spec.module_w_m + spec.gap_col_m)
            base_v = mr * (spec.module_h_m + spec.gap_row_m)
            world = (
                spec.origin_m
                + np.outer(base_u + offs_u, u)
                + np.outer(base_v + offs_v, v)
            )
            for k in range(len(offs_u)):
                pts.append(
                    SamplePoint(
                        position=world[k],
                        generator_id=spec.id,
                        module_index=m_idx,
                        cell_index=k // n_sub,
                        sub_index=k % n_sub,
                    )
                )
    return pts


def sample_positions(
    spec: PVGeneratorSpec, plane_normal: np.ndarray | None = None
) -> np.ndarray:
    """(S,3) array of sample positions in the generator_samples order."""
    u, v, _ = generator_plane_axes(spec, plane_normal)
    offs_u, offs_v = _cell_grid_offsets(spec)
    blocks = []
    for mr in range(spec.module_rows):
        for mc in range(spec.module_cols):
            base_u = mc * (spec.module_w_m + spec.gap_col_m)
            base_v = mr * (spec.module_h_m + spec.gap_row_m)
            blocks.append(
                spec.origin_m
                + np.outer(base_u + offs_u, u)
                + np.outer(base_v + offs_v, v)
            )
    return np.concatenate(blocks, axis=0)


def generator_footprint(
    spec: PVGeneratorSpec, plane_normal: np.ndarray | None = None
) -> np.ndarray:
    """(4,3) corners of the quad bounding the full module grid."""
    u, v, _ = generator_plane_axes(spec, plane_normal)
    w = spec.module_cols * spec.module_w_m + (spec.module_cols - 1) * spec.gap_col_m
    h = spec.module_rows * spec.module_h_m + (spec.module_rows - 1) * spec.gap_row_m
    o = spec.origin_m
    return np.array([o, o + w * u, o + w * u + h * v, o + h * v])


def generator_panel_quads(
    spec: PVGeneratorSpec, plane_normal: np.ndarray | None = None
) -> np.ndarray:
    """(2*modules, 3, 3) triangles of the module rectangles (for occlusion
    of *other* generators)."""
    u, v, _ = generator_plane_axes(spec, plane_normal)
    tris = []
    for mr in range(spec.module_rows):
        for mc in range(spec.module_cols):
            a = (
                spec.origin_m
                + mc * (spec.module_w_m + spec.gap_col_m) * u
                + mr * (spec.module_h_m + spec.gap_row_m) * v
            )
            b = a + spec.module_w_m * u
            c = b + spec.module_h_m * v
            d = a + spec.module_h_m * v
            tris.append((a, b, c))
            tris.append((a, c, d))
    return np.array(tris)


def scene_occluders(
    scene: Scene,
    target_generator: str,
    tracker_normals: dict[str, np.ndarray] | None = None,
) -> np.ndarray:
    """(M,3,3) world triangles that may shade the target generator: every
    visible object, plus panel quads of *other* generators flagged
    self_occluding. The target's own panel surface is always excluded."""
    scene.generator(target_generator)  # validates the id
    tracker_normals = tracker_normals or {}
    parts = [np.zeros((0, 3, 3))]
    for obj in scene.objects:
        if obj.visible:
            parts.append(obj.world_triangles())
    for gen in scene.generators:
        if gen.id == target_generator or not gen.self_occluding:
            continue
        normal = tracker_normals.get(gen.id)
        if gen.mode == "two_axis" and normal is None:
            raise SceneError(
                f"generator {gen.id}: tracker occluder quads need the instant's normal"
            )
        parts.append(generator_panel_quads(gen, normal))
    return np.concatenate(parts, axis=0)


# ---------------------------------------------------------------------------
# JSON document format


def _cell_params_from_dict(d: dict) -> CellParams:
    mapping = {
        "iph_stc_a": "iph_stc_a",
        "voc_stc_v": "voc_stc_v",
        "n": "n",
        "rs_ohm": "rs_ohm",
        "rsh_ohm": "rsh_ohm",
        "alpha_isc_per_c": "alpha_isc_per_c",
        "bypass_drop_v": "bypass_drop_v",
        "noct_c": "noct_c",
        "cell_area_m2": "cell_area_m2",
    }
    kwargs = {attr: d[key] for key, attr in mapping.items() if key in d}
    unknown = set(d) - set(mapping)
    if unknown:
        raise SceneError(f"unknown cell_params fields: {sorted(unknown)}")
    return CellParams(**kwargs)


def _cell_params_to_dict(p: CellParams) -> dict:
    return {
        "iph_stc_a": p.iph_stc_a,
        "voc_stc_v": p.voc_stc_v,
        "n": p.n,
        "rs_ohm": p.rs_ohm,
        "rsh_ohm": p.rsh_ohm,
        "alpha_isc_per_c": p.alpha_isc_per_c,
        "bypass_drop_v": p.bypass_drop_v,
        "noct_c": p.noct_c,
        "cell_area_m2": p.cell_area_m2,
    }


def generator_from_dict(d: dict) -> PVGeneratorSpec:
    try:
        return PVGeneratorSpec(
            id=d["id"],
            origin_m=np.asarray(d["origin_m"], dtype=np.float64),
            mode=d.get("mode", "fixed"),
            azimuth_deg=float(d.get("azimuth_deg", 180.0)),
            tilt_deg=float(d.get("tilt_deg", 30.0)),
            module_rows=int(d.get("module_rows", 1)),
            module_cols=int(d.get("module_cols", 1)),
            module_w_m=float(d.get("module_w_m", 0.99)),
            module_h_m=float(d.get("module_h_m", 1.65)),
            gap_row_m=float(d.get("gap_row_m", 0.02)),
            gap_col_m=float(d.get("gap_col_m", 0.02)),
            cell_rows=int(d.get("cell_rows", 6)),
            cell_cols=int(d.get("cell_cols", 6)),
            substrings=tuple(tuple(g) for g in d.get("substrings", ())),
            modules_per_string=int(d.get("modules_per_string", 0)),
            strings_parallel=int(d.get("strings_parallel", 1)),
            subdivision=int(d.get("subdivision", DEFAULT_SUBDIVISION)),
            self_occluding=bool(d.get("self_occluding", False)),
            cell_params=_cell_params_from_dict(d.get("cell_params", {})),
        )
    except KeyError as exc:
        raise SceneError(f"generator missing required field {exc}") from None


def generator_to_dict(g: PVGeneratorSpec) -> dict:
    return {
        "id": g.id,
        "origin_m": list(g.origin_m),
        "mode": g.mode,
        "azimuth_deg": g.azimuth_deg,
        "tilt_deg": g.tilt_deg,
        "module_rows": g.module_rows,
        "module_cols": g.module_cols,
        "module_w_m": g.module_w_m,
        "module_h_m": g.module_h_m,
        "gap_row_m": g.gap_row_m,
        "gap_col_m": g.gap_col_m,
        "cell_rows": g.cell_rows,
        "cell_cols": g.cell_cols,
        "substrings": [list(s) for s in g.substrings],
        "modules_per_string": g.modules_per_string,
        "strings_parallel": g.strings_parallel,
        "subdivision": g.subdivision,
        "self_occluding": g.self_occluding,
        "cell_params": _cell_params_to_dict(g.cell_params),
    }


def scene_from_dict(doc: dict, base_dir: Path | str = ".", meshes: dict[str, Mesh] | None = None) -> Scene:
    """Build a Scene from the versioned JSON document.

    OBJ paths resolve relative to base_dir; a meshes mapping (obj_path ->
    Mesh) short-circuits file access for callers that preload geometry.
    """
    if doc.get("version") != SCENE_SCHEMA_VERSION:
        raise SceneError(f"unsupported scene version {doc.get('version')!r}")
    site_d = doc.get("site") or {}
    try:
        site = Site(
            latitude_deg=float(site_d["lat_deg"]),
            longitude_deg=float(site_d["lon_deg"]),
            altitude_m=float(site_d.get("altitude_m", 0.0)),
            turbidity=float(site_d.get("turbidity", 3.0)),
        )
    except KeyError as exc:
        raise SceneError(f"site missing required field {exc}") from None

    base = Path(base_dir)
    meshes = meshes or {}
    objects = []
    for od in doc.get("objects", []):
        try:
            oid = od["id"]
            obj_path = od["obj_path"]
        except KeyError as exc:
            raise SceneError(f"object missing required field {exc}") from None
        if obj_path in meshes:
            mesh = meshes[obj_path]
        else:
            p = Path(obj_path)
            if not p.is_absolute():
                p = base / p
            if not p.exists():
                raise SceneError(f"OBJ file not found: {p}")
            mesh = parse_obj(p.read_text())
        transform = Transform(
            translation=np.asarray(od.get("translation_m", [0, 0, 0]), dtype=np.float64),
            rotation_deg=np.asarray(od.get("rotation_deg", [0, 0, 0]), dtype=np.float64),
            scale=np.asarray(od.get("scale", [1, 1, 1]), dtype=np.float64),
        )
        objects.append(
            SceneObject(
                id=oid,
                mesh=mesh,
                transform=transform,
                visible=bool(od.get("visible", True)),
                obj_path=obj_path,
            )
        )
    generators = [generator_from_dict(gd) for gd in doc.get("generators", [])]
    return Scene(site=site, objects=tuple(objects), generators=tuple(generators))


def scene_to_dict(scene: Scene) -> dict:
    return {
        "version": SCENE_SCHEMA_VERSION,
        "site": {
            "lat_deg": scene.site.latitude_deg,
            "lon_deg": scene.site.longitude_deg,
            "altitude_m": scene.site.altitude_m,
            "turbidity": scene.site.turbidity,
        },
        "objects": [
            {
                "id": o.id,
                "obj_path": o.obj_path or f"{o.id}.obj",
                "translation_m": list(o.transform.translation),
                "rotation_deg": list(o.transform.rotation_deg),
                "scale": list(o.transform.scale),
                "visible": o.visible,
            }
            for o in scene.objects
        ],
        "generators": [generator_to_dict(g) for g in scene.generators],
    }


def load_scene(path: Path | str) -> Scene:
    """Load a scene JSON file; OBJ paths resolve relative to its directory."""
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except FileNotFoundError:
        raise SceneError(f"scene file not found: {p}") from None
    except json.JSONDecodeError as exc:
        raise SceneError(f"invalid scene JSON in {p}: {exc}") from None
    return scene_from_dict(doc, base_dir=p.parent)
