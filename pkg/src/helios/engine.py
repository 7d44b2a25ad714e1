"""Per-instant simulation pipeline (sun -> occluders -> depth map -> mask ->
electrical network) and temporal integration into loss reports and sun-path
heatmaps.

Instants are independent and may be evaluated by a worker pool; accumulation
always happens in instant order, so reports are bit-identical for any worker
count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

from .electrical import (
    CellModel,
    IVCurve,
    cell_temperature,
    effective_shading_factor,
    find_mpp,
    geometric_shading_factor,
    parallel_iv,
)
from .irradiance import (
    IrradianceRecord,
    POAIrradiance,
    WeatherError,
    clear_sky,
    closure_gap,
    daylight_steps,
    poa,
)
from .scene import (
    PVGeneratorSpec,
    Scene,
    SceneError,
    generator_footprint,
    generator_panel_quads,
    generator_plane_axes,
    sample_positions,
)
from .shadows import (
    DEFAULT_RESOLUTION,
    ShadingMask,
    build_depth_map,
    classify_positions,
    default_depth_bias,
)
from .solarpos import SolarRangeError, SunPosition, sun_direction, sun_positions

__all__ = [
    "SimulationConfig",
    "GeneratorInstant",
    "InstantResult",
    "LossReport",
    "SunPathHeatmap",
    "SimulationError",
    "tracker_normal",
    "simulate_instant",
    "simulate_period",
    "build_heatmap",
    "report_to_csv",
    "heatmap_to_csv",
    "instant_to_json_dict",
]

HEATMAP_BIN_DEG = 2.0
CURVE_POINTS = 512


class SimulationError(RuntimeError):
    """Simulation could not proceed (missing weather, inconsistent inputs)."""


@dataclass(frozen=True)
class SimulationConfig:
    """Run-wide knobs; defaults follow the documented engine behavior."""

    resolution: int = DEFAULT_RESOLUTION
    albedo: float = 0.2
    temperature_model: str = "constant"  # "constant" | "noct"
    workers: int = 0  # 0 = machine cores
    bias_m: float | None = None  # None = slope-scaled default

    def effective_workers(self) -> int:
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)


@dataclass(frozen=True)
class GeneratorInstant:
    """One generator's state at one instant."""

    generator_id: str
    sun: SunPosition
    poa: POAIrradiance
    mask: ShadingMask
    p_unshaded_w: float
    p_shaded_w: float
    geometric_factor: float
    effective_factor: float


@dataclass(frozen=True)
class InstantResult:
    instant: datetime
    generators: tuple[GeneratorInstant, ...]

    @property
    def p_unshaded_w(self) -> float:
        return sum(g.p_unshaded_w for g in self.generators)

    @property
    def p_shaded_w(self) -> float:
        return sum(g.p_shaded_w for g in self.generators)

    def system_effective_factor(self) -> float:
        return effective_shading_factor(self.p_shaded_w, self.p_unshaded_w)


@dataclass(frozen=True)
class PeriodEnergy:
    """One report row. scope is "all" or a generator id for run totals,
    with ":month:YYYY-MM" / ":day:YYYY-MM-DD" suffixes for rollups."""

    scope: str
    period_start: datetime
    period_end: datetime
    e_unshaded_kwh: float
    e_shaded_kwh: float
    e_loss_kwh: float

    @property
    def loss_fraction(self) -> float:
        return self.e_loss_kwh / self.e_unshaded_kwh if self.e_unshaded_kwh > 0 else 0.0


@dataclass(frozen=True)
class LossReport:
    """Integrated energies for the run period with daily/monthly rollups."""

    period_start: datetime
    period_end: datetime
    step: timedelta
    rows: tuple[PeriodEnergy, ...]

    def total(self, scope: str = "all") -> PeriodEnergy:
        for r in self.rows:
            if r.scope == scope:
                return r
        raise KeyError(f"no total row for scope {scope!r}")


@dataclass
class SunPathHeatmap:
    """Azimuth x zenith grid of mean effective shading factor."""

    bin_deg: float = HEATMAP_BIN_DEG
    mean_factor: np.ndarray = field(
        default_factory=lambda: np.zeros((int(360 / HEATMAP_BIN_DEG), int(90 / HEATMAP_BIN_DEG)))
    )
    count: np.ndarray = field(
        default_factory=lambda: np.zeros(
            (int(360 / HEATMAP_BIN_DEG), int(90 / HEATMAP_BIN_DEG)), dtype=np.int64
        )
    )

    def region_mean(self, az_range: tuple[float, float], zen_range: tuple[float, float]) -> float:
        """Count-weighted mean factor over a rectangular angular region."""
        a0, a1 = (int(a // self.bin_deg) for a in az_range)
        z0, z1 = (int(z // self.bin_deg) for z in zen_range)
        c = self.count[a0:a1, z0:z1]
        if c.sum() == 0:
            return 0.0
        return float((self.mean_factor[a0:a1, z0:z1] * c).sum() / c.sum())


def tracker_normal(spec: PVGeneratorSpec, pos: SunPosition) -> np.ndarray:
    """Panel normal at an instant: fixed orientation, or ideal two-axis
    pointing (normal = sun direction). Tracker mode requires daylight."""
    if spec.mode == "fixed":
        return spec.fixed_normal()
    if pos.zenith_deg >= 90.0:
        raise SolarRangeError(
            f"generator {spec.id}: tracker normal undefined with sun below horizon"
        )
    return sun_direction(pos)


# --------------------------------------------------------------------------
# per-run caches


class _GeneratorTemplate:
    """Precomputed geometry + electrical structure for one generator."""

    def __init__(self, spec: PVGeneratorSpec):
        self.spec = spec
        self.layout = (spec.module_count, spec.cells_per_module, spec.subdivision**2)
        if spec.mode == "fixed":
            self.normal = spec.fixed_normal()
            self.positions = sample_positions(spec)
            self.footprint = generator_footprint(spec)
        else:
            self.normal = None
            self.positions = None
            self.footprint = None
        self.substring_idx = [np.array(g, dtype=np.intp) for g in spec.substrings]

    def geometry_at(self, normal: np.ndarray | None):
        if self.spec.mode == "fixed":
            return self.normal, self.positions, self.footprint
        return (
            normal,
            sample_positions(self.spec, normal),
            generator_footprint(self.spec, normal),
        )

    def array_curve(self, g_eff: np.ndarray, t_air_c: float, temperature_model: str) -> IVCurve:
        """IV curve of the whole generator for per-cell effective irradiance
        (modules x cells), composed on a shared current grid."""
        spec = self.spec
        params = spec.cell_params
        uniq, inv = np.unique(np.round(g_eff, 12).ravel(), return_inverse=True)
        inv = inv.reshape(g_eff.shape)
        models = [
            CellModel(params, g, cell_temperature(params, t_air_c, g, temperature_model))
            for g in uniq
        ]
        i_max = max(max(m.isc_a() for m in models), 1e-12)
        i_grid = np.linspace(0.0, i_max, CURVE_POINTS)
        v_uniq = np.stack([m.voltage_at(i_grid) for m in models])  # (U, P)

        n_u = len(uniq)
        module_v = np.zeros((spec.module_count, CURVE_POINTS))
        for idx in self.substring_idx:
            sel = inv[:, idx]  # (M, cells-in-group)
            counts = (sel[:, :, None] == np.arange(n_u)[None, None, :]).sum(axis=1)
            sub_v = counts.astype(np.float64) @ v_uniq
            module_v += np.maximum(sub_v, -params.bypass_drop_v)

        string_v = module_v.reshape(spec.strings_parallel, spec.modules_per_string, -1).sum(axis=1)
        # always aggregate through parallel_iv so k identical strings are an
        # exactly scaled representation of one string
        curves = [IVCurve(i_grid, sv) for sv in string_v]
        return parallel_iv(curves)


class _SceneGeometry:
    """Static occluder triangles per target generator, in scene order, with
    slots for per-instant tracker panel quads.

    Static triangles carry precomputed bounding spheres so each instant can
    coarsely drop geometry that cannot reach the light window before the
    rasterizer's own exact bbox cull runs. The sphere test is conservative
    (sphere contains the triangle, window inflated beyond the map's own
    margin), so the surviving set is a superset of what the rasterizer keeps
    and results are unchanged.
    """

    def __init__(self, scene: Scene):
        self.scene = scene
        self.object_tris = (
            np.concatenate([o.world_triangles() for o in scene.objects if o.visible])
            if any(o.visible for o in scene.objects)
            else np.zeros((0, 3, 3))
        )
        self.object_centroids = self.object_tris.mean(axis=1)
        self.object_radii = (
            np.linalg.norm(self.object_tris - self.object_centroids[:, None, :], axis=2).max(axis=1)
            if len(self.object_tris)
            else np.zeros(0)
        )
        self.templates = {g.id: _GeneratorTemplate(g) for g in scene.generators}
        self.occluding_gens = [g for g in scene.generators if g.self_occluding]
        self.fixed_quads = {
            g.id: generator_panel_quads(g) for g in self.occluding_gens if g.mode == "fixed"
        }

    def occluders_for(
        self,
        target_id: str,
        tracker_normals: dict[str, np.ndarray],
        sun_dir: np.ndarray | None = None,
        footprint: np.ndarray | None = None,
        resolution: int = DEFAULT_RESOLUTION,
    ) -> np.ndarray:
        static = self.object_tris
        if sun_dir is not None and footprint is not None and len(static):
            static = static[
                _near_window(
                    self.object_centroids, self.object_radii, sun_dir, footprint, resolution
                )
            ]
        parts = [static]
        for g in self.occluding_gens:
            if g.id == target_id:
                continue
            if g.mode == "fixed":
                parts.append(self.fixed_quads[g.id])
            else:
                parts.append(generator_panel_quads(g, tracker_normals[g.id]))
        return np.concatenate(parts, axis=0) if len(parts) > 1 else parts[0]


def _near_window(centroids, radii, sun_dir, footprint, resolution) -> np.ndarray:
    """Conservative mask: bounding sphere intersects the light window grown
    by 3 texels (the depth map itself inflates by only 2)."""
    from .shadows import light_basis

    u, v, _ = light_basis(sun_dir)
    fp = np.asarray(footprint, dtype=np.float64).reshape(-1, 3)
    fu = fp @ u
    fv = fp @ v
    margin_u = 3.0 * max(float(fu.max() - fu.min()), 1e-9) / resolution
    margin_v = 3.0 * max(float(fv.max() - fv.min()), 1e-9) / resolution
    cu = centroids @ u
    cv = centroids @ v
    return (
        (cu + radii >= fu.min() - margin_u)
        & (cu - radii <= fu.max() + margin_u)
        & (cv + radii >= fv.min() - margin_v)
        & (cv - radii <= fv.max() + margin_v)
    )


# --------------------------------------------------------------------------
# weather sources


class WeatherSource:
    """Uniform access to clear-sky synthesis or loaded records."""

    def __init__(self, mode: str, records: list[IrradianceRecord] | None = None):
        if mode not in ("clear_sky", "tmy", "measured"):
            raise ValueError(f"unknown weather mode {mode!r}")
        self.mode = mode
        self.by_instant = {}
        if mode != "clear_sky":
            if records is None:
                raise ValueError(f"weather mode {mode!r} needs records")
            self.by_instant = {r.instant: r for r in records}

    def record_at(self, instant: datetime, pos: SunPosition, scene: Scene) -> IrradianceRecord | None:
        if self.mode == "clear_sky":
            rec = clear_sky(pos, scene.site)
            return IrradianceRecord(instant, rec.ghi_wm2, rec.dni_wm2, rec.dhi_wm2, rec.temp_air_c)
        rec = self.by_instant.get(instant)
        if rec is None:
            return None
        gap = closure_gap(rec, pos.zenith_deg)
        if gap > 0.05:
            raise WeatherError(
                f"irradiance closure violated by {gap:.1%} at {instant.isoformat()}"
            )
        return rec


# --------------------------------------------------------------------------
# per-instant evaluation


def _zero_instant(scene: Scene, geometry: _SceneGeometry, instant: datetime, sun: SunPosition) -> InstantResult:
    gens = []
    for g in scene.generators:
        tpl = geometry.templates[g.id]
        mask = ShadingMask(
            generator_id=g.id,
            instant=instant,
            shaded=np.zeros(g.sample_count, dtype=bool),
            module_count=tpl.layout[0],
            cells_per_module=tpl.layout[1],
            samples_per_cell=tpl.layout[2],
        )
        gens.append(
            GeneratorInstant(
                generator_id=g.id,
                sun=sun,
                poa=POAIrradiance(0.0, 0.0, 0.0),
                mask=mask,
                p_unshaded_w=0.0,
                p_shaded_w=0.0,
                geometric_factor=0.0,
                effective_factor=0.0,
            )
        )
    return InstantResult(instant=instant, generators=tuple(gens))


def _evaluate_instant(
    scene: Scene,
    geometry: _SceneGeometry,
    weather: WeatherSource,
    instant: datetime,
    sun: SunPosition,
    config: SimulationConfig,
) -> InstantResult:
    if sun.zenith_deg >= 90.0:
        return _zero_instant(scene, geometry, instant, sun)
    record = weather.record_at(instant, sun, scene)
    if record is None:
        raise SimulationError(f"missing weather record at {instant.isoformat()}")

    s_dir = sun_direction(sun)
    tracker_normals = {
        g.id: tracker_normal(g, sun) for g in scene.generators if g.mode == "two_axis"
    }

    gens = []
    for g in scene.generators:
        tpl = geometry.templates[g.id]
        normal, positions, footprint = tpl.geometry_at(tracker_normals.get(g.id))
        g_poa = poa(record, sun, normal, config.albedo)

        if g_poa.total_wm2 <= 0.0:
            mask = ShadingMask(g.id, instant, np.zeros(g.sample_count, dtype=bool), *tpl.layout)
            gens.append(
                GeneratorInstant(g.id, sun, g_poa, mask, 0.0, 0.0, 0.0, 0.0)
            )
            continue

        occluders = geometry.occluders_for(
            g.id, tracker_normals, s_dir, footprint, config.resolution
        )
        depth_map = build_depth_map(occluders, s_dir, footprint, config.resolution)
        cos_aoi = abs(float(np.dot(s_dir, normal)))
        bias = (
            config.bias_m
            if config.bias_m is not None
            else default_depth_bias(depth_map.texel_world_size, cos_aoi)
        )
        shaded = classify_positions(depth_map, positions, bias)
        mask = ShadingMask(g.id, instant, shaded, *tpl.layout)
        fractions = mask.cell_fractions()

        beam = g_poa.beam_wm2
        diffuse = g_poa.diffuse_total_wm2
        g_eff = (1.0 - fractions) * beam + diffuse
        t_air = record.temp_air_c

        curve_shaded = tpl.array_curve(g_eff, t_air, config.temperature_model)
        p_shaded = find_mpp(curve_shaded).power_w
        g_flat = np.full_like(g_eff, beam + diffuse)
        curve_unshaded = tpl.array_curve(g_flat, t_air, config.temperature_model)
        p_unshaded = find_mpp(curve_unshaded).power_w

        gens.append(
            GeneratorInstant(
                generator_id=g.id,
                sun=sun,
                poa=g_poa,
                mask=mask,
                p_unshaded_w=p_unshaded,
                p_shaded_w=min(p_shaded, p_unshaded),
                geometric_factor=geometric_shading_factor(fractions.ravel(), g_poa),
                effective_factor=effective_shading_factor(
                    min(p_shaded, p_unshaded), p_unshaded
                ),
            )
        )
    return InstantResult(instant=instant, generators=tuple(gens))


def simulate_instant(
    scene: Scene,
    weather: WeatherSource,
    instant: datetime,
    config: SimulationConfig | None = None,
) -> InstantResult:
    """Evaluate the full pipeline for one instant (night yields zero power
    and an all-unshaded mask)."""
    config = config or SimulationConfig()
    geometry = _SceneGeometry(scene)
    sun = sun_positions(scene.site, [instant])[0]
    return _evaluate_instant(scene, geometry, weather, instant, sun, config)


# --------------------------------------------------------------------------
# period simulation

_WORKER_STATE: dict = {}


def _worker_init(scene, weather, config):
    _WORKER_STATE["scene"] = scene
    _WORKER_STATE["geometry"] = _SceneGeometry(scene)
    _WORKER_STATE["weather"] = weather
    _WORKER_STATE["config"] = config


def _worker_eval(batch):
    scene = _WORKER_STATE["scene"]
    geometry = _WORKER_STATE["geometry"]
    weather = _WORKER_STATE["weather"]
    config = _WORKER_STATE["config"]
    out = []
    for instant, sun in batch:
        out.append(_evaluate_instant(scene, geometry, weather, instant, sun, config))
    return out


def simulate_period(
    scene: Scene,
    weather: WeatherSource,
    start: datetime,
    end: datetime,
    step: timedelta,
    config: SimulationConfig | None = None,
    progress=None,
) -> tuple[list[InstantResult], "LossReport"]:
    """Evaluate every daylight instant on the step grid in [start, end) and
    integrate energies by the rectangle rule with dt = step.

    With measured weather, instants lacking a record are skipped when they
    are at most 5% of the daylight steps; more than that is an error listing
    the gaps.
    """
    config = config or SimulationConfig()
    steps = daylight_steps(scene.site, start, end, step)
    suns = sun_positions(scene.site, steps)

    if weather.mode != "clear_sky" and steps:
        gaps = [t for t in steps if t not in weather.by_instant]
        if len(gaps) > 0.05 * len(steps):
            shown = ", ".join(t.isoformat() for t in gaps[:10])
            raise SimulationError(
                f"missing weather rows for {len(gaps)}/{len(steps)} daylight steps: "
                f"{shown}{'...' if len(gaps) > 10 else ''}"
            )
        gap_set = set(gaps)
        kept = [(t, s) for t, s in zip(steps, suns) if t not in gap_set]
        steps = [t for t, _ in kept]
        suns = [s for _, s in kept]

    pairs = list(zip(steps, suns))
    workers = config.effective_workers()
    results: list[InstantResult] = []
    if not pairs:
        pass
    elif workers <= 1 or len(pairs) < 4:
        geometry = _SceneGeometry(scene)
        for i, (instant, sun) in enumerate(pairs):
            results.append(_evaluate_instant(scene, geometry, weather, instant, sun, config))
            if progress and (i + 1) % 64 == 0:
                progress(i + 1, len(pairs))
    else:
        chunk = max(1, len(pairs) // (workers * 8))
        batches = [pairs[i : i + chunk] for i in range(0, len(pairs), chunk)]
        done = 0
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_worker_init, initargs=(scene, weather, config)
        ) as pool:
            for batch_result in pool.map(_worker_eval, batches):
                results.extend(batch_result)
                done += len(batch_result)
                if progress:
                    progress(done, len(pairs))
    results.sort(key=lambda r: r.instant)
    report = _integrate(scene, results, start, end, step)
    if progress and pairs:
        progress(len(pairs), len(pairs))
    return results, report


def _integrate(
    scene: Scene,
    results: list[InstantResult],
    start: datetime,
    end: datetime,
    step: timedelta,
) -> LossReport:
    step_h = step.total_seconds() / 3600.0
    scopes = ["all"] + [g.id for g in scene.generators]

    def energies(scope: str):
        if scope == "all":
            return [(r.instant, r.p_unshaded_w, r.p_shaded_w) for r in results]
        return [
            (r.instant, g.p_unshaded_w, g.p_shaded_w)
            for r in results
            for g in r.generators
            if g.generator_id == scope
        ]

    rows: list[PeriodEnergy] = []
    for scope in scopes:
        terms = energies(scope)
        e_un = sum(t[1] for t in terms) * step_h / 1000.0
        e_sh = sum(t[2] for t in terms) * step_h / 1000.0
        rows.append(PeriodEnergy(scope, start, end, e_un, e_sh, e_un - e_sh))

        for label, key_fn, make_bounds in (
            ("month", lambda t: (t.year, t.month), _month_bounds),
            ("day", lambda t: t.date(), _day_bounds),
        ):
            groups: dict = {}
            for t, pu, ps in terms:
                groups.setdefault(key_fn(t), []).append((pu, ps))
            for key in sorted(groups):
                pu_sum = sum(p for p, _ in groups[key]) * step_h / 1000.0
                ps_sum = sum(p for _, p in groups[key]) * step_h / 1000.0
                b0, b1 = make_bounds(key, start, end)
                tag = f"{key[0]:04d}-{key[1]:02d}" if label == "month" else key.isoformat()
                rows.append(
                    PeriodEnergy(
                        f"{scope}:{label}:{tag}", b0, b1, pu_sum, ps_sum, pu_sum - ps_sum
                    )
                )
    return LossReport(period_start=start, period_end=end, step=step, rows=tuple(rows))


def _month_bounds(key, start, end):
    y, m = key
    b0 = datetime(y, m, 1, tzinfo=timezone.utc)
    b1 = datetime(y + (m == 12), m % 12 + 1, 1, tzinfo=timezone.utc)
    return max(b0, start), min(b1, end)


def _day_bounds(key, start, end):
    b0 = datetime(key.year, key.month, key.day, tzinfo=timezone.utc)
    b1 = b0 + timedelta(days=1)
    return max(b0, start), min(b1, end)


# --------------------------------------------------------------------------
# heatmap and serialization


def build_heatmap(results: list[InstantResult], generator_id: str | None = None) -> SunPathHeatmap:
    """Accumulate each daylight instant's effective shading factor into its
    2-degree azimuth x zenith bin; bin value is the unweighted mean."""
    if not results:
        raise ValueError("build_heatmap needs at least one result")
    hm = SunPathHeatmap()
    n_az, n_zen = hm.mean_factor.shape
    sums = np.zeros_like(hm.mean_factor)
    for r in results:
        if not r.generators:
            continue
        sun = r.generators[0].sun
        if sun.zenith_deg >= 90.0:
            continue
        if generator_id is None:
            factor = r.system_effective_factor()
        else:
            matches = [g for g in r.generators if g.generator_id == generator_id]
            if not matches:
                raise SceneError(f"unknown generator id {generator_id!r}")
            factor = matches[0].effective_factor
        ia = int(sun.azimuth_deg // hm.bin_deg) % n_az
        iz = int(sun.zenith_deg // hm.bin_deg)
        if 0 <= iz < n_zen:
            sums[ia, iz] += factor
            hm.count[ia, iz] += 1
    nonzero = hm.count > 0
    hm.mean_factor[nonzero] = sums[nonzero] / hm.count[nonzero]
    return hm


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def report_to_csv(report: LossReport) -> str:
    lines = ["scope,period_start,period_end,e_unshaded_kwh,e_shaded_kwh,e_loss_kwh,loss_fraction"]
    for r in report.rows:
        lines.append(
            ",".join(
                [
                    r.scope,
                    r.period_start.isoformat(),
                    r.period_end.isoformat(),
                    _fmt(r.e_unshaded_kwh),
                    _fmt(r.e_shaded_kwh),
                    _fmt(r.e_loss_kwh),
                    _fmt(r.loss_fraction),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def heatmap_to_csv(hm: SunPathHeatmap) -> str:
    lines = ["azimuth_bin_deg,zenith_bin_deg,mean_effective_factor,count"]
    n_az, n_zen = hm.mean_factor.shape
    for ia in range(n_az):
        for iz in range(n_zen):
            lines.append(
                f"{_fmt(ia * hm.bin_deg)},{_fmt(iz * hm.bin_deg)},"
                f"{_fmt(float(hm.mean_factor[ia, iz]))},{int(hm.count[ia, iz])}"
            )
    return "\n".join(lines) + "\n"


def instant_to_json_dict(result: InstantResult) -> dict:
    """Single-timestep dump for the UI: masks, factors, powers."""
    return {
        "instant": result.instant.isoformat(),
        "generators": [
            {
                "id": g.generator_id,
                "sun": {
                    "azimuth_deg": g.sun.azimuth_deg,
                    "zenith_deg": g.sun.zenith_deg,
                },
                "poa_wm2": {
                    "beam": g.poa.beam_wm2,
                    "diffuse_sky": g.poa.diffuse_sky_wm2,
                    "ground_reflected": g.poa.ground_reflected_wm2,
                },
                "mask": [bool(x) for x in g.mask.shaded],
                "cell_fractions": [float(x) for x in g.mask.cell_fractions().ravel()],
                "p_unshaded_w": g.p_unshaded_w,
                "p_shaded_w": g.p_shaded_w,
                "geometric_factor": g.geometric_factor,
                "effective_factor": g.effective_factor,
            }
            for g in result.generators
        ],
    }
