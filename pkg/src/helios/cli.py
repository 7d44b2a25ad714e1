"""Command-line front end: validate scenes, run simulations, export shadow
masks and depth maps, serve the HTTP API.

Exit codes: 0 success, 2 input error, 3 domain error (e.g. sun below
horizon), 4 numeric error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from .electrical import ConsistencyError, SolverError
from .engine import (
    SimulationConfig,
    WeatherSource,
    build_heatmap,
    heatmap_to_csv,
    instant_to_json_dict,
    report_to_csv,
    simulate_instant,
    simulate_period,
)
from .geometry import GeometryError
from .irradiance import WeatherError, load_weather
from .scene import SceneError, load_scene, scene_occluders
from .shadows import depth_map_to_pgm16, mask_to_csv
from .solarpos import SolarRangeError
from .timeparse import TimeParseError, parse_duration, parse_instant

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DOMAIN = 3
EXIT_NUMERIC = 4


class CliInputError(ValueError):
    pass


def _default_threads() -> int:
    env = os.environ.get("HELIOS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise CliInputError(f"bad HELIOS_THREADS value {env!r}") from None
    return 0  # engine default: machine cores


def _merge_config_file(args: argparse.Namespace, parser: argparse.ArgumentParser):
    """Config-file values fill in flags the user did not pass (flag wins)."""
    if not getattr(args, "config", None):
        return
    path = Path(args.config)
    if not path.exists():
        raise CliInputError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CliInputError(f"invalid config JSON: {exc}") from None
    defaults = {a.dest: parser.get_default(a.dest) for a in parser._actions}
    for key, value in doc.items():
        if key not in defaults:
            raise CliInputError(f"unknown config key {key!r}")
        if getattr(args, key) == defaults[key]:
            setattr(args, key, value)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="helios", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="parse a scene and print a summary")
    p_val.add_argument("--scene", required=True, help="scene JSON path")

    p_sim = sub.add_parser("simulate", help="run a period simulation")
    p_sim.add_argument("--scene", help="scene JSON path")
    p_sim.add_argument("--config", help="JSON config file with flag equivalents")
    p_sim.add_argument("--clear-sky", action="store_true", dest="clear_sky")
    p_sim.add_argument("--weather", help="weather CSV path (tmy/measured modes)")
    p_sim.add_argument("--weather-mode", default="measured", choices=["tmy", "measured"])
    p_sim.add_argument("--from", dest="period_from", help="ISO-8601 period start (UTC)")
    p_sim.add_argument("--to", dest="period_to", help="ISO-8601 period end (UTC)")
    p_sim.add_argument("--step", default="10m", help="time step, e.g. 10m or 1h")
    p_sim.add_argument("--out-report", default="report.csv")
    p_sim.add_argument("--out-heatmap", default="heatmap.csv")
    p_sim.add_argument("--resolution", type=int, default=SimulationConfig.resolution)
    p_sim.add_argument("--albedo", type=float, default=SimulationConfig.albedo)
    p_sim.add_argument(
        "--temperature-model", default="constant", choices=["constant", "noct"]
    )
    p_sim.add_argument("--threads", type=int, default=None, help="worker processes")

    p_sh = sub.add_parser("shadows", help="dump mask CSV + depth PGM for one instant")
    p_sh.add_argument("--scene", required=True)
    p_sh.add_argument("--at", required=True, help="ISO-8601 instant (UTC)")
    p_sh.add_argument("--generator", required=True)
    p_sh.add_argument("--out-mask", default="mask.csv")
    p_sh.add_argument("--out-depth", default="depth.pgm")
    p_sh.add_argument("--out-json", default=None, help="also dump the instant JSON")
    p_sh.add_argument("--resolution", type=int, default=SimulationConfig.resolution)

    p_srv = sub.add_parser("serve", help="start the HTTP API service")
    p_srv.add_argument("--port", type=int, default=8080)
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--data-dir", default="helios-data")
    p_srv.add_argument("--threads", type=int, default=None)
    return parser


def cmd_validate(args) -> int:
    scene = load_scene(args.scene)
    n_tris = sum(o.mesh.triangle_count for o in scene.objects)
    n_samples = sum(g.sample_count for g in scene.generators)
    print(
        f"objects: {len(scene.objects)}, triangles: {n_tris}, "
        f"generators: {len(scene.generators)}, samples: {n_samples}"
    )
    for g in scene.generators:
        print(
            f"  {g.id}: {g.module_rows}x{g.module_cols} modules, "
            f"{g.cell_rows}x{g.cell_cols} cells/module, "
            f"{len(g.substrings)} substrings, "
            f"{g.strings_parallel} string(s) x {g.modules_per_string} modules, "
            f"subdivision {g.subdivision}x{g.subdivision}"
        )
    return EXIT_OK


def cmd_simulate(args, parser) -> int:
    _merge_config_file(args, parser)
    if not args.scene:
        raise CliInputError("missing --scene")
    if not args.period_from or not args.period_to:
        raise CliInputError("missing --from/--to")
    scene = load_scene(args.scene)
    start = parse_instant(args.period_from)
    end = parse_instant(args.period_to)
    if start >= end:
        raise CliInputError(f"--from must precede --to ({start} >= {end})")
    step = parse_duration(args.step)

    if args.clear_sky:
        weather = WeatherSource("clear_sky")
    else:
        if not args.weather:
            raise CliInputError("need --clear-sky or --weather <csv>")
        path = Path(args.weather)
        if not path.exists():
            raise CliInputError(f"weather file not found: {path}")
        weather = WeatherSource(args.weather_mode, load_weather(path.read_text()))

    threads = args.threads if args.threads is not None else _default_threads()
    config = SimulationConfig(
        resolution=args.resolution,
        albedo=args.albedo,
        temperature_model=args.temperature_model,
        workers=threads,
    )
    t0 = time.perf_counter()
    results, report = simulate_period(scene, weather, start, end, step, config)
    elapsed = time.perf_counter() - t0

    Path(args.out_report).write_text(report_to_csv(report))
    if results:
        Path(args.out_heatmap).write_text(heatmap_to_csv(build_heatmap(results)))
    total = report.total("all")
    print(f"total loss fraction: {total.loss_fraction:.4f}")
    print(f"wall-clock time: {elapsed:.1f} s")
    return EXIT_OK


def cmd_shadows(args) -> int:
    scene = load_scene(args.scene)
    instant = parse_instant(args.at)
    gen = scene.generator(args.generator)
    weather = WeatherSource("clear_sky")
    config = SimulationConfig(resolution=args.resolution, workers=1)

    from .solarpos import sun_position

    sun = sun_position(scene.site, instant)
    if sun.zenith_deg >= 90.0:
        raise SolarRangeError(f"sun below horizon at {instant.isoformat()}")

    result = simulate_instant(scene, weather, instant, config)
    g = next(x for x in result.generators if x.generator_id == gen.id)

    # rebuild the depth map exactly as the engine does, for the dump
    from .engine import _SceneGeometry, tracker_normal
    from .shadows import build_depth_map
    from .solarpos import sun_direction

    geometry = _SceneGeometry(scene)
    tracker_normals = {
        s.id: tracker_normal(s, sun) for s in scene.generators if s.mode == "two_axis"
    }
    tpl = geometry.templates[gen.id]
    normal, _positions, footprint = tpl.geometry_at(tracker_normals.get(gen.id))
    occluders = geometry.occluders_for(gen.id, tracker_normals)
    depth_map = build_depth_map(occluders, sun_direction(sun), footprint, config.resolution)

    Path(args.out_mask).write_text(mask_to_csv(g.mask))
    Path(args.out_depth).write_bytes(depth_map_to_pgm16(depth_map))
    if args.out_json:
        Path(args.out_json).write_text(json.dumps(instant_to_json_dict(result), indent=2))
    print(
        f"generator {gen.id}: {int(g.mask.shaded.sum())}/{g.mask.shaded.size} samples shaded"
    )
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    threads = args.threads if args.threads is not None else _default_threads()
    app = create_app(data_dir=args.data_dir, workers=threads)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "simulate":
            return cmd_simulate(args, parser._subparsers._group_actions[0].choices["simulate"])
        if args.command == "shadows":
            return cmd_shadows(args)
        if args.command == "serve":
            return cmd_serve(args)
        parser.error(f"unknown command {args.command}")
    except (CliInputError, TimeParseError, SceneError, GeometryError, WeatherError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolarRangeError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (SolverError, ConsistencyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
