import math
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from helios.engine import (
    SimulationConfig,
    SimulationError,
    WeatherSource,
    build_heatmap,
    heatmap_to_csv,
    instant_to_json_dict,
    report_to_csv,
    simulate_instant,
    simulate_period,
    tracker_normal,
)
from helios.irradiance import IrradianceRecord
from helios.scene import Scene, SceneObject, PVGeneratorSpec
from helios.solarpos import Site, SolarRangeError, SunPosition

from .conftest import box_mesh, two_substring_generator

UTC = timezone.utc
CFG = SimulationConfig(resolution=256, workers=1)

NOON = datetime(2023, 6, 21, 11, 0, tzinfo=UTC)  # near solar noon at lon -3
EVENING = datetime(2023, 6, 21, 17, 30, tzinfo=UTC)
NIGHT = datetime(2023, 6, 21, 1, 0, tzinfo=UTC)


class TestTrackerNormal:
    def test_two_axis_points_at_sun(self):
        g = two_substring_generator(mode="two_axis")
        pos = SunPosition(azimuth_deg=180.0, zenith_deg=0.0, distance_au=1.0)
        assert np.allclose(tracker_normal(g, pos), [0, 0, 1], atol=1e-12)

    def test_fixed_tilt_zero_is_up(self):
        g = two_substring_generator(tilt_deg=0.0)
        pos = SunPosition(azimuth_deg=123.0, zenith_deg=45.0, distance_au=1.0)
        assert np.allclose(tracker_normal(g, pos), [0, 0, 1], atol=1e-12)

    def test_two_axis_cos_aoi_is_one(self):
        from helios.solarpos import sun_direction

        g = two_substring_generator(mode="two_axis")
        pos = SunPosition(azimuth_deg=220.0, zenith_deg=55.0, distance_au=1.0)
        n = tracker_normal(g, pos)
        assert float(n @ sun_direction(pos)) == pytest.approx(1.0, abs=1e-12)

    def test_two_axis_below_horizon_rejected(self):
        g = two_substring_generator(mode="two_axis")
        pos = SunPosition(azimuth_deg=0.0, zenith_deg=91.0, distance_au=1.0)
        with pytest.raises(SolarRangeError):
            tracker_normal(g, pos)


class TestSimulateInstant:
    def test_no_occluders_zero_factor(self, wall_scene):
        scene = Scene(site=wall_scene.site, objects=(), generators=wall_scene.generators)
        r = simulate_instant(scene, WeatherSource("clear_sky"), NOON, CFG)
        g = r.generators[0]
        assert g.effective_factor == 0.0
        assert g.geometric_factor == 0.0
        assert g.p_unshaded_w > 0
        assert g.p_shaded_w == pytest.approx(g.p_unshaded_w)

    def test_wall_shades_panel_in_evening(self, wall_scene):
        r = simulate_instant(wall_scene, WeatherSource("clear_sky"), EVENING, CFG)
        g = r.generators[0]
        assert g.mask.shaded.sum() > 0
        assert g.mask.cell_fractions().max() > 0
        assert g.effective_factor > 0

    def test_night_is_all_zero(self, wall_scene):
        r = simulate_instant(wall_scene, WeatherSource("clear_sky"), NIGHT, CFG)
        g = r.generators[0]
        assert g.p_unshaded_w == g.p_shaded_w == 0.0
        assert g.effective_factor == 0.0
        assert not g.mask.shaded.any()

    def test_effective_at_least_geometric(self, bike_scene):
        # default test configuration: ideal bypass, Rs = 0, Rsh = 1e6
        for hour in (7, 9, 11, 13, 15, 17):
            t = datetime(2023, 9, 1, hour, 0, tzinfo=UTC)
            r = simulate_instant(bike_scene, WeatherSource("clear_sky"), t, CFG)
            for g in r.generators:
                assert g.effective_factor >= g.geometric_factor - 1e-3

    def test_deterministic(self, wall_scene):
        a = simulate_instant(wall_scene, WeatherSource("clear_sky"), EVENING, CFG)
        b = simulate_instant(wall_scene, WeatherSource("clear_sky"), EVENING, CFG)
        assert np.array_equal(a.generators[0].mask.shaded, b.generators[0].mask.shaded)
        assert a.generators[0].p_shaded_w == b.generators[0].p_shaded_w

    def test_instant_json_dump_round_trips(self, wall_scene):
        import json

        r = simulate_instant(wall_scene, WeatherSource("clear_sky"), EVENING, CFG)
        d = json.loads(json.dumps(instant_to_json_dict(r)))
        assert d["generators"][0]["id"] == "g1"
        assert len(d["generators"][0]["mask"]) == 324
        assert len(d["generators"][0]["cell_fractions"]) == 36


class TestMeasuredWeather:
    def _records(self, instants, site=Site(40.0, -3.0), dni=500.0, dhi=150.0):
        # closure-consistent synthetic rows: GHI = DNI cos z + DHI per instant
        from helios.solarpos import sun_positions

        recs = []
        for t, pos in zip(instants, sun_positions(site, instants)):
            cosz = max(0.0, math.cos(math.radians(pos.zenith_deg)))
            recs.append(IrradianceRecord(t, dni * cosz + dhi, dni, dhi, 20.0))
        return recs

    def test_measured_mode_uses_records(self, wall_scene):
        recs = self._records([NOON])
        r = simulate_instant(wall_scene, WeatherSource("measured", recs), NOON, CFG)
        assert r.generators[0].p_unshaded_w > 0

    def test_gap_over_5pct_raises_listing_gaps(self, wall_scene):
        start = datetime(2023, 6, 21, 10, 0, tzinfo=UTC)
        end = datetime(2023, 6, 21, 12, 0, tzinfo=UTC)
        steps = [start + timedelta(minutes=10 * k) for k in range(12)]
        recs = self._records(steps[:6])  # half missing
        with pytest.raises(SimulationError, match="missing weather rows"):
            simulate_period(wall_scene, WeatherSource("measured", recs), start, end,
                            timedelta(minutes=10), CFG)

    def test_small_gaps_skipped(self, wall_scene):
        start = datetime(2023, 6, 21, 8, 0, tzinfo=UTC)
        end = datetime(2023, 6, 21, 12, 0, tzinfo=UTC)
        steps = [start + timedelta(minutes=10 * k) for k in range(24)]
        recs = self._records(steps[:-1])  # one gap of 24 => ~4%
        results, report = simulate_period(
            wall_scene, WeatherSource("measured", recs), start, end, timedelta(minutes=10), CFG
        )
        assert len(results) == 23

    def test_closure_violation_rejected(self, wall_scene):
        bad = [IrradianceRecord(NOON, 1000.0, 100.0, 50.0, 20.0)]  # ghi >> dni*cosz+dhi
        with pytest.raises(Exception, match="closure"):
            simulate_instant(wall_scene, WeatherSource("measured", bad), NOON, CFG)


class TestSimulatePeriod:
    def test_no_occluders_zero_loss(self, wall_scene):
        scene = Scene(site=wall_scene.site, objects=(), generators=wall_scene.generators)
        start = datetime(2023, 6, 21, 10, 0, tzinfo=UTC)
        results, report = simulate_period(
            scene, WeatherSource("clear_sky"), start, start + timedelta(hours=1),
            timedelta(minutes=10), CFG
        )
        assert report.total("all").e_loss_kwh == pytest.approx(0.0, abs=1e-12)

    def test_three_step_totals_match_hand_sum(self, wall_scene):
        start = datetime(2023, 6, 21, 16, 0, tzinfo=UTC)
        results, report = simulate_period(
            wall_scene, WeatherSource("clear_sky"), start, start + timedelta(minutes=30),
            timedelta(minutes=10), CFG
        )
        assert len(results) == 3
        dt_h = 10 / 60
        want_loss = sum((r.p_unshaded_w - r.p_shaded_w) * dt_h / 1000 for r in results)
        got = report.total("all").e_loss_kwh
        assert got == pytest.approx(want_loss, rel=1e-9)

    def test_rollups_sum_to_total(self, wall_scene):
        start = datetime(2023, 6, 30, 12, 0, tzinfo=UTC)
        end = datetime(2023, 7, 1, 12, 0, tzinfo=UTC)  # spans a month boundary
        _, report = simulate_period(
            wall_scene, WeatherSource("clear_sky"), start, end, timedelta(hours=1), CFG
        )
        total = report.total("all")
        months = [r for r in report.rows if r.scope.startswith("all:month:")]
        days = [r for r in report.rows if r.scope.startswith("all:day:")]
        assert len(months) == 2 and len(days) == 2
        assert sum(m.e_loss_kwh for m in months) == pytest.approx(total.e_loss_kwh, rel=1e-9)
        assert sum(d.e_loss_kwh for d in days) == pytest.approx(total.e_loss_kwh, rel=1e-9)
        assert sum(m.e_unshaded_kwh for m in months) == pytest.approx(total.e_unshaded_kwh, rel=1e-9)

    def test_deterministic_across_worker_counts(self, bike_scene):
        start = datetime(2023, 3, 10, 9, 0, tzinfo=UTC)
        end = datetime(2023, 3, 10, 15, 0, tzinfo=UTC)
        step = timedelta(minutes=30)
        texts = []
        for workers in (1, 2):
            cfg = SimulationConfig(resolution=256, workers=workers)
            results, report = simulate_period(
                bike_scene, WeatherSource("clear_sky"), start, end, step, cfg
            )
            texts.append(report_to_csv(report) + heatmap_to_csv(build_heatmap(results)))
        assert texts[0] == texts[1]

    def test_progress_callback_reaches_end(self, wall_scene):
        seen = []
        start = datetime(2023, 6, 21, 10, 0, tzinfo=UTC)
        simulate_period(
            wall_scene, WeatherSource("clear_sky"), start, start + timedelta(hours=1),
            timedelta(minutes=10), CFG, progress=lambda d, t: seen.append((d, t))
        )
        assert seen and seen[-1][0] == seen[-1][1]


class TestScaleInvariance:
    def test_uniform_power_of_two_scale_preserves_masks_and_factors(self, bike_scene):
        s = 4.0  # dyadic: every scaled float op is exact
        scaled = Scene(
            site=bike_scene.site,
            objects=tuple(
                SceneObject(
                    id=o.id,
                    mesh=type(o.mesh)(o.mesh.vertices * s, o.mesh.triangles),
                    transform=o.transform,
                    visible=o.visible,
                )
                for o in bike_scene.objects
            ),
            generators=tuple(
                PVGeneratorSpec(
                    **{
                        **{f: getattr(g, f) for f in (
                            "id", "mode", "azimuth_deg", "tilt_deg", "module_rows",
                            "module_cols", "cell_rows", "cell_cols", "substrings",
                            "modules_per_string", "strings_parallel", "subdivision",
                            "self_occluding", "cell_params",
                        )},
                        "origin_m": g.origin_m * s,
                        "module_w_m": g.module_w_m * s,
                        "module_h_m": g.module_h_m * s,
                        "gap_row_m": g.gap_row_m * s,
                        "gap_col_m": g.gap_col_m * s,
                    }
                )
                for g in bike_scene.generators
            ),
        )
        for t in (datetime(2023, 6, 21, 8, 0, tzinfo=UTC), EVENING):
            a = simulate_instant(bike_scene, WeatherSource("clear_sky"), t, CFG)
            b = simulate_instant(scaled, WeatherSource("clear_sky"), t, CFG)
            for ga, gb in zip(a.generators, b.generators):
                assert np.array_equal(ga.mask.shaded, gb.mask.shaded)
                assert abs(ga.effective_factor - gb.effective_factor) <= 1e-9
                assert abs(ga.geometric_factor - gb.geometric_factor) <= 1e-9


class TestHeatmap:
    def _result_at(self, az, zen, factor):
        from helios.engine import GeneratorInstant, InstantResult
        from helios.irradiance import POAIrradiance
        from helios.shadows import ShadingMask

        sun = SunPosition(azimuth_deg=az, zenith_deg=zen, distance_au=1.0)
        mask = ShadingMask("g", None, np.zeros(4, bool), 1, 4, 1)
        g = GeneratorInstant(
            "g", sun, POAIrradiance(100, 10, 5), mask,
            p_unshaded_w=100.0, p_shaded_w=100.0 * (1 - factor),
            geometric_factor=factor, effective_factor=factor,
        )
        return InstantResult(datetime(2023, 1, 1, tzinfo=UTC), (g,))

    def test_single_instant_single_bin(self):
        hm = build_heatmap([self._result_at(123.0, 45.0, 0.3)])
        assert hm.count.sum() == 1
        assert hm.mean_factor[int(123 // 2), int(45 // 2)] == pytest.approx(0.3)

    def test_two_instants_one_bin_mean(self):
        hm = build_heatmap(
            [self._result_at(100.5, 30.5, 0.2), self._result_at(101.0, 31.0, 0.4)]
        )
        assert hm.count[(50, 15)] == 2
        assert hm.mean_factor[(50, 15)] == pytest.approx(0.3)

    def test_all_zero_factors(self):
        hm = build_heatmap([self._result_at(90.0, 40.0, 0.0)])
        assert np.all(hm.mean_factor == 0.0)

    def test_night_instants_ignored(self):
        hm = build_heatmap([self._result_at(0.0, 95.0, 0.0)])
        assert hm.count.sum() == 0

    def test_csv_covers_full_grid(self):
        hm = build_heatmap([self._result_at(10.0, 10.0, 0.5)])
        lines = heatmap_to_csv(hm).strip().split("\n")
        assert lines[0] == "azimuth_bin_deg,zenith_bin_deg,mean_effective_factor,count"
        assert len(lines) == 1 + 180 * 45


class TestReportCsv:
    def test_header_and_reproducibility(self, wall_scene):
        start = datetime(2023, 6, 21, 16, 0, tzinfo=UTC)
        _, r1 = simulate_period(
            wall_scene, WeatherSource("clear_sky"), start, start + timedelta(minutes=30),
            timedelta(minutes=10), CFG
        )
        _, r2 = simulate_period(
            wall_scene, WeatherSource("clear_sky"), start, start + timedelta(minutes=30),
            timedelta(minutes=10), CFG
        )
        a, b = report_to_csv(r1), report_to_csv(r2)
        assert a == b
        assert a.startswith(
            "scope,period_start,period_end,e_unshaded_kwh,e_shaded_kwh,e_loss_kwh,loss_fraction"
        )
        assert ",all," not in a.split("\n")[0]
        scopes = {line.split(",")[0].split(":")[0] for line in a.strip().split("\n")[1:]}
        assert scopes == {"all", "g1"}
