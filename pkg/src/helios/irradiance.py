"""Irradiance sources and transposition: Linke-turbidity clear sky, isotropic
plane-of-array model, weather CSV ingestion, daylight time-step enumeration."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

from .solarpos import Site, SunPosition, check_supported_year, julian_days, sun_angles

__all__ = [
    "IrradianceRecord",
    "POAIrradiance",
    "WeatherError",
    "clear_sky",
    "poa",
    "load_weather",
    "daylight_steps",
]

SOLAR_CONSTANT_WM2 = 1367.0
DEFAULT_ALBEDO = 0.2
CLEAR_SKY_AIR_TEMP_C = 20.0


class WeatherError(ValueError):
    """Malformed or inconsistent weather input."""


@dataclass(frozen=True)
class IrradianceRecord:
    """Global-horizontal, direct-normal and diffuse-horizontal irradiance
    plus ambient temperature at one UTC instant (instant is None for
    synthesized clear-sky values until the caller attaches one)."""

    instant: datetime | None
    ghi_wm2: float
    dni_wm2: float
    dhi_wm2: float
    temp_air_c: float

    def __post_init__(self):
        for name in ("ghi_wm2", "dni_wm2", "dhi_wm2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise WeatherError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class POAIrradiance:
    """Irradiance components reaching the (tilted) panel plane."""

    beam_wm2: float
    diffuse_sky_wm2: float
    ground_reflected_wm2: float

    @property
    def diffuse_total_wm2(self) -> float:
        return self.diffuse_sky_wm2 + self.ground_reflected_wm2

    @property
    def total_wm2(self) -> float:
        return self.beam_wm2 + self.diffuse_sky_wm2 + self.ground_reflected_wm2


def _airmass_kasten_young(zenith_deg: float) -> float:
    # Kasten & Young relative air mass; valid for zenith < 90
    return 1.0 / (
        math.cos(math.radians(zenith_deg))
        + 0.50572 * (96.07995 - zenith_deg) ** -1.6364
    )


def clear_sky(pos: SunPosition, site: Site) -> IrradianceRecord:
    """Clear-sky GHI/DNI/DHI from the Linke-turbidity formulation with
    altitude correction. All components zero when the sun is at or below
    the horizon. Ambient temperature is a fixed placeholder (20 C)."""
    z = pos.zenith_deg
    instant = None  # callers that need the instant attach it themselves
    if z >= 90.0:
        return IrradianceRecord(instant, 0.0, 0.0, 0.0, CLEAR_SKY_AIR_TEMP_C)

    tl = site.turbidity
    alt = site.altitude_m
    cosz = math.cos(math.radians(z))
    i0 = SOLAR_CONSTANT_WM2 / pos.distance_au**2

    fh1 = math.exp(-alt / 8000.0)
    fh2 = math.exp(-alt / 1250.0)
    cg1 = 5.09e-5 * alt + 0.868
    cg2 = 3.92e-5 * alt + 0.0387

    am = _airmass_kasten_young(z) * math.exp(-alt / 8434.5)
    ghi = cg1 * i0 * cosz * math.exp(-cg2 * am * (fh1 + fh2 * (tl - 1.0)))
    ghi *= math.exp(0.01 * am**1.8)
    ghi = max(ghi, 0.0)

    b = 0.664 + 0.163 / fh1
    bni = b * i0 * math.exp(-0.09 * am * (tl - 1.0))
    # empirical cap keeping the beam consistent with the global component
    cap = ghi * (1.0 - (0.1 - 0.2 * math.exp(-tl)) / (0.1 + 0.882 / fh1)) / cosz
    dni = max(min(bni, cap), 0.0)
    dhi = max(ghi - dni * cosz, 0.0)
    return IrradianceRecord(instant, ghi, dni, dhi, CLEAR_SKY_AIR_TEMP_C)


def poa(
    record: IrradianceRecord,
    pos: SunPosition,
    plane_normal: np.ndarray,
    albedo: float = DEFAULT_ALBEDO,
) -> POAIrradiance:
    """Isotropic-sky transposition onto the plane with the given unit normal.

    beam = DNI * max(0, cos AOI); sky diffuse = DHI * (1 + cos tilt) / 2;
    ground reflected = GHI * albedo * (1 - cos tilt) / 2.
    """
    n = np.asarray(plane_normal, dtype=np.float64)
    norm = float(np.linalg.norm(n))
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"plane_normal must be unit length, |n| = {norm}")
    cos_tilt = float(np.clip(n[2], -1.0, 1.0))

    if pos.zenith_deg < 90.0:
        from .solarpos import sun_direction

        cos_aoi = float(np.dot(sun_direction(pos), n))
    else:
        cos_aoi = 0.0

    beam = record.dni_wm2 * max(0.0, cos_aoi)
    diffuse_sky = record.dhi_wm2 * (1.0 + cos_tilt) / 2.0
    ground = record.ghi_wm2 * albedo * (1.0 - cos_tilt) / 2.0
    return POAIrradiance(beam, diffuse_sky, ground)


def _parse_timestamp(text: str, line_no: int) -> datetime:
    try:
        t = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    except ValueError:
        raise WeatherError(f"unparsable timestamp {text!r} at line {line_no}") from None
    if t.tzinfo is None:
        t = t.replace(tzinfo=timezone.utc)
    return t.astimezone(timezone.utc)


def load_weather(csv_text: str) -> list[IrradianceRecord]:
    """Parse the weather CSV (header `timestamp_utc,ghi_wm2,dni_wm2,dhi_wm2,temp_air_c`).

    An optional leading comment `# utc_offset_hours: <h>` declares that the
    timestamps are local; they are shifted to UTC at ingestion. Timestamps
    must be strictly increasing; gaps are allowed.
    """
    lines = io.StringIO(csv_text).read().splitlines()
    utc_offset = timedelta(0)
    idx = 0
    while idx < len(lines) and lines[idx].lstrip().startswith("#"):
        comment = lines[idx].lstrip("# ").strip()
        if comment.lower().startswith("utc_offset_hours"):
            try:
                utc_offset = timedelta(hours=float(comment.split(":", 1)[1]))
            except (IndexError, ValueError):
                raise WeatherError(f"bad utc_offset_hours header at line {idx + 1}") from None
        idx += 1
    if idx >= len(lines) or not lines[idx].strip():
        raise WeatherError("missing CSV header")
    header = [h.strip() for h in lines[idx].split(",")]
    expected = ["timestamp_utc", "ghi_wm2", "dni_wm2", "dhi_wm2", "temp_air_c"]
    if header != expected:
        raise WeatherError(f"unexpected CSV header {header}, want {expected}")

    records: list[IrradianceRecord] = []
    prev: datetime | None = None
    for line_no, raw in enumerate(lines[idx + 1 :], start=idx + 2):
        if not raw.strip():
            continue
        parts = raw.split(",")
        if len(parts) != 5:
            raise WeatherError(f"expected 5 fields at line {line_no}, got {len(parts)}")
        t = _parse_timestamp(parts[0], line_no) - utc_offset
        try:
            ghi, dni, dhi, temp = (float(p) for p in parts[1:])
        except ValueError:
            raise WeatherError(f"unparsable numeric field at line {line_no}") from None
        if prev is not None and t <= prev:
            raise WeatherError(f"non-monotonic at line {line_no}")
        prev = t
        try:
            records.append(IrradianceRecord(t, ghi, dni, dhi, temp))
        except WeatherError as exc:
            raise WeatherError(f"{exc} at line {line_no}") from None
    return records


def closure_gap(record: IrradianceRecord, zenith_deg: float) -> float:
    """GHI excess over DNI*cos(z) + DHI, as a fraction of GHI (0 if consistent)."""
    if record.ghi_wm2 <= 0:
        return 0.0
    cosz = max(0.0, math.cos(math.radians(zenith_deg)))
    reconstructed = record.dni_wm2 * cosz + record.dhi_wm2
    return max(0.0, (record.ghi_wm2 - reconstructed) / record.ghi_wm2)


def daylight_steps(
    site: Site,
    start: datetime,
    end: datetime,
    step: timedelta,
) -> list[datetime]:
    """All instants in [start, end) on the step grid whose solar zenith < 90 deg."""
    if step <= timedelta(0):
        raise ValueError(f"step must be positive, got {step}")
    if start >= end:
        raise ValueError(f"empty period: {start} >= {end}")
    t0 = check_supported_year(start)
    t1 = check_supported_year(end)
    grid: list[datetime] = []
    t = t0
    while t < t1:
        grid.append(t)
        t += step
    zen = sun_angles(site, julian_days(grid))["zenith_deg"]
    return [t for t, z in zip(grid, zen) if z < 90.0]
