"""Single-diode cell model, substring/bypass-diode composition, series and
parallel IV aggregation, multi-peak maximum-power-point search, and the
geometric/effective shading-factor definitions.

The cell follows the five-parameter single-diode equation

    I = Iph - I0*(exp((V + I*Rs)/(n*Vt)) - 1) - (V + I*Rs)/Rsh

with photocurrent scaled linearly in effective irradiance and corrected for
temperature. Above a cell's short-circuit current, the same equation
continues into reverse bias (no avalanche-breakdown term); bypass diodes
clamp substring voltages at a configurable constant drop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "BOLTZMANN_J_PER_K",
    "ELEMENTARY_CHARGE_C",
    "CellParams",
    "CellModel",
    "IVCurve",
    "OperatingPoint",
    "SolverError",
    "ConsistencyError",
    "effective_irradiance",
    "cell_iv",
    "substring_iv",
    "series_iv",
    "parallel_iv",
    "find_mpp",
    "effective_shading_factor",
    "geometric_shading_factor",
    "cell_temperature",
]

BOLTZMANN_J_PER_K = 1.380649e-23
ELEMENTARY_CHARGE_C = 1.602176634e-19

CURVE_POINTS = 512


class SolverError(ArithmeticError):
    """Implicit-equation solver failed to converge; carries the inputs."""


class ConsistencyError(ArithmeticError):
    """Internal accounting violated (e.g. shaded power above unshaded)."""


@dataclass(frozen=True)
class CellParams:
    """Five-parameter single-diode cell at STC plus bypass/thermal extras.

    The saturation current is derived from voc_stc_v by evaluating the diode
    equation at open circuit and ignoring the shunt-leakage term (sub-0.1%
    for the default shunt resistance).
    """

    iph_stc_a: float = 8.0
    voc_stc_v: float = 0.62
    n: float = 1.3
    rs_ohm: float = 0.0
    rsh_ohm: float = 1e6
    alpha_isc_per_c: float = 0.0004
    bypass_drop_v: float = 0.0
    noct_c: float = 45.0
    cell_area_m2: float = 0.0243

    def __post_init__(self):
        if not self.iph_stc_a > 0:
            raise ValueError(f"iph_stc_a must be > 0, got {self.iph_stc_a}")
        if not 1.0 <= self.n <= 2.0:
            raise ValueError(f"ideality factor must be in [1, 2], got {self.n}")
        if self.rs_ohm < 0:
            raise ValueError(f"rs_ohm must be >= 0, got {self.rs_ohm}")
        if not self.rsh_ohm > 0:
            raise ValueError(f"rsh_ohm must be > 0, got {self.rsh_ohm}")
        if not self.voc_stc_v > 0:
            raise ValueError(f"voc_stc_v must be > 0, got {self.voc_stc_v}")

    @property
    def i0_a(self) -> float:
        vt25 = BOLTZMANN_J_PER_K * 298.15 / ELEMENTARY_CHARGE_C
        return self.iph_stc_a / math.expm1(self.voc_stc_v / (self.n * vt25))


@dataclass(frozen=True)
class IVCurve:
    """Sampled (current, voltage) table: current ascending from 0, voltage
    non-increasing (within 1e-9 V tolerance)."""

    current_a: np.ndarray
    voltage_v: np.ndarray

    def __post_init__(self):
        i = np.ascontiguousarray(np.asarray(self.current_a, dtype=np.float64))
        v = np.ascontiguousarray(np.asarray(self.voltage_v, dtype=np.float64))
        if i.ndim != 1 or i.shape != v.shape or i.size < 2:
            raise ValueError("IVCurve needs matching 1-D arrays of >= 2 points")
        if np.any(np.diff(i) <= 0):
            raise ValueError("IVCurve current grid must be strictly increasing")
        if np.any(np.diff(v) > 1e-9):
            raise ValueError("IVCurve voltage must be non-increasing in current")
        i.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "current_a", i)
        object.__setattr__(self, "voltage_v", v)

    @property
    def isc_a(self) -> float:
        return float(self.current_a[-1])

    @property
    def voc_v(self) -> float:
        return float(self.voltage_v[0])

    def voltage_at(self, current: np.ndarray) -> np.ndarray:
        """Linear interpolation; flat extension beyond both ends (a substring
        past its short-circuit current sits at its bypass clamp)."""
        return np.interp(current, self.current_a, self.voltage_v)

    def current_at(self, voltage: np.ndarray) -> np.ndarray:
        """Inverse interpolation I(V) with linear end-slope extrapolation."""
        v_asc = self.voltage_v[::-1]
        i_desc = self.current_a[::-1]
        out = np.interp(voltage, v_asc, i_desc)
        voltage = np.asarray(voltage, dtype=np.float64)
        # extrapolate past Voc with the final segment slope (negative current)
        dv = v_asc[-1] - v_asc[-2]
        if dv > 0:
            slope = (i_desc[-1] - i_desc[-2]) / dv
            hi = voltage > v_asc[-1]
            out = np.where(hi, i_desc[-1] + slope * (voltage - v_asc[-1]), out)
        return out


@dataclass(frozen=True)
class OperatingPoint:
    voltage_v: float
    current_a: float
    power_w: float

    def __post_init__(self):
        expected = self.voltage_v * self.current_a
        if abs(self.power_w - expected) > 1e-9 * max(1.0, abs(expected)):
            raise ValueError("power must equal voltage * current")


def effective_irradiance(beam_wm2: float, diffuse_wm2: float, shaded_fraction: float) -> float:
    """Irradiance retained by a cell area: the beam component is removed in
    proportion to the shaded fraction; diffuse light is unaffected."""
    if beam_wm2 < 0 or diffuse_wm2 < 0:
        raise ValueError("irradiance components must be >= 0")
    if not 0.0 <= shaded_fraction <= 1.0:
        raise ValueError(f"shaded_fraction must be in [0,1], got {shaded_fraction}")
    return (1.0 - shaded_fraction) * beam_wm2 + diffuse_wm2


def cell_temperature(params: CellParams, t_air_c: float, g_eff_wm2: float, model: str = "constant") -> float:
    """Cell temperature: fixed 25 C by default, or the linear NOCT model."""
    if model == "constant":
        return 25.0
    if model == "noct":
        return t_air_c + (params.noct_c - 20.0) / 800.0 * g_eff_wm2
    raise ValueError(f"unknown temperature model {model!r}")


class CellModel:
    """Single-diode cell at fixed effective irradiance and temperature.

    current_at solves the implicit equation by damped Newton iteration to
    |dI| < 1e-10 A; voltage_at solves the monotone junction-voltage form
    (exact for any current, including reverse bias above Isc).
    """

    def __init__(self, params: CellParams, g_eff_wm2: float, t_cell_c: float):
        if g_eff_wm2 < 0:
            raise ValueError(f"effective irradiance must be >= 0, got {g_eff_wm2}")
        self.params = params
        self.g_eff_wm2 = g_eff_wm2
        self.t_cell_c = t_cell_c
        t_k = t_cell_c + 273.15
        self.vt = BOLTZMANN_J_PER_K * t_k / ELEMENTARY_CHARGE_C
        self.a = params.n * self.vt
        self.iph = (
            params.iph_stc_a
            * (g_eff_wm2 / 1000.0)
            * (1.0 + params.alpha_isc_per_c * (t_cell_c - 25.0))
        )
        self.i0 = params.i0_a

    def current_at(self, voltage: np.ndarray, max_iter: int = 100) -> np.ndarray:
        """I(V) by Newton iteration on the implicit diode equation."""
        v = np.atleast_1d(np.asarray(voltage, dtype=np.float64))
        p = self.params
        i = np.full_like(v, self.iph)  # photocurrent is a good starting point
        for _ in range(max_iter):
            w = np.clip((v + i * p.rs_ohm) / self.a, -700.0, 700.0)
            e = np.exp(w)
            f = self.iph - self.i0 * (e - 1.0) - (v + i * p.rs_ohm) / p.rsh_ohm - i
            fp = -self.i0 * e * p.rs_ohm / self.a - p.rs_ohm / p.rsh_ohm - 1.0
            di = f / fp
            i = i - di
            if np.max(np.abs(di)) < 1e-10:
                break
        else:
            raise SolverError(
                f"cell current solve did not converge (G={self.g_eff_wm2}, T={self.t_cell_c})"
            )
        return i if np.ndim(voltage) else float(i[0])

    def voltage_at(self, current: np.ndarray, max_iter: int = 100) -> np.ndarray:
        """V(I) via the junction voltage W = V + I*Rs.

        g(W) = I0*(exp(W/a) - 1) + W/Rsh - (Iph - I) is increasing and convex,
        so Newton from a point with g >= 0 converges monotonically.
        """
        i = np.atleast_1d(np.asarray(current, dtype=np.float64))
        p = self.params
        headroom = np.maximum(self.iph - i, 0.0)
        w = np.where(i <= self.iph, self.a * np.log1p(headroom / self.i0), 0.0)
        for _ in range(max_iter):
            e = np.exp(np.clip(w / self.a, -700.0, 700.0))
            g = self.i0 * (e - 1.0) + w / p.rsh_ohm - (self.iph - i)
            gp = self.i0 * e / self.a + 1.0 / p.rsh_ohm
            dw = g / gp
            w = w - dw
            if np.max(np.abs(dw)) < 1e-12 * max(1.0, float(np.max(np.abs(w)))):
                break
        else:
            raise SolverError(
                f"cell voltage solve did not converge (G={self.g_eff_wm2}, T={self.t_cell_c})"
            )
        v = w - i * p.rs_ohm
        return v if np.ndim(current) else float(v[0])

    def isc_a(self) -> float:
        return float(self.current_at(0.0))

    def voc_v(self) -> float:
        return float(self.voltage_at(0.0))


def cell_iv(params: CellParams, g_eff_wm2: float, t_cell_c: float = 25.0) -> CellModel:
    """Cell IV solver at the given effective irradiance and cell temperature."""
    return CellModel(params, g_eff_wm2, t_cell_c)


def _current_grid(i_max: float, points: int = CURVE_POINTS) -> np.ndarray:
    return np.linspace(0.0, max(i_max, 1e-12), points)


def substring_iv(
    cells: list[tuple[float, float]],
    params: CellParams,
    bypass_drop_v: float | None = None,
    i_grid: np.ndarray | None = None,
) -> IVCurve:
    """Series composition of one bypass-diode group.

    cells: per-cell (effective irradiance, cell temperature). Voltages add at
    equal current on a 512-point grid over [0, max cell Isc]; the bypass
    diode clamps the substring voltage at -bypass_drop_v.
    """
    if not cells:
        raise ValueError("substring needs at least one cell")
    drop = params.bypass_drop_v if bypass_drop_v is None else bypass_drop_v
    models: dict[tuple[float, float], CellModel] = {}
    counts: dict[tuple[float, float], int] = {}
    for cond in cells:
        key = (float(cond[0]), float(cond[1]))
        if key not in models:
            models[key] = CellModel(params, key[0], key[1])
            counts[key] = 0
        counts[key] += 1
    if i_grid is None:
        i_grid = _current_grid(max(m.isc_a() for m in models.values()))
    v = np.zeros_like(i_grid)
    for key, model in models.items():
        v += counts[key] * model.voltage_at(i_grid)
    v = np.maximum(v, -drop)
    return IVCurve(i_grid, v)


def series_iv(curves: list[IVCurve]) -> IVCurve:
    """Voltages summed at equal current on a common 512-point current grid."""
    if not curves:
        raise ValueError("series_iv needs at least one curve")
    if len(curves) == 1:
        return curves[0]
    i_grid = _current_grid(max(c.isc_a for c in curves))
    v = np.zeros_like(i_grid)
    for c in curves:
        v += c.voltage_at(i_grid)
    return IVCurve(i_grid, v)


def parallel_iv(curves: list[IVCurve]) -> IVCurve:
    """Currents summed at equal voltage on a 512-point voltage grid over
    [0, max Voc]; converted back to the curve's current-indexed form.

    A single curve is resampled through the same grid rather than returned
    unchanged, so k identical branches scale an identical representation
    (doubling branches doubles every current exactly).
    """
    if not curves:
        raise ValueError("parallel_iv needs at least one curve")
    v_grid = np.linspace(0.0, max(max(c.voc_v for c in curves), 1e-12), CURVE_POINTS)
    i_total = np.zeros_like(v_grid)
    for c in curves:
        i_total += c.current_at(v_grid)
    # reindex by current: sort by ascending current (voltage grid descending)
    order = np.argsort(i_total, kind="stable")
    i_sorted = i_total[order]
    v_sorted = v_grid[order]
    # deduplicate non-increasing current steps caused by flat regions
    keep = np.concatenate(([True], np.diff(i_sorted) > 1e-15))
    i_sorted, v_sorted = i_sorted[keep], v_sorted[keep]
    lo = np.searchsorted(i_sorted, 0.0)
    if lo > len(i_sorted) - 2:
        lo = max(0, len(i_sorted) - 2)
    return IVCurve(i_sorted[lo:], np.minimum.accumulate(v_sorted[lo:]))


def find_mpp(curve: IVCurve) -> OperatingPoint:
    """Global maximum of P = V*I over the sampled curve, refined by a local
    parabolic fit; handles the multiple local maxima of bypass staircases."""
    i = curve.current_a
    v = curve.voltage_v
    p = i * v
    k = int(np.argmax(p))
    if p[k] <= 0.0:
        return OperatingPoint(0.0, 0.0, 0.0)
    if 0 < k < len(p) - 1:
        # parabola through (i[k-1..k+1], p[k-1..k+1])
        x0, x1, x2 = i[k - 1], i[k], i[k + 1]
        y0, y1, y2 = p[k - 1], p[k], p[k + 1]
        denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
        if abs(denom) > 0:
            a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
            b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
            if a < 0:
                i_star = float(np.clip(-b / (2 * a), x0, x2))
                v_star = float(curve.voltage_at(i_star))
                if i_star * v_star > p[k]:
                    return OperatingPoint(v_star, i_star, i_star * v_star)
    return OperatingPoint(float(v[k]), float(i[k]), float(p[k]))


def effective_shading_factor(p_shaded_w: float, p_unshaded_w: float) -> float:
    """1 - P_shaded / P_unshaded (0 when the unshaded power is zero)."""
    if p_unshaded_w < 0:
        raise ValueError(f"unshaded power must be >= 0, got {p_unshaded_w}")
    if p_unshaded_w == 0.0:
        return 0.0
    if p_shaded_w > p_unshaded_w * (1.0 + 1e-9):
        raise ConsistencyError(
            f"shaded power {p_shaded_w} exceeds unshaded power {p_unshaded_w}"
        )
    return 1.0 - min(p_shaded_w, p_unshaded_w) / p_unshaded_w


def geometric_shading_factor(fractions, poa) -> float:
    """Mean over cells of shaded fraction weighted by the beam share of the
    plane-of-array irradiance; 0 when the plane receives nothing."""
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.size and (fr.min() < 0 or fr.max() > 1):
        raise ValueError("cell fractions must lie in [0, 1]")
    total = poa.total_wm2
    if total <= 0.0:
        return 0.0
    return float(fr.mean() * poa.beam_wm2 / total)
