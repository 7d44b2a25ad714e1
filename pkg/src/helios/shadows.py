"""Depth-map shadow classification: orthographic rasterization of occluder
triangles from the sun direction over a generator footprint, depth-test
classification of sample points, and an independent ray-casting oracle.

The rasterizer is a deterministic CPU implementation: triangles are filled
with the top-left rule, each covered texel keeps the minimum depth along the
sun ray. Kernels are JIT-compiled with numba when available and fall back to
equivalent vectorized numpy code otherwise; both paths produce bit-identical
results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime

import numpy as np

from .geometry import GeometryError, unit

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def deco(f):
            return f

        return deco if not (args and callable(args[0])) else args[0]


__all__ = [
    "DEFAULT_RESOLUTION",
    "DepthMap",
    "ShadingMask",
    "build_depth_map",
    "classify",
    "classify_positions",
    "ray_cast_shaded",
    "ray_cast_many",
    "cell_shaded_fractions",
    "default_depth_bias",
    "depth_map_to_pgm16",
    "mask_to_csv",
]

DEFAULT_RESOLUTION = 2048
WINDOW_INFLATE_TEXELS = 2
RAY_T_EPS = 1e-9


@dataclass(frozen=True)
class DepthMap:
    """Orthographic nearest-depth raster over a sun-aligned window.

    axis_u/axis_v span the window plane; axis_d = -sun_dir is the depth
    direction (smaller depth = closer to the sun). depth is (H, W), +inf
    where nothing was drawn. Texel (ix, iy) covers
    [u0 + ix*du, u0 + (ix+1)*du) x [v0 + iy*dv, v0 + (iy+1)*dv).
    """

    width: int
    height: int
    axis_u: np.ndarray
    axis_v: np.ndarray
    axis_d: np.ndarray
    origin_uv: tuple[float, float]
    texel_size: tuple[float, float]
    depth: np.ndarray

    @property
    def texel_world_size(self) -> float:
        return max(self.texel_size)


@dataclass(frozen=True)
class ShadingMask:
    """Per-sample shading state for one generator at one instant, with the
    cell layout needed to reduce to per-cell shaded fractions."""

    generator_id: str
    instant: datetime | None
    shaded: np.ndarray  # (S,) bool, ordered module -> cell -> sub-sample
    module_count: int
    cells_per_module: int
    samples_per_cell: int

    def __post_init__(self):
        s = np.ascontiguousarray(np.asarray(self.shaded, dtype=bool))
        expected = self.module_count * self.cells_per_module * self.samples_per_cell
        if s.shape != (expected,):
            raise ValueError(f"mask needs {expected} entries, got {s.shape}")
        s.setflags(write=False)
        object.__setattr__(self, "shaded", s)

    def cell_fractions(self) -> np.ndarray:
        """(modules, cells) shaded fraction = shaded samples / samples per cell."""
        return (
            self.shaded.reshape(self.module_count, self.cells_per_module, self.samples_per_cell)
            .mean(axis=2)
        )


def light_basis(sun_dir: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Orthonormal (u, v, d) with d = -sun_dir as the depth axis."""
    s = np.asarray(sun_dir, dtype=np.float64)
    if abs(float(np.linalg.norm(s)) - 1.0) > 1e-9:
        raise GeometryError("sun_dir must be unit length")
    if s[2] <= 0:
        raise GeometryError("sun_dir must point sky-ward")
    d = -s
    up = np.array([0.0, 0.0, 1.0])
    if abs(float(np.dot(d, up))) > 0.999:
        up = np.array([0.0, 1.0, 0.0])
    u = unit(np.cross(up, d))
    v = np.cross(d, u)
    return u, v, d


# --------------------------------------------------------------------------
# rasterization kernels (numba-jitted when available)


def _raster_kernel_py(tri_uvd, depth, u0, v0, du, dv):
    h, w = depth.shape
    for m in range(tri_uvd.shape[0]):
        ax, ay, ad = tri_uvd[m, 0, 0], tri_uvd[m, 0, 1], tri_uvd[m, 0, 2]
        bx, by, bd = tri_uvd[m, 1, 0], tri_uvd[m, 1, 1], tri_uvd[m, 1, 2]
        cx, cy, cd = tri_uvd[m, 2, 0], tri_uvd[m, 2, 1], tri_uvd[m, 2, 2]
        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area < 0.0:
            bx, cx = cx, bx
            by, cy = cy, by
            bd, cd = cd, bd
            area = -area
        if area == 0.0:
            continue
        xmin = min(ax, bx, cx)
        xmax = max(ax, bx, cx)
        ymin = min(ay, by, cy)
        ymax = max(ay, by, cy)
        ix0 = max(0, int(math.floor((xmin - u0) / du - 0.5)))
        ix1 = min(w - 1, int(math.ceil((xmax - u0) / du - 0.5)))
        iy0 = max(0, int(math.floor((ymin - v0) / dv - 0.5)))
        iy1 = min(h - 1, int(math.ceil((ymax - v0) / dv - 0.5)))
        if ix1 < ix0 or iy1 < iy0:
            continue
        # edge vectors; top-left rule accepts E == 0 on left (dy < 0) and
        # top (dy == 0, dx < 0) edges of a CCW triangle in a y-up frame
        e0x, e0y = cx - bx, cy - by  # edge b -> c, opposite a
        e1x, e1y = ax - cx, ay - cy  # edge c -> a, opposite b
        e2x, e2y = bx - ax, by - ay  # edge a -> b, opposite c
        tl0 = e0y < 0.0 or (e0y == 0.0 and e0x < 0.0)
        tl1 = e1y < 0.0 or (e1y == 0.0 and e1x < 0.0)
        tl2 = e2y < 0.0 or (e2y == 0.0 and e2x < 0.0)
        inv_area = 1.0 / area
        # edge functions advance incrementally: one add per texel per edge
        px0 = u0 + (ix0 + 0.5) * du
        py0 = v0 + (iy0 + 0.5) * dv
        row0 = e0x * (py0 - by) - e0y * (px0 - bx)
        row1 = e1x * (py0 - cy) - e1y * (px0 - cx)
        row2 = e2x * (py0 - ay) - e2y * (px0 - ax)
        for iy in range(iy0, iy1 + 1):
            w0 = row0
            w1 = row1
            w2 = row2
            for ix in range(ix0, ix1 + 1):
                ok0 = w0 > 0.0 or (w0 == 0.0 and tl0)
                ok1 = w1 > 0.0 or (w1 == 0.0 and tl1)
                ok2 = w2 > 0.0 or (w2 == 0.0 and tl2)
                if ok0 and ok1 and ok2:
                    dep = (w0 * ad + w1 * bd + w2 * cd) * inv_area
                    if dep < depth[iy, ix]:
                        depth[iy, ix] = dep
                w0 -= e0y * du
                w1 -= e1y * du
                w2 -= e2y * du
            row0 += e0x * dv
            row1 += e1x * dv
            row2 += e2x * dv


def _classify_kernel_py(sample_uvd, depth, u0, v0, du, dv, bias, out):
    h, w = depth.shape
    for k in range(sample_uvd.shape[0]):
        px = sample_uvd[k, 0]
        py = sample_uvd[k, 1]
        pd = sample_uvd[k, 2]
        ix = int(math.floor((px - u0) / du))
        iy = int(math.floor((py - v0) / dv))
        if ix < 0 or ix >= w or iy < 0 or iy >= h:
            out[k] = False
        else:
            out[k] = pd > depth[iy, ix] + bias


def _raycast_kernel_py(tris, points, direction, t_eps, out):
    dx, dy, dz = direction[0], direction[1], direction[2]
    for k in range(points.shape[0]):
        px, py, pz = points[k, 0], points[k, 1], points[k, 2]
        hit = False
        for m in range(tris.shape[0]):
            ax, ay, az = tris[m, 0, 0], tris[m, 0, 1], tris[m, 0, 2]
            e1x = tris[m, 1, 0] - ax
            e1y = tris[m, 1, 1] - ay
            e1z = tris[m, 1, 2] - az
            e2x = tris[m, 2, 0] - ax
            e2y = tris[m, 2, 1] - ay
            e2z = tris[m, 2, 2] - az
            # p = dir x e2
            qx = dy * e2z - dz * e2y
            qy = dz * e2x - dx * e2z
            qz = dx * e2y - dy * e2x
            det = e1x * qx + e1y * qy + e1z * qz
            if det > -1e-14 and det < 1e-14:
                continue
            inv = 1.0 / det
            tx, ty, tz = px - ax, py - ay, pz - az
            u = (tx * qx + ty * qy + tz * qz) * inv
            if u < 0.0 or u > 1.0:
                continue
            # r = t x e1
            rx = ty * e1z - tz * e1y
            ry = tz * e1x - tx * e1z
            rz = tx * e1y - ty * e1x
            v = (dx * rx + dy * ry + dz * rz) * inv
            if v < 0.0 or u + v > 1.0:
                continue
            t = (e2x * rx + e2y * ry + e2z * rz) * inv
            if t > t_eps:
                hit = True
                break
        out[k] = hit


if _HAVE_NUMBA:
    _raster_kernel = njit(cache=True)(_raster_kernel_py)
    _classify_kernel = njit(cache=True)(_classify_kernel_py)
    _raycast_kernel = njit(cache=True)(_raycast_kernel_py)
else:  # pragma: no cover
    _raster_kernel = _raster_kernel_py
    _classify_kernel = _classify_kernel_py
    _raycast_kernel = _raycast_kernel_py


def build_depth_map(
    occluders: np.ndarray,
    sun_dir: np.ndarray,
    footprint: np.ndarray,
    resolution: tuple[int, int] | int = DEFAULT_RESOLUTION,
) -> DepthMap:
    """Rasterize occluder triangles into a sun-aligned orthographic depth map.

    occluders: (M,3,3) world triangles (M may be 0). footprint: (K,3) points
    whose projection defines the window, inflated by 2 texels on each side.
    resolution: texel count (W, H), or one number for a square map.
    """
    if isinstance(resolution, int):
        resolution = (resolution, resolution)
    w, h = int(resolution[0]), int(resolution[1])
    if w < 1 or h < 1:
        raise ValueError(f"resolution must be >= 1x1, got {resolution}")
    u, v, d = light_basis(sun_dir)

    fp = np.asarray(footprint, dtype=np.float64).reshape(-1, 3)
    if fp.shape[0] < 3:
        raise GeometryError("footprint needs at least 3 points")
    fu = fp @ u
    fv = fp @ v
    su = float(fu.max() - fu.min())
    sv = float(fv.max() - fv.min())
    if max(su, sv) <= 0.0:
        raise GeometryError("footprint is degenerate under the sun projection")
    # keep texels square-ish and nonzero even for edge-on projections
    su = max(su, 1e-9)
    sv = max(sv, 1e-9)
    du0 = su / w
    dv0 = sv / h
    u0 = float(fu.min()) - WINDOW_INFLATE_TEXELS * du0
    v0 = float(fv.min()) - WINDOW_INFLATE_TEXELS * dv0
    du = (su + 2 * WINDOW_INFLATE_TEXELS * du0) / w
    dv = (sv + 2 * WINDOW_INFLATE_TEXELS * dv0) / h

    depth = np.full((h, w), np.inf, dtype=np.float64)
    tris = np.asarray(occluders, dtype=np.float64).reshape(-1, 3, 3)
    if tris.shape[0]:
        # one GEMM maps all vertices into (u, v, depth) light coordinates
        basis = np.stack([u, v, d], axis=1)
        tri_uvd = tris @ basis
        # cull triangles whose projected bbox misses the window
        keep = (
            (tri_uvd[:, :, 0].max(axis=1) >= u0)
            & (tri_uvd[:, :, 0].min(axis=1) <= u0 + w * du)
            & (tri_uvd[:, :, 1].max(axis=1) >= v0)
            & (tri_uvd[:, :, 1].min(axis=1) <= v0 + h * dv)
        )
        if np.any(keep):
            _raster_kernel(np.ascontiguousarray(tri_uvd[keep]), depth, u0, v0, du, dv)

    return DepthMap(
        width=w,
        height=h,
        axis_u=u,
        axis_v=v,
        axis_d=d,
        origin_uv=(u0, v0),
        texel_size=(du, dv),
        depth=depth,
    )


def default_depth_bias(texel_world_size: float, cos_incidence: float) -> float:
    """Slope-scaled shadow-acne guard: 2 texels face-on, capped at 4 texels
    for grazing incidence."""
    return min(
        2.0 * texel_world_size / max(0.1, abs(cos_incidence)),
        4.0 * texel_world_size,
    )


def classify_positions(
    depth_map: DepthMap, positions: np.ndarray, bias: float
) -> np.ndarray:
    """Shaded flags for (S,3) world positions against the depth map."""
    if bias < 0:
        raise ValueError(f"bias must be >= 0, got {bias}")
    pts = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    uvd = np.ascontiguousarray(
        np.stack([pts @ depth_map.axis_u, pts @ depth_map.axis_v, pts @ depth_map.axis_d], axis=1)
    )
    out = np.empty(len(pts), dtype=np.bool_)
    u0, v0 = depth_map.origin_uv
    du, dv = depth_map.texel_size
    _classify_kernel(uvd, depth_map.depth, u0, v0, du, dv, bias, out)
    return out


def classify(
    depth_map: DepthMap,
    samples,
    bias: float,
    generator_id: str = "",
    instant: datetime | None = None,
    layout: tuple[int, int, int] | None = None,
) -> ShadingMask:
    """ShadingMask for SamplePoints (or an (S,3) array plus explicit layout).

    A sample is shaded iff its depth along the sun ray exceeds the stored
    texel depth plus the bias; samples projecting outside the window are
    unshaded.
    """
    if layout is None:
        sample_list = list(samples)
        positions = np.array([s.position for s in sample_list])
        generator_id = generator_id or sample_list[0].generator_id
        module_count = max(s.module_index for s in sample_list) + 1
        cells = max(s.cell_index for s in sample_list) + 1
        subs = max(s.sub_index for s in sample_list) + 1
        layout = (module_count, cells, subs)
    else:
        positions = np.asarray(samples, dtype=np.float64)
    shaded = classify_positions(depth_map, positions, bias)
    return ShadingMask(
        generator_id=generator_id,
        instant=instant,
        shaded=shaded,
        module_count=layout[0],
        cells_per_module=layout[1],
        samples_per_cell=layout[2],
    )


def ray_cast_many(
    occluders: np.ndarray, sun_dir: np.ndarray, points: np.ndarray
) -> np.ndarray:
    """Shaded flags by brute-force ray casting from each point toward the sun.

    Boundary hits (ray through a triangle edge or vertex) count as hits;
    intersections closer than 1e-9 along the ray are ignored so a point
    lying exactly on an occluder does not shade itself.
    """
    s = unit(np.asarray(sun_dir, dtype=np.float64))
    tris = np.ascontiguousarray(np.asarray(occluders, dtype=np.float64).reshape(-1, 3, 3))
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
    out = np.empty(len(pts), dtype=np.bool_)
    if tris.shape[0] == 0:
        out[:] = False
        return out
    _raycast_kernel(tris, pts, s, RAY_T_EPS, out)
    return out


def ray_cast_shaded(occluders: np.ndarray, sun_dir: np.ndarray, point: np.ndarray) -> bool:
    """True iff any occluder triangle intersects the ray from point to sun."""
    return bool(ray_cast_many(occluders, sun_dir, np.asarray(point).reshape(1, 3))[0])


def cell_shaded_fractions(mask: ShadingMask, spec) -> np.ndarray:
    """(modules, cells) shaded fractions for the given generator spec."""
    if (
        mask.module_count != spec.module_count
        or mask.cells_per_module != spec.cells_per_module
        or mask.samples_per_cell != spec.subdivision**2
    ):
        raise ValueError(
            f"mask layout {mask.module_count}x{mask.cells_per_module}x{mask.samples_per_cell} "
            f"does not match generator {spec.id}"
        )
    return mask.cell_fractions()


def depth_map_to_pgm16(depth_map: DepthMap) -> bytes:
    """16-bit PGM rendering of the depth buffer (near = dark, +inf = white)."""
    d = depth_map.depth
    finite = np.isfinite(d)
    if finite.any():
        lo = float(d[finite].min())
        hi = float(d[finite].max())
        span = hi - lo if hi > lo else 1.0
        scaled = np.where(finite, (d - lo) / span * 65534.0, 65535.0)
    else:
        scaled = np.full_like(d, 65535.0)
    img = scaled.astype(">u2")
    header = f"P5\n{depth_map.width} {depth_map.height}\n65535\n".encode()
    return header + img.tobytes()


def mask_to_csv(mask: ShadingMask) -> str:
    """CSV dump `generator,module,cell,sub,shaded` in sample order."""
    lines = ["generator,module,cell,sub,shaded"]
    s = mask.shaded
    per_mod = mask.cells_per_module * mask.samples_per_cell
    for k in range(len(s)):
        m = k // per_mod
        c = (k % per_mod) // mask.samples_per_cell
        sub = k % mask.samples_per_cell
        lines.append(f"{mask.generator_id},{m},{c},{sub},{int(s[k])}")
    return "\n".join(lines) + "\n"
