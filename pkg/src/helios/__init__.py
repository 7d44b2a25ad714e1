"""helios: PV shading-loss simulation.

Quantifies energy-output losses caused by arbitrary 3D shading scenes:
depth maps rasterized from the sun direction classify per-cell sample
points as shaded, and a cell/bypass-diode network model translates the
shading into electrical losses, integrated over annual time series.
"""

from .electrical import (
    CellParams,
    IVCurve,
    OperatingPoint,
    cell_iv,
    effective_irradiance,
    effective_shading_factor,
    find_mpp,
    geometric_shading_factor,
    parallel_iv,
    series_iv,
    substring_iv,
)
from .engine import (
    InstantResult,
    LossReport,
    SimulationConfig,
    SunPathHeatmap,
    WeatherSource,
    build_heatmap,
    simulate_instant,
    simulate_period,
    tracker_normal,
)
from .geometry import Mesh, Transform, parse_obj, transform_mesh, vec3
from .irradiance import (
    IrradianceRecord,
    POAIrradiance,
    clear_sky,
    daylight_steps,
    load_weather,
    poa,
)
from .scene import (
    PVGeneratorSpec,
    Scene,
    SceneObject,
    generator_samples,
    load_scene,
    scene_occluders,
)
from .shadows import (
    DepthMap,
    ShadingMask,
    build_depth_map,
    cell_shaded_fractions,
    classify,
    ray_cast_shaded,
)
from .solarpos import Site, SunPosition, sun_direction, sun_position

__version__ = "0.1.0"
