"""Fly-swarm stereo obstacle detection.

A population of 3-D points evolves so that it concentrates on the
visible surfaces of a stereo scene; a warning function turns the
population into a frontal-collision risk score. Includes a synthetic
stereo renderer for ground-truth verification and a CLI.
"""

from .evolution import (
    EvolutionParams,
    Fly,
    Population,
    StereoFrame,
    apply_sharing,
    crossover,
    evaluate_fitness,
    evaluate_population,
    immigrate,
    mutate,
    select,
    step_generation,
)
from .imaging import GradientMap, Image, PnmParseError, load_pnm, neighborhood_ssd, read_pnm, save_pnm, sobel_norm_map, write_pnm
from .stereo_geometry import (
    CameraIntrinsics,
    Projection,
    SearchVolume,
    StereoRig,
    project,
    sample_point,
    sample_points,
    search_volume,
)
from .synth import Scene, TexturedRect, ground_truth_depth, preset_scene, render_stereo_pair
from .warning import WarningParams, WarningReport, global_warning, is_useless, top_k, warning_value

__version__ = "0.1.0"
