"""Plain-text key=value run configuration.

One `key = value` per line, `#` starts a comment, repeated keys collect
(used for `obstacle` lines). List values are comma- or space-separated
numbers. Example:

    focal_length_px = 500
    principal_point = 320, 240
    image_size      = 640, 480
    baseline_m      = 0.4
    camera_height_m = 1.2
    z_min_m = 1.0
    z_max_m = 20.0
    population_size = 5000
    # scene: center_x center_y center_z width height seed [cell]
    obstacle = 0.0, -0.35, 4.0, 0.5, 1.7, 202, 0.053
    ground_texture_seed = 101
"""

from __future__ import annotations

from dataclasses import fields

from .evolution import EvolutionParams
from .stereo_geometry import CameraIntrinsics, StereoRig
from .synth import Scene, TexturedRect
from .warning import WarningParams

DEFAULT_FOCAL_LENGTH_PX = 500.0
DEFAULT_PRINCIPAL_POINT = (320.0, 240.0)
DEFAULT_IMAGE_SIZE = (640, 480)
DEFAULT_BASELINE_M = 0.4
DEFAULT_CAMERA_HEIGHT_M = 1.2
DEFAULT_Z_MIN_M = 1.0
DEFAULT_Z_MAX_M = 20.0


class ConfigError(ValueError):
    """Bad configuration file or inconsistent run options."""


def parse_config_text(text: str) -> dict[str, list[str]]:
    cfg: dict[str, list[str]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value in {raw!r}")
        cfg.setdefault(key, []).append(value)
    return cfg


def load_config(path) -> dict[str, list[str]]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def _numbers(value: str) -> list[float]:
    parts = value.replace(",", " ").split()
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"expected numbers, got {value!r}") from None


def _single(cfg: dict, key: str) -> str | None:
    values = cfg.get(key)
    if values is None:
        return None
    if len(values) > 1:
        raise ConfigError(f"key {key!r} given {len(values)} times, expected once")
    return values[0]


def get_float(cfg: dict, key: str, default: float) -> float:
    raw = _single(cfg, key)
    return default if raw is None else float(_numbers(raw)[0])


def get_int(cfg: dict, key: str, default: int) -> int:
    raw = _single(cfg, key)
    if raw is None:
        return default
    value = _numbers(raw)[0]
    if value != int(value):
        raise ConfigError(f"key {key!r} expects an integer, got {raw!r}")
    return int(value)


def get_floats(cfg: dict, key: str, default, count: int):
    raw = _single(cfg, key)
    if raw is None:
        return default
    values = _numbers(raw)
    if len(values) != count:
        raise ConfigError(f"key {key!r} expects {count} values, got {len(values)}")
    return tuple(values)


def rig_from_config(cfg: dict) -> StereoRig:
    width, height = get_floats(cfg, "image_size", DEFAULT_IMAGE_SIZE, 2)
    intrinsics = CameraIntrinsics(
        focal_length_px=get_float(cfg, "focal_length_px", DEFAULT_FOCAL_LENGTH_PX),
        principal_point=get_floats(cfg, "principal_point", DEFAULT_PRINCIPAL_POINT, 2),
        image_width=int(width),
        image_height=int(height),
    )
    return StereoRig(
        intrinsics=intrinsics,
        baseline_m=get_float(cfg, "baseline_m", DEFAULT_BASELINE_M),
        camera_height_m=get_float(cfg, "camera_height_m", DEFAULT_CAMERA_HEIGHT_M),
        z_min_m=get_float(cfg, "z_min_m", DEFAULT_Z_MIN_M),
        z_max_m=get_float(cfg, "z_max_m", DEFAULT_Z_MAX_M),
    )


def evolution_params_from_config(cfg: dict) -> EvolutionParams:
    defaults = EvolutionParams()
    sigma = get_floats(cfg, "mutation_sigma", None, 3)
    return EvolutionParams(
        population_size=get_int(cfg, "population_size", defaults.population_size),
        selection_ratio=get_float(cfg, "selection_ratio", defaults.selection_ratio),
        mutation_fraction=get_float(cfg, "mutation_fraction", defaults.mutation_fraction),
        crossover_fraction=get_float(cfg, "crossover_fraction", defaults.crossover_fraction),
        immigration_fraction=get_float(cfg, "immigration_fraction", defaults.immigration_fraction),
        mutation_sigma=sigma,
        neighborhood_radius=get_int(cfg, "neighborhood_radius", defaults.neighborhood_radius),
        sharing_cell_px=get_int(cfg, "sharing_cell_px", defaults.sharing_cell_px),
        sharing_exponent=get_float(cfg, "sharing_exponent", defaults.sharing_exponent),
        fitness_epsilon=get_float(cfg, "fitness_epsilon", defaults.fitness_epsilon),
        rng_seed=get_int(cfg, "rng_seed", defaults.rng_seed),
    )


def warning_params_from_config(cfg: dict) -> WarningParams:
    defaults = WarningParams()
    return WarningParams(
        max_height_m=get_float(cfg, "max_height_m", defaults.max_height_m),
        min_height_m=get_float(cfg, "min_height_m", defaults.min_height_m),
        max_range_m=get_float(cfg, "max_range_m", defaults.max_range_m),
        x_clamp_m=get_float(cfg, "x_clamp_m", defaults.x_clamp_m),
        z_clamp_m=get_float(cfg, "z_clamp_m", defaults.z_clamp_m),
    )


def scene_from_config(cfg: dict) -> Scene | None:
    """Scene description, or None when the config carries no scene keys."""
    scene_keys = ("obstacle", "ground_texture_seed", "background_grey", "ground_texture_cell_m")
    if not any(k in cfg for k in scene_keys):
        return None
    obstacles = []
    for raw in cfg.get("obstacle", []):
        values = _numbers(raw)
        if len(values) not in (6, 7):
            raise ConfigError(
                "obstacle expects 'cx, cy, cz, width, height, seed[, cell]', " f"got {raw!r}"
            )
        rect_args = dict(
            center=(values[0], values[1], values[2]),
            width_m=values[3],
            height_m=values[4],
            texture_seed=int(values[5]),
        )
        if len(values) == 7:
            rect_args["texture_cell_m"] = values[6]
        obstacles.append(TexturedRect(**rect_args))
    ground_seed_raw = _single(cfg, "ground_texture_seed")
    scene_defaults = {f.name: f.default for f in fields(Scene)}
    return Scene(
        obstacles=tuple(obstacles),
        ground_texture_seed=None if ground_seed_raw is None else int(_numbers(ground_seed_raw)[0]),
        background_grey=get_int(cfg, "background_grey", scene_defaults["background_grey"]),
        ground_texture_cell_m=get_float(cfg, "ground_texture_cell_m", scene_defaults["ground_texture_cell_m"]),
    )
