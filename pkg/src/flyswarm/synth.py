"""Synthetic stereo scenes with known geometry.

Scenes are a set of textured fronto-parallel rectangles over an optional
textured ground plane (y = -camera_height) and a uniform background.
Surfaces carry a seeded block-noise texture addressed in surface
coordinates, so both cameras see identical intensities for the same
surface point: the renderer is Lambertian with no lighting, which is
exactly the photo-consistency the fitness function rewards.

Texture values stay within [16, 224] so tests can shift intensities by
+-25 grey levels without clipping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import Image
from .stereo_geometry import StereoRig

TEXTURE_LO = 16
TEXTURE_SPAN = 209  # values in [16, 224]

_M1 = np.uint64(0x9E3779B97F4A7C15)
_M2 = np.uint64(0xBF58476D1CE4E5B9)
_M3 = np.uint64(0x94D049BB133111EB)


@dataclass(frozen=True)
class TexturedRect:
    """Axis-aligned, fronto-parallel textured rectangle."""

    center: tuple[float, float, float]
    width_m: float
    height_m: float
    texture_seed: int
    texture_cell_m: float = 0.053

    def __post_init__(self):
        if self.width_m <= 0 or self.height_m <= 0:
            raise ValueError("rectangle sides must be positive")
        if self.center[2] <= 0:
            raise ValueError(f"rectangle depth must be positive, got {self.center[2]}")
        if self.texture_cell_m <= 0:
            raise ValueError("texture_cell_m must be positive")


@dataclass(frozen=True)
class Scene:
    obstacles: tuple[TexturedRect, ...] = ()
    ground_texture_seed: int | None = None
    background_grey: int = 135
    # Fine ground cells keep wrong-depth window matches partial: coarse
    # ground texture has row-aligned cell edges that look identical from
    # both cameras over a wide disparity band, which rewards flies well
    # off the true surface.
    ground_texture_cell_m: float = 0.03

    def __post_init__(self):
        if not (0 <= self.background_grey <= 255):
            raise ValueError(f"background_grey must be in [0, 255], got {self.background_grey}")
        if self.ground_texture_cell_m <= 0:
            raise ValueError("ground_texture_cell_m must be positive")


def _block_noise(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic intensity per integer texture cell (splitmix-style hash)."""
    seed_term = np.uint64((seed * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF)
    h = (
        ix.astype(np.int64).astype(np.uint64) * _M1
        ^ iy.astype(np.int64).astype(np.uint64) * _M2
        ^ seed_term
    )
    h ^= h >> np.uint64(30)
    h *= _M2
    h ^= h >> np.uint64(27)
    h *= _M3
    h ^= h >> np.uint64(31)
    return (TEXTURE_LO + (h % np.uint64(TEXTURE_SPAN))).astype(np.uint8)


def _render_view(scene: Scene, rig: StereoRig, cam_x: float) -> np.ndarray:
    K = rig.intrinsics
    f = K.focal_length_px
    u0, v0 = K.principal_point
    w, h = K.image_width, K.image_height
    dir_x = (np.arange(w, dtype=np.float64) - u0) / f  # per column
    dir_y = -(np.arange(h, dtype=np.float64) - v0) / f  # per row, world-y slope

    img = np.full((h, w), np.uint8(scene.background_grey))
    zbuf = np.full((h, w), np.inf)

    if scene.ground_texture_seed is not None and rig.camera_height_m > 0:
        descending = dir_y < 0
        t = np.zeros(h)
        t[descending] = -rig.camera_height_m / dir_y[descending]  # per row
        zg = np.broadcast_to(t[:, None], (h, w))
        hit = (zg > 0) & (zg < zbuf)
        xg = cam_x + dir_x[None, :] * t[:, None]
        cell = scene.ground_texture_cell_m
        ix = np.floor(xg / cell)
        iz = np.floor(zg / cell)
        img[hit] = _block_noise(ix[hit], iz[hit], scene.ground_texture_seed)
        zbuf = np.where(hit, zg, zbuf)

    for rect in scene.obstacles:
        cx, cy, cz = rect.center
        x = cam_x + dir_x[None, :] * cz
        y = dir_y[:, None] * cz
        hit = (
            (np.abs(x - cx) <= rect.width_m / 2)
            & (np.abs(y - cy) <= rect.height_m / 2)
            & (cz < zbuf)
        )
        iu = np.floor((x - cx) / rect.texture_cell_m)
        iv = np.floor((y - cy) / rect.texture_cell_m)
        tex = _block_noise(
            np.broadcast_to(iu, (h, w))[hit], np.broadcast_to(iv, (h, w))[hit], rect.texture_seed
        )
        img[hit] = tex
        zbuf[hit] = cz

    return img


def render_stereo_pair(scene: Scene, rig: StereoRig) -> tuple[Image, Image]:
    """Render the scene from both cameras. Deterministic per (scene, rig)."""
    left = _render_view(scene, rig, -0.5 * rig.baseline_m)
    right = _render_view(scene, rig, +0.5 * rig.baseline_m)
    return Image.from_array(left), Image.from_array(right)


def ground_truth_depth(scene: Scene, point) -> float | None:
    """Depth of the nearest obstacle surface along +z at the point's (x, y).

    The ground plane is parallel to +z rays and therefore never counts.
    """
    x, y = float(point[0]), float(point[1])
    best = None
    for rect in scene.obstacles:
        cx, cy, cz = rect.center
        if abs(x - cx) <= rect.width_m / 2 and abs(y - cy) <= rect.height_m / 2:
            if best is None or cz < best:
                best = cz
    return best


PRESET_NAMES = ("empty-road", "pedestrian-4m")

_GROUND_SEED = 101
_PEDESTRIAN_SEED = 202
_PEDESTRIAN_SIZE = (0.5, 1.7)
_PEDESTRIAN_DEPTH = 4.0


def preset_scene(name: str, rig: StereoRig) -> Scene:
    """Built-in scenes: a bare textured road, or the road plus a pedestrian-
    sized rectangle standing on it 4 m ahead, centred on the axis."""
    if name == "empty-road":
        return Scene(ground_texture_seed=_GROUND_SEED)
    if name == "pedestrian-4m":
        w, h = _PEDESTRIAN_SIZE
        rect = TexturedRect(
            center=(0.0, h / 2 - rig.camera_height_m, _PEDESTRIAN_DEPTH),
            width_m=w,
            height_m=h,
            texture_seed=_PEDESTRIAN_SEED,
        )
        return Scene(obstacles=(rect,), ground_texture_seed=_GROUND_SEED)
    raise ValueError(f"unknown preset {name!r}; expected one of {PRESET_NAMES}")
