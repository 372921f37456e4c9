"""Rectified pinhole stereo rig: projections and the fly search volume.

World frame convention (used everywhere in this package): origin at the
midpoint between the two optical centres, x lateral (positive toward the
right camera), y vertical (positive up), z forward along the common
optical axis. The left camera centre sits at (-baseline/2, 0, 0), the
right at (+baseline/2, 0, 0). Both cameras share the same intrinsics and
their axes are parallel (rectified rig), so a world point projects onto
the same image row in both views and its column disparity is

    x_left - x_right = focal_length_px * baseline_m / z  > 0.

Pixel coordinates are (column, row) with the origin at the top-left
pixel; y up in the world means row decreasing in the image.

A point is "visible" when its projection, padded by a margin of
``margin`` pixels (the fitness neighborhood radius), lies inside both
images. The admissible fly volume is the depth-bounded set of visible
points; at a fixed depth z it is an axis-aligned rectangle whose bounds
grow linearly with z, which makes the volume convex.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Fitness windows default to a 5x5 neighborhood, i.e. a 2 px margin.
DEFAULT_MARGIN_PX = 2

# Depth floor for projection math; avoids division blow-up for degenerate
# inputs. Points closer than this are never visible.
Z_FLOOR_M = 0.01


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics shared by both cameras of the rig."""

    focal_length_px: float
    principal_point: tuple[float, float]
    image_width: int
    image_height: int

    def __post_init__(self):
        u0, v0 = self.principal_point
        if self.focal_length_px <= 0:
            raise ValueError(f"focal_length_px must be > 0, got {self.focal_length_px}")
        if self.image_width < 1 or self.image_height < 1:
            raise ValueError("image dimensions must be positive")
        if not (0 <= u0 < self.image_width):
            raise ValueError(f"principal point u0={u0} outside [0, {self.image_width})")
        if not (0 <= v0 < self.image_height):
            raise ValueError(f"principal point v0={v0} outside [0, {self.image_height})")


@dataclass(frozen=True)
class StereoRig:
    """Calibrated rectified stereo pair plus the fly depth bounds."""

    intrinsics: CameraIntrinsics
    baseline_m: float
    camera_height_m: float = 1.2
    z_min_m: float = 1.0
    z_max_m: float = 20.0

    def __post_init__(self):
        if self.baseline_m <= 0:
            raise ValueError(f"baseline_m must be > 0, got {self.baseline_m}")
        if self.camera_height_m < 0:
            raise ValueError(f"camera_height_m must be >= 0, got {self.camera_height_m}")
        if not (0 < self.z_min_m < self.z_max_m):
            raise ValueError(f"need 0 < z_min_m < z_max_m, got {self.z_min_m}, {self.z_max_m}")


@dataclass(frozen=True)
class Projection:
    """Left/right real-valued pixel coordinates of one world point."""

    left_px: tuple[float, float]
    right_px: tuple[float, float]
    visible: bool


def project(rig: StereoRig, point, margin: int = DEFAULT_MARGIN_PX) -> Projection:
    """Project a world point into both images.

    ``visible`` is true iff the point is in front of the cameras and its
    projection, padded by ``margin`` pixels, lies inside both images.
    Raises ValueError for non-finite coordinates.
    """
    p = np.asarray(point, dtype=np.float64)
    if p.shape != (3,) or not np.all(np.isfinite(p)):
        raise ValueError(f"point must be 3 finite coordinates, got {point!r}")
    x, y, z = float(p[0]), float(p[1]), float(p[2])
    K = rig.intrinsics
    f = K.focal_length_px
    u0, v0 = K.principal_point
    zc = max(z, Z_FLOOR_M)
    half_b = 0.5 * rig.baseline_m
    u_left = u0 + f * (x + half_b) / zc
    u_right = u0 + f * (x - half_b) / zc
    v = v0 - f * y / zc
    visible = (
        z >= Z_FLOOR_M
        and margin <= u_left <= K.image_width - 1 - margin
        and margin <= u_right <= K.image_width - 1 - margin
        and margin <= v <= K.image_height - 1 - margin
    )
    return Projection((u_left, v), (u_right, v), visible)


def project_many(rig: StereoRig, points: np.ndarray):
    """Vectorized projection. Returns (u_left, u_right, v) float arrays.

    Rows are shared between the two views on a rectified rig, so a single
    v array is returned. Depths below the floor are clamped; pair with
    :func:`visible_many` to reject such points.
    """
    pts = np.asarray(points, dtype=np.float64)
    K = rig.intrinsics
    f = K.focal_length_px
    u0, v0 = K.principal_point
    half_b = 0.5 * rig.baseline_m
    x = pts[:, 0]
    y = pts[:, 1]
    z = np.maximum(pts[:, 2], Z_FLOOR_M)
    u_left = u0 + f * (x + half_b) / z
    u_right = u0 + f * (x - half_b) / z
    v = v0 - f * y / z
    return u_left, u_right, v


def visible_many(rig: StereoRig, u_left, u_right, v, z, margin: int = DEFAULT_MARGIN_PX):
    """Visibility mask matching :func:`project`'s margin rule."""
    K = rig.intrinsics
    u_hi = K.image_width - 1 - margin
    v_hi = K.image_height - 1 - margin
    return (
        (np.asarray(z) >= Z_FLOOR_M)
        & (u_left >= margin) & (u_left <= u_hi)
        & (u_right >= margin) & (u_right <= u_hi)
        & (v >= margin) & (v <= v_hi)
    )


class SearchVolume:
    """Depth-bounded intersection of the two fields of view.

    At depth z the admissible set is the rectangle
    [x_lo(z), x_hi(z)] x [y_lo(z), y_hi(z)], all bounds linear in z:

        x_lo(z) = z * (margin - u0) / f + b/2
        x_hi(z) = z * (W - 1 - margin - u0) / f - b/2
        y_lo(z) = z * (v0 - (H - 1 - margin)) / f
        y_hi(z) = z * (v0 - margin) / f

    These are the exact algebraic inverses of the visibility rule of
    :func:`project`, so membership here coincides with
    ``project(rig, p).visible and z_min <= z <= z_max``.
    """

    def __init__(self, rig: StereoRig, margin: int = DEFAULT_MARGIN_PX):
        K = rig.intrinsics
        if K.image_width - 1 - 2 * margin <= 0 or K.image_height - 1 - 2 * margin <= 0:
            raise ValueError(f"images too small for a {margin} px visibility margin")
        f = K.focal_length_px
        u0, v0 = K.principal_point
        self.rig = rig
        self.margin = margin
        half_b = 0.5 * rig.baseline_m
        self._x_lo_slope = (margin - u0) / f
        self._x_hi_slope = (K.image_width - 1 - margin - u0) / f
        self._y_lo_slope = (v0 - (K.image_height - 1 - margin)) / f
        self._y_hi_slope = (v0 - margin) / f
        self._half_b = half_b
        if self.x_bounds(rig.z_min_m)[0] > self.x_bounds(rig.z_min_m)[1]:
            raise ValueError(
                "fields of view do not intersect at z_min_m "
                f"(need z_min >= {f * rig.baseline_m / (K.image_width - 1 - 2 * margin):.3f} m)"
            )

    def x_bounds(self, z):
        z = np.asarray(z, dtype=np.float64)
        return z * self._x_lo_slope + self._half_b, z * self._x_hi_slope - self._half_b

    def y_bounds(self, z):
        z = np.asarray(z, dtype=np.float64)
        return z * self._y_lo_slope, z * self._y_hi_slope

    def bounding_box(self):
        """Axis-aligned box enclosing the volume (widest slice is at z_max)."""
        z_max = self.rig.z_max_m
        x_lo, x_hi = self.x_bounds(z_max)
        y_lo, y_hi = self.y_bounds(z_max)
        lo = np.array([x_lo, y_lo, self.rig.z_min_m])
        hi = np.array([x_hi, y_hi, self.rig.z_max_m])
        return lo, hi

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
        x_lo, x_hi = self.x_bounds(z)
        y_lo, y_hi = self.y_bounds(z)
        return (
            (z >= self.rig.z_min_m) & (z <= self.rig.z_max_m)
            & (x >= x_lo) & (x <= x_hi)
            & (y >= y_lo) & (y <= y_hi)
        )

    def clamp(self, points) -> np.ndarray:
        """Clamp points onto the volume: depth first, then the slice rectangle."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64)).copy()
        z = np.clip(pts[:, 2], self.rig.z_min_m, self.rig.z_max_m)
        x_lo, x_hi = self.x_bounds(z)
        y_lo, y_hi = self.y_bounds(z)
        pts[:, 0] = np.clip(pts[:, 0], x_lo, x_hi)
        pts[:, 1] = np.clip(pts[:, 1], y_lo, y_hi)
        pts[:, 2] = z
        return pts

    def volume_m3(self) -> float:
        """Exact volume by integrating the per-depth slice area."""
        # (x_hi - x_lo)(y_hi - y_lo) = (a*z - b)(c*z), integrate over [z_min, z_max]
        a = self._x_hi_slope - self._x_lo_slope
        b = 2.0 * self._half_b
        c = self._y_hi_slope - self._y_lo_slope
        z0, z1 = self.rig.z_min_m, self.rig.z_max_m
        return a * c * (z1**3 - z0**3) / 3.0 - b * c * (z1**2 - z0**2) / 2.0


def search_volume(rig: StereoRig, margin: int = DEFAULT_MARGIN_PX) -> SearchVolume:
    return SearchVolume(rig, margin)


def sample_points(
    rig: StereoRig, rng: np.random.Generator, count: int, margin: int = DEFAULT_MARGIN_PX
) -> np.ndarray:
    """Draw ``count`` points uniformly over the search volume.

    Rejection sampling from the bounding box; uniform because the box
    draw is uniform and acceptance is a pure membership test.
    """
    vol = search_volume(rig, margin)
    lo, hi = vol.bounding_box()
    out = np.empty((count, 3), dtype=np.float64)
    filled = 0
    while filled < count:
        n_draw = max(256, int((count - filled) * 3.2))
        cand = rng.uniform(lo, hi, size=(n_draw, 3))
        kept = cand[vol.contains(cand)]
        take = min(kept.shape[0], count - filled)
        out[filled : filled + take] = kept[:take]
        filled += take
    return out


def sample_point(rig: StereoRig, rng: np.random.Generator, margin: int = DEFAULT_MARGIN_PX) -> np.ndarray:
    """Single uniform draw from the search volume."""
    return sample_points(rig, rng, 1, margin)[0]
