"""Intensity rasters, binary PNM I/O, Sobel norm maps and window SSD.

Images are stored as uint8 numpy arrays, (H, W) for grey and (H, W, 3)
for colour, and are treated as immutable once constructed. Pixel
coordinates follow the (column, row) convention of stereo_geometry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

_WHITESPACE = b" \t\r\n\x0b\x0c"


class PnmParseError(ValueError):
    """Malformed PGM/PPM input; the message names the byte offset."""


@dataclass(eq=False)
class Image:
    width: int
    height: int
    channels: int
    samples: np.ndarray  # uint8, (H, W) or (H, W, 3)

    def __post_init__(self):
        expected = (self.height, self.width) if self.channels == 1 else (self.height, self.width, self.channels)
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        if self.samples.dtype != np.uint8:
            raise ValueError(f"samples must be uint8, got {self.samples.dtype}")
        if self.samples.shape != expected:
            raise ValueError(f"samples shape {self.samples.shape} does not match {expected}")

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Image":
        a = np.ascontiguousarray(arr)
        if a.dtype != np.uint8:
            if np.issubdtype(a.dtype, np.integer) and a.min() >= 0 and a.max() <= 255:
                a = a.astype(np.uint8)
            else:
                raise ValueError("array must hold integer samples in [0, 255]")
        if a.ndim == 2:
            return cls(a.shape[1], a.shape[0], 1, a)
        if a.ndim == 3 and a.shape[2] == 3:
            return cls(a.shape[1], a.shape[0], 3, a)
        raise ValueError(f"expected (H, W) or (H, W, 3) array, got shape {a.shape}")

    def luminance(self) -> np.ndarray:
        """Float64 luminance plane; identity for grey images."""
        if self.channels == 1:
            return self.samples.astype(np.float64)
        w = np.asarray(LUMA_WEIGHTS)
        return self.samples.astype(np.float64) @ w

    def planes(self) -> np.ndarray:
        """Samples as float64 with an explicit channel axis, (H, W, C)."""
        s = self.samples.astype(np.float64)
        return s[:, :, None] if self.channels == 1 else s


@dataclass(eq=False)
class GradientMap:
    width: int
    height: int
    norms: np.ndarray  # float64 (H, W), >= 0, zero on the 1 px border


def _next_token(data: bytes, pos: int):
    """Skip whitespace and '#' comments, return (token, start, end)."""
    n = len(data)
    while pos < n:
        c = data[pos]
        if c in _WHITESPACE:
            pos += 1
        elif c == 0x23:  # '#'
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
        else:
            break
    if pos >= n:
        raise PnmParseError(f"unexpected end of header at offset {pos}")
    start = pos
    while pos < n and data[pos] not in _WHITESPACE and data[pos] != 0x23:
        pos += 1
    return data[start:pos], start, pos


def load_pnm(data: bytes) -> Image:
    """Decode binary PGM (P5) or PPM (P6) with maxval 255."""
    if data[:2] == b"P5":
        channels = 1
    elif data[:2] == b"P6":
        channels = 3
    else:
        raise PnmParseError("expected magic 'P5' or 'P6' at offset 0")
    pos = 2
    fields = []
    for _ in range(3):
        token, start, pos = _next_token(data, pos)
        try:
            fields.append(int(token))
        except ValueError:
            raise PnmParseError(f"invalid header integer {token!r} at offset {start}") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise PnmParseError(f"non-positive image dimensions {width}x{height} at offset 2")
    if maxval != 255:
        raise PnmParseError(f"unsupported maxval {maxval} at offset {start} (only 255)")
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise PnmParseError(f"expected whitespace after maxval at offset {pos}")
    pos += 1
    need = width * height * channels
    have = len(data) - pos
    if have < need:
        raise PnmParseError(f"truncated pixel data at offset {pos}: need {need} bytes, have {have}")
    flat = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return Image(width, height, channels, flat.reshape(shape).copy())


def save_pnm(image: Image) -> bytes:
    magic = b"P5" if image.channels == 1 else b"P6"
    header = magic + b"\n%d %d\n255\n" % (image.width, image.height)
    return header + image.samples.tobytes()


def read_pnm(path) -> Image:
    with open(path, "rb") as fh:
        return load_pnm(fh.read())


def write_pnm(path, image: Image) -> None:
    with open(path, "wb") as fh:
        fh.write(save_pnm(image))


def sobel_norm_map(image: Image) -> GradientMap:
    """Euclidean Sobel gradient norm of the luminance plane.

    Border pixels are set to 0; every path that reads the map keeps the
    fitness window (and hence the centre pixel) away from the border.
    """
    if image.width < 3 or image.height < 3:
        raise ValueError(f"image must be at least 3x3, got {image.width}x{image.height}")
    p = image.luminance()
    gx = (p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:]) - (p[:-2, :-2] + 2.0 * p[1:-1, :-2] + p[2:, :-2])
    gy = (p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:]) - (p[:-2, :-2] + 2.0 * p[:-2, 1:-1] + p[:-2, 2:])
    norms = np.zeros((image.height, image.width), dtype=np.float64)
    norms[1:-1, 1:-1] = np.hypot(gx, gy)
    return GradientMap(image.width, image.height, norms)


def neighborhood_ssd(left: Image, right: Image, p_left, p_right, radius: int) -> float:
    """Sum over channels and a (2r+1)^2 window of squared intensity differences.

    ``p_left`` / ``p_right`` are integer (column, row) window centres. Both
    windows must lie fully inside their images; callers guarantee this via
    the projection visibility margin.
    """
    if left.channels != right.channels:
        raise ValueError("left and right images must have the same channel count")
    xl, yl = int(p_left[0]), int(p_left[1])
    xr, yr = int(p_right[0]), int(p_right[1])
    r = int(radius)
    for (x, y, img, name) in ((xl, yl, left, "left"), (xr, yr, right, "right")):
        if x - r < 0 or y - r < 0 or x + r >= img.width or y + r >= img.height:
            raise ValueError(f"{name} window centred at ({x}, {y}) with radius {r} leaves the image")
    a = left.samples[yl - r : yl + r + 1, xl - r : xl + r + 1].astype(np.float64)
    b = right.samples[yr - r : yr + r + 1, xr - r : xr + r + 1].astype(np.float64)
    d = a - b
    return float(np.sum(d * d))
