"""
Per-pixel orientation maps (U-V channels) for ground panoramas and overhead tiles.

Both views share one azimuth convention: north is 0, azimuth grows clockwise seen
from above (east = +pi/2), and U stores azimuth / pi. For an equirectangular panorama
the centre column looks north; for an overhead tile north is up and the observer
stands at the tile centre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import ClassVar, TypeVar

import cv2
import numpy as np

from .errors import DataIOError, InvalidArgumentError


@dataclass(frozen=True)
class OrientationMap:
    u: np.ndarray   # H x W, azimuth / pi
    v: np.ndarray   # H x W, view-specific second channel

    # Value range of the v channel, used for colour export.
    v_range: ClassVar[tuple[float, float]] = (-1.0, 1.0)

    @property
    def height(self) -> int:
        return int(self.u.shape[0])

    @property
    def width(self) -> int:
        return int(self.u.shape[1])

    def stack(self, dtype=np.float32) -> np.ndarray:
        """Return the map as a 2 x H x W array (U first), ready for the encoder."""
        return np.stack([self.u, self.v]).astype(dtype)


@dataclass(frozen=True)
class GroundOrientationMap(OrientationMap):
    """u = azimuth / pi in [-1, 1), v = altitude / (pi/2) in (-1, 1)."""


@dataclass(frozen=True)
class SatelliteOrientationMap(OrientationMap):
    """u = polar azimuth / pi in [-1, 1), v = range / range-to-corner in [0, 1]."""

    v_range: ClassVar[tuple[float, float]] = (0.0, 1.0)


MapT = TypeVar("MapT", bound=OrientationMap)


def _check_dims(width: int, height: int) -> None:
    if width < 1 or height < 1:
        raise InvalidArgumentError(
            f"orientation map dimensions must be positive, got {width}x{height}"
        )


def ground_orientation_map(width: int, height: int) -> GroundOrientationMap:
    """
    Azimuth/altitude map of an equirectangular panorama.

    theta(x) = 2*pi*(x + 0.5)/width - pi, phi(y) = pi/2 - pi*(y + 0.5)/height,
    stored as u = theta/pi and v = phi/(pi/2).
    """
    _check_dims(width, height)
    x = np.arange(width, dtype=np.float64)
    y = np.arange(height, dtype=np.float64)
    u_row = (2.0 * x + 1.0) / width - 1.0
    v_col = 1.0 - (2.0 * y + 1.0) / height
    u = np.broadcast_to(u_row[None, :], (height, width)).copy()
    v = np.broadcast_to(v_col[:, None], (height, width)).copy()
    return GroundOrientationMap(u=u, v=v)


def satellite_orientation_map(width: int, height: int) -> SatelliteOrientationMap:
    """
    Polar azimuth/range map of a north-up overhead tile centred on the observer.

    The centre pixel (where atan2 is undefined) gets azimuth 0.
    """
    _check_dims(width, height)
    cx = (width - 1) / 2.0
    cy = (height - 1) / 2.0
    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    dx = np.broadcast_to(xs[None, :] - cx, (height, width))
    dy = np.broadcast_to(cy - ys[:, None], (height, width))

    u = np.arctan2(dx, dy) / math.pi
    # atan2 lands in (-pi, pi]; fold due south onto -1.
    u = np.where(u >= 1.0, u - 2.0, u)
    u = np.where((dx == 0) & (dy == 0), 0.0, u)

    r = np.sqrt(dx * dx + dy * dy)
    r_max = math.sqrt(cx * cx + cy * cy)
    v = r / r_max if r_max > 0 else np.zeros_like(r)
    return SatelliteOrientationMap(u=np.ascontiguousarray(u), v=np.ascontiguousarray(v))


def subsample_grid(array, factor: int):
    """Nearest-neighbour stride over the last two axes (numpy arrays or torch tensors)."""
    if factor <= 0:
        raise InvalidArgumentError(f"downsample factor must be positive, got {factor}")
    if factor & (factor - 1):
        raise InvalidArgumentError(f"downsample factor must be a power of 2, got {factor}")
    if factor == 1:
        return array
    return array[..., ::factor, ::factor]


def downsample_uv(orientation: MapT, factor: int) -> MapT:
    """
    Shrink a map by taking the top-left sample of every factor x factor cell.

    Output size is ceil(in / factor). Averaging would blend azimuths across the
    +-pi seam, so only subsampling is offered.
    """
    u = subsample_grid(orientation.u, factor)
    v = subsample_grid(orientation.v, factor)
    return type(orientation)(u=np.ascontiguousarray(u), v=np.ascontiguousarray(v))


def circular_shift_panorama(image: np.ndarray, shift: int) -> np.ndarray:
    """
    Rotate a panorama about the vertical axis: out[:, x] = image[:, (x - shift) mod W].

    Only pixels move; the orientation map stays put, so the shift behaves like an
    error in the estimated north.
    """
    width = image.shape[1]
    if width == 0:
        return image.copy()
    return np.roll(image, int(shift) % width, axis=1)


def degrees_to_columns(angle: float, width: int) -> int:
    if width < 1:
        raise InvalidArgumentError(f"panorama width must be positive, got {width}")
    return int(round(angle / 360.0 * width))


def bearing_to_column(bearing: float, width: int) -> float:
    """Fractional panorama column whose centre looks along `bearing` (radians)."""
    theta = (bearing + math.pi) % (2.0 * math.pi) - math.pi
    return (theta + math.pi) * width / (2.0 * math.pi) - 0.5


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def uv_to_bytes(orientation: OrientationMap) -> np.ndarray:
    """Linear [-1, 1] -> [0, 255] coding; H x W x 3 RGB with U in R, V in G, B = 0."""
    out = np.zeros((orientation.height, orientation.width, 3), dtype=np.uint8)
    out[..., 0] = np.rint((orientation.u + 1.0) * 127.5).clip(0, 255)
    out[..., 1] = np.rint((orientation.v + 1.0) * 127.5).clip(0, 255)
    return out


def bytes_to_uv(raster: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of uv_to_bytes; exact to within 1/255."""
    raster = raster.astype(np.float64)
    return raster[..., 0] / 127.5 - 1.0, raster[..., 1] / 127.5 - 1.0


def uv_to_color(orientation: OrientationMap) -> np.ndarray:
    """
    Optical-flow style colour coding: hue follows azimuth, saturation follows the
    second channel, value is full. Returns H x W x 3 RGB uint8.
    """
    lo, hi = orientation.v_range
    hsv = np.empty((orientation.height, orientation.width, 3), dtype=np.uint8)
    hsv[..., 0] = np.floor((orientation.u + 1.0) * 90.0).clip(0, 179)
    hsv[..., 1] = np.rint((orientation.v - lo) / (hi - lo) * 255.0).clip(0, 255)
    hsv[..., 2] = 255
    return cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB)


def save_uv_png(orientation: OrientationMap, path: str, style: str = "raw") -> None:
    if style == "raw":
        rgb = uv_to_bytes(orientation)
    elif style == "color":
        rgb = uv_to_color(orientation)
    else:
        raise InvalidArgumentError(f"unknown export style: {style!r} (raw|color)")
    if not cv2.imwrite(path, cv2.cvtColor(rgb, cv2.COLOR_RGB2BGR)):
        raise DataIOError(f"could not write orientation map: {path}")
