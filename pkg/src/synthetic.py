"""
Procedural cross-view world for desk-scale experiments.

Each location is a handful of coloured landmarks around an observer. The overhead
tile shows them as disks at their true polar offset (north up); the panorama shows
them as rectangles at the column of their bearing, shrinking and sinking toward
the horizon with range. Both renderings use the azimuth convention of
src.geometry, so matching the two views is a geometric problem.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import cv2
import numpy as np

from .dataset import PairRecord, write_manifest
from .errors import DataIOError, InvalidArgumentError
from .geo import offset_position
from .geometry import bearing_to_column

SKY_RGB = (150, 190, 230)
GROUND_RGB = (105, 100, 90)
TERRAIN_RGB = (95, 115, 75)

MIN_GRID_SPACING_M = 20.0


@dataclass(frozen=True)
class SyntheticWorldConfig:
    n_locations: int = 600
    n_test: int = 200
    landmarks_per_location: int = 6
    panorama_width: int = 128
    panorama_height: int = 64
    overhead_width: int = 112
    overhead_height: int = 112
    meters_per_pixel: float = 0.12
    min_landmark_range: float = 5.0
    max_landmark_range: float = 6.5
    landmark_size: tuple[float, float] = (0.4, 1.2)      # footprint diameter, metres
    landmark_height: tuple[float, float] = (2.0, 6.0)    # metres
    camera_height: float = 2.0
    noise_level: float = 0.05
    grid_spacing: float = 25.0
    origin: tuple[float, float] = (40.0, -75.0)
    seed: int = 1

    def __post_init__(self) -> None:
        dims = (self.panorama_width, self.panorama_height, self.overhead_width, self.overhead_height)
        if min(dims) < 1:
            raise InvalidArgumentError(f"image dimensions must be positive: {dims}")
        if self.n_locations < 1 or not 0 <= self.n_test <= self.n_locations:
            raise InvalidArgumentError(
                f"need n_locations >= 1 and 0 <= n_test <= n_locations, "
                f"got {self.n_locations}/{self.n_test}"
            )
        if self.landmarks_per_location < 0:
            raise InvalidArgumentError("landmarks_per_location must be >= 0")
        if self.meters_per_pixel <= 0:
            raise InvalidArgumentError("meters_per_pixel must be positive")
        if not 0 <= self.min_landmark_range < self.max_landmark_range:
            raise InvalidArgumentError(
                f"landmark range must satisfy 0 <= min < max, got "
                f"({self.min_landmark_range}, {self.max_landmark_range})"
            )
        if self.max_landmark_range > self.half_extent_m:
            raise InvalidArgumentError(
                f"max_landmark_range {self.max_landmark_range} m exceeds the overhead "
                f"half-extent {self.half_extent_m:.3f} m"
            )
        if not 0.0 <= self.noise_level <= 1.0:
            raise InvalidArgumentError(f"noise_level must be in [0, 1], got {self.noise_level}")
        if self.grid_spacing < MIN_GRID_SPACING_M:
            raise InvalidArgumentError(
                f"grid_spacing must be >= {MIN_GRID_SPACING_M} m, got {self.grid_spacing}"
            )

    @property
    def half_extent_m(self) -> float:
        return min(self.overhead_width, self.overhead_height) / 2.0 * self.meters_per_pixel


@dataclass(frozen=True)
class Landmark:
    bearing: float                  # radians, clockwise from north
    range_m: float
    color: tuple[int, int, int]     # RGB
    size_m: float
    height_m: float


@dataclass
class SyntheticWorld:
    root: str
    manifest_path: str
    records: list[PairRecord]
    landmarks: dict[str, list[Landmark]] = field(repr=False, default_factory=dict)


# ---------------------------------------------------------------------------
# Landmark geometry
# ---------------------------------------------------------------------------

def draw_landmarks(rng: np.random.Generator, cfg: SyntheticWorldConfig) -> list[Landmark]:
    out = []
    for _ in range(cfg.landmarks_per_location):
        bearing = float(rng.uniform(0.0, 2.0 * math.pi))
        rng_m = float(rng.uniform(cfg.min_landmark_range, cfg.max_landmark_range))
        color = tuple(int(c) for c in rng.integers(0, 256, size=3))
        size = float(rng.uniform(*cfg.landmark_size))
        height = float(rng.uniform(*cfg.landmark_height))
        out.append(Landmark(bearing, rng_m, color, size, height))
    return out


def rotate_landmarks(landmarks: list[Landmark], angle: float) -> list[Landmark]:
    """Turn the whole scene clockwise by `angle` radians about the observer."""
    return [
        Landmark((lm.bearing + angle) % (2.0 * math.pi), lm.range_m, lm.color, lm.size_m, lm.height_m)
        for lm in landmarks
    ]


def landmark_overhead_center(lm: Landmark, cfg: SyntheticWorldConfig) -> tuple[float, float]:
    """(x, y) pixel centre of a landmark's disk on the overhead tile."""
    cx = (cfg.overhead_width - 1) / 2.0
    cy = (cfg.overhead_height - 1) / 2.0
    r_px = lm.range_m / cfg.meters_per_pixel
    return cx + math.sin(lm.bearing) * r_px, cy - math.cos(lm.bearing) * r_px


def landmark_panorama_column(lm: Landmark, cfg: SyntheticWorldConfig) -> float:
    return bearing_to_column(lm.bearing, cfg.panorama_width)


def _altitude_to_row(phi: float, height: int) -> float:
    return (math.pi / 2.0 - phi) * height / math.pi - 0.5


def landmark_panorama_box(lm: Landmark, cfg: SyntheticWorldConfig) -> tuple[int, int, int, int]:
    """
    (x0, x1, y0, y1), inclusive, of a landmark's rectangle on the panorama.
    x may run past the image edges; callers wrap columns modulo the width.
    """
    w, h = cfg.panorama_width, cfg.panorama_height
    xc = landmark_panorama_column(lm, cfg)
    angular_w = 2.0 * math.atan2(lm.size_m / 2.0, lm.range_m)
    half_px = max(0.5, angular_w * w / (2.0 * math.pi) / 2.0)
    x0 = int(math.floor(xc - half_px + 0.5))
    x1 = max(x0, int(math.floor(xc + half_px - 0.5)))

    top = math.atan2(lm.height_m - cfg.camera_height, lm.range_m)
    bottom = -math.atan2(cfg.camera_height, lm.range_m)
    y0 = max(0, int(round(_altitude_to_row(top, h))))
    y1 = min(h - 1, int(round(_altitude_to_row(bottom, h))))
    return x0, x1, y0, max(y0, y1)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _add_noise(img: np.ndarray, rng: Optional[np.random.Generator], level: float) -> np.ndarray:
    if rng is None or level <= 0:
        return img
    noisy = img.astype(np.float64) + rng.normal(0.0, level * 64.0, size=img.shape)
    return np.clip(np.rint(noisy), 0, 255).astype(np.uint8)


def render_overhead(
    landmarks: list[Landmark],
    cfg: SyntheticWorldConfig,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """North-up H x W x 3 RGB uint8 tile with one filled disk per landmark."""
    img = np.empty((cfg.overhead_height, cfg.overhead_width, 3), dtype=np.uint8)
    img[:] = TERRAIN_RGB
    # cv2 takes fixed-point centres: 4 fractional bits.
    frac = 16
    for lm in landmarks:
        x, y = landmark_overhead_center(lm, cfg)
        radius = max(1.0, lm.size_m / 2.0 / cfg.meters_per_pixel)
        cv2.circle(
            img,
            (int(round(x * frac)), int(round(y * frac))),
            int(round(radius * frac)),
            lm.color,
            thickness=-1,
            lineType=cv2.LINE_8,
            shift=4,
        )
    return _add_noise(img, rng, cfg.noise_level)


def render_panorama(
    landmarks: list[Landmark],
    cfg: SyntheticWorldConfig,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """
    Equirectangular H x W x 3 RGB uint8 panorama; far landmarks drawn first.

    A rectangle crossing the back seam (bearing pi) wraps to both image edges
    and is a single blob only when column 0 and column W-1 count as adjacent.
    """
    w, h = cfg.panorama_width, cfg.panorama_height
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[: h // 2] = SKY_RGB
    img[h // 2:] = GROUND_RGB
    for lm in sorted(landmarks, key=lambda m: -m.range_m):
        x0, x1, y0, y1 = landmark_panorama_box(lm, cfg)
        cols = np.arange(x0, x1 + 1) % w
        img[y0:y1 + 1, cols] = lm.color
    return _add_noise(img, rng, cfg.noise_level)


def _grid_positions(cfg: SyntheticWorldConfig) -> list[tuple[float, float]]:
    per_row = max(1, math.ceil(math.sqrt(cfg.n_locations)))
    positions = []
    for i in range(cfg.n_locations):
        row, col = divmod(i, per_row)
        positions.append(offset_position(
            cfg.origin[0], cfg.origin[1], row * cfg.grid_spacing, col * cfg.grid_spacing,
        ))
    return positions


def _write_png(path: str, rgb: np.ndarray) -> None:
    if not cv2.imwrite(path, cv2.cvtColor(rgb, cv2.COLOR_RGB2BGR)):
        raise DataIOError(f"could not write image: {path}")


def generate_synthetic_world(
    cfg: SyntheticWorldConfig,
    out_dir: str,
    progress_cb: Optional[Callable[[int], None]] = None,
) -> SyntheticWorld:
    """
    Render every location to out_dir/ground and out_dir/satellite, then write
    manifest.csv and world.json (landmark bookkeeping). Same config, same bytes.
    """
    try:
        os.makedirs(os.path.join(out_dir, "ground"), exist_ok=True)
        os.makedirs(os.path.join(out_dir, "satellite"), exist_ok=True)
    except OSError as e:
        raise DataIOError(f"cannot create dataset directory {out_dir}: {e}") from None

    test_ids = set(
        int(i) for i in np.random.default_rng(cfg.seed).permutation(cfg.n_locations)[: cfg.n_test]
    )
    positions = _grid_positions(cfg)
    records: list[PairRecord] = []
    landmarks: dict[str, list[Landmark]] = {}

    for i in range(cfg.n_locations):
        rec_id = f"loc{i:05d}"
        rng = np.random.default_rng([cfg.seed, i])
        scene = draw_landmarks(rng, cfg)
        ground_rel = f"ground/{rec_id}.png"
        satellite_rel = f"satellite/{rec_id}.png"
        _write_png(os.path.join(out_dir, ground_rel), render_panorama(scene, cfg, rng))
        _write_png(os.path.join(out_dir, satellite_rel), render_overhead(scene, cfg, rng))
        lat, lon = positions[i]
        records.append(PairRecord(
            rec_id, ground_rel, satellite_rel, round(lat, 9), round(lon, 9),
            "test" if i in test_ids else "train", base_dir=os.path.abspath(out_dir),
        ))
        landmarks[rec_id] = scene
        if progress_cb:
            progress_cb(1)

    manifest_path = os.path.join(out_dir, "manifest.csv")
    try:
        write_manifest(records, manifest_path)
        with open(os.path.join(out_dir, "world.json"), "w", encoding="utf-8") as f:
            json.dump(
                {
                    "config": asdict(cfg),
                    "landmarks": {k: [asdict(lm) for lm in v] for k, v in landmarks.items()},
                },
                f,
                indent=1,
                sort_keys=True,
            )
    except OSError as e:
        raise DataIOError(f"cannot write dataset files in {out_dir}: {e}") from None

    return SyntheticWorld(os.path.abspath(out_dir), manifest_path, records, landmarks)
