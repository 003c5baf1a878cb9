from __future__ import annotations

import asyncio
import csv
import os
from dataclasses import dataclass, field
from typing import AsyncIterator, Optional, Sequence

import cv2
import numpy as np

from .errors import DataIOError, ManifestParseError, ValidationError
from .geometry import circular_shift_panorama

MANIFEST_HEADER = ["id", "ground", "satellite", "lat", "lon", "split"]
SPLITS = ("train", "test")


@dataclass
class PairRecord:
    id: str
    ground_path: str
    satellite_path: str
    lat: Optional[float] = None
    lon: Optional[float] = None
    split: str = "train"
    # Directory the manifest lives in; relative paths are resolved against it.
    base_dir: str = field(default="", compare=False, repr=False)

    @property
    def ground_file(self) -> str:
        return os.path.join(self.base_dir, self.ground_path)

    @property
    def satellite_file(self) -> str:
        return os.path.join(self.base_dir, self.satellite_path)

    @property
    def position(self) -> Optional[tuple[float, float]]:
        if self.lat is None or self.lon is None:
            return None
        return (self.lat, self.lon)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

def _parse_coordinate(text: str, name: str, line: int) -> Optional[float]:
    text = text.strip()
    if not text:
        return None
    try:
        return float(text)
    except ValueError:
        raise ManifestParseError(f"{name} is not a number: {text!r}", line) from None


def _parse_row(row: list[str], line: int, base_dir: str) -> PairRecord:
    if len(row) != len(MANIFEST_HEADER):
        raise ManifestParseError(
            f"expected {len(MANIFEST_HEADER)} fields, got {len(row)}", line
        )
    rec_id, ground, satellite, lat_s, lon_s, split = row
    if not rec_id:
        raise ManifestParseError("empty id", line)
    lat = _parse_coordinate(lat_s, "lat", line)
    lon = _parse_coordinate(lon_s, "lon", line)
    if (lat is None) != (lon is None):
        raise ValidationError(f"line {line}: lat and lon must be given together ({rec_id})")
    if lat is not None and not -90.0 <= lat <= 90.0:
        raise ValidationError(f"line {line}: lat {lat} out of range for {rec_id}")
    if lon is not None and not -180.0 <= lon <= 180.0:
        raise ValidationError(f"line {line}: lon {lon} out of range for {rec_id}")
    if split not in SPLITS:
        raise ValidationError(f"line {line}: split must be train or test, got {split!r}")
    return PairRecord(rec_id, ground, satellite, lat, lon, split, base_dir=base_dir)


def load_manifest(path: str, check_paths: bool = True) -> list[PairRecord]:
    """
    Read a pair manifest (CSV, header id,ground,satellite,lat,lon,split).
    Empty lat/lon cells are allowed; ids must be unique.
    """
    base_dir = os.path.dirname(os.path.abspath(path))
    records: list[PairRecord] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader, None)
            if header != MANIFEST_HEADER:
                raise ManifestParseError(
                    f"header must be {','.join(MANIFEST_HEADER)}, got {header}", 1
                )
            for row in reader:
                if not row:
                    continue
                rec = _parse_row(row, reader.line_num, base_dir)
                if rec.id in seen:
                    raise ValidationError(f"line {reader.line_num}: duplicate id {rec.id!r}")
                seen.add(rec.id)
                records.append(rec)
        except csv.Error as e:
            raise ManifestParseError(str(e), reader.line_num) from None

    if check_paths:
        for rec in records:
            for p in (rec.ground_file, rec.satellite_file):
                if not os.path.isfile(p):
                    raise DataIOError(f"manifest {path}: missing image for {rec.id}: {p}")
    return records


def _fmt_coordinate(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def write_manifest(records: Sequence[PairRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for r in records:
            writer.writerow([
                r.id, r.ground_path, r.satellite_path,
                _fmt_coordinate(r.lat), _fmt_coordinate(r.lon), r.split,
            ])


def split_records(records: Sequence[PairRecord], split: str) -> list[PairRecord]:
    if split == "all":
        return list(records)
    if split not in SPLITS:
        raise ValidationError(f"unknown split: {split!r}")
    return [r for r in records if r.split == split]


# ---------------------------------------------------------------------------
# Images
# ---------------------------------------------------------------------------

def load_image(path: str, target_h: int, target_w: int) -> np.ndarray:
    """Decode a PNG/JPEG to an H x W x 3 RGB float32 buffer in [-1, 1]."""
    if not os.path.isfile(path):
        raise DataIOError(f"image not found: {path}")
    bgr = cv2.imread(path, cv2.IMREAD_COLOR)
    if bgr is None:
        raise DataIOError(f"could not decode image: {path}")
    if bgr.shape[:2] != (target_h, target_w):
        bgr = cv2.resize(bgr, (target_w, target_h), interpolation=cv2.INTER_LINEAR)
    rgb = cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)
    return (rgb.astype(np.float32) * np.float32(2.0 / 255.0) - np.float32(1.0))


async def load_images(
    paths: Sequence[str],
    target_h: int,
    target_w: int,
    concurrency: int = 8,
) -> list[np.ndarray]:
    """
    Decode many images on worker threads, at most `concurrency` at a time.
    Results come back in the order of `paths`.
    """
    sem = asyncio.Semaphore(max(1, concurrency))

    async def load_one(path: str) -> np.ndarray:
        async with sem:
            return await asyncio.to_thread(load_image, path, target_h, target_w)

    return list(await asyncio.gather(*[load_one(p) for p in paths]))


@dataclass
class PairLoader:
    """Loads ground/satellite images at fixed resolutions, caching decoded buffers."""

    ground_hw: tuple[int, int]
    satellite_hw: tuple[int, int]
    concurrency: int = 8
    cache: bool = True
    _cache: dict[tuple[str, tuple[int, int]], np.ndarray] = field(default_factory=dict, repr=False)

    async def _load(self, paths: Sequence[str], hw: tuple[int, int]) -> list[np.ndarray]:
        missing = [p for p in dict.fromkeys(paths) if (p, hw) not in self._cache]
        loaded = await load_images(missing, hw[0], hw[1], self.concurrency)
        fresh = dict(zip(missing, loaded))
        if self.cache:
            for p, img in fresh.items():
                self._cache[(p, hw)] = img
        return [self._cache[(p, hw)] if (p, hw) in self._cache else fresh[p] for p in paths]

    async def ground(self, records: Sequence[PairRecord]) -> list[np.ndarray]:
        return await self._load([r.ground_file for r in records], self.ground_hw)

    async def satellite(self, records: Sequence[PairRecord]) -> list[np.ndarray]:
        return await self._load([r.satellite_file for r in records], self.satellite_hw)


def to_chw_batch(images: Sequence[np.ndarray]) -> np.ndarray:
    """Stack H x W x 3 buffers into a B x 3 x H x W float32 array."""
    return np.ascontiguousarray(np.stack(images).transpose(0, 3, 1, 2), dtype=np.float32)


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BatchPlan:
    epoch: int
    indices: tuple[int, ...]
    shifts: tuple[int, ...]   # per-sample panorama shift in columns (0 = none)


@dataclass
class PairBatch:
    ids: list[str]
    ground: np.ndarray        # B x 3 x H x W
    satellite: np.ndarray     # B x 3 x H x W
    shifts: list[int]
    epoch: int


def plan_epoch(
    n_records: int,
    batch_size: int,
    seed: int,
    epoch: int,
    panorama_width: int,
    augment: bool,
    shuffle: bool = True,
    drop_last: bool = True,
) -> list[BatchPlan]:
    """
    Deterministic batch schedule for one epoch: a seeded shuffle and, with
    augmentation, one uniform column shift in [0, W) per panorama.
    """
    if batch_size < 1:
        raise ValidationError(f"batch size must be positive, got {batch_size}")
    rng = np.random.default_rng([seed, epoch])
    order = rng.permutation(n_records) if shuffle else np.arange(n_records)
    plans: list[BatchPlan] = []
    for start in range(0, n_records, batch_size):
        idx = order[start:start + batch_size]
        if drop_last and len(idx) < batch_size:
            break
        if augment:
            shifts = tuple(int(s) for s in rng.integers(0, panorama_width, size=len(idx)))
        else:
            shifts = (0,) * len(idx)
        plans.append(BatchPlan(epoch, tuple(int(i) for i in idx), shifts))
    return plans


async def batch_iterator(
    records: Sequence[PairRecord],
    batch_size: int,
    seed: int,
    augment: bool,
    loader: PairLoader,
    epochs: Optional[int] = None,
    training: bool = True,
    skip: int = 0,
) -> AsyncIterator[PairBatch]:
    """
    Stream batches of matched pairs.

    Training mode shuffles per epoch and drops the last short batch; otherwise the
    records come in manifest order and the last batch may be short. The first
    `skip` batches of the schedule are passed over without loading any image.
    epochs=None keeps cycling (training) and is read as a single pass otherwise.
    """
    if training and batch_size < 2:
        raise ValidationError(f"training needs batch size >= 2, got {batch_size}")
    if epochs is None and not training:
        epochs = 1
    width = loader.ground_hw[1]
    epoch = 0
    produced = 0
    while epochs is None or epoch < epochs:
        plans = plan_epoch(
            len(records), batch_size, seed, epoch, width,
            augment=augment and training, shuffle=training, drop_last=training,
        )
        if not plans:
            return
        for plan in plans:
            produced += 1
            if produced <= skip:
                continue
            chosen = [records[i] for i in plan.indices]
            ground = await loader.ground(chosen)
            satellite = await loader.satellite(chosen)
            ground = [
                circular_shift_panorama(img, s) if s else img
                for img, s in zip(ground, plan.shifts)
            ]
            yield PairBatch(
                ids=[r.id for r in chosen],
                ground=to_chw_batch(ground),
                satellite=to_chw_batch(satellite),
                shifts=list(plan.shifts),
                epoch=epoch,
            )
        epoch += 1
