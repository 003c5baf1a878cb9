from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import torch

from .autonn import adam_step, adam_step_count, finite_or_raise, make_optimizer
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .dataset import PairLoader, PairRecord, batch_iterator, split_records, to_chw_batch
from .errors import ValidationError
from .geometry import ground_orientation_map, satellite_orientation_map
from .metrics import StepRecord, TrainingSummary
from .model import BranchConfig, SiameseModel, count_parameters, embed, parameter_bytes
from .objective import LossParams, TripletBatch, batch_loss

LOSS_LOG_NAME = "loss_log.csv"
LOSS_TIMING_NAME = "loss_timing.csv"
EMBED_BATCH = 32


def seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed % (2 ** 32))
    torch.use_deterministic_algorithms(True, warn_only=True)


def build_model(cfg: RunConfig) -> SiameseModel:
    branch = BranchConfig.from_scheme(cfg.scheme, tuple(cfg.channel_schedule))
    return SiameseModel(branch, gem_p=cfg.gem_p, seed=cfg.seed)


def make_loader(cfg: RunConfig, cache: bool = True) -> PairLoader:
    return PairLoader(
        ground_hw=(cfg.ground_height, cfg.ground_width),
        satellite_hw=(cfg.satellite_height, cfg.satellite_width),
        concurrency=cfg.workers,
        cache=cache,
    )


def orientation_tensor(view: str, height: int, width: int, batch: int) -> torch.Tensor:
    """B x 2 x H x W U-V tensor for one view; the same map for every sample."""
    if view == "ground":
        uv = ground_orientation_map(width, height)
    else:
        uv = satellite_orientation_map(width, height)
    return torch.from_numpy(uv.stack(np.float32)).unsqueeze(0).expand(batch, -1, -1, -1)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    model: SiameseModel
    summary: TrainingSummary
    checkpoint_path: str
    loss_log_path: str


class _LossLog:
    """step,epoch,loss rows (deterministic) plus a sibling step,wall_time file."""

    def __init__(self, directory: str, append: bool):
        mode = "a" if append else "w"
        self.path = os.path.join(directory, LOSS_LOG_NAME)
        self._log = open(self.path, mode, newline="", encoding="utf-8")
        self._timing = open(os.path.join(directory, LOSS_TIMING_NAME), mode, newline="", encoding="utf-8")
        self._log_w = csv.writer(self._log, lineterminator="\n")
        self._timing_w = csv.writer(self._timing, lineterminator="\n")
        if not append or self._log.tell() == 0:
            self._log_w.writerow(["step", "epoch", "loss"])
            self._timing_w.writerow(["step", "wall_time"])

    def write(self, rec: StepRecord) -> None:
        self._log_w.writerow([rec.step, rec.epoch, repr(rec.loss)])
        self._timing_w.writerow([rec.step, f"{rec.wall_time:.6f}"])

    def close(self) -> None:
        self._log.close()
        self._timing.close()


async def train(
    cfg: RunConfig,
    records: Sequence[PairRecord],
    resume: Optional[str] = None,
    progress_cb: Optional[Callable[[int], None]] = None,
    step_cb: Optional[Callable[[StepRecord], None]] = None,
    start_cb: Optional[Callable[[SiameseModel, int], None]] = None,
) -> TrainResult:
    """
    Optimise a Siamese model on the train split of `records`.

    Every step embeds a batch of matched pairs through both branches (train-mode
    BN), scores all 2B(B-1) exhaustive triplets and takes one Adam step. The
    batch schedule depends only on (seed, epoch), so a resumed run skips the
    batches already consumed and continues the same stream.
    """
    train_records = split_records(records, "train")
    if len(train_records) < cfg.batch_size:
        raise ValidationError(
            f"need at least batch_size={cfg.batch_size} train pairs, manifest has {len(train_records)}"
        )
    seed_everything(cfg.seed)
    os.makedirs(cfg.output_dir, exist_ok=True)
    os.makedirs(os.path.dirname(os.path.abspath(cfg.checkpoint)), exist_ok=True)

    if resume:
        model, optimizer, _ = load_checkpoint(resume)
        for group in optimizer.param_groups:
            group["lr"] = cfg.lr
    else:
        model = build_model(cfg)
        optimizer = make_optimizer(model.parameters(), lr=cfg.lr)
    start_step = adam_step_count(optimizer)
    if start_cb:
        start_cb(model, start_step)

    params = [p for p in model.parameters() if p.requires_grad]
    loss_params = LossParams(alpha=cfg.alpha)
    summary = TrainingSummary(parameters=count_parameters(model), parameter_bytes=parameter_bytes(model))
    loader = make_loader(cfg)
    B = cfg.batch_size
    ground_uv = orientation_tensor("ground", cfg.ground_height, cfg.ground_width, B)
    satellite_uv = orientation_tensor("satellite", cfg.satellite_height, cfg.satellite_width, B)

    log = _LossLog(cfg.output_dir, append=bool(resume))
    step = start_step
    started = time.perf_counter()
    model.train()
    try:
        async for batch in batch_iterator(
            train_records, B, cfg.seed, cfg.augment, loader,
            epochs=cfg.epochs or None, training=True, skip=start_step,
        ):
            if cfg.steps and step >= cfg.steps:
                break
            g = embed(model, torch.from_numpy(batch.ground), ground_uv, "ground")
            s = embed(model, torch.from_numpy(batch.satellite), satellite_uv, "satellite")
            loss = batch_loss(TripletBatch(g, s), loss_params)
            value = finite_or_raise(float(loss.item()), f"loss at step {step + 1}")
            grads = torch.autograd.grad(loss, params)
            adam_step(params, grads, optimizer)
            step += 1

            rec = StepRecord(step, batch.epoch, value, time.perf_counter() - started)
            summary.add(rec)
            log.write(rec)
            if step_cb:
                step_cb(rec)
            if progress_cb:
                progress_cb(1)
            if cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
                save_checkpoint(cfg.checkpoint, model, optimizer)
    finally:
        log.close()

    save_checkpoint(cfg.checkpoint, model, optimizer)
    return TrainResult(model, summary, cfg.checkpoint, log.path)


def planned_steps(cfg: RunConfig, n_train: int) -> int:
    """Number of optimiser steps a fresh run will take (for progress bars)."""
    per_epoch = n_train // cfg.batch_size
    by_epochs = per_epoch * cfg.epochs if cfg.epochs else None
    if cfg.steps and by_epochs is not None:
        return min(cfg.steps, by_epochs)
    return cfg.steps if cfg.steps else (by_epochs or 0)


# ---------------------------------------------------------------------------
# Embedding
# ---------------------------------------------------------------------------

def embed_images(
    model: SiameseModel,
    images: Sequence[np.ndarray],
    view: str,
    batch_size: int = EMBED_BATCH,
) -> np.ndarray:
    """Eval-mode descriptors for H x W x 3 images in [-1, 1]; N x D float32."""
    model.eval()
    out: list[np.ndarray] = []
    with torch.no_grad():
        for start in range(0, len(images), batch_size):
            chunk = images[start:start + batch_size]
            h, w = chunk[0].shape[:2]
            uv = orientation_tensor(view, h, w, len(chunk))
            x = torch.from_numpy(to_chw_batch(chunk))
            out.append(embed(model, x, uv, view).numpy().astype(np.float32))
    if not out:
        return np.zeros((0, model.cfg.descriptor_dim), dtype=np.float32)
    return np.concatenate(out, axis=0)


async def embed_records(
    model: SiameseModel,
    records: Sequence[PairRecord],
    side: str,
    loader: PairLoader,
    batch_size: int = EMBED_BATCH,
    progress_cb: Optional[Callable[[int], None]] = None,
) -> np.ndarray:
    if side not in ("ground", "satellite"):
        raise ValidationError(f"side must be ground or satellite, got {side!r}")
    parts: list[np.ndarray] = []
    for start in range(0, len(records), batch_size):
        chunk = records[start:start + batch_size]
        images = await (loader.ground(chunk) if side == "ground" else loader.satellite(chunk))
        parts.append(embed_images(model, images, side, batch_size))
        if progress_cb:
            progress_cb(len(chunk))
    if not parts:
        return np.zeros((0, model.cfg.descriptor_dim), dtype=np.float32)
    return np.concatenate(parts, axis=0)
