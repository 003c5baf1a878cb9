import asyncio
import csv
import math
import os

import numpy as np
import pytest

from src import trainer
from src.autonn import adam_step_count
from src.checkpoint import load_checkpoint
from src.config import RunConfig, apply_overrides
from src.dataset import load_image, split_records
from src.errors import ValidationError
from src.model import DEFAULT_SCHEDULE
from src.trainer import (
    LOSS_LOG_NAME,
    LOSS_TIMING_NAME,
    embed_images,
    embed_records,
    make_loader,
    planned_steps,
    train,
)

from .conftest import TINY_SCHEDULE


def _cfg(tiny_world, out, **overrides):
    values = dict(
        manifest=tiny_world.manifest_path,
        data_dir=tiny_world.root,
        output_dir=str(out),
        checkpoint=str(out / "ckpt" / "model.ckpt"),
        channel_schedule=list(TINY_SCHEDULE),
        ground_height=16,
        ground_width=32,
        satellite_height=32,
        satellite_width=32,
        batch_size=4,
        lr=1e-3,
        steps=4,
        checkpoint_every=2,
        workers=2,
    )
    values.update(overrides)
    return apply_overrides(RunConfig(), values).validate()


def _losses(path):
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["step", "epoch", "loss"]
    return [(int(s), int(e), float(v)) for s, e, v in rows[1:]]


def test_train_writes_logs_and_checkpoint(tiny_world, tmp_path):
    cfg = _cfg(tiny_world, tmp_path)
    seen = []
    result = asyncio.run(train(cfg, tiny_world.records, step_cb=seen.append))
    assert result.summary.steps == 4
    assert [r.step for r in seen] == [1, 2, 3, 4]
    assert all(np.isfinite(r.loss) and r.loss > 0 for r in seen)
    losses = _losses(result.loss_log_path)
    assert [(s, e) for s, e, _ in losses] == [(1, 0), (2, 0), (3, 1), (4, 1)]
    assert os.path.exists(tmp_path / LOSS_TIMING_NAME)
    _, optimizer, manifest = load_checkpoint(cfg.checkpoint)
    assert adam_step_count(optimizer) == 4
    assert manifest["scheme"] == "I"


def test_same_seed_same_loss_log(tiny_world, tmp_path):
    a = asyncio.run(train(_cfg(tiny_world, tmp_path / "a"), tiny_world.records))
    b = asyncio.run(train(_cfg(tiny_world, tmp_path / "b"), tiny_world.records))
    with open(a.loss_log_path, "rb") as fa, open(b.loss_log_path, "rb") as fb:
        assert fa.read() == fb.read()


def test_resume_continues_the_same_stream(tiny_world, tmp_path):
    full = asyncio.run(train(_cfg(tiny_world, tmp_path / "full"), tiny_world.records))
    part = _cfg(tiny_world, tmp_path / "part", steps=2)
    asyncio.run(train(part, tiny_world.records))
    starts = []
    resumed = asyncio.run(train(
        _cfg(tiny_world, tmp_path / "part"), tiny_world.records,
        resume=part.checkpoint, start_cb=lambda model, step: starts.append(step),
    ))
    assert starts == [2]
    expected = _losses(full.loss_log_path)
    got = _losses(resumed.loss_log_path)
    assert [(s, e) for s, e, _ in got] == [(s, e) for s, e, _ in expected]
    for (_, _, x), (_, _, y) in zip(got, expected):
        assert x == y


@pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
def test_first_loss_at_random_init_is_near_ln2(tiny_world, tmp_path, monkeypatch, seed):
    monkeypatch.setattr(trainer, "save_checkpoint", lambda *args, **kwargs: None)
    cfg = _cfg(
        tiny_world, tmp_path, seed=seed, steps=1, batch_size=8,
        channel_schedule=list(DEFAULT_SCHEDULE),
    )
    seen = []
    asyncio.run(train(cfg, tiny_world.records, step_cb=seen.append))
    assert len(seen) == 1
    assert seen[0].loss == pytest.approx(math.log(2.0), abs=0.1)


def test_loss_moving_average_does_not_rise(tiny_world, tmp_path):
    cfg = _cfg(tiny_world, tmp_path, steps=80, batch_size=8, lr=1e-4, augment=False, checkpoint_every=0)
    result = asyncio.run(train(cfg, tiny_world.records))
    averaged = result.summary.moving_average(50)
    assert len(averaged) == 31
    assert all(b <= a + 1e-6 for a, b in zip(averaged, averaged[1:]))
    assert averaged[-1] < averaged[0]


def test_epoch_bound(tiny_world, tmp_path):
    cfg = _cfg(tiny_world, tmp_path, steps=0, epochs=1)
    assert planned_steps(cfg, 8) == 2
    result = asyncio.run(train(cfg, tiny_world.records))
    assert result.summary.steps == 2


def test_too_few_train_pairs(tiny_world, tmp_path):
    cfg = _cfg(tiny_world, tmp_path, batch_size=20)
    with pytest.raises(ValidationError):
        asyncio.run(train(cfg, tiny_world.records))


def test_planned_steps():
    cfg = RunConfig(batch_size=4, steps=10, epochs=2)
    assert planned_steps(cfg, 12) == 6
    assert planned_steps(RunConfig(batch_size=4, steps=10, epochs=0), 12) == 10


def test_embeddings_are_unit_norm(tiny_world, tiny_model):
    test = split_records(tiny_world.records, "test")
    images = [load_image(r.satellite_file, 32, 32) for r in test]
    out = embed_images(tiny_model, images, "satellite", batch_size=3)
    assert out.shape == (len(test), tiny_model.cfg.descriptor_dim)
    assert out.dtype == np.float32
    assert np.allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-5)
    assert embed_images(tiny_model, [], "satellite").shape == (0, tiny_model.cfg.descriptor_dim)


def test_embed_records_matches_embed_images(tiny_world, tiny_model, tmp_path):
    cfg = _cfg(tiny_world, tmp_path)
    test = split_records(tiny_world.records, "test")
    from_records = asyncio.run(embed_records(tiny_model, test, "ground", make_loader(cfg), batch_size=3))
    images = [load_image(r.ground_file, 16, 32) for r in test]
    assert np.allclose(from_records, embed_images(tiny_model, images, "ground", batch_size=3), atol=1e-6)
    with pytest.raises(ValidationError):
        asyncio.run(embed_records(tiny_model, test, "aerial", make_loader(cfg)))
