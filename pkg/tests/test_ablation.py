import asyncio
import csv
import json
import os

import numpy as np
import pytest

from src.ablation import AblationReport, AblationRun, run_ablation, run_config
from src.config import RunConfig, apply_overrides
from src.errors import ValidationError
from src.metrics import NoiseSweepReport, RecallReport
from src.reporter import export_ablation

from .conftest import TINY_SCHEDULE


def _recall(hits, n=10):
    """RecallReport over n queries: `hits` found at rank 0, the rest at rank 3."""
    ranks = np.array([0] * hits + [3] * (n - hits))
    return RecallReport.from_ranks(ranks, n, (1, 5))


def _run(scheme, seed, hits, sweep_hits=(5, 5, 5)):
    sweep = NoiseSweepReport(seed=seed)
    for level, h in zip((0.0, 10.0, 20.0), sweep_hits):
        sweep.add(level, _recall(h))
    return AblationRun(scheme, seed, _recall(hits), sweep, 0.7, 0.3)


def _checks(report):
    return {c.name: c for c in report.checks()}


def test_medians_and_passing_checks():
    report = AblationReport([
        _run("rgb-baseline", 1, 2), _run("rgb-baseline", 2, 3), _run("rgb-baseline", 3, 1),
        _run("I", 1, 4, (5, 4, 4)), _run("I", 2, 5, (5, 5, 3)), _run("I", 3, 6, (6, 4, 4)),
        _run("II", 1, 5), _run("II", 2, 5), _run("II", 3, 4),
    ])
    assert report.schemes() == ["rgb-baseline", "I", "II"]
    assert report.ks == [1, 5]
    assert report.levels == [0.0, 10.0, 20.0]
    assert report.median_recall("rgb-baseline") == pytest.approx(0.2)
    assert report.median_recall("I") == pytest.approx(0.5)
    assert report.median_recall("I", 5) == 1.0
    assert report.median_sweep("I") == [(0.0, pytest.approx(0.5)), (10.0, pytest.approx(0.4)), (20.0, pytest.approx(0.4))]
    checks = _checks(report)
    assert checks["uv_gain"].observed == pytest.approx(0.3)
    assert checks["scheme_gap"].observed == pytest.approx(0.0)
    assert checks["sweep_rise"].observed == pytest.approx(0.0)
    assert all(c.passed for c in checks.values())


def test_failing_and_boundary_checks():
    report = AblationReport([
        _run("rgb-baseline", 1, 2),
        _run("I", 1, 3, (3, 6, 2)),
        _run("II", 1, 4),
    ])
    checks = _checks(report)
    # exactly 10 points is enough
    assert checks["uv_gain"].passed
    assert checks["scheme_gap"].observed == pytest.approx(0.1)
    assert not checks["scheme_gap"].passed
    assert checks["sweep_rise"].observed == pytest.approx(0.3)
    assert not checks["sweep_rise"].passed


def test_checks_skip_schemes_that_did_not_run():
    checks = _checks(AblationReport([_run("II", 1, 4)]))
    assert all(c.passed is None and c.observed is None for c in checks.values())


def test_export(tmp_path):
    report = AblationReport([_run("rgb-baseline", 1, 2), _run("I", 1, 5), _run("I", 2, 7)])
    written = export_ablation(str(tmp_path), report)
    assert [os.path.basename(p) for p in written] == [
        "ablation_runs.csv", "ablation_median.csv", "ablation_sweep.csv", "ablation.json",
    ]
    with open(written[0], newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["scheme", "seed", "r@1", "r@5", "r@top1%", "first_loss", "last_loss"]
    assert len(rows) == 4
    with open(written[1], newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert [(r[0], r[1]) for r in rows[1:]] == [("rgb-baseline", "1"), ("I", "2")]
    assert [float(v) for v in rows[2][2:]] == pytest.approx([0.6, 1.0, 0.6])
    with open(written[2], newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert len(rows) == 1 + 3 * 3 + 2 * 3
    assert rows[-1] == ["I", "median", "20", "0.5"]
    with open(written[3], encoding="utf-8") as f:
        data = json.load(f)
    assert data["median"]["I"]["recall_at"]["1"] == pytest.approx(0.6)
    assert {c["name"] for c in data["checks"]} == {"uv_gain", "scheme_gap", "sweep_rise"}


def _cfg(tiny_world, out, **overrides):
    values = dict(
        manifest=tiny_world.manifest_path,
        data_dir=tiny_world.root,
        output_dir=str(out),
        channel_schedule=list(TINY_SCHEDULE),
        ground_height=16,
        ground_width=32,
        satellite_height=32,
        satellite_width=32,
        batch_size=4,
        lr=1e-3,
        steps=2,
        checkpoint_every=0,
        workers=2,
        sweep_levels=[0, 10],
    )
    values.update(overrides)
    return apply_overrides(RunConfig(), values).validate()


def test_run_config_isolates_each_run(tmp_path):
    cfg = apply_overrides(RunConfig(), {"output_dir": str(tmp_path)})
    run = run_config(cfg, "II", 7)
    assert (run.scheme, run.seed) == ("II", 7)
    assert run.output_dir == os.path.join(str(tmp_path), "II-seed7")
    assert run.checkpoint == os.path.join(run.output_dir, "model.ckpt")
    assert cfg.scheme == "I" and cfg.seed == 1
    with pytest.raises(ValidationError):
        run_config(cfg, "III", 1)


def test_run_ablation_on_tiny_world(tiny_world, tmp_path):
    seen = []
    report = asyncio.run(run_ablation(
        _cfg(tiny_world, tmp_path), tiny_world.records,
        schemes=("rgb-baseline", "I"), seeds=(1, 2), run_cb=seen.append,
    ))
    assert [(r.scheme, r.seed) for r in seen] == [("rgb-baseline", 1), ("rgb-baseline", 2), ("I", 1), ("I", 2)]
    assert report.runs == seen
    for run in report.runs:
        assert os.path.exists(os.path.join(run.run_dir, "model.ckpt"))
        assert os.path.exists(os.path.join(run.run_dir, "loss_log.csv"))
        assert run.recall.n_queries == run.recall.n_database == 4
        assert [lvl.level_deg for lvl in run.sweep.levels] == [0.0, 10.0]
        assert np.isfinite(run.first_loss) and np.isfinite(run.last_loss)
    checks = _checks(report)
    assert checks["uv_gain"].observed is not None
    assert checks["scheme_gap"].passed is None


def test_run_ablation_rejects_empty_grid(tiny_world, tmp_path):
    with pytest.raises(ValidationError):
        asyncio.run(run_ablation(_cfg(tiny_world, tmp_path), tiny_world.records, seeds=()))
