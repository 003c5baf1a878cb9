"""
Scheme ablation: train, embed and score every (scheme, seed) pair on one
manifest, then compare per-scheme medians.

Three checks are evaluated on the medians:

    uv_gain       Scheme I recall@1 minus the RGB baseline's, at least 10 points
    scheme_gap    |Scheme II - Scheme I| recall@1, at most 5 points
    sweep_rise    largest step-to-step recall@1 increase along Scheme I's
                  north-error sweep, at most 2 points
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .config import RunConfig
from .dataset import PairRecord, split_records
from .errors import ValidationError
from .evaluation import build_index, north_noise_sweep, recall_at_k
from .metrics import NoiseSweepReport, RecallReport
from .trainer import EMBED_BATCH, embed_images, embed_records, make_loader, train

ABLATION_SCHEMES = ("rgb-baseline", "I", "II")
ABLATION_SEEDS = (1, 2, 3)

UV_GAIN_MIN = 0.10
SCHEME_GAP_MAX = 0.05
SWEEP_RISE_MAX = 0.02


@dataclass
class AblationRun:
    scheme: str
    seed: int
    recall: RecallReport
    sweep: NoiseSweepReport
    first_loss: Optional[float] = None
    last_loss: Optional[float] = None
    run_dir: str = ""


@dataclass
class AblationCheck:
    name: str
    observed: Optional[float]
    threshold: float
    # None when a scheme the check compares was not run
    passed: Optional[bool]


@dataclass
class AblationReport:
    runs: list[AblationRun] = field(default_factory=list)

    def schemes(self) -> list[str]:
        return list(dict.fromkeys(r.scheme for r in self.runs))

    def runs_of(self, scheme: str) -> list[AblationRun]:
        return [r for r in self.runs if r.scheme == scheme]

    @property
    def ks(self) -> list[int]:
        return self.runs[0].recall.ks if self.runs else []

    @property
    def levels(self) -> list[float]:
        return [lvl.level_deg for lvl in self.runs[0].sweep.levels] if self.runs else []

    def median_recall(self, scheme: str, k: Optional[int] = 1) -> Optional[float]:
        """Median recall@k over seeds; k=None is recall at top 1%."""
        runs = self.runs_of(scheme)
        if not runs:
            return None
        values = [r.recall.recall_top1percent if k is None else _recall_at(r.recall, k) for r in runs]
        return float(np.median(values))

    def median_sweep(self, scheme: str, k: int = 1) -> list[tuple[float, float]]:
        runs = self.runs_of(scheme)
        if not runs:
            return []
        return [
            (level, float(np.median([_recall_at(r.sweep.levels[i].recall, k) for r in runs])))
            for i, level in enumerate(self.levels)
        ]

    def checks(self) -> list[AblationCheck]:
        base, one, two = (self.median_recall(s) for s in ABLATION_SCHEMES)
        gain = None if one is None or base is None else one - base
        gap = None if one is None or two is None else abs(two - one)
        sweep = [v for _, v in self.median_sweep("I")]
        rise = max([b - a for a, b in zip(sweep, sweep[1:])], default=0.0) if sweep else None
        return [
            _check("uv_gain", gain, UV_GAIN_MIN, at_least=True),
            _check("scheme_gap", gap, SCHEME_GAP_MAX, at_least=False),
            _check("sweep_rise", rise, SWEEP_RISE_MAX, at_least=False),
        ]


def _recall_at(report: RecallReport, k: int) -> float:
    if k in report.recall_at:
        return report.recall_at[k]
    return report.curve[min(k, len(report.curve)) - 1]


def _check(name: str, observed: Optional[float], threshold: float, at_least: bool) -> AblationCheck:
    if observed is None:
        return AblationCheck(name, None, threshold, None)
    # absorbs float rounding in recall differences
    slack = 1e-9
    passed = observed >= threshold - slack if at_least else observed <= threshold + slack
    return AblationCheck(name, observed, threshold, passed)


def run_config(cfg: RunConfig, scheme: str, seed: int) -> RunConfig:
    """cfg for one cell of the grid; each run gets its own output directory."""
    run_dir = os.path.join(cfg.output_dir, f"{scheme}-seed{seed}")
    return replace(
        cfg, scheme=scheme, seed=seed, output_dir=run_dir,
        checkpoint=os.path.join(run_dir, "model.ckpt"),
    ).validate()


async def run_ablation(
    cfg: RunConfig,
    records: Sequence[PairRecord],
    schemes: Sequence[str] = ABLATION_SCHEMES,
    seeds: Sequence[int] = ABLATION_SEEDS,
    run_cb: Optional[Callable[[AblationRun], None]] = None,
) -> AblationReport:
    """
    Train each (scheme, seed) from scratch with the rest of cfg unchanged,
    then score recall@K and the north-error sweep on the test split.
    """
    if not schemes or not seeds:
        raise ValidationError("ablation needs at least one scheme and one seed")
    test = split_records(records, "test")
    if not test:
        raise ValidationError("ablation needs test pairs in the manifest")
    ids = [r.id for r in test]
    positions = [r.position for r in test] if all(r.position is not None for r in test) else None
    loader = make_loader(cfg)
    panoramas = await loader.ground(test)

    report = AblationReport()
    for scheme in schemes:
        for seed in seeds:
            rcfg = run_config(cfg, scheme, seed)
            result = await train(rcfg, records)
            model = result.model
            ground = await embed_records(model, test, "ground", loader)
            satellite = await embed_records(model, test, "satellite", loader)
            index = build_index(ids, satellite, positions)
            recall = recall_at_k(index, ground, ids, rcfg.recall_ks)
            sweep = north_noise_sweep(
                lambda images: embed_images(model, images, "ground", EMBED_BATCH),
                panoramas, ids, index,
                levels=rcfg.sweep_levels, seed=seed, ks=rcfg.recall_ks,
            )
            run = AblationRun(
                scheme, seed, recall, sweep,
                result.summary.first_loss, result.summary.last_loss, rcfg.output_dir,
            )
            report.runs.append(run)
            if run_cb:
                run_cb(run)
    return report
