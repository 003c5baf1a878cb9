from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError


def top1percent_k(n_database: int) -> int:
    """K used for 'recall at top 1%': ceil(0.01 * N), at least 1."""
    # integer ceil: 0.01 * N in floating point overshoots for some N (e.g. 700)
    return max(1, -(-n_database // 100))


@dataclass
class RecallReport:
    n_database: int
    n_queries: int
    k_top1percent: int
    ks: list[int]
    recall_at: dict[int, float] = field(default_factory=dict)
    recall_top1percent: float = 0.0
    # recall for K = 1..len(curve); feeds recall@K plots
    curve: list[float] = field(default_factory=list, repr=False)
    mean_query_ms: Optional[float] = None

    @classmethod
    def from_ranks(
        cls,
        ranks: np.ndarray,
        n_database: int,
        ks: Sequence[int] = (1, 5, 10),
        mean_query_ms: Optional[float] = None,
    ) -> "RecallReport":
        """
        ranks[q] is the 0-based position of query q's true match in its ranking.
        A query counts at K when rank < K.
        """
        ranks = np.asarray(ranks, dtype=np.int64)
        k1 = top1percent_k(n_database)
        n = len(ranks)
        depth = max([k1, *ks]) if ks else k1
        if n:
            hits = np.bincount(np.minimum(ranks, depth), minlength=depth + 1)[:depth]
            curve = (np.cumsum(hits) / n).tolist()
        else:
            curve = [0.0] * depth

        def at(k: int) -> float:
            return curve[min(k, depth) - 1] if k >= 1 else 0.0

        return cls(
            n_database=n_database,
            n_queries=n,
            k_top1percent=k1,
            ks=sorted(int(k) for k in ks),
            recall_at={int(k): at(int(k)) for k in sorted(ks)},
            recall_top1percent=at(k1),
            curve=curve,
            mean_query_ms=mean_query_ms,
        )

    def ordered(self) -> list[tuple[str, int, float]]:
        """(label, K, recall) rows sorted by K, top-1% included."""
        rows = [(f"r@{k}", k, v) for k, v in self.recall_at.items()]
        rows.append(("r@top1%", self.k_top1percent, self.recall_top1percent))
        return sorted(rows, key=lambda r: (r[1], r[0] == "r@top1%"))


@dataclass
class LocalizationReport:
    radius_m: float
    n_queries: int
    n_top: int
    recall: float = 0.0
    # recall for N_top = 1..len(curve)
    curve: list[float] = field(default_factory=list, repr=False)


@dataclass
class NoiseSweepLevel:
    level_deg: float
    recall: RecallReport


@dataclass
class NoiseSweepReport:
    levels: list[NoiseSweepLevel] = field(default_factory=list)
    seed: int = 0

    def add(self, level_deg: float, recall: RecallReport) -> None:
        if self.levels and level_deg < self.levels[-1].level_deg:
            raise InvalidArgumentError("noise levels must be added in ascending order")
        self.levels.append(NoiseSweepLevel(level_deg, recall))


@dataclass
class StepRecord:
    step: int
    epoch: int
    loss: float
    wall_time: float = 0.0


@dataclass
class TrainingSummary:
    steps: int = 0
    first_loss: Optional[float] = None
    last_loss: Optional[float] = None
    parameters: int = 0
    parameter_bytes: int = 0
    records: list[StepRecord] = field(default_factory=list, repr=False)

    def add(self, record: StepRecord) -> None:
        self.records.append(record)
        self.steps = record.step
        if self.first_loss is None:
            self.first_loss = record.loss
        self.last_loss = record.loss

    def moving_average(self, window: int = 50) -> list[float]:
        losses = np.array([r.loss for r in self.records], dtype=np.float64)
        if len(losses) < window:
            return [float(losses.mean())] if len(losses) else []
        kernel = np.ones(window) / window
        return np.convolve(losses, kernel, mode="valid").tolist()
