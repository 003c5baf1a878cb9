from __future__ import annotations

import struct
import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import FormatError, InvalidArgumentError, ValidationError
from .geo import haversine_many
from .geometry import circular_shift_panorama, degrees_to_columns
from .metrics import LocalizationReport, NoiseSweepReport, RecallReport, top1percent_k

INDEX_MAGIC = b"XVIEWIDX"
INDEX_VERSION = 1
_HEADER = struct.Struct("<8sIIII")   # magic, version, flags, N, D
_FLAG_POSITIONS = 1

NORM_TOLERANCE = 1e-5
# Query rows scored per pass; bounds the chunk x N distance buffer.
QUERY_CHUNK = 256
# Max float64 elements in one query x row x D difference block.
DIFF_BLOCK = 1 << 22


@dataclass
class EmbeddingIndex:
    ids: list[str]
    matrix: np.ndarray                      # N x D float32, unit-norm rows
    positions: Optional[np.ndarray] = None  # N x 2 (lat, lon) degrees

    def __post_init__(self) -> None:
        self._row_of = {rec_id: i for i, rec_id in enumerate(self.ids)}
        self.wide = self.matrix.astype(np.float64)

    @property
    def size(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def row_of(self, rec_id: str) -> int:
        try:
            return self._row_of[rec_id]
        except KeyError:
            raise ValidationError(f"id {rec_id!r} is not in the index") from None


def _check_norms(matrix: np.ndarray) -> None:
    if not len(matrix):
        return
    norms = np.linalg.norm(matrix.astype(np.float64), axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > NORM_TOLERANCE)
    if bad.size:
        raise ValidationError(
            f"{bad.size} index rows are not unit-norm (row {bad[0]} has norm {norms[bad[0]]:.8f})"
        )


def build_index(
    ids: Sequence[str],
    embeddings: np.ndarray,
    positions: Optional[np.ndarray] = None,
) -> EmbeddingIndex:
    matrix = np.ascontiguousarray(embeddings, dtype=np.float32)
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise ValidationError(
            f"embedding matrix {matrix.shape} does not match {len(ids)} ids"
        )
    seen: set[str] = set()
    for rec_id in ids:
        if rec_id in seen:
            raise ValidationError(f"duplicate id in index: {rec_id!r}")
        seen.add(rec_id)
    _check_norms(matrix)
    if positions is not None:
        positions = np.ascontiguousarray(positions, dtype=np.float64).reshape(-1, 2)
        if positions.shape[0] != len(ids):
            raise ValidationError(f"{positions.shape[0]} positions for {len(ids)} ids")
        if not np.isfinite(positions).all():
            raise ValidationError("index positions must all be present and finite")
    return EmbeddingIndex(list(ids), matrix, positions)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_index(index: EmbeddingIndex, path: str) -> None:
    """
    Layout (little-endian): magic, version, flags, N, D; then N length-prefixed
    UTF-8 ids; then N x D float32 rows; then N x 2 float64 (lat, lon) if flagged.
    """
    flags = _FLAG_POSITIONS if index.positions is not None else 0
    parts = [_HEADER.pack(INDEX_MAGIC, INDEX_VERSION, flags, index.size, index.dim)]
    for rec_id in index.ids:
        raw = rec_id.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
    parts.append(index.matrix.astype("<f4", copy=False).tobytes(order="C"))
    if index.positions is not None:
        parts.append(index.positions.astype("<f8", copy=False).tobytes(order="C"))
    with open(path, "wb") as f:
        f.write(b"".join(parts))


def load_index(path: str) -> EmbeddingIndex:
    with open(path, "rb") as f:
        data = f.read()
    try:
        magic, version, flags, n, d = _HEADER.unpack_from(data, 0)
    except struct.error:
        raise FormatError(f"{path}: too short for an index header") from None
    if magic != INDEX_MAGIC:
        raise FormatError(f"{path}: not an embedding index (bad magic)")
    if version != INDEX_VERSION:
        raise FormatError(f"{path}: unsupported index version {version}")

    offset = _HEADER.size
    ids: list[str] = []
    try:
        for _ in range(n):
            (length,) = struct.unpack_from("<I", data, offset)
            offset += 4
            raw = data[offset:offset + length]
            if len(raw) != length:
                raise FormatError(f"{path}: truncated id table")
            ids.append(raw.decode("utf-8"))
            offset += length
    except (struct.error, UnicodeDecodeError) as e:
        raise FormatError(f"{path}: corrupt id table ({e})") from None

    matrix_bytes = n * d * 4
    pos_bytes = n * 16 if flags & _FLAG_POSITIONS else 0
    if len(data) != offset + matrix_bytes + pos_bytes:
        raise FormatError(
            f"{path}: expected {offset + matrix_bytes + pos_bytes} bytes, found {len(data)}"
        )
    matrix = np.frombuffer(data, dtype="<f4", count=n * d, offset=offset).reshape(n, d)
    offset += matrix_bytes
    positions = None
    if pos_bytes:
        positions = np.frombuffer(data, dtype="<f8", count=n * 2, offset=offset).reshape(n, 2)
    return build_index(ids, matrix.astype(np.float32), None if positions is None else positions.copy())


# ---------------------------------------------------------------------------
# Retrieval
# ---------------------------------------------------------------------------

def squared_distances(index: EmbeddingIndex, queries: np.ndarray) -> np.ndarray:
    """
    Q x N squared L2 distances, float64, summed over explicit differences so
    a query equal to a stored row scores exactly 0.
    """
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if index.size and q.shape[1] != index.dim:
        raise InvalidArgumentError(f"query dim {q.shape[1]} != index dim {index.dim}")
    n = index.size
    out = np.empty((len(q), n), dtype=np.float64)
    if n == 0 or len(q) == 0:
        return out
    db = index.wide
    rows = max(1, DIFF_BLOCK // index.dim)
    step = max(1, DIFF_BLOCK // (n * index.dim))
    for qs in range(0, len(q), step):
        block = q[qs:qs + step, None, :]
        for rs in range(0, n, rows):
            diff = block - db[None, rs:rs + rows, :]
            out[qs:qs + step, rs:rs + rows] = np.einsum("qnd,qnd->qn", diff, diff)
    return out


def top_k(index: EmbeddingIndex, query: np.ndarray, k: int) -> list[tuple[str, float]]:
    """
    The k nearest database rows to one query, ascending squared distance;
    equal distances keep insertion order.
    """
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    if index.size == 0:
        return []
    d = squared_distances(index, query)[0]
    order = np.argsort(d, kind="stable")[:k]
    return [(index.ids[i], float(d[i])) for i in order]


def ranks_of_truth(index: EmbeddingIndex, queries: np.ndarray, truth_rows: np.ndarray) -> np.ndarray:
    """
    0-based rank of each query's true row under the (distance, insertion order)
    ordering, without sorting the full database.
    """
    ranks = np.empty(len(truth_rows), dtype=np.int64)
    cols = np.arange(index.size)
    for start in range(0, len(truth_rows), QUERY_CHUNK):
        stop = start + QUERY_CHUNK
        d = squared_distances(index, queries[start:stop])
        rows = truth_rows[start:stop]
        d_true = d[np.arange(len(rows)), rows][:, None]
        ahead = (d < d_true) | ((d == d_true) & (cols[None, :] < rows[:, None]))
        ranks[start:stop] = ahead.sum(axis=1)
    return ranks


def recall_at_k(
    index: EmbeddingIndex,
    queries: np.ndarray,
    ground_truth_ids: Sequence[str],
    ks: Sequence[int] = (1, 5, 10),
) -> RecallReport:
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float32))
    if len(queries) != len(ground_truth_ids):
        raise ValidationError(f"{len(queries)} queries but {len(ground_truth_ids)} ground-truth ids")
    if any(k < 1 for k in ks):
        raise InvalidArgumentError(f"recall K values must be >= 1: {list(ks)}")
    truth = np.array([index.row_of(g) for g in ground_truth_ids], dtype=np.int64)
    started = time.perf_counter()
    ranks = ranks_of_truth(index, queries, truth) if len(truth) else np.empty(0, dtype=np.int64)
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    mean_ms = elapsed_ms / len(truth) if len(truth) else None
    return RecallReport.from_ranks(ranks, index.size, ks, mean_query_ms=mean_ms)


def localization_report(
    index: EmbeddingIndex,
    queries: np.ndarray,
    query_positions: np.ndarray,
    n_top: int = 1,
    radius_m: float = 5.0,
    depth: Optional[int] = None,
) -> LocalizationReport:
    """
    A query is localised at N_top when one of its N_top best tiles lies within
    radius_m (great-circle) of its true position. The curve covers
    N_top = 1..depth (default: max(n_top, top-1% K)).
    """
    if index.positions is None:
        raise ValidationError("localisation needs an index with positions")
    query_positions = np.asarray(query_positions, dtype=np.float64).reshape(-1, 2)
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float32))
    if len(query_positions) != len(queries) or not np.isfinite(query_positions).all():
        raise ValidationError("every query needs a (lat, lon) position")
    if n_top < 1:
        raise InvalidArgumentError(f"n_top must be >= 1, got {n_top}")
    if radius_m < 0:
        raise InvalidArgumentError(f"radius must be >= 0, got {radius_m}")
    depth = max(n_top, depth or top1percent_k(index.size))
    depth = min(depth, max(index.size, 1))

    first_hit = np.full(len(queries), depth, dtype=np.int64)
    for start in range(0, len(queries), QUERY_CHUNK):
        d = squared_distances(index, queries[start:start + QUERY_CHUNK])
        order = np.argsort(d, axis=1, kind="stable")[:, :depth]
        for row, ranked in enumerate(order):
            q = start + row
            dist = haversine_many(tuple(query_positions[q]), index.positions[ranked])
            within = np.flatnonzero(dist <= radius_m)
            if within.size:
                first_hit[q] = within[0]

    n = len(queries)
    if n:
        hits = np.bincount(first_hit, minlength=depth + 1)[:depth]
        curve = (np.cumsum(hits) / n).tolist()
    else:
        curve = [0.0] * depth
    recall = curve[min(n_top, depth) - 1] if curve else 0.0
    return LocalizationReport(radius_m=radius_m, n_queries=n, n_top=n_top, recall=recall, curve=curve)


def localization_recall(
    index: EmbeddingIndex,
    queries: np.ndarray,
    query_positions: np.ndarray,
    n_top: int = 1,
    radius_m: float = 5.0,
) -> float:
    return localization_report(index, queries, query_positions, n_top, radius_m, depth=n_top).recall


def localization_curve(
    index: EmbeddingIndex,
    queries: np.ndarray,
    query_positions: np.ndarray,
    n_max: int,
    radius_m: float = 5.0,
) -> list[float]:
    """Localisation recall for N_top = 1..n_max (capped at the database size)."""
    return localization_report(index, queries, query_positions, 1, radius_m, depth=n_max).curve


# ---------------------------------------------------------------------------
# North-error sweep
# ---------------------------------------------------------------------------

def perturb_panoramas(
    panoramas: Sequence[np.ndarray],
    level_deg: float,
    seed: int,
) -> list[np.ndarray]:
    """Shift each H x W x 3 panorama by its own uniform angle in [-level, +level]."""
    if level_deg == 0:
        return list(panoramas)
    rng = np.random.default_rng([seed, int(round(level_deg * 1000))])
    angles = rng.uniform(-level_deg, level_deg, size=len(panoramas))
    return [
        circular_shift_panorama(img, degrees_to_columns(a, img.shape[1]))
        for img, a in zip(panoramas, angles)
    ]


def north_noise_sweep(
    embed_queries: Callable[[Sequence[np.ndarray]], np.ndarray],
    panoramas: Sequence[np.ndarray],
    ground_truth_ids: Sequence[str],
    index: EmbeddingIndex,
    levels: Sequence[float] = (0, 5, 10, 15, 20),
    seed: int = 0,
    ks: Sequence[int] = (1, 5, 10),
    progress_cb: Optional[Callable[[int], None]] = None,
) -> NoiseSweepReport:
    """
    Re-run retrieval with panoramas rotated by a random north error per level.
    `embed_queries` maps H x W x 3 panoramas to unit-norm descriptors; the U-V
    maps it pairs them with are never shifted.
    """
    report = NoiseSweepReport(seed=seed)
    for level in sorted(float(l) for l in levels):
        if level < 0:
            raise InvalidArgumentError(f"noise level must be >= 0, got {level}")
        shifted = perturb_panoramas(panoramas, level, seed)
        queries = embed_queries(shifted)
        report.add(level, recall_at_k(index, queries, ground_truth_ids, ks))
        if progress_cb:
            progress_cb(1)
    return report
