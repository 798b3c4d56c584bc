"""Constrained dynamic time warping, distance matrices and KNN over precomputed distances."""
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd
from numba import njit

from .dataset import TimeSeriesRecord, read_table, write_table
from .errors import EmptyInput, InfeasibleWindow, InvalidParameter, KTooLarge
from .parallel import parallel_map

logger = logging.getLogger(__name__)


class GroundMetric(Enum):
    MANHATTAN = "manhattan"


@dataclass(frozen=True)
class DtwConfig:
    """Warping constraints.

    ``window_fraction`` sets the Sakoe-Chiba band half-width as a fraction of the
    longer series. ``slope_p`` = 0 leaves slopes free; P >= 1 forces round(P)
    diagonal steps after every horizontal or vertical step; P < 1 allows up to
    round(1/P) consecutive horizontal (or vertical) steps before a diagonal one.
    """
    window_fraction: float = 0.1
    slope_p: float = 1.0
    ground_metric: GroundMetric = GroundMetric.MANHATTAN
    normalize: bool = True
    stride: int = 1

    def __post_init__(self):
        if not 0.0 < self.window_fraction <= 1.0:
            raise InvalidParameter(f"window_fraction must lie in (0, 1], got {self.window_fraction}")
        if self.slope_p < 0:
            raise InvalidParameter(f"slope_p must be >= 0, got {self.slope_p}")
        if self.stride < 1:
            raise InvalidParameter("stride must be >= 1")
        object.__setattr__(self, "ground_metric", GroundMetric(self.ground_metric))

    @classmethod
    def from_config(cls, section: dict) -> "DtwConfig":
        return cls(**{k: v for k, v in section.items() if k in cls.__dataclass_fields__})

    @property
    def step_pattern(self) -> tuple[int, int]:
        """(max consecutive H or V steps, diagonal steps required after them); (0, 0) = free."""
        if self.slope_p == 0:
            return 0, 0
        if self.slope_p >= 1:
            return 1, max(1, int(round(self.slope_p)))
        return max(1, int(round(1.0 / self.slope_p))), 1

    def band(self, n: int, m: int) -> int:
        return math.ceil(self.window_fraction * max(n, m))


@njit(cache=True, nogil=True)
def _dtw_kernel(x, y, band, max_run, min_diag):
    n = x.size
    m = y.size
    if max_run == 0:
        n_states = 1
    else:
        n_states = 1 + 2 * max_run + (min_diag - 1)
    h0 = 1                    # horizontal run of length k -> h0 + k - 1
    v0 = 1 + max_run          # vertical run of length k -> v0 + k - 1
    d0 = 1 + 2 * max_run      # k diagonals done after a run -> d0 + k - 1
    inf = np.inf
    # two banded rows; cell (i, j) lives at column j - i + band
    width = 2 * band + 1
    prev = np.full((width, n_states), inf)
    cur = np.full((width, n_states), inf)
    for i in range(n):
        cur[:, :] = inf
        lo = max(0, i - band)
        hi = min(m - 1, i + band)
        for j in range(lo, hi + 1):
            k = j - i + band
            d = abs(x[i] - y[j])
            if i == 0 and j == 0:
                cur[k, 0] = d
                continue
            has_diag = i > 0 and j > 0
            has_left = j > 0 and k > 0
            has_up = i > 0 and k + 1 < width
            if max_run == 0:
                best = inf
                if has_diag:
                    best = min(best, prev[k, 0])
                if has_up:
                    best = min(best, prev[k + 1, 0])
                if has_left:
                    best = min(best, cur[k - 1, 0])
                cur[k, 0] = best + d
                continue
            if has_diag:
                diag = prev[k]
                # diagonal into the free state
                best = diag[0]
                if min_diag == 1:
                    for s in range(1, d0):
                        best = min(best, diag[s])
                else:
                    best = min(best, diag[d0 + min_diag - 2])
                cur[k, 0] = best + d
                if min_diag > 1:
                    best = inf
                    for s in range(1, d0):
                        best = min(best, diag[s])
                    cur[k, d0] = best + d
                    for r in range(2, min_diag):
                        cur[k, d0 + r - 1] = diag[d0 + r - 2] + d
            if has_left:
                left = cur[k - 1]
                cur[k, h0] = left[0] + d
                for r in range(2, max_run + 1):
                    cur[k, h0 + r - 1] = left[h0 + r - 2] + d
            if has_up:
                up = prev[k + 1]
                cur[k, v0] = up[0] + d
                for r in range(2, max_run + 1):
                    cur[k, v0 + r - 1] = up[v0 + r - 2] + d
        prev, cur = cur, prev
    return prev[m - n + band].min()


def _prepare(x: np.ndarray, cfg: DtwConfig) -> np.ndarray:
    x = np.asarray(x, dtype=float)[:: cfg.stride]
    if x.size == 0:
        raise EmptyInput("DTW of an empty series")
    if cfg.normalize:
        x = x - x.mean()
        std = x.std()
        if std > 0:
            x = x / std
    return np.ascontiguousarray(x)


def _raw_distance(x: np.ndarray, y: np.ndarray, cfg: DtwConfig) -> float:
    band = cfg.band(x.size, y.size)
    if abs(x.size - y.size) > band:
        raise InfeasibleWindow(f"length difference {abs(x.size - y.size)} exceeds band {band}")
    max_run, min_diag = cfg.step_pattern
    value = float(_dtw_kernel(x, y, band, max_run, min_diag))
    if not math.isfinite(value):
        raise InfeasibleWindow("no warping path satisfies the window and slope constraints")
    return value


def dtw_distance(x: np.ndarray, y: np.ndarray, cfg: DtwConfig = DtwConfig()) -> float:
    """Minimum cumulative Manhattan cost over admissible warping paths."""
    return _raw_distance(_prepare(x, cfg), _prepare(y, cfg), cfg)


@dataclass(eq=False)
class DistanceMatrix:
    row_ids: list[str]
    col_ids: list[str]
    values: np.ndarray

    def __post_init__(self):
        self.row_ids = [str(r) for r in self.row_ids]
        self.col_ids = [str(c) for c in self.col_ids]
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.row_ids), len(self.col_ids)):
            raise InvalidParameter("distance matrix shape does not match its ids")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise InvalidParameter("distances must be finite and non-negative")

    @property
    def is_square(self) -> bool:
        return self.row_ids == self.col_ids

    def take(self, rows: Sequence[int], cols: Sequence[int]) -> "DistanceMatrix":
        rows = np.asarray(rows, dtype=int)
        cols = np.asarray(cols, dtype=int)
        return DistanceMatrix([self.row_ids[i] for i in rows], [self.col_ids[j] for j in cols],
                              self.values[np.ix_(rows, cols)])

    def to_csv(self, path: str | Path, config_hash: str | None = None) -> None:
        frame = pd.DataFrame(self.values, index=pd.Index(self.row_ids, name="id"), columns=self.col_ids)
        write_table(frame, path, config_hash, index=True)

    @classmethod
    def from_csv(cls, path: str | Path) -> "DistanceMatrix":
        frame = read_table(path, index_col=0)
        return cls(frame.index.astype(str).tolist(), [str(c) for c in frame.columns],
                   frame.to_numpy(dtype=float))


def _series(records: Sequence[TimeSeriesRecord | np.ndarray], cfg: DtwConfig) -> tuple[list[str], list[np.ndarray]]:
    ids, series = [], []
    for i, rec in enumerate(records):
        if isinstance(rec, TimeSeriesRecord):
            ids.append(rec.id)
            series.append(_prepare(rec.samples, cfg))
        else:
            ids.append(str(i))
            series.append(_prepare(rec, cfg))
    return ids, series


def _entry(pair, series_a, series_b, ids_a, ids_b, cfg):
    i, j = pair
    try:
        return _raw_distance(series_a[i], series_b[j], cfg)
    except InfeasibleWindow as exc:
        raise InfeasibleWindow(f"pair ({ids_a[i]}, {ids_b[j]}): {exc}") from exc


def pairwise_matrix(records: Sequence[TimeSeriesRecord], cfg: DtwConfig = DtwConfig(),
                    n_jobs: int | None = None) -> DistanceMatrix:
    """Symmetric DTW matrix with zero diagonal."""
    if len(records) < 2:
        raise InvalidParameter("pairwise matrix needs at least two records")
    ids, series = _series(records, cfg)
    pairs = [(i, j) for i in range(len(series)) for j in range(i + 1, len(series))]
    values = parallel_map(lambda p: _entry(p, series, series, ids, ids, cfg), pairs,
                          n_jobs=n_jobs, prefer="threads", desc="dtw pairwise")
    matrix = np.zeros((len(series), len(series)))
    for (i, j), v in zip(pairs, values):
        matrix[i, j] = matrix[j, i] = v
    return DistanceMatrix(ids, ids, matrix)


def cross_matrix(source: Sequence[TimeSeriesRecord], target: Sequence[TimeSeriesRecord],
                 cfg: DtwConfig = DtwConfig(), n_jobs: int | None = None) -> DistanceMatrix:
    """Rows are target records, columns source records."""
    if not source or not target:
        raise InvalidParameter("cross matrix needs non-empty source and target")
    src_ids, src = _series(source, cfg)
    tgt_ids, tgt = _series(target, cfg)
    pairs = [(i, j) for i in range(len(tgt)) for j in range(len(src))]
    values = parallel_map(lambda p: _entry(p, tgt, src, tgt_ids, src_ids, cfg), pairs,
                          n_jobs=n_jobs, prefer="threads", desc="dtw cross")
    return DistanceMatrix(tgt_ids, src_ids, np.array(values, dtype=float).reshape(len(tgt), len(src)))


def knn_predict(train_dist: DistanceMatrix, train_labels: Sequence[int], k: int) -> np.ndarray:
    """Majority vote of the k nearest training columns; ties go to Unstable (1)."""
    labels = np.asarray(train_labels, dtype=int)
    if labels.shape != (len(train_dist.col_ids),):
        raise InvalidParameter("one training label per column required")
    if not 1 <= k <= labels.size:
        raise KTooLarge(f"k={k} with {labels.size} training records")
    nearest = np.argsort(train_dist.values, axis=1, kind="stable")[:, :k]
    votes = labels[nearest].sum(axis=1)
    return (2 * votes >= k).astype(int)
