"""Low-pass filtering and decimation of raw vibration records."""
import logging
from collections.abc import Sequence
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy.signal import butter, sosfiltfilt

from .dataset import TimeSeriesRecord
from .errors import InvalidCutoff, InvalidParameter, ZeroFactor
from .parallel import parallel_map

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FilterSpec:
    cutoff_hz: float
    order: int = 100
    decimation_factor: int = 1

    def __post_init__(self):
        if self.order < 1:
            raise InvalidParameter("filter order must be positive")
        if self.decimation_factor < 1:
            raise ZeroFactor(f"decimation factor must be >= 1, got {self.decimation_factor}")

    @classmethod
    def for_rates(cls, fs_raw: float, fs_target: float, order: int = 100,
                  cutoff_fraction: float = 0.45) -> "FilterSpec":
        """Spec for going from ``fs_raw`` to ``fs_target`` with cutoff = fraction * fs_target."""
        factor = int(round(fs_raw / fs_target))
        if factor < 1 or not np.isclose(fs_raw / factor, fs_target):
            raise InvalidParameter(f"{fs_raw} Hz is not an integer multiple of {fs_target} Hz")
        return cls(cutoff_hz=cutoff_fraction * fs_target, order=order, decimation_factor=factor)


def lowpass_filter(x: np.ndarray, fs: float, spec: FilterSpec) -> np.ndarray:
    """Zero-phase Butterworth low-pass as cascaded second-order sections.

    Args:
        x: Input samples.
        fs: Sampling rate in Hz.
        spec: Cutoff and order.

    Returns:
        Filtered samples, same length as ``x``.
    """
    nyquist = fs / 2.0
    if not 0.0 < spec.cutoff_hz < nyquist:
        raise InvalidCutoff(f"cutoff {spec.cutoff_hz} Hz must lie in (0, {nyquist}) Hz")
    x = np.asarray(x, dtype=float)
    sos = butter(spec.order, spec.cutoff_hz, btype="low", fs=fs, output="sos")
    default_pad = 3 * (2 * len(sos) + 1 - min((sos[:, 2] == 0).sum(), (sos[:, 5] == 0).sum()))
    padlen = min(default_pad, x.size - 1)
    return sosfiltfilt(sos, x, padlen=padlen)


def decimate(x: np.ndarray, factor: int) -> np.ndarray:
    """Keep every ``factor``-th sample starting at the first."""
    if factor < 1:
        raise ZeroFactor(f"decimation factor must be >= 1, got {factor}")
    return np.asarray(x)[::factor].copy()


def preprocess_record(record: TimeSeriesRecord, spec: FilterSpec) -> TimeSeriesRecord:
    filtered = lowpass_filter(record.samples, record.fs, spec)
    return record.with_samples(decimate(filtered, spec.decimation_factor),
                               record.fs / spec.decimation_factor)


def preprocess_records(records: Sequence[TimeSeriesRecord], spec: FilterSpec,
                       n_jobs: int | None = None) -> list[TimeSeriesRecord]:
    logger.info("Filtering %d records at %.1f Hz, decimating by %d",
                len(records), spec.cutoff_hz, spec.decimation_factor)
    return parallel_map(partial(preprocess_record, spec=spec), records, n_jobs=n_jobs, desc="preprocess")
