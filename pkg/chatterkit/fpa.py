"""FFT/PSD/ACF peak-coordinate features with MPH/MPD peak gating."""
import logging
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum
from functools import partial

import numpy as np
from scipy.signal import argrelmax, welch

from .dataset import FeatureMatrix, FeatureVector, TimeSeriesRecord
from .errors import EmptyInput, InvalidParameter, LagTooLarge
from .parallel import parallel_map

logger = logging.getLogger(__name__)

WELCH_SEGMENTS = 8


class SpectrumKind(Enum):
    FFT = "fft"
    PSD = "psd"
    ACF = "acf"


@dataclass
class SpectrumEstimate:
    abscissa: np.ndarray
    ordinate: np.ndarray
    kind: SpectrumKind

    def __post_init__(self):
        self.abscissa = np.asarray(self.abscissa, dtype=float)
        self.ordinate = np.asarray(self.ordinate, dtype=float)
        if self.abscissa.shape != self.ordinate.shape:
            raise InvalidParameter("abscissa and ordinate lengths differ")
        if self.abscissa.size > 1 and np.any(np.diff(self.abscissa) <= 0):
            raise InvalidParameter("abscissa must be strictly increasing")


@dataclass
class PeakSet:
    """Accepted peaks, tallest first."""
    peaks: list[tuple[float, float]]
    mph: float
    mpd: float

    def __len__(self) -> int:
        return len(self.peaks)

    def padded(self, n: int) -> list[tuple[float, float]]:
        return (self.peaks + [(0.0, 0.0)] * n)[:n]


def fft_magnitude(x: np.ndarray, fs: float, amplitude: bool = False) -> SpectrumEstimate:
    """One-sided magnitude spectrum |X_k|, k = 0..N/2.

    With ``amplitude`` the bins are scaled to single-sided sinusoid amplitudes
    (2|X_k|/N, DC and Nyquist bins |X_k|/N) so spectra of different lengths compare.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise EmptyInput("FFT needs at least 2 samples")
    n = x.size
    mag = np.abs(np.fft.rfft(x))
    if amplitude:
        mag = mag / n
        mag[1:] *= 2.0
        if n % 2 == 0:
            mag[-1] /= 2.0
    return SpectrumEstimate(np.fft.rfftfreq(n, d=1.0 / fs), mag, SpectrumKind.FFT)


def psd_estimate(x: np.ndarray, fs: float) -> SpectrumEstimate:
    """Welch PSD: Hann window, 50% overlap, segment length giving 8 segments."""
    x = np.asarray(x, dtype=float)
    if x.size < 8:
        raise EmptyInput("PSD needs at least 8 samples")
    # (S + 1) half-overlapping segments of length L span N = L (S + 1) / 2
    nperseg = max(2, (2 * x.size) // (WELCH_SEGMENTS + 1))
    freqs, pxx = welch(x, fs=fs, window="hann", nperseg=nperseg, noverlap=nperseg // 2,
                       detrend=False, scaling="density")
    return SpectrumEstimate(freqs, np.maximum(pxx, 0.0), SpectrumKind.PSD)


def acf(x: np.ndarray, max_lag: int) -> SpectrumEstimate:
    """Biased autocorrelation normalized to 1 at lag 0, lags 0..max_lag."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if max_lag < 1 or max_lag >= n:
        raise LagTooLarge(f"max_lag must lie in [1, {n - 1}], got {max_lag}")
    centered = x - x.mean()
    spec = np.fft.rfft(centered, 2 * n)
    r = np.fft.irfft(np.abs(spec) ** 2, 2 * n)[: max_lag + 1]
    lags = np.arange(max_lag + 1, dtype=float)
    if r[0] <= 0.0:
        values = np.zeros(max_lag + 1)
        values[0] = 1.0
        return SpectrumEstimate(lags, values, SpectrumKind.ACF)
    return SpectrumEstimate(lags, np.clip(r / r[0], -1.0, 1.0), SpectrumKind.ACF)


def minimum_peak_height(ordinate: np.ndarray, alpha: float) -> float:
    """MPH = p5 + alpha * (p95 - p5)."""
    y_min, y_max = np.percentile(ordinate, [5, 95])
    return float(y_min + alpha * (y_max - y_min))


def detect_peaks(s: SpectrumEstimate, alpha: float, mpd: float) -> PeakSet:
    """Greedy MPH/MPD gated peak selection.

    Candidates are strict local maxima over three points. Those at or above MPH
    are visited tallest first; a candidate closer than ``mpd`` to an accepted
    peak is discarded.
    """
    if s.ordinate.size == 0:
        raise EmptyInput("empty spectrum")
    if not 0.0 <= alpha <= 1.0:
        raise InvalidParameter(f"alpha must lie in [0, 1], got {alpha}")
    if mpd <= 0:
        raise InvalidParameter(f"mpd must be positive, got {mpd}")
    mph = minimum_peak_height(s.ordinate, alpha)
    (candidates,) = argrelmax(s.ordinate, order=1, mode="clip")
    candidates = candidates[s.ordinate[candidates] >= mph]
    # tallest first, lower abscissa wins ties
    order = np.lexsort((s.abscissa[candidates], -s.ordinate[candidates]))

    accepted: list[tuple[float, float]] = []
    for i in candidates[order]:
        a = float(s.abscissa[i])
        if all(abs(a - b) >= mpd for b, _ in accepted):
            accepted.append((a, float(s.ordinate[i])))
    return PeakSet(accepted, mph, float(mpd))


@dataclass(frozen=True)
class FpaParams:
    n_peaks: int = 2
    alpha_fft: float = 0.1
    alpha_psd: float = 0.1
    alpha_acf: float = 0.5
    mpd_fft: float = 500.0
    mpd_psd: float = 500.0
    mpd_acf: float = 500.0
    acf_max_lag: int | None = None

    @classmethod
    def from_config(cls, section: dict) -> "FpaParams":
        return cls(**{k: v for k, v in section.items() if k in cls.__dataclass_fields__})


def feature_names(n_peaks: int) -> tuple[str, ...]:
    names = []
    for kind, (x_name, y_name) in (("fft", ("freq", "amp")), ("psd", ("freq", "power")),
                                   ("acf", ("lag", "value"))):
        for i in range(1, n_peaks + 1):
            names += [f"{kind}_peak{i}_{x_name}", f"{kind}_peak{i}_{y_name}"]
    return tuple(names)


def fpa_feature_vector(record: TimeSeriesRecord, params: FpaParams = FpaParams()) -> FeatureVector:
    """Coordinates of the first ``n_peaks`` FFT, PSD and ACF peaks, zero padded."""
    if params.n_peaks < 1:
        raise InvalidParameter("n_peaks must be positive")
    x = record.samples
    max_lag = params.acf_max_lag or max(1, x.size // 2)
    sets = (
        detect_peaks(fft_magnitude(x, record.fs, amplitude=True), params.alpha_fft, params.mpd_fft),
        detect_peaks(psd_estimate(x, record.fs), params.alpha_psd, params.mpd_psd),
        detect_peaks(acf(x, min(max_lag, x.size - 1)), params.alpha_acf, params.mpd_acf),
    )
    values = [v for peaks in sets for pair in peaks.padded(params.n_peaks) for v in pair]
    return FeatureVector(np.array(values), feature_names(params.n_peaks))


def featurize_fpa(records: Sequence[TimeSeriesRecord], params: FpaParams = FpaParams(),
                  n_jobs: int | None = None) -> FeatureMatrix:
    vectors = parallel_map(partial(fpa_feature_vector, params=params), records, n_jobs=n_jobs, desc="fpa")
    return FeatureMatrix.from_vectors(records, vectors)
