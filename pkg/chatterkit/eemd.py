"""Empirical mode decomposition, its noise-assisted ensemble, and IMF features."""
import logging
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy import stats
from scipy.interpolate import CubicSpline
from scipy.signal import argrelextrema

from .dataset import FeatureMatrix, FeatureVector, TimeSeriesRecord
from .errors import ConstantSignal, InvalidParameter, SignalTooShort
from .parallel import parallel_map

logger = logging.getLogger(__name__)

SD_THRESHOLD = 0.25
MAX_SIFT = 50
MIRRORED_EXTREMA = 2
# keeps the pointwise SD finite where the previous iterate crosses zero
_SD_EPS = 1e-12
# residues below this fraction of the input range count as numerically zero
RESIDUE_TOL = 1e-10

FEATURE_NAMES = ("energy_ratio", "peak_to_peak", "std", "rms", "crest_factor", "skewness", "kurtosis")


@dataclass
class ImfSet:
    imfs: list[np.ndarray]
    residue: np.ndarray
    ensemble_size: int = 1
    noise_std_fraction: float = 0.0

    def __len__(self) -> int:
        return len(self.imfs)

    def reconstruction(self) -> np.ndarray:
        return np.sum(self.imfs, axis=0) + self.residue if self.imfs else self.residue.copy()


def _extrema(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    (maxima,) = argrelextrema(h, np.greater)
    (minima,) = argrelextrema(h, np.less)
    return maxima, minima


def _zero_crossings(h: np.ndarray) -> int:
    signs = np.signbit(h)
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def _envelope(t: np.ndarray, h: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Natural cubic spline through extrema, end extrema mirrored about the boundaries."""
    last = h.size - 1
    left = idx[:MIRRORED_EXTREMA][::-1]
    right = idx[-MIRRORED_EXTREMA:][::-1]
    knots = np.concatenate([-left, idx, 2 * last - right]).astype(float)
    values = np.concatenate([h[left], h[idx], h[right]])
    return CubicSpline(knots, values, bc_type="natural")(t)


def _is_imf(h: np.ndarray) -> bool:
    maxima, minima = _extrema(h)
    return abs(maxima.size + minima.size - _zero_crossings(h)) <= 1


def _sift(r: np.ndarray, t: np.ndarray, sd_threshold: float, max_sift: int) -> np.ndarray:
    """Sift one IMF out of ``r``."""
    h = r.copy()
    for _ in range(max_sift):
        maxima, minima = _extrema(h)
        if maxima.size < 1 or minima.size < 1 or maxima.size + minima.size < 3:
            break
        mean_env = 0.5 * (_envelope(t, h, maxima) + _envelope(t, h, minima))
        h_next = h - mean_env
        sd = np.sum((h - h_next) ** 2 / (h ** 2 + _SD_EPS))
        h = h_next
        if sd < sd_threshold and _is_imf(h):
            break
    return h


def emd_sift(x: np.ndarray, sd_threshold: float = SD_THRESHOLD, max_sift: int = MAX_SIFT,
             max_imfs: int | None = None) -> ImfSet:
    """Plain EMD by repeated sifting.

    Args:
        x: Input samples (at least 8, non-constant).
        sd_threshold: Stop sifting once the summed pointwise SD falls below it.
        max_sift: Cap on sifting iterations per IMF.
        max_imfs: Optional cap on the number of IMFs.

    Returns:
        ImfSet whose residue is monotonic or too extrema-poor to sift.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 8:
        raise SignalTooShort(f"EMD needs at least 8 samples, got {x.size}")
    if np.ptp(x) == 0.0:
        raise ConstantSignal("EMD of a constant signal")
    t = np.arange(x.size, dtype=float)
    imfs = []
    residue = x.copy()
    while max_imfs is None or len(imfs) < max_imfs:
        if np.ptp(residue) <= RESIDUE_TOL * np.ptp(x):
            break
        maxima, minima = _extrema(residue)
        if maxima.size < 1 or minima.size < 1 or maxima.size + minima.size < 3:
            break
        imf = _sift(residue, t, sd_threshold, max_sift)
        imfs.append(imf)
        residue = residue - imf
    return ImfSet(imfs, residue, 1, 0.0)


def _member(x: np.ndarray, member: int, seed: int, noise_std: float, sd_threshold: float,
            max_sift: int, max_imfs: int | None) -> ImfSet:
    rng = np.random.default_rng([seed, member])
    noisy = x + noise_std * rng.standard_normal(x.size) if noise_std > 0 else x
    return emd_sift(noisy, sd_threshold, max_sift, max_imfs)


def eemd(
    x: np.ndarray,
    ensemble_size: int = 100,
    noise_std_fraction: float = 0.2,
    seed: int = 0,
    sd_threshold: float = SD_THRESHOLD,
    max_sift: int = MAX_SIFT,
    max_imfs: int | None = None,
    n_jobs: int | None = 1,
) -> ImfSet:
    """Ensemble EMD: average the IMFs of noise-perturbed copies of ``x``.

    Member ``i`` draws its noise from the seed sequence ``[seed, i]``, so the
    result does not depend on scheduling. Members with fewer IMFs contribute
    zeros to the missing positions.
    """
    if ensemble_size < 1:
        raise InvalidParameter("ensemble_size must be >= 1")
    if noise_std_fraction < 0:
        raise InvalidParameter("noise_std_fraction must be non-negative")
    x = np.asarray(x, dtype=float)
    if x.size >= 8 and np.ptp(x) == 0.0:
        raise ConstantSignal("EEMD of a constant signal")
    noise_std = noise_std_fraction * x.std()
    members = parallel_map(
        partial(_member, x, seed=seed, noise_std=noise_std, sd_threshold=sd_threshold,
                max_sift=max_sift, max_imfs=max_imfs),
        range(ensemble_size), n_jobs=n_jobs,
    )
    n_imfs = max(len(m) for m in members)
    imfs = np.zeros((n_imfs, x.size))
    residue = np.zeros(x.size)
    for m in members:
        for i, imf in enumerate(m.imfs):
            imfs[i] += imf
        residue += m.residue
    return ImfSet(list(imfs / ensemble_size), residue / ensemble_size, ensemble_size, noise_std_fraction)


def spectral_overlap(a: np.ndarray, b: np.ndarray) -> float:
    """Normalized inner product of magnitude spectra."""
    sa, sb = np.abs(np.fft.rfft(a)), np.abs(np.fft.rfft(b))
    denom = np.linalg.norm(sa) * np.linalg.norm(sb)
    return float(sa @ sb / denom) if denom > 0 else 0.0


def select_informative_imf(imfs: ImfSet, x: np.ndarray) -> int:
    """1-based number of the IMF whose spectrum overlaps the signal's most; ties → lowest."""
    if not imfs.imfs:
        raise InvalidParameter("no IMFs to choose from")
    overlaps = np.array([spectral_overlap(imf, x) for imf in imfs.imfs])
    return int(np.argmax(overlaps)) + 1


def eemd_feature_vector(imf: np.ndarray, x: np.ndarray) -> FeatureVector:
    imf = np.asarray(imf, dtype=float)
    x = np.asarray(x, dtype=float)
    if imf.size == 0:
        raise SignalTooShort("empty IMF")
    signal_energy = np.sum(x ** 2)
    energy_ratio = np.sum(imf ** 2) / signal_energy if signal_energy > 0 else 0.0
    std = imf.std()
    rms = np.sqrt(np.mean(imf ** 2))
    if std == 0.0:
        values = [energy_ratio, 0.0, 0.0, rms, 0.0, 0.0, 0.0]
        return FeatureVector(np.array(values), FEATURE_NAMES, degenerate=True)
    values = [
        energy_ratio,
        np.ptp(imf),
        std,
        rms,
        np.max(np.abs(imf)) / rms,
        stats.skew(imf),
        stats.kurtosis(imf, fisher=False),
    ]
    return FeatureVector(np.array(values, dtype=float), FEATURE_NAMES)


@dataclass(frozen=True)
class EemdParams:
    ensemble_size: int = 100
    noise_std_fraction: float = 0.2
    sd_threshold: float = SD_THRESHOLD
    max_sift: int = MAX_SIFT
    max_imfs: int | None = 10
    sample_size: int = 5

    @classmethod
    def from_config(cls, section: dict) -> "EemdParams":
        return cls(**{k: v for k, v in section.items() if k in cls.__dataclass_fields__})


def _decompose(record: TimeSeriesRecord, params: EemdParams, seed: int) -> ImfSet:
    return eemd(record.samples, params.ensemble_size, params.noise_std_fraction, seed,
                params.sd_threshold, params.max_sift, params.max_imfs, n_jobs=1)


def select_informative_imf_for_tag(records: Sequence[TimeSeriesRecord], params: EemdParams,
                                   seed: int = 0) -> int:
    """Most frequent informative IMF over a seeded sample of records (chatter preferred)."""
    pool = [r for r in records if r.binary_label == 1] or list(records)
    rng = np.random.default_rng(seed)
    size = min(params.sample_size, len(pool))
    picks = sorted(rng.choice(len(pool), size=size, replace=False))
    votes = Counter(
        select_informative_imf(_decompose(pool[i], params, seed), pool[i].samples)
        for i in picks
    )
    best = max(votes.values())
    return min(k for k, v in votes.items() if v == best)


def _record_features(record: TimeSeriesRecord, imf_number: int, params: EemdParams, seed: int) -> FeatureVector:
    imfs = _decompose(record, params, seed)
    if imf_number <= len(imfs):
        imf = imfs.imfs[imf_number - 1]
    else:
        imf = np.zeros_like(record.samples)
    vector = eemd_feature_vector(imf, record.samples)
    if vector.degenerate:
        logger.warning("Record %s: IMF %d is degenerate", record.id, imf_number)
    return vector


def featurize_eemd(records: Sequence[TimeSeriesRecord], params: EemdParams = EemdParams(),
                   seed: int = 0, imf_number: int | None = None, n_jobs: int | None = None) -> FeatureMatrix:
    """7 IMF features per record from the tag's informative IMF."""
    if imf_number is None:
        imf_number = select_informative_imf_for_tag(records, params, seed)
        logger.info("Informative IMF for %s: %d", records[0].dataset_tag, imf_number)
    vectors = parallel_map(partial(_record_features, imf_number=imf_number, params=params, seed=seed),
                           records, n_jobs=n_jobs, desc="eemd")
    matrix = FeatureMatrix.from_vectors(records, vectors)
    matrix.meta["informative_imf"] = imf_number
    return matrix
