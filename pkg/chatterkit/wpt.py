"""Wavelet packet decomposition, informative-packet selection and the 14 WPT features."""
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
import pywt
from scipy import stats

from .dataset import FeatureMatrix, FeatureVector, TimeSeriesRecord
from .errors import (
    IndexOutOfRange,
    InvalidParameter,
    MixedDatasetTags,
    NoUnstableRecords,
    SignalTooShort,
    UnknownWavelet,
)
from .parallel import parallel_map

logger = logging.getLogger(__name__)

DEFAULT_WAVELET = "db4"
BOUNDARY_MODE = "symmetric"

# Level-4 informative packets (1-based, frequency order)
INFORMATIVE_PACKETS = {
    "turning-5.08cm": 3,
    "turning-6.35cm": 4,
    "turning-8.89cm": 6,
    "turning-11.43cm": 10,
    "milling": 3,
}

FEATURE_NAMES = (
    "mean", "std", "rms", "peak", "skewness", "kurtosis",
    "crest_factor", "clearance_factor", "shape_factor", "impulse_factor",
    "mean_square_frequency", "standard_frequency", "one_step_autocorrelation", "frequency_center",
)


def natural_index(freq_index: int) -> int:
    """Gray-code map from frequency order to filter-bank (natural) order."""
    return freq_index ^ (freq_index >> 1)


def _path(natural: int, level: int) -> str:
    return format(natural, f"0{level}b").replace("0", "a").replace("1", "d") if level else ""


@dataclass
class WaveletPacketTree:
    """Leaves of a full packet tree, ordered by frequency band."""
    level: int
    wavelet_name: str
    packets: list[np.ndarray]
    signal_length: int
    mode: str = BOUNDARY_MODE
    # node path -> length of the signal that node was computed from
    _lengths: dict[str, int] = field(default_factory=dict, repr=False)

    @property
    def paths(self) -> list[str]:
        return [_path(natural_index(k), self.level) for k in range(2 ** self.level)]

    @property
    def total_energy(self) -> float:
        return float(sum(np.sum(p ** 2) for p in self.packets))

    @property
    def is_degenerate(self) -> bool:
        return self.total_energy == 0.0


def wpt_decompose(x: np.ndarray, level: int = 4, wavelet: str = DEFAULT_WAVELET) -> WaveletPacketTree:
    """Full wavelet packet decomposition down to ``level``.

    Args:
        x: Input samples.
        level: Tree depth; yields 2**level packets.
        wavelet: Any discrete PyWavelets name.

    Returns:
        WaveletPacketTree with packets in frequency order.
    """
    if level < 1:
        raise InvalidParameter("level must be positive")
    if wavelet not in pywt.wavelist(kind="discrete"):
        raise UnknownWavelet(f"unknown discrete wavelet {wavelet!r}")
    x = np.asarray(x, dtype=float)
    if x.size < 2 ** level:
        raise SignalTooShort(f"level {level} needs at least {2 ** level} samples, got {x.size}")

    nodes = {"": x}
    lengths = {}
    for depth in range(level):
        next_nodes = {}
        for path, data in nodes.items():
            lengths[path] = data.size
            approx, detail = pywt.dwt(data, wavelet, mode=BOUNDARY_MODE)
            next_nodes[path + "a"] = approx
            next_nodes[path + "d"] = detail
        nodes = next_nodes
    packets = [nodes[_path(natural_index(k), level)] for k in range(2 ** level)]
    return WaveletPacketTree(level, wavelet, packets, x.size, BOUNDARY_MODE, lengths)


def energy_ratios(tree: WaveletPacketTree) -> np.ndarray:
    """Packet energies over total energy; all zeros for a zero signal."""
    energies = np.array([np.sum(p ** 2) for p in tree.packets])
    total = energies.sum()
    if total == 0.0:
        logger.warning("Zero-energy signal; energy ratios set to 0")
        return np.zeros_like(energies)
    return energies / total


def reconstruct_packet(tree: WaveletPacketTree, packet_index: int) -> np.ndarray:
    """Time-domain signal carried by one packet (1-based, frequency order)."""
    n_packets = 2 ** tree.level
    if not 1 <= packet_index <= n_packets:
        raise IndexOutOfRange(f"packet index must lie in [1, {n_packets}], got {packet_index}")
    path = tree.paths[packet_index - 1]
    data = tree.packets[packet_index - 1]
    for depth in range(tree.level, 0, -1):
        parent = path[: depth - 1]
        if path[depth - 1] == "a":
            data = pywt.idwt(data, None, tree.wavelet_name, mode=tree.mode)
        else:
            data = pywt.idwt(None, data, tree.wavelet_name, mode=tree.mode)
        data = data[: tree._lengths[parent]]
    return data


def select_informative_packet(
    records: Sequence[TimeSeriesRecord],
    table: Mapping[str, int] | str = "table",
    level: int = 4,
    wavelet: str = DEFAULT_WAVELET,
) -> int:
    """Informative packet for one dataset tag.

    ``table`` is either a tag→index mapping, "table" for the built-in level-4
    table, or "auto" to pick the packet with the highest mean energy ratio
    over the chatter records.
    """
    tags = {r.dataset_tag for r in records}
    if len(tags) != 1:
        raise MixedDatasetTags(f"records span several dataset tags: {sorted(tags)}")
    (tag,) = tags
    if table == "table":
        table = INFORMATIVE_PACKETS
    if table != "auto":
        if tag not in table:
            raise InvalidParameter(f"no informative packet tabulated for tag {tag!r}")
        return int(table[tag])

    unstable = [r for r in records if r.binary_label == 1]
    if not unstable:
        raise NoUnstableRecords(f"tag {tag!r} has no Unstable records")
    ratios = np.mean([energy_ratios(wpt_decompose(r.samples, level, wavelet)) for r in unstable], axis=0)
    packet = int(np.argmax(ratios)) + 1
    logger.info("Informative packet for %s: %d", tag, packet)
    return packet


def wpt_feature_vector(x_reconstructed: np.ndarray, fs: float) -> FeatureVector:
    """Time and frequency statistics of a reconstructed packet signal."""
    x = np.asarray(x_reconstructed, dtype=float)
    if x.size == 0:
        raise SignalTooShort("empty reconstruction")
    mean = x.mean()
    std = x.std()
    rms = np.sqrt(np.mean(x ** 2))
    peak = np.max(np.abs(x))
    if std == 0.0:
        values = [mean, 0.0, rms, peak] + [0.0] * 10
        return FeatureVector(np.array(values), FEATURE_NAMES, degenerate=True)

    mean_abs = np.mean(np.abs(x))
    sqrt_mean = np.mean(np.sqrt(np.abs(x))) ** 2
    power = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(x.size, d=1.0 / fs)
    weights = power / power.sum()
    center = np.sum(freqs * weights)
    values = [
        mean,
        std,
        rms,
        peak,
        stats.skew(x),
        stats.kurtosis(x, fisher=False),
        peak / rms,
        peak / sqrt_mean,
        rms / mean_abs,
        peak / mean_abs,
        np.sum(freqs ** 2 * weights),
        np.sqrt(np.sum((freqs - center) ** 2 * weights)),
        np.sum(np.cos(2 * np.pi * freqs / fs) * weights),
        center,
    ]
    return FeatureVector(np.array(values, dtype=float), FEATURE_NAMES)


def _record_features(record: TimeSeriesRecord, packet: int, level: int, wavelet: str) -> FeatureVector:
    tree = wpt_decompose(record.samples, level, wavelet)
    vector = wpt_feature_vector(reconstruct_packet(tree, packet), record.fs)
    if vector.degenerate:
        logger.warning("Record %s: degenerate packet %d signal", record.id, packet)
    return vector


def featurize_wpt(
    records: Sequence[TimeSeriesRecord],
    level: int = 4,
    packet: int | str | Mapping[str, int] = "table",
    wavelet: str = DEFAULT_WAVELET,
    n_jobs: int | None = None,
) -> FeatureMatrix:
    """14 WPT features per record from the informative packet of one tag."""
    if isinstance(packet, int):
        index = packet
    else:
        index = select_informative_packet(records, packet, level, wavelet)
    vectors = parallel_map(
        lambda r: _record_features(r, index, level, wavelet), records, n_jobs=n_jobs,
        prefer="threads", desc="wpt",
    )
    matrix = FeatureMatrix.from_vectors(records, vectors)
    matrix.meta["informative_packet"] = index
    return matrix
