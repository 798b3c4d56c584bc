"""Shared fixtures: seeded generators, synthetic records and tiny manifests."""
import numpy as np
import pytest

from chatterkit import config as config_module
from chatterkit import parallel
from chatterkit.config import Config
from chatterkit.dataset import DatasetManifest, ManifestEntry, StabilityLabel, TimeSeriesRecord, save_manifest, write_series
from chatterkit.provenance import get_provenance


@pytest.fixture(autouse=True)
def _quiet(monkeypatch):
    monkeypatch.setattr(parallel, "show_progress", False)
    monkeypatch.delenv("CHATTERKIT_THREADS", raising=False)
    serial = Config()
    serial.update({"workers": 1})
    monkeypatch.setattr(config_module, "_config", serial)
    get_provenance().clear()
    yield
    get_provenance().clear()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def tone(freq: float, fs: float, n: int, amplitude: float = 1.0, phase: float = 0.0) -> np.ndarray:
    t = np.arange(n) / fs
    return amplitude * np.sin(2.0 * np.pi * freq * t + phase)


@pytest.fixture
def make_record():
    def _make(samples, label="stable", tag="turning-5.08cm", fs=1000.0, record_id=None, rpm=570.0, depth=0.05):
        _make.count += 1
        return TimeSeriesRecord(record_id or f"r{_make.count:03d}", np.asarray(samples, dtype=float), fs, rpm,
                                depth, StabilityLabel.parse(label), tag)

    _make.count = 0
    return _make


@pytest.fixture
def tone_records(make_record, rng):
    """Stable records are weak 50 Hz tones, Unstable ones strong 200 Hz tones, all with noise."""
    records = []
    for i in range(6):
        stable = i % 2 == 0
        freq, amp = (50.0, 0.2) if stable else (200.0, 1.0)
        x = tone(freq, 1000.0, 512, amp, phase=0.3 * i) + 0.05 * rng.standard_normal(512)
        records.append(make_record(x, "stable" if stable else "unstable", record_id=f"rec{i}"))
    return records


@pytest.fixture
def write_manifest(tmp_path):
    """Write series and a manifest; returns the manifest path."""

    def _write(name, series, labels, fs_raw=2000.0, fs_target=1000.0, directory=None):
        root = directory or tmp_path / "raw"
        entries = []
        for i, (x, label) in enumerate(zip(series, labels)):
            path = root / name / f"{name}-{i}.txt"
            write_series(path, x)
            entries.append(ManifestEntry(f"{name}-{i}", path, 600.0 + i, 0.1, StabilityLabel.parse(label), name))
        manifest_path = root / f"{name}.yaml"
        save_manifest(DatasetManifest(name, fs_raw, fs_target, entries), manifest_path)
        return manifest_path

    return _write
