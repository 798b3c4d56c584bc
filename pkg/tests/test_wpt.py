import numpy as np
import pytest

from chatterkit.errors import IndexOutOfRange, MixedDatasetTags, NoUnstableRecords, SignalTooShort, UnknownWavelet
from chatterkit.wpt import (
    FEATURE_NAMES,
    energy_ratios,
    featurize_wpt,
    natural_index,
    reconstruct_packet,
    select_informative_packet,
    wpt_decompose,
    wpt_feature_vector,
)

from .conftest import tone


def test_natural_index_is_gray_code():
    assert [natural_index(k) for k in range(8)] == [0, 1, 3, 2, 6, 7, 5, 4]


@pytest.mark.parametrize("level", [1, 2, 3, 4])
def test_packet_count(level, rng):
    tree = wpt_decompose(rng.standard_normal(256), level)
    assert len(tree.packets) == 2**level
    assert len(set(tree.paths)) == 2**level


def test_reconstructions_sum_to_signal(rng):
    x = rng.standard_normal(301)
    tree = wpt_decompose(x, 3)
    total = sum(reconstruct_packet(tree, k) for k in range(1, 9))
    np.testing.assert_allclose(total, x, rtol=1e-8, atol=1e-8 * np.abs(x).max())


def test_level_four_reconstructions_sum_to_signal(rng):
    for _ in range(100):
        x = rng.standard_normal(int(rng.integers(64, 1025)))
        tree = wpt_decompose(x, 4)
        total = sum(reconstruct_packet(tree, k) for k in range(1, 17))
        assert np.linalg.norm(total - x) <= 1e-8 * np.linalg.norm(x)


def test_tone_lands_in_its_band():
    # 16 bands of 50 Hz at fs = 1600; 125 Hz is the centre of band 3
    x = tone(125.0, 1600.0, 1024)
    tree = wpt_decompose(x, 4)
    ratios = energy_ratios(tree)
    assert int(np.argmax(ratios)) + 1 == 3
    assert ratios.sum() == pytest.approx(1.0)
    rec = reconstruct_packet(tree, 3)
    assert rec.size == x.size
    # band 3 borders the level-3 split, where db4 passes only ~86%
    assert np.sum(rec**2) > 0.7 * np.sum(x**2)


def test_sharp_wavelet_keeps_band_energy():
    x = tone(125.0, 1600.0, 8192)
    rec = reconstruct_packet(wpt_decompose(x, 4, "db20"), 3)
    assert np.sum(rec**2) >= 0.95 * np.sum(x**2)


def test_zero_signal_has_zero_ratios():
    tree = wpt_decompose(np.zeros(64), 2)
    assert tree.is_degenerate
    np.testing.assert_array_equal(energy_ratios(tree), np.zeros(4))


def test_decompose_errors():
    with pytest.raises(UnknownWavelet):
        wpt_decompose(np.zeros(64), 2, "nope")
    with pytest.raises(SignalTooShort):
        wpt_decompose(np.zeros(8), 4)
    tree = wpt_decompose(np.ones(64), 4)
    with pytest.raises(IndexOutOfRange):
        reconstruct_packet(tree, 17)
    with pytest.raises(IndexOutOfRange):
        reconstruct_packet(tree, 0)


def test_informative_packet_lookup(make_record):
    turning = [make_record(np.arange(32.0), tag="turning-11.43cm")]
    assert select_informative_packet(turning) == 10
    assert select_informative_packet(turning, {"turning-11.43cm": 2}) == 2
    mixed = turning + [make_record(np.arange(32.0), tag="milling")]
    with pytest.raises(MixedDatasetTags):
        select_informative_packet(mixed)


def test_informative_packet_auto(make_record):
    records = [
        make_record(tone(125.0, 1600.0, 512), "unstable", fs=1600.0, tag="t"),
        make_record(tone(600.0, 1600.0, 512), "stable", fs=1600.0, tag="t"),
    ]
    assert select_informative_packet(records, "auto") == 3
    with pytest.raises(NoUnstableRecords):
        select_informative_packet(records[1:], "auto")


def test_feature_vector_of_unit_sine():
    fv = wpt_feature_vector(tone(10.0, 1000.0, 1000), 1000.0).as_dict()
    assert fv["rms"] == pytest.approx(1 / np.sqrt(2))
    assert fv["peak"] == pytest.approx(1.0)
    assert fv["crest_factor"] == pytest.approx(np.sqrt(2))
    assert fv["kurtosis"] == pytest.approx(1.5, rel=1e-6)
    assert fv["frequency_center"] == pytest.approx(10.0)
    assert fv["standard_frequency"] == pytest.approx(0.0, abs=1e-6)


def test_constant_signal_is_degenerate():
    fv = wpt_feature_vector(np.full(16, 2.0), 100.0)
    assert fv.degenerate
    assert fv.as_dict()["mean"] == 2.0
    assert fv.as_dict()["crest_factor"] == 0.0
    assert len(fv.names) == len(FEATURE_NAMES) == 14


def test_featurize_wpt(tone_records):
    matrix = featurize_wpt(tone_records, packet={"turning-5.08cm": 2}, n_jobs=1)
    assert matrix.values.shape == (6, 14)
    assert matrix.meta["informative_packet"] == 2
