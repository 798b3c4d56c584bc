from dataclasses import replace

import numpy as np
import pytest

from chatterkit.dataset import StabilityLabel, load_manifest
from chatterkit.errors import InvalidParameter, MissingFile, ParseError, SignalTooShort, UnresolvableDelay
from chatterkit.fpa import psd_estimate
from chatterkit.synth import (
    MillingModelParams,
    TurningModelParams,
    generate_benchmark,
    growth_label,
    load_corpus_spec,
    milling_preset,
    poincare_section,
    rightmost_root,
    section_spread,
    simulate_milling,
    simulate_turning,
    stability_limit,
    turning_preset,
)


def _terminal_rms(x):
    n = len(x) // 10
    return np.sqrt(np.mean(x[-n:] ** 2))


def test_no_regeneration_is_stable():
    params = TurningModelParams(omega_n=2 * np.pi * 950, zeta=0.03, kappa=0.0, spindle_period=0.03, duration=1.0)
    assert simulate_turning(params, seed=1).label is StabilityLabel.STABLE


def test_unstable_preset_grows():
    params = turning_preset("unstable")
    assert rightmost_root(params.omega_n, params.zeta, params.kappa, params.delay).real > 0
    record = simulate_turning(params, seed=2)
    assert record.label is StabilityLabel.UNSTABLE
    assert record.fs == 20000.0 and record.rpm == pytest.approx(2000.0)


def test_stable_preset_is_bounded():
    params = turning_preset("stable")
    assert rightmost_root(params.omega_n, params.zeta, params.kappa, params.delay).real < 0
    record = simulate_turning(params, seed=3)
    assert record.label is StabilityLabel.STABLE
    assert np.max(np.abs(record.samples)) < 10 * params.forcing_amplitude


def test_same_seed_same_record():
    params = turning_preset("stable", duration=0.05)
    a, b = simulate_turning(params, seed=9), simulate_turning(params, seed=9)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, simulate_turning(params, seed=10).samples)


def test_rightmost_root_without_regeneration():
    wn, zeta = 2 * np.pi * 500, 0.05
    s = rightmost_root(wn, zeta, 0.0, 0.01)
    assert s.real == pytest.approx(-zeta * wn, rel=1e-6)
    assert s.imag == pytest.approx(wn * np.sqrt(1 - zeta**2), rel=1e-6)


def test_stability_limit():
    assert stability_limit(0.03) == pytest.approx(0.0618)


def test_full_duty_milling_is_turning():
    turning = turning_preset("unstable", duration=0.1)
    milling = MillingModelParams(**{f: getattr(turning, f) for f in turning.__dataclass_fields__},
                                 teeth=1, radial_duty=1.0)
    a, b = simulate_turning(turning, seed=4), simulate_milling(milling, seed=4)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert a.label is b.label


@pytest.mark.parametrize("params", [turning_preset("stable"), milling_preset("stable")], ids=["turning", "milling"])
def test_step_halving_converges(params):
    coarse = simulate_milling(params, seed=5) if isinstance(params, MillingModelParams) else \
        simulate_turning(params, seed=5)
    fine_params = replace(params, substeps=2 * params.substeps)
    fine = simulate_milling(fine_params, seed=5) if isinstance(params, MillingModelParams) else \
        simulate_turning(fine_params, seed=5)
    assert _terminal_rms(fine.samples) == pytest.approx(_terminal_rms(coarse.samples), rel=0.01)


def test_milling_presets_are_labeled():
    assert simulate_milling(milling_preset("stable"), seed=6).label is StabilityLabel.STABLE
    assert simulate_milling(milling_preset("flip"), seed=6).label is StabilityLabel.UNSTABLE
    assert simulate_milling(milling_preset("hopf"), seed=6).label is StabilityLabel.UNSTABLE
    with pytest.raises(InvalidParameter):
        milling_preset("chaos")


def test_flip_preset_has_half_tooth_pass_content():
    params = milling_preset("flip")
    record = simulate_milling(params, seed=7)
    s = psd_estimate(record.samples, record.fs)
    f_tp = params.tooth_pass_hz
    band = s.abscissa > 0.5 * f_tp
    peak = s.abscissa[band][np.argmax(s.ordinate[band])]
    # period doubling puts the response at an odd multiple of f_tp / 2
    assert abs(peak - 1.5 * f_tp) < 0.1 * f_tp


def test_stable_preset_is_synchronous_with_tooth_pass():
    params = milling_preset("stable")
    record = simulate_milling(params, seed=8)
    s = psd_estimate(record.samples, record.fs)
    f_tp = params.tooth_pass_hz
    band = s.abscissa > 0.5 * f_tp
    peak = s.abscissa[band][np.argmax(s.ordinate[band])]
    bin_width = s.abscissa[1] - s.abscissa[0]
    harmonic = round(peak / f_tp) * f_tp
    assert abs(peak - harmonic) <= 2 * bin_width


def test_poincare_section():
    n = np.arange(2000)
    locked = np.sin(2 * np.pi * n / 50)
    points = poincare_section(locked, 50)
    assert points.shape[1] == 2
    np.testing.assert_allclose(points[:, 1], locked[np.arange(0, 2000 - 6, 50) + 6])
    assert np.max(np.linalg.norm(points - points.mean(axis=0), axis=1)) < 0.05

    quasi = locked + np.sin(2 * np.pi * n * np.sqrt(2) / 50)
    spread = np.linalg.norm(poincare_section(quasi, 50) - poincare_section(quasi, 50).mean(axis=0), axis=1)
    assert spread.max() > 0.2 * np.abs(quasi).max()
    with pytest.raises(SignalTooShort):
        poincare_section(np.zeros(10), 8)


def test_section_spread():
    n = np.arange(4000)
    period = 36.25
    locked = np.sin(2 * np.pi * n / period) + 0.3 * np.sin(4 * np.pi * n / period)
    assert section_spread(locked, period) < 0.05
    doubled = locked + np.sin(np.pi * n / period)
    assert section_spread(doubled, period) > 0.2
    with pytest.raises(SignalTooShort):
        section_spread(np.zeros(100), 60)


def test_growth_label():
    x = np.r_[np.full(100, 0.1), np.full(800, 0.2), np.full(100, 1.0)]
    assert growth_label(x) is StabilityLabel.UNSTABLE
    assert growth_label(np.ones(1000)) is StabilityLabel.STABLE


def test_unresolvable_delay():
    with pytest.raises(UnresolvableDelay):
        TurningModelParams(omega_n=1000.0, zeta=0.05, kappa=0.1, spindle_period=0.0005, fs=20000.0)
    with pytest.raises(InvalidParameter):
        TurningModelParams(omega_n=1000.0, zeta=1.5, kappa=0.1, spindle_period=0.01)
    with pytest.raises(InvalidParameter):
        MillingModelParams(omega_n=1000.0, zeta=0.05, kappa=0.1, spindle_period=0.01, radial_duty=0.0)


CORPUS = """\
duration: 0.1
noise_level: 0.005
tags:
- tag: turning-8.89cm
  model: turning
  natural_hz: 1250
  zeta: 0.03
  fs_raw: 20000
  fs_target: 10000
  rpm: [1500, 3000]
  stable: {count: 2, kappa_factor: [0.2, 0.6]}
  unstable: {count: 2, kappa_factor: [5.0, 6.0]}
- tag: milling
  model: milling
  natural_hz: 1000
  zeta: 0.02
  fs_raw: 25000
  fs_target: 12500
  stable: {count: 1, presets: [stable]}
  unstable: {count: 1, presets: [flip]}
"""


def test_generate_benchmark(tmp_path):
    spec_path = tmp_path / "corpus.yaml"
    spec_path.write_text(CORPUS)
    corpus = load_corpus_spec(spec_path)
    assert [t.tag for t in corpus.tags] == ["turning-8.89cm", "milling"]

    first = generate_benchmark(corpus, seed=11, out_dir=tmp_path / "a", n_jobs=1)
    assert [p.name for p in first] == ["turning-8.89cm.yaml", "milling.yaml"]
    turning = load_manifest(first[0])
    assert turning.fs_raw == 20000.0 and turning.decimation_factor == 2
    assert [e.label for e in turning.entries] == [StabilityLabel.STABLE] * 2 + [StabilityLabel.UNSTABLE] * 2
    assert [e.label for e in load_manifest(first[1]).entries] == [StabilityLabel.STABLE, StabilityLabel.UNSTABLE]

    second = generate_benchmark(corpus, seed=11, out_dir=tmp_path / "b", n_jobs=1)
    for a, b in zip(first, second):
        assert a.read_bytes() == b.read_bytes()
        for fa in sorted((a.parent / a.stem).iterdir()):
            assert fa.read_bytes() == (b.parent / b.stem / fa.name).read_bytes()


def test_corpus_spec_errors(tmp_path):
    with pytest.raises(MissingFile):
        load_corpus_spec(tmp_path / "absent.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("tags: []\n")
    with pytest.raises(ParseError):
        load_corpus_spec(bad)
    bad.write_text(CORPUS.replace("  natural_hz: 1250\n", ""))
    with pytest.raises(ParseError, match="tag 1"):
        load_corpus_spec(bad)
    bad.write_text(CORPUS.replace("[0.2, 0.6]", "[0.6, 0.2]"))
    with pytest.raises(ParseError, match="reversed"):
        load_corpus_spec(bad)
