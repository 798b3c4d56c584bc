"""Regenerative-chatter delay oscillators and synthetic benchmark corpora."""
import logging
import math
from dataclasses import dataclass, replace
from functools import partial
from pathlib import Path

import numpy as np
import yaml
from numba import njit
from scipy.optimize import root

from .dataset import (
    DatasetManifest,
    ManifestEntry,
    StabilityLabel,
    TimeSeriesRecord,
    save_manifest,
    write_series,
)
from .errors import InvalidConfiguration, InvalidParameter, MissingFile, ParseError, SignalTooShort, UnresolvableDelay
from .parallel import parallel_map

logger = logging.getLogger(__name__)

# delay must span at least this many samples
MIN_DELAY_SAMPLES = 20
LABEL_WINDOW = 0.10
GROWTH_RATIO = 3.0
# once-per-tooth samples spreading beyond this fraction of the signal std mean chatter
SECTION_SPREAD = 0.2
POINCARE_DELAY = 6
MAX_ATTEMPTS = 25


@dataclass(frozen=True)
class TurningModelParams:
    """x'' + 2 zeta wn x' + wn^2 x = kappa wn^2 (x(t - tau) - x(t)) + noise, while in contact."""
    omega_n: float
    zeta: float
    kappa: float
    spindle_period: float
    noise_level: float = 0.01
    duration: float = 0.3
    fs: float = 20000.0
    chip_thickness: float = 1.0
    depth_of_cut_mm: float = 1.0
    substeps: int = 8

    def __post_init__(self):
        if not 0.0 < self.zeta < 1.0:
            raise InvalidParameter(f"zeta must lie in (0, 1), got {self.zeta}")
        if self.omega_n <= 0 or self.spindle_period <= 0:
            raise InvalidParameter("omega_n and spindle_period must be positive")
        if self.kappa < 0 or self.noise_level < 0:
            raise InvalidParameter("kappa and noise_level must be non-negative")
        if self.duration <= 0 or self.fs <= 0 or self.substeps < 1:
            raise InvalidParameter("duration, fs and substeps must be positive")
        if self.fs * self.delay < MIN_DELAY_SAMPLES:
            raise UnresolvableDelay(
                f"delay {self.delay:.3g} s spans {self.fs * self.delay:.1f} samples; need {MIN_DELAY_SAMPLES}")

    @property
    def delay(self) -> float:
        return self.spindle_period

    @property
    def rpm(self) -> float:
        return 60.0 / self.spindle_period

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.fs))

    @property
    def duty(self) -> float:
        return 1.0

    @property
    def forcing_amplitude(self) -> float:
        if self.duty >= 1.0:
            return self.noise_level
        return max(self.noise_level, self.kappa * self.chip_thickness)


@dataclass(frozen=True)
class MillingModelParams(TurningModelParams):
    """Same oscillator with the cut active for ``duty`` of every tooth period."""
    teeth: int = 1
    radial_duty: float = 1.0

    def __post_init__(self):
        if self.teeth < 1:
            raise InvalidParameter("tooth count must be >= 1")
        if not 0.0 < self.radial_duty <= 1.0:
            raise InvalidParameter(f"duty must lie in (0, 1], got {self.radial_duty}")
        super().__post_init__()

    @property
    def delay(self) -> float:
        return self.spindle_period / self.teeth

    @property
    def duty(self) -> float:
        return self.radial_duty

    @property
    def tooth_pass_hz(self) -> float:
        return 1.0 / self.delay


@njit(cache=True)
def _gate(a, b, period, duty):
    """Fraction of [a, b] during which the tooth is cutting."""
    if duty >= 1.0:
        return 1.0
    on = duty * period
    ca = math.floor(a / period) * on + min(a - math.floor(a / period) * period, on)
    cb = math.floor(b / period) * on + min(b - math.floor(b / period) * period, on)
    return (cb - ca) / (b - a)


@njit(cache=True)
def _delayed(hist, step, s, dt, x0, v0, wn):
    if s < 0.0:
        # free undamped motion before t = 0
        return x0 * math.cos(wn * s) + v0 / wn * math.sin(wn * s)
    pos = s / dt
    i = int(math.floor(pos))
    if i >= step:
        return hist[step]
    frac = pos - i
    return hist[i] * (1.0 - frac) + hist[i + 1] * frac


@njit(cache=True)
def _accel(x, v, xd, g, wn, zeta, kappa, h0, duty, noise):
    cut = h0 + xd - x
    if cut < 0.0:
        cut = 0.0
    force = kappa * wn * wn * (g * cut - duty * h0)
    return -2.0 * zeta * wn * v - wn * wn * x + force + noise


@njit(cache=True)
def _integrate(n_out, substeps, dt, wn, zeta, kappa, h0, delay, duty, noise, x0, v0):
    n_steps = n_out * substeps
    hist = np.empty(n_steps + 1)
    out = np.empty(n_out)
    hist[0] = x0
    out[0] = x0
    x = x0
    v = v0
    half = 0.5 * dt
    for step in range(n_steps):
        t = step * dt
        a_n = noise[step // substeps]
        g = _gate(t, t + dt, delay, duty)
        xd1 = _delayed(hist, step, t - delay, dt, x0, v0, wn)
        xd2 = _delayed(hist, step, t + half - delay, dt, x0, v0, wn)
        xd3 = _delayed(hist, step, t + dt - delay, dt, x0, v0, wn)
        k1x = v
        k1v = _accel(x, v, xd1, g, wn, zeta, kappa, h0, duty, a_n)
        k2x = v + half * k1v
        k2v = _accel(x + half * k1x, v + half * k1v, xd2, g, wn, zeta, kappa, h0, duty, a_n)
        k3x = v + half * k2v
        k3v = _accel(x + half * k2x, v + half * k2v, xd2, g, wn, zeta, kappa, h0, duty, a_n)
        k4x = v + dt * k3v
        k4v = _accel(x + dt * k3x, v + dt * k3v, xd3, g, wn, zeta, kappa, h0, duty, a_n)
        x += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        hist[step + 1] = x
        if (step + 1) % substeps == 0:
            k = (step + 1) // substeps
            if k < n_out:
                out[k] = x
    return out


def growth_label(x: np.ndarray, window: float = LABEL_WINDOW, ratio: float = GROWTH_RATIO) -> StabilityLabel:
    """Unstable when the terminal-window RMS exceeds ``ratio`` times the initial-window RMS."""
    x = np.asarray(x, dtype=float)
    n = max(1, int(window * x.size))
    initial = np.sqrt(np.mean(x[:n] ** 2))
    terminal = np.sqrt(np.mean(x[-n:] ** 2))
    return StabilityLabel.UNSTABLE if terminal > ratio * initial else StabilityLabel.STABLE


def section_spread(x: np.ndarray, period: float) -> float:
    """Std of once-per-period samples over the second half of ``x``, relative to its std there.

    Samples are linearly interpolated at exact multiples of ``period`` (in samples), so
    a non-integer tooth period does not smear a period-locked response.
    """
    x = np.asarray(x, dtype=float)
    if period <= 0:
        raise InvalidParameter("period must be positive")
    tail = x[x.size // 2:]
    if tail.size <= 2 * period:
        raise SignalTooShort(f"second half holds {tail.size} samples, fewer than two periods of {period:.1f}")
    positions = np.arange(0.0, tail.size - 1, period)
    points = np.interp(positions, np.arange(tail.size), tail)
    scale = tail.std()
    return float(points.std() / scale) if scale > 0 else 0.0


def section_label(x: np.ndarray, period: float, threshold: float = SECTION_SPREAD) -> StabilityLabel:
    """Unstable unless the response is locked to the forcing period."""
    return StabilityLabel.UNSTABLE if section_spread(x, period) > threshold else StabilityLabel.STABLE


def _simulate(params: TurningModelParams, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    h = 1.0 / params.fs
    wn = params.omega_n
    # white acceleration giving a displacement RMS of noise_level on the free oscillator
    sigma_a = params.noise_level * math.sqrt(4.0 * params.zeta * wn ** 3 / h)
    noise = sigma_a * rng.standard_normal(params.n_samples)
    # start from the free oscillator's stationary distribution
    x0 = params.noise_level * rng.standard_normal()
    v0 = params.noise_level * wn * rng.standard_normal()
    return _integrate(params.n_samples, params.substeps, h / params.substeps, wn, params.zeta,
                      params.kappa, params.chip_thickness, params.delay, params.duty, noise, x0, v0)


def simulate_turning(params: TurningModelParams, seed: int = 0, record_id: str | None = None,
                     tag: str = "turning") -> TimeSeriesRecord:
    """Fixed-step RK4 trajectory of the regenerative oscillator, labeled by RMS growth."""
    x = _simulate(params, seed)
    return TimeSeriesRecord(record_id or f"{tag}-{seed}", x, params.fs, params.rpm,
                            params.depth_of_cut_mm, growth_label(x), tag)


def simulate_milling(params: MillingModelParams, seed: int = 0, record_id: str | None = None,
                     tag: str = "milling") -> TimeSeriesRecord:
    """Interrupted-cut trajectory; with duty 1 it is the turning trajectory.

    The tooth impacts force a periodic response from the first cut, so growth over
    the record says little; interrupted cuts are labeled by Poincare-section spread.
    """
    x = _simulate(params, seed)
    label = growth_label(x) if params.duty >= 1.0 else section_label(x, params.fs * params.delay)
    return TimeSeriesRecord(record_id or f"{tag}-{seed}", x, params.fs, params.rpm,
                            params.depth_of_cut_mm, label, tag)


def stability_limit(zeta: float) -> float:
    """Smallest kappa at which the continuous-cut oscillator can chatter."""
    return 2.0 * zeta * (1.0 + zeta)


def rightmost_root(omega_n: float, zeta: float, kappa: float, delay: float, n_guesses: int = 64) -> complex:
    """Rightmost characteristic root of s^2 + 2 zeta wn s + wn^2 (1 + kappa - kappa e^{-s tau}).

    Roots are polished with ``scipy.optimize.root`` from a ladder of guesses on
    the imaginary axis around the natural frequency.
    """
    T = omega_n * delay

    def residual(z):
        s = complex(z[0], z[1])
        r = s * s + 2.0 * zeta * s + 1.0 + kappa - kappa * np.exp(-s * T)
        return [r.real, r.imag]

    # roots sit about 2 pi / T apart along the imaginary axis
    n_guesses = max(n_guesses, int(4 * 1.8 * T / (2.0 * np.pi)))
    best = None
    for w in np.linspace(0.2, 2.0, n_guesses):
        for sigma in (-zeta, 0.0, zeta):
            sol = root(residual, [sigma, w], method="hybr")
            if not sol.success or abs(complex(*residual(sol.x))) > 1e-9:
                continue
            if best is None or sol.x[0] > best.real:
                best = complex(sol.x[0], abs(sol.x[1]))
    if best is None:
        raise InvalidParameter("no characteristic root found")
    return best * omega_n


def milling_preset(name: str, fs: float = 25000.0, duration: float = 0.3, noise_level: float = 0.005,
                   natural_hz: float = 1000.0, zeta: float = 0.02, duty: float = 0.05) -> MillingModelParams:
    """Low-immersion presets: ``stable``, ``flip`` (period doubling) and ``hopf`` (quasi-periodic)."""
    # (omega_n * tooth period / pi, cutting-stiffness ratio)
    table = {"stable": (2.9, 0.22), "flip": (2.9, 2.2), "hopf": (3.5, 2.73)}
    if name not in table:
        raise InvalidParameter(f"unknown milling preset {name!r}; expected one of {sorted(table)}")
    theta, kappa = table[name]
    wn = 2.0 * np.pi * natural_hz
    return MillingModelParams(omega_n=wn, zeta=zeta, kappa=kappa, spindle_period=theta * np.pi / wn,
                              noise_level=noise_level, duration=duration, fs=fs, teeth=1, radial_duty=duty)


def turning_preset(name: str, natural_hz: float = 950.0, zeta: float = 0.03, rpm: float = 2000.0,
                   fs: float = 20000.0, duration: float = 0.3) -> TurningModelParams:
    """``stable`` sits at 0.3 and ``unstable`` at 5 times the stability limit."""
    factors = {"stable": 0.3, "unstable": 5.0}
    if name not in factors:
        raise InvalidParameter(f"unknown turning preset {name!r}; expected one of {sorted(factors)}")
    return TurningModelParams(omega_n=2.0 * np.pi * natural_hz, zeta=zeta,
                              kappa=factors[name] * stability_limit(zeta), spindle_period=60.0 / rpm,
                              fs=fs, duration=duration)


def poincare_section(x: np.ndarray, period: float, delay: int = POINCARE_DELAY) -> np.ndarray:
    """Points (x_n, x_{n+delay}) taken once per forcing period of ``period`` samples."""
    x = np.asarray(x, dtype=float)
    if delay < 1 or period <= 0:
        raise InvalidParameter("delay and period must be positive")
    if x.size <= delay + period:
        raise SignalTooShort(f"{x.size} samples cannot hold delay {delay} plus period {period}")
    idx = np.round(np.arange(0.0, x.size - delay, period)).astype(int)
    idx = idx[idx + delay < x.size]
    return np.column_stack([x[idx], x[idx + delay]])


# ---------------------------------------------------------------------------
# Benchmark corpora
# ---------------------------------------------------------------------------

@dataclass
class ClassSpec:
    count: int
    kappa_factor: tuple[float, float] = (1.0, 1.0)
    presets: tuple[str, ...] = ()


@dataclass
class TagSpec:
    tag: str
    model: str
    natural_hz: float
    zeta: float
    fs_raw: float
    fs_target: float
    stable: ClassSpec
    unstable: ClassSpec
    rpm: tuple[float, float] = (1500.0, 3000.0)
    duty: float = 0.05
    jitter: float = 0.03


@dataclass
class CorpusSpec:
    tags: list[TagSpec]
    duration: float = 0.3
    noise_level: float = 0.01
    depth_per_kappa_mm: float = 1.0


def _pair(value, name: str) -> tuple[float, float]:
    lo, hi = (value, value) if np.isscalar(value) else value
    if lo > hi:
        raise ParseError(f"{name}: range [{lo}, {hi}] is reversed")
    return float(lo), float(hi)


def _class_spec(raw: dict, name: str) -> ClassSpec:
    if not isinstance(raw, dict) or "count" not in raw:
        raise ParseError(f"{name}: expected a mapping with a count")
    return ClassSpec(int(raw["count"]), _pair(raw.get("kappa_factor", 1.0), name),
                     tuple(raw.get("presets", ())))


def load_corpus_spec(path: str | Path) -> CorpusSpec:
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"corpus spec not found: {path}")
    with open(path) as f:
        try:
            raw = yaml.safe_load(f) or {}
        except yaml.YAMLError as exc:
            raise ParseError(f"{path}: {exc}") from exc
    tags = []
    for i, t in enumerate(raw.get("tags") or [], start=1):
        try:
            tags.append(TagSpec(
                tag=str(t["tag"]),
                model=str(t.get("model", "turning")),
                natural_hz=float(t["natural_hz"]),
                zeta=float(t["zeta"]),
                fs_raw=float(t["fs_raw"]),
                fs_target=float(t.get("fs_target", t["fs_raw"])),
                stable=_class_spec(t["stable"], f"tag {i} stable"),
                unstable=_class_spec(t["unstable"], f"tag {i} unstable"),
                rpm=_pair(t.get("rpm", (1500.0, 3000.0)), f"tag {i} rpm"),
                duty=float(t.get("duty", 0.05)),
                jitter=float(t.get("jitter", 0.03)),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: tag {i}: {exc}") from exc
    if not tags:
        raise ParseError(f"{path}: no tags")
    return CorpusSpec(tags, float(raw.get("duration", 0.3)), float(raw.get("noise_level", 0.01)),
                      float(raw.get("depth_per_kappa_mm", 1.0)))


def _draw_params(tag: TagSpec, cls: ClassSpec, corpus: CorpusSpec, rng: np.random.Generator) -> TurningModelParams:
    kappa_min = stability_limit(tag.zeta)
    if tag.model == "milling":
        preset = milling_preset(str(rng.choice(cls.presets or ("stable",))), fs=tag.fs_raw,
                                duration=corpus.duration, noise_level=corpus.noise_level,
                                natural_hz=tag.natural_hz, zeta=tag.zeta, duty=tag.duty)
        scale = 1.0 + tag.jitter * rng.uniform(-1.0, 1.0)
        kappa = preset.kappa * (1.0 + tag.jitter * rng.uniform(-1.0, 1.0))
        return replace(preset, spindle_period=preset.spindle_period * scale, kappa=kappa,
                       depth_of_cut_mm=kappa * corpus.depth_per_kappa_mm)
    if tag.model != "turning":
        raise InvalidConfiguration(f"tag {tag.tag!r}: unknown model {tag.model!r}")
    kappa = kappa_min * rng.uniform(*cls.kappa_factor)
    rpm = rng.uniform(*tag.rpm)
    return TurningModelParams(omega_n=2.0 * np.pi * tag.natural_hz, zeta=tag.zeta, kappa=kappa,
                              spindle_period=60.0 / rpm, noise_level=corpus.noise_level,
                              duration=corpus.duration, fs=tag.fs_raw,
                              depth_of_cut_mm=kappa / kappa_min * corpus.depth_per_kappa_mm)


def _generate_one(task: tuple[int, int, StabilityLabel], corpus: CorpusSpec, seed: int) -> TimeSeriesRecord:
    tag_index, index, wanted = task
    tag = corpus.tags[tag_index]
    cls = tag.stable if wanted is StabilityLabel.STABLE else tag.unstable
    rng = np.random.default_rng([seed, tag_index, index])
    record_id = f"{tag.tag}-{index:04d}"
    simulate = simulate_milling if tag.model == "milling" else simulate_turning
    for _ in range(MAX_ATTEMPTS):
        params = _draw_params(tag, cls, corpus, rng)
        record = simulate(params, int(rng.integers(2**31 - 1)), record_id, tag.tag)
        if record.label is wanted:
            return record
    raise InvalidConfiguration(
        f"tag {tag.tag!r}: no {wanted.value} trajectory in {MAX_ATTEMPTS} draws; widen kappa_factor")


def generate_benchmark(corpus: CorpusSpec, seed: int, out_dir: str | Path,
                       n_jobs: int | None = None) -> list[Path]:
    """Simulate every tag, write series files and one manifest per tag.

    Args:
        corpus: Per-tag model parameters and class counts.
        seed: Corpus seed; record ``i`` of tag ``j`` uses the seed sequence [seed, j, i].
        out_dir: Destination; series go to ``<out>/<tag>/``, manifests to ``<out>/<tag>.yaml``.
        n_jobs: Simulation workers.

    Returns:
        Paths of the written manifests.
    """
    out = Path(out_dir)
    manifests = []
    for j, tag in enumerate(corpus.tags):
        wanted = [StabilityLabel.STABLE] * tag.stable.count + [StabilityLabel.UNSTABLE] * tag.unstable.count
        tasks = [(j, i, label) for i, label in enumerate(wanted)]
        records = parallel_map(partial(_generate_one, corpus=corpus, seed=seed), tasks,
                               n_jobs=n_jobs, desc=tag.tag)
        entries = []
        for rec in records:
            path = out / tag.tag / f"{rec.id}.txt"
            write_series(path, rec.samples)
            entries.append(ManifestEntry(rec.id, path, round(rec.rpm, 6), round(rec.depth_of_cut_mm, 6),
                                         rec.label, tag.tag))
        manifest = DatasetManifest(tag.tag, tag.fs_raw, tag.fs_target, entries)
        manifest_path = out / f"{tag.tag}.yaml"
        save_manifest(manifest, manifest_path)
        manifests.append(manifest_path)
        logger.info("Wrote %d records for %s", len(entries), tag.tag)
    return manifests
