"""Records, manifests, label policy, seeded splits and feature tables."""
import hashlib
import logging
import math
import os
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd
import yaml
from sklearn.model_selection import train_test_split

from .errors import (
    EmptyDataset,
    InvalidParameter,
    IoError,
    MissingFile,
    ParseError,
)

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.10e"
HASH_PREFIX = "# config_hash: "


class StabilityLabel(Enum):
    STABLE = "stable"
    MILD_CHATTER = "mild_chatter"
    UNSTABLE = "unstable"
    UNKNOWN = "unknown"

    @classmethod
    def parse(cls, value: "str | StabilityLabel") -> "StabilityLabel":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {"s": "stable", "u": "unstable", "i": "mild_chatter", "mild": "mild_chatter",
                   "intermediate": "mild_chatter", "chatter": "unstable"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError as exc:
            raise ParseError(f"unknown stability label {value!r}") from exc

    @property
    def is_chatter(self) -> bool:
        return self in (StabilityLabel.UNSTABLE, StabilityLabel.MILD_CHATTER)


@dataclass(eq=False)
class TimeSeriesRecord:
    """One sampled vibration signal with its cutting parameters."""
    id: str
    samples: np.ndarray
    fs: float
    rpm: float
    depth_of_cut_mm: float
    label: StabilityLabel
    dataset_tag: str

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1 or self.samples.size < 2:
            raise InvalidParameter(f"record {self.id}: need a 1-D series of at least 2 samples")
        if not np.all(np.isfinite(self.samples)):
            raise InvalidParameter(f"record {self.id}: non-finite samples")
        if not (math.isfinite(self.fs) and self.fs > 0):
            raise InvalidParameter(f"record {self.id}: fs must be finite and positive")
        if self.rpm <= 0 or self.depth_of_cut_mm <= 0:
            raise InvalidParameter(f"record {self.id}: rpm and depth of cut must be positive")
        if not self.dataset_tag:
            raise InvalidParameter(f"record {self.id}: empty dataset tag")
        self.label = StabilityLabel.parse(self.label)

    @property
    def binary_label(self) -> int:
        """1 for chatter (Unstable or mild chatter), 0 for Stable; Unknown has no class."""
        if self.label is StabilityLabel.UNKNOWN:
            raise InvalidParameter(f"record {self.id}: Unknown label has no binary class")
        return int(self.label.is_chatter)

    def with_samples(self, samples: np.ndarray, fs: float) -> "TimeSeriesRecord":
        return TimeSeriesRecord(self.id, samples, fs, self.rpm, self.depth_of_cut_mm,
                                self.label, self.dataset_tag)


@dataclass
class FeatureVector:
    """Named features of one signal; ``degenerate`` marks conventional values."""
    values: np.ndarray
    names: tuple[str, ...]
    degenerate: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.names),):
            raise InvalidParameter("feature values and names differ in length")

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values.tolist()))


@dataclass
class ManifestEntry:
    id: str
    path: Path
    rpm: float
    depth_of_cut_mm: float
    label: StabilityLabel
    tag: str


@dataclass
class DatasetManifest:
    name: str
    fs_raw: float
    fs_target: float
    entries: list[ManifestEntry]
    series_format: str = "single"

    @property
    def tags(self) -> list[str]:
        return sorted({e.tag for e in self.entries})

    @property
    def decimation_factor(self) -> int:
        return int(round(self.fs_raw / self.fs_target))


def _field(record: dict, key: str, line: int, cast):
    if key not in record:
        raise ParseError(f"record {line}: missing field {key!r}")
    try:
        return cast(record[key])
    except (TypeError, ValueError) as exc:
        raise ParseError(f"record {line}: malformed {key!r}: {record[key]!r}") from exc


def load_manifest(path: str | Path) -> DatasetManifest:
    """Parse a YAML manifest and check that every series file exists.

    Args:
        path: Manifest file. Series paths are resolved relative to it.

    Returns:
        The parsed manifest.
    """
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"manifest not found: {path}")
    try:
        with open(path) as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: manifest must be a mapping")

    name = str(raw.get("name") or path.stem)
    try:
        fs_raw = float(raw["fs_raw"])
        fs_target = float(raw.get("fs_target", fs_raw))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: fs_raw/fs_target missing or malformed") from exc
    if fs_raw <= 0 or fs_target <= 0 or fs_target > fs_raw:
        raise ParseError(f"{path}: need 0 < fs_target <= fs_raw")
    series_format = str(raw.get("series_format", "single"))
    if series_format not in ("single", "two_column"):
        raise ParseError(f"{path}: series_format must be 'single' or 'two_column'")

    records = raw.get("records") or []
    if not isinstance(records, list) or not records:
        raise ParseError(f"{path}: empty record list")

    entries = []
    for i, rec in enumerate(records, start=1):
        if not isinstance(rec, dict):
            raise ParseError(f"record {i}: expected a mapping")
        file_path = path.parent / _field(rec, "file", i, str)
        if not file_path.exists():
            raise MissingFile(f"record {i}: series file not found: {file_path}")
        entries.append(ManifestEntry(
            id=str(rec.get("id") or file_path.stem),
            path=file_path,
            rpm=_field(rec, "rpm", i, float),
            depth_of_cut_mm=_field(rec, "depth_mm", i, float),
            label=StabilityLabel.parse(_field(rec, "label", i, str)),
            tag=str(rec.get("tag") or name),
        ))
    logger.debug("Loaded manifest %s with %d records", path, len(entries))
    return DatasetManifest(name, fs_raw, fs_target, entries, series_format)


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "name": manifest.name,
        "fs_raw": manifest.fs_raw,
        "fs_target": manifest.fs_target,
        "series_format": manifest.series_format,
        "records": [
            {
                "id": e.id,
                "file": Path(os.path.relpath(Path(e.path).resolve(), path.parent.resolve())).as_posix(),
                "rpm": e.rpm,
                "depth_mm": e.depth_of_cut_mm,
                "label": e.label.value,
                "tag": e.tag,
            }
            for e in manifest.entries
        ],
    }
    try:
        with open(path, "w") as f:
            yaml.safe_dump(doc, f, default_flow_style=False, sort_keys=False)
    except OSError as exc:
        raise IoError(f"cannot write manifest {path}: {exc}") from exc


def read_series(path: str | Path, series_format: str = "single") -> np.ndarray:
    try:
        data = np.loadtxt(path, dtype=float, ndmin=2 if series_format == "two_column" else 1)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if series_format == "two_column":
        if data.shape[1] < 2:
            raise ParseError(f"{path}: expected two columns (time, value)")
        return data[:, 1]
    return np.atleast_1d(data)


def write_series(path: str | Path, samples: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        np.savetxt(path, np.asarray(samples, dtype=float), fmt=FLOAT_FORMAT)
    except OSError as exc:
        raise IoError(f"cannot write series {path}: {exc}") from exc


def load_records(manifest: DatasetManifest) -> list[TimeSeriesRecord]:
    """Read every series of a manifest at its raw sampling rate."""
    return [
        TimeSeriesRecord(
            id=e.id,
            samples=read_series(e.path, manifest.series_format),
            fs=manifest.fs_raw,
            rpm=e.rpm,
            depth_of_cut_mm=e.depth_of_cut_mm,
            label=e.label,
            dataset_tag=e.tag,
        )
        for e in manifest.entries
    ]


def binarize_labels(records: Sequence[TimeSeriesRecord]) -> list[TimeSeriesRecord]:
    """Merge mild chatter into Unstable and drop Unknown records."""
    result = []
    for rec in records:
        if rec.label is StabilityLabel.UNKNOWN:
            continue
        if rec.label is StabilityLabel.MILD_CHATTER:
            rec = TimeSeriesRecord(rec.id, rec.samples, rec.fs, rec.rpm, rec.depth_of_cut_mm,
                                   StabilityLabel.UNSTABLE, rec.dataset_tag)
        result.append(rec)
    return result


@dataclass(frozen=True)
class SplitPlan:
    seeds: tuple[int, ...] = tuple(range(10))
    train_fraction: float = 0.67
    test_fraction: float = 0.70
    stratify: bool = False

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise InvalidParameter("seed list is empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise InvalidParameter("seeds must be distinct")
        for name in ("train_fraction", "test_fraction"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise InvalidParameter(f"{name} must lie in (0, 1], got {value}")

    @classmethod
    def from_config(cls, section: dict) -> "SplitPlan":
        return cls(
            seeds=tuple(section.get("seeds", range(10))),
            train_fraction=float(section.get("train_fraction", 0.67)),
            test_fraction=float(section.get("test_fraction", 0.70)),
            stratify=bool(section.get("stratify", False)),
        )


def split_size(n: int, fraction: float) -> int:
    """floor(n * fraction) with a minimum of one."""
    # 1e-9 keeps e.g. 0.7 * 50 from flooring to 34
    return max(1, math.floor(n * fraction + 1e-9))


def _draw(n: int, k: int, seed_rng: np.random.Generator, labels: np.ndarray | None) -> np.ndarray:
    if k >= n:
        return np.arange(n)
    if labels is None:
        return np.sort(seed_rng.choice(n, size=k, replace=False))
    state = int(seed_rng.integers(0, 2**31 - 1))
    chosen, _ = train_test_split(np.arange(n), train_size=k, stratify=labels, random_state=state)
    return np.sort(chosen)


def make_splits(
    source_ids: Sequence[str],
    target_ids: Sequence[str],
    plan: SplitPlan,
    *,
    source_labels: Sequence[int] | None = None,
    target_labels: Sequence[int] | None = None,
    disjoint: bool = False,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Draw one (train, test) index pair per seed.

    Train indices address ``source_ids``, test indices address ``target_ids``.
    With ``disjoint`` (self pairs) source and target are the same collection; the
    train set is the head of a seeded permutation and the test set comes from the
    remaining records, capped at ``test_fraction`` of the collection.
    """
    n_src, n_tgt = len(source_ids), len(target_ids)
    if n_src == 0 or n_tgt == 0:
        raise EmptyDataset("both source and target must contain records")
    if plan.stratify and (source_labels is None or target_labels is None):
        raise InvalidParameter("stratified splits need labels")

    splits = []
    for seed in plan.seeds:
        rng = np.random.default_rng(seed)
        if disjoint:
            if n_src != n_tgt:
                raise InvalidParameter("disjoint splits need source and target to coincide")
            if n_src < 2:
                raise EmptyDataset("a self pair needs at least two records")
            n_train = min(split_size(n_src, plan.train_fraction), n_src - 1)
            perm = rng.permutation(n_src)
            rest = perm[n_train:]
            n_test = min(split_size(n_tgt, plan.test_fraction), rest.size)
            splits.append((np.sort(perm[:n_train]), np.sort(rest[:n_test])))
            continue
        src_lab = np.asarray(source_labels) if plan.stratify else None
        tgt_lab = np.asarray(target_labels) if plan.stratify else None
        train = _draw(n_src, split_size(n_src, plan.train_fraction), rng, src_lab)
        test = _draw(n_tgt, split_size(n_tgt, plan.test_fraction), rng, tgt_lab)
        splits.append((train, test))
    return splits


def split_digest(splits: Sequence[tuple[np.ndarray, np.ndarray]]) -> str:
    """Hash of all index sets; equal digests mean identical draws."""
    h = hashlib.sha256()
    for train, test in splits:
        h.update(np.asarray(train, dtype=np.int64).tobytes())
        h.update(b"|")
        h.update(np.asarray(test, dtype=np.int64).tobytes())
        h.update(b";")
    return h.hexdigest()


def write_table(frame: pd.DataFrame, path: str | Path, config_hash: str | None, index: bool = False) -> None:
    """Write a CSV whose first line declares the producing config hash."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(path, "w", newline="") as f:
            if config_hash:
                f.write(f"{HASH_PREFIX}{config_hash}\n")
            frame.to_csv(f, index=index, float_format=FLOAT_FORMAT, lineterminator="\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_table(path: str | Path, index_col: int | None = None) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"table not found: {path}")
    return pd.read_csv(path, comment="#", index_col=index_col)


def table_config_hash(path: str | Path) -> str | None:
    with open(path) as f:
        first = f.readline().rstrip("\n")
    return first[len(HASH_PREFIX):] if first.startswith(HASH_PREFIX) else None


@dataclass(eq=False)
class FeatureMatrix:
    """Rows are records, columns are named features of one family."""
    record_ids: list[str]
    feature_names: list[str]
    values: np.ndarray
    labels: np.ndarray
    tag: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.record_ids = [str(r) for r in self.record_ids]
        self.feature_names = [str(n) for n in self.feature_names]
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.record_ids), len(self.feature_names))
        self.labels = np.asarray(self.labels, dtype=int)
        if self.labels.shape != (len(self.record_ids),):
            raise InvalidParameter("row count and label count differ")
        if not np.all(np.isfinite(self.values)):
            raise InvalidParameter("feature matrix contains NaN or inf")
        if not set(np.unique(self.labels)) <= {0, 1}:
            raise InvalidParameter("labels must be binary (0 = Stable, 1 = Unstable)")

    @classmethod
    def from_vectors(cls, records: Sequence[TimeSeriesRecord], vectors: Sequence[FeatureVector],
                     tag: str = "") -> "FeatureMatrix":
        if not vectors:
            raise EmptyDataset("no feature vectors")
        return cls(
            record_ids=[r.id for r in records],
            feature_names=list(vectors[0].names),
            values=np.vstack([v.values for v in vectors]),
            labels=np.array([r.binary_label for r in records]),
            tag=tag or (records[0].dataset_tag if records else ""),
        )

    def __len__(self) -> int:
        return len(self.record_ids)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def subset(self, indices: Sequence[int]) -> "FeatureMatrix":
        idx = np.asarray(indices, dtype=int)
        return FeatureMatrix([self.record_ids[i] for i in idx], self.feature_names,
                             self.values[idx], self.labels[idx], self.tag, dict(self.meta))

    def select(self, columns: Sequence[str]) -> "FeatureMatrix":
        pos = [self.feature_names.index(c) for c in columns]
        return FeatureMatrix(self.record_ids, list(columns), self.values[:, pos], self.labels,
                             self.tag, dict(self.meta))

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=self.feature_names)
        frame.insert(0, "label", self.labels)
        frame.insert(0, "record_id", self.record_ids)
        return frame

    def to_csv(self, path: str | Path, config_hash: str | None = None) -> None:
        write_table(self.to_frame(), path, config_hash)

    @classmethod
    def from_csv(cls, path: str | Path, tag: str = "") -> "FeatureMatrix":
        frame = read_table(path)
        if "record_id" not in frame.columns or "label" not in frame.columns:
            raise ParseError(f"{path}: expected record_id and label columns")
        names = [c for c in frame.columns if c not in ("record_id", "label")]
        return cls(frame["record_id"].astype(str).tolist(), names,
                   frame[names].to_numpy(dtype=float), frame["label"].to_numpy(dtype=int),
                   tag or Path(path).stem)
