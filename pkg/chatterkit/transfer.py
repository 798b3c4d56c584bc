"""Source -> target pairing, the featurizer x classifier grid and BM/MIEB accounting."""
import itertools
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .dataset import FeatureMatrix, SplitPlan, make_splits, read_table, split_digest, write_table
from .dtw import DistanceMatrix, knn_predict
from .errors import (
    IncompleteReport,
    InvalidConfiguration,
    MissingFeatures,
    TooFewTags,
)
from .learn import ClassifierKind, ClassifierSpec, EvalSummary, evaluate_realizations, scores, summarize
from .parallel import parallel_map
from .tda import DiagramFeatures, carlsson_feature_subsets

logger = logging.getLogger(__name__)

DTW_FEATURIZER = "dtw"
CC_FEATURIZER = "tda_cc"
METRICS = ("accuracy", "f1")
BAND_MODES = ("std", "overlap")
# per-tag matrices, or diagrams vectorized on demand for each source tag
FeatureSource = Mapping[str, FeatureMatrix] | DiagramFeatures


@dataclass(frozen=True)
class TransferPair:
    source_tag: str
    target_tag: str

    @property
    def traditional(self) -> bool:
        return self.source_tag == self.target_tag

    @property
    def name(self) -> str:
        return f"{self.source_tag}__{self.target_tag}"


def enumerate_pairs(tags: Sequence[str], include_traditional: bool = False) -> list[TransferPair]:
    """All ordered (source, target) pairs of distinct tags, plus self pairs on request."""
    unique = list(dict.fromkeys(tags))
    if len(unique) < 2:
        raise TooFewTags(f"need at least two dataset tags, got {unique}")
    pairs = [TransferPair(s, t) for s, t in itertools.permutations(unique, 2)]
    if include_traditional:
        pairs += [TransferPair(t, t) for t in unique]
    return pairs


@dataclass
class DtwDistances:
    """Precomputed DTW inputs: one pairwise matrix per tag, one cross matrix per ordered pair."""
    pairwise: dict[str, DistanceMatrix] = field(default_factory=dict)
    cross: dict[tuple[str, str], DistanceMatrix] = field(default_factory=dict)
    labels: dict[str, np.ndarray] = field(default_factory=dict)

    def for_pair(self, pair: TransferPair) -> DistanceMatrix:
        """Rows = target records, columns = source records."""
        if pair.traditional:
            if pair.source_tag not in self.pairwise:
                raise MissingFeatures(f"no pairwise DTW matrix for tag {pair.source_tag!r}")
            return self.pairwise[pair.source_tag]
        key = (pair.source_tag, pair.target_tag)
        if key not in self.cross:
            raise MissingFeatures(f"no cross DTW matrix for {pair.source_tag!r} -> {pair.target_tag!r}")
        return self.cross[key]


@dataclass
class ReportRow:
    pair: TransferPair
    featurizer: str
    classifier: str
    summary: EvalSummary
    detail: str = ""


@dataclass
class TransferReport:
    rows: list[ReportRow] = field(default_factory=list)

    @property
    def pairs(self) -> list[TransferPair]:
        return list(dict.fromkeys(r.pair for r in self.rows))

    @property
    def featurizers(self) -> list[str]:
        return list(dict.fromkeys(r.featurizer for r in self.rows))

    @property
    def tags(self) -> list[str]:
        return list(dict.fromkeys(t for p in self.pairs for t in (p.source_tag, p.target_tag)))

    def summaries(self, pair: TransferPair, featurizer: str) -> list[ReportRow]:
        return [r for r in self.rows if r.pair == pair and r.featurizer == featurizer]

    def best(self, pair: TransferPair, featurizer: str, metric: str = "accuracy") -> ReportRow | None:
        """Highest-mean classifier for one (pair, featurizer); the first listed wins ties."""
        best = None
        for row in self.summaries(pair, featurizer):
            if best is None or row.summary.metric(metric)[0] > best.summary.metric(metric)[0]:
                best = row
        return best

    def to_frame(self) -> pd.DataFrame:
        records = []
        for r in self.rows:
            s = r.summary
            entry = {
                "source": r.pair.source_tag,
                "target": r.pair.target_tag,
                "featurizer": r.featurizer,
                "classifier": r.classifier,
                "detail": r.detail,
                "mean_accuracy": s.mean_accuracy,
                "std_accuracy": s.std_accuracy,
                "mean_f1": s.mean_f1,
                "std_f1": s.std_f1,
                "mean_train_accuracy": float(s.train_accuracies.mean()),
                "mean_train_f1": float(s.train_f1s.mean()),
                "split_digest": s.split_digest,
            }
            for i in range(s.n_realizations):
                entry[f"accuracy_{i}"] = s.accuracies[i]
                entry[f"f1_{i}"] = s.f1s[i]
                entry[f"train_accuracy_{i}"] = s.train_accuracies[i]
                entry[f"train_f1_{i}"] = s.train_f1s[i]
            records.append(entry)
        return pd.DataFrame.from_records(records)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "TransferReport":
        n = sum(1 for c in frame.columns if c.startswith("accuracy_"))
        rows = []
        for rec in frame.fillna({"detail": ""}).to_dict("records"):
            per_seed = [(rec[f"accuracy_{i}"], rec[f"f1_{i}"], rec[f"train_accuracy_{i}"],
                         rec[f"train_f1_{i}"]) for i in range(n)]
            rows.append(ReportRow(TransferPair(str(rec["source"]), str(rec["target"])),
                                  str(rec["featurizer"]), str(rec["classifier"]),
                                  summarize(per_seed, str(rec["split_digest"])), str(rec["detail"])))
        return cls(rows)

    @classmethod
    def from_csv(cls, path: str | Path) -> "TransferReport":
        return cls.from_frame(read_table(path))

    def heatmap(self, featurizer: str, metric: str = "accuracy") -> pd.DataFrame:
        """Best-classifier mean per pair; rows = train tag, columns = test tag."""
        tags = self.tags
        grid = pd.DataFrame(np.nan, index=pd.Index(tags, name="train"), columns=tags)
        for pair in self.pairs:
            best = self.best(pair, featurizer, metric)
            if best is not None:
                grid.loc[pair.source_tag, pair.target_tag] = best.summary.metric(metric)[0]
        return grid

    def write(self, out_dir: str | Path, config_hash: str | None, groups: Mapping[str, Sequence[str]],
              band: str = "std") -> list[Path]:
        """Write results.csv, per-pair CSVs, heatmaps and BM/MIEB tables; returns the paths."""
        out = Path(out_dir)
        written = []
        frame = self.to_frame()
        path = out / "results.csv"
        write_table(frame, path, config_hash)
        written.append(path)
        for pair in self.pairs:
            mask = (frame["source"] == pair.source_tag) & (frame["target"] == pair.target_tag)
            path = out / "pairs" / f"{pair.name}.csv"
            write_table(frame[mask], path, config_hash)
            written.append(path)
        for metric in METRICS:
            for featurizer in self.featurizers:
                path = out / "heatmaps" / f"{featurizer}_{metric}.csv"
                write_table(self.heatmap(featurizer, metric), path, config_hash, index=True)
                written.append(path)
            counts = count_best_and_error_band(self, groups, metric, band)
            table = pd.DataFrame.from_dict(counts, orient="index")
            table.index.name = "group"
            path = out / f"bm_mieb_{metric}.csv"
            write_table(table, path, config_hash, index=True)
            written.append(path)
        return written


def classifier_suite(names: Mapping[str, Sequence[str]], knn_ks: Sequence[int] = (1, 2, 3, 4, 5),
                     hyperparameters: Mapping[str, dict] | None = None) -> dict[str, list[ClassifierSpec]]:
    """Expand featurizer -> classifier names; ``knn`` becomes one spec per k."""
    hyperparameters = hyperparameters or {}
    suite = {}
    for featurizer, kinds in names.items():
        specs = []
        for kind in kinds:
            if kind == ClassifierKind.KNN_PRECOMPUTED.value:
                specs += [ClassifierSpec.from_name(kind, k=int(k)) for k in knn_ks]
            else:
                specs.append(ClassifierSpec.from_name(kind, **hyperparameters.get(kind, {})))
        suite[featurizer] = specs
    return suite


def _matrices(entry: FeatureSource, source_tag: str) -> Mapping[str, FeatureMatrix]:
    return entry if isinstance(entry, Mapping) else entry.for_source(source_tag)


def _check_grid(featurizers: Mapping[str, FeatureSource],
                classifiers: Mapping[str, Sequence[ClassifierSpec]], dtw: DtwDistances | None) -> None:
    for name, specs in classifiers.items():
        knn = [s.kind is ClassifierKind.KNN_PRECOMPUTED for s in specs]
        if name == DTW_FEATURIZER and not all(knn):
            raise InvalidConfiguration("DTW distances can only be classified with knn")
        if name != DTW_FEATURIZER and any(knn):
            raise InvalidConfiguration(f"knn needs DTW distances; featurizer {name!r} yields feature vectors")
        if name == DTW_FEATURIZER and dtw is None:
            raise MissingFeatures("no DTW distances supplied")
        if name != DTW_FEATURIZER and name not in featurizers:
            raise MissingFeatures(f"no features for featurizer {name!r}")


def _record_ids(tag: str, source_tag: str, featurizers: Mapping[str, FeatureSource],
                dtw: DtwDistances | None, names: Sequence[str]) -> tuple[list[str], np.ndarray]:
    ids, labels = None, None
    for name in names:
        if name == DTW_FEATURIZER:
            if tag not in dtw.pairwise or tag not in dtw.labels:
                raise MissingFeatures(f"no DTW distances for tag {tag!r}")
            cur_ids, cur_labels = dtw.pairwise[tag].row_ids, np.asarray(dtw.labels[tag])
        else:
            if tag not in featurizers[name] or source_tag not in featurizers[name]:
                missing = tag if tag not in featurizers[name] else source_tag
                raise MissingFeatures(f"featurizer {name!r} has no features for tag {missing!r}")
            matrix = _matrices(featurizers[name], source_tag)[tag]
            cur_ids, cur_labels = matrix.record_ids, matrix.labels
        if ids is None:
            ids, labels = cur_ids, cur_labels
        elif cur_ids != ids:
            raise InvalidConfiguration(f"featurizer {name!r} orders the records of {tag!r} differently")
    return ids, labels


def _knn_summary(pair: TransferPair, dtw: DtwDistances, k: int,
                 splits: Sequence[tuple[np.ndarray, np.ndarray]]) -> EvalSummary:
    cross = dtw.for_pair(pair)
    own = dtw.pairwise[pair.source_tag]
    src_labels = np.asarray(dtw.labels[pair.source_tag])
    tgt_labels = np.asarray(dtw.labels[pair.target_tag])
    per_seed = []
    for train_idx, test_idx in splits:
        train_labels = src_labels[train_idx]
        acc, f1 = scores(tgt_labels[test_idx], knn_predict(cross.take(test_idx, train_idx), train_labels, k))
        train_acc, train_f1 = scores(train_labels, knn_predict(own.take(train_idx, train_idx), train_labels, k))
        per_seed.append((acc, f1, train_acc, train_f1))
    return summarize(per_seed, split_digest(splits))


def _cc_subset_search(spec: ClassifierSpec, source: FeatureMatrix, target: FeatureMatrix,
                      plan: SplitPlan, splits) -> tuple[EvalSummary, str]:
    best, best_subset = None, ""
    for subset in carlsson_feature_subsets():
        summary = evaluate_realizations(spec, source.select(subset), target.select(subset), plan,
                                        splits=splits, n_jobs=1)
        if best is None or summary.mean_accuracy > best.mean_accuracy:
            best, best_subset = summary, "+".join(subset)
    return best, best_subset


def run_transfer(
    pairs: Sequence[TransferPair],
    featurizers: Mapping[str, FeatureSource],
    classifiers: Mapping[str, Sequence[ClassifierSpec]],
    plan: SplitPlan = SplitPlan(),
    dtw: DtwDistances | None = None,
    cc_subset_search: bool = False,
    n_jobs: int | None = None,
) -> TransferReport:
    """Evaluate every (pair, featurizer, classifier) on one shared set of index draws per pair.

    Args:
        pairs: Source/target pairs to run.
        featurizers: featurizer name -> (dataset tag -> FeatureMatrix) or a
            source-fitted provider such as ``tda.DiagramFeatures``.
        classifiers: featurizer name -> classifier specs; ``dtw`` takes knn only.
        plan: Seeds and split fractions.
        dtw: Precomputed distances when ``dtw`` is in ``classifiers``.
        cc_subset_search: Score ``tda_cc`` by its best Carlsson-coordinate subset.
        n_jobs: Workers for the per-pair grid.

    Returns:
        TransferReport with one row per combination, in pair then grid order.
    """
    _check_grid(featurizers, classifiers, dtw)
    names = list(classifiers)
    report = TransferReport()
    for pair in pairs:
        src_ids, src_labels = _record_ids(pair.source_tag, pair.source_tag, featurizers, dtw, names)
        tgt_ids, tgt_labels = _record_ids(pair.target_tag, pair.source_tag, featurizers, dtw, names)
        matrices = {name: _matrices(featurizers[name], pair.source_tag) for name in names if name != DTW_FEATURIZER}
        splits = make_splits(src_ids, tgt_ids, plan, source_labels=src_labels, target_labels=tgt_labels,
                             disjoint=pair.traditional)
        logger.info("Pair %s -> %s: %d realizations", pair.source_tag, pair.target_tag, len(splits))

        def task(item: tuple[str, ClassifierSpec], pair=pair, splits=splits, matrices=matrices) -> ReportRow:
            name, spec = item
            if name == DTW_FEATURIZER:
                return ReportRow(pair, name, spec.name, _knn_summary(pair, dtw, spec.hyperparameters["k"], splits))
            source = matrices[name][pair.source_tag]
            target = matrices[name][pair.target_tag]
            if name == CC_FEATURIZER and cc_subset_search:
                summary, subset = _cc_subset_search(spec, source, target, plan, splits)
                return ReportRow(pair, name, spec.name, summary, subset)
            return ReportRow(pair, name, spec.name,
                             evaluate_realizations(spec, source, target, plan, splits=splits, n_jobs=1))

        grid = [(name, spec) for name in names for spec in classifiers[name]]
        report.rows += parallel_map(task, grid, n_jobs=n_jobs, prefer="threads", desc=pair.name)
    return report


def _group_scores(report: TransferReport, pair: TransferPair, groups: Mapping[str, Sequence[str]],
                  metric: str) -> dict[str, tuple[float, float]]:
    result = {}
    for group, members in groups.items():
        best = None
        for featurizer in members:
            row = report.best(pair, featurizer, metric)
            if row is None:
                raise IncompleteReport(f"no {featurizer!r} results for {pair.source_tag} -> {pair.target_tag}")
            mean, std = row.summary.metric(metric)
            if best is None or mean > best[0]:
                best = (mean, std)
        if best is None:
            raise IncompleteReport(f"method group {group!r} is empty")
        result[group] = best
    return result


def count_best_and_error_band(report: TransferReport, groups: Mapping[str, Sequence[str]],
                              metric: str = "accuracy", band: str = "std") -> dict[str, dict[str, int]]:
    """Per-group counts of best method (BM) and method in the winner's error band (MIEB).

    Each group scores a pair with its best featurizer's best-classifier mean.
    ``band="std"`` counts a group as MIEB when its mean lies within the winner's
    mean minus one winner std; ``band="overlap"`` when its own one-std band
    reaches that value. All groups sharing the top mean are BM.
    """
    if band not in BAND_MODES:
        raise InvalidConfiguration(f"band must be one of {BAND_MODES}, got {band!r}")
    if not report.rows:
        raise IncompleteReport("report is empty")
    counts = {group: {"BM": 0, "MIEB": 0} for group in groups}
    for pair in report.pairs:
        group_scores = _group_scores(report, pair, groups, metric)
        top = max(mean for mean, _ in group_scores.values())
        winners = [g for g, (mean, _) in group_scores.items() if mean == top]
        floor = top - max(group_scores[g][1] for g in winners)
        for group, (mean, std) in group_scores.items():
            if group in winners:
                counts[group]["BM"] += 1
            elif (mean if band == "std" else mean + std) >= floor and floor < top:
                counts[group]["MIEB"] += 1
    return counts
