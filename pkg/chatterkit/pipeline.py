"""Stage orchestration: preprocess, featurize, DTW, transfer and report."""
import itertools
import logging
from collections.abc import Mapping, Sequence
from dataclasses import replace
from pathlib import Path

import pandas as pd
import yaml

from .config import Config, worker_count
from .dataset import (
    DatasetManifest,
    FeatureMatrix,
    ManifestEntry,
    SplitPlan,
    TimeSeriesRecord,
    binarize_labels,
    load_manifest,
    load_records,
    read_table,
    save_manifest,
    write_series,
    write_table,
)
from .dtw import DistanceMatrix, DtwConfig, cross_matrix, pairwise_matrix
from .eemd import EemdParams, featurize_eemd
from .errors import (
    EmptyDataset,
    InvalidConfiguration,
    IoError,
    MissingFeatures,
    MissingFile,
    MixedDatasetTags,
)
from .fpa import FpaParams, featurize_fpa
from .learn import ClassifierKind, ClassifierSpec, EvalSummary, evaluate_realizations
from .preprocess import FilterSpec, preprocess_records
from .provenance import PROVENANCE_FILE, clear_partial, get_provenance
from .tda import (
    TDA_METHODS,
    DiagramFeatures,
    PersistenceDiagram,
    TdaParams,
    diagrams_for_records,
    make_vectorizer,
    vectorize,
)
from .transfer import (
    DTW_FEATURIZER,
    DtwDistances,
    ReportRow,
    TransferPair,
    TransferReport,
    classifier_suite,
    enumerate_pairs,
    run_transfer,
)
from .wpt import featurize_wpt

logger = logging.getLogger(__name__)

FAMILIES = ("wpt", "eemd", "fpa", "tda")
INFORMATIVE_FILE = "informative.yaml"
# meta key holding each family's per-tag selection
SELECTION_KEYS = {"wpt": "informative_packet", "eemd": "informative_imf"}


def discover_manifests(directory: str | Path) -> list[Path]:
    manifests = sorted(p for p in Path(directory).glob("*.yaml") if p.name != PROVENANCE_FILE)
    if not manifests:
        raise MissingFile(f"no manifests in {directory}")
    return manifests


def corpus_tags(directory: str | Path) -> list[str]:
    """Dataset tags named by the manifests in ``directory``, without loading series."""
    tags = set()
    for path in discover_manifests(directory):
        tags.update(load_manifest(path).tags)
    return sorted(tags)


def load_corpus(directory: str | Path) -> dict[str, list[TimeSeriesRecord]]:
    """Binarized records of every manifest in ``directory``, grouped by dataset tag."""
    corpus: dict[str, list[TimeSeriesRecord]] = {}
    for path in discover_manifests(directory):
        for record in binarize_labels(load_records(load_manifest(path))):
            corpus.setdefault(record.dataset_tag, []).append(record)
    if not corpus:
        raise EmptyDataset(f"no labeled records in {directory}")
    return dict(sorted(corpus.items()))


def filter_spec(config: Config, manifest: DatasetManifest, cutoff_hz: float | None = None,
                factor: int | None = None) -> FilterSpec:
    """Filter for one manifest; ``factor`` overrides the manifest's fs_raw / fs_target."""
    order = int(config.preprocess["order"])
    fraction = float(config.preprocess["cutoff_fraction"])
    if factor is None:
        spec = FilterSpec.for_rates(manifest.fs_raw, manifest.fs_target, order=order, cutoff_fraction=fraction)
    else:
        spec = FilterSpec(fraction * manifest.fs_raw / factor, order, factor)
    return spec if cutoff_hz is None else replace(spec, cutoff_hz=cutoff_hz)


def preprocess_manifest(config: Config, path: str | Path, out_dir: str | Path,
                        cutoff_hz: float | None = None, factor: int | None = None) -> Path:
    """Filter and decimate one manifest; writes its series plus a manifest at the new rate."""
    out = Path(out_dir)
    manifest = load_manifest(path)
    spec = filter_spec(config, manifest, cutoff_hz, factor)
    processed = preprocess_records(load_records(manifest), spec, n_jobs=worker_count(config))
    entries = []
    for entry, record in zip(manifest.entries, processed):
        series = out / manifest.name / f"{record.id}.txt"
        write_series(series, record.samples)
        entries.append(ManifestEntry(entry.id, series, entry.rpm, entry.depth_of_cut_mm, entry.label, entry.tag))
    fs = manifest.fs_raw / spec.decimation_factor
    target = out / Path(path).name
    save_manifest(DatasetManifest(manifest.name, fs, fs, entries), target)
    get_provenance().add(target, "manifest")
    return target


def preprocess_corpus(config: Config, raw_dir: str | Path, out_dir: str | Path,
                      cutoff_hz: float | None = None, factor: int | None = None) -> list[Path]:
    """Filter and decimate every manifest in ``raw_dir``."""
    return [preprocess_manifest(config, path, out_dir, cutoff_hz, factor) for path in discover_manifests(raw_dir)]


def manifest_records(config: Config, path: str | Path) -> tuple[str, list[TimeSeriesRecord]]:
    """Binarized records of a single-tag manifest, preprocessed when fs_raw exceeds fs_target."""
    manifest = load_manifest(path)
    if len(manifest.tags) != 1:
        raise MixedDatasetTags(f"{path}: expected one dataset tag, got {manifest.tags}")
    records = binarize_labels(load_records(manifest))
    if not records:
        raise EmptyDataset(f"no labeled records in {path}")
    if manifest.decimation_factor > 1:
        records = preprocess_records(records, filter_spec(config, manifest), n_jobs=worker_count(config))
    return manifest.tags[0], records


def _write_informative(features_dir: Path, family: str, selections: Mapping[str, int], config_hash: str) -> None:
    path = features_dir / INFORMATIVE_FILE
    doc = {}
    if path.exists():
        with open(path) as f:
            doc = yaml.safe_load(f) or {}
    doc[family] = {tag: int(index) for tag, index in sorted(selections.items())}
    try:
        with open(path, "w") as f:
            f.write(f"# config_hash: {config_hash}\n")
            yaml.safe_dump(doc, f, default_flow_style=False, sort_keys=True)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    get_provenance().add(path, "features")


def diagram_dir(features_dir: str | Path, tag: str) -> Path:
    return Path(features_dir) / "tda" / "diagrams" / tag


def featurize_corpus(config: Config, family: str, corpus: Mapping[str, Sequence[TimeSeriesRecord]],
                     features_dir: str | Path, config_hash: str, tda_methods: Sequence[str] = TDA_METHODS) -> list[Path]:
    """Write ``<features>/<featurizer>/<tag>.csv`` for one featurizer family.

    TDA also caches each record's diagram; its pi/pl/tf tables are fitted on
    the tag itself and serve inspection, since transfer refits them per source.
    """
    out = Path(features_dir)
    written = []
    selections = {}
    for tag, records in corpus.items():
        for name, matrix in featurize_tag(config, family, tag, records, diagram_dir(out, tag), tda_methods):
            path = out / name / f"{tag}.csv"
            matrix.to_csv(path, config_hash)
            get_provenance().add(path, "features")
            written.append(path)
            if SELECTION_KEYS.get(family) in matrix.meta:
                selections[tag] = matrix.meta[SELECTION_KEYS[family]]
    if selections:
        _write_informative(out, family, selections, config_hash)
    return written


def featurize_tag(config: Config, family: str, tag: str, records: Sequence[TimeSeriesRecord],
                  diagram_cache: Path, tda_methods: Sequence[str] = TDA_METHODS) -> list[tuple[str, FeatureMatrix]]:
    """(featurizer name, matrix) pairs of one family for the records of one tag."""
    if family not in FAMILIES:
        raise InvalidConfiguration(f"unknown featurizer family {family!r}; expected one of {FAMILIES}")
    n_jobs = worker_count(config)
    logger.info("Featurizing %s with %s (%d records)", tag, family, len(records))
    if family == "wpt":
        packet = config.wpt["packet"]
        if packet == "table":
            packet = dict(config.wpt["table"])
        return [("wpt", featurize_wpt(records, int(config.wpt["level"]), packet, config.wpt["wavelet"],
                                      n_jobs=n_jobs))]
    if family == "eemd":
        return [("eemd", featurize_eemd(records, EemdParams.from_config(config.eemd), seed=config.seed,
                                        n_jobs=n_jobs))]
    if family == "fpa":
        return [("fpa", featurize_fpa(records, FpaParams.from_config(config.fpa), n_jobs=n_jobs))]
    params = TdaParams.from_config(config.tda)
    diagrams = diagrams_for_records(records, params, config.seed, diagram_cache, n_jobs=n_jobs)
    ids = [r.id for r in records]
    labels = [r.binary_label for r in records]
    matrices = []
    for method in tda_methods:
        vectorizer = make_vectorizer(method, params)
        if vectorizer is not None:
            vectorizer.fit(diagrams)
        matrices.append((f"tda_{method}", vectorize(method, diagrams, ids, labels, tag, vectorizer)))
    return matrices


def featurize_manifest(config: Config, family: str, manifest: str | Path, out_csv: str | Path,
                       config_hash: str, tda_method: str | None = None) -> Path:
    """One feature table for one manifest; TDA needs a single vectorization."""
    if family == "tda" and tda_method is None:
        raise InvalidConfiguration("featurizing tda into one table needs a single --method")
    out = Path(out_csv)
    tag, records = manifest_records(config, manifest)
    methods = (tda_method,) if tda_method else TDA_METHODS
    [(_, matrix)] = featurize_tag(config, family, tag, records, out.parent / "diagrams" / tag, methods)
    matrix.to_csv(out, config_hash)
    get_provenance().add(out, "features")
    if family in SELECTION_KEYS:
        logger.info("%s informative index for %s: %d", family, tag, matrix.meta[SELECTION_KEYS[family]])
    return out


def compute_distances(config: Config, corpus: Mapping[str, Sequence[TimeSeriesRecord]],
                      features_dir: str | Path, config_hash: str) -> list[Path]:
    """Pairwise DTW per tag and cross DTW for every ordered tag pair, plus label tables."""
    out = Path(features_dir) / DTW_FEATURIZER
    cfg = DtwConfig.from_config(config.dtw)
    n_jobs = worker_count(config)
    written = []

    def emit(matrix_or_frame, name: str, index: bool = True) -> None:
        path = out / name
        if isinstance(matrix_or_frame, DistanceMatrix):
            matrix_or_frame.to_csv(path, config_hash)
        else:
            write_table(matrix_or_frame, path, config_hash, index=index)
        get_provenance().add(path, "distances")
        written.append(path)

    for tag, records in corpus.items():
        logger.info("DTW pairwise matrix for %s", tag)
        emit(pairwise_matrix(records, cfg, n_jobs=n_jobs), f"pairwise_{tag}.csv")
        labels = pd.DataFrame({"record_id": [r.id for r in records], "label": [r.binary_label for r in records]})
        emit(labels, f"labels_{tag}.csv", index=False)
    for source, target in itertools.combinations(corpus, 2):
        logger.info("DTW cross matrix %s x %s", source, target)
        matrix = cross_matrix(corpus[source], corpus[target], cfg, n_jobs=n_jobs)
        emit(matrix, f"cross_{source}__{target}.csv")
        emit(DistanceMatrix(matrix.col_ids, matrix.row_ids, matrix.values.T), f"cross_{target}__{source}.csv")
    return written


def distance_table(config: Config, manifest_a: str | Path, manifest_b: str | Path | None,
                   out_csv: str | Path, config_hash: str) -> Path:
    """DTW matrix with one row per record of ``manifest_a``; pairwise when ``manifest_b`` is None."""
    cfg = DtwConfig.from_config(config.dtw)
    n_jobs = worker_count(config)
    _, rows = manifest_records(config, manifest_a)
    if manifest_b is None:
        matrix = pairwise_matrix(rows, cfg, n_jobs=n_jobs)
    else:
        _, cols = manifest_records(config, manifest_b)
        matrix = cross_matrix(cols, rows, cfg, n_jobs=n_jobs)
    matrix.to_csv(out_csv, config_hash)
    get_provenance().add(out_csv, "distances")
    return Path(out_csv)


def train_tables(config: Config, classifier: str, source_csv: str | Path,
                 target_csv: str | Path | None = None) -> EvalSummary:
    """Score one classifier on feature tables; no target means a disjoint split of the source."""
    spec = ClassifierSpec.from_name(classifier, **config.learn.get(classifier, {}))
    if spec.kind is ClassifierKind.KNN_PRECOMPUTED:
        raise InvalidConfiguration("knn scores DTW distances, not a feature table")
    source = FeatureMatrix.from_csv(source_csv)
    self_pair = target_csv is None or Path(target_csv).resolve() == Path(source_csv).resolve()
    target = source if self_pair else FeatureMatrix.from_csv(target_csv)
    return evaluate_realizations(spec, source, target, SplitPlan.from_config(config.split),
                                 disjoint=self_pair, n_jobs=worker_count(config))


def _read_features(path: Path, name: str, tag: str) -> FeatureMatrix:
    try:
        return FeatureMatrix.from_csv(path, tag=tag)
    except MissingFile as exc:
        raise MissingFeatures(f"featurizer {name!r}: no features for tag {tag!r} ({path})") from exc


def load_featurizers(config: Config, names: Sequence[str], tags: Sequence[str],
                     features_dir: str | Path) -> dict:
    """featurizer name -> tag -> FeatureMatrix, or a DiagramFeatures for tda_pi/pl/tf."""
    out = Path(features_dir)
    params = TdaParams.from_config(config.tda)
    featurizers = {}
    for name in names:
        if name == DTW_FEATURIZER:
            continue
        if name in ("tda_pi", "tda_pl", "tda_tf"):
            source = DiagramFeatures(name.removeprefix("tda_"), params)
            for tag in tags:
                index = _read_features(out / "tda_cc" / f"{tag}.csv", name, tag)
                diagrams = []
                for record_id in index.record_ids:
                    path = diagram_dir(out, tag) / f"{record_id}.txt"
                    if not path.exists():
                        raise MissingFeatures(f"featurizer {name!r}: no diagram for {record_id} of tag {tag!r}")
                    diagrams.append(PersistenceDiagram.load(path))
                source.add_tag(tag, diagrams, index.record_ids, index.labels)
            featurizers[name] = source
        else:
            featurizers[name] = {tag: _read_features(out / name / f"{tag}.csv", name, tag) for tag in tags}
    return featurizers


def load_distances(tags: Sequence[str], features_dir: str | Path) -> DtwDistances:
    out = Path(features_dir) / DTW_FEATURIZER
    distances = DtwDistances()
    try:
        for tag in tags:
            distances.pairwise[tag] = DistanceMatrix.from_csv(out / f"pairwise_{tag}.csv")
            distances.labels[tag] = read_table(out / f"labels_{tag}.csv")["label"].to_numpy(dtype=int)
        for source, target in itertools.permutations(tags, 2):
            distances.cross[(source, target)] = DistanceMatrix.from_csv(out / f"cross_{source}__{target}.csv")
    except MissingFile as exc:
        raise MissingFeatures(f"DTW distances incomplete: {exc}") from exc
    return distances


def method_groups(config: Config, names: Sequence[str]) -> dict[str, list[str]]:
    """Configured method groups restricted to the featurizers that run; empty groups dropped."""
    groups = {}
    for group, members in config.transfer["method_groups"].items():
        kept = [m for m in members if m in names]
        if kept:
            groups[group] = kept
    return groups


def transfer_stage(config: Config, tags: Sequence[str], features_dir: str | Path,
                   report_dir: str | Path, config_hash: str) -> TransferReport:
    names = list(config.transfer["featurizers"])
    table = config.transfer["classifiers"]
    missing = [n for n in names if n not in table]
    if missing:
        raise InvalidConfiguration(f"no classifiers configured for {missing}")
    classifiers = classifier_suite({n: table[n] for n in names}, config.dtw["knn_ks"], config.learn)
    featurizers = load_featurizers(config, names, tags, features_dir)
    distances = load_distances(tags, features_dir) if DTW_FEATURIZER in names else None
    pairs = enumerate_pairs(tags, bool(config.transfer["include_traditional"]))
    report = run_transfer(pairs, featurizers, classifiers, SplitPlan.from_config(config.split), distances,
                          cc_subset_search=bool(config.tda["cc_subset_search"]), n_jobs=worker_count(config))
    written = report.write(report_dir, config_hash, method_groups(config, names), config.transfer["band"])
    get_provenance().extend(written, "report")
    return report


def train_stage(config: Config, featurizer: str, classifier: str, source_tag: str, target_tag: str,
                features_dir: str | Path) -> list[ReportRow]:
    """Score one featurizer/classifier on a single source -> target pair (or a self pair)."""
    tags = sorted({source_tag, target_tag})
    classifiers = classifier_suite({featurizer: [classifier]}, config.dtw["knn_ks"], config.learn)
    featurizers = load_featurizers(config, [featurizer], tags, features_dir)
    distances = load_distances(tags, features_dir) if featurizer == DTW_FEATURIZER else None
    report = run_transfer([TransferPair(source_tag, target_tag)], featurizers, classifiers,
                          SplitPlan.from_config(config.split), distances,
                          cc_subset_search=bool(config.tda["cc_subset_search"]), n_jobs=worker_count(config))
    return report.rows


def render_report(results_csv: str | Path, out_dir: str | Path, groups: Mapping[str, Sequence[str]],
                  band: str, config_hash: str) -> list[Path]:
    """Rebuild heatmaps and BM/MIEB tables from a stored results.csv."""
    report = TransferReport.from_csv(results_csv)
    names = report.featurizers
    groups = {g: [m for m in members if m in names] for g, members in groups.items()}
    return report.write(out_dir, config_hash, {g: m for g, m in groups.items() if m}, band)


def featurizer_families(names: Sequence[str]) -> list[str]:
    families = [f for f in ("wpt", "eemd", "fpa") if f in names]
    if any(n.startswith("tda_") for n in names):
        families.append("tda")
    return families


def run_pipeline(config: Config) -> TransferReport:
    """Preprocess, featurize, compute distances and run the transfer grid.

    Args:
        config: Merged run configuration; paths are resolved against the cwd.

    Returns:
        The transfer report, also written under ``paths.report_dir`` together
        with provenance.yaml.
    """
    config_hash = config.digest()
    paths = config.paths
    provenance = get_provenance()
    provenance.clear()
    report_dir = Path(paths["report_dir"])
    clear_partial(report_dir)

    logger.info("Preprocessing")
    preprocess_corpus(config, paths["data_dir"], paths["preprocessed_dir"])
    corpus = load_corpus(paths["preprocessed_dir"])
    tags = list(corpus)
    names = list(config.transfer["featurizers"])

    for family in featurizer_families(names):
        logger.info("Featurizing (%s)", family)
        featurize_corpus(config, family, corpus, paths["features_dir"], config_hash)
    if DTW_FEATURIZER in names:
        logger.info("Computing DTW distances")
        compute_distances(config, corpus, paths["features_dir"], config_hash)

    logger.info("Running transfer grid over %d tags", len(tags))
    report = transfer_stage(config, tags, paths["features_dir"], report_dir, config_hash)
    provenance.write(report_dir, config_hash, config.split["seeds"])
    logger.info("Report written to %s", report_dir)
    return report
