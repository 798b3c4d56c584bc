import numpy as np
import pytest

from chatterkit.dataset import SplitPlan, table_config_hash
from chatterkit.dtw import DtwConfig, cross_matrix, pairwise_matrix
from chatterkit.errors import IncompleteReport, InvalidConfiguration, MissingFeatures, TooFewTags
from chatterkit.fpa import FpaParams, featurize_fpa
from chatterkit.learn import ClassifierSpec, summarize
from chatterkit.tda import DiagramFeatures, PersistenceDiagram
from chatterkit.transfer import (
    DtwDistances,
    ReportRow,
    TransferPair,
    TransferReport,
    classifier_suite,
    count_best_and_error_band,
    enumerate_pairs,
    run_transfer,
)

from .conftest import tone

TAGS = ("turning-5.08cm", "milling")


def test_enumerate_pairs():
    five = [f"t{i}" for i in range(5)]
    assert len(enumerate_pairs(five)) == 20
    assert len(enumerate_pairs(five[:4])) == 12
    assert enumerate_pairs(five[:2]) == [TransferPair("t0", "t1"), TransferPair("t1", "t0")]
    with_self = enumerate_pairs(five, include_traditional=True)
    assert len(with_self) == 25
    assert sum(p.traditional for p in with_self) == 5
    assert not any(p.traditional for p in enumerate_pairs(five))
    with pytest.raises(TooFewTags):
        enumerate_pairs(["only", "only"])


def test_classifier_suite_expands_knn():
    suite = classifier_suite({"wpt": ["lr", "svm"], "dtw": ["knn"]}, knn_ks=(1, 3),
                             hyperparameters={"svm": {"C": 5.0}})
    assert [s.name for s in suite["wpt"]] == ["lr", "svm"]
    assert suite["wpt"][1].hyperparameters["C"] == 5.0
    assert [s.name for s in suite["dtw"]] == ["knn1", "knn3"]


def _row(pair, featurizer, accuracies, classifier="lr"):
    per_seed = [(a, a, 1.0, 1.0) for a in accuracies]
    return ReportRow(pair, featurizer, classifier, summarize(per_seed, "d"))


GROUPS = {"time_frequency": ["wpt"], "tda": ["tda_pi"], "dtw": ["dtw"]}


def _report(runner_up):
    pair = TransferPair("a", "b")
    return TransferReport([
        _row(pair, "wpt", [0.85, 0.95]),
        _row(pair, "tda_pi", [runner_up, runner_up]),
        _row(pair, "tda_pi", [0.5, 0.5], classifier="svm"),
        _row(pair, "dtw", [0.6, 0.6], classifier="knn1"),
    ])


def test_error_band_membership():
    counts = count_best_and_error_band(_report(0.87), GROUPS)
    assert counts["time_frequency"] == {"BM": 1, "MIEB": 0}
    assert counts["tda"] == {"BM": 0, "MIEB": 1}
    assert counts["dtw"] == {"BM": 0, "MIEB": 0}
    assert count_best_and_error_band(_report(0.84), GROUPS)["tda"]["MIEB"] == 0


def test_overlap_band():
    pair = TransferPair("a", "b")
    report = TransferReport([_row(pair, "wpt", [0.85, 0.95]), _row(pair, "tda_pi", [0.82, 0.86]),
                             _row(pair, "dtw", [0.5, 0.5], classifier="knn1")])
    assert count_best_and_error_band(report, GROUPS, band="std")["tda"]["MIEB"] == 0
    assert count_best_and_error_band(report, GROUPS, band="overlap")["tda"]["MIEB"] == 1


def test_ties_are_all_best():
    pair = TransferPair("a", "b")
    report = TransferReport([_row(pair, "wpt", [0.9, 0.9]), _row(pair, "tda_pi", [0.9, 0.9]),
                             _row(pair, "dtw", [0.9, 0.9], classifier="knn1")])
    counts = count_best_and_error_band(report, GROUPS)
    assert all(c == {"BM": 1, "MIEB": 0} for c in counts.values())


def test_band_errors():
    with pytest.raises(InvalidConfiguration):
        count_best_and_error_band(_report(0.8), GROUPS, band="wide")
    with pytest.raises(IncompleteReport):
        count_best_and_error_band(TransferReport(), GROUPS)
    with pytest.raises(IncompleteReport):
        count_best_and_error_band(_report(0.8), {"eemd": ["eemd"]})


@pytest.fixture
def corpus(make_record, rng):
    records = {}
    for t, tag in enumerate(TAGS):
        rows = []
        for i in range(10):
            stable = i % 2 == 0
            freq, amp = (50.0, 0.2) if stable else (200.0, 1.0)
            x = tone(freq + 10.0 * t, 1000.0, 256, amp, phase=0.2 * i) + 0.05 * rng.standard_normal(256)
            rows.append(make_record(x, "stable" if stable else "unstable", tag=tag, record_id=f"{tag}-{i}"))
        records[tag] = rows
    return records


@pytest.fixture
def distances(corpus):
    cfg = DtwConfig(window_fraction=0.1)
    dtw = DtwDistances()
    for tag, rows in corpus.items():
        dtw.pairwise[tag] = pairwise_matrix(rows, cfg, n_jobs=1)
        dtw.labels[tag] = np.array([r.binary_label for r in rows])
    for s in TAGS:
        for t in TAGS:
            if s != t:
                dtw.cross[(s, t)] = cross_matrix(corpus[s], corpus[t], cfg, n_jobs=1)
    return dtw


def test_run_transfer_grid(tmp_path, corpus, distances):
    fpa = {tag: featurize_fpa(rows, FpaParams(mpd_fft=50.0, mpd_psd=50.0, mpd_acf=5.0), n_jobs=1)
           for tag, rows in corpus.items()}
    classifiers = {"fpa": [ClassifierSpec.from_name("lr"), ClassifierSpec.from_name("rf")],
                   "dtw": [ClassifierSpec.from_name("knn", k=1), ClassifierSpec.from_name("knn", k=3)]}
    pairs = enumerate_pairs(TAGS, include_traditional=True)
    plan = SplitPlan(seeds=(0, 1, 2))
    report = run_transfer(pairs, {"fpa": fpa}, classifiers, plan, dtw=distances, n_jobs=1)

    assert len(report.rows) == len(pairs) * 4
    assert report.featurizers == ["fpa", "dtw"]
    for pair in pairs:
        digests = {r.summary.split_digest for r in report.rows if r.pair == pair}
        assert len(digests) == 1
    for row in report.rows:
        assert row.summary.n_realizations == 3
    self_pair = TransferPair(TAGS[0], TAGS[0])
    assert report.best(self_pair, "dtw").summary.mean_accuracy >= 0.9

    groups = {"time_frequency": ["fpa"], "dtw": ["dtw"]}
    written = report.write(tmp_path, "h", groups)
    assert (tmp_path / "results.csv") in written
    assert (tmp_path / "pairs" / f"{TAGS[0]}__{TAGS[1]}.csv").exists()
    assert (tmp_path / "heatmaps" / "dtw_f1.csv").exists()
    assert (tmp_path / "bm_mieb_accuracy.csv").exists()
    assert all(table_config_hash(p) == "h" for p in written)

    loaded = TransferReport.from_csv(tmp_path / "results.csv")
    assert len(loaded.rows) == len(report.rows)
    for a, b in zip(loaded.rows, report.rows):
        assert a.pair == b.pair and a.classifier == b.classifier
        np.testing.assert_allclose(a.summary.accuracies, b.summary.accuracies)
    heat = report.heatmap("fpa")
    assert list(heat.index) == list(TAGS)
    assert not heat.isna().any().any()


def test_grid_validation(corpus, distances):
    fpa = {tag: featurize_fpa(rows, n_jobs=1) for tag, rows in corpus.items()}
    pairs = enumerate_pairs(TAGS)
    with pytest.raises(InvalidConfiguration):
        run_transfer(pairs, {}, {"dtw": [ClassifierSpec.from_name("lr")]}, dtw=distances)
    with pytest.raises(InvalidConfiguration):
        run_transfer(pairs, {"fpa": fpa}, {"fpa": [ClassifierSpec.from_name("knn")]})
    with pytest.raises(MissingFeatures):
        run_transfer(pairs, {}, {"dtw": [ClassifierSpec.from_name("knn")]})
    with pytest.raises(MissingFeatures, match="milling"):
        run_transfer(pairs, {"fpa": {TAGS[0]: fpa[TAGS[0]]}}, {"fpa": [ClassifierSpec.from_name("lr")]})


def test_diagram_features_in_grid(rng):
    features = DiagramFeatures("pl")
    for tag in TAGS:
        diagrams, labels = [], []
        for i in range(8):
            big = i % 2
            birth = rng.uniform(0.0, 0.1)
            diagrams.append(PersistenceDiagram([[birth, birth + (1.0 if big else 0.1)]]))
            labels.append(big)
        features.add_tag(tag, diagrams, [f"{tag}-{i}" for i in range(8)], labels)
    report = run_transfer(enumerate_pairs(TAGS), {"tda_pl": features}, {"tda_pl": [ClassifierSpec.from_name("lr")]},
                          SplitPlan(seeds=(0, 1)), n_jobs=1)
    assert len(report.rows) == 2
    assert all(r.summary.mean_accuracy >= 0.8 for r in report.rows)


def test_cc_subset_search():
    matrices = {}
    for tag in TAGS:
        diagrams = [PersistenceDiagram([[0.1, 0.1 + (1.0 if i % 2 else 0.2) + 0.01 * i]]) for i in range(8)]
        cc = DiagramFeatures("cc")
        cc.add_tag(tag, diagrams, [f"{tag}-{i}" for i in range(8)], [i % 2 for i in range(8)])
        matrices[tag] = cc.for_source(tag)[tag]
    report = run_transfer(enumerate_pairs(TAGS), {"tda_cc": matrices}, {"tda_cc": [ClassifierSpec.from_name("lr")]},
                          SplitPlan(seeds=(0,)), cc_subset_search=True, n_jobs=1)
    for row in report.rows:
        assert row.detail
        assert set(row.detail.split("+")) <= {"f1", "f2", "f3", "f4", "f5"}
