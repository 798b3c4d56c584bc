"""Command-line entry point: one subcommand per pipeline stage."""
import argparse
import logging
import sys
from pathlib import Path

from . import parallel
from .config import Config, get_config, init_config, worker_count
from .errors import ChatterkitError, InvalidConfiguration
from .pipeline import (
    FAMILIES,
    compute_distances,
    corpus_tags,
    distance_table,
    featurize_corpus,
    featurize_manifest,
    load_corpus,
    method_groups,
    preprocess_corpus,
    preprocess_manifest,
    render_report,
    run_pipeline,
    train_stage,
    train_tables,
    transfer_stage,
)
from .provenance import clear_partial, get_provenance, mark_partial
from .synth import generate_benchmark, load_corpus_spec
from .tda import TDA_METHODS
from .transfer import BAND_MODES

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# flag dest -> (config section, key)
CONFIG_FLAGS = {
    "alpha_fft": ("fpa", "alpha_fft"),
    "alpha_psd": ("fpa", "alpha_psd"),
    "alpha_acf": ("fpa", "alpha_acf"),
    "n_peaks": ("fpa", "n_peaks"),
    "level": ("wpt", "level"),
    "packet": ("wpt", "packet"),
    "wavelet": ("wpt", "wavelet"),
    "ensemble": ("eemd", "ensemble_size"),
    "noise": ("eemd", "noise_std_fraction"),
    "window": ("dtw", "window_fraction"),
    "seed_list": ("split", "seeds"),
}


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT)
    # numba's compiler logs every pass at DEBUG
    logging.getLogger("numba").setLevel(logging.WARNING)


def _packet(value: str) -> int | str:
    if value in ("auto", "table"):
        return value
    try:
        return int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected auto, table or a packet number, got {value!r}") from None


def _is_table(path: str | None) -> bool:
    return bool(path) and Path(path).suffix == ".csv"


def overrides(args: argparse.Namespace) -> dict:
    """Config overrides carried by the command-line flags that were given."""
    doc: dict = {}
    for dest, (section, key) in CONFIG_FLAGS.items():
        value = getattr(args, dest, None)
        if value is not None:
            doc.setdefault(section, {})[key] = value
    mpd = getattr(args, "mpd", None)
    if mpd is not None:
        doc.setdefault("fpa", {}).update(mpd_fft=mpd, mpd_psd=mpd, mpd_acf=mpd)
    if getattr(args, "eemd_seed", None) is not None:
        doc["seed"] = args.eemd_seed
    return doc


def _finish(out_dir: str | Path, config: Config) -> None:
    get_provenance().write(out_dir, config.digest(), config.split["seeds"])


def cmd_synth(args, config: Config) -> Path:
    out = Path(args.out or config.paths["data_dir"])
    spec_path = args.spec or config.paths["corpus_spec"]
    seed = config.synth["seed"] if args.seed is None else args.seed
    print(f">>> Generating synthetic corpus from {spec_path} (seed {seed})...")
    manifests = generate_benchmark(load_corpus_spec(spec_path), int(seed), out, n_jobs=worker_count(config))
    get_provenance().extend(manifests, "manifest")
    print(f">>> Wrote {len(manifests)} manifests to {out}")
    return out


def cmd_preprocess(args, config: Config) -> Path:
    out = Path(args.out or config.paths["preprocessed_dir"])
    if args.manifest:
        print(f">>> Preprocessing {args.manifest} -> {out}...")
        written = [preprocess_manifest(config, args.manifest, out, args.cutoff_hz, args.factor)]
    else:
        raw = Path(args.input or config.paths["data_dir"])
        print(f">>> Preprocessing {raw} -> {out}...")
        written = preprocess_corpus(config, raw, out, args.cutoff_hz, args.factor)
    print(f">>> Wrote {len(written)} manifests")
    return out


def cmd_featurize(args, config: Config) -> Path:
    if args.manifest:
        if not _is_table(args.out):
            raise InvalidConfiguration("featurizing one manifest needs --out F.csv")
        method = None
        if args.family == "tda":
            if len(args.method or []) != 1:
                raise InvalidConfiguration("featurizing tda into one table needs exactly one --method")
            method = args.method[0]
        print(f">>> Featurizing {args.manifest} with {args.family}...")
        out = featurize_manifest(config, args.family, args.manifest, args.out, config.digest(), method)
        print(f">>> Wrote {out}")
        return out.parent
    out = Path(args.out or config.paths["features_dir"])
    corpus = load_corpus(config.paths["preprocessed_dir"])
    methods = args.method or TDA_METHODS
    print(f">>> Featurizing {len(corpus)} tags with {args.family}...")
    written = featurize_corpus(config, args.family, corpus, out, config.digest(), methods)
    print(f">>> Wrote {len(written)} feature tables to {out}")
    return out


def cmd_dtw(args, config: Config) -> Path:
    if args.manifest_a or args.manifest_b:
        if not args.manifest_a:
            raise InvalidConfiguration("--manifest-b needs --manifest-a")
        if not _is_table(args.out):
            raise InvalidConfiguration("a DTW matrix between manifests needs --out D.csv")
        print(f">>> Computing DTW distances for {args.manifest_a} x {args.manifest_b or args.manifest_a}...")
        out = distance_table(config, args.manifest_a, args.manifest_b, args.out, config.digest())
        print(f">>> Wrote {out}")
        return out.parent
    out = Path(args.out or config.paths["features_dir"])
    corpus = load_corpus(config.paths["preprocessed_dir"])
    print(f">>> Computing DTW distances for {len(corpus)} tags...")
    written = compute_distances(config, corpus, out, config.digest())
    print(f">>> Wrote {len(written)} distance tables")
    return out


def _print_summary(label: str, s, detail: str = "") -> None:
    detail = f" [{detail}]" if detail else ""
    print(f">>> {label}: accuracy {s.mean_accuracy:.3f} ± {s.std_accuracy:.3f}, "
          f"F1 {s.mean_f1:.3f} ± {s.std_f1:.3f} over {s.n_realizations} realizations{detail}")


def cmd_train(args, config: Config) -> None:
    if _is_table(args.features):
        target = args.target_features or args.features
        summary = train_tables(config, args.classifier, args.features, args.target_features)
        _print_summary(f"{args.classifier} {Path(args.features).stem} -> {Path(target).stem}", summary)
        return
    if not args.source:
        raise InvalidConfiguration("training on a featurizer name needs --source")
    target = args.target or args.source
    rows = train_stage(config, args.features, args.classifier, args.source, target,
                       args.features_dir or config.paths["features_dir"])
    for row in rows:
        _print_summary(f"{row.featurizer}/{row.classifier} {args.source} -> {target}", row.summary, row.detail)


def cmd_transfer(args, config: Config) -> Path:
    out = Path(args.out or config.paths["report_dir"])
    tags = corpus_tags(config.paths["preprocessed_dir"])
    print(f">>> Running transfer grid over {len(tags)} tags...")
    report = transfer_stage(config, tags, config.paths["features_dir"], out, config.digest())
    print(f">>> {len(report.rows)} results over {len(report.pairs)} pairs written to {out}")
    return out


def cmd_report(args, config: Config) -> Path:
    out = Path(args.out or config.paths["report_dir"])
    results = Path(args.results) if args.results else Path(config.paths["report_dir"]) / "results.csv"
    band = args.band or config.transfer["band"]
    groups = method_groups(config, list(config.transfer["featurizers"]))
    written = render_report(results, out, groups, band, config.digest())
    get_provenance().extend(written, "report")
    print(f">>> Rendered {len(written)} report tables to {out}")
    return out


def cmd_run(args, config: Config) -> Path:
    report = run_pipeline(config)
    print(f">>> Done! {len(report.rows)} results over {len(report.pairs)} pairs")
    return Path(config.paths["report_dir"])


def _output_dir(args, config: Config) -> Path | None:
    """Directory a failed command marks PARTIAL; train writes nothing."""
    if args.command == "train":
        return None
    out = getattr(args, "out", None)
    if out:
        return Path(out).parent if _is_table(out) else Path(out)
    key = {
        "synth": "data_dir",
        "preprocess": "preprocessed_dir",
        "featurize": "features_dir",
        "dtw": "features_dir",
    }.get(args.command, "report_dir")
    return Path(config.paths[key])


def _subcommand(sub, name: str, summary: str, func) -> argparse.ArgumentParser:
    p = sub.add_parser(name, help=summary)
    p.add_argument("--config", dest="command_config", help="Path to config file (same as -c)")
    p.set_defaults(func=func)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chatterkit", description="Chatter detection and transfer-learning toolkit")
    parser.add_argument("-c", "--config", help="Path to config file")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="No progress bars")
    sub = parser.add_subparsers(dest="command", required=True)

    p = _subcommand(sub, "synth", "Generate the synthetic benchmark corpus", cmd_synth)
    p.add_argument("--spec", help="Corpus spec YAML (default: paths.corpus_spec)")
    p.add_argument("--seed", type=int, help="Corpus seed (default: synth.seed)")
    p.add_argument("--out", help="Output directory (default: paths.data_dir)")

    p = _subcommand(sub, "preprocess", "Low-pass filter and decimate raw manifests", cmd_preprocess)
    source = p.add_mutually_exclusive_group()
    source.add_argument("--input", help="Raw manifest directory (default: paths.data_dir)")
    source.add_argument("--manifest", help="A single raw manifest")
    p.add_argument("--cutoff-hz", type=float, help="Low-pass cutoff (default: preprocess.cutoff_fraction * target rate)")
    p.add_argument("--factor", type=int, help="Decimation factor (default: fs_raw / fs_target of the manifest)")
    p.add_argument("--out", help="Output directory (default: paths.preprocessed_dir)")

    p = _subcommand(sub, "featurize", "Compute one featurizer family", cmd_featurize)
    p.add_argument("family", choices=FAMILIES)
    p.add_argument("--manifest", help="Featurize one manifest into the table named by --out")
    p.add_argument("--method", action="append", choices=TDA_METHODS,
                   help="TDA vectorization; repeat for several (default: all)")
    p.add_argument("--out", help="Feature directory (default: paths.features_dir), or F.csv with --manifest")
    fpa = p.add_argument_group("fpa")
    fpa.add_argument("--alpha-fft", type=float, help="FFT peak threshold fraction")
    fpa.add_argument("--alpha-psd", type=float, help="PSD peak threshold fraction")
    fpa.add_argument("--alpha-acf", type=float, help="ACF peak threshold fraction")
    fpa.add_argument("--mpd", type=float, help="Minimum peak distance for all three curves")
    fpa.add_argument("--n-peaks", type=int, help="Peaks kept per curve")
    wpt = p.add_argument_group("wpt")
    wpt.add_argument("--level", type=int, help="Decomposition level")
    wpt.add_argument("--packet", type=_packet, help="auto, table or a packet number")
    wpt.add_argument("--wavelet", help="Wavelet name")
    eemd = p.add_argument_group("eemd")
    eemd.add_argument("--ensemble", type=int, help="Ensemble size")
    eemd.add_argument("--noise", type=float, help="Noise std as a fraction of the signal std")
    eemd.add_argument("--seed", dest="eemd_seed", type=int, help="Noise seed (default: seed)")

    p = _subcommand(sub, "dtw", "Pairwise and cross DTW distance matrices", cmd_dtw)
    p.add_argument("--manifest-a", help="Row records of a single matrix")
    p.add_argument("--manifest-b", help="Column records (default: pairwise over --manifest-a)")
    p.add_argument("--window", type=float, help="Sakoe-Chiba band as a fraction of the longer series")
    p.add_argument("--out", help="Feature directory (default: paths.features_dir), or D.csv with --manifest-a")

    p = _subcommand(sub, "train", "Score one featurizer/classifier on one source -> target pair", cmd_train)
    p.add_argument("--features", required=True, help="Featurizer name (wpt, tda_cc, dtw, ...) or a feature table F.csv")
    p.add_argument("--classifier", required=True, help="lr, svm, rf, gb, mlp or knn")
    p.add_argument("--source", help="Training tag when --features names a featurizer")
    p.add_argument("--target", help="Test tag (default: the source tag)")
    p.add_argument("--target-features", help="Test table when --features is a table (default: a disjoint split)")
    p.add_argument("--features-dir", help="Feature directory (default: paths.features_dir)")
    p.add_argument("--seed-list", type=int, nargs="+", help="Split seeds (default: split.seeds)")

    p = _subcommand(sub, "transfer", "Run the full transfer grid and write the report", cmd_transfer)
    p.add_argument("--out", help="Report directory (default: paths.report_dir)")

    p = _subcommand(sub, "report", "Rebuild heatmaps and BM/MIEB tables from results.csv", cmd_report)
    p.add_argument("--results", help="Stored results.csv (default: <report_dir>/results.csv)")
    p.add_argument("--band", choices=BAND_MODES, help="Error-band rule (default: transfer.band)")
    p.add_argument("--out", help="Output directory (default: paths.report_dir)")

    _subcommand(sub, "run", "Preprocess, featurize, DTW and transfer in one go", cmd_run)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)
    if args.quiet:
        parallel.show_progress = False

    config_path = args.command_config or args.config
    try:
        config = init_config(config_path) if config_path else get_config()
        config.update(overrides(args))
    except ChatterkitError as exc:
        logger.error("%s", exc)
        return 1

    get_provenance().clear()
    out_dir = _output_dir(args, config)
    if out_dir is not None:
        clear_partial(out_dir)
    try:
        written_to = args.func(args, config)
        if written_to is not None and args.command != "run":
            _finish(written_to, config)
    except ChatterkitError as exc:
        logger.error("%s failed: %s", args.command, exc)
        if out_dir is not None:
            mark_partial(out_dir, f"{type(exc).__name__}: {exc}")
        return 1
    except Exception:
        logger.exception("%s failed unexpectedly", args.command)
        if out_dir is not None:
            mark_partial(out_dir, "unexpected error, see log")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
