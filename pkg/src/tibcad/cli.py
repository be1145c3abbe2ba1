"""Command line interface of the tree-in-bud detection pipeline.

Every subcommand reads the optional ``--config`` file first; flags whose
destination is a configuration key (``segmentation.theta``,
``patch_size``, ...) override the file. Exit codes: 0 ok, 2 configuration
error, 3 data error, 4 degenerate statistics.
"""
import argparse
import dataclasses
import logging
import os
import sys

from tibcad import __version__
from tibcad import bscale, phantom, pipeline, svm, volio
from tibcad.config import (FEATURE_MODES, PipelineConfig, config_entries,
                           load_config)
from tibcad.exceptions import (EXIT_OK, ConfigError, SchemaError,
                               TibCadError, exit_code_for)
from tibcad.general import format_setting

__author__ = "tibcad contributors"
__copyright__ = "tibcad contributors"
__license__ = "mit"

logger = logging.getLogger(__name__)

CONFIG_KEYS = frozenset(config_entries(PipelineConfig()))


def _require(value, flag):
    if not value:
        raise ConfigError(f"{flag} is required")
    return value


def cmd_phantom(args, config):
    spec = phantom.read_phantom_spec(args.spec) if args.spec \
        else phantom.PhantomSpec()
    if args.phantom_seed is not None:
        spec = dataclasses.replace(spec, seed=args.phantom_seed)
    if args.tib_clusters is not None:
        spec = dataclasses.replace(spec, n_tib_clusters=args.tib_clusters)

    if not args.suite:
        paths = phantom.write_phantom(config.output_prefix, spec)
        logger.info("Wrote phantom %s", ", ".join(paths))
        return

    os.makedirs(args.suite, exist_ok=True)
    scans = []
    for scan_id, case in phantom.generate_suite(spec):
        paths = phantom.write_phantom(os.path.join(args.suite, scan_id),
                                      case)
        scans.append(pipeline.Scan(scan_id, *paths))
        logger.info("Wrote phantom %s", scan_id)
    manifest = os.path.join(args.suite, "manifest.txt")
    pipeline.write_manifest(manifest, scans)
    phantom.write_phantom_spec(os.path.join(args.suite, "spec.txt"), spec)
    logger.info("Wrote manifest of %d scans to %s", len(scans), manifest)


def cmd_segment(args, config):
    volume = volio.read_volume(_require(config.input, "--in"))
    lungs = pipeline.segment_stage(volume, config.segmentation,
                                   pipeline.StageCache(config.cache_dir))
    volio.write_mask(_require(args.out, "--out"), lungs)
    logger.info("Lung mask of %d voxels written to %s", lungs.count(),
                args.out)


def cmd_candidates(args, config):
    volume = volio.read_volume(_require(config.input, "--in"))
    if args.lungs:
        lungs = volio.read_mask(args.lungs)
    else:
        lungs = pipeline.segment_stage(volume, config.segmentation,
                                       pipeline.StageCache(config.cache_dir))
    scale_map = bscale.bscale_map(volume, lungs, config.bscale)
    volio.write_scale_map(_require(args.out, "--out"), scale_map)
    if args.candidates:
        mask = bscale.candidates(scale_map, config.bscale)
        volio.write_mask(args.candidates, mask)
        logger.info("Candidates discard %.1f%% of the lung voxels",
                    100 * bscale.lung_discard_fraction(mask, lungs))


def cmd_features(args, config):
    scans = pipeline.read_manifest(_require(config.manifest, "--manifest"))
    tables = pipeline.build_feature_table(
        scans, config, cache=pipeline.StageCache(config.cache_dir))
    mode = config.feature_mode
    pipeline.write_feature_table(
        _require(args.out, "--out"), tables.tables[mode], tables.names[mode],
        pipeline.table_meta(mode, config.patch_size, tables.gate))
    logger.info("%d of %d labelled patches skipped by gating",
                tables.n_skipped, tables.n_patches)


def _read_features(path, config):
    """Feature table plus the config aligned with the table's mode and
    patch size"""
    table, names, meta = pipeline.read_feature_table(path)
    mode = meta.get("mode", config.feature_mode)
    patch_size = int(meta.get("patch_size", config.patch_size))
    config = dataclasses.replace(config, feature_mode=mode,
                                 patch_size=patch_size)
    if "mode" in meta and names != pipeline.feature_names(mode, patch_size):
        raise SchemaError(f"{path}: columns do not match mode {mode!r}")
    return table, names, meta, config


def cmd_train(args, config):
    table, names, meta, config = _read_features(
        _require(args.features, "--features"), config)
    model = pipeline.train_detector(table, names, config,
                                    pipeline.gate_from_meta(meta),
                                    config.feature_mode)
    svm.save_model(_require(config.model, "--out"), model)


def cmd_evaluate(args, config):
    if not args.features and config.manifest:
        scans = pipeline.read_manifest(config.manifest)
        summary = pipeline.evaluate_scans(
            scans, config, cache=pipeline.StageCache(config.cache_dir))
    else:
        table, names, _, config = _read_features(
            _require(args.features, "--features or --manifest"), config)
        summary = pipeline.evaluate_table(table, names, config)
    logger.info("Az %.4f over %d runs", summary.az, len(summary.results))
    report = args.out or f"{config.output_prefix}_evaluation.txt"
    pipeline.write_evaluation_report(summary, report, args.roc)


def cmd_compare(args, config):
    scans = pipeline.read_manifest(_require(config.manifest, "--manifest"))
    report = pipeline.compare_feature_sets(
        scans, config, args.modes, args.patch_sizes,
        pipeline.StageCache(config.cache_dir))
    pipeline.write_comparison_report(config.output_prefix, report)
    print(report.to_text())


def cmd_run(args, config):
    _require(config.input, "--in")
    _require(config.model, "--model")
    report = pipeline.run_pipeline(config)
    print(report.to_text(), end="")


def _add_common(parser):
    parser.add_argument("--cache-dir", dest="cache_dir",
                        help="stage cache directory")
    parser.add_argument("--no-gating", dest="gating", action="store_const",
                        const=False, help="score every lung patch")


def parse_args(args):
    """Parse command line parameters

    Parameters:
    -----------
    args : list(str)
        Command line parameters as list of strings

    Returns:
    --------
    args : argparse.Namespace
    """
    parser = argparse.ArgumentParser(
        prog="tibcad", description="Tree-in-bud pattern detection in chest "
        "CT volumes")
    parser.add_argument("--version", action="version",
                        version=f"tibcad {__version__}")
    parser.add_argument("--config", help="key: value configuration file")
    parser.add_argument("-v", "--verbose", dest="loglevel",
                        action="store_const", const=logging.DEBUG,
                        default=logging.INFO, help="log debug messages")
    parser.add_argument("-q", "--quiet", dest="loglevel",
                        action="store_const", const=logging.WARNING,
                        help="log warnings and errors only")
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True

    p = commands.add_parser("phantom", help="generate synthetic phantoms")
    p.add_argument("--spec", help="phantom spec file")
    p.add_argument("--out-prefix", dest="output_prefix")
    p.add_argument("--seed", dest="phantom_seed", type=int)
    p.add_argument("--tib-clusters", dest="tib_clusters", type=int)
    p.add_argument("--suite", metavar="DIR",
                   help="write the evaluation suite and its manifest")
    p.set_defaults(handler=cmd_phantom)

    p = commands.add_parser("segment", help="segment the lungs")
    p.add_argument("--in", dest="input")
    p.add_argument("--out")
    p.add_argument("--theta", dest="segmentation.theta", type=float)
    p.add_argument("--adjacency", dest="segmentation.adjacency", type=int,
                   choices=(6, 26))
    _add_common(p)
    p.set_defaults(handler=cmd_segment)

    p = commands.add_parser("candidates", help="ball-scale candidates")
    p.add_argument("--in", dest="input")
    p.add_argument("--lungs", help="lung mask; segmented when omitted")
    p.add_argument("--out", help="scale map to write")
    p.add_argument("--candidates", help="candidate mask to write")
    p.add_argument("--r-max", dest="bscale.r_max", type=int)
    _add_common(p)
    p.set_defaults(handler=cmd_candidates)

    p = commands.add_parser("features", help="extract a feature table")
    p.add_argument("--manifest")
    p.add_argument("--mode", dest="feature_mode", choices=FEATURE_MODES)
    p.add_argument("--patch-size", dest="patch_size", type=int)
    p.add_argument("--out", help="feature CSV to write")
    _add_common(p)
    p.set_defaults(handler=cmd_features)

    p = commands.add_parser("train", help="train the linear SVM")
    p.add_argument("--features", help="feature CSV")
    p.add_argument("--out", dest="model", help="model file to write")
    p.add_argument("--c", dest="svm.c", type=float)
    p.add_argument("--epochs", dest="svm.epochs", type=int)
    p.add_argument("--seed", dest="svm.seed", type=int)
    p.set_defaults(handler=cmd_train)

    p = commands.add_parser("evaluate", help="repeated cross-validation")
    p.add_argument("--features", help="feature CSV")
    p.add_argument("--manifest",
                   help="extract features and learn the energy band "
                        "inside every training fold")
    p.add_argument("--mode", dest="feature_mode", choices=FEATURE_MODES)
    p.add_argument("--patch-size", dest="patch_size", type=int)
    p.add_argument("--folds", dest="evaluation.folds", type=int)
    p.add_argument("--runs", dest="evaluation.runs", type=int)
    p.add_argument("--seed", dest="evaluation.seed", type=int)
    p.add_argument("--out", help="report file to write")
    p.add_argument("--roc", help="ROC CSV to write, with an SVG alongside")
    _add_common(p)
    p.set_defaults(handler=cmd_evaluate)

    p = commands.add_parser("compare", help="compare feature sets")
    p.add_argument("--manifest")
    p.add_argument("--modes", nargs="+", choices=FEATURE_MODES,
                   default=["shape+glcm", "shape", "glcm"])
    p.add_argument("--patch-sizes", dest="patch_sizes", nargs="+", type=int)
    p.add_argument("--out-prefix", dest="output_prefix")
    p.add_argument("--folds", dest="evaluation.folds", type=int)
    p.add_argument("--runs", dest="evaluation.runs", type=int)
    _add_common(p)
    p.set_defaults(handler=cmd_compare)

    p = commands.add_parser("run", help="score one volume")
    p.add_argument("--in", dest="input")
    p.add_argument("--model")
    p.add_argument("--out-prefix", dest="output_prefix")
    _add_common(p)
    p.set_defaults(handler=cmd_run)

    return parser.parse_args(args)


def overrides_from_args(args):
    """{dotted key: text} of the flags that set configuration keys"""
    return {key: format_setting(value) for key, value in vars(args).items()
            if key in CONFIG_KEYS and value is not None}


def setup_logging(loglevel):
    """Setup basic logging

    Parameters:
    -----------
    loglevel : int
        Minimum loglevel for emitting messages
    """
    logformat = "[%(asctime)s] %(levelname)s:%(name)s:%(message)s"
    logging.basicConfig(level=loglevel, stream=sys.stderr,
                        format=logformat, datefmt="%Y-%m-%d %H:%M:%S")
    logging.captureWarnings(True)


def main(args=None):
    """Runs one subcommand and returns its exit code

    Parameters:
    -----------
    args : list(str) (optional)
        Command line parameters; defaults to sys.argv[1:]
    """
    args = parse_args(sys.argv[1:] if args is None else args)
    setup_logging(args.loglevel)
    try:
        config = load_config(args.config, overrides_from_args(args))
        args.handler(args, config)
    except TibCadError as e:
        logger.error("%s", e)
        return exit_code_for(e)
    return EXIT_OK


def run():
    """Entry point for console_scripts"""
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    run()
