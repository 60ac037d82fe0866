"""train: fit the self-paced transfer classifier on feature files.

Writes predictions (one label per line), JSON-lines metrics, the model archive
and a manifest that ``train --manifest`` replays.
"""

import argparse
import logging
from pathlib import Path

from sptcl import reports, solver, storage
from sptcl.commands.common import (
    add_data_arguments,
    add_hyperparam_arguments,
    hyperparams_from_args,
    load_run_data,
    run_config_from_args,
)
from sptcl.config import RunConfig
from sptcl.errors import InputError
from sptcl.evaluation import accuracy, baseline_1nn
from sptcl.graph import build_affinity, dump_affinity

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("train", help="fit on source + target features and predict the target")
    add_data_arguments(parser, required=False)
    add_hyperparam_arguments(parser)
    parser.add_argument("--out", type=Path, default=Path("run"), help="output directory")
    parser.add_argument("--manifest", type=Path, help="replay a previous run from its manifest.json")
    parser.add_argument("--dump-affinity", type=Path, metavar="PATH",
                        help="write the target affinity graph as `i j value` lines")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    if args.manifest is not None:
        manifest = storage.read_json(args.manifest)
        if "config" not in manifest:
            raise InputError(f"{args.manifest} has no 'config' section")
        config = RunConfig.from_manifest(manifest["config"], output_dir=args.out)
    else:
        hp = hyperparams_from_args(args)
        missing = [flag for flag, value in (("--source", args.source), ("--source-labels", args.source_labels),
                                            ("--target", args.target)) if value is None]
        if missing:
            raise InputError(f"Missing required arguments: {', '.join(missing)}")
        config = run_config_from_args(args, hp)
    return cmd_train(config, dump_path=args.dump_affinity)


def cmd_train(config: RunConfig, dump_path: Path | None = None) -> int:
    """Run one training job end to end; returns the process exit code."""
    config.validate()
    data = load_run_data(config)
    hp = config.hyperparams

    if dump_path is not None:
        dump_affinity(build_affinity(data.target.features, hp.k_neighbors), dump_path)
        logger.info("Wrote the target affinity graph to %s", dump_path)

    result = solver.fit(
        data.source,
        data.target,
        hp,
        target_truth=data.target_truth,
        source_truth=data.source_truth,
    )

    storage.save_labels(result.predictions, config.predictions_path, "csv")
    storage.write_records(result.records, config.metrics_path)
    storage.save_model(result.state, hp, config.model_path)

    extra = {"n_source": data.source.n_samples, "n_target": data.target.n_samples,
             "class_count": data.source.class_count}
    baseline = None
    if data.target_truth is not None:
        baseline = accuracy(baseline_1nn(data.source, data.target), data.target_truth)
        extra["final_accuracy"] = accuracy(result.predictions, data.target_truth)
        extra["baseline_1nn_accuracy"] = baseline
    storage.write_json(reports.build_manifest(config, extra), config.manifest_path)

    logger.info("Run summary:\n%s", reports.summary_text(result.records, baseline))
    logger.info("Wrote %s, %s, %s and %s", config.predictions_path, config.metrics_path,
                config.model_path, config.manifest_path)
    return 0
