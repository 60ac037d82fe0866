"""Argument groups and data loading shared by several commands."""

import argparse
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from sptcl import config as settings
from sptcl import storage
from sptcl.config import RunConfig
from sptcl.datamodel import (
    ABLATIONS,
    Dataset,
    Hyperparams,
    NoiseSpec,
    attach_labels,
    inject_label_noise,
    l2_normalize,
    subset_classes,
)
from sptcl.utils import derive_seed, parse_int_list

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class RunData:
    source: Dataset
    target: Dataset
    target_truth: np.ndarray | None
    source_truth: np.ndarray | None


# --------------- Argument groups ---------------

def add_hyperparam_arguments(parser: argparse.ArgumentParser) -> None:
    """Flags named after the model symbols (--r, --eta, --rho, --k, ...)."""
    group = parser.add_argument_group("hyper-parameters")
    defaults = Hyperparams()
    group.add_argument("--r", type=float, default=defaults.r, help="prudent-loss exponent (>= 1)")
    group.add_argument("--eta", type=float, default=defaults.eta, help="complexity regularizer (> 0)")
    group.add_argument("--rho", type=float, default=defaults.rho, help="manifold regularizer (>= 0)")
    group.add_argument("--k", type=int, default=defaults.k_neighbors, help="neighbors in the target graph")
    group.add_argument(
        "--kernel", default=str(defaults.kernel),
        help="none (primal solver), linear, rbf, rbf:median or rbf:<gamma>",
    )
    group.add_argument("--outer-iters", type=int, default=defaults.outer_iters)
    group.add_argument("--inner-iters", type=int, default=defaults.inner_iters)
    group.add_argument("--inner-tol", type=float, default=defaults.inner_tol)
    group.add_argument("--q-floor", type=float, default=defaults.q_floor)
    group.add_argument("--seed", type=int, default=settings.DEFAULT_SEED)
    group.add_argument("--ablation", choices=ABLATIONS, default=defaults.ablation)


def hyperparams_from_args(args: argparse.Namespace) -> Hyperparams:
    return Hyperparams(
        r=args.r,
        eta=args.eta,
        rho=args.rho,
        k_neighbors=args.k,
        kernel=args.kernel,
        outer_iters=args.outer_iters,
        inner_iters=args.inner_iters,
        inner_tol=args.inner_tol,
        q_floor=args.q_floor,
        seed=args.seed,
        ablation=args.ablation,
    )


def add_data_arguments(parser: argparse.ArgumentParser, required: bool = True) -> None:
    group = parser.add_argument_group("data")
    group.add_argument("--source", type=Path, required=required, help="source features file")
    group.add_argument("--source-labels", type=Path, required=required, help="(noisy) source labels file")
    group.add_argument("--target", type=Path, required=required, help="target features file")
    group.add_argument("--target-labels", type=Path, help="true target labels, for accuracy only")
    group.add_argument("--source-truth", type=Path, help="clean source labels, for source accuracy only")
    group.add_argument("--format", dest="feature_format", choices=storage.FORMATS,
                       help="feature file format (default: from suffix)")
    group.add_argument("--label-format", choices=storage.FORMATS,
                       help="label file format (default: from suffix)")
    group.add_argument("--class-count", type=int,
                       help="number of source classes C (default: max source label + 1)")
    group.add_argument("--keep-classes", type=parse_int_list,
                       help="comma-separated target classes to keep (partial DA)")
    group.add_argument("--p-noise", type=float, default=0.0,
                       help="corrupt this fraction of source labels before training")
    group.add_argument("--l2-normalize", action="store_true", help="scale every sample to unit norm")


def run_config_from_args(args: argparse.Namespace, hp: Hyperparams) -> RunConfig:
    return RunConfig(
        source_features=args.source,
        source_labels=args.source_labels,
        target_features=args.target,
        output_dir=args.out,
        target_labels=args.target_labels,
        source_truth=args.source_truth,
        hyperparams=hp,
        noise=NoiseSpec(p_noise=args.p_noise, seed=derive_seed(hp.seed, "noise")),
        keep_classes=tuple(args.keep_classes) if args.keep_classes else None,
        class_count=args.class_count,
        l2_normalize=args.l2_normalize,
        feature_format=args.feature_format,
        label_format=args.label_format,
    )


# --------------- Data ---------------

def load_run_data(config: RunConfig) -> RunData:
    """Load, corrupt, subset and normalize the data of a run, in that order."""
    source = storage.load_features(config.source_features, config.feature_format)
    source = attach_labels(source, storage.load_labels(config.source_labels, config.label_format),
                           config.class_count)
    class_count = source.class_count
    target = storage.load_features(config.target_features, config.feature_format)
    target_truth = None
    if config.target_labels is not None:
        truth = storage.load_labels(config.target_labels, config.label_format)
        target_truth = attach_labels(target, truth, class_count).labels
    source_truth = None
    if config.source_truth is not None:
        source_truth = attach_labels(source, storage.load_labels(config.source_truth, config.label_format),
                                     class_count).labels

    if config.noise.p_noise > 0:
        if source_truth is None:
            source_truth = source.labels
        noisy, flipped = inject_label_noise(source.labels, class_count, config.noise)
        logger.info("Corrupted %d of %d source labels", int(flipped.sum()), flipped.size)
        source = Dataset(source.features, noisy, class_count)

    if config.keep_classes is not None:
        kept = subset_classes(Dataset(target.features, target_truth, class_count), config.keep_classes)
        target, target_truth = Dataset(kept.features, None, class_count), kept.labels
        logger.info("Kept %d target samples of classes %s", target.n_samples, list(config.keep_classes))

    if config.l2_normalize:
        source, target = l2_normalize(source), l2_normalize(target)
    return RunData(source=source, target=target, target_truth=target_truth, source_truth=source_truth)
