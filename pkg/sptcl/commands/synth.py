"""synth: write a seeded synthetic source/target task in both file formats."""

import argparse
import logging
from dataclasses import asdict
from pathlib import Path

from sptcl import config as settings
from sptcl import storage
from sptcl.datamodel import SyntheticSpec, generate_synthetic

logger = logging.getLogger(__name__)

SUFFIXES = {"csv": ".csv", "binary": ".bin"}


def register(subparsers) -> None:
    parser = subparsers.add_parser("synth", help="generate a synthetic shifted, partial task")
    defaults = SyntheticSpec()
    parser.add_argument("--shared-classes", type=int, default=defaults.shared_classes)
    parser.add_argument("--outlier-classes", type=int, default=defaults.outlier_classes)
    parser.add_argument("--source-per-class", type=int, default=defaults.source_per_class)
    parser.add_argument("--target-per-class", type=int, default=defaults.target_per_class)
    parser.add_argument("--features", dest="n_features", type=int, default=defaults.n_features)
    parser.add_argument("--separation", type=float, default=defaults.separation)
    parser.add_argument("--noise-scale", type=float, default=defaults.noise_scale)
    parser.add_argument("--shift", type=float, default=defaults.shift)
    parser.add_argument("--seed", type=int, default=settings.DEFAULT_SEED)
    parser.add_argument("--out", type=Path, required=True, help="output directory")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    spec = SyntheticSpec(
        shared_classes=args.shared_classes,
        outlier_classes=args.outlier_classes,
        source_per_class=args.source_per_class,
        target_per_class=args.target_per_class,
        n_features=args.n_features,
        separation=args.separation,
        noise_scale=args.noise_scale,
        shift=args.shift,
        seed=args.seed,
    )
    return cmd_synth(spec, args.out)


def cmd_synth(spec: SyntheticSpec, out_dir: Path) -> int:
    """Source labels written here are clean; corrupt them with the ``noise`` command."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    source, target, target_truth = generate_synthetic(spec)
    for fmt, suffix in SUFFIXES.items():
        storage.save_features(source, out_dir / f"source{suffix}", fmt)
        storage.save_labels(source.labels, out_dir / f"source_labels{suffix}", fmt)
        storage.save_features(target, out_dir / f"target{suffix}", fmt)
        storage.save_labels(target_truth, out_dir / f"target_labels{suffix}", fmt)
    storage.write_json(asdict(spec), out_dir / "synthetic.json")
    logger.info("Wrote %d source and %d target samples to %s", source.n_samples, target.n_samples, out_dir)
    return 0
