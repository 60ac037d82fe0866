"""noise: corrupt a labels file, uniformly over the other classes."""

import argparse
import logging
from pathlib import Path

from sptcl import config as settings
from sptcl import storage
from sptcl.datamodel import NoiseSpec, inject_label_noise

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("noise", help="flip a fraction of labels to other classes")
    parser.add_argument("--labels-in", type=Path, required=True)
    parser.add_argument("--class-count", type=int, required=True)
    parser.add_argument("--p-noise", type=float, required=True)
    parser.add_argument("--seed", type=int, default=settings.DEFAULT_SEED)
    parser.add_argument("--labels-out", type=Path, required=True)
    parser.add_argument("--mask-out", type=Path, help="flipped mask, 0/1 per line (default: <labels-out>_flipped)")
    parser.add_argument("--label-format", choices=storage.FORMATS)
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    return cmd_noise(args.labels_in, args.class_count, args.p_noise, args.seed, args.labels_out,
                     args.mask_out, args.label_format)


def default_mask_path(labels_out: Path) -> Path:
    return labels_out.with_name(f"{labels_out.stem}_flipped{labels_out.suffix}")


def cmd_noise(labels_in, class_count: int, p_noise: float, seed: int, labels_out,
              mask_out=None, label_format: str | None = None) -> int:
    spec = NoiseSpec(p_noise=p_noise, seed=seed)
    labels = storage.load_labels(labels_in, label_format)
    noisy, flipped = inject_label_noise(labels, class_count, spec)
    labels_out = Path(labels_out)
    mask_out = Path(mask_out) if mask_out is not None else default_mask_path(labels_out)
    storage.save_labels(noisy, labels_out, label_format)
    storage.save_labels(flipped, mask_out, label_format)
    logger.info("Flipped %d of %d labels -> %s", int(flipped.sum()), flipped.size, labels_out)
    return 0
