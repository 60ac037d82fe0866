"""predict: label new samples with a model archive written by ``train``."""

import argparse
import logging
from pathlib import Path

import numpy as np

from sptcl import solver, storage

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("predict", help="label a features file with a trained model")
    parser.add_argument("--model", type=Path, required=True, help="model.npz from a train run")
    parser.add_argument("--features", type=Path, required=True, help="features file to label")
    parser.add_argument("--format", dest="feature_format", choices=storage.FORMATS)
    parser.add_argument("--out", type=Path, required=True, help="predictions file (one label per line)")
    parser.add_argument("--probabilities", type=Path, help="optional CSV of class probabilities per sample")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    return cmd_predict(args.model, args.features, args.out, args.probabilities, args.feature_format)


def cmd_predict(model_path, features_path, out_path, probabilities_path=None, feature_format=None) -> int:
    state, hp = storage.load_model(model_path)
    ds = storage.load_features(features_path, feature_format)
    labels, probabilities = solver.predict(state, ds.features, r=hp.effective_r, q_floor=hp.q_floor)
    storage.save_labels(labels, out_path, "csv")
    if probabilities_path is not None:
        np.savetxt(probabilities_path, probabilities.T, delimiter=",", fmt="%.17g")
    logger.info("Labeled %d samples -> %s", labels.size, out_path)
    return 0
