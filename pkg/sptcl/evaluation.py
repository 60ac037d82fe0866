"""Metrics, the 1NN baseline and per-iteration transferability diagnostics."""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from sptcl.datamodel import Dataset
from sptcl.errors import DimensionMismatch, InputError, NonSimplexColumn

logger = logging.getLogger(__name__)

HISTOGRAM_BINS = 10
SIMPLEX_TOL = 1e-6


@dataclass(frozen=True)
class IterationRecord:
    """Diagnostics for one outer iteration; serialized with the keys of ``to_dict``."""

    iteration: int
    lam: float
    selected_count: int
    objective: float
    target_accuracy: float | None = None
    source_accuracy: float | None = None
    confidence_histogram: list[int] = field(default_factory=lambda: [0] * HISTOGRAM_BINS)

    def to_dict(self) -> dict:
        return {
            "iter": self.iteration,
            "lambda": self.lam,
            "selected_count": self.selected_count,
            "objective": self.objective,
            "target_accuracy": self.target_accuracy,
            "source_accuracy": self.source_accuracy,
            "confidence_histogram": list(self.confidence_histogram),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IterationRecord":
        return cls(
            iteration=data["iter"],
            lam=data["lambda"],
            selected_count=data["selected_count"],
            objective=data["objective"],
            target_accuracy=data.get("target_accuracy"),
            source_accuracy=data.get("source_accuracy"),
            confidence_histogram=list(data["confidence_histogram"]),
        )


def accuracy(pred, truth) -> float:
    """Fraction of exact matches."""
    pred = np.asarray(pred).reshape(-1)
    truth = np.asarray(truth).reshape(-1)
    if pred.shape != truth.shape:
        raise DimensionMismatch(f"{pred.size} predictions vs {truth.size} labels")
    if pred.size == 0:
        raise InputError("accuracy of an empty prediction set is undefined")
    return float(np.mean(pred == truth))


def baseline_1nn(source: Dataset, target: Dataset) -> np.ndarray:
    """Each target sample takes the label of its nearest source sample (Euclidean, ties to lower index)."""
    if source.labels is None:
        raise InputError("The 1NN baseline needs source labels")
    if source.n_features != target.n_features:
        raise DimensionMismatch(
            f"Source has {source.n_features} features, target has {target.n_features}"
        )
    distances = cdist(target.features.T, source.features.T, "sqeuclidean")
    return source.labels[np.argmin(distances, axis=1)]


def confidence_histogram(Pt) -> list[int]:
    """Counts of each column's largest probability in bins [b/10, (b+1)/10), last bin closed."""
    Pt = np.asarray(Pt, dtype=np.float64)
    if Pt.ndim != 2:
        raise InputError("confidence_histogram expects a C x n matrix")
    if Pt.shape[1] == 0:
        return [0] * HISTOGRAM_BINS
    sums = Pt.sum(axis=0)
    bad = np.flatnonzero((np.abs(sums - 1.0) > SIMPLEX_TOL) | (Pt < -SIMPLEX_TOL).any(axis=0))
    if bad.size:
        i = int(bad[0])
        raise NonSimplexColumn(f"Column {i} is not on the probability simplex (sum={sums[i]:.6g})")
    peak = Pt.max(axis=0)
    bins = np.clip(np.floor(peak * HISTOGRAM_BINS).astype(np.int64), 0, HISTOGRAM_BINS - 1)
    return np.bincount(bins, minlength=HISTOGRAM_BINS).tolist()
