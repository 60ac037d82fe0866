"""Builders for run manifests, sweep table rows and the end-of-run summary."""

import math
import platform

import numpy as np
import scipy

from sptcl import __version__
from sptcl.config import RunConfig
from sptcl.evaluation import IterationRecord
from sptcl.utils import SEED_OFFSETS, derive_seed

SWEEP_PARAMS = ("eta", "r", "rho", "p_noise", "outliers")


# ---- Manifest ----

def build_manifest(config: RunConfig, extra: dict | None = None) -> dict:
    """Echo every resolved parameter and seed of a run."""
    seed = config.hyperparams.seed
    manifest = {
        "version": __version__,
        "config": config.to_manifest(),
        "seeds": {
            "base": seed,
            "noise": config.noise.seed,
            "kernel": derive_seed(seed, "kernel"),
            "offsets": dict(SEED_OFFSETS),
        },
        "environment": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    if extra:
        manifest.update(extra)
    return manifest


# ---- Sweep table ----

def sweep_header() -> list[str]:
    return [*SWEEP_PARAMS, "seed_count", "mean_accuracy", "std_accuracy"]


def sweep_row(point: dict, accuracies: list[float]) -> list[str]:
    """Parameters, number of successful seeds, mean and population std of accuracy."""
    params = [_fmt(point[name]) for name in SWEEP_PARAMS]
    if not accuracies:
        return params + ["0", "nan", "nan"]
    values = np.asarray(accuracies, dtype=np.float64)
    return params + [str(values.size), _fmt(float(values.mean())), _fmt(float(values.std()))]


def _fmt(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else f"{value:.10g}"
    return str(value)


# ---- Summary ----

def summary_text(records: list[IterationRecord], baseline_accuracy: float | None = None) -> str:
    """A few lines describing how the run went, for the log."""
    first, last = records[0], records[-1]
    lines = [f"{len(records)} outer iterations, final objective {last.objective:.6g}"]
    if last.target_accuracy is not None:
        lines.append(
            f"target accuracy {first.target_accuracy:.4f} (first) -> {last.target_accuracy:.4f} (final)"
        )
    if baseline_accuracy is not None:
        lines.append(f"1NN baseline accuracy {baseline_accuracy:.4f}")
    lines.append(
        f"top-confidence bin {first.confidence_histogram[-1]} -> {last.confidence_histogram[-1]}"
    )
    return "\n".join(lines)
