"""Load configuration from environment / .env file, plus the per-run RunConfig."""

import os
from dataclasses import dataclass
from pathlib import Path

from dotenv import load_dotenv

from sptcl.datamodel import Hyperparams, NoiseSpec
from sptcl.errors import InputError, ValidationError

load_dotenv()

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def _int_from_env(name: str, default: int) -> int:
    raw = os.getenv(name, "").strip()
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError:
        raise RuntimeError(
            f"{name} must be an integer, got {raw!r}. "
            "Fix it in your .env file (see .env.example)."
        ) from None


LOG_LEVEL: str = os.getenv("SPTCL_LOG_LEVEL", "INFO").strip().upper()
DEFAULT_SEED: int = _int_from_env("SPTCL_SEED", 0)
SWEEP_WORKERS: int = _int_from_env("SPTCL_SWEEP_WORKERS", 1)

if LOG_LEVEL not in LOG_LEVELS:
    raise RuntimeError(f"SPTCL_LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}, got {LOG_LEVEL!r}.")

if SWEEP_WORKERS < 1:
    raise RuntimeError(f"SPTCL_SWEEP_WORKERS must be >= 1, got {SWEEP_WORKERS}.")

if not 0 <= DEFAULT_SEED < 1 << 64:
    raise RuntimeError(f"SPTCL_SEED must be a 64-bit unsigned integer, got {DEFAULT_SEED}.")

# Output file names inside a run directory
PREDICTIONS_FILE = "predictions.csv"
METRICS_FILE = "metrics.jsonl"
MANIFEST_FILE = "manifest.json"
MODEL_FILE = "model.npz"


def _optional_path(value) -> Path | None:
    return None if value in (None, "") else Path(value)


@dataclass(frozen=True)
class RunConfig:
    """Everything a ``train`` run needs; round-trips through the run manifest."""

    source_features: Path
    source_labels: Path
    target_features: Path
    output_dir: Path
    target_labels: Path | None = None
    source_truth: Path | None = None
    hyperparams: Hyperparams = Hyperparams()
    noise: NoiseSpec = NoiseSpec()
    keep_classes: tuple[int, ...] | None = None
    class_count: int | None = None
    l2_normalize: bool = False
    feature_format: str | None = None
    label_format: str | None = None

    @property
    def predictions_path(self) -> Path:
        return self.output_dir / PREDICTIONS_FILE

    @property
    def metrics_path(self) -> Path:
        return self.output_dir / METRICS_FILE

    @property
    def manifest_path(self) -> Path:
        return self.output_dir / MANIFEST_FILE

    @property
    def model_path(self) -> Path:
        return self.output_dir / MODEL_FILE

    def input_paths(self) -> list[Path]:
        paths = [self.source_features, self.source_labels, self.target_features]
        return paths + [p for p in (self.target_labels, self.source_truth) if p is not None]

    def validate(self) -> None:
        """Check inputs exist and the output directory is writable (creating it if needed)."""
        for path in self.input_paths():
            if not Path(path).is_file():
                raise InputError(f"File not found: {path}")
        if self.class_count is not None and self.class_count < 1:
            raise ValidationError(f"class_count must be >= 1, got {self.class_count}")
        if self.keep_classes is not None and self.target_labels is None:
            raise InputError("Keeping a class subset of the target needs target labels")
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise InputError(f"Cannot create output directory {self.output_dir}: {exc}") from exc
        if not os.access(self.output_dir, os.W_OK):
            raise InputError(f"Output directory {self.output_dir} is not writable")

    def to_manifest(self) -> dict:
        return {
            "source_features": str(self.source_features),
            "source_labels": str(self.source_labels),
            "target_features": str(self.target_features),
            "target_labels": str(self.target_labels) if self.target_labels else None,
            "source_truth": str(self.source_truth) if self.source_truth else None,
            "output_dir": str(self.output_dir),
            "hyperparams": self.hyperparams.to_dict(),
            "noise": {"p_noise": self.noise.p_noise, "seed": self.noise.seed, "mode": self.noise.mode},
            "keep_classes": list(self.keep_classes) if self.keep_classes is not None else None,
            "class_count": self.class_count,
            "l2_normalize": self.l2_normalize,
            "feature_format": self.feature_format,
            "label_format": self.label_format,
        }

    @classmethod
    def from_manifest(cls, data: dict, output_dir: Path | None = None) -> "RunConfig":
        """Rebuild a RunConfig; ``output_dir`` overrides the recorded one."""
        try:
            keep = data.get("keep_classes")
            return cls(
                source_features=Path(data["source_features"]),
                source_labels=Path(data["source_labels"]),
                target_features=Path(data["target_features"]),
                output_dir=Path(output_dir or data["output_dir"]),
                target_labels=_optional_path(data.get("target_labels")),
                source_truth=_optional_path(data.get("source_truth")),
                hyperparams=Hyperparams.from_dict(data["hyperparams"]),
                noise=NoiseSpec(**data["noise"]),
                keep_classes=tuple(keep) if keep is not None else None,
                class_count=data.get("class_count"),
                l2_normalize=bool(data.get("l2_normalize", False)),
                feature_format=data.get("feature_format"),
                label_format=data.get("label_format"),
            )
        except (KeyError, TypeError) as exc:
            raise InputError(f"Manifest is missing or has a malformed field: {exc}") from exc
