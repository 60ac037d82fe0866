"""Core domain types and the experimental-protocol harness.

Features are stored column-per-sample (``m x n``). Labels are int64 with
``UNLABELED`` (-1) marking unlabeled samples; labeled values live in
``[0, class_count)`` and always use the original source class indexing, so a
target built by ``subset_classes`` shares the source label space.
"""

import logging
from dataclasses import asdict, dataclass

import numpy as np

from sptcl.errors import (
    ClassOutOfRange,
    DimensionMismatch,
    InputError,
    NonFiniteValue,
    ValidationError,
)
from sptcl.utils import frozen

logger = logging.getLogger(__name__)

UNLABELED = -1

ABLATIONS = ("full", "no_spl", "hard_label")
KERNEL_KINDS = ("none", "linear", "rbf")
NOISE_MODES = ("uniform-excluding-true",)

_MAX_SEED = 1 << 64


# --------------- Dataset ---------------

@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix (m x n) plus optional labels for one domain."""

    features: np.ndarray
    labels: np.ndarray | None = None
    class_count: int = 0

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2:
            raise InputError(f"Features must be a 2-d matrix, got {features.ndim}-d")
        m, n = features.shape
        if m < 1 or n < 1:
            raise InputError(f"Dataset needs at least one feature and one sample, got {m}x{n}")
        bad = np.argwhere(~np.isfinite(features))
        if bad.size:
            feature, sample = (int(i) for i in bad[0])
            raise NonFiniteValue("Non-finite feature value", row=sample, col=feature)
        object.__setattr__(self, "features", frozen(features))

        if self.class_count < 0:
            raise ValidationError(f"class_count must be >= 0, got {self.class_count}")
        if self.labels is None:
            return
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.shape[0] != n:
            raise DimensionMismatch(f"Expected {n} labels, got shape {labels.shape}")
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            raise InputError("Labels must be integers")
        labels = labels.astype(np.int64)
        bad = np.flatnonzero((labels != UNLABELED) & ((labels < 0) | (labels >= self.class_count)))
        if bad.size:
            i = int(bad[0])
            raise ClassOutOfRange(
                f"Label {labels[i]} at index {i} is outside [0, {self.class_count})"
            )
        object.__setattr__(self, "labels", frozen(labels))

    @property
    def n_features(self) -> int:
        return self.features.shape[0]

    @property
    def n_samples(self) -> int:
        return self.features.shape[1]

    @property
    def is_labeled(self) -> bool:
        return self.labels is not None


def attach_labels(ds: Dataset, labels, class_count: int | None = None) -> Dataset:
    """Bind a labels vector to a features-only dataset.

    When ``class_count`` is omitted it is inferred as ``max(label) + 1`` (never
    smaller than the dataset's current count).
    """
    labels = np.asarray(labels, dtype=np.int64)
    if class_count is None:
        top = int(labels.max()) + 1 if labels.size else 0
        class_count = max(ds.class_count, top)
    return Dataset(ds.features, labels, class_count)


def l2_normalize(ds: Dataset) -> Dataset:
    """Scale every sample column to unit L2 norm. All-zero columns are left alone."""
    norms = np.linalg.norm(ds.features, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    return Dataset(ds.features / safe, ds.labels, ds.class_count)


# --------------- Hyper-parameters ---------------

@dataclass(frozen=True)
class KernelSpec:
    """``none`` runs the primal (linear) solver; ``linear``/``rbf`` run the kernel solver."""

    kind: str = "none"
    gamma: float | str | None = None

    def __post_init__(self) -> None:
        if self.kind not in KERNEL_KINDS:
            raise ValidationError(f"Unknown kernel kind: {self.kind!r}")
        if self.kind != "rbf":
            if self.gamma is not None:
                raise ValidationError(f"Kernel {self.kind!r} takes no gamma")
            return
        gamma = "median" if self.gamma is None else self.gamma
        if gamma != "median":
            gamma = float(gamma)
            if not np.isfinite(gamma) or gamma <= 0:
                raise ValidationError(f"rbf gamma must be > 0, got {gamma}")
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def parse(cls, text: str) -> "KernelSpec":
        """Parse ``none``, ``linear``, ``rbf``, ``rbf:median`` or ``rbf:<gamma>``."""
        kind, _, gamma = text.strip().partition(":")
        if not gamma:
            return cls(kind)
        if gamma == "median":
            return cls(kind, "median")
        try:
            return cls(kind, float(gamma))
        except ValueError:
            raise ValidationError(f"Cannot parse kernel spec {text!r}") from None

    def __str__(self) -> str:
        return self.kind if self.gamma is None else f"{self.kind}:{self.gamma}"


@dataclass(frozen=True)
class Hyperparams:
    """All solver knobs. Defaults follow the recommended ranges for noisy partial DA."""

    r: float = 1.1
    eta: float = 1.0
    rho: float = 1.0
    k_neighbors: int = 5
    kernel: KernelSpec = KernelSpec()
    outer_iters: int = 10
    inner_iters: int = 10
    inner_tol: float = 1e-5
    q_floor: float = 1e-12
    seed: int = 0
    ablation: str = "full"

    def __post_init__(self) -> None:
        if isinstance(self.kernel, str):
            object.__setattr__(self, "kernel", KernelSpec.parse(self.kernel))
        checks = (
            (self.r >= 1, f"r must be >= 1, got {self.r}"),
            (self.eta > 0, f"eta must be > 0, got {self.eta}"),
            (self.rho >= 0, f"rho must be >= 0, got {self.rho}"),
            (self.k_neighbors >= 1, f"k_neighbors must be >= 1, got {self.k_neighbors}"),
            (self.outer_iters >= 2, f"outer_iters must be >= 2, got {self.outer_iters}"),
            (self.inner_iters >= 1, f"inner_iters must be >= 1, got {self.inner_iters}"),
            (self.inner_tol >= 0, f"inner_tol must be >= 0, got {self.inner_tol}"),
            (self.q_floor > 0, f"q_floor must be > 0, got {self.q_floor}"),
            (0 <= self.seed < _MAX_SEED, f"seed must be a 64-bit unsigned integer, got {self.seed}"),
            (self.ablation in ABLATIONS, f"ablation must be one of {ABLATIONS}, got {self.ablation!r}"),
        )
        for ok, message in checks:
            if not ok:
                raise ValidationError(message)
        for name in ("r", "eta", "rho", "inner_tol", "q_floor"):
            if not np.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite")

    @property
    def mode(self) -> str:
        return "linear" if self.kernel.kind == "none" else "kernel"

    @property
    def effective_r(self) -> float:
        """The hard-label ablation swaps the prudent loss for the plain squared loss (r = 1)."""
        return 1.0 if self.ablation == "hard_label" else self.r

    def to_dict(self) -> dict:
        out = asdict(self)
        out["kernel"] = str(self.kernel)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Hyperparams":
        return cls(**data)


# --------------- Noise injection ---------------

@dataclass(frozen=True)
class NoiseSpec:
    p_noise: float = 0.0
    seed: int = 0
    mode: str = "uniform-excluding-true"

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_noise <= 1.0:
            raise ValidationError(f"p_noise must lie in [0, 1], got {self.p_noise}")
        if self.mode not in NOISE_MODES:
            raise ValidationError(f"Unknown noise mode: {self.mode!r}")
        if not 0 <= self.seed < _MAX_SEED:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


def inject_label_noise(labels, class_count: int, spec: NoiseSpec) -> tuple[np.ndarray, np.ndarray]:
    """Independently replace each label with probability ``p_noise``.

    A replaced label is drawn uniformly from the ``class_count - 1`` other
    classes, so ``p_noise`` is exactly the corruption rate. Returns the noisy
    labels and the boolean mask of flipped positions.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise InputError("Labels must be a vector")
    bad = np.flatnonzero((labels < 0) | (labels >= class_count))
    if bad.size:
        i = int(bad[0])
        raise ClassOutOfRange(f"Label {labels[i]} at index {i} is outside [0, {class_count})")
    if spec.p_noise > 0 and class_count < 2:
        raise ValidationError("Label noise needs at least two classes")

    rng = np.random.default_rng(spec.seed)
    flipped = rng.random(labels.shape[0]) < spec.p_noise
    if class_count < 2:
        return labels.copy(), flipped
    offsets = rng.integers(1, class_count, size=labels.shape[0])
    noisy = np.where(flipped, (labels + offsets) % class_count, labels)
    logger.debug("Flipped %d of %d labels (p_noise=%s)", int(flipped.sum()), labels.size, spec.p_noise)
    return noisy, flipped


# --------------- Class subsets ---------------

def subset_classes(ds: Dataset, keep) -> Dataset:
    """Keep only samples whose label is in ``keep``; labels keep their original indices."""
    if ds.labels is None:
        raise InputError("subset_classes needs a labeled dataset")
    keep = sorted({int(c) for c in keep})
    if not keep:
        raise ClassOutOfRange("The set of classes to keep is empty")
    outside = [c for c in keep if not 0 <= c < ds.class_count]
    if outside:
        raise ClassOutOfRange(f"Classes {outside} are outside [0, {ds.class_count})")
    mask = np.isin(ds.labels, keep)
    if not mask.any():
        raise InputError(f"No samples belong to classes {keep}")
    return Dataset(ds.features[:, mask], ds.labels[mask], ds.class_count)


def one_hot(labels, class_count: int) -> np.ndarray:
    """Columns are standard basis vectors e_c; result is ``class_count x n``."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    bad = np.flatnonzero((labels < 0) | (labels >= class_count))
    if bad.size:
        i = int(bad[0])
        raise ClassOutOfRange(f"Label {labels[i]} at index {i} is outside [0, {class_count})")
    out = np.zeros((class_count, labels.shape[0]))
    out[labels, np.arange(labels.shape[0])] = 1.0
    return out


# --------------- Synthetic tasks ---------------

@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian clusters on orthogonal class centers; the target is shifted and partial."""

    shared_classes: int = 3
    outlier_classes: int = 3
    source_per_class: int = 100
    target_per_class: int = 50
    n_features: int = 20
    separation: float = 2.5
    noise_scale: float = 1.0
    shift: float = 1.5
    seed: int = 0

    def __post_init__(self) -> None:
        total = self.shared_classes + self.outlier_classes
        checks = (
            (self.shared_classes >= 1, "shared_classes must be >= 1"),
            (self.outlier_classes >= 0, "outlier_classes must be >= 0"),
            (self.source_per_class >= 1, "source_per_class must be >= 1"),
            (self.target_per_class >= 1, "target_per_class must be >= 1"),
            (self.n_features >= total, f"n_features must be >= {total} (one axis per class)"),
            (self.separation > 0, "separation must be > 0"),
            (self.noise_scale > 0, "noise_scale must be > 0"),
            (self.shift >= 0, "shift must be >= 0"),
            (0 <= self.seed < _MAX_SEED, "seed must be a 64-bit unsigned integer"),
        )
        for ok, message in checks:
            if not ok:
                raise ValidationError(message)

    @property
    def class_count(self) -> int:
        return self.shared_classes + self.outlier_classes


def generate_synthetic(spec: SyntheticSpec) -> tuple[Dataset, Dataset, np.ndarray]:
    """Build a shifted partial-DA task with clean labels: (source, target, target truth).

    Source covers shared + outlier classes, the target only the shared ones
    (``0 .. shared_classes - 1``) and is displaced by a common mean shift.
    """
    rng = np.random.default_rng(spec.seed)
    m, total = spec.n_features, spec.class_count
    basis, _ = np.linalg.qr(rng.standard_normal((m, total)))
    centers = spec.separation * basis
    direction = rng.standard_normal(m)
    offset = spec.shift * direction / np.linalg.norm(direction)

    def draw(classes: int, per_class: int, displacement: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        blocks, labels = [], []
        for c in range(classes):
            noise = spec.noise_scale * rng.standard_normal((m, per_class))
            blocks.append(centers[:, [c]] + displacement[:, None] + noise)
            labels.append(np.full(per_class, c, dtype=np.int64))
        features, labels = np.hstack(blocks), np.concatenate(labels)
        order = rng.permutation(labels.shape[0])
        return features[:, order], labels[order]

    xs, ys = draw(total, spec.source_per_class, np.zeros(m))
    xt, yt = draw(spec.shared_classes, spec.target_per_class, offset)
    source = Dataset(xs, ys, total)
    target = Dataset(xt, None, total)
    return source, target, frozen(yt)
