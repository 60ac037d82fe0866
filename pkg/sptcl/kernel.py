"""Gram matrices for the kernelized solver."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from sptcl.datamodel import KernelSpec
from sptcl.errors import DimensionMismatch, KernelError

logger = logging.getLogger(__name__)

MEDIAN_MAX_PAIRS = 2000


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """K over all samples in source-then-target order, with the kernel actually used."""

    matrix: np.ndarray
    kernel: KernelSpec

    @property
    def kind(self) -> str:
        return self.kernel.kind

    @property
    def gamma(self) -> float | None:
        return self.kernel.gamma if self.kind == "rbf" else None


def median_gamma(X: np.ndarray, seed: int = 0) -> float:
    """``1 / (2 * med^2)`` with ``med`` the median pairwise distance.

    Uses every pair when there are at most ``MEDIAN_MAX_PAIRS`` of them, else a
    seeded sample of that many pairs, each joining two different samples
    (the same pair may be drawn more than once).
    """
    n = X.shape[1]
    total = n * (n - 1) // 2
    if total == 0:
        raise KernelError("The median heuristic needs at least two samples")
    if total <= MEDIAN_MAX_PAIRS:
        distances = pdist(X.T)
    else:
        rng = np.random.default_rng(seed)
        first = rng.integers(0, n, size=MEDIAN_MAX_PAIRS)
        second = (first + rng.integers(1, n, size=MEDIAN_MAX_PAIRS)) % n
        distances = np.linalg.norm(X[:, first] - X[:, second], axis=0)
    med = float(np.median(distances))
    if med == 0:
        raise KernelError("Median pairwise distance is zero; pass an explicit rbf gamma")
    gamma = 1.0 / (2.0 * med * med)
    logger.debug("Median heuristic: med=%.6g, gamma=%.6g over %d pairs", med, gamma, distances.size)
    return gamma


def resolve_kernel(X: np.ndarray, kernel: KernelSpec, seed: int = 0) -> KernelSpec:
    """Replace ``rbf:median`` by the numeric gamma it resolves to on ``X``."""
    if kernel.kind == "rbf" and kernel.gamma == "median":
        return KernelSpec("rbf", median_gamma(X, seed))
    return kernel


def gram(X: np.ndarray, kernel: KernelSpec, seed: int = 0) -> GramMatrix:
    """Linear ``X^T X`` or RBF ``exp(-gamma * ||x_i - x_j||^2)`` over the columns of X."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 1:
        raise KernelError("gram needs an m x n matrix with n >= 1")
    if kernel.kind == "linear":
        return GramMatrix(matrix=X.T @ X, kernel=kernel)
    if kernel.kind != "rbf":
        raise KernelError(f"No Gram matrix for kernel {kernel.kind!r}")
    kernel = resolve_kernel(X, kernel, seed)
    if kernel.gamma <= 0:
        raise KernelError(f"rbf gamma must be > 0, got {kernel.gamma}")
    sq = squareform(pdist(X.T, "sqeuclidean")) if X.shape[1] > 1 else np.zeros((1, 1))
    return GramMatrix(matrix=np.exp(-kernel.gamma * sq), kernel=kernel)


def cross_gram(basis: np.ndarray, X_new: np.ndarray, kernel: KernelSpec) -> np.ndarray:
    """``k(basis_i, x_j)`` for training columns ``basis`` and new columns ``X_new`` (n x n_new)."""
    if basis.shape[0] != X_new.shape[0]:
        raise DimensionMismatch(f"Feature dimension {X_new.shape[0]} does not match the training basis {basis.shape[0]}")
    if kernel.kind == "linear":
        return basis.T @ X_new
    if kernel.kind != "rbf" or kernel.gamma == "median":
        raise KernelError(f"cross_gram needs a resolved linear or rbf kernel, got {kernel}")
    return np.exp(-kernel.gamma * cdist(basis.T, X_new.T, "sqeuclidean"))
