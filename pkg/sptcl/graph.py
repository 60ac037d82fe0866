"""Cosine kNN affinity over target samples and its normalized graph Laplacian."""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from sptcl.errors import GraphError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AffinityGraph:
    """Symmetric affinity M, degrees d and L = D^-1/2 (D - M) D^-1/2.

    Rows and columns of isolated nodes (d = 0) are zero in L.
    """

    affinity: sparse.csr_matrix
    degrees: np.ndarray
    laplacian: sparse.csr_matrix

    @property
    def n_nodes(self) -> int:
        return self.affinity.shape[0]

    @property
    def isolated(self) -> np.ndarray:
        return np.flatnonzero(self.degrees == 0)


@dataclass(frozen=True, eq=False)
class PaddedLaplacian:
    """``diag(0_{ns x ns}, L_norm)`` over source-then-target samples."""

    matrix: sparse.csr_matrix
    n_source: int

    @property
    def n_target(self) -> int:
        return self.matrix.shape[0] - self.n_source


def cosine_similarity(Xt: np.ndarray) -> np.ndarray:
    """Pairwise cosine between the columns of ``Xt``; rejects zero-norm columns."""
    norms = np.linalg.norm(Xt, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise GraphError(f"Sample {int(zero[0])} has zero norm; cosine similarity is undefined", int(zero[0]))
    unit = Xt / norms
    similarity = unit.T @ unit
    return (similarity + similarity.T) * 0.5


def build_affinity(Xt: np.ndarray, k: int) -> AffinityGraph:
    """OR-rule kNN graph with clamped cosine weights.

    Neighbors are ranked by cosine similarity (descending, ties to the lower
    index, self excluded). ``M_ij = clip(cos, 0, 1)`` when either sample is
    among the other's k nearest neighbors.
    """
    Xt = np.asarray(Xt, dtype=np.float64)
    if Xt.ndim != 2 or Xt.shape[1] < 1:
        raise GraphError("Target features must be an m x n matrix with n >= 1")
    if k < 1:
        raise GraphError(f"k must be >= 1, got {k}")
    n = Xt.shape[1]
    similarity = cosine_similarity(Xt)

    ranking = -similarity
    np.fill_diagonal(ranking, np.inf)
    order = np.argsort(ranking, axis=1, kind="stable")[:, : min(k, n - 1)]
    linked = np.zeros((n, n), dtype=bool)
    linked[np.repeat(np.arange(n), order.shape[1]), order.ravel()] = True
    linked |= linked.T

    weights = np.where(linked, np.clip(similarity, 0.0, 1.0), 0.0)
    np.fill_diagonal(weights, 0.0)
    affinity = sparse.csr_matrix(weights)
    degrees = np.asarray(affinity.sum(axis=1)).ravel()

    connected = degrees > 0
    inv_sqrt = np.zeros(n)
    inv_sqrt[connected] = 1.0 / np.sqrt(degrees[connected])
    scale = sparse.diags(inv_sqrt)
    laplacian = sparse.diags(connected.astype(np.float64)) - scale @ affinity @ scale
    # symmetric to the last bit
    laplacian = sparse.csr_matrix((laplacian + laplacian.T) * 0.5)
    laplacian.eliminate_zeros()

    isolated = n - int(connected.sum())
    if isolated and n > 1:
        logger.warning("%d of %d target samples are isolated in the affinity graph", isolated, n)
    logger.debug("Affinity graph: n=%d, k=%d, edges=%d", n, k, affinity.nnz // 2)
    return AffinityGraph(affinity=affinity, degrees=degrees, laplacian=laplacian)


def pad_laplacian(g: AffinityGraph, n_source: int) -> PaddedLaplacian:
    if n_source == 0:
        return PaddedLaplacian(matrix=sparse.csr_matrix(g.laplacian, copy=True), n_source=0)
    zeros = sparse.csr_matrix((n_source, n_source))
    matrix = sparse.block_diag((zeros, g.laplacian), format="csr")
    return PaddedLaplacian(matrix=matrix, n_source=n_source)


def dump_affinity(g: AffinityGraph, path: str | Path) -> None:
    """Write M as ``i j value`` lines, row-major, nonzero entries only."""
    coo = g.affinity.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with Path(path).open("w") as fh:
        for idx in order:
            fh.write(f"{coo.row[idx]} {coo.col[idx]} {coo.data[idx]:.17g}\n")
