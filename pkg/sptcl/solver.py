"""SP-TCL optimizer.

A joint classifier is fit on source + target by block coordinate descent:

- v-step: a source example stays selected iff its prudent loss is below the pace λ;
- P-step: closed-form soft labels on the simplex (hard argmin when r = 1);
- W-step: a ridge-type linear solve, primal (m x m) or kernel (n x n).

The outer loop walks a keep-fraction schedule from "all source examples" down
to "none", so the last classifier is fit to the target alone.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np
from scipy import linalg

from sptcl.datamodel import UNLABELED, Dataset, Hyperparams, KernelSpec, one_hot
from sptcl.errors import DimensionMismatch, InputError, NumericalError, ValidationError
from sptcl.evaluation import IterationRecord, accuracy, confidence_histogram
from sptcl.graph import PaddedLaplacian, build_affinity, pad_laplacian
from sptcl.kernel import GramMatrix, cross_gram, gram
from sptcl.utils import derive_seed, frozen

logger = logging.getLogger(__name__)

MODES = ("linear", "kernel")
DEFAULT_R = Hyperparams.r
DEFAULT_Q_FLOOR = Hyperparams.q_floor


# --------------- State ---------------

@dataclass(frozen=True, eq=False)
class ModelState:
    """W (m x C linear, n x C kernel), v in {0,1}^ns, P = [Ps | Pt] (C x n) and the pace λ.

    Kernel-mode states also carry the training basis X and the resolved kernel
    so new samples can be scored.
    """

    W: np.ndarray
    v: np.ndarray
    P: np.ndarray
    lam: float
    mode: str
    basis: np.ndarray | None = None
    kernel: KernelSpec | None = None

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("W", "v", "P", "basis"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, frozen(np.asarray(value, dtype=np.float64)))
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def n_source(self) -> int:
        return self.v.shape[0]

    @property
    def class_count(self) -> int:
        return self.P.shape[0]

    @property
    def selected_count(self) -> int:
        return int(self.v.sum())


@dataclass(frozen=True, eq=False)
class TransferProblem:
    """The parts of a fit that never change: X = [Xs, Xt], the padded Laplacian, K."""

    X: np.ndarray
    n_source: int
    laplacian: PaddedLaplacian
    gram: GramMatrix | None = None

    @property
    def mode(self) -> str:
        return "linear" if self.gram is None else "kernel"

    @property
    def n_samples(self) -> int:
        return self.X.shape[1]

    @property
    def n_target(self) -> int:
        return self.n_samples - self.n_source

    @property
    def design(self) -> np.ndarray:
        """Columns f(x_i) = W^T design_i: X in linear mode, K in kernel mode."""
        return self.X if self.gram is None else self.gram.matrix


@dataclass(frozen=True, eq=False)
class WeightedLossTerms:
    """u = [v, 1], F = P^r U, s_i = sum_c F_ci, Q_ci = ||f(x_i) - e_c||^2."""

    u: np.ndarray
    F: np.ndarray
    s: np.ndarray
    Q: np.ndarray


@dataclass(frozen=True)
class PaceSchedule:
    """Keep fractions tau_t = (T - t) / (T - 1) for t = 1..T, kept as exact fractions."""

    outer_iters: int

    def __post_init__(self) -> None:
        if self.outer_iters < 2:
            raise ValidationError(f"outer_iters must be >= 2, got {self.outer_iters}")

    def keep_fraction(self, t: int) -> Fraction:
        if not 1 <= t <= self.outer_iters:
            raise ValidationError(f"Iteration {t} is outside 1..{self.outer_iters}")
        return Fraction(self.outer_iters - t, self.outer_iters - 1)

    @property
    def keep_fractions(self) -> tuple[Fraction, ...]:
        return tuple(self.keep_fraction(t) for t in range(1, self.outer_iters + 1))

    def keep_count(self, t: int, n_source: int) -> int:
        return math.ceil(self.keep_fraction(t) * n_source)


@dataclass(frozen=True, eq=False)
class FitResult:
    state: ModelState
    records: list[IterationRecord]
    predictions: np.ndarray
    states: list[ModelState] = field(default_factory=list)


# --------------- Building blocks ---------------

def train_scores(W: np.ndarray, problem: TransferProblem) -> np.ndarray:
    """Score columns f(x_i) for every training sample (C x n)."""
    return W.T @ problem.design


def residuals(scores: np.ndarray) -> np.ndarray:
    """q_ci = ||f_i - e_c||^2 = ||f_i||^2 - 2 f_ci + 1."""
    sq = np.sum(scores * scores, axis=0, keepdims=True)
    return np.maximum(sq - 2.0 * scores + 1.0, 0.0)


def weighted_terms(state: ModelState, problem: TransferProblem, r: float) -> WeightedLossTerms:
    u = np.concatenate([state.v, np.ones(problem.n_target)])
    F = np.power(state.P, r) * u
    Q = residuals(train_scores(state.W, problem))
    return WeightedLossTerms(u=u, F=F, s=F.sum(axis=0), Q=Q)


def per_example_source_loss(state: ModelState, problem: TransferProblem, r: float) -> np.ndarray:
    """l_i = sum_c [p_ci]^r ||f(x_i) - e_c||^2 over source columns; independent of v."""
    ns = problem.n_source
    Q = residuals(train_scores(state.W, problem)[:, :ns])
    return np.sum(np.power(state.P[:, :ns], r) * Q, axis=0)


def v_step(losses, lam: float) -> np.ndarray:
    """v_i = 1 iff l_i < λ (strict)."""
    return (np.asarray(losses, dtype=np.float64) < lam).astype(np.float64)


def _as_fraction(tau) -> Fraction:
    # str() keeps 0.1 as 1/10 rather than its binary expansion
    tau = Fraction(str(tau)) if isinstance(tau, float) else Fraction(tau)
    if not 0 <= tau <= 1:
        raise ValidationError(f"Keep fraction must lie in [0, 1], got {tau}")
    return tau


def pace_select(losses, tau) -> tuple[float, np.ndarray]:
    """Pick λ so that exactly ceil(tau * ns) source examples are kept.

    λ is 0 when none are kept, ``max(l) + 1`` when all are, else the midpoint
    of the c-th and (c+1)-th smallest losses. When equal losses straddle that
    midpoint the selection falls back to index order (ties to the lower index).
    """
    losses = np.asarray(losses, dtype=np.float64)
    n = losses.shape[0]
    keep = math.ceil(_as_fraction(tau) * n)
    if keep == 0:
        lam = 0.0
    elif keep == n:
        lam = float(losses.max()) + 1.0
    else:
        ordered = np.sort(losses)
        lam = 0.5 * (float(ordered[keep - 1]) + float(ordered[keep]))
    v = v_step(losses, lam)
    if int(v.sum()) != keep:
        v = np.zeros(n)
        v[np.argsort(losses, kind="stable")[:keep]] = 1.0
    return lam, v


def pace_lambda(losses, tau) -> float:
    return pace_select(losses, tau)[0]


def p_step(Q, r: float, q_floor: float = DEFAULT_Q_FLOOR) -> np.ndarray:
    """Closed-form soft labels per column.

    r = 1: one-hot on argmin_c q_ci (ties to the lowest class). r > 1:
    p_ci proportional to (1 / q_ci)^(1 / (r - 1)), with q floored at ``q_floor``.
    Applied to every column; excluded source columns carry no weight in the W-step.
    """
    Q = np.asarray(Q, dtype=np.float64)
    C, n = Q.shape
    if r == 1:
        P = np.zeros((C, n))
        P[np.argmin(Q, axis=0), np.arange(n)] = 1.0
        return P
    log_w = -np.log(np.maximum(Q, q_floor)) / (r - 1.0)
    if n:
        log_w -= log_w.max(axis=0, keepdims=True)
    w = np.exp(log_w)
    return w / w.sum(axis=0, keepdims=True)


def _laplacian_matrix(L):
    return L.matrix if isinstance(L, PaddedLaplacian) else L


def w_step_linear(X, F, s, L, eta: float, rho: float) -> np.ndarray:
    """Solve (X (S + ρL) X^T + ηI) W = X F^T by Cholesky (m x C)."""
    m = X.shape[0]
    A = (X * s) @ X.T + eta * np.eye(m)
    if rho:
        A += rho * (X @ (_laplacian_matrix(L) @ X.T))
    A = 0.5 * (A + A.T)
    try:
        factor = linalg.cho_factor(A, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"Cholesky factorization of the {m}x{m} W-step system failed: {exc}") from exc
    return linalg.cho_solve(factor, X @ F.T, check_finite=False)


def w_step_kernel(K, F, s, L, eta: float, rho: float) -> np.ndarray:
    """Solve ((S + ρL) K + ηI) W = F^T by LU (n x C)."""
    K = K.matrix if isinstance(K, GramMatrix) else np.asarray(K)
    n = K.shape[0]
    A = s[:, None] * K + eta * np.eye(n)
    if rho:
        A += rho * (_laplacian_matrix(L) @ K)
    try:
        return linalg.solve(A, F.T, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"The {n}x{n} kernel W-step system is singular: {exc}") from exc


def w_step(problem: TransferProblem, terms: WeightedLossTerms, hp: Hyperparams) -> np.ndarray:
    if problem.gram is None:
        return w_step_linear(problem.X, terms.F, terms.s, problem.laplacian, hp.eta, hp.rho)
    return w_step_kernel(problem.gram, terms.F, terms.s, problem.laplacian, hp.eta, hp.rho)


def objective(state: ModelState, problem: TransferProblem, hp: Hyperparams) -> float:
    """Full objective: weighted source loss + target loss + complexity + manifold - λ sum(v).

    Linear mode uses η||W||_F^2 and ρ Tr(W^T X L X^T W); kernel mode
    Tr(W^T (ηK + ρKLK) W). In both cases the manifold term equals
    ρ Tr(Z^T L Z) with Z the transposed training scores.
    """
    terms = weighted_terms(state, problem, hp.effective_r)
    loss = float(np.sum(terms.F * terms.Q))
    Z = train_scores(state.W, problem).T
    if problem.gram is None:
        complexity = hp.eta * float(np.sum(state.W * state.W))
    else:
        complexity = hp.eta * float(np.sum(state.W * Z))
    manifold = hp.rho * float(np.sum(Z * (problem.laplacian.matrix @ Z))) if hp.rho else 0.0
    return loss + complexity + manifold - state.lam * float(state.v.sum())


# --------------- Algorithm ---------------

def _check_inputs(source: Dataset, target: Dataset, target_truth, source_truth) -> None:
    if source.labels is None:
        raise InputError("Source labels are missing")
    unlabeled = np.flatnonzero(source.labels == UNLABELED)
    if unlabeled.size:
        raise InputError(f"Source sample {int(unlabeled[0])} is unlabeled; every source sample needs a label")
    if source.class_count < 1:
        raise InputError("Source class_count must be >= 1")
    if source.n_features != target.n_features:
        raise DimensionMismatch(
            f"Source has {source.n_features} features, target has {target.n_features}"
        )
    for name, truth, expected in (
        ("target truth", target_truth, target.n_samples),
        ("source truth", source_truth, source.n_samples),
    ):
        if truth is not None and np.asarray(truth).shape != (expected,):
            raise DimensionMismatch(f"Expected {expected} {name} labels, got shape {np.asarray(truth).shape}")


def build_problem(source: Dataset, target: Dataset, hp: Hyperparams) -> TransferProblem:
    """Stack X = [Xs, Xt], build the target graph and, in kernel mode, the Gram matrix."""
    if source.n_features != target.n_features:
        raise DimensionMismatch(
            f"Source has {source.n_features} features, target has {target.n_features}"
        )
    X = np.hstack([source.features, target.features])
    graph = build_affinity(target.features, hp.k_neighbors)
    laplacian = pad_laplacian(graph, source.n_samples)
    K = None
    if hp.mode == "kernel":
        K = gram(X, hp.kernel, seed=derive_seed(hp.seed, "kernel"))
        logger.debug("Gram matrix %dx%d with kernel %s (gamma=%s)",
                     K.matrix.shape[0], K.matrix.shape[1], K.kind, K.gamma)
    return TransferProblem(X=X, n_source=source.n_samples, laplacian=laplacian, gram=K)


def initial_state(source: Dataset, problem: TransferProblem) -> ModelState:
    """W = 0, v = 1, Ps = one-hot(Ys), Pt = 0."""
    C = source.class_count
    P = np.hstack([one_hot(source.labels, C), np.zeros((C, problem.n_target))])
    if problem.gram is None:
        return ModelState(W=np.zeros((problem.X.shape[0], C)), v=np.ones(problem.n_source), P=P, lam=0.0, mode="linear")
    return ModelState(
        W=np.zeros((problem.n_samples, C)),
        v=np.ones(problem.n_source),
        P=P,
        lam=0.0,
        mode="kernel",
        basis=problem.X,
        kernel=problem.gram.kernel,
    )


def run_inner_loop(state: ModelState, problem: TransferProblem, hp: Hyperparams) -> tuple[ModelState, list[float]]:
    """Alternate W-step and P-step with v and λ fixed; returns the objective after each pair."""
    r = hp.effective_r
    objectives: list[float] = []
    for step in range(1, hp.inner_iters + 1):
        terms = weighted_terms(state, problem, r)
        W = w_step(problem, terms, hp)
        P = p_step(residuals(train_scores(W, problem)), r, hp.q_floor)
        state = replace(state, W=W, P=P)
        value = objective(state, problem, hp)
        logger.debug("  inner %d: objective=%.10g", step, value)
        objectives.append(value)
        if step > 1:
            previous = objectives[-2]
            if abs(previous - value) <= hp.inner_tol * abs(previous):
                break
    return state, objectives


def predict_labels(scores: np.ndarray) -> np.ndarray:
    """Row argmax of each score column; ties go to the lowest class index."""
    return np.argmax(scores, axis=0).astype(np.int64)


def fit(
    source: Dataset,
    target: Dataset,
    hp: Hyperparams,
    *,
    target_truth=None,
    source_truth=None,
    keep_states: bool = False,
) -> FitResult:
    """Run the self-paced outer loop over the keep-fraction schedule.

    ``target_truth`` / ``source_truth`` (clean labels) only feed the per-iteration
    accuracies. ``no_spl`` keeps every source example at every iteration;
    ``hard_label`` uses the r = 1 P-step throughout.
    """
    _check_inputs(source, target, target_truth, source_truth)
    problem = build_problem(source, target, hp)
    state = initial_state(source, problem)
    schedule = PaceSchedule(hp.outer_iters)
    r = hp.effective_r
    ns = problem.n_source
    logger.info(
        "Fitting %s mode: ns=%d, nt=%d, m=%d, C=%d, ablation=%s",
        problem.mode, ns, problem.n_target, problem.X.shape[0], source.class_count, hp.ablation,
    )

    records: list[IterationRecord] = []
    states: list[ModelState] = []
    for t in range(1, hp.outer_iters + 1):
        tau = 1 if hp.ablation == "no_spl" else schedule.keep_fraction(t)
        lam, v = pace_select(per_example_source_loss(state, problem, r), tau)
        state = replace(state, v=v, lam=lam)
        state, objectives = run_inner_loop(state, problem, hp)

        scores = train_scores(state.W, problem)
        target_acc = source_acc = None
        if target_truth is not None:
            target_acc = accuracy(predict_labels(scores[:, ns:]), target_truth)
        if source_truth is not None:
            source_acc = accuracy(predict_labels(scores[:, :ns]), source_truth)
        record = IterationRecord(
            iteration=t,
            lam=state.lam,
            selected_count=state.selected_count,
            objective=objectives[-1],
            target_accuracy=target_acc,
            source_accuracy=source_acc,
            confidence_histogram=confidence_histogram(state.P[:, ns:]),
        )
        logger.info(
            "Iteration %d/%d: lambda=%.6g selected=%d objective=%.6g inner=%d target_acc=%s",
            t, hp.outer_iters, state.lam, state.selected_count, record.objective, len(objectives),
            "n/a" if target_acc is None else f"{target_acc:.4f}",
        )
        records.append(record)
        if keep_states:
            states.append(state)

    predictions = predict_labels(train_scores(state.W, problem)[:, ns:])
    return FitResult(state=state, records=records, predictions=predictions, states=states)


def predict(
    state: ModelState,
    X_new=None,
    *,
    K_new=None,
    r: float = DEFAULT_R,
    q_floor: float = DEFAULT_Q_FLOOR,
) -> tuple[np.ndarray, np.ndarray]:
    """Labels (argmax, ties to lowest class) and probability columns for new samples.

    Linear mode scores ``W^T X_new``; kernel mode ``W^T K_new`` where ``K_new``
    defaults to the Gram block between the training basis and ``X_new``.
    """
    if state.mode == "linear":
        if X_new is None:
            raise InputError("Linear-mode prediction needs X_new")
        X_new = np.asarray(X_new, dtype=np.float64)
        if X_new.shape[0] != state.W.shape[0]:
            raise DimensionMismatch(f"Model expects {state.W.shape[0]} features, got {X_new.shape[0]}")
        scores = state.W.T @ X_new
    else:
        if K_new is None:
            if X_new is None or state.basis is None:
                raise InputError("Kernel-mode prediction needs K_new, or X_new and a stored basis")
            K_new = cross_gram(state.basis, np.asarray(X_new, dtype=np.float64), state.kernel)
        K_new = np.asarray(K_new, dtype=np.float64)
        if K_new.shape[0] != state.W.shape[0]:
            raise DimensionMismatch(f"Model expects {state.W.shape[0]} kernel rows, got {K_new.shape[0]}")
        scores = state.W.T @ K_new
    return predict_labels(scores), p_step(residuals(scores), r, q_floor)
