import itertools
import math
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
from scipy import sparse
from scipy.optimize import minimize_scalar

from sptcl import solver
from sptcl.datamodel import Dataset, Hyperparams, KernelSpec, one_hot
from sptcl.errors import DimensionMismatch, InputError, ValidationError
from sptcl.graph import build_affinity, pad_laplacian
from sptcl.kernel import gram
from sptcl.solver import (
    ModelState,
    PaceSchedule,
    build_problem,
    fit,
    initial_state,
    objective,
    p_step,
    pace_lambda,
    pace_select,
    per_example_source_loss,
    predict,
    run_inner_loop,
    train_scores,
    v_step,
    w_step_kernel,
    w_step_linear,
)


def random_state(gen, problem, class_count, mode="linear"):
    rows = problem.X.shape[0] if mode == "linear" else problem.n_samples
    return ModelState(
        W=0.3 * gen.standard_normal((rows, class_count)),
        v=gen.integers(0, 2, size=problem.n_source).astype(float),
        P=gen.dirichlet(np.ones(class_count), size=problem.n_samples).T,
        lam=float(gen.uniform(0, 2)),
        mode=mode,
    )


def random_system(seed):
    """Random W-step inputs: X (m x n), F >= 0, s = column sums of F, padded Laplacian."""
    gen = np.random.default_rng(seed)
    m, ns, nt, C = (int(gen.integers(2, 21)), int(gen.integers(1, 25)),
                    int(gen.integers(2, 26)), int(gen.integers(2, 5)))
    X = gen.standard_normal((m, ns + nt))
    u = np.concatenate([gen.integers(0, 2, size=ns), np.ones(nt)])
    F = gen.dirichlet(np.ones(C), size=ns + nt).T ** 1.5 * u
    L = pad_laplacian(build_affinity(X[:, ns:], int(gen.integers(1, 5))), ns)
    return gen, X, F, F.sum(axis=0), L


# --------------- Source loss ---------------

def test_source_loss_uses_powered_probabilities(make_task):
    source, target = make_task(0, ns=1, nt=4, m=3, classes=3)
    problem = build_problem(source, target, Hyperparams())
    P = np.hstack([np.array([[0.8], [0.1], [0.1]]), np.full((3, 4), 1 / 3)])
    state = ModelState(W=np.zeros((3, 3)), v=np.ones(1), P=P, lam=0.0, mode="linear")
    assert per_example_source_loss(state, problem, 2.0)[0] == pytest.approx(0.64 + 0.01 + 0.01)


def test_source_loss_is_zero_on_exact_fit():
    source = Dataset(np.eye(3), np.array([0, 1, 2]), 3)
    target = Dataset(np.ones((3, 2)), None, 3)
    problem = build_problem(source, target, Hyperparams())
    P = np.hstack([np.eye(3), np.full((3, 2), 1 / 3)])
    state = ModelState(W=np.eye(3), v=np.zeros(3), P=P, lam=0.0, mode="linear")
    np.testing.assert_allclose(per_example_source_loss(state, problem, 1.5), 0.0, atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_source_loss_matches_loop(make_task, seed):
    source, target = make_task(seed)
    problem = build_problem(source, target, Hyperparams())
    gen = np.random.default_rng(seed)
    state = random_state(gen, problem, 3)
    r = 1.3
    losses = per_example_source_loss(state, problem, r)
    for i in range(problem.n_source):
        f = state.W.T @ problem.X[:, i]
        expected = sum(state.P[c, i] ** r * np.sum((f - np.eye(3)[c]) ** 2) for c in range(3))
        assert losses[i] == pytest.approx(expected, rel=1e-10, abs=1e-12)


# --------------- v-step and pace ---------------

def test_v_step_threshold():
    np.testing.assert_array_equal(v_step([0.5, 2.0], 1.0), [1, 0])
    np.testing.assert_array_equal(v_step([0.0, 0.5], 0.0), [0, 0])


@pytest.mark.parametrize("seed", range(200))
def test_v_step_minimizes_selection_objective(seed):
    gen = np.random.default_rng(seed)
    n = int(gen.integers(1, 13))
    losses = gen.exponential(size=n)
    lam = float(gen.uniform(0, 2))
    candidates = np.array(list(itertools.product([0.0, 1.0], repeat=n)))
    values = candidates @ (losses - lam)
    v = v_step(losses, lam)
    assert v @ (losses - lam) == pytest.approx(values.min(), abs=1e-12)


def test_pace_select_midpoint():
    lam, v = pace_select([1.0, 2.0, 3.0, 4.0], 0.5)
    assert lam == 2.5
    np.testing.assert_array_equal(v, [1, 1, 0, 0])


def test_pace_select_boundaries():
    losses = [0.3, 1.0, 0.7]
    lam, v = pace_select(losses, 1)
    assert lam > max(losses)
    assert v.all()
    lam, v = pace_select(losses, 0)
    assert lam == 0.0
    assert not v.any()


def test_pace_select_ties_fall_back_to_index_order():
    lam, v = pace_select([1.0, 1.0, 1.0, 1.0], 0.5)
    assert lam == 1.0
    np.testing.assert_array_equal(v, [1, 1, 0, 0])


def test_pace_select_keeps_ceil_count():
    _, v = pace_select(np.arange(10.0), 0.1)
    assert v.sum() == 1
    _, v = pace_select(np.arange(10.0), Fraction(1, 3))
    assert v.sum() == 4


def test_pace_lambda_rejects_bad_fraction():
    with pytest.raises(ValidationError):
        pace_lambda([1.0], 1.5)


# --------------- P-step ---------------

def test_p_step_examples():
    np.testing.assert_array_equal(p_step(np.array([[0.2], [0.5], [0.9]]), 1), [[1], [0], [0]])
    np.testing.assert_allclose(p_step(np.array([[1.0], [1.0]]), 2), [[0.5], [0.5]])
    np.testing.assert_allclose(p_step(np.array([[1.0], [3.0]]), 2), [[0.75], [0.25]])


def test_p_step_hard_ties_go_to_lowest_class():
    np.testing.assert_array_equal(p_step(np.array([[0.5], [0.2], [0.2]]), 1), [[0], [1], [0]])


def test_p_step_exact_fit_takes_all_mass():
    P = p_step(np.array([[0.0], [1.0]]), 2)
    assert P[0, 0] == pytest.approx(1.0)
    assert P[1, 0] == pytest.approx(1e-12)


def test_p_step_does_not_overflow():
    P = p_step(np.array([[1e-300], [1e300]]), 1.01)
    assert np.all(np.isfinite(P))
    np.testing.assert_allclose(P.sum(axis=0), 1.0)


def simplex_grid(class_count, divisions):
    """Every point of the simplex whose coordinates are multiples of 1 / divisions (C x G)."""
    bars = np.array(list(itertools.combinations(range(divisions + class_count - 1), class_count - 1)))
    edges = np.hstack([np.full((len(bars), 1), -1), bars, np.full((len(bars), 1), divisions + class_count - 1)])
    return (np.diff(edges, axis=1) - 1).T / divisions


GRID_COLUMNS = {2: (2000, 200), 3: (200, 150), 4: (60, 100), 5: (30, 50)}


@pytest.mark.parametrize("r", [1.1, 1.5, 2.0])
@pytest.mark.parametrize("class_count", sorted(GRID_COLUMNS))
def test_p_step_matches_grid_search(class_count, r):
    divisions, columns = GRID_COLUMNS[class_count]
    candidates = simplex_grid(class_count, divisions)
    gen = np.random.default_rng(class_count * 1000 + int(r * 10))
    for _ in range(columns):
        q = gen.uniform(0.05, 3.0, size=class_count)
        p = p_step(q[:, None], r)[:, 0]
        values = np.sum(candidates ** r * q[:, None], axis=0)
        best = int(np.argmin(values))
        value = float(np.sum(p ** r * q))
        assert value <= values[best] + 1e-8

        # r(r-1) min(q) lower-bounds the curvature on the simplex for 1 < r <= 2
        mu = r * (r - 1.0) * q.min()
        gap = max(values[best] - value, 0.0)
        distance = np.linalg.norm(candidates[:, best] - p)
        assert distance ** 2 <= 2.0 * (gap + 1e-12) / mu


@pytest.mark.parametrize("r", [1.1, 1.5, 2.0])
def test_p_step_two_classes_matches_scalar_minimizer(r):
    gen = np.random.default_rng(int(r * 7))
    for _ in range(100):
        q = gen.uniform(0.05, 3.0, size=2)
        best = minimize_scalar(lambda t: t ** r * q[0] + (1.0 - t) ** r * q[1],
                               bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-12})
        p = p_step(q[:, None], r)[:, 0]
        assert abs(p[0] - best.x) <= 1e-4


def test_simplex_grid_points():
    grid = simplex_grid(3, 2)
    assert grid.shape == (3, 6)
    np.testing.assert_allclose(grid.sum(axis=0), 1.0)
    assert {tuple(column) for column in grid.T} == {
        (0, 0, 1), (0, 0.5, 0.5), (0, 1, 0), (0.5, 0, 0.5), (0.5, 0.5, 0), (1, 0, 0)}


def test_p_step_stationarity_and_simplex():
    gen = np.random.default_rng(0)
    for _ in range(500):
        C = int(gen.integers(2, 6))
        r = float(gen.choice([1.1, 1.5, 2.0]))
        q = gen.uniform(0.1, 2.0, size=(C, 1))
        p = p_step(q, r)
        assert np.all(p >= 0)
        assert abs(p.sum() - 1.0) <= 1e-9
        stationary = p[:, 0] ** (r - 1) * q[:, 0]
        np.testing.assert_allclose(stationary, stationary[0], rtol=1e-6)


# --------------- W-step ---------------

def test_w_step_linear_diagonal_system():
    F = np.random.default_rng(1).uniform(size=(3, 4))
    W = w_step_linear(np.eye(4), F, np.ones(4), sparse.csr_matrix((4, 4)), eta=0.5, rho=0.0)
    np.testing.assert_allclose(W, F.T / 1.5)


def test_w_step_kernel_diagonal_system():
    F = np.random.default_rng(2).uniform(size=(3, 4))
    W = w_step_kernel(np.eye(4), F, np.ones(4), sparse.csr_matrix((4, 4)), eta=2.0, rho=0.0)
    np.testing.assert_allclose(W, F.T / 3.0)


def test_w_step_zero_rhs():
    X = np.random.default_rng(3).standard_normal((3, 5))
    L = pad_laplacian(build_affinity(X[:, 2:], 1), 2)
    F = np.zeros((2, 5))
    s = np.ones(5)
    np.testing.assert_array_equal(w_step_linear(X, F, s, L, 1.0, 1.0), 0.0)
    np.testing.assert_array_equal(w_step_kernel(X.T @ X, F, s, L, 1.0, 1.0), 0.0)


def quadratic(W, X, F, L, eta, rho):
    """The W-step subproblem: weighted squared loss + eta ||W||^2 + rho Tr(Z^T L Z)."""
    scores = W.T @ X
    C = F.shape[0]
    loss = sum(np.sum(F[c] * np.sum((scores - np.eye(C)[:, [c]]) ** 2, axis=0)) for c in range(C))
    Z = scores.T
    return loss + eta * np.sum(W * W) + rho * np.sum(Z * (L.matrix @ Z))


@pytest.mark.parametrize("seed", range(50))
def test_w_step_linear_solves_normal_equations(seed):
    gen, X, F, s, L = random_system(seed)
    eta, rho = float(gen.uniform(0.1, 2.0)), float(gen.uniform(0.0, 2.0))
    W = w_step_linear(X, F, s, L, eta, rho)

    A = (X * s) @ X.T + rho * X @ (L.matrix @ X.T) + eta * np.eye(X.shape[0])
    rhs = X @ F.T
    assert np.linalg.norm(A @ W - rhs) <= 1e-8 * np.linalg.norm(rhs)

    W0 = gen.standard_normal(W.shape)
    analytic = 2.0 * (A @ W0 - rhs)
    numeric = np.zeros_like(W0)
    h = 1e-5
    for index in np.ndindex(W0.shape):
        step = np.zeros_like(W0)
        step[index] = h
        numeric[index] = (quadratic(W0 + step, X, F, L, eta, rho)
                          - quadratic(W0 - step, X, F, L, eta, rho)) / (2 * h)
    assert np.linalg.norm(numeric - analytic) <= 1e-5 * np.linalg.norm(analytic)


@pytest.mark.parametrize("seed", range(20))
def test_w_step_kernel_solves_system(seed):
    gen, X, F, s, L = random_system(seed)
    K = gram(X, KernelSpec("rbf", "median")).matrix
    W = w_step_kernel(K, F, s, L, 1.0, 0.5)
    A = s[:, None] * K + 0.5 * (L.matrix @ K) + np.eye(K.shape[0])
    assert np.linalg.norm(A @ W - F.T) <= 1e-8 * np.linalg.norm(F)


@pytest.mark.parametrize("seed", range(20))
def test_linear_kernel_push_through(seed):
    gen, X, F, s, L = random_system(seed)
    W_linear = w_step_linear(X, F, s, L, 0.7, 1.3)
    W_kernel = w_step_kernel(X.T @ X, F, s, L, 0.7, 1.3)
    np.testing.assert_allclose(W_kernel.T @ (X.T @ X), W_linear.T @ X, atol=1e-6)


# --------------- Objective ---------------

def test_objective_with_zero_weights_counts_target_columns(make_task):
    source, target = make_task(1)
    problem = build_problem(source, target, Hyperparams())
    labels = np.random.default_rng(1).integers(0, 3, size=problem.n_samples)
    state = ModelState(W=np.zeros((5, 3)), v=np.zeros(problem.n_source), P=one_hot(labels, 3),
                       lam=0.0, mode="linear")
    assert objective(state, problem, Hyperparams()) == pytest.approx(problem.n_target)


@pytest.mark.parametrize("seed", range(5))
def test_objective_matches_loop_linear(make_task, seed):
    source, target = make_task(seed)
    hp = Hyperparams(r=1.4, eta=0.6, rho=0.8)
    problem = build_problem(source, target, hp)
    state = random_state(np.random.default_rng(seed), problem, 3)

    u = np.concatenate([state.v, np.ones(problem.n_target)])
    expected = 0.0
    for i in range(problem.n_samples):
        f = state.W.T @ problem.X[:, i]
        for c in range(3):
            expected += u[i] * state.P[c, i] ** hp.r * np.sum((f - np.eye(3)[c]) ** 2)
    expected += hp.eta * np.sum(state.W ** 2)
    L = problem.laplacian.matrix.toarray()
    XLX = problem.X @ L @ problem.X.T
    expected += hp.rho * np.trace(state.W.T @ XLX @ state.W)
    expected -= state.lam * state.v.sum()
    assert objective(state, problem, hp) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_objective_matches_formula_kernel(make_task, seed):
    source, target = make_task(seed)
    hp = Hyperparams(r=1.2, eta=0.9, rho=0.4, kernel="rbf:0.3")
    problem = build_problem(source, target, hp)
    state = random_state(np.random.default_rng(seed), problem, 3, mode="kernel")
    K = problem.gram.matrix
    L = problem.laplacian.matrix.toarray()

    scores = state.W.T @ K
    u = np.concatenate([state.v, np.ones(problem.n_target)])
    Q = np.array([[np.sum((scores[:, i] - np.eye(3)[c]) ** 2) for i in range(problem.n_samples)]
                  for c in range(3)])
    expected = np.sum(state.P ** hp.r * u * Q)
    expected += np.trace(state.W.T @ (hp.eta * K + hp.rho * K @ L @ K) @ state.W)
    expected -= state.lam * state.v.sum()
    assert objective(state, problem, hp) == pytest.approx(expected, rel=1e-10)


# --------------- Inner loop ---------------

@pytest.mark.parametrize("kernel", ["none", "rbf:median"])
@pytest.mark.parametrize("seed", range(50))
def test_inner_loop_never_increases_objective(make_task, seed, kernel):
    source, target = make_task(seed)
    hp = Hyperparams(kernel=kernel, inner_iters=8, inner_tol=0.0, seed=seed)
    problem = build_problem(source, target, hp)
    state = initial_state(source, problem)
    lam, v = pace_select(per_example_source_loss(state, problem, hp.r), 0.5)
    _, objectives = run_inner_loop(replace(state, v=v, lam=lam), problem, hp)
    for previous, current in zip(objectives, objectives[1:]):
        assert current <= previous + 1e-8 * abs(previous)


def test_inner_loop_stops_on_tolerance(make_task):
    source, target = make_task(3)
    hp = Hyperparams(inner_iters=10, inner_tol=1.0)
    problem = build_problem(source, target, hp)
    _, objectives = run_inner_loop(initial_state(source, problem), problem, hp)
    assert len(objectives) == 2


def test_inner_loop_keeps_columns_on_simplex(make_task):
    source, target = make_task(4)
    hp = Hyperparams(inner_iters=3)
    problem = build_problem(source, target, hp)
    state, _ = run_inner_loop(initial_state(source, problem), problem, hp)
    assert np.all(state.P >= 0)
    np.testing.assert_allclose(state.P.sum(axis=0), 1.0, atol=1e-9)


# --------------- Schedule and fit ---------------

def test_schedule_fractions():
    assert PaceSchedule(5).keep_fractions == (1, Fraction(3, 4), Fraction(1, 2), Fraction(1, 4), 0)
    assert PaceSchedule(5).keep_count(2, 10) == 8
    with pytest.raises(ValidationError):
        PaceSchedule(1)
    with pytest.raises(ValidationError):
        PaceSchedule(3).keep_fraction(4)


def test_fit_follows_schedule(small_task, fast_hp):
    source, target, truth = small_task
    result = fit(source, target, fast_hp, target_truth=truth)
    ns = source.n_samples
    T = fast_hp.outer_iters
    expected = [math.ceil(Fraction(T - t, T - 1) * ns) for t in range(1, T + 1)]
    assert [record.selected_count for record in result.records] == expected
    assert result.records[-1].selected_count == 0
    assert result.state.selected_count == 0
    assert [record.iteration for record in result.records] == list(range(1, T + 1))
    for record in result.records:
        assert math.isfinite(record.objective)
        assert sum(record.confidence_histogram) == target.n_samples
        assert 0.0 <= record.target_accuracy <= 1.0
        assert record.source_accuracy is None
    assert result.predictions.shape == (target.n_samples,)
    assert set(result.predictions.tolist()) <= set(range(source.class_count))


def test_fit_with_two_iterations_keeps_all_then_none(small_task):
    source, target, _ = small_task
    result = fit(source, target, Hyperparams(outer_iters=2, inner_iters=2))
    assert [record.selected_count for record in result.records] == [source.n_samples, 0]
    assert result.records[-1].lam == 0.0


def test_no_spl_keeps_every_source_example(small_task, fast_hp):
    source, target, _ = small_task
    result = fit(source, target, replace(fast_hp, ablation="no_spl"))
    assert all(record.selected_count == source.n_samples for record in result.records)


def test_hard_label_gives_one_hot_columns(small_task, fast_hp):
    source, target, _ = small_task
    result = fit(source, target, replace(fast_hp, r=2.0, ablation="hard_label"))
    P = result.state.P
    assert set(np.unique(P).tolist()) <= {0.0, 1.0}
    np.testing.assert_array_equal(P.sum(axis=0), 1.0)


def test_fit_reports_source_accuracy(small_task, fast_hp):
    source, target, truth = small_task
    result = fit(source, target, fast_hp, target_truth=truth, source_truth=source.labels)
    assert all(record.source_accuracy is not None for record in result.records)


def test_fit_is_deterministic(small_task, fast_hp):
    source, target, truth = small_task
    first = fit(source, target, fast_hp, target_truth=truth)
    second = fit(source, target, fast_hp, target_truth=truth)
    assert first.records == second.records
    np.testing.assert_array_equal(first.predictions, second.predictions)
    np.testing.assert_array_equal(first.state.W, second.state.W)


def test_fit_keep_states(small_task, fast_hp):
    source, target, _ = small_task
    result = fit(source, target, fast_hp, keep_states=True)
    assert len(result.states) == fast_hp.outer_iters
    assert result.states[-1] is result.state
    assert fit(source, target, fast_hp).states == []


@pytest.mark.parametrize("seed", range(20))
def test_kernel_linear_equivalence(make_task, seed):
    source, target = make_task(seed)
    hp = Hyperparams(outer_iters=4, inner_iters=4)
    linear = fit(source, target, hp, keep_states=True)
    kernel = fit(source, target, replace(hp, kernel=KernelSpec("linear")), keep_states=True)
    X = np.hstack([source.features, target.features])
    K = X.T @ X
    for lin_state, ker_state in zip(linear.states, kernel.states):
        np.testing.assert_allclose(ker_state.W.T @ K, lin_state.W.T @ X, atol=1e-6)
    assert [r.selected_count for r in linear.records] == [r.selected_count for r in kernel.records]
    np.testing.assert_array_equal(linear.predictions, kernel.predictions)


def test_fit_needs_source_labels(make_task):
    source, target = make_task(0)
    with pytest.raises(InputError):
        fit(Dataset(source.features, None, 3), target, Hyperparams())


def test_fit_rejects_unlabeled_source(make_task):
    source, target = make_task(0)
    labels = source.labels.copy()
    labels[2] = -1
    with pytest.raises(InputError):
        fit(Dataset(source.features, labels, 3), target, Hyperparams())


def test_fit_rejects_dimension_mismatch(make_task):
    source, _ = make_task(0)
    with pytest.raises(DimensionMismatch):
        fit(source, Dataset(np.ones((4, 3)), None, 3), Hyperparams())
    _, target = make_task(0)
    with pytest.raises(DimensionMismatch):
        fit(source, target, Hyperparams(), target_truth=np.zeros(2, dtype=int))


# --------------- Predict ---------------

def linear_state(W):
    C = W.shape[1]
    return ModelState(W=W, v=np.ones(1), P=np.full((C, 1), 1 / C), lam=0.0, mode="linear")


def test_predict_identity_weights():
    labels, _ = predict(linear_state(np.eye(3)), np.array([[0.0], [1.0], [0.0]]))
    np.testing.assert_array_equal(labels, [1])


def test_predict_ties_go_to_lowest_class():
    labels, probabilities = predict(linear_state(np.zeros((2, 3))), np.ones((2, 4)))
    np.testing.assert_array_equal(labels, [0, 0, 0, 0])
    np.testing.assert_allclose(probabilities, 1 / 3)


def test_predict_dominant_class():
    W = np.zeros((2, 3))
    W[:, 2] = 1.0
    labels, _ = predict(linear_state(W), np.abs(np.random.default_rng(0).standard_normal((2, 6))) + 0.1)
    np.testing.assert_array_equal(labels, 2)


def test_predict_checks_dimensions():
    with pytest.raises(DimensionMismatch):
        predict(linear_state(np.eye(3)), np.ones((2, 1)))
    with pytest.raises(InputError):
        predict(linear_state(np.eye(3)))


def test_kernel_predict_reproduces_fit(small_task):
    source, target, _ = small_task
    hp = Hyperparams(outer_iters=3, inner_iters=3, kernel="rbf:median")
    result = fit(source, target, hp)
    labels, probabilities = predict(result.state, target.features, r=hp.r)
    np.testing.assert_array_equal(labels, result.predictions)
    np.testing.assert_allclose(probabilities.sum(axis=0), 1.0)

    rows = result.state.W.shape[0]
    with pytest.raises(DimensionMismatch):
        predict(result.state, K_new=np.ones((rows + 1, 2)))


def test_model_state_rejects_unknown_mode():
    with pytest.raises(ValidationError):
        ModelState(W=np.zeros((2, 2)), v=np.ones(1), P=np.ones((2, 1)) / 2, lam=0.0, mode="dual")


def test_train_scores_shape(make_task):
    source, target = make_task(0)
    problem = build_problem(source, target, Hyperparams())
    assert train_scores(np.zeros((5, 3)), problem).shape == (3, problem.n_samples)
    assert solver.DEFAULT_R == Hyperparams.r
