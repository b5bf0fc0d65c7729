import itertools
import logging
import math
from dataclasses import replace

import numpy as np
import pytest

from adatriv.engine import (
    INF,
    atriv_run,
    dtriv_run,
    iteration_bound,
    pullback_gradient,
    register_problem,
    rgd_momentum_full_history_run,
    rgd_momentum_transport_run,
    rgd_run,
    static_run,
    steepest_transport,
    theorem_step_size,
)
from adatriv.errors import ConfigurationError, SingularityError, UnsupportedError
from adatriv.linalg import make_rng, random_orthogonal, random_skew, random_symmetric
from adatriv.manifolds import Euclidean, ManifoldPoint, SpecialOrthogonal, Sphere, egrad_to_rgrad
from adatriv.matfuncs import expm_matrix
from adatriv.optimizers import OptimizerRule, init_state, optimizer_step
from adatriv.problems import build_problem, linear_problem, procrustes_problem, quadratic_form_problem


def _points(record):
    return np.array(record.points)


def _random_problem(M, kind, rng):
    C = rng.standard_normal(M.shape)
    if kind == "linear":
        return linear_problem(M, C)
    size = int(np.prod(M.shape))
    return quadratic_form_problem(M, random_symmetric(size, rng), C)


# ---------------------------------------------------------------------
# gradient maps
@pytest.mark.parametrize("M", [SpecialOrthogonal(4), Sphere(5), Euclidean(3)], ids=lambda m: m.name)
def test_pullback_at_zero_is_riemannian_gradient(M):
    rng = make_rng(42)
    problem = _random_problem(M, "quadratic", rng)
    p0 = ManifoldPoint(M, M.random_point(rng))
    expected = egrad_to_rgrad(p0, problem.ambient_gradient(p0.coordinates)).coordinates
    np.testing.assert_allclose(pullback_gradient(p0, p0.zero(), problem).coordinates, expected, atol=1e-15)


@pytest.mark.parametrize("M", [SpecialOrthogonal(4), Sphere(5)], ids=lambda m: m.name)
def test_pullback_matches_finite_differences(M):
    rng = make_rng(43)
    problem = _random_problem(M, "linear", rng)
    p0 = ManifoldPoint(M, M.random_point(rng))
    w = p0.tangent(M.random_tangent(p0.coordinates, rng, 1.0))
    g = pullback_gradient(p0, w, problem).coordinates
    h = 1e-5
    for _ in range(5):
        e = M.random_tangent(p0.coordinates, rng, 1.0)
        plus = problem.objective(M.exp(p0.coordinates, w.coordinates + h * e))
        minus = problem.objective(M.exp(p0.coordinates, w.coordinates - h * e))
        numeric = (plus - minus) / (2 * h)
        assert abs(numeric - M.inner(p0.coordinates, g, e)) <= 1e-6 * max(1.0, np.linalg.norm(g))


def test_steepest_transport_at_the_base_point_is_identity():
    M = SpecialOrthogonal(4)
    rng = make_rng(44)
    p0 = ManifoldPoint(M, M.random_point(rng))
    g = p0.tangent(M.random_tangent(p0.coordinates, rng))
    out = steepest_transport(p0, p0, p0.zero(), g)
    np.testing.assert_array_equal(out.coordinates, g.coordinates)


def test_steepest_transport_is_identity_in_euclidean_space():
    M = Euclidean(4)
    rng = make_rng(45)
    p0, p_i = ManifoldPoint(M, rng.standard_normal(4)), ManifoldPoint(M, rng.standard_normal(4))
    v = p_i.tangent(rng.standard_normal(4))
    g = p0.tangent(rng.standard_normal(4))
    np.testing.assert_array_equal(steepest_transport(p0, p_i, v, g).coordinates, g.coordinates)


def _check_gradient_mapping(problem, rng, base):
    M = problem.manifold
    p0 = ManifoldPoint(M, base)
    p_i = ManifoldPoint(M, M.exp(p0.coordinates, M.random_tangent(p0.coordinates, rng, 0.5)))
    v = p_i.tangent(M.random_tangent(p_i.coordinates, rng, 0.3))
    w = p0.tangent(M.log(p0.coordinates, M.exp(p_i.coordinates, v.coordinates)))

    at_p0 = pullback_gradient(p0, w, problem)
    moved = steepest_transport(p0, p_i, v, at_p0, w).coordinates
    direct = pullback_gradient(p_i, v, problem).coordinates
    assert np.linalg.norm(moved - direct) <= 1e-7 * max(1.0, np.linalg.norm(direct))


@pytest.mark.parametrize("M", [SpecialOrthogonal(4), Sphere(5)], ids=lambda m: m.name)
@pytest.mark.parametrize("kind", ["linear", "quadratic"])
def test_steepest_transport_maps_gradient_to_gradient(M, kind):
    rng = make_rng(47)
    for _ in range(12):
        problem = _random_problem(M, kind, rng)
        _check_gradient_mapping(problem, rng, M.random_point(rng))


@pytest.mark.parametrize("name,n", [("procrustes", 4), ("geodesic-distance", 4), ("rayleigh-sphere", 5)])
def test_steepest_transport_on_benchmark_problems(name, n):
    for seed in range(12):
        problem = build_problem(name, n, 200 + seed)
        rng = make_rng(300 + seed)
        M = problem.manifold
        if problem.name == "geodesic-distance":
            # stay well inside the injectivity radius around the optimum
            base = M.exp(problem.minimizer, M.random_tangent(problem.minimizer, rng, 0.5))
        else:
            base = M.random_point(rng)
        _check_gradient_mapping(problem, rng, base)


@pytest.mark.parametrize("kind", ["linear", "quadratic"])
def test_cayley_pullback_matches_finite_differences(kind):
    M = SpecialOrthogonal(4)
    rng = make_rng(48)
    problems = [_random_problem(M, kind, rng), build_problem("procrustes", 4, 49)]
    h = 1e-5
    for problem in problems:
        p0 = ManifoldPoint(M, M.random_point(rng))
        w = p0.tangent(M.random_tangent(p0.coordinates, rng, 0.8))
        g = pullback_gradient(p0, w, problem, trivialization="cayley").coordinates
        for _ in range(5):
            e = M.random_tangent(p0.coordinates, rng, 1.0)
            plus = problem.objective(M.retract(p0.coordinates, w.coordinates + h * e, "cayley"))
            minus = problem.objective(M.retract(p0.coordinates, w.coordinates - h * e, "cayley"))
            numeric = (plus - minus) / (2 * h)
            assert abs(numeric - M.inner(p0.coordinates, g, e)) <= 1e-6 * max(1.0, np.linalg.norm(g))


def test_cayley_pullback_at_zero_is_riemannian_gradient():
    M = SpecialOrthogonal(5)
    rng = make_rng(50)
    problem = _random_problem(M, "quadratic", rng)
    p0 = ManifoldPoint(M, M.random_point(rng))
    expected = egrad_to_rgrad(p0, problem.ambient_gradient(p0.coordinates)).coordinates
    g = pullback_gradient(p0, p0.zero(), problem, trivialization="cayley").coordinates
    np.testing.assert_allclose(g, expected, atol=1e-15)


# ---------------------------------------------------------------------
# trivializations
def test_atriv_without_rebasing_is_the_static_trivialization():
    problem = build_problem("procrustes", 6, 55)
    rule = OptimizerRule.adam()
    adaptive = atriv_run(problem, rule, INF, 1e-2, 200)
    static = static_run(problem, rule, 1e-2, 200)
    assert adaptive.rows == static.rows
    np.testing.assert_array_equal(_points(adaptive), _points(static))


@pytest.mark.parametrize("name,n", [("procrustes", 6), ("rayleigh-sphere", 5)])
def test_dtriv_every_step_with_sgd_is_rgd(name, n):
    problem = build_problem(name, n, 59)
    dynamic = dtriv_run(problem, OptimizerRule.sgd(), 1, 1e-2, 200)
    plain = rgd_run(problem, 1e-2, 200)
    assert np.max(np.abs(_points(dynamic) - _points(plain))) <= 1e-10
    np.testing.assert_allclose(dynamic.f_values, plain.f_values, rtol=0, atol=1e-12)


def test_atriv_every_step_with_sgd_is_rgd():
    problem = build_problem("procrustes", 5, 60)
    adaptive = atriv_run(problem, OptimizerRule.sgd(), 1, 1e-2, 100)
    plain = rgd_run(problem, 1e-2, 100)
    assert np.max(np.abs(_points(adaptive) - _points(plain))) <= 1e-10


def test_dtriv_without_rebasing_matches_atriv():
    problem = build_problem("rayleigh-sphere", 5, 57)
    rule = OptimizerRule.rmsprop()
    dynamic = dtriv_run(problem, rule, INF, 1e-2, 150)
    adaptive = atriv_run(problem, rule, INF, 1e-2, 150)
    assert dynamic.rows == adaptive.rows


def test_adam_correction_changes_the_trace():
    problem = build_problem("rayleigh-sphere", 5, 61)
    rule = OptimizerRule.adam()
    adaptive = atriv_run(problem, rule, 1, 1e-2, 100)
    dynamic = dtriv_run(problem, rule, 1, 1e-2, 100)
    gap = np.max(np.abs(np.array(adaptive.f_values) - np.array(dynamic.f_values)))
    assert gap > 1e-6


def test_static_cayley_trivialization_solves_procrustes():
    rng = make_rng(56)
    U, V = random_orthogonal(4, rng), random_orthogonal(4, rng)
    A = U @ np.diag(rng.uniform(1.0, 2.0, 4)) @ V.T
    problem = procrustes_problem(A, A @ expm_matrix(random_skew(4, rng, spectral_norm=1.0)))
    record = static_run(problem, OptimizerRule.sgd(), 0.1, 2000, trivialization="cayley")
    assert record.ok
    assert record.algorithm == "static-cayley"
    assert record.best_f - problem.known_optimum <= 1e-8
    assert max(problem.manifold.drift(x) for x in record.points) <= 1e-10


def test_dtriv_every_step_through_cayley_is_rgd_with_cayley():
    problem = build_problem("procrustes", 5, 58)
    dynamic = dtriv_run(problem, OptimizerRule.sgd(), 1, 1e-2, 100, trivialization="cayley")
    plain = rgd_run(problem, 1e-2, 100, retraction="cayley")
    assert dynamic.algorithm == "dtriv-1-cayley"
    assert np.max(np.abs(_points(dynamic) - _points(plain))) <= 1e-10


def test_cayley_trivialization_needs_rotations():
    with pytest.raises(UnsupportedError):
        dtriv_run(build_problem("rayleigh-sphere", 4, 58), OptimizerRule.adam(), 5, 1e-2, 10, trivialization="cayley")
    with pytest.raises(ConfigurationError):
        static_run(build_problem("procrustes", 3, 58), OptimizerRule.adam(), 1e-2, 10, trivialization="qr")


@pytest.mark.parametrize("k", [1, 5, INF])
def test_atriv_in_euclidean_space_is_the_plain_optimizer(k):
    problem = build_problem("quadratic-euclidean", 6, 61)
    rule, lr, iters = OptimizerRule.adam(), 1e-3, 100
    record = atriv_run(problem, rule, k, lr, iters)

    x = np.array(problem.start)
    state = init_state(rule, x.shape)
    expected = []
    for _ in range(iters):
        state, g_hat = optimizer_step(state, problem.ambient_gradient(x))
        x = x - lr * g_hat
        expected.append(x)
    assert np.max(np.abs(_points(record) - np.array(expected))) <= 1e-12


def test_runs_are_deterministic():
    problem = build_problem("rayleigh-sphere", 6, 62)
    first = atriv_run(problem, OptimizerRule.adam(), 5, 1e-2, 150)
    second = atriv_run(problem, OptimizerRule.adam(), 5, 1e-2, 150)
    assert first.rows == second.rows
    np.testing.assert_array_equal(_points(first), _points(second))


def test_trace_bookkeeping():
    problem = build_problem("procrustes", 4, 64)
    record = atriv_run(problem, OptimizerRule.adam(), 3, 1e-2, 7)
    assert [(r.iter_outer, r.iter_inner) for r in record.rows] == [
        (0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2), (2, 0),
    ]
    assert record.algorithm == "atriv-3"
    assert record.final_f == record.rows[-1].f
    assert record.best_f <= record.f_initial


def test_zero_iterations_give_an_empty_trace():
    problem = build_problem("procrustes", 4, 64)
    record = atriv_run(problem, OptimizerRule.adam(), 1, 1e-2, 0)
    assert record.rows == []
    assert record.final_f == record.f_initial == problem.objective(problem.start)


def test_run_arguments_are_validated():
    problem = build_problem("procrustes", 3, 65)
    with pytest.raises(ConfigurationError):
        atriv_run(problem, OptimizerRule.adam(), 1, 0.0, 10)
    with pytest.raises(ConfigurationError):
        dtriv_run(problem, OptimizerRule.adam(), 0, 1e-2, 10)
    with pytest.raises(ConfigurationError):
        rgd_run(problem, 1e-2, -1)
    with pytest.raises(ConfigurationError):
        rgd_run(problem, 1e-2, 10, retraction="qr")


def test_orthogonality_survives_long_runs():
    problem = build_problem("procrustes", 16, 83)
    record = atriv_run(problem, OptimizerRule.adam(), 1, 1e-2, 10_000)
    assert record.ok
    assert max(problem.manifold.drift(x) for x in record.points) <= 1e-10


def test_restart_when_leaving_the_injectivity_domain(caplog):
    # C = -U·P with U = diag(-1, -1, 1): the minimizer U is a half turn from I, f* = -trace(P)
    P = np.array([[2.0, 0.3, 0.5], [0.3, 1.5, 0.4], [0.5, 0.4, 1.0]])
    C = -np.diag([-1.0, -1.0, 1.0]) @ P
    problem = linear_problem(SpecialOrthogonal(3), C)
    with caplog.at_level(logging.WARNING, logger="adatriv.engine"):
        record = atriv_run(problem, OptimizerRule.sgd(), 1, 0.1, 600)
    assert record.ok
    assert record.restarts >= 1
    assert record.final_f <= -4.5 + 1e-6
    assert "restart" in caplog.text
    assert all(math.isfinite(row.f) for row in record.rows)


def test_non_finite_objective_aborts_the_run():
    problem = build_problem("procrustes", 4, 66)
    calls = itertools.count()

    def flaky(x):
        return math.nan if next(calls) >= 4 else problem.objective(x)

    record = atriv_run(replace(problem, objective=flaky), OptimizerRule.adam(), 1, 1e-2, 50)
    assert not record.ok
    assert len(record.rows) == 3
    assert "not finite" in record.aborted


def test_register_problem_rejects_a_wrong_gradient():
    rng = make_rng(67)
    A = rng.standard_normal((3, 3))
    problem = procrustes_problem(A, A @ SpecialOrthogonal(3).random_point(rng))
    exact = problem.ambient_gradient
    with pytest.raises(ConfigurationError):
        register_problem(replace(problem, ambient_gradient=lambda X: 2 * exact(X)))


# ---------------------------------------------------------------------
# RGD
def test_rgd_is_stationary_at_a_critical_point():
    A = make_rng(68).standard_normal((4, 4))
    problem = procrustes_problem(A, A)
    record = rgd_run(problem, 0.1, 20)
    for x in record.points:
        np.testing.assert_array_equal(x, problem.start)


def test_rgd_solves_rayleigh():
    problem = build_problem("rayleigh-sphere", 8, 67)
    record = rgd_run(problem, 0.1, 2000)
    assert record.final_f - problem.known_optimum <= 1e-8


def test_cayley_and_exp_agree_for_small_steps():
    rng = make_rng(69)
    C = rng.standard_normal((3, 3))
    problem = linear_problem(SpecialOrthogonal(3), C / np.linalg.norm(C))
    by_exp = rgd_run(problem, 1e-3, 10, retraction="exp")
    by_cayley = rgd_run(problem, 1e-3, 10, retraction="cayley")
    assert np.max(np.abs(_points(by_exp) - _points(by_cayley))) <= 1e-8
    assert by_cayley.algorithm == "rgd-cayley"


def test_singular_cayley_steps_are_halved(monkeypatch):
    rng = make_rng(70)
    problem = linear_problem(SpecialOrthogonal(3), rng.standard_normal((3, 3)))
    original = SpecialOrthogonal.retract

    def fussy(self, x, v, method="exp"):
        if method == "cayley" and np.linalg.norm(v) > 1e-2:
            raise SingularityError("forced")
        return original(self, x, v, method)

    monkeypatch.setattr(SpecialOrthogonal, "retract", fussy)
    record = rgd_run(problem, 0.5, 5, retraction="cayley")
    assert record.ok
    assert all(0 < row.step_dist <= 1e-2 for row in record.rows)


def test_always_singular_retraction_aborts(monkeypatch):
    problem = linear_problem(SpecialOrthogonal(3), make_rng(70).standard_normal((3, 3)))

    def broken(self, x, v, method="exp"):
        raise SingularityError("forced")

    monkeypatch.setattr(SpecialOrthogonal, "retract", broken)
    record = rgd_run(problem, 0.5, 5, retraction="cayley")
    assert not record.ok
    assert record.rows == []


# ---------------------------------------------------------------------
# momentum baselines
def test_transported_momentum_without_momentum_is_rgd():
    problem = build_problem("procrustes", 5, 63)
    heavy = rgd_momentum_transport_run(problem, 1e-2, 0.0, 100)
    plain = rgd_run(problem, 1e-2, 100)
    np.testing.assert_array_equal(_points(heavy), _points(plain))


def test_momentum_in_euclidean_space_is_heavy_ball():
    problem = build_problem("quadratic-euclidean", 4, 72)
    lr, mu, iters = 1e-2, 0.9, 100
    transported = rgd_momentum_transport_run(problem, lr, mu, iters)
    history = rgd_momentum_full_history_run(problem, lr, mu, iters)

    x, m = np.array(problem.start), np.zeros(4)
    expected = []
    for _ in range(iters):
        m = problem.ambient_gradient(x) + mu * m
        x = x + (-lr * m)
        expected.append(x)
    assert np.max(np.abs(_points(transported) - np.array(expected))) <= 1e-12
    assert np.max(np.abs(_points(history) - _points(transported))) <= 1e-12
    assert np.max(np.abs(np.array(history.momenta) - np.array(transported.momenta))) <= 1e-12
    assert history.dropped_gradients == 0


def test_momentum_baselines_differ_on_the_sphere():
    problem = build_problem("rayleigh-sphere", 3, 71)
    transported = rgd_momentum_transport_run(problem, 0.05, 0.9, 200)
    history = rgd_momentum_full_history_run(problem, 0.05, 0.9, 200)
    np.testing.assert_array_equal(transported.momenta[0], history.momenta[0])
    gaps = [np.linalg.norm(a - b) for a, b in zip(transported.momenta, history.momenta)]
    assert max(gaps) > 1e-4


def test_full_history_drops_gradients_it_cannot_transport(caplog):
    # every step of length π lands on the antipode of the previous iterate
    problem = linear_problem(Sphere(3), np.array([0.0, -1.0, 0.0]))
    with caplog.at_level(logging.WARNING, logger="adatriv.engine"):
        record = rgd_momentum_full_history_run(problem, math.pi, 0.9, 5)
    assert record.ok
    assert record.dropped_gradients == 4
    assert "dropping gradient" in caplog.text


def test_transported_momentum_resets_on_long_steps(caplog):
    M = Sphere(3)
    problem = linear_problem(M, np.array([0.0, -1.0, 0.0]))
    with caplog.at_level(logging.WARNING, logger="adatriv.engine"):
        record = rgd_momentum_transport_run(problem, 4.0, 0.99, 2)
    # the first step has length 4 > π, the second stays inside the injectivity radius
    assert record.ok
    assert [row.restarts for row in record.rows] == [1, 1]
    assert record.restarts == 1
    x1 = record.points[0]
    np.testing.assert_array_equal(record.momenta[1], M.egrad_to_rgrad(x1, problem.ambient_gradient(x1)))
    assert "momentum reset" in caplog.text


# ---------------------------------------------------------------------
# step-size rule
def test_theorem_step_size_examples():
    problem = build_problem("procrustes", 3, 73)
    assert theorem_step_size(replace(problem, hessian_bound=1.0), 3.0) == pytest.approx(0.5)
    assert theorem_step_size(replace(problem, hessian_bound=2.0), 0.0) == pytest.approx(0.5)
    with pytest.raises(ConfigurationError):
        theorem_step_size(replace(problem, hessian_bound=None), 1.0)
    with pytest.raises(ConfigurationError):
        theorem_step_size(problem, -1.0)
    with pytest.raises(UnsupportedError):
        theorem_step_size(build_problem("rayleigh-sphere", 3, 73), 1.0)


def test_theorem_step_size_decreases_monotonically_and_meets_its_bound():
    problem = build_problem("procrustes", 4, 79)
    r = math.pi
    lr = theorem_step_size(problem, r)
    record = atriv_run(problem, OptimizerRule.sgd(), 1, lr, 3000)
    f = np.concatenate([[record.f_initial], record.f_values])
    assert np.all(np.diff(f) <= 1e-12)

    grad_norms = np.array([row.grad_norm for row in record.rows])
    hits = np.nonzero(grad_norms < 1e-2)[0]
    assert hits.size
    assert hits[0] + 1 <= iteration_bound(problem, r, 1e-2, record.f_initial)
