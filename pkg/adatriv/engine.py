"""
engine.py
~~~~~~~~~

Optimization procedures over a ``Problem``:

    atriv_run                       adaptive dynamic trivialization (ATRIV-K)
    dtriv_run / static_run          dynamic trivialization without correction
                                    (DTRIV-K; K = ∞ is the static one), through
                                    exp or the Cayley map on SO(n)
    rgd_run                         Riemannian gradient descent (exp or Cayley)
    rgd_momentum_transport_run      momentum carried by parallel transport
    rgd_momentum_full_history_run   momentum rebuilt from every past gradient

In ATRIV the optimizer state lives in T_{p0}M. Each inner step computes the
gradient of f∘exp_{p0} at w = exp_{p0}⁻¹(exp_{p_i}(v)), lets the optimizer
adapt it there, and moves the adapted direction to T_{p_i}M with the adjoint
of d(exp_{p0}⁻¹∘exp_{p_i}). That adjoint sends the gradient of f∘exp_{p0} to
the gradient of f∘exp_{p_i}, so plain SGD is unaffected by the base change.

A ``BranchError`` (leaving the injectivity domain of exp_{p0}) triggers a
restart: p0 moves to the current point and the optimizer state is reset.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Callable, NamedTuple, Optional, Union

import numpy as np

from .errors import (
    AdatrivError,
    BranchError,
    ConfigurationError,
    DomainError,
    SingularityError,
    UnsupportedError,
)
from .linalg import RngSeed, make_rng
from .manifolds import (
    Manifold,
    ManifoldPoint,
    SpecialOrthogonal,
    TangentVector,
    RETRACTIONS,
)
from .optimizers import OptimizerRule, OptimizerState, init_state, optimizer_step, reset

logger = logging.getLogger(__name__)

INF = math.inf
MAX_HALVINGS = 30
FD_STEP = 1e-5
FD_TOL = 1e-5
FD_POINTS = 10
FD_RADIUS = 0.5
TRIVIALIZATIONS = ("exp", "cayley")

StepCount = Union[int, float]
PointLike = Union[ManifoldPoint, np.ndarray, None]


# ---------------------------------------------------------------------
# problems
@dataclass(frozen=True)
class Problem:
    name: str
    manifold: Manifold
    objective: Callable[[np.ndarray], float]
    ambient_gradient: Callable[[np.ndarray], np.ndarray]
    start: np.ndarray
    known_optimum: Optional[float] = None
    hessian_bound: Optional[float] = None
    minimizer: Optional[np.ndarray] = None

    @property
    def manifold_kind(self) -> str:
        return self.manifold.name


def register_problem(problem: Problem, seed: RngSeed = 0) -> Problem:
    """
    Check the ambient gradient against central differences of the objective
    along geodesics through random points near ``problem.start``.
    """
    M = problem.manifold
    M.check_point(problem.start)
    rng = make_rng(seed)
    for _ in range(FD_POINTS):
        x = M.exp(problem.start, M.random_tangent(problem.start, rng, FD_RADIUS))
        direction = M.random_tangent(x, rng, 1.0)
        forward = problem.objective(M.exp(x, FD_STEP * direction))
        backward = problem.objective(M.exp(x, -FD_STEP * direction))
        numeric = (forward - backward) / (2 * FD_STEP)
        rgrad = M.egrad_to_rgrad(x, problem.ambient_gradient(x))
        analytic = M.inner(x, rgrad, direction)
        scale = max(1.0, M.norm(x, rgrad))
        if abs(numeric - analytic) > FD_TOL * scale:
            raise ConfigurationError(
                f"{problem.name}: ambient gradient disagrees with finite differences "
                f"({analytic:.12g} vs {numeric:.12g})"
            )
    logger.debug("registered problem %s on %s", problem.name, M.name)
    return problem


def _evaluate(problem: Problem, x: np.ndarray) -> float:
    value = float(problem.objective(x))
    if not math.isfinite(value):
        raise DomainError(f"objective of {problem.name} is not finite ({value})")
    return value


# ---------------------------------------------------------------------
# run state and records
@dataclass(frozen=True)
class TrivializationState:
    p0: np.ndarray
    p_i: np.ndarray
    v: np.ndarray
    opt: OptimizerState
    inner_step: int = 0
    outer_step: int = 0
    restarts: int = 0


class TraceRow(NamedTuple):
    iter_outer: int
    iter_inner: int
    f: float
    grad_norm: float
    step_dist: float
    restarts: int


@dataclass
class RunRecord:
    algorithm: str
    problem: str
    f_initial: float
    initial_point: np.ndarray
    rows: list[TraceRow] = field(default_factory=list)
    points: list[np.ndarray] = field(default_factory=list)
    momenta: list[np.ndarray] = field(default_factory=list)
    final_point: Optional[np.ndarray] = None
    restarts: int = 0
    dropped_gradients: int = 0
    aborted: Optional[str] = None

    def append(self, row: TraceRow, point: np.ndarray) -> None:
        self.rows.append(row)
        self.points.append(point)
        self.final_point = point
        self.restarts = row.restarts

    @property
    def iterations(self) -> int:
        return len(self.rows)

    @property
    def f_values(self) -> np.ndarray:
        return np.array([row.f for row in self.rows])

    @property
    def final_f(self) -> float:
        return self.rows[-1].f if self.rows else self.f_initial

    @property
    def best_f(self) -> float:
        return min([self.f_initial, *(row.f for row in self.rows)])

    @property
    def ok(self) -> bool:
        return self.aborted is None


def _start(problem: Problem, p0: PointLike) -> np.ndarray:
    if p0 is None:
        x = np.array(problem.start, dtype=np.float64)
    elif isinstance(p0, ManifoldPoint):
        if p0.manifold != problem.manifold:
            raise DomainError(f"start point lives on {p0.kind}, problem on {problem.manifold.name}")
        x = np.array(p0.coordinates)
    else:
        x = np.array(p0, dtype=np.float64)
    problem.manifold.check_point(x)
    return x


def _check_run_args(lr: float, iters: int, k: StepCount = 1) -> None:
    if not lr > 0:
        raise ConfigurationError(f"learning rate must be positive, got {lr}")
    if iters < 0:
        raise ConfigurationError(f"iteration count must be non-negative, got {iters}")
    if not (k == INF or (float(k).is_integer() and k >= 1)):
        raise ConfigurationError(f"K must be a positive integer or infinity, got {k}")


def _abort(record: RunRecord, step: int, exc: Exception) -> RunRecord:
    record.aborted = f"step {step}: {exc}"
    logger.error("%s on %s aborted at step %d: %s", record.algorithm, record.problem, step, exc)
    return record


# ---------------------------------------------------------------------
# gradient maps
Chart = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _chart(M: Manifold, trivialization: str) -> tuple[Chart, Callable[..., np.ndarray]]:
    """The map v ↦ φ_x(v) of a trivialization and the adjoint of its differential."""
    if trivialization == "exp":
        return M.exp, M.exp_differential_adjoint
    if trivialization == "cayley":
        if not isinstance(M, SpecialOrthogonal):
            raise UnsupportedError(f"Cayley trivialization is only defined on SO(n), not {M.name}")
        return partial(M.retract, method="cayley"), M.cayley_differential_adjoint
    raise ConfigurationError(f"unknown trivialization {trivialization!r}; expected one of {TRIVIALIZATIONS}")


def _pullback(problem: Problem, x: np.ndarray, v: np.ndarray, trivialization: str = "exp") -> np.ndarray:
    phi, phi_adjoint = _chart(problem.manifold, trivialization)
    return phi_adjoint(x, v, problem.ambient_gradient(phi(x, v)))


def _transport_steepest(
    M: Manifold,
    p0: np.ndarray,
    p_i: np.ndarray,
    v: np.ndarray,
    g_hat: np.ndarray,
    w: Optional[np.ndarray] = None,
) -> np.ndarray:
    if p_i is p0 or np.array_equal(p_i, p0):
        # exp_{p0}⁻¹ ∘ exp_{p0} is the identity
        return np.array(g_hat, dtype=np.float64)
    if w is None:
        w = M.log(p0, M.exp(p_i, v))
    covector = M.exp_differential_inverse_adjoint(p0, w, g_hat)
    return M.exp_differential_adjoint(p_i, v, covector)


def pullback_gradient(
    p0: ManifoldPoint, w: TangentVector, problem: Problem, trivialization: str = "exp"
) -> TangentVector:
    """
    ∇(f∘exp_{p0})(w), in T_{p0} coordinates.

    With ``trivialization="cayley"`` (SO(n) only) the chart is
    Ω ↦ p0·cay(Ω) instead of exp_{p0}.
    """
    if not (w.base is p0 or np.array_equal(w.base.coordinates, p0.coordinates)):
        raise DomainError("w must be based at p0")
    return TangentVector(p0, _pullback(problem, p0.coordinates, w.coordinates, trivialization))


def steepest_transport(
    p0: ManifoldPoint,
    p_i: ManifoldPoint,
    v: TangentVector,
    g_hat: TangentVector,
    w: Optional[TangentVector] = None,
) -> TangentVector:
    """
    Apply the adjoint of d(exp_{p0}⁻¹ ∘ exp_{p_i}) at v to a direction at p0.

    Raises BranchError when exp_{p_i}(v) leaves the domain where exp_{p0} can
    be inverted.
    """
    if p0.manifold != p_i.manifold:
        raise DomainError("p0 and p_i live on different manifolds")
    M = p0.manifold
    w_coords = None if w is None else w.coordinates
    return TangentVector(
        p_i, _transport_steepest(M, p0.coordinates, p_i.coordinates, v.coordinates, g_hat.coordinates, w_coords)
    )


# ---------------------------------------------------------------------
# ATRIV-K
def _atriv_step(
    problem: Problem, state: TrivializationState, k: StepCount, lr: float
) -> tuple[TrivializationState, TraceRow, np.ndarray]:
    M = problem.manifold
    p0, p_i, v = state.p0, state.p_i, state.v
    static = p_i is p0 or np.array_equal(p_i, p0)

    x = M.exp(p_i, v)
    w = v if static else M.log(p0, x)
    G = problem.ambient_gradient(x)
    g = M.exp_differential_adjoint(p0, w, G)
    grad_norm = M.norm(p0, g) if static else M.norm(p_i, M.exp_differential_adjoint(p_i, v, G))

    opt, flat_hat = optimizer_step(state.opt, M.flatten(p0, g))
    g_hat = M.unflatten(p0, flat_hat)
    g_tilde = _transport_steepest(M, p0, p_i, v, g_hat, w)
    v = v - lr * g_tilde
    step_dist = lr * M.norm(p_i, g_tilde)

    inner, outer = state.inner_step + 1, state.outer_step
    if inner == k:
        p_i = M.repair(M.exp(p_i, v))
        v = M.zero_tangent(p_i)
        inner, outer = 0, outer + 1
    x_new = M.exp(p_i, v)

    row = TraceRow(state.outer_step, state.inner_step, _evaluate(problem, x_new), grad_norm, step_dist, state.restarts)
    new_state = replace(state, p_i=p_i, v=v, opt=opt, inner_step=inner, outer_step=outer)
    return new_state, row, x_new


def _restart(problem: Problem, state: TrivializationState) -> TrivializationState:
    M = problem.manifold
    x = M.repair(M.exp(state.p_i, state.v))
    return TrivializationState(
        p0=x,
        p_i=x,
        v=M.zero_tangent(x),
        opt=reset(state.opt),
        inner_step=0,
        outer_step=state.outer_step + 1,
        restarts=state.restarts + 1,
    )


def atriv_run(
    problem: Problem,
    rule: OptimizerRule,
    k: StepCount,
    lr: float,
    iters: int,
    p0: PointLike = None,
) -> RunRecord:
    _check_run_args(lr, iters, k)
    M = problem.manifold
    base = _start(problem, p0)
    shape = M.flatten(base, M.zero_tangent(base)).shape
    state = TrivializationState(p0=base, p_i=base, v=M.zero_tangent(base), opt=init_state(rule, shape))
    record = RunRecord(f"atriv-{_k_label(k)}", problem.name, _evaluate(problem, base), base)

    for step in range(iters):
        try:
            try:
                state, row, x = _atriv_step(problem, state, k, lr)
            except BranchError as exc:
                logger.warning("atriv restart at step %d (outer %d): %s", step, state.outer_step, exc)
                state = _restart(problem, state)
                state, row, x = _atriv_step(problem, state, k, lr)
        except AdatrivError as exc:
            return _abort(record, step, exc)
        record.append(row, x)
    return record


# ---------------------------------------------------------------------
# DTRIV-K and the static trivialization
def dtriv_run(
    problem: Problem,
    rule: OptimizerRule,
    k: StepCount,
    lr: float,
    iters: int,
    p0: PointLike = None,
    trivialization: str = "exp",
) -> RunRecord:
    """
    Dynamic trivialization without correction: every K steps the base moves to
    the current iterate and the optimizer's arrays are reused as they are.

    ``trivialization="cayley"`` optimizes f(p_i·cay(v)) instead of
    f(exp_{p_i}(v)); it needs an SO(n) problem.
    """
    _check_run_args(lr, iters, k)
    M = problem.manifold
    phi, phi_adjoint = _chart(M, trivialization)
    p_i = _start(problem, p0)
    v = M.zero_tangent(p_i)
    opt = init_state(rule, M.flatten(p_i, v).shape)
    suffix = "" if trivialization == "exp" else f"-{trivialization}"
    record = RunRecord(f"dtriv-{_k_label(k)}{suffix}", problem.name, _evaluate(problem, p_i), p_i)
    inner = outer = 0

    for step in range(iters):
        try:
            g = phi_adjoint(p_i, v, problem.ambient_gradient(phi(p_i, v)))
            opt, flat_hat = optimizer_step(opt, M.flatten(p_i, g))
            g_hat = M.unflatten(p_i, flat_hat)
            v = v - lr * g_hat
            row_outer, row_inner = outer, inner
            step_dist = lr * M.norm(p_i, g_hat)
            grad_norm = M.norm(p_i, g)
            inner += 1
            if inner == k:
                p_i = M.repair(phi(p_i, v))
                v = M.zero_tangent(p_i)
                inner, outer = 0, outer + 1
            x = phi(p_i, v)
            row = TraceRow(row_outer, row_inner, _evaluate(problem, x), grad_norm, step_dist, 0)
        except AdatrivError as exc:
            return _abort(record, step, exc)
        record.append(row, x)
    return record


def static_run(
    problem: Problem,
    rule: OptimizerRule,
    lr: float,
    iters: int,
    p0: PointLike = None,
    trivialization: str = "exp",
) -> RunRecord:
    """Optimize f∘exp_{p0} (or f(p0·cay(·)) on SO(n)) on the fixed space T_{p0}M."""
    record = dtriv_run(problem, rule, INF, lr, iters, p0, trivialization)
    record.algorithm = "static" if trivialization == "exp" else f"static-{trivialization}"
    return record


# ---------------------------------------------------------------------
# RGD and the momentum baselines
def _retract_with_halving(M: Manifold, x: np.ndarray, g: np.ndarray, lr: float, retraction: str) -> tuple[np.ndarray, float]:
    step = lr
    for attempt in range(MAX_HALVINGS + 1):
        try:
            return M.retract(x, -step * g, retraction), step
        except SingularityError:
            logger.debug("%s retraction singular at step size %g, halving (attempt %d)", retraction, step, attempt)
            step /= 2
    raise SingularityError(f"{retraction} retraction still singular after {MAX_HALVINGS} halvings")


def rgd_run(
    problem: Problem,
    lr: float,
    iters: int,
    p0: PointLike = None,
    retraction: str = "exp",
) -> RunRecord:
    _check_run_args(lr, iters)
    if retraction not in RETRACTIONS:
        raise ConfigurationError(f"unknown retraction {retraction!r}; expected one of {RETRACTIONS}")
    M = problem.manifold
    x = _start(problem, p0)
    record = RunRecord(f"rgd-{retraction}", problem.name, _evaluate(problem, x), x)

    for step in range(iters):
        try:
            g = M.egrad_to_rgrad(x, problem.ambient_gradient(x))
            x_next, used = _retract_with_halving(M, x, g, lr, retraction)
            x_next = M.repair(x_next)
            row = TraceRow(step, 0, _evaluate(problem, x_next), M.norm(x, g), used * M.norm(x, g), 0)
        except AdatrivError as exc:
            return _abort(record, step, exc)
        x = x_next
        record.append(row, x)
    return record


def rgd_momentum_transport_run(
    problem: Problem, lr: float, mu: float, iters: int, p0: PointLike = None
) -> RunRecord:
    """m ← rgrad + μ·τ(m), with τ parallel transport along the previous step."""
    _check_run_args(lr, iters)
    M = problem.manifold
    x = _start(problem, p0)
    carried = M.zero_tangent(x)
    record = RunRecord("rgd-momentum", problem.name, _evaluate(problem, x), x)
    restarts = 0

    for step in range(iters):
        try:
            g = M.egrad_to_rgrad(x, problem.ambient_gradient(x))
            m = g + mu * carried
            direction = -lr * m
            x_next = M.repair(M.exp(x, direction))
            try:
                carried = M.transport(x, direction, m)
            except BranchError as exc:
                logger.warning("momentum reset at step %d: %s", step, exc)
                carried = M.zero_tangent(x_next)
                restarts += 1
            row = TraceRow(step, 0, _evaluate(problem, x_next), M.norm(x, g), lr * M.norm(x, m), restarts)
        except AdatrivError as exc:
            return _abort(record, step, exc)
        record.momenta.append(m)
        x = x_next
        record.append(row, x)
    return record


def rgd_momentum_full_history_run(
    problem: Problem, lr: float, mu: float, iters: int, p0: PointLike = None
) -> RunRecord:
    """
    m_k = Σ_t μ^{k−t}·τ_t(g_t), each past gradient transported along the
    minimizing geodesic from where it was taken to the current iterate.

    Memory and time grow linearly with the step count.
    """
    _check_run_args(lr, iters)
    M = problem.manifold
    x = _start(problem, p0)
    record = RunRecord("rgd-full-history", problem.name, _evaluate(problem, x), x)
    # (step taken, point, Riemannian gradient there); dropped entries leave for good
    history: list[tuple[int, np.ndarray, np.ndarray]] = []

    for step in range(iters):
        try:
            g = M.egrad_to_rgrad(x, problem.ambient_gradient(x))
            m = M.zero_tangent(x)
            kept = []
            for t, x_t, g_t in history:
                try:
                    moved = M.transport(x_t, M.log(x_t, x), g_t)
                except BranchError as exc:
                    record.dropped_gradients += 1
                    logger.warning("dropping gradient from step %d at step %d: %s", t, step, exc)
                    continue
                m = m + mu ** (step - t) * moved
                kept.append((t, x_t, g_t))
            m = m + g
            history = kept + [(step, x, g)]
            x_next = M.repair(M.exp(x, -lr * m))
            row = TraceRow(step, 0, _evaluate(problem, x_next), M.norm(x, g), lr * M.norm(x, m), 0)
        except AdatrivError as exc:
            return _abort(record, step, exc)
        record.momenta.append(m)
        x = x_next
        record.append(row, x)
    return record


# ---------------------------------------------------------------------
# step-size rule on SO(n)
def _alpha_hat(problem: Problem, r: float) -> float:
    if not isinstance(problem.manifold, SpecialOrthogonal):
        raise UnsupportedError(f"no step-size constant for {problem.manifold.name}; only SO(n) has one")
    if problem.hessian_bound is None:
        raise ConfigurationError(f"{problem.name} has no Hessian bound α")
    if r < 0:
        raise ConfigurationError(f"radius must be non-negative, got {r}")
    return (1.0 + r / 3.0) * problem.hessian_bound


def theorem_step_size(problem: Problem, r: float) -> float:
    """η = 1/α̂_r with α̂_r = (1 + r/3)·α on SO(n)."""
    return 1.0 / _alpha_hat(problem, r)


def iteration_bound(problem: Problem, r: float, eps: float, f0: float) -> int:
    """⌈2α̂_r(f(p₀) − f*)/ε²⌉ iterations to reach a gradient below ε."""
    if problem.known_optimum is None:
        raise ConfigurationError(f"{problem.name} has no known optimum")
    gap = max(0.0, f0 - problem.known_optimum)
    return math.ceil(2.0 * _alpha_hat(problem, r) * gap / eps**2)


def _k_label(k: StepCount) -> str:
    return "inf" if k == INF else str(int(k))
