"""
problems.py
~~~~~~~~~~~

Desk-scale objectives with certified optima:

    procrustes           ½‖AX − B‖²_F on SO(n); optimum via the polar factor of AᵀB
    rayleigh-sphere      −½xᵀMx on S^{n-1}; optimum −λ_max/2 via power iteration
    geodesic-distance    ½·dist(X, Q*)² on SO(n); optimum 0 at Q*
    quadratic-euclidean  ½xᵀHx − bᵀx on Rⁿ; optimum from a linear solve

``build_problem`` draws the data from a seed and validates the gradient with
``register_problem`` before handing the problem out.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.linalg

from .engine import Problem, register_problem
from .errors import ConfigurationError
from .linalg import (
    RngSeed,
    check_square,
    frobenius_inner,
    make_rng,
    polar_orthogonal,
    power_iteration,
    random_orthogonal,
    random_skew,
)
from .manifolds import Euclidean, Manifold, SpecialOrthogonal, Sphere
from .matfuncs import expm_matrix

logger = logging.getLogger(__name__)

# manifold kind of each named problem, as accepted by build_manifold
PROBLEM_MANIFOLDS = {
    "procrustes": "so",
    "rayleigh-sphere": "sphere",
    "geodesic-distance": "so",
    "quadratic-euclidean": "euclidean",
}
PROBLEMS = tuple(PROBLEM_MANIFOLDS)

# SO(n) optima are drawn within this spectral distance of the identity
OPTIMUM_RADIUS = 2.0


def canonical_start(manifold: Manifold) -> np.ndarray:
    if isinstance(manifold, SpecialOrthogonal):
        return np.eye(manifold.n)
    if isinstance(manifold, Sphere):
        e1 = np.zeros(manifold.n)
        e1[0] = 1.0
        return e1
    return np.zeros(manifold.shape)


def procrustes_problem(A: np.ndarray, B: np.ndarray, name: str = "procrustes") -> Problem:
    check_square(A, "A")
    check_square(B, "B")
    n = A.shape[0]
    manifold = SpecialOrthogonal(n)

    def objective(X: np.ndarray) -> float:
        R = A @ X - B
        return 0.5 * frobenius_inner(R, R)

    def gradient(X: np.ndarray) -> np.ndarray:
        return A.T @ (A @ X - B)

    U = polar_orthogonal(A.T @ B)
    known, minimizer = None, None
    if np.linalg.det(U) > 0:
        # the orthogonal maximizer of trace(XᵀAᵀB) lies in SO(n)
        known, minimizer = objective(U), U
    else:
        logger.warning("procrustes polar factor has det < 0; optimum over SO(n) is not certified")

    sigma = float(np.linalg.norm(A, 2))
    # geodesic second derivative ≤ ‖AXΩ‖² + ‖(AX)ᵀ(AX − B)‖₂·‖Ω²‖_*
    alpha = 2.0 * sigma**2 + sigma * float(np.linalg.norm(B, 2))
    return Problem(name, manifold, objective, gradient, canonical_start(manifold), known, alpha, minimizer)


def rayleigh_problem(M: np.ndarray, seed: RngSeed = 0, name: str = "rayleigh-sphere") -> Problem:
    check_square(M, "M")
    M = (M + M.T) / 2
    manifold = Sphere(M.shape[0])

    def objective(x: np.ndarray) -> float:
        return -0.5 * float(x @ M @ x)

    def gradient(x: np.ndarray) -> np.ndarray:
        return -(M @ x)

    # Gershgorin: M + shift·I is positive semidefinite
    shift = float(np.max(np.sum(np.abs(M), axis=1)))
    lam, vec = power_iteration(M, seed, shift=shift)
    return Problem(
        name,
        manifold,
        objective,
        gradient,
        canonical_start(manifold),
        known_optimum=-lam / 2,
        hessian_bound=float(np.linalg.norm(M, 2)) * 2,
        minimizer=vec,
    )


def geodesic_distance_problem(Q: np.ndarray, name: str = "geodesic-distance") -> Problem:
    manifold = SpecialOrthogonal(Q.shape[0])
    manifold.check_point(Q)

    def objective(X: np.ndarray) -> float:
        L = manifold.log(X, Q)
        return 0.5 * frobenius_inner(L, L)

    def gradient(X: np.ndarray) -> np.ndarray:
        # Riemannian gradient is −log_X(Q), lifted to the ambient space
        return -(X @ manifold.log(X, Q))

    # sectional curvature ≥ 0 on SO(n), so Hess ½d² ≤ 1 inside the injectivity radius
    return Problem(
        name, manifold, objective, gradient, canonical_start(manifold),
        known_optimum=0.0, hessian_bound=1.0, minimizer=Q,
    )


def quadratic_problem(H: np.ndarray, b: np.ndarray, name: str = "quadratic-euclidean") -> Problem:
    check_square(H, "H")
    H = (H + H.T) / 2
    manifold = Euclidean(H.shape[0])
    minimizer = scipy.linalg.solve(H, b, assume_a="pos")

    def objective(x: np.ndarray) -> float:
        return 0.5 * float(x @ H @ x) - float(b @ x)

    def gradient(x: np.ndarray) -> np.ndarray:
        return H @ x - b

    lam_max = float(np.linalg.eigvalsh(H)[-1])
    return Problem(
        name, manifold, objective, gradient, canonical_start(manifold),
        objective(minimizer), lam_max, minimizer,
    )


def linear_problem(manifold: Manifold, C: np.ndarray, name: str = "linear") -> Problem:
    """f(x) = ⟨C, x⟩; unbounded optimum bookkeeping is left empty."""
    C = np.asarray(C, dtype=np.float64)

    def objective(x: np.ndarray) -> float:
        return frobenius_inner(C, x)

    def gradient(x: np.ndarray) -> np.ndarray:
        return C

    return Problem(name, manifold, objective, gradient, canonical_start(manifold))


def quadratic_form_problem(manifold: Manifold, S: np.ndarray, C: np.ndarray, name: str = "quadratic") -> Problem:
    """f(x) = ½⟨x, S x⟩ + ⟨C, x⟩ with S symmetric acting on flattened coordinates."""
    C = np.asarray(C, dtype=np.float64)
    S = (S + S.T) / 2
    shape = manifold.shape

    def objective(x: np.ndarray) -> float:
        flat = x.ravel()
        return 0.5 * float(flat @ S @ flat) + frobenius_inner(C, x)

    def gradient(x: np.ndarray) -> np.ndarray:
        return (S @ x.ravel()).reshape(shape) + C

    return Problem(name, manifold, objective, gradient, canonical_start(manifold))


def _random_psd(n: int, rng: np.random.Generator, low: float, high: float) -> np.ndarray:
    Q = random_orthogonal(n, rng)
    return Q @ np.diag(rng.uniform(low, high, n)) @ Q.T


def build_problem(name: str, n: int, seed: RngSeed) -> Problem:
    if name not in PROBLEMS:
        raise ConfigurationError(f"unknown problem {name!r}; expected one of {', '.join(PROBLEMS)}")
    if n < 2:
        raise ConfigurationError(f"problem size must be at least 2, got {n}")
    rng = make_rng(seed)

    if name == "procrustes":
        U, V = random_orthogonal(n, rng), random_orthogonal(n, rng)
        A = U @ np.diag(rng.uniform(1.0, 2.0, n)) @ V.T
        Q_star = expm_matrix(random_skew(n, rng, spectral_norm=OPTIMUM_RADIUS))
        problem = procrustes_problem(A, A @ Q_star)
    elif name == "rayleigh-sphere":
        Q = random_orthogonal(n, rng)
        lam = rng.uniform(-1.0, 1.0, n)
        top = int(np.argmax(lam))
        lam[top] = lam[top] + 0.5
        problem = rayleigh_problem(Q @ np.diag(lam) @ Q.T, seed)
    elif name == "geodesic-distance":
        problem = geodesic_distance_problem(expm_matrix(random_skew(n, rng, spectral_norm=OPTIMUM_RADIUS)))
    else:
        H = _random_psd(n, rng, 1.0, 4.0)
        problem = quadratic_problem(H, rng.standard_normal(n))

    return register_problem(problem, seed)
