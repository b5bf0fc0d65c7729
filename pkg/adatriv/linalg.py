"""
linalg.py
~~~~~~~~~

Dense real matrix helpers: inner products, projections, orthogonalization,
plus the two small oracles (polar factor, power iteration) the harness uses
to certify optima.

Matrices are plain ``numpy`` float64 arrays; the aliases below only document
intent.
"""

from __future__ import annotations

import logging
from typing import Tuple

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from .errors import ConvergenceError, DimensionError, DomainError, SingularityError

logger = logging.getLogger(__name__)

DenseMatrix = NDArray[np.float64]
SkewMatrix = NDArray[np.float64]
RngSeed = int

SKEW_TOL = 1e-14
RANK_TOL = 1e-10
POLAR_TOL = 1e-14
POLAR_MAX_ITERS = 100
POWER_TOL = 1e-10
POWER_MAX_ITERS = 100_000


# ---------------------------------------------------------------------
# validation
def check_square(M: np.ndarray, name: str = "matrix") -> None:
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")


def check_same_shape(A: np.ndarray, B: np.ndarray) -> None:
    if A.shape != B.shape:
        raise DimensionError(f"shape mismatch: {A.shape} vs {B.shape}")


def check_finite(M: np.ndarray, name: str = "matrix") -> None:
    if not np.all(np.isfinite(M)):
        raise DomainError(f"{name} has non-finite entries")


def is_skew(M: np.ndarray, tol: float = SKEW_TOL) -> bool:
    """True if M + Mᵀ vanishes to ``tol·max(1, ‖M‖_F)``."""
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return False
    scale = max(1.0, float(np.linalg.norm(M)))
    return float(np.max(np.abs(M + M.T), initial=0.0)) <= tol * scale


# ---------------------------------------------------------------------
# randomness
def make_rng(seed: RngSeed) -> np.random.Generator:
    """Identical seeds give identical streams."""
    return np.random.default_rng(int(seed))


def spawn_rngs(seed: RngSeed, count: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [np.random.default_rng(c) for c in children]


def random_orthogonal(n: int, rng: np.random.Generator) -> DenseMatrix:
    """Haar-distributed special orthogonal matrix."""
    Q = orthonormalize(rng.standard_normal((n, n)))
    return Q


def random_skew(
    n: int, rng: np.random.Generator, spectral_norm: float | None = None
) -> SkewMatrix:
    S = skew_project(rng.standard_normal((n, n)))
    if spectral_norm is not None:
        current = float(np.linalg.norm(S, 2))
        if current > 0:
            S = S * (spectral_norm / current)
    return S


def random_symmetric(n: int, rng: np.random.Generator) -> DenseMatrix:
    M = rng.standard_normal((n, n))
    return (M + M.T) / 2


# ---------------------------------------------------------------------
# elementary operations
def frobenius_inner(A: np.ndarray, B: np.ndarray) -> float:
    """trace(AᵀB); works for vectors too."""
    check_same_shape(A, B)
    return float(np.vdot(A, B))


def skew_project(M: np.ndarray) -> SkewMatrix:
    check_square(M)
    return (M - M.T) / 2


def one_norm(M: np.ndarray) -> float:
    """Maximum absolute column sum."""
    if M.size == 0:
        return 0.0
    if M.ndim == 1:
        return float(np.sum(np.abs(M)))
    return float(np.max(np.sum(np.abs(M), axis=0)))


def orthonormalize(M: np.ndarray) -> DenseMatrix:
    """
    Orthogonal factor of the QR factorization with positive-diagonal R.

    When det(M) < 0 the last column is flipped so the result is always
    special orthogonal.
    """
    check_square(M)
    check_finite(M)
    svals = np.linalg.svd(M, compute_uv=False)
    if svals.size and svals[-1] <= RANK_TOL * svals[0]:
        raise SingularityError(
            f"rank deficient matrix (sigma_min/sigma_max = {svals[-1] / svals[0]:.3e})"
        )
    Q, R = scipy.linalg.qr(M)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    Q = Q * signs
    if np.linalg.det(Q) < 0:
        Q[:, -1] = -Q[:, -1]
    return Q


def orthogonality_drift(Q: np.ndarray) -> float:
    """‖QᵀQ − I‖_F."""
    return float(np.linalg.norm(Q.T @ Q - np.eye(Q.shape[0])))


# ---------------------------------------------------------------------
# oracles
def polar_orthogonal(M: np.ndarray) -> DenseMatrix:
    """
    Orthogonal polar factor U of M = U·P via the Newton iteration
    U ← ½(U + U^{-T}), started at U₀ = M.
    """
    check_square(M)
    check_finite(M)
    svals = np.linalg.svd(M, compute_uv=False)
    if svals[-1] <= RANK_TOL * max(svals[0], 1e-300):
        raise SingularityError("polar decomposition needs a nonsingular matrix")

    U = np.array(M, dtype=np.float64)
    last = np.inf
    for it in range(POLAR_MAX_ITERS):
        U_next = 0.5 * (U + np.linalg.inv(U).T)
        delta = float(np.linalg.norm(U_next - U))
        U = U_next
        if delta <= POLAR_TOL * max(1.0, float(np.linalg.norm(U))):
            return U
        # Quadratic convergence has bottomed out at roundoff level
        if it > 5 and delta >= last and delta <= 1e-12:
            return U
        last = delta
    raise ConvergenceError(f"polar Newton iteration did not converge (last step {last:.3e})")


def power_iteration(
    M: np.ndarray, seed: RngSeed, shift: float = 0.0
) -> Tuple[float, np.ndarray]:
    """
    Dominant eigenpair of a symmetric matrix.

    ``shift`` iterates with M + shift·I (so that, with a Gershgorin shift, the
    algebraically largest eigenvalue becomes dominant) and reports the
    eigenvalue of M itself.
    """
    check_square(M)
    check_finite(M)
    if not np.allclose(M, M.T, atol=1e-12 * max(1.0, float(np.abs(M).max()))):
        raise DomainError("power iteration expects a symmetric matrix")

    n = M.shape[0]
    shifted = M + shift * np.eye(n)
    v = make_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    for _ in range(POWER_MAX_ITERS):
        lam = float(v @ M @ v)
        residual = float(np.linalg.norm(M @ v - lam * v))
        if residual <= POWER_TOL:
            return lam, v
        w = shifted @ v
        norm = np.linalg.norm(w)
        if norm == 0:
            # v lies in the kernel: eigenvalue 0
            return 0.0, v
        v = w / norm
    raise ConvergenceError("power iteration did not reach the residual tolerance")
