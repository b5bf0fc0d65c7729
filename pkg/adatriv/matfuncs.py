"""
matfuncs.py
~~~~~~~~~~~

Matrix functions behind the exponential trivialization:

    expm(A)                -> ExpmReport   scaling-and-squaring, degree-12 Taylor,
                                           at most 5 products before squaring
    logm_principal(Q)      -> LogmReport   inverse scaling-and-squaring
                                           (Denman–Beavers roots + Gregory series)
    dexp(Ω, E)             -> d/dt e^{Ω+tE} at t = 0 (doubled block matrix)
    dexp_adjoint(Ω, F)     -> adjoint of dexp(Ω, ·) under ⟨A, B⟩ = trace(AᵀB)
    dexp_inverse(Ω, E)     -> G with dexp(Ω, G) = E (Bernoulli series, dense
                              solve near the boundary)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.special

from .errors import BranchError, ConvergenceError
from .linalg import (
    DenseMatrix,
    check_finite,
    check_same_shape,
    check_square,
    one_norm,
    orthogonality_drift,
    skew_project,
)

# Scaled argument norm bound for the degree-12 Taylor polynomial.
THETA = 0.25
TAYLOR_DEGREE = 12
MAX_POLYNOMIAL_PRODUCTS = 5

# Angular distance to the negative real axis below which log is refused.
BRANCH_MARGIN = 1e-6

SQRT_TARGET = 0.25
MAX_SQUARE_ROOTS = 64
DB_MAX_SWEEPS = 40
DB_TOL = 1e-14
DB_CHECK = 1e-11
GREGORY_MAX_TERMS = 200

SERIES_TOL = 1e-16
SERIES_MAX_TERMS = 600
DENSE_CUTOFF = 0.9 * math.pi

_TAYLOR = [1.0 / math.factorial(k) for k in range(TAYLOR_DEGREE + 1)]


@dataclass(frozen=True)
class ExpmReport:
    result: DenseMatrix
    polynomial_products: int
    squarings: int

    def __post_init__(self):
        assert self.polynomial_products <= MAX_POLYNOMIAL_PRODUCTS, "expm product budget exceeded"


@dataclass(frozen=True)
class LogmReport:
    result: DenseMatrix
    square_roots_taken: int


# ---------------------------------------------------------------------
# exponential
def _taylor12(X: np.ndarray) -> tuple[np.ndarray, int]:
    """Paterson–Stockmeyer evaluation of Σ_{k≤12} X^k/k!: returns (P, products)."""
    c = _TAYLOR
    ident = np.eye(X.shape[0])
    X2 = X @ X
    X3 = X2 @ X
    X4 = X2 @ X2
    B0 = c[0] * ident + c[1] * X + c[2] * X2 + c[3] * X3
    B1 = c[4] * ident + c[5] * X + c[6] * X2 + c[7] * X3
    B2 = c[8] * ident + c[9] * X + c[10] * X2 + c[11] * X3 + c[12] * X4
    return B0 + X4 @ (B1 + X4 @ B2), 5


def expm(A: np.ndarray) -> ExpmReport:
    check_square(A)
    check_finite(A)
    n = A.shape[0]
    norm = one_norm(A)
    if norm == 0.0:
        return ExpmReport(np.eye(n), 0, 0)

    s = max(0, math.ceil(math.log2(norm / THETA)))
    # ldexp scales by an exact power of two
    P, products = _taylor12(np.ldexp(A, -s))
    for _ in range(s):
        P = P @ P
    return ExpmReport(P, products, s)


def expm_matrix(A: np.ndarray) -> DenseMatrix:
    return expm(A).result


# ---------------------------------------------------------------------
# logarithm
def _check_principal_branch(Q: np.ndarray) -> None:
    eigs = np.linalg.eigvals(Q)
    if np.any(np.abs(eigs) < 1e-300):
        raise BranchError("matrix is singular: logarithm undefined")
    worst = float(np.max(np.abs(np.angle(eigs))))
    if worst >= math.pi - BRANCH_MARGIN:
        raise BranchError(
            f"eigenvalue on (or within {BRANCH_MARGIN:g} of) the negative real axis: "
            f"angle {worst:.9f}"
        )


def _sqrtm_denman_beavers(A: np.ndarray) -> np.ndarray:
    """Principal square root by the determinant-scaled Denman–Beavers iteration."""
    n = A.shape[0]
    Y = np.array(A, dtype=np.float64)
    Z = np.eye(n)
    last = np.inf
    for sweep in range(DB_MAX_SWEEPS):
        _, logdet_y = np.linalg.slogdet(Y)
        _, logdet_z = np.linalg.slogdet(Z)
        mu = math.exp(-(logdet_y + logdet_z) / (2 * n))
        Y_inv = np.linalg.inv(Y)
        Z_inv = np.linalg.inv(Z)
        Y_next = 0.5 * (mu * Y + Z_inv / mu)
        Z_next = 0.5 * (mu * Z + Y_inv / mu)
        delta = float(np.linalg.norm(Y_next - Y)) / max(float(np.linalg.norm(Y_next)), 1e-300)
        Y, Z = Y_next, Z_next
        if delta <= DB_TOL:
            break
        if sweep > 3 and delta >= last and delta < 1e-10:
            # stagnated at roundoff level
            break
        last = delta
    else:
        raise ConvergenceError(f"Denman–Beavers did not converge in {DB_MAX_SWEEPS} sweeps")

    residual = float(np.linalg.norm(Y @ Y - A))
    if residual > DB_CHECK * max(1.0, float(np.linalg.norm(A))):
        raise ConvergenceError(f"square root check failed (residual {residual:.3e})")
    return Y


def _log_near_identity(X: np.ndarray) -> np.ndarray:
    """log X = 2·artanh(Z), Z = (X − I)(X + I)⁻¹, for X close to I."""
    ident = np.eye(X.shape[0])
    Z = scipy.linalg.solve(X + ident, X - ident)
    Z2 = Z @ Z
    term = Z
    total = Z.copy()
    for j in range(1, GREGORY_MAX_TERMS):
        term = term @ Z2
        contrib = term / (2 * j + 1)
        total += contrib
        if float(np.linalg.norm(contrib)) <= 1e-17 * max(float(np.linalg.norm(total)), 1e-300):
            break
    return 2.0 * total


def logm_principal(Q: np.ndarray) -> LogmReport:
    check_square(Q)
    check_finite(Q)
    n = Q.shape[0]
    orthogonal = orthogonality_drift(Q) <= 1e-10
    _check_principal_branch(Q)

    ident = np.eye(n)
    X = np.array(Q, dtype=np.float64)
    k = 0
    while one_norm(X - ident) >= SQRT_TARGET:
        if k >= MAX_SQUARE_ROOTS:
            raise ConvergenceError("too many square roots in inverse scaling-and-squaring")
        X = _sqrtm_denman_beavers(X)
        k += 1

    L = np.ldexp(_log_near_identity(X), k)
    if orthogonal:
        L = skew_project(L)
    return LogmReport(L, k)


def logm_matrix(Q: np.ndarray) -> DenseMatrix:
    return logm_principal(Q).result


# ---------------------------------------------------------------------
# differential of exp
def dexp(Omega: np.ndarray, E: np.ndarray) -> DenseMatrix:
    """Fréchet derivative of expm at Omega in direction E.

    Top-right block of exp([[Ω, E], [0, Ω]]). E is rescaled by a power of two
    first, so dexp(0, E) == E exactly.
    """
    check_square(Omega)
    check_same_shape(Omega, E)
    check_finite(E)
    n = Omega.shape[0]
    size = one_norm(E)
    if size == 0.0:
        return np.zeros_like(Omega, dtype=np.float64)
    _, exponent = math.frexp(size)

    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = Omega
    block[n:, n:] = Omega
    block[:n, n:] = np.ldexp(E, -exponent)
    big = expm(block).result
    return np.ldexp(big[:n, n:], exponent)


def dexp_adjoint(Omega: np.ndarray, F: np.ndarray) -> DenseMatrix:
    # ∫ e^{sΩ} E e^{(1-s)Ω} ds is self-similar under transposition
    check_square(Omega)
    check_same_shape(Omega, F)
    return dexp(Omega.T, F)


@lru_cache(maxsize=1)
def _scaled_bernoulli() -> np.ndarray:
    """c_k·(2π)^k where Σ c_k z^k = z/(eᶻ − 1)."""
    coeffs = np.zeros(SERIES_MAX_TERMS + 1)
    coeffs[0] = 1.0
    coeffs[1] = -math.pi
    for k in range(2, SERIES_MAX_TERMS + 1, 2):
        sign = 1.0 if (k // 2) % 2 == 1 else -1.0
        coeffs[k] = sign * 2.0 * float(scipy.special.zeta(k))
    return coeffs


def _dexp_operator(Omega: np.ndarray) -> np.ndarray:
    """n²×n² matrix of E ↦ dexp(Ω, E) on row-major vectorizations."""
    n = Omega.shape[0]
    op = np.empty((n * n, n * n))
    unit = np.zeros((n, n))
    for idx in range(n * n):
        i, j = divmod(idx, n)
        unit[i, j] = 1.0
        op[:, idx] = dexp(Omega, unit).ravel()
        unit[i, j] = 0.0
    return op


def dexp_inverse(Omega: np.ndarray, E: np.ndarray) -> DenseMatrix:
    """
    Solve dexp(Ω, G) = E for G.

    dexp(Ω, ·) = e^Ω ∘ φ(−ad_Ω) with φ(z) = (eᶻ − 1)/z, so
    G = Σ_k (B_k/k!)·(−ad_Ω)^k (e^{−Ω}E). Needs ‖Ω‖₂ < π so the ad-spectrum
    stays inside the radius of convergence (2π).
    """
    check_square(Omega)
    check_same_shape(Omega, E)
    check_finite(Omega)
    check_finite(E)
    radius = float(np.linalg.norm(Omega, 2))
    if radius >= math.pi - BRANCH_MARGIN:
        raise BranchError(f"‖Ω‖₂ = {radius:.9f} outside the invertibility domain of dexp")
    e_norm = float(np.linalg.norm(E))
    if e_norm == 0.0:
        return np.zeros_like(Omega, dtype=np.float64)
    if radius > DENSE_CUTOFF:
        return _dexp_inverse_dense(Omega, E)

    coeffs = _scaled_bernoulli()
    Y = scipy.linalg.solve(expm(Omega).result, E)
    scaled = Omega / (2 * math.pi)
    term = Y
    total = Y.copy()
    target = SERIES_TOL * e_norm
    for k in range(1, SERIES_MAX_TERMS + 1):
        term = term @ scaled - scaled @ term
        if coeffs[k] == 0.0:
            continue
        contrib = coeffs[k] * term
        total += contrib
        if k % 2 == 0 and float(np.linalg.norm(contrib)) <= target:
            return total
    return _dexp_inverse_dense(Omega, E)


def _dexp_inverse_dense(Omega: np.ndarray, E: np.ndarray) -> DenseMatrix:
    op = _dexp_operator(Omega)
    return scipy.linalg.solve(op, E.ravel()).reshape(E.shape)
