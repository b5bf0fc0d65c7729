"""
manifolds.py
~~~~~~~~~~~~

Riemannian manifolds the engine can optimize on:

    SpecialOrthogonal(n)   SO(n), left-trivialized: a tangent vector at B is a
                           skew Ω with ambient direction B·Ω; bi-invariant
                           metric ⟨Ω₁, Ω₂⟩ = trace(Ω₁ᵀΩ₂)
    Sphere(n)              the unit sphere S^{n-1} ⊂ Rⁿ
    Euclidean(n)           Rⁿ, where every operation is affine

``Manifold`` subclasses work on bare numpy arrays; ``ManifoldPoint`` and
``TangentVector`` wrap arrays with validation and back the point-level helpers
at the bottom of the module (exp_point, log_point, parallel_transport, ...).

Gradients arrive as *ambient* arrays (the Euclidean gradient of an extension
of f). ``exp_differential_adjoint`` pulls such a gradient back through
d(exp_x)_v; ``exp_differential_inverse_adjoint`` inverts that pullback.
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import BranchError, DimensionError, DomainError, SingularityError, UnsupportedError
from .linalg import (
    check_finite,
    frobenius_inner,
    is_skew,
    orthogonality_drift,
    orthonormalize,
    random_orthogonal,
    random_skew,
    skew_project,
)
from .matfuncs import BRANCH_MARGIN, dexp_adjoint, dexp_inverse, expm_matrix, logm_principal

logger = logging.getLogger(__name__)

POINT_TOL_SO = 1e-10
POINT_TOL_SPHERE = 1e-12
TANGENT_TOL = 1e-12
REPAIR_THRESHOLD = 1e-12
ANTIPODAL_TOL = 1e-8
RETRACTIONS = ("exp", "cayley")


class Manifold(ABC):
    """Array-level operations shared by every manifold kind."""

    n: int

    @property
    @abstractmethod
    def name(self) -> str: ...

    @property
    @abstractmethod
    def dim(self) -> int: ...

    @property
    @abstractmethod
    def shape(self) -> tuple[int, ...]: ...

    # -- membership ----------------------------------------------------
    def _check_shape(self, x: np.ndarray, what: str) -> None:
        if np.shape(x) != self.shape:
            raise DimensionError(f"{what} for {self.name} must have shape {self.shape}, got {np.shape(x)}")

    @abstractmethod
    def check_point(self, x: np.ndarray) -> None: ...

    @abstractmethod
    def check_tangent(self, x: np.ndarray, v: np.ndarray) -> None: ...

    def drift(self, x: np.ndarray) -> float:
        return 0.0

    def repair(self, x: np.ndarray) -> np.ndarray:
        return x

    def zero_tangent(self, x: np.ndarray) -> np.ndarray:
        return np.zeros(self.shape)

    @abstractmethod
    def random_point(self, rng: np.random.Generator) -> np.ndarray: ...

    @abstractmethod
    def random_tangent(
        self, x: np.ndarray, rng: np.random.Generator, norm: float | None = None
    ) -> np.ndarray: ...

    # -- geometry ------------------------------------------------------
    @abstractmethod
    def exp(self, x: np.ndarray, v: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def log(self, x: np.ndarray, y: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def transport(self, x: np.ndarray, v: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Parallel transport of w along t ↦ exp(x, t·v), t ∈ [0, 1]."""

    @abstractmethod
    def egrad_to_rgrad(self, x: np.ndarray, G: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def exp_differential_adjoint(self, x: np.ndarray, v: np.ndarray, G: np.ndarray) -> np.ndarray:
        """Gradient of f∘exp_x at v, given the ambient gradient G of f at exp(x, v)."""

    @abstractmethod
    def exp_differential_inverse_adjoint(
        self, x: np.ndarray, w: np.ndarray, g: np.ndarray
    ) -> np.ndarray:
        """An ambient G at exp(x, w) with exp_differential_adjoint(x, w, G) = g."""

    def inner(self, x: np.ndarray, u: np.ndarray, w: np.ndarray) -> float:
        return frobenius_inner(u, w)

    def norm(self, x: np.ndarray, v: np.ndarray) -> float:
        return float(np.linalg.norm(v))

    def dist(self, x: np.ndarray, y: np.ndarray) -> float:
        return self.norm(x, self.log(x, y))

    def retract(self, x: np.ndarray, v: np.ndarray, method: str = "exp") -> np.ndarray:
        if method == "exp":
            return self.exp(x, v)
        if method == "cayley":
            raise UnsupportedError(f"Cayley retraction is only defined on SO(n), not {self.name}")
        raise UnsupportedError(f"unknown retraction {method!r}; expected one of {RETRACTIONS}")

    def cayley_differential_adjoint(self, x: np.ndarray, v: np.ndarray, G: np.ndarray) -> np.ndarray:
        """Gradient of f∘(v ↦ retract(x, v, "cayley")) at v."""
        raise UnsupportedError(f"Cayley retraction is only defined on SO(n), not {self.name}")

    # -- flat coordinates for the optimizers ---------------------------
    def flatten(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.array(v, dtype=np.float64)

    def unflatten(self, x: np.ndarray, c: np.ndarray) -> np.ndarray:
        return np.array(c, dtype=np.float64)


# ---------------------------------------------------------------------
# SO(n)
@dataclass(frozen=True)
class SpecialOrthogonal(Manifold):
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise DimensionError("SO(n) needs n >= 2")

    @property
    def name(self) -> str:
        return f"SO({self.n})"

    @property
    def dim(self) -> int:
        return self.n * (self.n - 1) // 2

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n, self.n)

    def check_point(self, x: np.ndarray) -> None:
        self._check_shape(x, "point")
        check_finite(x, "point")
        drift = orthogonality_drift(x)
        if drift > POINT_TOL_SO:
            raise DomainError(f"not orthogonal: ‖XᵀX − I‖_F = {drift:.3e}")
        if np.linalg.det(x) <= 0:
            raise DomainError("orthogonal matrix with negative determinant is not in SO(n)")

    def check_tangent(self, x: np.ndarray, v: np.ndarray) -> None:
        self._check_shape(v, "tangent")
        check_finite(v, "tangent")
        if not is_skew(v):
            raise DomainError("SO(n) tangent coordinates must be skew-symmetric")

    def drift(self, x: np.ndarray) -> float:
        return orthogonality_drift(x)

    def repair(self, x: np.ndarray) -> np.ndarray:
        if orthogonality_drift(x) > REPAIR_THRESHOLD:
            return orthonormalize(x)
        return x

    def random_point(self, rng: np.random.Generator) -> np.ndarray:
        return random_orthogonal(self.n, rng)

    def random_tangent(self, x, rng, norm=None):
        S = random_skew(self.n, rng)
        if norm is not None:
            S = S * (norm / float(np.linalg.norm(S)))
        return S

    def exp(self, x, v):
        if not np.any(v):
            return np.array(x, dtype=np.float64)
        return x @ expm_matrix(v)

    def log(self, x, y):
        return skew_project(logm_principal(x.T @ y).result)

    def _check_radius(self, v: np.ndarray) -> None:
        radius = float(np.linalg.norm(v, 2))
        if radius > math.pi - BRANCH_MARGIN:
            raise BranchError(f"‖Ω‖₂ = {radius:.9f} beyond the injectivity radius of SO(n)")

    def transport(self, x, v, w):
        if not np.any(v):
            return np.array(w, dtype=np.float64)
        self._check_radius(v)
        half = expm_matrix(np.ldexp(v, -1))
        return skew_project(half.T @ w @ half)

    def egrad_to_rgrad(self, x, G):
        self._check_shape(G, "ambient gradient")
        return skew_project(x.T @ G)

    def exp_differential_adjoint(self, x, v, G):
        self._check_shape(G, "ambient gradient")
        return skew_project(dexp_adjoint(v, x.T @ G))

    def exp_differential_inverse_adjoint(self, x, w, g):
        # dexp_adjoint(W, ·) = dexp(Wᵀ, ·) = dexp(−W, ·)
        return x @ dexp_inverse(w.T, g)

    def retract(self, x, v, method="exp"):
        if method == "cayley":
            return x @ cayley(v)
        return super().retract(x, v, method)

    def cayley_differential_adjoint(self, x, v, G):
        # d cay(Ω)[E] = D E D with D = (I − Ω/2)⁻¹, and Dᵀ = (I + Ω/2)⁻¹
        self._check_shape(G, "ambient gradient")
        ident = np.eye(self.n)
        Dt = scipy.linalg.solve(ident + v / 2, ident)
        return skew_project(Dt @ x.T @ G @ Dt)


def cayley(Omega: np.ndarray) -> np.ndarray:
    """(I + Ω/2)(I − Ω/2)⁻¹."""
    ident = np.eye(Omega.shape[0])
    denom = ident - Omega / 2
    if np.linalg.cond(denom) > 1e12:
        raise SingularityError("I − Ω/2 is singular: Cayley transform undefined")
    # numerator and denominator commute
    return scipy.linalg.solve(denom, ident + Omega / 2)


# ---------------------------------------------------------------------
# S^{n-1}
@dataclass(frozen=True)
class Sphere(Manifold):
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise DimensionError("Sphere(n) needs n >= 2")

    @property
    def name(self) -> str:
        return f"S^{self.n - 1}"

    @property
    def dim(self) -> int:
        return self.n - 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,)

    def check_point(self, x):
        self._check_shape(x, "point")
        check_finite(x, "point")
        if abs(float(np.linalg.norm(x)) - 1.0) > POINT_TOL_SPHERE:
            raise DomainError(f"not a unit vector: ‖x‖ = {np.linalg.norm(x):.17g}")

    def check_tangent(self, x, v):
        self._check_shape(v, "tangent")
        check_finite(v, "tangent")
        if abs(float(x @ v)) > TANGENT_TOL * max(float(np.linalg.norm(v)), 1e-300):
            raise DomainError("sphere tangent must be orthogonal to its base point")

    def drift(self, x):
        return abs(float(np.linalg.norm(x)) - 1.0)

    def repair(self, x):
        if self.drift(x) > REPAIR_THRESHOLD:
            return x / np.linalg.norm(x)
        return x

    def random_point(self, rng):
        x = rng.standard_normal(self.n)
        return x / np.linalg.norm(x)

    def random_tangent(self, x, rng, norm=None):
        v = rng.standard_normal(self.n)
        v = v - (x @ v) * x
        if norm is not None:
            v = v * (norm / float(np.linalg.norm(v)))
        return v

    def exp(self, x, v):
        theta = float(np.linalg.norm(v))
        if theta == 0.0:
            return np.array(x, dtype=np.float64)
        y = math.cos(theta) * x + math.sin(theta) * (v / theta)
        return y / np.linalg.norm(y)

    def log(self, x, y):
        if float(np.linalg.norm(x + y)) <= ANTIPODAL_TOL:
            raise BranchError("antipodal points: sphere log undefined")
        c = float(x @ y)
        perp = y - c * x
        s = float(np.linalg.norm(perp))
        if s == 0.0:
            return np.zeros(self.n)
        return math.atan2(s, c) * (perp / s)

    def _split(self, v: np.ndarray) -> tuple[float, np.ndarray]:
        theta = float(np.linalg.norm(v))
        if theta > math.pi - BRANCH_MARGIN:
            raise BranchError(f"geodesic length {theta:.9f} beyond the injectivity radius of the sphere")
        return theta, v / theta

    def transport(self, x, v, w):
        if not np.any(v):
            return np.array(w, dtype=np.float64)
        theta, u = self._split(v)
        a = float(u @ w)
        return w + a * ((math.cos(theta) - 1.0) * u - math.sin(theta) * x)

    def egrad_to_rgrad(self, x, G):
        self._check_shape(G, "ambient gradient")
        return G - (x @ G) * x

    def exp_differential_adjoint(self, x, v, G):
        self._check_shape(G, "ambient gradient")
        theta = float(np.linalg.norm(v))
        if theta == 0.0:
            return G - (x @ G) * x
        u = v / theta
        terminal = -math.sin(theta) * x + math.cos(theta) * u
        rest = G - (G @ u) * u - (G @ x) * x
        return (G @ terminal) * u + (math.sin(theta) / theta) * rest

    def exp_differential_inverse_adjoint(self, x, w, g):
        if not np.any(w):
            return np.array(g, dtype=np.float64)
        theta, u = self._split(w)
        terminal = -math.sin(theta) * x + math.cos(theta) * u
        along = float(g @ u)
        return along * terminal + (theta / math.sin(theta)) * (g - along * u)

    def tangent_basis(self, x: np.ndarray) -> np.ndarray:
        """Orthonormal basis of T_xS^{n-1}, as the columns of an n×(n−1) array."""
        return scipy.linalg.null_space(x[np.newaxis, :])

    def flatten(self, x, v):
        return self.tangent_basis(x).T @ v

    def unflatten(self, x, c):
        return self.tangent_basis(x) @ c


# ---------------------------------------------------------------------
# R^n
@dataclass(frozen=True)
class Euclidean(Manifold):
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise DimensionError("Euclidean(n) needs n >= 1")

    @property
    def name(self) -> str:
        return f"R^{self.n}"

    @property
    def dim(self) -> int:
        return self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,)

    def check_point(self, x):
        self._check_shape(x, "point")
        check_finite(x, "point")

    def check_tangent(self, x, v):
        self._check_shape(v, "tangent")
        check_finite(v, "tangent")

    def random_point(self, rng):
        return rng.standard_normal(self.n)

    def random_tangent(self, x, rng, norm=None):
        v = rng.standard_normal(self.n)
        if norm is not None:
            v = v * (norm / float(np.linalg.norm(v)))
        return v

    def exp(self, x, v):
        return x + v

    def log(self, x, y):
        return y - x

    def transport(self, x, v, w):
        return np.array(w, dtype=np.float64)

    def egrad_to_rgrad(self, x, G):
        self._check_shape(G, "ambient gradient")
        return np.array(G, dtype=np.float64)

    def exp_differential_adjoint(self, x, v, G):
        self._check_shape(G, "ambient gradient")
        return np.array(G, dtype=np.float64)

    def exp_differential_inverse_adjoint(self, x, w, g):
        return np.array(g, dtype=np.float64)


# ---------------------------------------------------------------------
# validated points and tangent vectors
@dataclass(frozen=True, eq=False)
class ManifoldPoint:
    manifold: Manifold
    coordinates: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coordinates, dtype=np.float64)
        self.manifold.check_point(coords)
        coords.setflags(write=False)
        object.__setattr__(self, "coordinates", coords)

    @property
    def kind(self) -> str:
        return self.manifold.name

    def tangent(self, coordinates: np.ndarray) -> "TangentVector":
        return TangentVector(self, coordinates)

    def zero(self) -> "TangentVector":
        return TangentVector(self, self.manifold.zero_tangent(self.coordinates))


@dataclass(frozen=True, eq=False)
class TangentVector:
    base: ManifoldPoint
    coordinates: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coordinates, dtype=np.float64)
        self.base.manifold.check_tangent(self.base.coordinates, coords)
        coords.setflags(write=False)
        object.__setattr__(self, "coordinates", coords)

    @property
    def manifold(self) -> Manifold:
        return self.base.manifold

    def norm(self) -> float:
        return self.manifold.norm(self.base.coordinates, self.coordinates)

    def scaled(self, factor: float) -> "TangentVector":
        return TangentVector(self.base, factor * self.coordinates)


def same_point(p: ManifoldPoint, q: ManifoldPoint) -> bool:
    return p.manifold == q.manifold and np.array_equal(p.coordinates, q.coordinates)


def _require_base(p: ManifoldPoint, v: TangentVector) -> None:
    if not (v.base is p or same_point(v.base, p)):
        raise DomainError(f"tangent vector is based at a different point of {p.kind}")


def _require_same_kind(p: ManifoldPoint, q: ManifoldPoint) -> None:
    if p.manifold != q.manifold:
        raise DomainError(f"points live on different manifolds: {p.kind} vs {q.kind}")


# ---------------------------------------------------------------------
# point-level operations
def exp_point(p: ManifoldPoint, v: TangentVector) -> ManifoldPoint:
    _require_base(p, v)
    return ManifoldPoint(p.manifold, p.manifold.exp(p.coordinates, v.coordinates))


def log_point(p: ManifoldPoint, q: ManifoldPoint) -> TangentVector:
    _require_same_kind(p, q)
    return TangentVector(p, p.manifold.log(p.coordinates, q.coordinates))


def egrad_to_rgrad(p: ManifoldPoint, G: np.ndarray) -> TangentVector:
    return TangentVector(p, p.manifold.egrad_to_rgrad(p.coordinates, np.asarray(G, dtype=np.float64)))


def parallel_transport(p: ManifoldPoint, v: TangentVector, w: TangentVector) -> TangentVector:
    _require_base(p, v)
    _require_base(p, w)
    M = p.manifold
    q = ManifoldPoint(M, M.exp(p.coordinates, v.coordinates))
    return TangentVector(q, M.transport(p.coordinates, v.coordinates, w.coordinates))


def geodesic(p: ManifoldPoint, v: TangentVector, t: float) -> ManifoldPoint:
    return exp_point(p, v.scaled(t))


def holonomy_loop(
    p: ManifoldPoint, waypoints: Sequence[ManifoldPoint], w: TangentVector
) -> TangentVector:
    """
    Transport w around the closed geodesic polygon through ``waypoints``.

    The first and last waypoints must both be p. Each leg is the minimizing
    geodesic between consecutive waypoints.
    """
    _require_base(p, w)
    if len(waypoints) < 2:
        raise DomainError("a loop needs at least two waypoints")
    for end in (waypoints[0], waypoints[-1]):
        _require_same_kind(p, end)
        if float(np.max(np.abs(end.coordinates - p.coordinates))) > 1e-12:
            raise DomainError("holonomy loop must start and end at its base point")

    M = p.manifold
    vec = np.array(w.coordinates)
    for start, stop in zip(waypoints[:-1], waypoints[1:]):
        _require_same_kind(start, stop)
        leg = M.log(start.coordinates, stop.coordinates)
        vec = M.transport(start.coordinates, leg, vec)
    return TangentVector(p, vec)


def cayley_retract(p: ManifoldPoint, v: TangentVector) -> ManifoldPoint:
    _require_base(p, v)
    return ManifoldPoint(p.manifold, p.manifold.retract(p.coordinates, v.coordinates, "cayley"))


def distance(p: ManifoldPoint, q: ManifoldPoint) -> float:
    _require_same_kind(p, q)
    return p.manifold.dist(p.coordinates, q.coordinates)


def build_manifold(kind: str, n: int) -> Manifold:
    kinds = {"so": SpecialOrthogonal, "sphere": Sphere, "euclidean": Euclidean}
    try:
        return kinds[kind](n)
    except KeyError:
        raise UnsupportedError(f"unknown manifold kind {kind!r}; expected one of {sorted(kinds)}") from None
