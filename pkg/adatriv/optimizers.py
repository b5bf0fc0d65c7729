"""
optimizers.py
~~~~~~~~~~~~~

Euclidean update rules acting on flat tangent coordinates.

``optimizer_step`` is a pure state transition: it returns a new
``OptimizerState`` together with the *unscaled* adapted direction ĝ. The
learning rate is applied by the engine.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from . import config
from .errors import DimensionError, DomainError
from .linalg import RngSeed, make_rng, random_orthogonal

RuleName = Literal["sgd", "momentum", "adagrad", "rmsprop", "adam"]


class OptimizerRule(BaseModel):
    """Update rule plus its hyperparameters. Unused hyperparameters are ignored."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: RuleName = "sgd"
    mu: float = Field(default=config.MOMENTUM, ge=0.0, lt=1.0)
    beta1: float = Field(default=config.ADAM_BETA1, ge=0.0, lt=1.0)
    beta2: float = Field(default=config.ADAM_BETA2, ge=0.0, lt=1.0)
    eps: float = Field(default=config.EPS, ge=0.0)

    @classmethod
    def sgd(cls) -> "OptimizerRule":
        return cls(name="sgd")

    @classmethod
    def momentum(cls, mu: float = config.MOMENTUM) -> "OptimizerRule":
        return cls(name="momentum", mu=mu)

    @classmethod
    def adagrad(cls, eps: float = config.EPS) -> "OptimizerRule":
        return cls(name="adagrad", eps=eps)

    @classmethod
    def rmsprop(cls, beta2: float = config.RMSPROP_BETA2, eps: float = config.EPS) -> "OptimizerRule":
        return cls(name="rmsprop", beta2=beta2, eps=eps)

    @classmethod
    def adam(
        cls,
        beta1: float = config.ADAM_BETA1,
        beta2: float = config.ADAM_BETA2,
        eps: float = config.EPS,
    ) -> "OptimizerRule":
        return cls(name="adam", beta1=beta1, beta2=beta2, eps=eps)

    def describe(self) -> str:
        if self.name == "momentum":
            return f"momentum(mu={self.mu:g})"
        if self.name == "adagrad":
            return f"adagrad(eps={self.eps:g})"
        if self.name == "rmsprop":
            return f"rmsprop(beta2={self.beta2:g}, eps={self.eps:g})"
        if self.name == "adam":
            return f"adam(beta1={self.beta1:g}, beta2={self.beta2:g}, eps={self.eps:g})"
        return "sgd"


@dataclass(frozen=True)
class OptimizerState:
    rule: OptimizerRule
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0

    @property
    def shape(self) -> tuple[int, ...]:
        return self.first_moment.shape


def init_state(rule: OptimizerRule, shape: tuple[int, ...]) -> OptimizerState:
    return OptimizerState(rule, np.zeros(shape), np.zeros(shape), 0)


def reset(state: OptimizerState) -> OptimizerState:
    """Zero both moments and the step counter, keeping the rule."""
    return init_state(state.rule, state.shape)


def _normalize(numerator: np.ndarray, second: np.ndarray, eps: float) -> np.ndarray:
    denom = np.sqrt(second) + eps
    # entries with a zero denominator have a zero numerator too
    return np.divide(numerator, denom, out=np.zeros_like(numerator), where=denom > 0)


def optimizer_step(state: OptimizerState, g: np.ndarray) -> tuple[OptimizerState, np.ndarray]:
    g = np.asarray(g, dtype=np.float64)
    if g.shape != state.shape:
        raise DimensionError(f"gradient shape {g.shape} does not match optimizer state {state.shape}")
    if not np.all(np.isfinite(g)):
        raise DomainError("non-finite gradient passed to the optimizer")

    rule = state.rule
    t = state.step_count + 1
    m, v = state.first_moment, state.second_moment

    if rule.name == "sgd":
        return replace(state, step_count=t), g.copy()

    if rule.name == "momentum":
        m = rule.mu * m + g
        return replace(state, first_moment=m, step_count=t), m.copy()

    if rule.name == "adagrad":
        v = v + g * g
        return replace(state, second_moment=v, step_count=t), _normalize(g, v, rule.eps)

    if rule.name == "rmsprop":
        v = rule.beta2 * v + (1.0 - rule.beta2) * g * g
        return replace(state, second_moment=v, step_count=t), _normalize(g, v, rule.eps)

    # adam
    m = rule.beta1 * m + (1.0 - rule.beta1) * g
    v = rule.beta2 * v + (1.0 - rule.beta2) * g * g
    m_hat = m / (1.0 - rule.beta1**t)
    v_hat = v / (1.0 - rule.beta2**t)
    new = OptimizerState(rule, m, v, t)
    return new, _normalize(m_hat, v_hat, rule.eps)


def run_rule(rule: OptimizerRule, gradients: list[np.ndarray]) -> list[np.ndarray]:
    """Adapted directions for a fixed gradient sequence, starting from a fresh state."""
    if not gradients:
        return []
    state = init_state(rule, np.shape(gradients[0]))
    out = []
    for g in gradients:
        state, g_hat = optimizer_step(state, g)
        out.append(g_hat)
    return out


# ---------------------------------------------------------------------
# diagonal adaptivity is coordinate dependent
@dataclass(frozen=True)
class NoninvarianceWitness:
    rotation: np.ndarray
    gradients: np.ndarray
    deviation: float


def coordinate_noninvariance_witness(
    seed: RngSeed,
    rotation: Optional[np.ndarray] = None,
    dim: int = 6,
    steps: int = 10,
) -> NoninvarianceWitness:
    """
    Run Adagrad on the same gradient stream in two coordinate systems related
    by ``rotation`` (random orthogonal if omitted) and measure how far the
    final directions disagree once mapped back to the same coordinates.
    """
    rng = make_rng(seed)
    if rotation is None:
        R = random_orthogonal(dim, rng)
    else:
        R = np.asarray(rotation, dtype=np.float64)
        dim = R.shape[0]
    gradients = rng.standard_normal((steps, dim))

    rule = OptimizerRule.adagrad()
    original = run_rule(rule, list(gradients))[-1]
    rotated = run_rule(rule, [R.T @ g for g in gradients])[-1]
    deviation = float(np.linalg.norm(R @ rotated - original))
    return NoninvarianceWitness(R, gradients, deviation)
