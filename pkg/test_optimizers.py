import numpy as np
import pytest
from pydantic import ValidationError

from adatriv.errors import DimensionError, DomainError
from adatriv.linalg import make_rng
from adatriv.optimizers import (
    OptimizerRule,
    coordinate_noninvariance_witness,
    init_state,
    optimizer_step,
    reset,
    run_rule,
)

RULES = [
    OptimizerRule.sgd(),
    OptimizerRule.momentum(),
    OptimizerRule.adagrad(),
    OptimizerRule.rmsprop(),
    OptimizerRule.adam(),
]


def _gradients(seed, count=20, dim=5):
    return list(make_rng(seed).standard_normal((count, dim)))


def test_adam_first_step_is_sign_of_gradient():
    g = np.array([0.5, -0.01, 3.0, -7.0, 0.02])
    _, g_hat = optimizer_step(init_state(OptimizerRule.adam(), g.shape), g)
    assert np.max(np.abs(g_hat - np.sign(g))) <= 1e-6


def test_sgd_is_the_identity():
    g = np.array([1.5, -2.0])
    state, g_hat = optimizer_step(init_state(OptimizerRule.sgd(), g.shape), g)
    np.testing.assert_array_equal(g_hat, g)
    assert not np.any(state.first_moment) and not np.any(state.second_moment)
    assert state.step_count == 1


def test_adagrad_two_steps():
    rule = OptimizerRule.adagrad(eps=0.0)
    g1, g2 = np.array([3.0, -4.0, 0.0]), np.array([4.0, 3.0, 0.0])
    first, second = run_rule(rule, [g1, g2])
    np.testing.assert_allclose(first, [1.0, -1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(second, [4.0 / 5.0, 3.0 / 5.0, 0.0], atol=1e-15)


def test_adagrad_repeated_gradient():
    rule = OptimizerRule.adagrad(eps=0.0)
    g = np.array([3.0, 4.0])
    state, _ = optimizer_step(init_state(rule, g.shape), g)
    state, g_hat = optimizer_step(state, g)
    np.testing.assert_array_equal(state.second_moment, [18.0, 32.0])
    np.testing.assert_allclose(g_hat, [3.0 / np.sqrt(18.0), 4.0 / np.sqrt(32.0)], rtol=0, atol=1e-12)
    assert state.step_count == 2


def test_rmsprop_one_step():
    rule = OptimizerRule.rmsprop(beta2=0.99, eps=1e-8)
    g = np.array([2.0, -0.5])
    state, g_hat = optimizer_step(init_state(rule, g.shape), g)
    v = (1.0 - 0.99) * g * g
    np.testing.assert_allclose(state.second_moment, v, rtol=1e-15)
    np.testing.assert_allclose(g_hat, g / (np.sqrt(v) + 1e-8), rtol=1e-15)


def test_momentum_accumulates():
    rule = OptimizerRule.momentum(mu=0.5)
    g1, g2 = np.array([1.0, 2.0]), np.array([-1.0, 4.0])
    first, second = run_rule(rule, [g1, g2])
    np.testing.assert_array_equal(first, g1)
    np.testing.assert_array_equal(second, 0.5 * g1 + g2)


def test_adam_without_averaging_normalizes_entries():
    rule = OptimizerRule.adam(beta1=0.0, beta2=0.0, eps=0.0)
    g = np.array([2.0, 0.0, -0.25])
    for g_hat in run_rule(rule, [g, 3 * g, -g]):
        np.testing.assert_array_equal(np.abs(g_hat), [1.0, 0.0, 1.0])


@pytest.mark.parametrize("rule", RULES[2:], ids=lambda r: r.name)
def test_adaptive_rules_ignore_gradient_scale(rule):
    rule = rule.model_copy(update={"eps": 0.0})
    grads = _gradients(50)
    plain = run_rule(rule, grads)
    scaled = run_rule(rule, [7.5 * g for g in grads])
    for a, b in zip(plain, scaled):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_sgd_scales_with_the_gradient():
    grads = _gradients(51)
    for a, g in zip(run_rule(OptimizerRule.sgd(), [3 * g for g in grads]), grads):
        np.testing.assert_array_equal(a, 3 * g)


@pytest.mark.parametrize("rule", RULES, ids=lambda r: r.name)
def test_steps_are_deterministic(rule):
    grads = _gradients(52)
    for a, b in zip(run_rule(rule, grads), run_rule(rule, grads)):
        np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("rule", RULES, ids=lambda r: r.name)
def test_reset_restores_a_fresh_state(rule):
    grads = _gradients(53, count=100)
    state = init_state(rule, grads[0].shape)
    for g in grads:
        state, _ = optimizer_step(state, g)
    state = reset(state)
    assert state.step_count == 0
    assert not np.any(state.first_moment) and not np.any(state.second_moment)

    g_next = np.array([0.3, -1.0, 2.0, 0.0, 5.0])
    _, after_reset = optimizer_step(state, g_next)
    _, fresh = optimizer_step(init_state(rule, g_next.shape), g_next)
    np.testing.assert_array_equal(after_reset, fresh)


@pytest.mark.parametrize("rule", RULES, ids=lambda r: r.name)
def test_state_invariants(rule):
    state = init_state(rule, (5,))
    for t, g in enumerate(_gradients(54), start=1):
        state, g_hat = optimizer_step(state, g)
        assert state.step_count == t
        assert np.all(state.second_moment >= 0)
        assert np.all(np.isfinite(g_hat))


def test_step_rejects_bad_gradients():
    state = init_state(OptimizerRule.adam(), (3,))
    with pytest.raises(DimensionError):
        optimizer_step(state, np.ones(4))
    with pytest.raises(DomainError):
        optimizer_step(state, np.array([1.0, np.inf, 0.0]))


def test_rule_validation():
    with pytest.raises(ValidationError):
        OptimizerRule(name="adam", beta1=1.0)
    with pytest.raises(ValidationError):
        OptimizerRule(name="lion")
    with pytest.raises(ValidationError):
        OptimizerRule(name="sgd", lr=0.1)
    assert OptimizerRule.adam().describe() == "adam(beta1=0.9, beta2=0.99, eps=1e-08)"


def test_witness_identity_rotation():
    assert coordinate_noninvariance_witness(41, rotation=np.eye(6)).deviation <= 1e-14


def test_witness_permutation():
    P = np.eye(6)[[3, 0, 5, 1, 4, 2]]
    assert coordinate_noninvariance_witness(41, rotation=P).deviation <= 1e-12


def test_witness_random_rotation():
    witness = coordinate_noninvariance_witness(41)
    assert witness.deviation > 1e-3
    assert witness.gradients.shape == (10, 6)
