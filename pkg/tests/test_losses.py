import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from gradcheck import numeric_grad, rel_error
from softshift.errors import InvalidTargets, InvalidTemperature, LabelOutOfRange
from softshift.losses import (LossWeights, SoftTargetBatch, combined_loss, entropy, hard_loss, onehot,
                              soft_cross_entropy, teacher_soft_targets)
from softshift.mathcore import SeededRng, softmax_tempered
from softshift.network import ModelParams, LayerSpec, init_params, mlp_specs


def random_instance(rng, n=None, k=None, scale=3.0):
    n = n or int(rng.integers(1, 6))
    k = k or int(rng.integers(2, 8))
    logits = rng.normal(size=(n, k)) * scale
    labels = rng.integers(0, k, size=n)
    targets = special.softmax(rng.normal(size=(n, k)) * 2, axis=1)
    return logits, labels, targets


def kld_regularized_oracle(logits, labels, targets, rho):
    """hard + rho * soft at T=1, written directly from the definitions."""
    n = logits.shape[0]
    logp = special.log_softmax(logits, axis=1)
    p = np.exp(logp)
    y = np.eye(logits.shape[1])[labels]
    hard = -np.mean(logp[np.arange(n), labels])
    soft = -np.mean(np.sum(targets * logp, axis=1))
    grad = (p - y) / n + rho * ((p - targets) / n)
    return hard + rho * soft, grad


# -- hard loss -----------------------------------------------------------------

def test_hard_loss_confident_and_correct():
    value, _ = hard_loss([[1000.0, 0.0, 0.0]], [0])
    assert value == pytest.approx(0.0, abs=1e-12)


def test_hard_loss_uniform():
    value, _ = hard_loss(np.zeros((3, 4)), [0, 1, 3])
    assert value == pytest.approx(math.log(4), abs=1e-12)
    assert value == pytest.approx(1.386294, abs=1e-6)


@pytest.mark.parametrize("labels", [[-1], [4]])
def test_hard_loss_label_range(labels):
    with pytest.raises(LabelOutOfRange):
        hard_loss(np.zeros((1, 4)), labels)


def test_hard_loss_gradient_finite_differences():
    rng = np.random.default_rng(0)
    for _ in range(20):
        z, y, _ = random_instance(rng)
        _, g = hard_loss(z, y)
        assert rel_error(g, numeric_grad(lambda v: hard_loss(v, y)[0], z)) < 1e-5


# -- soft cross entropy ----------------------------------------------------------

def test_soft_loss_matches_near_one_hot_target():
    z = np.array([[40.0, 0.0, 0.0]])
    value, _ = soft_cross_entropy(z, softmax_tempered(z), 1.0)
    assert value == pytest.approx(0.0, abs=1e-12)


def test_soft_loss_uniform_two_classes():
    value, _ = soft_cross_entropy(np.zeros((2, 2)), np.full((2, 2), 0.5), 1.0)
    assert value == pytest.approx(math.log(2), abs=1e-15)


def test_soft_loss_at_target_is_target_entropy():
    z = np.log([[0.7, 0.3]])
    value, grad = soft_cross_entropy(z, [[0.7, 0.3]], 1.0)
    assert value == pytest.approx(-0.7 * math.log(0.7) - 0.3 * math.log(0.3), abs=1e-12)
    assert value == pytest.approx(0.610864, abs=1e-6)
    assert np.abs(grad).max() < 1e-15


@pytest.mark.parametrize("T", [1.0, 2.0, 5.0])
def test_soft_loss_gradient_finite_differences(T):
    rng = np.random.default_rng(int(T))
    for _ in range(20):
        z, _, t = random_instance(rng)
        _, g = soft_cross_entropy(z, t, T)
        assert rel_error(g, numeric_grad(lambda v: soft_cross_entropy(v, t, T)[0], z)) < 1e-5


def test_soft_loss_rejects_non_simplex_targets():
    with pytest.raises(InvalidTargets):
        soft_cross_entropy(np.zeros((1, 2)), [[0.7, 0.4]], 1.0)
    with pytest.raises(InvalidTargets):
        soft_cross_entropy(np.zeros((1, 2)), [[1.2, -0.2]], 1.0)
    with pytest.raises(InvalidTemperature):
        soft_cross_entropy(np.zeros((1, 2)), [[0.5, 0.5]], 0.0)


def test_targets_within_tolerance_are_renormalised():
    batch = SoftTargetBatch(np.array([[0.5 + 4e-7, 0.5]]), 1.0)
    assert batch.probs.sum() == pytest.approx(1.0, abs=1e-15)


def test_roundoff_sums_are_left_alone():
    probs = special.softmax(np.random.default_rng(3).normal(size=(50, 7)), axis=1)
    assert SoftTargetBatch(probs, 1.0).probs.tobytes() == probs.tobytes()


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1.0, 2.0, 5.0]))
def test_soft_loss_bounded_below_by_target_entropy(seed, T):
    z, _, t = random_instance(np.random.default_rng(seed))
    assert soft_cross_entropy(z, t, T)[0] >= entropy(t) - 1e-9


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_hard_loss_is_soft_loss_on_one_hot(seed):
    z, y, _ = random_instance(np.random.default_rng(seed))
    assert hard_loss(z, y)[0] == pytest.approx(soft_cross_entropy(z, onehot(y, z.shape[1]), 1.0)[0],
                                               abs=1e-12)


# -- combined objective ------------------------------------------------------------

def test_combined_rho_zero_is_hard_loss_exactly():
    z, y, t = random_instance(np.random.default_rng(5))
    value, grad = combined_loss(z, y, t, LossWeights(2.0, 0.0))
    hv, hg = hard_loss(z, y)
    assert value == hv and grad.tobytes() == hg.tobytes()


def test_combined_is_additive():
    # uniform logits with uniform targets: hard = soft = ln k
    k = 3
    value, _ = combined_loss(np.zeros((2, k)), [0, 2], np.full((2, k), 1 / k), LossWeights(1.0, 1.0))
    assert value == pytest.approx(2 * math.log(k), abs=1e-12)


def test_combined_at_unit_temperature_is_kld_regularisation_bitwise():
    rng = np.random.default_rng(11)
    for _ in range(100):
        z, y, t = random_instance(rng)
        value, grad = combined_loss(z, y, t, LossWeights(1.0, 0.1))
        ov, og = kld_regularized_oracle(z, y, t, 0.1)
        assert value == ov
        assert grad.tobytes() == og.tobytes()


@pytest.mark.parametrize("T", [1.0, 2.0, 5.0])
@pytest.mark.parametrize("rho", [0.1, 1.0])
def test_combined_gradient_finite_differences(T, rho):
    # the returned gradient is that of hard + rho * T^2 * soft
    rng = np.random.default_rng(int(10 * T + rho * 7))
    w = LossWeights(T, rho)
    for _ in range(20):
        z, y, t = random_instance(rng)
        _, g = combined_loss(z, y, t, w)
        f = lambda v: hard_loss(v, y)[0] + rho * T * T * soft_cross_entropy(v, t, T)[0]
        assert rel_error(g, numeric_grad(f, z)) < 1e-5


@pytest.mark.parametrize("T", [1.0, 2.0, 5.0])
def test_soft_only_gradient(T):
    rng = np.random.default_rng(int(T) + 50)
    w = LossWeights.from_rho(T, math.inf)
    assert w.soft_only
    for _ in range(20):
        z, y, t = random_instance(rng)
        value, g = combined_loss(z, y, t, w)
        assert value == soft_cross_entropy(z, t, T)[0]
        f = lambda v: T * T * soft_cross_entropy(v, t, T)[0]
        assert rel_error(g, numeric_grad(f, z)) < 1e-5


def test_temperature_squared_keeps_relative_contribution():
    rng = np.random.default_rng(21)
    for _ in range(20):
        student = rng.normal(size=(8, 6))
        teacher = student + rng.normal(size=(8, 6))
        labels = rng.integers(0, 6, size=8)
        ratios = []
        for T in (1.0, 2.0, 5.0):
            targets = softmax_tempered(teacher, T)
            hard_norm = np.linalg.norm(hard_loss(student, labels)[1])
            soft_norm = np.linalg.norm(T * T * soft_cross_entropy(student, targets, T)[1])
            ratios.append(hard_norm / soft_norm)
        assert max(ratios) / min(ratios) < 2.0


def test_loss_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(1.0, -0.1)
    with pytest.raises(ValueError):
        LossWeights(1.0, 0.5, soft_only=True)
    with pytest.raises(InvalidTemperature):
        LossWeights(0.0, 0.1)
    assert LossWeights.from_rho(1.0, math.inf).rho_label == "inf"


# -- teacher soft targets -----------------------------------------------------------

def test_teacher_with_zero_weights_is_uniform():
    specs = [LayerSpec(3, 4, "tanh"), LayerSpec(4, 5, "linear")]
    teacher = ModelParams(specs, [np.zeros((3, 4)), np.zeros((4, 5))], [np.zeros(4), np.zeros(5)])
    batch = teacher_soft_targets(teacher, np.random.default_rng(0).normal(size=(6, 3)), 2.0)
    assert np.array_equal(batch.probs, np.full((6, 5), 0.2))
    assert batch.provenance == "teacher-on-target"


def test_teacher_targets_soften_at_high_temperature():
    teacher = init_params(mlp_specs(4, 6, hidden=(8,)), SeededRng(1))
    x = np.random.default_rng(1).normal(size=(10, 4)) * 3
    batch = teacher_soft_targets(teacher, x, 1000.0)
    assert np.abs(batch.probs - 1 / 6).max() < 1e-3


def test_teacher_targets_at_unit_temperature_are_softmax():
    from softshift.network import forward
    teacher = init_params(mlp_specs(4, 6, hidden=(8,)), SeededRng(2))
    x = np.random.default_rng(2).normal(size=(10, 4))
    batch = teacher_soft_targets(teacher, x, 1.0, "teacher-on-parallel-source")
    assert batch.probs.tobytes() == softmax_tempered(forward(teacher, x)[0], 1.0).tobytes()
    assert batch.provenance == "teacher-on-parallel-source"
