import numpy as np
import pytest

from gradcheck import numeric_grad, rel_error
from softshift.errors import CorruptCheckpoint, DimensionMismatch, InvalidSpec, ShapeMismatch
from softshift.losses import hard_loss
from softshift.mathcore import SeededRng
from softshift.network import (LayerSpec, ModelParams, RmspropState, backward, forward, init_params,
                               load_model, mlp_specs, rmsprop_step, save_model)


def single_layer(w, b):
    w = np.asarray(w, dtype=float)
    return ModelParams([LayerSpec(*w.shape, "linear")], [w], [np.asarray(b, dtype=float)])


def random_net(seed, dims=(5, 7, 6, 4), activations=("tanh", "relu")):
    rng = np.random.default_rng(seed)
    specs = [LayerSpec(a, b, act) for a, b, act in zip(dims[:-2], dims[1:-1], activations)]
    specs.append(LayerSpec(dims[-2], dims[-1], "linear"))
    params = init_params(specs, SeededRng(seed))
    for b in params.biases:
        b[:] = rng.normal(size=b.shape) * 0.5
    return params


def test_identity_layer_passes_inputs_through():
    x = np.array([[1.0, -2.0, 3.0], [0.5, 0.0, -1.0]])
    logits, _ = forward(single_layer(np.eye(3), np.zeros(3)), x)
    assert np.array_equal(logits, x)


def test_zero_weights_give_bias_rows():
    logits, _ = forward(single_layer(np.zeros((4, 3)), [1.0, 2.0, 3.0]), np.ones((5, 4)))
    assert np.array_equal(logits, np.tile([1.0, 2.0, 3.0], (5, 1)))


def test_hand_evaluated_layer():
    # weights are (input_dim, output_dim); one input feature feeding two logits
    logits, _ = forward(single_layer([[1.0, -1.0]], [0.0, 0.0]), [[2.0]])
    assert logits.tolist() == [[2.0, -2.0]]


def test_forward_rejects_wrong_width():
    with pytest.raises(DimensionMismatch):
        forward(single_layer(np.eye(3), np.zeros(3)), np.ones((2, 4)))


def test_forward_is_deterministic():
    p = random_net(1)
    x = np.random.default_rng(0).normal(size=(6, 5))
    assert forward(p, x)[0].tobytes() == forward(p, x)[0].tobytes()


def test_zero_upstream_gives_zero_gradient():
    p = random_net(2)
    _, cache = forward(p, np.ones((3, 5)))
    grads = backward(p, cache, np.zeros((3, 4)))
    assert all(not a.any() for a in grads.arrays())


def test_single_layer_weight_gradient_is_x_transpose_g():
    x = np.array([[1.0, 2.0], [3.0, -1.0]])
    p = single_layer(np.ones((2, 3)), np.zeros(3))
    _, cache = forward(p, x)
    g = np.arange(6.0).reshape(2, 3)
    grads = backward(p, cache, g)
    assert np.array_equal(grads.weights[0], x.T @ g)
    assert np.array_equal(grads.biases[0], g.sum(axis=0))


def test_backward_shape_check():
    p = random_net(3)
    _, cache = forward(p, np.ones((3, 5)))
    with pytest.raises(ShapeMismatch):
        backward(p, cache, np.zeros((3, 5)))


@pytest.mark.parametrize("seed", range(6))
def test_backward_matches_finite_differences(seed):
    rng = np.random.default_rng(100 + seed)
    dims = tuple(rng.integers(2, 9, size=4))
    p = random_net(seed, dims, ("tanh", "tanh") if seed % 2 else ("tanh", "relu"))
    x = rng.normal(size=(int(rng.integers(1, 5)), dims[0]))
    labels = rng.integers(0, dims[-1], size=x.shape[0])

    logits, cache = forward(p, x)
    grads = backward(p, cache, hard_loss(logits, labels)[1])
    for k, arr in enumerate(p.arrays()):
        def f(v, k=k):
            q = p.copy()
            q.arrays()[k][...] = v
            return hard_loss(forward(q, x)[0], labels)[0]
        assert rel_error(grads.arrays()[k], numeric_grad(f, arr)) < 1e-5


def test_init_params_contract():
    specs = mlp_specs(100, 10, hidden=(100,))
    a = init_params(specs, SeededRng(9))
    b = init_params(specs, SeededRng(9))
    assert a.equals(b)
    assert all(not bias.any() for bias in a.biases)
    assert abs(a.weights[0].std() - 0.1) < 0.02        # 10^4 draws scaled by 1/sqrt(100)


@pytest.mark.parametrize("specs", [
    [],
    [LayerSpec(3, 4, "tanh")],                                 # last layer not linear
    [LayerSpec(3, 4, "tanh"), LayerSpec(5, 2, "linear")],      # broken chain
    [LayerSpec(0, 2, "linear")],
    [LayerSpec(3, 2, "sigmoid")],
])
def test_init_params_rejects_bad_specs(specs):
    with pytest.raises(InvalidSpec):
        init_params(specs, SeededRng(0))


def test_rmsprop_zero_gradient():
    p = random_net(4)
    before = p.copy()
    state = RmspropState.for_params(p, 0.004)
    for acc in state.accumulators:
        acc[...] = 2.0
    rmsprop_step(p, p.zeros_like(), state)
    assert p.equals(before)
    assert all(np.all(acc == 2.0 * 0.9) for acc in state.accumulators)


def test_rmsprop_scalar_step():
    p = single_layer([[1.0]], [0.0])
    g = single_layer([[1.0]], [0.0])
    state = RmspropState.for_params(p, 0.004, decay=0.9, epsilon=1e-8)
    rmsprop_step(p, g, state)
    assert state.accumulators[0][0, 0] == pytest.approx(0.1, abs=1e-16)
    assert p.weights[0][0, 0] == pytest.approx(1 - 0.004 / (np.sqrt(0.1) + 1e-8), abs=1e-15)


def test_rmsprop_accumulator_rises_toward_g_squared():
    p = single_layer([[1.0]], [0.0])
    g = single_layer([[3.0]], [0.0])
    state = RmspropState.for_params(p, 0.004)
    seen = []
    for _ in range(3):
        rmsprop_step(p, g, state)
        seen.append(state.accumulators[0][0, 0])
    assert seen[0] < seen[1] < seen[2] < 9.0


def test_rmsprop_zero_lr_is_noop():
    p = random_net(5)
    before = p.copy()
    grads = random_net(6)
    rmsprop_step(p, grads, RmspropState.for_params(p, 0.0))
    assert p.equals(before)


def test_rmsprop_shape_mismatch():
    p = random_net(7)
    other = random_net(8, dims=(5, 3, 3, 4))
    with pytest.raises(ShapeMismatch):
        rmsprop_step(p, other, RmspropState.for_params(p, 0.01))


def test_checkpoint_round_trip_is_exact():
    p = random_net(10)
    q = load_model(save_model(p))
    assert q.equals(p)
    assert save_model(q) == save_model(p)


def test_checkpoint_layout_is_little_endian_f64():
    p = single_layer([[1.5, -2.0]], [0.25, 4.0])
    blob = save_model(p)
    assert blob[:8] == b"SSHFTCKP"
    assert np.frombuffer(blob[-32:], dtype="<f8").tolist() == [1.5, -2.0, 0.25, 4.0]


@pytest.mark.parametrize("cut", [0, 5, 12, 20, 40, -1])
def test_truncated_checkpoint(cut):
    blob = save_model(random_net(11))
    with pytest.raises(CorruptCheckpoint) as info:
        load_model(blob[:cut])
    assert info.value.offset is not None


def test_checkpoint_trailing_bytes():
    with pytest.raises(CorruptCheckpoint):
        load_model(save_model(random_net(12)) + b"\0")
