import math

import numpy as np
import pytest

from qpf import nn
from qpf.nn import ModelParams, TrainConfig


def random_params(rng, n_in=16, hidden=4, classes=3, activation="identity", scale=1.0):
    return ModelParams(
        rng.normal(0, scale, (hidden, n_in)),
        rng.normal(0, scale, hidden),
        rng.normal(0, scale, (classes, hidden)),
        rng.normal(0, scale, classes),
        activation=activation,
    )


def finite_difference(params, x, y, h=1e-5):
    grads = []
    for k, arr in enumerate(params.arrays):
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            plus, minus = params.copy(), params.copy()
            plus.arrays[k][idx] += h
            minus.arrays[k][idx] -= h
            g[idx] = (nn.loss_and_grad(plus, x, y)[0] - nn.loss_and_grad(minus, x, y)[0]) / (2 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric):
    """Worst norm-wise relative error over the parameter tensors.

    Element-wise ratios are meaningless for entries below the ~1e-11
    round-off floor of a step-1e-5 central difference.
    """
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = max(np.linalg.norm(a), np.linalg.norm(n))
        if scale > 0:
            worst = max(worst, float(np.linalg.norm(a - n) / scale))
    return worst


def test_zero_params_uniform():
    p = ModelParams(np.zeros((5, 8)), np.zeros(5), np.zeros((10, 5)), np.zeros(10))
    np.testing.assert_allclose(nn.forward(p, np.ones(8)), np.full(10, 0.1), atol=1e-15)


def test_softmax_no_overflow():
    p = ModelParams(np.eye(2), np.zeros(2), np.zeros((3, 2)), np.array([1000.0, 0.0, 0.0]))
    probs = nn.forward(p, np.zeros(2))
    assert np.all(np.isfinite(probs))
    assert probs[0] == pytest.approx(1.0, abs=1e-15)
    loss, grads = nn.loss_and_grad(p, np.zeros((1, 2)), np.array([1]))
    assert loss == pytest.approx(1000.0)
    assert all(np.all(np.isfinite(g)) for g in grads.arrays)


@pytest.mark.parametrize("activation", nn.ACTIVATIONS)
def test_softmax_sums_to_one(activation):
    rng = np.random.default_rng(0)
    for _ in range(20):
        p = random_params(rng, activation=activation, scale=3.0)
        probs = nn.forward(p, rng.normal(size=(7, 16)))
        assert np.all(probs >= 0)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12, rtol=0)


def test_uniform_loss_is_log_classes():
    p = ModelParams(np.zeros((3, 6)), np.zeros(3), np.zeros((47, 3)), np.zeros(47))
    rng = np.random.default_rng(1)
    loss, _ = nn.loss_and_grad(p, rng.random((9, 6)), rng.integers(0, 47, 9))
    assert abs(loss - math.log(47)) < 1e-9


@pytest.mark.parametrize("activation", nn.ACTIVATIONS)
def test_gradient_single_example(activation):
    rng = np.random.default_rng(2)
    p = random_params(rng, activation=activation)
    x, y = rng.normal(size=(1, 16)), np.array([2])
    _, g = nn.loss_and_grad(p, x, y)
    assert max_relative_error(g.arrays, finite_difference(p, x, y)) < 1e-5


def test_gradient_batch_identity():
    rng = np.random.default_rng(3)
    p = random_params(rng, n_in=6, hidden=5, classes=4)
    x, y = rng.normal(size=(8, 6)), rng.integers(0, 4, 8)
    _, g = nn.loss_and_grad(p, x, y)
    assert max_relative_error(g.arrays, finite_difference(p, x, y)) < 1e-5


def test_duplicate_example_mean_invariance():
    rng = np.random.default_rng(4)
    p = random_params(rng)
    x, y = rng.normal(size=(1, 16)), np.array([1])
    l1, g1 = nn.loss_and_grad(p, x, y)
    l2, g2 = nn.loss_and_grad(p, np.vstack([x, x]), np.array([1, 1]))
    assert l1 == pytest.approx(l2, rel=1e-14)
    for a, b in zip(g1.arrays, g2.arrays):
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-15)


def test_loss_errors():
    p = random_params(np.random.default_rng(0))
    with pytest.raises(ValueError):
        nn.loss_and_grad(p, np.zeros((1, 16)), np.array([3]))
    with pytest.raises(ValueError):
        nn.loss_and_grad(p, np.zeros((0, 16)), np.array([], dtype=int))
    with pytest.raises(ValueError):
        nn.forward(p, np.zeros(15))


def _adam_scalar(p, grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
    return p


def _const(params, value):
    return params.like([np.full_like(a, value) for a in params.arrays])


def test_adam_zero_gradient():
    cfg = TrainConfig()
    p = nn.init_params(4, 3, TrainConfig(hidden=2))
    state = nn.AdamState.zeros_like(p)
    new, state2 = nn.adam_step(p, _const(p, 0.0), state, cfg)
    assert state2.t == 1
    for a, b in zip(p.arrays, new.arrays):
        np.testing.assert_array_equal(a, b)


def test_adam_matches_scalar_oracle():
    cfg = TrainConfig(learning_rate=0.01)
    p = nn.init_params(3, 2, TrainConfig(hidden=2, seed=1))
    state = nn.AdamState.zeros_like(p)
    seq = [0.5, 0.5, -0.2, 1.3, 0.0]
    start = p.W1[0, 0]
    for g in seq:
        p, state = nn.adam_step(p, _const(p, g), state, cfg)
    assert p.W1[0, 0] == pytest.approx(_adam_scalar(start, seq, lr=0.01), abs=1e-15)
    # first step from zero moments is lr * sign(g) up to epsilon
    q = nn.init_params(3, 2, TrainConfig(hidden=2, seed=1))
    q2, _ = nn.adam_step(q, _const(q, 0.5), nn.AdamState.zeros_like(q), cfg)
    np.testing.assert_allclose(q2.b2 - q.b2, -0.01 * 0.5 / (0.5 + 1e-8), rtol=1e-12)


def test_adam_elementwise_symmetry():
    p = ModelParams(np.zeros((1, 2)), np.zeros(1), np.zeros((2, 1)), np.zeros(2))
    g = ModelParams(np.array([[0.3, 0.3]]), np.zeros(1), np.zeros((2, 1)), np.zeros(2))
    new, _ = nn.adam_step(p, g, nn.AdamState.zeros_like(p), TrainConfig())
    assert new.W1[0, 0] == new.W1[0, 1] != 0


def test_adam_rejects_nonfinite():
    p = nn.init_params(2, 2, TrainConfig(hidden=1))
    with pytest.raises(FloatingPointError):
        nn.adam_step(p, _const(p, float("nan")), nn.AdamState.zeros_like(p), TrainConfig())


def test_config_defaults_and_validation():
    cfg = TrainConfig()
    assert (cfg.batch_size, cfg.hidden, cfg.epochs, cfg.learning_rate) == (128, 100, 10, 1e-3)
    assert (cfg.beta1, cfg.beta2, cfg.epsilon) == (0.9, 0.999, 1e-8)
    for bad in ({"batch_size": 0}, {"beta1": 1.0}, {"epsilon": 0}, {"activation": "tanh"}, {"learning_rate": -1}):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def _toy(n=10, dim=16, classes=10, seed=0):
    rng = np.random.default_rng(seed)
    return rng.random((n, dim)), np.arange(n) % classes


@pytest.mark.parametrize("activation", nn.ACTIVATIONS)
def test_overfits_toy_set(activation):
    x, y = _toy()
    cfg = TrainConfig(hidden=32, epochs=100, learning_rate=0.01, activation=activation)
    res = nn.train(x, y, 10, cfg)
    assert nn.evaluate(res.params, x, y) == 1.0


def test_epoch_loss_decreases():
    x, y = _toy(n=300, classes=3, seed=2)
    res = nn.train(x, y, 3, TrainConfig(hidden=8, epochs=6, batch_size=32))
    assert all(b < a for a, b in zip(res.epoch_losses, res.epoch_losses[1:]))


def test_training_deterministic():
    x, y = _toy(n=200, classes=4, seed=5)
    cfg = TrainConfig(hidden=6, epochs=3, batch_size=16, eval_every=3, seed=42)
    a = nn.train(x, y, 4, cfg, x, y)
    b = nn.train(x, y, 4, cfg, x, y)
    assert a.metrics == b.metrics
    for p, q in zip(a.params.arrays, b.params.arrays):
        assert p.tobytes() == q.tobytes()
    c = nn.train(x, y, 4, nn.with_seed(cfg, 43), x, y)
    assert c.params.W1.tobytes() != a.params.W1.tobytes()


def test_partial_batch_kept_and_cadence():
    x, y = _toy(n=130, classes=2)
    res = nn.train(x, y, 2, TrainConfig(hidden=3, epochs=2, eval_every=3), x, y)
    # 130 samples at batch 128 -> 2 iterations per epoch, final row added at iteration 4
    assert [m.iteration for m in res.metrics] == [3, 4]
    assert [m.epoch for m in res.metrics] == [2, 2]


def test_train_empty():
    with pytest.raises(ValueError):
        nn.train(np.zeros((0, 4)), np.zeros(0, int), 2)


def test_evaluate_examples():
    x = np.eye(10)
    y = np.arange(10)
    always0 = ModelParams(np.zeros((2, 10)), np.zeros(2), np.zeros((10, 2)), np.eye(10)[0])
    assert nn.evaluate(always0, x, y) == pytest.approx(0.1)
    perfect = ModelParams(np.eye(10), np.zeros(10), np.eye(10), np.zeros(10))
    assert nn.evaluate(perfect, x, y) == 1.0
    tie = ModelParams(np.zeros((2, 10)), np.zeros(2), np.zeros((10, 2)), np.zeros(10))
    np.testing.assert_array_equal(nn.predict(tie, x), 0)


def test_evaluate_scale_invariance():
    rng = np.random.default_rng(8)
    p = random_params(rng, n_in=12, hidden=6, classes=5)
    x, y = rng.normal(size=(200, 12)), rng.integers(0, 5, 200)
    base = nn.evaluate(p, x, y)
    for c in (0.5, 3.0, 17.0):
        scaled = ModelParams(p.W1, p.b1, p.W2 * c, p.b2 * c)
        np.testing.assert_array_equal(nn.predict(scaled, x), nn.predict(p, x))
        assert nn.evaluate(scaled, x, y) == base


def test_param_count_independent_of_features():
    cfg = TrainConfig()
    counts = {nn.init_params(28 * 28, 10, cfg).n_params for _ in range(3)}
    assert counts == {100 * 784 + 100 + 10 * 100 + 10}
