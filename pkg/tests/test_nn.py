import numpy as np
import pytest

from modeswitch import nn
from modeswitch.nn import checkpoint


def rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b)))


def grad_check(net, x, mask=None, h=1e-5):
    """Max relative error between backprop and central differences of sum(w * out)."""
    rng = np.random.default_rng(0)
    w = rng.standard_normal(net.forward(x, mask).shape)
    net.forward(x, mask)
    net.backward(w)
    worst = 0.0
    for (key, p), (_, g) in zip(net.parameters(), list(net.gradients())):
        g = g.copy()
        num = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            up = np.sum(w * net.forward(x, mask))
            p[i] = old - h
            down = np.sum(w * net.forward(x, mask))
            p[i] = old
            num[i] = (up - down) / (2 * h)
        worst = max(worst, rel_err(g, num))
    return worst


def test_dense_stack_gradients(rng):
    net = nn.Network([nn.Dense(4, 6, "tanh", rng), nn.Dense(6, 5, "tanh", rng),
                      nn.Dense(5, 3, "linear", rng)], 4)
    assert grad_check(net, rng.standard_normal((7, 4))) < 1e-4


def test_conv_gap_gradients(rng):
    net = nn.Network([nn.Conv1D(3, 4, 3, "tanh", rng), nn.GlobalAvgPool(), nn.Dense(4, 2, "linear", rng)], 3)
    x = rng.standard_normal((3, 6, 3))
    mask = np.ones((3, 6))
    mask[1, 4:] = 0
    assert grad_check(net, x, mask) < 1e-4


def test_conv_last_step_gradients(rng):
    net = nn.Network([nn.Conv1D(2, 3, 5, "tanh", rng), nn.LastStepPool(), nn.Dense(3, 2, "linear", rng)], 2)
    x = rng.standard_normal((3, 7, 2))
    mask = np.ones((3, 7))
    mask[0, 3:] = 0
    assert grad_check(net, x, mask) < 1e-4


def test_lstm_gradients_with_padding(rng):
    net = nn.Network([nn.LSTM(3, 5, rng), nn.Dense(5, 2, "linear", rng)], 3)
    x = rng.standard_normal((3, 5, 3))
    mask = np.ones((3, 5))
    mask[2, 2:] = 0
    assert grad_check(net, x, mask) < 1e-4


def test_input_gradients(rng):
    net = nn.Network([nn.LSTM(2, 4, rng), nn.Dense(4, 1, "linear", rng)], 2)
    x = rng.standard_normal((2, 4, 2))
    net.forward(x)
    dx = net.backward(np.ones((2, 1)))
    num = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += 1e-5
        xm[i] -= 1e-5
        num[i] = (net.forward(xp).sum() - net.forward(xm).sum()) / 2e-5
    assert rel_err(dx, num) < 1e-4


def test_lstm_ignores_padding(rng):
    layer = nn.LSTM(2, 3, rng)
    x = rng.standard_normal((1, 4, 2))
    padded = np.concatenate([x, rng.standard_normal((1, 3, 2))], axis=1)
    mask = np.array([[1, 1, 1, 1, 0, 0, 0]], dtype=float)
    assert np.allclose(layer.forward(x), layer.forward(padded, mask))


def test_conv_examples():
    conv = nn.Conv1D(1, 1, 1, "linear")
    conv.params["W"][:] = 1.0
    x = np.arange(5.0).reshape(1, 5, 1)
    assert np.allclose(conv.forward(x), x)
    conv.params["W"][:] = 0.0
    conv.params["b"][:] = 2.5
    assert np.allclose(conv.forward(x), 2.5)
    avg = nn.Conv1D(1, 1, 3, "linear")
    avg.params["W"][:] = 1 / 3
    avg.params["b"][:] = 0
    out = avg.forward(x)[0, :, 0]
    assert np.allclose(out[1:4], [1, 2, 3])


def test_activations_and_pooling():
    assert np.allclose(nn.softmax(np.zeros(4)), 0.25)
    assert nn.leaky_relu(np.array(-1.0)) == pytest.approx(-0.01)
    assert np.allclose(nn.softmax(np.array([np.log(2), 0.0])), [2 / 3, 1 / 3])
    assert np.allclose(nn.relu(np.array([-1.0, 2.0])), [0, 2])
    pool = nn.GlobalAvgPool()
    assert np.allclose(pool.forward(np.full((1, 4, 2), 3.0)), 3.0)
    assert pool.forward(np.array([[[1.0], [2.0], [3.0]]]))[0, 0] == pytest.approx(2.0)
    x = np.random.default_rng(0).standard_normal((1, 6, 2))
    assert np.allclose(pool.forward(x), pool.forward(x[:, ::-1]))
    last = nn.LastStepPool()
    mask = np.array([[1, 1, 0.0]])
    assert np.allclose(last.forward(np.arange(3.0).reshape(1, 3, 1), mask), [[1.0]])


def test_losses():
    assert nn.cross_entropy(np.eye(4), np.eye(4)) == pytest.approx(0.0)
    assert nn.cross_entropy(np.full((1, 4), 0.25), np.eye(4)[:1]) == pytest.approx(np.log(4))
    x = np.arange(6.0)
    assert nn.mse(x, x) == 0
    loss, g = nn.softmax_cross_entropy(np.zeros((2, 4)), np.array([1, 2]))
    assert loss == pytest.approx(np.log(4))
    assert np.allclose(g.sum(axis=1), 0)


def test_sgd_zero_gradient_is_noop(rng):
    net = nn.Network([nn.Dense(3, 2, "relu", rng)], 3)
    before = net.get_weights()
    net.forward(rng.standard_normal((4, 3)))
    net.backward(np.zeros((4, 2)))
    nn.SGD(0.1).step(net)
    for a, b in zip(before, net.get_weights()):
        assert np.array_equal(a, b)


def _one_step(seed):
    rng = np.random.default_rng(seed)
    net = nn.Network([nn.Dense(3, 4, "relu", rng), nn.Dense(4, 1, "linear", rng)], 3)
    opt = nn.Adam(1e-2)
    x, y = rng.standard_normal((8, 3)), rng.standard_normal((8, 1))
    for _ in range(2):
        out = net.forward(x)
        net.backward(nn.mse_grad(out, y))
        opt.step(net)
    return net.get_weights()


def test_optimizer_steps_are_deterministic():
    for a, b in zip(_one_step(5), _one_step(5)):
        assert np.array_equal(a, b)


def test_nonfinite_loss_aborts():
    with pytest.raises(nn.TrainingDiverged):
        nn.optim.check_finite_loss(float("nan"))


def test_early_stopping_restores_best(rng):
    net = nn.Network([nn.Dense(2, 1, "linear", rng)], 2)
    stop = nn.EarlyStopping(patience=2, mode="min")
    best = net.get_weights()
    assert not stop.update(1.0, net, 0)
    net.set_weights([w + 1 for w in best])
    assert not stop.update(2.0, net, 1)
    assert stop.update(3.0, net, 2)
    stop.restore(net)
    assert all(np.array_equal(a, b) for a, b in zip(best, net.get_weights()))


def test_checkpoint_round_trip(tmp_path, rng):
    net = nn.Network([nn.Conv1D(5, 4, 3, "leaky_relu", rng), nn.GlobalAvgPool(),
                      nn.Dense(4, 3, "linear", rng)], 5)
    path = tmp_path / "net.ckpt"
    checkpoint.save(net, path, {"note": "x"})
    back, meta = checkpoint.load(path)
    assert meta == {"note": "x"}
    x = rng.standard_normal((2, 7, 5))
    assert np.array_equal(net.forward(x), back.forward(x))
    assert checkpoint.to_bytes(net, {"note": "x"}) == path.read_bytes()


def test_checkpoint_errors(tmp_path, rng):
    net = nn.Network([nn.Dense(2, 2, "linear", rng)], 2)
    data = checkpoint.to_bytes(net)
    with pytest.raises(checkpoint.CheckpointError, match="magic"):
        checkpoint.from_bytes(b"X" + data[1:])
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.from_bytes(data[:-3])
    bumped = data[:8] + (99).to_bytes(4, "little") + data[12:]
    with pytest.raises(checkpoint.CheckpointError, match="version"):
        checkpoint.from_bytes(bumped)


def test_set_weights_shape_mismatch(rng):
    net = nn.Network([nn.Dense(2, 2, "linear", rng)], 2)
    with pytest.raises(ValueError):
        net.set_weights([np.zeros((3, 2)), np.zeros(2)])
