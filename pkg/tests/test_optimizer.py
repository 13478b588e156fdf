import logging

import numpy as np
import pytest

from schwarz_pinn.errors import ConfigurationError, ContractViolation
from schwarz_pinn.neural_core import CollocationBatch, MlpNet, evaluate_many, init_net, laplacian_many, loss_and_grad
from schwarz_pinn.optimizer import LEARNING_RATE, AdamState, adam_step, fresh_state, train

SMOOTH_X = np.linspace(-0.95, 0.95, 40).reshape(-1, 1)
SMOOTH_BATCH = CollocationBatch(
    interior_points=SMOOTH_X,
    interior_rhs=np.pi ** 2 * np.sin(np.pi * SMOOTH_X[:, 0]),
    boundary_points=np.array([[-1.0], [1.0]]),
    boundary_targets=np.zeros(2),
)


def test_first_step_is_signed_learning_rate():
    state = fresh_state(3)
    grad = np.array([2.0, -0.5, 1e-3])
    state, params = adam_step(state, np.zeros(3), grad)
    assert state.t == 1
    # m_hat = g and v_hat = g^2 after one step
    assert params == pytest.approx(-LEARNING_RATE * np.sign(grad), rel=1e-4)


def test_zero_gradient_keeps_parameters():
    state, params = adam_step(fresh_state(2), np.array([1.0, -1.0]), np.zeros(2))
    assert params.tolist() == [1.0, -1.0]


def test_shape_mismatch():
    with pytest.raises(ContractViolation):
        adam_step(fresh_state(2), np.zeros(3), np.zeros(3))


def test_state_is_not_mutated():
    state = fresh_state(2)
    adam_step(state, np.zeros(2), np.ones(2))
    assert isinstance(state, AdamState)
    assert state.t == 0 and not state.m.any()


def test_bad_learning_rate():
    with pytest.raises(ConfigurationError):
        fresh_state(2, lr=0.0)


def test_train_reduces_loss():
    net = init_net(0, 1, 8)
    start = loss_and_grad(net, SMOOTH_BATCH)[0]
    trained, history = train(net, SMOOTH_BATCH, 500, lr=0.01)
    assert history.shape == (500,)
    assert history[0] == pytest.approx(start)
    assert loss_and_grad(trained, SMOOTH_BATCH)[0] < 0.5 * start


def test_train_is_deterministic():
    net = init_net(3, 1, 8)
    a, ha = train(net, SMOOTH_BATCH, 50)
    b, hb = train(net, SMOOTH_BATCH, 50)
    assert np.array_equal(a.to_vector(), b.to_vector())
    assert np.array_equal(ha, hb)


def test_callback_schedule():
    seen = []
    train(init_net(0, 1, 4), SMOOTH_BATCH, 10, callback=lambda n, net, loss: seen.append(n), callback_every=4)
    assert seen == [4, 8]


def test_zero_epochs_rejected():
    with pytest.raises(ConfigurationError):
        train(init_net(0, 1, 4), SMOOTH_BATCH, 0)


def test_adam_minimizes_a_parabola():
    state, theta = fresh_state(1), np.array([1.0])
    for _ in range(5000):
        state, theta = adam_step(state, theta, 2.0 * theta)
    assert abs(theta[0]) < 1e-3
    assert state.t == 5000


def test_one_epoch_is_one_adam_step():
    net = init_net(5, 1, 6)
    theta = net.to_vector()
    _, expected = adam_step(fresh_state(theta.size), theta, loss_and_grad(net, SMOOTH_BATCH)[1])
    trained, history = train(net, SMOOTH_BATCH, 1)
    assert history.shape == (1,)
    assert np.array_equal(trained.to_vector(), expected)


def test_net_at_zero_loss_does_not_move():
    net = MlpNet(W1=np.array([[2 * np.pi], [np.pi]]), b1=np.array([0.0, 0.3]), w2=np.array([1.0, -0.5]), b2=0.2)
    x = np.linspace(-0.9, 0.9, 9).reshape(-1, 1)
    ends = np.array([[-1.0], [1.0]])
    # data taken from the net itself, so every residual is exactly zero
    batch = CollocationBatch(
        interior_points=x,
        interior_rhs=-laplacian_many(net, x),
        boundary_points=ends,
        boundary_targets=evaluate_many(net, ends),
    )
    trained, history = train(net, batch, 20)
    assert not history.any()
    assert np.array_equal(trained.to_vector(), net.to_vector())


def test_non_finite_training_is_reported(caplog):
    batch = CollocationBatch(
        interior_points=SMOOTH_X,
        interior_rhs=np.full(len(SMOOTH_X), np.inf),
        boundary_points=np.array([[-1.0], [1.0]]),
        boundary_targets=np.zeros(2),
    )
    with caplog.at_level(logging.WARNING), np.errstate(invalid="ignore", over="ignore"):
        trained, _ = train(init_net(0, 1, 4), batch, 2)
    assert not trained.is_finite()
    assert "Non-finite" in caplog.text


@pytest.mark.slow
def test_smooth_1d_baseline_loss():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1.0, 1.0, size=(98, 1))
    batch = CollocationBatch(
        interior_points=x,
        interior_rhs=4 * np.pi ** 2 * np.sin(2 * np.pi * x[:, 0]),
        boundary_points=np.array([[-1.0], [1.0]]),
        boundary_targets=np.zeros(2),
    )
    trained, history = train(init_net(0, 1, 35), batch, 10000)
    assert np.isfinite(history).all()
    assert loss_and_grad(trained, batch)[0] < 1e-3
