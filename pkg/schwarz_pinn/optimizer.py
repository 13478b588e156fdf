import logging
import numpy as np
from dataclasses import dataclass, replace
from typing import Callable, Optional, Tuple

from .errors import ConfigurationError, ContractViolation
from .neural_core import CollocationBatch, MlpNet, loss_and_grad

# Adam defaults; only the learning rate is fixed by the experiments.
BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8
LEARNING_RATE = 0.001


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = LEARNING_RATE
    beta1: float = BETA1
    beta2: float = BETA2
    eps: float = EPSILON


def fresh_state(n_params: int, lr: float = LEARNING_RATE) -> AdamState:
    if lr <= 0:
        raise ConfigurationError(f"learning rate must be positive, got {lr}")
    return AdamState(m=np.zeros(n_params), v=np.zeros(n_params), lr=lr)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray) -> Tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam update; returns new state and new parameters"""
    params = np.asarray(params, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise ContractViolation(
            f"shape mismatch: params {params.shape}, grad {grad.shape}, state {state.m.shape}"
        )

    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * (grad * grad)
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, m=m, v=v, t=t), new_params


def train(
    net: MlpNet,
    batch: CollocationBatch,
    epochs: int,
    lr: float = LEARNING_RATE,
    callback: Optional[Callable[[int, MlpNet, float], None]] = None,
    callback_every: int = 0,
) -> Tuple[MlpNet, np.ndarray]:
    """
    Full-batch Adam for a fixed number of epochs.

    Returns the trained net and the loss recorded at every epoch (before that
    epoch's step). callback(epochs_done, net, last_loss) fires every
    callback_every epochs when given.
    """
    if epochs < 1:
        raise ConfigurationError(f"epochs must be >= 1, got {epochs}")

    theta = net.to_vector()
    state = fresh_state(theta.size, lr)
    history = np.empty(epochs)

    for epoch in range(epochs):
        loss, grad = loss_and_grad(net, batch)
        history[epoch] = loss
        state, theta = adam_step(state, theta, grad)
        net = net.with_vector(theta)

        if callback is not None and callback_every > 0 and (epoch + 1) % callback_every == 0:
            callback(epoch + 1, net, loss)

    if not np.all(np.isfinite(history)) or not net.is_finite():
        logging.warning(f"Non-finite loss or parameters after training ({epochs} epochs, width {net.hidden_width})")

    return net, history
