import numpy as np
from dataclasses import dataclass
from typing import Optional, Tuple

from .errors import ConfigurationError, ContractViolation

# Single hidden layer, sine activation:
#   U(x) = b2 + sum_k w2_k sin(W1_k . x + b1_k)
# so U, Laplacian and every parameter derivative have closed forms.


@dataclass(frozen=True)
class MlpNet:
    W1: np.ndarray  # (h, d)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (h,)
    b2: float

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden_width(self) -> int:
        return self.W1.shape[0]

    @property
    def parameter_count(self) -> int:
        h, d = self.W1.shape
        return h * d + h + h + 1

    def to_vector(self) -> np.ndarray:
        """Flatten parameters in the order W1, b1, w2, b2"""
        return np.concatenate([self.W1.ravel(), self.b1, self.w2, [self.b2]])

    def with_vector(self, theta: np.ndarray) -> "MlpNet":
        """Return a copy of this net carrying the flat parameter vector theta"""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.parameter_count,):
            raise ContractViolation(
                f"parameter vector has shape {theta.shape}, expected ({self.parameter_count},)"
            )
        h, d = self.W1.shape
        hd = h * d
        return MlpNet(
            W1=theta[:hd].reshape(h, d).copy(),
            b1=theta[hd:hd + h].copy(),
            w2=theta[hd + h:hd + 2 * h].copy(),
            b2=float(theta[-1]),
        )

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.to_vector())))


@dataclass(frozen=True)
class CollocationBatch:
    """
    Training points for one PINN solve.

    interior_rhs holds f(x); interior_offset, when present, holds the tabulated
    Laplacian of the previous iterate that the coarse problem adds to f.
    boundary_targets holds g(x) or the tabulated iterate value.
    """
    interior_points: np.ndarray  # (Ni, d)
    interior_rhs: np.ndarray  # (Ni,)
    boundary_points: np.ndarray  # (Nb, d)
    boundary_targets: np.ndarray  # (Nb,)
    interior_offset: Optional[np.ndarray] = None  # (Ni,)


def parameter_count(input_dim: int, hidden_width: int) -> int:
    """h*d + h + h + 1, i.e. 3h+1 in 1D and 4h+1 in 2D"""
    return hidden_width * input_dim + 2 * hidden_width + 1


def init_net(seed: int, input_dim: int, hidden_width: int) -> MlpNet:
    """
    Glorot-uniform weights per layer, zero biases, deterministic given seed
    """
    if input_dim not in (1, 2):
        raise ConfigurationError(f"input_dim must be 1 or 2, got {input_dim}")
    if hidden_width < 1:
        raise ConfigurationError(f"hidden_width must be >= 1, got {hidden_width}")

    rng = np.random.default_rng(seed)
    limit1 = np.sqrt(6.0 / (input_dim + hidden_width))
    limit2 = np.sqrt(6.0 / (hidden_width + 1))
    return MlpNet(
        W1=rng.uniform(-limit1, limit1, size=(hidden_width, input_dim)),
        b1=np.zeros(hidden_width),
        w2=rng.uniform(-limit2, limit2, size=hidden_width),
        b2=0.0,
    )


def _as_points(net: MlpNet, x) -> np.ndarray:
    points = np.atleast_2d(np.asarray(x, dtype=float))
    if net.input_dim == 1 and points.shape[0] == 1 and points.shape[1] != 1:
        # a flat list of 1D coordinates
        points = points.reshape(-1, 1)
    if points.shape[1] != net.input_dim:
        raise ContractViolation(
            f"points have {points.shape[1]} coordinates, net expects {net.input_dim}"
        )
    return points


def evaluate_many(net: MlpNet, points) -> np.ndarray:
    """U(x) at every row of points"""
    X = _as_points(net, points)
    return net.b2 + np.sin(X @ net.W1.T + net.b1) @ net.w2


def laplacian_many(net: MlpNet, points) -> np.ndarray:
    """Exact Laplacian at every row of points (sin'' = -sin)"""
    X = _as_points(net, points)
    norms = np.sum(net.W1 ** 2, axis=1)
    return -np.sin(X @ net.W1.T + net.b1) @ (net.w2 * norms)


def evaluate(net: MlpNet, x) -> float:
    return float(evaluate_many(net, np.reshape(np.asarray(x, dtype=float), (1, -1)))[0])


def laplacian(net: MlpNet, x) -> float:
    return float(laplacian_many(net, np.reshape(np.asarray(x, dtype=float), (1, -1)))[0])


def _check_batch(net: MlpNet, batch: CollocationBatch):
    if len(batch.interior_points) == 0:
        raise ContractViolation("collocation batch has no interior points")
    if len(batch.boundary_points) == 0:
        raise ContractViolation("collocation batch has no boundary points")
    if batch.interior_points.shape[1] != net.input_dim or batch.boundary_points.shape[1] != net.input_dim:
        raise ContractViolation("collocation batch dimension does not match the net")
    if batch.interior_rhs.shape != (len(batch.interior_points),):
        raise ContractViolation("interior_rhs must have one value per interior point")
    if batch.boundary_targets.shape != (len(batch.boundary_points),):
        raise ContractViolation("boundary_targets must have one value per boundary point")
    if batch.interior_offset is not None and batch.interior_offset.shape != batch.interior_rhs.shape:
        raise ContractViolation("interior_offset must have one value per interior point")


def loss_and_grad(net: MlpNet, batch: CollocationBatch) -> Tuple[float, np.ndarray]:
    """
    PINN loss mean((dU + f + offset)^2) + mean((U - target)^2) and its exact
    gradient, flattened in the MlpNet.to_vector order
    """
    _check_batch(net, batch)
    W1, b1, w2 = net.W1, net.b1, net.w2
    norms = np.sum(W1 ** 2, axis=1)

    # Interior residual
    Xi = batch.interior_points
    Zi = Xi @ W1.T + b1
    Si = np.sin(Zi)
    Ci = np.cos(Zi)
    residual = -Si @ (w2 * norms) + batch.interior_rhs
    if batch.interior_offset is not None:
        residual = residual + batch.interior_offset
    gr = 2.0 * residual / len(Xi)

    gS = gr @ Si
    gC = gr @ Ci
    grad_w2 = -gS * norms
    grad_b1 = -gC * w2 * norms
    grad_W1 = -w2[:, None] * (2.0 * W1 * gS[:, None] + norms[:, None] * (Ci.T @ (gr[:, None] * Xi)))

    # Boundary mismatch
    Xb = batch.boundary_points
    Zb = Xb @ W1.T + b1
    Sb = np.sin(Zb)
    Cb = np.cos(Zb)
    mismatch = net.b2 + Sb @ w2 - batch.boundary_targets
    gm = 2.0 * mismatch / len(Xb)

    grad_w2 = grad_w2 + gm @ Sb
    grad_b1 = grad_b1 + (gm @ Cb) * w2
    grad_W1 = grad_W1 + w2[:, None] * (Cb.T @ (gm[:, None] * Xb))
    grad_b2 = np.sum(gm)

    loss = float(np.mean(residual ** 2) + np.mean(mismatch ** 2))
    grad = np.concatenate([grad_W1.ravel(), grad_b1, grad_w2, [grad_b2]])
    return loss, grad
