import numpy as np
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

from .errors import ConfigurationError

# All callables take an (n, d) array of points and return an (n,) array.
PointFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PoissonProblem:
    """
    -Laplace(u) = f in an axis-aligned box, u = g on its boundary
    """
    name: str
    dim: int
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    f: PointFunction
    g: PointFunction
    exact: Optional[PointFunction] = None
    params: Dict[str, float] = field(default_factory=dict)

    @property
    def lower_array(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=float)

    @property
    def upper_array(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float)

    def contains(self, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.all((points >= self.lower_array - tol) & (points <= self.upper_array + tol), axis=1)

    def on_boundary(self, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        points = np.atleast_2d(points)
        near = (np.abs(points - self.lower_array) <= tol) | (np.abs(points - self.upper_array) <= tol)
        return np.any(near, axis=1)


def _zero(points: np.ndarray) -> np.ndarray:
    return np.zeros(len(points))


def smooth_1d() -> PoissonProblem:
    """u*(x) = sin(2 pi x) on (-1, 1)"""
    k = 2.0 * np.pi
    return PoissonProblem(
        name="smooth1d",
        dim=1,
        lower=(-1.0,),
        upper=(1.0,),
        f=lambda p: k ** 2 * np.sin(k * p[:, 0]),
        g=_zero,
        exact=lambda p: np.sin(k * p[:, 0]),
    )


# (amplitude, frequency multiple of pi)
MULTISCALE_TERMS = ((5.0, 1.0), (1.0, 8.0), (0.5, 16.0), (0.25, 32.0), (0.125, 64.0))


def multiscale_1d() -> PoissonProblem:
    """Five-term sine series with frequencies pi .. 64 pi on (-1, 1)"""

    def exact(p):
        return sum(a * np.sin(k * np.pi * p[:, 0]) for a, k in MULTISCALE_TERMS)

    def f(p):
        return sum(a * (k * np.pi) ** 2 * np.sin(k * np.pi * p[:, 0]) for a, k in MULTISCALE_TERMS)

    return PoissonProblem(
        name="multiscale1d", dim=1, lower=(-1.0,), upper=(1.0,), f=f, g=_zero, exact=exact
    )


def smooth_2d() -> PoissonProblem:
    """u*(x, y) = sin(pi x) sin(pi y) on the unit square"""
    pi = np.pi
    return PoissonProblem(
        name="smooth2d",
        dim=2,
        lower=(0.0, 0.0),
        upper=(1.0, 1.0),
        f=lambda p: 2.0 * pi ** 2 * np.sin(pi * p[:, 0]) * np.sin(pi * p[:, 1]),
        g=_zero,
        exact=lambda p: np.sin(pi * p[:, 0]) * np.sin(pi * p[:, 1]),
    )


def high_contrast_2d(A: float = 100.0, eps: float = 0.05) -> PoissonProblem:
    """
    u* = A x(1-x) y(1-y) sin((x-0.5)(y-0.5)/eps) on the unit square
    """
    if eps <= 0:
        raise ConfigurationError(f"eps must be positive, got {eps}")

    def exact(p):
        x, y = p[:, 0], p[:, 1]
        return A * x * (1 - x) * y * (1 - y) * np.sin((x - 0.5) * (y - 0.5) / eps)

    def f(p):
        x, y = p[:, 0], p[:, 1]
        px, qy = x * (1 - x), y * (1 - y)
        phi = (x - 0.5) * (y - 0.5) / eps
        phi_x = (y - 0.5) / eps
        phi_y = (x - 0.5) / eps
        s, c = np.sin(phi), np.cos(phi)
        # phi_xx = phi_yy = 0, p'' = q'' = -2
        u_xx = A * qy * (-2.0 * s + 2.0 * (1 - 2 * x) * phi_x * c - px * phi_x ** 2 * s)
        u_yy = A * px * (-2.0 * s + 2.0 * (1 - 2 * y) * phi_y * c - qy * phi_y ** 2 * s)
        return -(u_xx + u_yy)

    return PoissonProblem(
        name="highcontrast2d",
        dim=2,
        lower=(0.0, 0.0),
        upper=(1.0, 1.0),
        f=f,
        g=_zero,
        exact=exact,
        params={"A": float(A), "eps": float(eps)},
    )


PROBLEMS = {
    "smooth1d": smooth_1d,
    "multiscale1d": multiscale_1d,
    "smooth2d": smooth_2d,
    "highcontrast2d": high_contrast_2d,
}

# Extra keyword parameters each problem accepts
PROBLEM_PARAMS = {
    "smooth1d": (),
    "multiscale1d": (),
    "smooth2d": (),
    "highcontrast2d": ("A", "eps"),
}


def get_problem(problem_id: str, **params) -> PoissonProblem:
    """Build a catalog problem by CLI id"""
    if problem_id not in PROBLEMS:
        raise ConfigurationError(
            f"unknown problem id '{problem_id}', expected one of {sorted(PROBLEMS)}"
        )
    unknown = set(params) - set(PROBLEM_PARAMS[problem_id])
    if unknown:
        raise ConfigurationError(f"problem '{problem_id}' takes no parameters {sorted(unknown)}")
    return PROBLEMS[problem_id](**params)


def problem_dim(problem_id: str) -> int:
    return 1 if problem_id.endswith("1d") else 2
