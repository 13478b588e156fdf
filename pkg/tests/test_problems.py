import numpy as np
import pytest

from schwarz_pinn.errors import ConfigurationError
from schwarz_pinn.problems import PROBLEMS, get_problem, high_contrast_2d, problem_dim

STEP = 1e-4


def fd_negative_laplacian(u, points, step=STEP):
    total = np.zeros(len(points))
    for k in range(points.shape[1]):
        e = np.zeros(points.shape[1])
        e[k] = step
        total -= (u(points + e) - 2.0 * u(points) + u(points - e)) / step ** 2
    return total


def interior_points(problem, n, seed):
    rng = np.random.default_rng(seed)
    lo, hi = problem.lower_array, problem.upper_array
    return rng.uniform(lo + 0.01, hi - 0.01, size=(n, problem.dim))


def boundary_points(problem, n, seed):
    rng = np.random.default_rng(seed)
    lo, hi = problem.lower_array, problem.upper_array
    points = rng.uniform(lo, hi, size=(n, problem.dim))
    axis = rng.integers(problem.dim, size=n)
    side = rng.integers(2, size=n)
    points[np.arange(n), axis] = np.where(side == 0, lo[axis], hi[axis])
    return points


@pytest.mark.parametrize("problem_id", sorted(PROBLEMS))
def test_forcing_matches_exact_solution(problem_id):
    problem = get_problem(problem_id)
    x = interior_points(problem, 1000, 0)
    f = problem.f(x)
    assert np.max(np.abs(fd_negative_laplacian(problem.exact, x) - f)) <= 1e-4 * np.max(np.abs(f))


@pytest.mark.parametrize("problem_id", sorted(PROBLEMS))
def test_boundary_data_matches_exact_solution(problem_id):
    problem = get_problem(problem_id)
    x = boundary_points(problem, 1000, 1)
    assert problem.on_boundary(x).all()
    assert problem.exact(x) == pytest.approx(problem.g(x), abs=1e-12)


def test_smooth_1d_values():
    problem = get_problem("smooth1d")
    assert problem.exact(np.array([[0.25]]))[0] == pytest.approx(1.0)
    assert problem.f(np.array([[0.25]]))[0] == pytest.approx(4 * np.pi ** 2)


def test_smooth_2d_values():
    problem = get_problem("smooth2d")
    assert problem.exact(np.array([[0.5, 0.5]]))[0] == pytest.approx(1.0)
    assert problem.f(np.array([[0.5, 0.5]]))[0] == pytest.approx(2 * np.pi ** 2)


def test_multiscale_amplitude():
    problem = get_problem("multiscale1d")
    # every high-frequency term vanishes at x = 0.5 except sin(pi/2)
    assert problem.exact(np.array([[0.5]]))[0] == pytest.approx(5.0, abs=1e-12)


def test_high_contrast_point_check():
    problem = high_contrast_2d(A=100.0, eps=0.05)
    x = np.array([[0.3, 0.7]])
    fd = fd_negative_laplacian(problem.exact, x, step=1e-5)[0]
    assert problem.f(x)[0] == pytest.approx(fd, rel=1e-4)
    assert problem.exact(np.array([[0.5, 0.2], [0.5, 0.9]])) == pytest.approx([0.0, 0.0], abs=1e-14)


def test_high_contrast_small_eps():
    problem = get_problem("highcontrast2d", A=100.0, eps=0.01)
    x = interior_points(problem, 1000, 2)
    f = problem.f(x)
    assert np.max(np.abs(fd_negative_laplacian(problem.exact, x, step=1e-5) - f)) <= 1e-4 * np.max(np.abs(f))


def test_bad_parameters():
    with pytest.raises(ConfigurationError):
        high_contrast_2d(eps=0.0)
    with pytest.raises(ConfigurationError):
        get_problem("smooth1d", eps=0.1)
    with pytest.raises(ConfigurationError):
        get_problem("poisson3d")


def test_problem_dim():
    assert problem_dim("multiscale1d") == 1
    assert problem_dim("highcontrast2d") == 2
