import logging
import numpy as np
import pandas as pd
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from concurrent.futures import Executor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

from .errors import ConfigurationError, ContractViolation, SolverError
from .partition import OverlapPartition
from .problems import PoissonProblem

ORACLE_COLUMNS = ["iter", "energy_error", "ratio"]

# Errors below this fraction of the initial error are treated as round-off
ROUND_OFF_FLOOR = 1e-10

# Lower clamp for a fitted C0
MIN_C0 = 1e-12


@dataclass(frozen=True)
class FdGrid:
    dim: int
    nodes: int  # per axis, boundary nodes included
    h: float
    axes: List[np.ndarray]
    points: np.ndarray  # (nodes**dim, d), "ij" ordering
    boundary: np.ndarray  # (nodes**dim,) Dirichlet flags

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.nodes,) * self.dim

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)


def make_grid(problem: PoissonProblem, nodes: int) -> FdGrid:
    """Uniform grid with the same node count on every axis"""
    if nodes < 3:
        raise ConfigurationError(f"grid needs >= 3 nodes per axis, got {nodes}")
    sides = problem.upper_array - problem.lower_array
    if not np.allclose(sides, sides[0]):
        raise ConfigurationError(f"oracle grids need equal sides, got {sides}")

    axes = [np.linspace(lo, hi, nodes) for lo, hi in zip(problem.lower, problem.upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.column_stack([m.ravel() for m in mesh])

    index = np.indices((nodes,) * problem.dim).reshape(problem.dim, -1).T
    boundary = np.any((index == 0) | (index == nodes - 1), axis=1)

    return FdGrid(
        dim=problem.dim,
        nodes=int(nodes),
        h=float(sides[0] / (nodes - 1)),
        axes=axes,
        points=points,
        boundary=boundary,
    )


def _second_difference(n: int, h: float) -> sp.csr_matrix:
    return sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n), format="csr") / h ** 2


def negative_laplacian(grid: FdGrid) -> sp.csr_matrix:
    """3-point / 5-point -Laplacian on every node; only interior rows are meaningful"""
    D = _second_difference(grid.nodes, grid.h)
    if grid.dim == 1:
        return D
    eye = sp.identity(grid.nodes, format="csr")
    return (sp.kron(D, eye) + sp.kron(eye, D)).tocsr()


def assemble(problem: PoissonProblem, grid: FdGrid) -> Tuple[sp.csc_matrix, np.ndarray]:
    """Interior system A u_I = b with the Dirichlet data moved to the right-hand side"""
    L = negative_laplacian(grid)
    inner, outer = grid.interior, np.flatnonzero(grid.boundary)
    rows = L[inner]
    A = rows[:, inner].tocsc()
    g = problem.g(grid.points[outer])
    b = problem.f(grid.points[inner]) - rows[:, outer] @ g
    return A, b


def _factor(A: sp.spmatrix) -> spla.SuperLU:
    try:
        return spla.splu(sp.csc_matrix(A))
    except RuntimeError as e:
        raise SolverError(f"factorization failed: {e}") from e


def fd_solve(problem: PoissonProblem, grid: FdGrid) -> np.ndarray:
    """Direct solve of the discrete Dirichlet problem; returns values on every node"""
    A, b = assemble(problem, grid)
    u_inner = _factor(A).solve(b)

    residual = np.max(np.abs(A @ u_inner - b))
    scale = spla.norm(A, np.inf) * np.max(np.abs(u_inner), initial=0.0) + np.max(np.abs(b), initial=0.0)
    if not np.isfinite(residual) or residual > 1e-10 * max(scale, 1.0):
        raise SolverError(f"direct solve residual {residual:.3e} too large")

    u = np.empty(len(grid.points))
    u[grid.interior] = u_inner
    u[grid.boundary] = problem.g(grid.points[grid.boundary])
    return u


def energy_norm(grid: FdGrid, values: np.ndarray) -> float:
    """sqrt(a_h(v, v)): h^d-weighted squared forward differences over all axes"""
    v = np.asarray(values).reshape(grid.shape)
    total = sum(np.sum(np.diff(v, axis=k) ** 2) for k in range(grid.dim))
    return float(np.sqrt(grid.h ** grid.dim / grid.h ** 2 * total))


# ──────────────────────────────────────────────────────────────
# Subdomains and coarse space
# ──────────────────────────────────────────────────────────────

def snap_boxes(grid: FdGrid, partition: OverlapPartition) -> List[np.ndarray]:
    """
    Interior unknowns (indices into grid.interior) strictly inside each box,
    after snapping box edges to the nearest grid nodes
    """
    if partition.dim != grid.dim:
        raise ConfigurationError(f"{partition.dim}D partition on a {grid.dim}D grid")
    origin = np.array([axis[0] for axis in grid.axes])
    position = np.full(len(grid.points), -1)
    position[grid.interior] = np.arange(len(grid.interior))
    node_index = np.indices(grid.shape).reshape(grid.dim, -1).T

    subdomains = []
    for i in range(partition.n_boxes):
        lo, hi = partition.box(i)
        first = np.rint((lo - origin) / grid.h).astype(int)
        last = np.rint((hi - origin) / grid.h).astype(int)
        inside = np.all((node_index > first) & (node_index < last), axis=1) & ~grid.boundary
        unknowns = position[inside]
        if unknowns.size == 0:
            raise ConfigurationError(
                f"subdomain {i} has no interior grid nodes after snapping (grid too coarse for the partition)"
            )
        subdomains.append(unknowns)

    covered = np.zeros(len(grid.interior), dtype=bool)
    for unknowns in subdomains:
        covered[unknowns] = True
    if not np.all(covered):
        raise ConfigurationError(
            f"snapped partition leaves {int((~covered).sum())} interior grid nodes uncovered"
        )
    return subdomains


def _hat_matrix(fine: np.ndarray, coarse: np.ndarray, spacing: float) -> sp.csr_matrix:
    weights = np.maximum(0.0, 1.0 - np.abs(fine[:, None] - coarse[None, :]) / spacing)
    return sp.csr_matrix(weights)


def prolongation(grid: FdGrid, coarse_nodes: int) -> sp.csr_matrix:
    """
    Linear (1D) / bilinear (2D) interpolation from coarse_nodes interior coarse
    nodes per axis to the fine interior unknowns
    """
    if coarse_nodes < 1:
        raise ConfigurationError(f"coarse_nodes must be >= 1, got {coarse_nodes}")
    lo, hi = grid.axes[0][0], grid.axes[0][-1]
    spacing = (hi - lo) / (coarse_nodes + 1)
    P_axis = [
        _hat_matrix(axis[1:-1], np.linspace(axis[0], axis[-1], coarse_nodes + 2)[1:-1], spacing)
        for axis in grid.axes
    ]
    P = P_axis[0]
    for P_k in P_axis[1:]:
        P = sp.kron(P, P_k)
    return sp.csr_matrix(P)


class AdditiveSchwarz:
    """
    Exact subdomain solves on overlapping index sets plus an optional Galerkin
    coarse correction P (P^T A P)^-1 P^T
    """

    def __init__(self, A: sp.spmatrix, index_lists: Sequence[np.ndarray], P: Optional[sp.spmatrix] = None):
        if A.shape[0] != A.shape[1]:
            raise ContractViolation("operator must be square")
        A = sp.csr_matrix(A)
        self.shape = A.shape
        self.index_lists = list(index_lists)
        self.LU = [_factor(A[idx, :][:, idx]) for idx in self.index_lists]
        self.P = None
        self.coarse_LU = None
        if P is not None:
            self.P = sp.csr_matrix(P)
            self.coarse_LU = _factor(self.P.T @ A @ self.P)

    def num_subdomains(self) -> int:
        return len(self.index_lists)

    def local_correction(self, i: int, residual: np.ndarray) -> np.ndarray:
        idx = self.index_lists[i]
        return self.LU[i].solve(residual[idx])

    def coarse_correction(self, residual: np.ndarray) -> np.ndarray:
        if self.coarse_LU is None:
            raise ContractViolation("no coarse space configured")
        return self.P @ self.coarse_LU.solve(self.P.T @ residual)

    def apply(self, residual: np.ndarray, executor: Optional[Executor] = None) -> np.ndarray:
        indices = range(self.num_subdomains())
        if executor is not None:
            pieces = list(executor.map(lambda i: self.local_correction(i, residual), indices))
        else:
            pieces = [self.local_correction(i, residual) for i in indices]

        y = np.zeros(self.shape[0])
        for idx, piece in zip(self.index_lists, pieces):
            y[idx] += piece
        if self.coarse_LU is not None:
            y += self.coarse_correction(residual)
        return y


# ──────────────────────────────────────────────────────────────
# Oracle iteration
# ──────────────────────────────────────────────────────────────

def fd_schwarz_run(
    problem: PoissonProblem,
    partition: OverlapPartition,
    grid: FdGrid,
    tau: float,
    iters: int,
    level: str = "one",
    coarse_nodes: Optional[int] = None,
    check_tau: bool = True,
    executor: Optional[Executor] = None,
) -> pd.DataFrame:
    """
    u <- u + tau * (sum_i R_i^T A_i^-1 R_i + [P A_H^-1 P^T]) (b - A u), starting
    from u = 0 inside and g on the boundary. Each local term is the subdomain
    Dirichlet solve with data from the current iterate, minus the iterate.
    History: energy error against fd_solve and its per-iteration ratio.
    """
    if level not in ("one", "two"):
        raise ConfigurationError(f"level must be 'one' or 'two', got '{level}'")
    if iters < 0:
        raise ConfigurationError(f"iters must be >= 0, got {iters}")
    if check_tau and not (0 < tau <= 1.0 / partition.Nc + 1e-9):
        raise ConfigurationError(f"tau={tau} violates 0 < tau <= 1/Nc = {1.0 / partition.Nc:.6g}")
    if not check_tau and tau < 0:
        raise ConfigurationError(f"tau must be >= 0, got {tau}")

    A, b = assemble(problem, grid)
    subdomains = snap_boxes(grid, partition)
    P = None
    if level == "two":
        P = prolongation(grid, coarse_nodes or partition.per_axis)
    schwarz = AdditiveSchwarz(A, subdomains, P)

    reference = fd_solve(problem, grid)
    inner = grid.interior
    u = np.zeros(len(inner))

    def error_of(u_inner):
        full = np.zeros(len(grid.points))
        full[inner] = reference[inner] - u_inner
        return energy_norm(grid, full)

    errors = [error_of(u)]
    for n in range(iters):
        u = u + tau * schwarz.apply(b - A @ u, executor)
        errors.append(error_of(u))

    errors = np.array(errors)
    ratios = np.full(len(errors), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios[1:] = errors[1:] / errors[:-1]

    history = pd.DataFrame({"iter": np.arange(len(errors)), "energy_error": errors, "ratio": ratios})
    return history[ORACLE_COLUMNS]


# ──────────────────────────────────────────────────────────────
# Convergence bounds
# ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class RateBound:
    C0: float
    Nc: int
    tau: float
    level: str = "one"


def _check_bound_inputs(C0: float, Nc: int, level: str):
    if not C0 > 0:
        raise ConfigurationError(f"C0 must be positive, got {C0}")
    if Nc < 1:
        raise ConfigurationError(f"Nc must be >= 1, got {Nc}")
    if level not in ("one", "two"):
        raise ConfigurationError(f"level must be 'one' or 'two', got '{level}'")


def _quadratic_factor(Nc: int, level: str) -> float:
    # two-level: ||E||_2 <= Nc plus the coarse term
    return float(Nc ** 2) if level == "one" else 2.0 * (Nc ** 2 + 1)


def rate_bound(b: RateBound) -> float:
    """Error reduction factor R(tau) for the squared energy norm"""
    _check_bound_inputs(b.C0, b.Nc, b.level)
    if b.tau < 0:
        raise ConfigurationError(f"tau must be >= 0, got {b.tau}")
    if b.tau > 1.0 / b.Nc:
        logging.warning(f"tau={b.tau} exceeds 1/Nc={1.0 / b.Nc:.6g}; the bound is outside its range")
    return 1.0 - 2.0 * b.tau / (2.0 + b.C0) + _quadratic_factor(b.Nc, b.level) * b.tau ** 2


def optimal_tau(C0: float, Nc: int, level: str = "one") -> Tuple[float, float]:
    """Minimizer of R(tau) and the minimum value"""
    _check_bound_inputs(C0, Nc, level)
    q = _quadratic_factor(Nc, level)
    return 1.0 / (q * (2.0 + C0)), 1.0 - 1.0 / (q * (2.0 + C0) ** 2)


def estimate_c0(Nc: int, N: int, H_over_delta: float, C: float = 1.0) -> float:
    """C0 ~ C Nc (2 + (N + 1) H / delta) from a partition-of-unity construction"""
    if Nc < 1 or N < 1 or H_over_delta <= 0 or C <= 0:
        raise ConfigurationError("estimate_c0 needs Nc, N >= 1 and positive H/delta, C")
    return C * Nc * (2.0 + (N + 1) * H_over_delta)


def asymptotic_min_rate(Nc: int, N: int, H_over_delta: float) -> float:
    """Large-N behavior of min R: 1 - 1 / (Nc^4 N^2 (H/delta)^2)"""
    if Nc < 1 or N < 1 or H_over_delta <= 0:
        raise ConfigurationError("asymptotic_min_rate needs Nc, N >= 1 and positive H/delta")
    return 1.0 - 1.0 / (Nc ** 4 * N ** 2 * H_over_delta ** 2)


def fit_c0(observed_ratio: float, tau: float, Nc: int, level: str = "one") -> float:
    """
    Smallest C0 > 0 with R(tau) >= observed_ratio**2. The bound is stated for
    the squared energy norm while histories store the norm itself.
    """
    if not 0 <= observed_ratio:
        raise ConfigurationError(f"observed ratio must be >= 0, got {observed_ratio}")
    if not tau > 0:
        raise ConfigurationError(f"tau must be positive, got {tau}")
    _check_bound_inputs(1.0, Nc, level)
    slack = 1.0 + _quadratic_factor(Nc, level) * tau ** 2 - observed_ratio ** 2
    if slack <= 0:
        # R(tau) >= observed^2 for every C0
        return MIN_C0
    return max(2.0 * tau / slack - 2.0, MIN_C0)


def asymptotic_rate(history: Union[pd.DataFrame, Sequence[float]], tail: int = 10) -> float:
    """
    Geometric-mean error ratio over the last `tail` iterations still above the
    round-off floor (ROUND_OFF_FLOOR times the initial error)
    """
    if isinstance(history, pd.DataFrame):
        errors = history["energy_error"].to_numpy(dtype=float)
    else:
        errors = np.asarray(history, dtype=float)
    if tail < 1:
        raise ConfigurationError(f"tail must be >= 1, got {tail}")
    if len(errors) < 2 or not errors[0] > 0:
        return float("nan")

    above = errors > ROUND_OFF_FLOOR * errors[0]
    # the leading run above the floor
    stop = len(errors) if np.all(above) else int(np.argmin(above))
    usable = errors[:stop]
    if len(usable) < 2:
        return float("nan")
    span = min(tail, len(usable) - 1)
    return float((usable[-1] / usable[-1 - span]) ** (1.0 / span))
