import logging
import time
import numpy as np
import pandas as pd
from concurrent.futures import Executor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

from .errors import ConfigurationError, ContractViolation
from .neural_core import CollocationBatch, MlpNet, evaluate_many, init_net, laplacian_many
from .optimizer import LEARNING_RATE, train
from .partition import OverlapPartition, TrainingSets
from .problems import PoissonProblem

LEVELS = ("one", "two")
HISTORY_COLUMNS = ["iter", "rel_l2", "mean_local_loss", "coarse_loss"]

# Slack for tau * Nc <= 1 when tau is given as a rounded fraction
TAU_TOL = 1e-9


@dataclass(frozen=True)
class SchwarzConfig:
    tau: Optional[float] = None  # None -> 1 / Nc
    max_outer: int = 50
    epochs_per_solve: int = 10000
    coarse_epochs: Optional[int] = None  # None -> epochs_per_solve
    level: str = "one"
    warm_start: bool = True
    eval_grid: Optional[int] = None  # None -> 1001 (1D) / 101 (2D)
    stop_tol: float = 0.0
    local_width: int = 35
    coarse_width: int = 35
    learning_rate: float = LEARNING_RATE


@dataclass(frozen=True)
class IterateTable:
    """
    Tabulated U^(n) at the union of subdomain boundary points and, in two-level
    mode, the tabulated Laplacian of U^(n) at the coarse interior points
    """
    points: np.ndarray  # (M, d)
    values: np.ndarray  # (M,)
    pinned: np.ndarray  # (M,) True on the domain boundary
    counts: np.ndarray  # (M,) |s(x)|
    sub_index: List[np.ndarray]  # rows of points belonging to each subdomain boundary set
    interior_points: Optional[np.ndarray] = None  # (K, d)
    interior_laplacians: Optional[np.ndarray] = None  # (K,)
    interior_counts: Optional[np.ndarray] = None  # (K,)
    iteration: int = 0


@dataclass(frozen=True)
class SchwarzState:
    problem: PoissonProblem
    partition: OverlapPartition
    sets: TrainingSets
    config: SchwarzConfig
    tau: float
    seed: int
    local_nets: List[MlpNet]
    table: IterateTable
    coarse_net: Optional[MlpNet] = None
    local_losses: Optional[List[float]] = None
    coarse_loss: Optional[float] = None

    @property
    def iteration(self) -> int:
        return self.table.iteration


@dataclass
class RunReport:
    history: pd.DataFrame
    final_state: Optional[SchwarzState] = None
    net: Optional[MlpNet] = None
    snapshots: Dict[int, pd.DataFrame] = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def final_error(self) -> float:
        return float(self.history["rel_l2"].iloc[-1])


def derive_seed(seed: int, *stream: int) -> int:
    """Independent integer seed for one role (subdomain net, coarse net, ...)"""
    return int(np.random.SeedSequence([seed, *stream]).generate_state(1)[0])


def resolve_tau(config: SchwarzConfig, partition: OverlapPartition) -> float:
    if config.tau is None:
        return 1.0 / partition.Nc
    tau = float(config.tau)
    if not (tau > 0 and tau * partition.Nc <= 1 + TAU_TOL):
        raise ConfigurationError(
            f"tau={tau} violates 0 < tau <= 1/Nc = {1.0 / partition.Nc:.6g} (Nc={partition.Nc})"
        )
    return tau


def _validate_config(config: SchwarzConfig, sets: TrainingSets):
    if config.level not in LEVELS:
        raise ConfigurationError(f"level must be one of {LEVELS}, got '{config.level}'")
    if config.epochs_per_solve < 1:
        raise ConfigurationError(f"epochs_per_solve must be >= 1, got {config.epochs_per_solve}")
    if config.coarse_epochs is not None and config.coarse_epochs < 1:
        raise ConfigurationError(f"coarse_epochs must be >= 1, got {config.coarse_epochs}")
    if config.max_outer < 0:
        raise ConfigurationError(f"max_outer must be >= 0, got {config.max_outer}")
    if config.stop_tol < 0:
        raise ConfigurationError(f"stop_tol must be >= 0, got {config.stop_tol}")
    if config.level == "two" and (len(sets.coarse_interior) == 0 or len(sets.coarse_boundary) == 0):
        raise ConfigurationError("two-level mode needs coarse interior and boundary points")


# ──────────────────────────────────────────────────────────────
# Combined iterate
# ──────────────────────────────────────────────────────────────

def _combine(
    partition: OverlapPartition,
    local_nets: Sequence[MlpNet],
    coarse_net: Optional[MlpNet],
    points: np.ndarray,
    field_fn: Callable[[MlpNet, np.ndarray], np.ndarray],
) -> np.ndarray:
    member = partition.membership(points)
    counts = member.sum(axis=1)
    if np.any(counts == 0):
        raise ContractViolation("point outside every subdomain")

    total = np.zeros(len(points))
    for i, net in enumerate(local_nets):
        rows = np.flatnonzero(member[:, i])
        if rows.size:
            total[rows] += field_fn(net, points[rows])
    if coarse_net is not None:
        total += field_fn(coarse_net, points)
    return total / counts


def uhat_values(state: SchwarzState, points: np.ndarray) -> np.ndarray:
    """Combined iterate at every row of points, from the current nets only"""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    state.partition.counts(points)  # domain check
    return _combine(state.partition, state.local_nets, state.coarse_net, points, evaluate_many)


def evaluate_uhat(state: SchwarzState, x) -> float:
    """
    One-level: average of the local nets covering x.
    Two-level: (coarse net + sum of covering local nets) / |s(x)|.
    """
    point = np.reshape(np.asarray(x, dtype=float), (1, -1))
    return float(uhat_values(state, point)[0])


# ──────────────────────────────────────────────────────────────
# State construction
# ──────────────────────────────────────────────────────────────

def build_table(
    problem: PoissonProblem,
    partition: OverlapPartition,
    sets: TrainingSets,
    two_level: bool,
) -> IterateTable:
    """U^(0) = 0 at interior-facing points, g on the domain boundary, zero Laplacians"""
    lengths = [len(b) for b in sets.boundary]
    stacked = np.vstack(sets.boundary)
    points, inverse = np.unique(stacked, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    sub_index = np.split(inverse, np.cumsum(lengths)[:-1])

    pinned = problem.on_boundary(points)
    values = np.zeros(len(points))
    if np.any(pinned):
        values[pinned] = problem.g(points[pinned])

    table = IterateTable(
        points=points,
        values=values,
        pinned=pinned,
        counts=partition.counts(points),
        sub_index=sub_index,
    )
    if two_level:
        table = replace(
            table,
            interior_points=sets.coarse_interior,
            interior_laplacians=np.zeros(len(sets.coarse_interior)),
            interior_counts=partition.counts(sets.coarse_interior),
        )
    return table


def init_state(
    problem: PoissonProblem,
    partition: OverlapPartition,
    sets: TrainingSets,
    config: SchwarzConfig,
    seed: int,
) -> SchwarzState:
    """Algorithm step 0: initial table and freshly initialized nets"""
    _validate_config(config, sets)
    tau = resolve_tau(config, partition)
    if len(sets.boundary) != partition.n_boxes or len(sets.interior) != partition.n_boxes:
        raise ContractViolation("training sets do not match the partition")

    local_nets = [
        init_net(derive_seed(seed, 2, i), problem.dim, config.local_width)
        for i in range(partition.n_boxes)
    ]
    coarse_net = None
    if config.level == "two":
        coarse_net = init_net(derive_seed(seed, 3), problem.dim, config.coarse_width)

    return SchwarzState(
        problem=problem,
        partition=partition,
        sets=sets,
        config=config,
        tau=tau,
        seed=int(seed),
        local_nets=local_nets,
        coarse_net=coarse_net,
        table=build_table(problem, partition, sets, config.level == "two"),
    )


# ──────────────────────────────────────────────────────────────
# Local and coarse solves
# ──────────────────────────────────────────────────────────────

def local_batch(state: SchwarzState, i: int) -> CollocationBatch:
    rows = state.table.sub_index[i]
    interior = state.sets.interior[i]
    return CollocationBatch(
        interior_points=interior,
        interior_rhs=state.problem.f(interior),
        boundary_points=state.table.points[rows],
        boundary_targets=state.table.values[rows],
    )


def local_solve(state: SchwarzState, i: int) -> Tuple[MlpNet, np.ndarray]:
    """
    Train net i against f inside subdomain i and the tabulated iterate on its
    boundary; returns the trained net and its loss history
    """
    if not 0 <= i < state.partition.n_boxes:
        raise ContractViolation(f"subdomain index {i} out of range")
    if state.config.warm_start:
        start = state.local_nets[i]
    else:
        start = init_net(derive_seed(state.seed, 2, i, state.iteration + 1), state.problem.dim, state.config.local_width)
    return train(start, local_batch(state, i), state.config.epochs_per_solve, lr=state.config.learning_rate)


def coarse_batch(state: SchwarzState) -> CollocationBatch:
    if state.config.level != "two" or state.coarse_net is None:
        raise ContractViolation("coarse problem requested in one-level mode")
    table = state.table
    coarse_interior = state.sets.coarse_interior
    if (
        table.interior_points is None
        or table.interior_laplacians is None
        or table.interior_points.shape != coarse_interior.shape
        or not np.array_equal(table.interior_points, coarse_interior)
        or table.interior_laplacians.shape != (len(coarse_interior),)
    ):
        raise ContractViolation("iterate table does not cover every coarse interior point")

    boundary = state.sets.coarse_boundary
    return CollocationBatch(
        interior_points=coarse_interior,
        interior_rhs=state.problem.f(coarse_interior),
        boundary_points=boundary,
        boundary_targets=np.zeros(len(boundary)),
        interior_offset=table.interior_laplacians,
    )


def coarse_solve(state: SchwarzState) -> Tuple[MlpNet, np.ndarray]:
    """Train the coarse net on -Laplace(w) = f + Laplace(U^(n)), w = 0 on the boundary"""
    batch = coarse_batch(state)
    epochs = state.config.coarse_epochs or state.config.epochs_per_solve
    if state.config.warm_start:
        start = state.coarse_net
    else:
        start = init_net(derive_seed(state.seed, 3, state.iteration + 1), state.problem.dim, state.config.coarse_width)
    return train(start, batch, epochs, lr=state.config.learning_rate)


# ──────────────────────────────────────────────────────────────
# Outer iteration
# ──────────────────────────────────────────────────────────────

def relax(old: np.ndarray, uhat: np.ndarray, tau: float, counts: np.ndarray) -> np.ndarray:
    """(1 - tau |s|) old + tau |s| uhat"""
    weight = tau * counts
    return (1.0 - weight) * old + weight * uhat


def apply_update(
    state: SchwarzState,
    local_nets: List[MlpNet],
    coarse_net: Optional[MlpNet],
    tau: float,
    local_losses: Optional[List[float]] = None,
    coarse_loss: Optional[float] = None,
) -> SchwarzState:
    """Step 2: relax the table toward the new combined iterate; domain-boundary entries stay g"""
    if len(local_nets) != state.partition.n_boxes:
        raise ContractViolation("one local net per subdomain is required")
    table = state.table
    free = ~table.pinned

    values = table.values.copy()
    if np.any(free):
        pts = table.points[free]
        uhat = _combine(state.partition, local_nets, coarse_net, pts, evaluate_many)
        values[free] = relax(table.values[free], uhat, tau, table.counts[free])

    laplacians = table.interior_laplacians
    if laplacians is not None:
        lap_hat = _combine(state.partition, local_nets, coarse_net, table.interior_points, laplacian_many)
        laplacians = relax(laplacians, lap_hat, tau, table.interior_counts)

    new_table = replace(table, values=values, interior_laplacians=laplacians, iteration=table.iteration + 1)
    return replace(
        state,
        local_nets=list(local_nets),
        coarse_net=coarse_net,
        table=new_table,
        local_losses=local_losses,
        coarse_loss=coarse_loss,
    )


def outer_iterate(state: SchwarzState, executor: Optional[Executor] = None) -> SchwarzState:
    """
    All local solves (and the coarse solve) against the frozen table, then one
    table update. With an executor the solves run concurrently; results are
    collected in subdomain order so the outcome does not depend on scheduling.
    """
    indices = range(state.partition.n_boxes)
    coarse_future = None
    if executor is not None:
        if state.config.level == "two":
            coarse_future = executor.submit(coarse_solve, state)
        results = list(executor.map(lambda i: local_solve(state, i), indices))
    else:
        results = [local_solve(state, i) for i in indices]

    coarse_net, coarse_loss = None, None
    if state.config.level == "two":
        coarse_net, coarse_history = coarse_future.result() if coarse_future else coarse_solve(state)
        coarse_loss = float(coarse_history[-1])

    local_nets = [net for net, _ in results]
    local_losses = [float(history[-1]) for _, history in results]
    for i, loss in enumerate(local_losses):
        logging.debug(f"iteration {state.iteration + 1}: subdomain {i} final loss {loss:.3e}")
    if coarse_loss is not None:
        logging.debug(f"iteration {state.iteration + 1}: coarse loss {coarse_loss:.3e}")

    return apply_update(state, local_nets, coarse_net, state.tau, local_losses, coarse_loss)


# ──────────────────────────────────────────────────────────────
# Error metrics
# ──────────────────────────────────────────────────────────────

def default_resolution(dim: int) -> int:
    return 1001 if dim == 1 else 101


def evaluation_grid(problem: PoissonProblem, resolution: Optional[int] = None) -> List[np.ndarray]:
    n = resolution or default_resolution(problem.dim)
    if n < 2:
        raise ConfigurationError(f"evaluation grid needs >= 2 nodes per axis, got {n}")
    return [np.linspace(lo, hi, n) for lo, hi in zip(problem.lower, problem.upper)]


def _grid_points(axes: List[np.ndarray]) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def _l2_norm(values: np.ndarray, axes: List[np.ndarray]) -> float:
    integrand = (values ** 2).reshape([len(a) for a in axes])
    for axis in reversed(axes):
        integrand = np.trapezoid(integrand, axis, axis=-1)
    return float(np.sqrt(integrand))


Approximant = Union[SchwarzState, MlpNet, Callable[[np.ndarray], np.ndarray]]


def _approximant_fn(approx: Approximant) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(approx, SchwarzState):
        return lambda pts: uhat_values(approx, pts)
    if isinstance(approx, MlpNet):
        return lambda pts: evaluate_many(approx, pts)
    return approx


def relative_l2_error(approx: Approximant, problem: PoissonProblem, resolution: Optional[int] = None) -> float:
    """||U - u*|| / ||u*|| by trapezoid quadrature on a uniform grid"""
    if problem.exact is None:
        raise ContractViolation(f"problem '{problem.name}' has no exact solution")
    axes = evaluation_grid(problem, resolution)
    points = _grid_points(axes)
    exact = problem.exact(points)
    approx_values = _approximant_fn(approx)(points)
    return _l2_norm(approx_values - exact, axes) / _l2_norm(exact, axes)


def error_snapshot(approx: Approximant, problem: PoissonProblem, resolution: Optional[int] = None) -> pd.DataFrame:
    """Pointwise Uhat, u* and their difference on the evaluation grid"""
    if problem.exact is None:
        raise ContractViolation(f"problem '{problem.name}' has no exact solution")
    points = _grid_points(evaluation_grid(problem, resolution))
    uhat = _approximant_fn(approx)(points)
    exact = problem.exact(points)
    frame = pd.DataFrame(points, columns=["x", "y"][: problem.dim])
    frame["uhat"] = uhat
    frame["exact"] = exact
    frame["error"] = uhat - exact
    return frame


# ──────────────────────────────────────────────────────────────
# Drivers
# ──────────────────────────────────────────────────────────────

def run(
    problem: PoissonProblem,
    partition: OverlapPartition,
    sets: TrainingSets,
    config: SchwarzConfig,
    seed: int,
    executor: Optional[Executor] = None,
    snapshot_iters: Sequence[int] = (),
) -> RunReport:
    """
    Outer iterations until max_outer, or until the relative change of Uhat
    between consecutive iterations drops below stop_tol (when positive)
    """
    started = time.time()
    state = init_state(problem, partition, sets, config, seed)

    axes = evaluation_grid(problem, config.eval_grid)
    points = _grid_points(axes)
    exact = problem.exact(points) if problem.exact is not None else None
    exact_norm = _l2_norm(exact, axes) if exact is not None else None

    def grid_error(values):
        if exact is None:
            return np.nan
        return _l2_norm(values - exact, axes) / exact_norm

    previous = uhat_values(state, points)
    rows = [{"iter": 0, "rel_l2": grid_error(previous), "mean_local_loss": np.nan, "coarse_loss": np.nan}]
    snapshots = {}
    if 0 in snapshot_iters and exact is not None:
        snapshots[0] = error_snapshot(state, problem, config.eval_grid)

    for _ in range(config.max_outer):
        state = outer_iterate(state, executor)
        current = uhat_values(state, points)
        n = state.iteration
        error = grid_error(current)
        rows.append({
            "iter": n,
            "rel_l2": error,
            "mean_local_loss": float(np.mean(state.local_losses)),
            "coarse_loss": state.coarse_loss if state.coarse_loss is not None else np.nan,
        })
        logging.info(f"{problem.name} seed {seed} level {config.level}: iteration {n} rel_l2 {error:.4e}")

        if n in snapshot_iters and exact is not None:
            snapshots[n] = error_snapshot(state, problem, config.eval_grid)

        current_norm = _l2_norm(current, axes)
        change = _l2_norm(current - previous, axes) / current_norm if current_norm > 0 else np.inf
        logging.debug(f"iteration {n}: relative change of Uhat {change:.3e}")
        previous = current
        if config.stop_tol > 0 and change < config.stop_tol:
            logging.warning(f"Stopping after {n} iterations: change {change:.3e} < stop_tol {config.stop_tol}")
            break

    return RunReport(
        history=pd.DataFrame(rows, columns=HISTORY_COLUMNS),
        final_state=state,
        snapshots=snapshots,
        wall_time=time.time() - started,
    )


def single_domain_run(
    problem: PoissonProblem,
    sets: TrainingSets,
    width: int,
    epochs: int,
    seed: int,
    eval_grid: Optional[int] = None,
    report_every: Optional[int] = None,
    lr: float = LEARNING_RATE,
) -> RunReport:
    """
    Baseline: one net on the whole domain. sets must come from a one-box
    partition; history rows are written every report_every epochs.
    """
    if len(sets.interior) != 1:
        raise ContractViolation("single-domain training expects one-box training sets")
    started = time.time()
    interior, boundary = sets.interior[0], sets.boundary[0]
    batch = CollocationBatch(
        interior_points=interior,
        interior_rhs=problem.f(interior),
        boundary_points=boundary,
        boundary_targets=problem.g(boundary),
    )
    net = init_net(derive_seed(seed, 4), problem.dim, width)
    every = report_every or max(1, epochs // 50)

    rows = [{"iter": 0, "rel_l2": relative_l2_error(net, problem, eval_grid), "mean_local_loss": np.nan, "coarse_loss": np.nan}]

    def record(done, current, loss):
        error = relative_l2_error(current, problem, eval_grid)
        rows.append({"iter": done, "rel_l2": error, "mean_local_loss": loss, "coarse_loss": np.nan})
        logging.info(f"{problem.name} seed {seed} single domain: epoch {done} rel_l2 {error:.4e}")

    net, history = train(net, batch, epochs, lr=lr, callback=record, callback_every=every)
    if epochs % every:
        record(epochs, net, float(history[-1]))

    return RunReport(
        history=pd.DataFrame(rows, columns=HISTORY_COLUMNS),
        net=net,
        wall_time=time.time() - started,
    )
