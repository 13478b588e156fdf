import itertools
import numpy as np
from dataclasses import dataclass
from typing import List, Sequence, Tuple

from .errors import ConfigurationError, ContractViolation
from .problems import PoissonProblem

# Membership tolerance for closed boxes
BOX_TOL = 1e-12


@dataclass(frozen=True)
class OverlapPartition:
    """
    Uniform overlapping boxes. Box (i, j) of a 2D partition has index i * N + j,
    with i counting along the first axis.
    """
    lower: np.ndarray  # (n_boxes, d)
    upper: np.ndarray  # (n_boxes, d)
    domain_lower: np.ndarray  # (d,)
    domain_upper: np.ndarray  # (d,)
    per_axis: int
    H: float
    delta: float
    Nc: int
    overlap_ratio: float

    @property
    def dim(self) -> int:
        return self.lower.shape[1]

    @property
    def n_boxes(self) -> int:
        return self.lower.shape[0]

    def box(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        return self.lower[i], self.upper[i]

    def membership(self, points: np.ndarray) -> np.ndarray:
        """(n_points, n_boxes) mask of closed-box membership"""
        points = np.atleast_2d(points)
        inside = (points[:, None, :] >= self.lower[None] - BOX_TOL) & (
            points[:, None, :] <= self.upper[None] + BOX_TOL
        )
        return np.all(inside, axis=2)

    def counts(self, points: np.ndarray) -> np.ndarray:
        """|s(x)| for every row of points; raises when a point is outside the domain"""
        points = np.atleast_2d(points)
        _check_in_domain(self, points)
        return self.membership(points).sum(axis=1)


def _check_in_domain(p: OverlapPartition, points: np.ndarray):
    outside = np.any((points < p.domain_lower - BOX_TOL) | (points > p.domain_upper + BOX_TOL), axis=1)
    if np.any(outside):
        raise ContractViolation(f"point {points[np.argmax(outside)]} lies outside the domain")


def _axis_intervals(a: float, b: float, n: int, half_overlap: float) -> List[Tuple[float, float]]:
    H = (b - a) / n
    intervals = []
    for i in range(n):
        lo = a + i * H
        hi = a + (i + 1) * H
        # extend interior sides only, clipped to the domain
        if i > 0:
            lo -= half_overlap
        if i < n - 1:
            hi += half_overlap
        intervals.append((max(lo, a), min(hi, b)))
    return intervals


def _axis_max_multiplicity(intervals: Sequence[Tuple[float, float]]) -> int:
    edges = sorted({e for iv in intervals for e in iv})
    best = 1
    for left, right in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (left + right)
        best = max(best, sum(1 for lo, hi in intervals if lo <= mid <= hi))
    return best


def build_partition(domain_lower, domain_upper, per_axis: int, overlap_ratio: float) -> OverlapPartition:
    """
    Cells of width H = side / N per axis, each widened by delta/2 = overlap_ratio * H / 2
    on every interior side; tensor product in 2D
    """
    if not isinstance(per_axis, (int, np.integer)) or per_axis < 1:
        raise ConfigurationError(f"subdomains per axis must be a positive integer, got {per_axis}")
    if not 0 < overlap_ratio < 1:
        raise ConfigurationError(f"overlap ratio must lie in (0, 1), got {overlap_ratio}")

    lo = np.atleast_1d(np.asarray(domain_lower, dtype=float))
    hi = np.atleast_1d(np.asarray(domain_upper, dtype=float))
    sides = hi - lo
    if np.any(sides <= 0):
        raise ConfigurationError(f"degenerate domain {lo} .. {hi}")

    # H and delta follow the first axis; the catalog domains have equal sides
    H = float(sides[0] / per_axis)
    delta = overlap_ratio * H

    axes = [_axis_intervals(lo[k], hi[k], per_axis, 0.5 * overlap_ratio * sides[k] / per_axis) for k in range(len(lo))]
    boxes = list(itertools.product(*axes))
    lower = np.array([[iv[0] for iv in box] for box in boxes])
    upper = np.array([[iv[1] for iv in box] for box in boxes])

    Nc = int(np.prod([_axis_max_multiplicity(ivs) for ivs in axes]))

    return OverlapPartition(
        lower=lower,
        upper=upper,
        domain_lower=lo,
        domain_upper=hi,
        per_axis=int(per_axis),
        H=H,
        delta=delta,
        Nc=Nc,
        overlap_ratio=float(overlap_ratio),
    )


def partition_for(problem: PoissonProblem, per_axis: int, overlap_ratio: float) -> OverlapPartition:
    return build_partition(problem.lower, problem.upper, per_axis, overlap_ratio)


def multiplicity(p: OverlapPartition, x) -> Tuple[np.ndarray, int]:
    """Indices of all boxes whose closure contains x, and their count"""
    point = np.reshape(np.asarray(x, dtype=float), (1, -1))
    if point.shape[1] != p.dim:
        raise ContractViolation(f"point has {point.shape[1]} coordinates, partition is {p.dim}D")
    _check_in_domain(p, point)
    indices = np.flatnonzero(p.membership(point)[0])
    return indices, int(indices.size)


# ──────────────────────────────────────────────────────────────
# Training sets
# ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class TrainingSets:
    interior: List[np.ndarray]  # per subdomain, (n_i, d)
    boundary: List[np.ndarray]  # per subdomain, (m_i, d)
    coarse_interior: np.ndarray
    coarse_boundary: np.ndarray
    seed: int


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *stream]))


def sample_interior(rng: np.random.Generator, lo: np.ndarray, hi: np.ndarray, count: int) -> np.ndarray:
    points = rng.uniform(lo, hi, size=(count, len(lo)))
    # uniform() is half-open; keep the lower face out of the interior as well
    on_face = np.any(points <= lo, axis=1)
    while np.any(on_face):
        points[on_face] = rng.uniform(lo, hi, size=(int(on_face.sum()), len(lo)))
        on_face = np.any(points <= lo, axis=1)
    return points


def sample_box_boundary(rng: np.random.Generator, lo: np.ndarray, hi: np.ndarray, count: int) -> np.ndarray:
    """
    1D: the two endpoints (repeated alternately when count > 2).
    2D: uniform on the four edges, equal share per edge, remainder to the first edges.
    Edges run bottom, right, top, left.
    """
    if len(lo) == 1:
        ends = np.array([[lo[0]], [hi[0]]])
        return ends[np.arange(count) % 2]

    share, remainder = divmod(count, 4)
    pieces = []
    for edge in range(4):
        n = share + (1 if edge < remainder else 0)
        if n == 0:
            continue
        if edge in (0, 2):
            xs = rng.uniform(lo[0], hi[0], size=n)
            ys = np.full(n, lo[1] if edge == 0 else hi[1])
        else:
            ys = rng.uniform(lo[1], hi[1], size=n)
            xs = np.full(n, hi[0] if edge == 1 else lo[0])
        pieces.append(np.column_stack([xs, ys]))
    return np.vstack(pieces)


def sample_training_sets(
    p: OverlapPartition,
    problem: PoissonProblem,
    interior_per_sub: int,
    boundary_per_sub: int,
    coarse_interior: int,
    coarse_boundary: int,
    seed: int,
) -> TrainingSets:
    """Uniform collocation points per subdomain plus the global coarse sets"""
    if interior_per_sub < 1 or boundary_per_sub < 1:
        raise ConfigurationError("per-subdomain point counts must be >= 1")
    if coarse_interior < 0 or coarse_boundary < 0:
        raise ConfigurationError("coarse point counts must be >= 0")
    if problem.dim != p.dim:
        raise ConfigurationError(f"{problem.dim}D problem on a {p.dim}D partition")

    interior, boundary = [], []
    for i in range(p.n_boxes):
        lo, hi = p.box(i)
        rng = _rng(seed, 0, i)
        interior.append(sample_interior(rng, lo, hi, interior_per_sub))
        boundary.append(sample_box_boundary(rng, lo, hi, boundary_per_sub))

    rng = _rng(seed, 1)
    lo, hi = problem.lower_array, problem.upper_array
    coarse_int = sample_interior(rng, lo, hi, coarse_interior) if coarse_interior else np.empty((0, p.dim))
    coarse_bnd = sample_box_boundary(rng, lo, hi, coarse_boundary) if coarse_boundary else np.empty((0, p.dim))

    return TrainingSets(
        interior=interior,
        boundary=boundary,
        coarse_interior=coarse_int,
        coarse_boundary=coarse_bnd,
        seed=int(seed),
    )
