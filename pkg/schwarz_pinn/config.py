import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Tuple, Union

from .errors import ConfigurationError
from .partition import build_partition
from .problems import PROBLEM_PARAMS, PoissonProblem, get_problem, problem_dim
from .schwarz import SchwarzConfig

PRESETS_ENV = "SCHWARZ_PINN_PRESETS"
DEFAULT_PRESETS_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "presets")

SOLVER_LEVELS = ("single", "one", "two")
ORACLE_LEVELS = ("one", "two")
DESK_EPOCH_DIVISOR = 5
DESK_OUTER_DIVISOR = 2


@dataclass
class ProblemSection:
    id: str = "smooth1d"
    params: Dict[str, float] = field(default_factory=dict)


@dataclass
class PartitionSection:
    per_axis: int = 1
    overlap_ratio: float = 1.0 / 3.0


@dataclass
class SolverSection:
    level: str = "one"
    tau: Union[str, float] = "auto"
    max_outer: int = 50
    warm_start: bool = True
    stop_tol: float = 0.0


@dataclass
class NetworkSection:
    local_width: int = 35
    coarse_width: int = 35
    single_width: int = 323


@dataclass
class PointsSection:
    interior_per_sub: int = 98
    boundary_per_sub: int = 2
    coarse_interior: int = 98
    coarse_boundary: int = 2
    single_interior: int = 998
    single_boundary: int = 2


@dataclass
class TrainingSection:
    epochs_per_solve: int = 10000
    coarse_epochs: int = 10000
    single_epochs: int = 500000
    learning_rate: float = 0.001
    report_every: Optional[int] = None


@dataclass
class EvaluationSection:
    grid: Optional[int] = None
    snapshots: List[int] = field(default_factory=list)


@dataclass
class OracleSection:
    grid_nodes: int = 241
    per_axis: List[int] = field(default_factory=lambda: [10])
    level: List[str] = field(default_factory=lambda: ["one"])
    tau: List[Union[str, float]] = field(default_factory=lambda: ["auto"])
    iters: int = 50
    coarse_nodes: Optional[int] = None
    tail: int = 10
    C: float = 1.0


@dataclass
class OutputSection:
    dir: str = "results"


SECTIONS = {
    "problem": ProblemSection,
    "partition": PartitionSection,
    "solver": SolverSection,
    "network": NetworkSection,
    "points": PointsSection,
    "training": TrainingSection,
    "evaluation": EvaluationSection,
    "oracle": OracleSection,
    "output": OutputSection,
}


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    problem: ProblemSection = field(default_factory=ProblemSection)
    partition: PartitionSection = field(default_factory=PartitionSection)
    solver: SolverSection = field(default_factory=SolverSection)
    network: NetworkSection = field(default_factory=NetworkSection)
    points: PointsSection = field(default_factory=PointsSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    seeds: List[int] = field(default_factory=lambda: [0])
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)
    oracle: OracleSection = field(default_factory=OracleSection)
    output: OutputSection = field(default_factory=OutputSection)
    desk_scale: bool = False

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        """Build from a dict that already passed check_config"""
        kwargs = {}
        for key, value in data.items():
            if key in SECTIONS:
                kwargs[key] = SECTIONS[key](**value)
            elif key == "seeds":
                kwargs[key] = [int(s) for s in value]
            else:
                kwargs[key] = value
        return cls(**kwargs)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @property
    def dim(self) -> int:
        return problem_dim(self.problem.id)

    def build_problem(self) -> PoissonProblem:
        return get_problem(self.problem.id, **self.problem.params)

    def resolved_tau(self) -> Optional[float]:
        return None if self.solver.tau == "auto" else float(self.solver.tau)

    def schwarz_config(self) -> SchwarzConfig:
        return SchwarzConfig(
            tau=self.resolved_tau(),
            max_outer=self.solver.max_outer,
            epochs_per_solve=self.training.epochs_per_solve,
            coarse_epochs=self.training.coarse_epochs,
            level=self.solver.level,
            warm_start=self.solver.warm_start,
            eval_grid=self.evaluation.grid,
            stop_tol=self.solver.stop_tol,
            local_width=self.network.local_width,
            coarse_width=self.network.coarse_width,
            learning_rate=self.training.learning_rate,
        )


# ──────────────────────────────────────────────────────────────
# Validation
# ──────────────────────────────────────────────────────────────

Issue = Tuple[Tuple[str, ...], str]


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _positive_int(issues: List[Issue], path: Tuple[str, ...], value, minimum: int = 1):
    if not _is_int(value) or value < minimum:
        issues.append((path, f"{'.'.join(path)} must be an integer >= {minimum}, got {value!r}"))


def _check_tau(issues: List[Issue], path: Tuple[str, ...], tau, Nc: Optional[int]):
    if tau == "auto":
        return
    if not _is_number(tau) or tau <= 0:
        issues.append((path, f"{'.'.join(path)} must be 'auto' or a positive number, got {tau!r}"))
    elif Nc is not None and tau > 1.0 / Nc + 1e-9:
        issues.append((path, f"{'.'.join(path)}={tau} exceeds the bound tau <= 1/Nc = {1.0 / Nc:.6g} (Nc={Nc})"))


def _partition_nc(dim: int, per_axis, ratio) -> Optional[int]:
    try:
        lower, upper = ((-1.0,), (1.0,)) if dim == 1 else ((0.0, 0.0), (1.0, 1.0))
        return build_partition(lower, upper, per_axis, ratio).Nc
    except (ConfigurationError, TypeError):
        return None


def check_config(data: Any) -> List[Issue]:
    """Every schema violation in a parsed config document, in document order"""
    if not isinstance(data, dict):
        return [((), "config must be a JSON object")]
    issues: List[Issue] = []
    known = set(SECTIONS) | {"name", "seeds", "desk_scale"}
    for key in data:
        if key not in known:
            issues.append(((key,), f"unknown section '{key}'"))

    for name, cls in SECTIONS.items():
        section = data.get(name, {})
        if not isinstance(section, dict):
            issues.append(((name,), f"section '{name}' must be an object"))
            continue
        allowed = {f.name for f in fields(cls)}
        for key in section:
            if key not in allowed:
                issues.append(((name, key), f"unknown key '{name}.{key}'"))

    def section(name):
        value = data.get(name, {})
        return value if isinstance(value, dict) else {}

    # problem
    problem = section("problem")
    problem_id = problem.get("id", ProblemSection.id)
    dim = None
    if problem_id not in PROBLEM_PARAMS:
        issues.append((("problem", "id"), f"unknown problem id {problem_id!r}, expected one of {sorted(PROBLEM_PARAMS)}"))
    else:
        dim = problem_dim(problem_id)
        params = problem.get("params", {})
        if not isinstance(params, dict):
            issues.append((("problem", "params"), "problem.params must be an object"))
        else:
            for key, value in params.items():
                if key not in PROBLEM_PARAMS[problem_id]:
                    issues.append((("problem", "params", key), f"problem '{problem_id}' takes no parameter '{key}'"))
                elif not _is_number(value):
                    issues.append((("problem", "params", key), f"problem.params.{key} must be a number"))
            if _is_number(params.get("eps", 1.0)) and params.get("eps", 1.0) <= 0:
                issues.append((("problem", "params", "eps"), f"eps must be positive, got {params['eps']}"))

    # partition
    partition = section("partition")
    defaults = PartitionSection()
    per_axis = partition.get("per_axis", defaults.per_axis)
    ratio = partition.get("overlap_ratio", defaults.overlap_ratio)
    _positive_int(issues, ("partition", "per_axis"), per_axis)
    if not _is_number(ratio) or not 0 < ratio < 1:
        issues.append((("partition", "overlap_ratio"), f"partition.overlap_ratio must lie in (0, 1), got {ratio!r}"))
    Nc = _partition_nc(dim, per_axis, ratio) if dim else None

    # solver
    solver = section("solver")
    level = solver.get("level", SolverSection.level)
    if level not in SOLVER_LEVELS:
        issues.append((("solver", "level"), f"solver.level must be one of {SOLVER_LEVELS}, got {level!r}"))
    _check_tau(issues, ("solver", "tau"), solver.get("tau", "auto"), Nc)
    _positive_int(issues, ("solver", "max_outer"), solver.get("max_outer", SolverSection.max_outer), 0)
    if not isinstance(solver.get("warm_start", True), bool):
        issues.append((("solver", "warm_start"), "solver.warm_start must be true or false"))
    stop_tol = solver.get("stop_tol", 0.0)
    if not _is_number(stop_tol) or stop_tol < 0:
        issues.append((("solver", "stop_tol"), f"solver.stop_tol must be >= 0, got {stop_tol!r}"))

    # network, points, training
    for key, value in section("network").items():
        _positive_int(issues, ("network", key), value)
    points = section("points")
    for key in ("interior_per_sub", "boundary_per_sub"):
        _positive_int(issues, ("points", key), points.get(key, getattr(PointsSection, key)))
    coarse_min = 1 if level == "two" else 0
    for key in ("coarse_interior", "coarse_boundary"):
        _positive_int(issues, ("points", key), points.get(key, getattr(PointsSection, key)), coarse_min)
    single_min = 1 if level == "single" else 0
    for key in ("single_interior", "single_boundary"):
        _positive_int(issues, ("points", key), points.get(key, getattr(PointsSection, key)), single_min)

    training = section("training")
    for key in ("epochs_per_solve", "coarse_epochs", "single_epochs"):
        _positive_int(issues, ("training", key), training.get(key, getattr(TrainingSection, key)))
    lr = training.get("learning_rate", TrainingSection.learning_rate)
    if not _is_number(lr) or lr <= 0:
        issues.append((("training", "learning_rate"), f"training.learning_rate must be positive, got {lr!r}"))
    if training.get("report_every") is not None:
        _positive_int(issues, ("training", "report_every"), training["report_every"])

    # seeds
    seeds = data.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds:
        issues.append((("seeds",), "seeds must be a non-empty list"))
    elif not all(_is_int(s) and s >= 0 for s in seeds):
        issues.append((("seeds",), f"seeds must be non-negative integers, got {seeds}"))
    elif len(set(seeds)) != len(seeds):
        issues.append((("seeds",), f"seeds must be distinct, got {seeds}"))

    # evaluation
    evaluation = section("evaluation")
    if evaluation.get("grid") is not None:
        _positive_int(issues, ("evaluation", "grid"), evaluation["grid"], 2)
    snapshots = evaluation.get("snapshots", [])
    if not isinstance(snapshots, list) or not all(_is_int(k) and k >= 0 for k in snapshots):
        issues.append((("evaluation", "snapshots"), "evaluation.snapshots must be a list of iteration numbers"))

    # oracle
    oracle = section("oracle")
    _positive_int(issues, ("oracle", "grid_nodes"), oracle.get("grid_nodes", OracleSection.grid_nodes), 3)
    sweep_n = oracle.get("per_axis", [10])
    if not isinstance(sweep_n, list) or not sweep_n or not all(_is_int(n) and n >= 1 for n in sweep_n):
        issues.append((("oracle", "per_axis"), "oracle.per_axis must be a non-empty list of positive integers"))
        sweep_n = []
    sweep_levels = oracle.get("level", ["one"])
    if not isinstance(sweep_levels, list) or not sweep_levels or any(lv not in ORACLE_LEVELS for lv in sweep_levels):
        issues.append((("oracle", "level"), f"oracle.level must be a non-empty list drawn from {ORACLE_LEVELS}"))
    sweep_tau = oracle.get("tau", ["auto"])
    if not isinstance(sweep_tau, list) or not sweep_tau:
        issues.append((("oracle", "tau"), "oracle.tau must be a non-empty list"))
    elif dim:
        worst_nc = max((_partition_nc(dim, n, ratio) or 1 for n in sweep_n), default=None)
        for tau in sweep_tau:
            _check_tau(issues, ("oracle", "tau"), tau, worst_nc)
    _positive_int(issues, ("oracle", "iters"), oracle.get("iters", OracleSection.iters), 0)
    if oracle.get("coarse_nodes") is not None:
        _positive_int(issues, ("oracle", "coarse_nodes"), oracle["coarse_nodes"])
    _positive_int(issues, ("oracle", "tail"), oracle.get("tail", OracleSection.tail))
    C = oracle.get("C", OracleSection.C)
    if not _is_number(C) or C <= 0:
        issues.append((("oracle", "C"), f"oracle.C must be positive, got {C!r}"))

    if not isinstance(section("output").get("dir", "results"), str):
        issues.append((("output", "dir"), "output.dir must be a string"))
    return issues


def _key_line(text: str, path: Tuple[str, ...]) -> int:
    """Line of the innermost key of path that can be found, searching section by section"""
    position = 0
    for key in path:
        found = text.find(f'"{key}"', position)
        if found < 0:
            break
        position = found
    return text.count("\n", 0, position) + 1


def validate_config(path: str) -> Tuple[Optional[ExperimentConfig], List[str]]:
    """
    Parse and check a config file. Returns (config, []) or (None, diagnostics),
    each diagnostic formatted '<path>:<line>: <message>'.
    """
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        return None, [f"{path}:{e.lineno}: invalid JSON: {e.msg}"]

    issues = check_config(data)
    if issues:
        return None, [f"{path}:{_key_line(text, key_path)}: {message}" for key_path, message in issues]

    data.setdefault("name", os.path.splitext(os.path.basename(path))[0])
    return ExperimentConfig.from_dict(data), []


def presets_dir() -> str:
    return os.environ.get(PRESETS_ENV, DEFAULT_PRESETS_DIR)


def list_presets() -> List[str]:
    directory = presets_dir()
    if not os.path.isdir(directory):
        return []
    return sorted(os.path.splitext(name)[0] for name in os.listdir(directory) if name.endswith(".json"))


def resolve_config_path(name_or_path: str) -> str:
    if os.path.exists(name_or_path):
        return name_or_path
    candidate = os.path.join(presets_dir(), f"{name_or_path}.json")
    if os.path.exists(candidate):
        return candidate
    raise ConfigurationError(
        f"no config file or preset named '{name_or_path}' (presets: {', '.join(list_presets()) or 'none'})"
    )


def load_config(name_or_path: str) -> ExperimentConfig:
    """Load a config file path or a shipped preset name; raises on any diagnostic"""
    path = resolve_config_path(name_or_path)
    config, diagnostics = validate_config(path)
    if config is None:
        raise ConfigurationError(f"invalid config {path}", diagnostics=diagnostics)
    return config


def save_config(config: ExperimentConfig, path: str):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config.to_dict(), f, indent=2)


def desk_scale(config: ExperimentConfig) -> ExperimentConfig:
    """Epoch budgets / 5 and max_outer / 2, each floored at 1"""
    training = replace(
        config.training,
        epochs_per_solve=max(1, config.training.epochs_per_solve // DESK_EPOCH_DIVISOR),
        coarse_epochs=max(1, config.training.coarse_epochs // DESK_EPOCH_DIVISOR),
        single_epochs=max(1, config.training.single_epochs // DESK_EPOCH_DIVISOR),
        report_every=(
            max(1, config.training.report_every // DESK_EPOCH_DIVISOR)
            if config.training.report_every else None
        ),
    )
    solver = replace(config.solver, max_outer=max(1, config.solver.max_outer // DESK_OUTER_DIVISOR))
    return replace(config, training=training, solver=solver, desk_scale=True)
