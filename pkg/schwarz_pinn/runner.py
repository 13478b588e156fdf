import logging
import os
import time
import numpy as np
from concurrent.futures import Executor, ThreadPoolExecutor
from typing import Any, Dict, List, Optional
from sklearn.model_selection import ParameterGrid

from .config import ExperimentConfig, save_config
from .oracle_fd import (
    RateBound,
    asymptotic_rate,
    estimate_c0,
    fd_schwarz_run,
    fit_c0,
    make_grid,
    rate_bound,
)
from .partition import partition_for, sample_training_sets
from .reports import (
    decay_path,
    ensure_dir,
    oracle_path,
    seed_statistics,
    snapshot_path,
    write_csv,
    write_oracle_summary,
    write_summary,
)
from .schwarz import RunReport, run, single_domain_run


def run_seed(config: ExperimentConfig, seed: int, executor: Optional[Executor] = None) -> RunReport:
    """One seed of the configured solver: single-domain baseline, one-level or two-level"""
    problem = config.build_problem()
    points = config.points
    logging.info(f"Starting {config.name} seed {seed} ({config.solver.level})")

    if config.solver.level == "single":
        partition = partition_for(problem, 1, config.partition.overlap_ratio)
        sets = sample_training_sets(partition, problem, points.single_interior, points.single_boundary, 0, 0, seed)
        report = single_domain_run(
            problem,
            sets,
            width=config.network.single_width,
            epochs=config.training.single_epochs,
            seed=seed,
            eval_grid=config.evaluation.grid,
            report_every=config.training.report_every,
            lr=config.training.learning_rate,
        )
    else:
        two_level = config.solver.level == "two"
        partition = partition_for(problem, config.partition.per_axis, config.partition.overlap_ratio)
        sets = sample_training_sets(
            partition,
            problem,
            points.interior_per_sub,
            points.boundary_per_sub,
            points.coarse_interior if two_level else 0,
            points.coarse_boundary if two_level else 0,
            seed,
        )
        report = run(
            problem,
            partition,
            sets,
            config.schwarz_config(),
            seed,
            executor=executor,
            snapshot_iters=config.evaluation.snapshots,
        )

    logging.info(f"Finished {config.name} seed {seed}: rel_l2 {report.final_error:.4e} in {report.wall_time:.1f}s")
    return report


def run_experiment(config: ExperimentConfig, jobs: int = 1, out_dir: Optional[str] = None) -> Dict[str, Any]:
    """
    Every seed of the config; writes decay_<seed>.csv, error snapshots,
    config.json and summary.json. With jobs > 1 seeds run concurrently and
    each run shares a pool for its subdomain solves.
    """
    out_dir = ensure_dir(out_dir or config.output.dir)
    save_config(config, os.path.join(out_dir, "config.json"))
    started = time.time()

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as solves, ThreadPoolExecutor(
            max_workers=min(jobs, len(config.seeds))
        ) as seeds:
            reports = list(seeds.map(lambda s: run_seed(config, s, solves), config.seeds))
    else:
        reports = [run_seed(config, s) for s in config.seeds]

    final_errors, wall_times = {}, {}
    for seed, report in zip(config.seeds, reports):
        write_csv(report.history, decay_path(out_dir, seed))
        for iteration, snapshot in sorted(report.snapshots.items()):
            write_csv(snapshot, snapshot_path(out_dir, seed, iteration))
        final_errors[seed] = report.final_error
        wall_times[seed] = report.wall_time

    summary_path = write_summary(out_dir, config.to_dict(), final_errors, time.time() - started, wall_times)
    return {"out_dir": out_dir, "summary": summary_path, "final_errors": final_errors, **seed_statistics(final_errors)}


def _oracle_point(config: ExperimentConfig, grid, params: Dict[str, Any]):
    problem = config.build_problem()
    oracle = config.oracle
    partition = partition_for(problem, params["per_axis"], config.partition.overlap_ratio)
    tau = 1.0 / partition.Nc if params["tau"] == "auto" else float(params["tau"])

    history = fd_schwarz_run(
        problem,
        partition,
        grid,
        tau=tau,
        iters=oracle.iters,
        level=params["level"],
        coarse_nodes=oracle.coarse_nodes,
    )
    rate = asymptotic_rate(history, oracle.tail)
    worst = float(np.nanmax(history["ratio"])) if len(history) > 1 else float("nan")

    row = {
        "level": params["level"],
        "per_axis": params["per_axis"],
        "tau": tau,
        "Nc": partition.Nc,
        "final_energy_error": float(history["energy_error"].iloc[-1]),
        "asymptotic_rate": rate,
        "worst_ratio": worst,
        "estimated_C0": estimate_c0(partition.Nc, params["per_axis"], 1.0 / config.partition.overlap_ratio, oracle.C),
        "fitted_C0": None,
        "bound_with_fitted_C0": None,
    }
    if np.isfinite(worst):
        fitted = fit_c0(worst, tau, partition.Nc, params["level"])
        row["fitted_C0"] = fitted
        row["bound_with_fitted_C0"] = rate_bound(RateBound(fitted, partition.Nc, tau, params["level"]))
    logging.info(
        f"Oracle {params['level']}-level N={params['per_axis']} tau={tau:.4g}: asymptotic rate {rate:.4f}"
    )
    return history, row


def run_oracle(config: ExperimentConfig, jobs: int = 1, out_dir: Optional[str] = None) -> List[Dict[str, Any]]:
    """Sweep (per_axis, level, tau) through the finite-difference Schwarz oracle"""
    out_dir = ensure_dir(out_dir or config.output.dir)
    save_config(config, os.path.join(out_dir, "config.json"))
    grid = make_grid(config.build_problem(), config.oracle.grid_nodes)
    sweep = list(ParameterGrid({
        "per_axis": config.oracle.per_axis,
        "level": config.oracle.level,
        "tau": config.oracle.tau,
    }))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(lambda p: _oracle_point(config, grid, p), sweep))
    else:
        results = [_oracle_point(config, grid, p) for p in sweep]

    rows = []
    for history, row in results:
        path = oracle_path(out_dir, row["level"], row["per_axis"], row["tau"])
        write_csv(history, path)
        row["file"] = os.path.basename(path)
        rows.append(row)

    write_oracle_summary(out_dir, config.to_dict(), rows)
    return rows
