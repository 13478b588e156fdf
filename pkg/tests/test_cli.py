import json
import os
from dataclasses import replace

import pandas as pd
import pytest

from schwarz_pinn.cli import main
from schwarz_pinn.config import desk_scale, load_config
from schwarz_pinn.reports import build_report
from schwarz_pinn.runner import run_experiment

TINY_RUN = {
    "name": "tiny",
    "problem": {"id": "smooth1d"},
    "partition": {"per_axis": 3},
    "solver": {"level": "one", "max_outer": 2},
    "network": {"local_width": 4, "coarse_width": 4, "single_width": 4},
    "points": {"interior_per_sub": 10, "boundary_per_sub": 2, "coarse_interior": 10, "coarse_boundary": 2},
    "training": {"epochs_per_solve": 3, "coarse_epochs": 3, "single_epochs": 6, "report_every": 3},
    "seeds": [0, 1],
    "evaluation": {"grid": 101, "snapshots": [1]},
}

TINY_ORACLE = {
    "name": "tiny_oracle",
    "problem": {"id": "smooth2d"},
    "seeds": [0],
    "oracle": {"grid_nodes": 25, "per_axis": [1, 2], "level": ["one", "two"], "tau": ["auto"], "iters": 5, "tail": 3},
}


def write_config(tmp_path, data, name="config_in.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data, indent=2), encoding="utf-8")
    return str(path)


def read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


def test_validate_shipped_preset(capsys):
    assert main(["validate", "table1_smooth1d"]) == 0
    assert capsys.readouterr().out.strip() == "OK"


def test_validate_reports_diagnostics(tmp_path, capsys):
    data = dict(TINY_RUN, solver={"level": "one", "tau": 0.9})
    path = write_config(tmp_path, data)
    assert main(["validate", path]) == 1
    out = capsys.readouterr().out
    assert f"{path}:" in out and "tau" in out


def test_usage_errors():
    assert main([]) == 2
    assert main(["frobnicate"]) == 2


def test_missing_config(tmp_path):
    assert main(["run", str(tmp_path / "absent.json")]) == 1


@pytest.mark.parametrize("level", ["one", "two"])
def test_run_writes_outputs(tmp_path, level):
    data = dict(TINY_RUN, solver={"level": level, "max_outer": 2})
    out = tmp_path / "out"
    assert main(["run", write_config(tmp_path, data), "--out", str(out)]) == 0

    for name in ("decay_0.csv", "decay_1.csv", "error_0_iter1.csv", "summary.json", "config.json", "schwarz_pinn.log"):
        assert (out / name).exists(), name

    decay = pd.read_csv(out / "decay_0.csv")
    assert list(decay.columns) == ["iter", "rel_l2", "mean_local_loss", "coarse_loss"]
    assert decay["iter"].tolist() == [0, 1, 2]
    if level == "one":
        assert decay["coarse_loss"].isna().all()
        assert (out / "decay_0.csv").read_text().splitlines()[1].endswith(",")
    else:
        assert decay["coarse_loss"].iloc[1:].notna().all()

    summary = json.loads((out / "summary.json").read_text())
    finals = [pd.read_csv(out / f"decay_{s}.csv")["rel_l2"].iloc[-1] for s in (0, 1)]
    assert summary["Min"] == pytest.approx(min(finals), rel=1e-10)
    assert summary["Mean"] == pytest.approx(sum(finals) / 2, rel=1e-10)
    assert summary["config"]["solver"]["level"] == level


def test_run_single_domain(tmp_path):
    data = dict(TINY_RUN, solver={"level": "single"}, evaluation={"grid": 101})
    out = tmp_path / "single"
    assert main(["run", write_config(tmp_path, data), "--out", str(out)]) == 0
    decay = pd.read_csv(out / "decay_0.csv")
    assert decay["iter"].tolist() == [0, 3, 6]


def test_log_file_records_the_loaded_config(tmp_path):
    path = write_config(tmp_path, dict(TINY_RUN, seeds=[0], solver={"level": "one", "max_outer": 1}))
    out = tmp_path / "logged"
    assert main(["run", path, "--out", str(out)]) == 0
    log = (out / "schwarz_pinn.log").read_text()
    assert f"Loaded config 'tiny' from {path}" in log
    assert "Finished tiny seed 0" in log


def test_desk_scale_flag_is_echoed(tmp_path):
    data = dict(TINY_RUN, seeds=[0], training={"epochs_per_solve": 10, "coarse_epochs": 10, "single_epochs": 10})
    out = tmp_path / "desk"
    assert main(["run", write_config(tmp_path, data), "--out", str(out), "--desk-scale"]) == 0
    echoed = json.loads((out / "config.json").read_text())
    assert echoed["desk_scale"] is True
    assert echoed["training"]["epochs_per_solve"] == 2
    assert echoed["solver"]["max_outer"] == 1


def test_oracle_writes_rate_files(tmp_path):
    out = tmp_path / "oracle"
    assert main(["oracle", write_config(tmp_path, TINY_ORACLE), "--out", str(out)]) == 0
    for level in ("one", "two"):
        assert (out / f"oracle_{level}_N1_tau1.csv").exists()
        assert (out / f"oracle_{level}_N2_tau0.25.csv").exists()
    summary = json.loads((out / "oracle_summary.json").read_text())
    assert len(summary["runs"]) == 4
    history = pd.read_csv(out / "oracle_two_N2_tau0.25.csv")
    assert list(history.columns) == ["iter", "energy_error", "ratio"]
    assert (history["ratio"].iloc[1:] < 1).all()


def test_report_aggregates_runs(tmp_path, capsys):
    for name in ("a", "b"):
        main(["run", write_config(tmp_path, dict(TINY_RUN, name=name, seeds=[0])), "--out", str(tmp_path / "results" / name)])
    capsys.readouterr()
    assert main(["report", str(tmp_path / "results")]) == 0
    report = pd.read_csv(tmp_path / "results" / "report.csv")
    assert sorted(report["name"]) == ["a", "b"]
    assert list(report.columns) == ["run", "name", "problem", "level", "N", "seed_0", "Min", "Mean"]
    assert "Mean" in capsys.readouterr().out


def test_report_on_empty_directory(tmp_path):
    assert main(["report", str(tmp_path)]) == 1
    assert build_report(str(tmp_path)).empty


def test_jobs_do_not_change_outputs(tmp_path):
    path = write_config(tmp_path, TINY_RUN)
    assert main(["run", path, "--out", str(tmp_path / "serial"), "--jobs", "1"]) == 0
    assert main(["run", path, "--out", str(tmp_path / "threads"), "--jobs", "4"]) == 0
    for name in ("decay_0.csv", "decay_1.csv", "error_1_iter1.csv"):
        assert read_bytes(tmp_path / "serial" / name) == read_bytes(tmp_path / "threads" / name)


@pytest.mark.slow
def test_desk_preset_is_reproducible_across_jobs(tmp_path):
    config = desk_scale(load_config("table1_smooth1d"))
    # two seeds and two outer iterations keep the comparison in the minutes range
    config = replace(config, seeds=[0, 1], solver=replace(config.solver, max_outer=2), evaluation=replace(config.evaluation, snapshots=[]))
    run_experiment(config, jobs=1, out_dir=str(tmp_path / "jobs1"))
    run_experiment(config, jobs=4, out_dir=str(tmp_path / "jobs4"))
    for seed in config.seeds:
        name = f"decay_{seed}.csv"
        assert read_bytes(os.path.join(tmp_path, "jobs1", name)) == read_bytes(os.path.join(tmp_path, "jobs4", name))
