import glob
import json
import logging
import os
import numpy as np
import pandas as pd
from datetime import datetime
from typing import Any, Dict, List, Optional

# CSV output is file-based and reproducible: fixed float format, empty cells for NaN
FLOAT_FORMAT = "%.12g"
SUMMARY_FILE = "summary.json"
ORACLE_SUMMARY_FILE = "oracle_summary.json"
REPORT_FILE = "report.csv"


def ensure_dir(path: str) -> str:
    if not os.path.exists(path):
        os.makedirs(path)
    return path


def write_csv(frame: pd.DataFrame, path: str) -> str:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="")
    logging.info(f"Wrote {path}")
    return path


def decay_path(out_dir: str, seed: int) -> str:
    return os.path.join(out_dir, f"decay_{seed}.csv")


def snapshot_path(out_dir: str, seed: int, iteration: int) -> str:
    return os.path.join(out_dir, f"error_{seed}_iter{iteration}.csv")


def oracle_path(out_dir: str, level: str, per_axis: int, tau: float) -> str:
    return os.path.join(out_dir, f"oracle_{level}_N{per_axis}_tau{tau:.6g}.csv")


def seed_statistics(final_errors: Dict[int, float]) -> Dict[str, float]:
    """Min and Mean across seeds, as the result tables report them"""
    values = np.array(list(final_errors.values()), dtype=float)
    return {"Min": float(np.min(values)), "Mean": float(np.mean(values))}


def write_summary(
    out_dir: str,
    config: Dict[str, Any],
    final_errors: Dict[int, float],
    wall_time: float,
    wall_times: Optional[Dict[int, float]] = None,
) -> str:
    """summary.json: config echo, per-seed final error, Min/Mean and wall time"""
    summary = {
        "name": config.get("name"),
        "problem": config.get("problem", {}).get("id"),
        "level": config.get("solver", {}).get("level"),
        "per_axis": config.get("partition", {}).get("per_axis"),
        "final_errors": {str(seed): err for seed, err in final_errors.items()},
        **seed_statistics(final_errors),
        "wall_time": wall_time,
        "seed_wall_times": {str(s): t for s, t in (wall_times or {}).items()},
        "generated": datetime.now().isoformat(),
        "config": config,
    }
    path = os.path.join(out_dir, SUMMARY_FILE)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2)
    logging.info(f"Summary saved: {path} (Min {summary['Min']:.4e}, Mean {summary['Mean']:.4e})")
    return path


def write_oracle_summary(out_dir: str, config: Dict[str, Any], rows: List[Dict[str, Any]]) -> str:
    summary = {
        "name": config.get("name"),
        "problem": config.get("problem", {}).get("id"),
        "runs": rows,
        "generated": datetime.now().isoformat(),
        "config": config,
    }
    path = os.path.join(out_dir, ORACLE_SUMMARY_FILE)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2)
    logging.info(f"Oracle summary saved: {path}")
    return path


def load_summaries(directory: str) -> List[Dict[str, Any]]:
    """Every summary.json under directory; unreadable files are logged and skipped"""
    summaries = []
    for path in sorted(glob.glob(os.path.join(directory, "**", SUMMARY_FILE), recursive=True)):
        try:
            with open(path, "r", encoding="utf-8") as f:
                summary = json.load(f)
            summary["path"] = os.path.relpath(os.path.dirname(path), directory)
            summaries.append(summary)
        except (OSError, json.JSONDecodeError) as e:
            logging.error(f"Error reading summary {path}: {e}")
    return summaries


def build_report(directory: str) -> pd.DataFrame:
    """One row per run: name, problem, level, N, per-seed errors, Min, Mean"""
    rows = []
    for summary in load_summaries(directory):
        row = {
            "run": summary.get("path"),
            "name": summary.get("name"),
            "problem": summary.get("problem"),
            "level": summary.get("level"),
            "N": summary.get("per_axis"),
        }
        for seed, error in summary.get("final_errors", {}).items():
            row[f"seed_{seed}"] = error
        row["Min"] = summary.get("Min")
        row["Mean"] = summary.get("Mean")
        rows.append(row)

    frame = pd.DataFrame(rows)
    if frame.empty:
        return frame
    seed_columns = sorted((c for c in frame.columns if c.startswith("seed_")), key=lambda c: int(c[5:]))
    return frame[["run", "name", "problem", "level", "N", *seed_columns, "Min", "Mean"]]


def write_report(directory: str) -> pd.DataFrame:
    frame = build_report(directory)
    if frame.empty:
        logging.warning(f"No {SUMMARY_FILE} found under {directory}")
        return frame
    write_csv(frame, os.path.join(directory, REPORT_FILE))
    return frame
