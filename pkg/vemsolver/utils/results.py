"""
Result files of a solve.

Writes plot-ready CSV files for node-indexed data and JSON for scalars:

- snapshots.csv: tau, node_index, t, then one column per solution component
- diagnostics.csv: tau, J, J1, residual_norm, tf, descent_ok
- summary.json: final diagnostics, stop reason, errors against the reference
- timing.json: wall time, kept apart so the other files are reproducible
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from vemsolver.cases.base import BenchmarkCase
from vemsolver.models.grid import TimeGrid
from vemsolver.solver.integrator import EvolveResult
from vemsolver.utils.helpers import format_float, json_safe

# Configure logger
logger = logging.getLogger(__name__)

SNAPSHOTS_FILE = "snapshots.csv"
DIAGNOSTICS_FILE = "diagnostics.csv"
SUMMARY_FILE = "summary.json"
TIMING_FILE = "timing.json"
DIAGNOSTICS_COLUMNS = ["tau", "J", "J1", "residual_norm", "tf", "descent_ok"]


def prepare_output_dir(path: Union[str, Path]) -> Path:
    """
    Create the output directory and check that it is writable.

    Raises:
        OSError: If the directory cannot be created or written.
    """
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / ".write_test"
    marker.write_text("")
    marker.unlink()
    return out


def write_snapshots(path: Path, result: EvolveResult, grid: TimeGrid) -> None:
    fieldnames = ["tau", "node_index", "t"] + list(result.component_names)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for snapshot in result.snapshots:
            times = grid.t0 + grid.sigma * (snapshot.tf - grid.t0)
            for i, row in enumerate(snapshot.values):
                record = {"tau": format_float(snapshot.tau), "node_index": i, "t": format_float(times[i])}
                record.update({name: format_float(v) for name, v in zip(result.component_names, row)})
                writer.writerow(record)


def write_diagnostics(path: Path, result: EvolveResult) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=DIAGNOSTICS_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for record in result.diagnostics:
            writer.writerow({
                "tau": format_float(record.tau),
                "J": format_float(record.J),
                "J1": format_float(record.J1),
                "residual_norm": format_float(record.residual_norm),
                "tf": format_float(record.tf),
                "descent_ok": "true" if record.descent_ok else "false",
            })


def build_summary(case: BenchmarkCase, result: EvolveResult, grid: TimeGrid, method: str) -> Dict[str, Any]:
    """Scalar outcome of a solve."""
    final = result.final
    times = grid.t0 + grid.sigma * (result.tf - grid.t0)
    tf_error = None
    if case.reference_tf is not None:
        tf_error = abs(result.tf - case.reference_tf)
    return {
        "case": case.name,
        "n_points": grid.n_points,
        "method": method,
        "stop_reason": result.stop_reason,
        "converged": result.converged,
        "tau": result.tau,
        "residual_norm": final.residual_norm,
        "stationarity": final.stationarity,
        "J": final.J,
        "J1": final.J1,
        "tf": result.tf,
        "reference_tf": case.reference_tf,
        "tf_error": tf_error,
        "max_error": case.max_error(times, result.values),
        "descent_ok": all(record.descent_ok for record in result.diagnostics),
        "integrated_size": result.flow_size,
        "total_size": result.flow_total_size,
        "steps": {
            "accepted": result.stats.accepted,
            "rejected": result.stats.rejected,
            "rhs_evaluations": result.stats.rhs_evaluations,
            "jacobian_evaluations": result.stats.jacobian_evaluations,
        },
    }


def write_json(path: Path, data: Dict[str, Any]) -> None:
    with open(path, "w") as f:
        json.dump(json_safe(data), f, indent=2, sort_keys=True)
        f.write("\n")


def write_results(
    out_dir: Union[str, Path],
    case: BenchmarkCase,
    result: EvolveResult,
    grid: TimeGrid,
    method: str,
    wall_time: Optional[float] = None,
) -> List[Path]:
    """
    Write every result file of a solve.

    Args:
        out_dir: Output directory, created if missing.
        case (BenchmarkCase): The solved case.
        result (EvolveResult): Outcome of the solve.
        grid (TimeGrid): Grid of the solve (tf already final).
        method (str): Integrator used.
        wall_time (Optional[float]): Seconds spent in the solve.

    Returns:
        List[Path]: Files written.
    """
    out = prepare_output_dir(out_dir)
    paths = [out / SNAPSHOTS_FILE, out / DIAGNOSTICS_FILE, out / SUMMARY_FILE]
    write_snapshots(paths[0], result, grid)
    write_diagnostics(paths[1], result)
    write_json(paths[2], build_summary(case, result, grid, method))
    if wall_time is not None:
        paths.append(out / TIMING_FILE)
        write_json(paths[-1], {"wall_time": round(float(wall_time), 6)})
    logger.info(f"Wrote {', '.join(p.name for p in paths)} to {out}")
    return paths


def write_failure(out_dir: Union[str, Path], summary: Dict[str, Any]) -> Optional[Path]:
    """Write summary.json for a failed run; returns None if the directory is unusable."""
    try:
        out = prepare_output_dir(out_dir)
    except OSError:
        return None
    path = out / SUMMARY_FILE
    write_json(path, summary)
    return path


def read_diagnostics(path: Union[str, Path]) -> List[Dict[str, Any]]:
    """Read diagnostics.csv back into typed rows."""
    rows = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            rows.append({
                "tau": float(row["tau"]),
                "J": float(row["J"]),
                "J1": float(row["J1"]) if row["J1"] else None,
                "residual_norm": float(row["residual_norm"]),
                "tf": float(row["tf"]) if row["tf"] else None,
                "descent_ok": row["descent_ok"] == "true",
            })
    return rows


def read_snapshots(path: Union[str, Path]) -> Dict[float, np.ndarray]:
    """Read snapshots.csv into {tau: (N, width) values}."""
    groups: Dict[float, List[List[float]]] = {}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        next(reader)
        for row in reader:
            groups.setdefault(float(row[0]), []).append([float(v) for v in row[3:]])
    return {tau: np.array(rows) for tau, rows in groups.items()}
