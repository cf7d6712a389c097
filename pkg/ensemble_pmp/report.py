"""
Serialization of a SolveReport into the run directory.

Files written by write_outputs:
    summary.json      final cost, metrics, arc intervals, validation, timings
    convergence.csv   one row per consecutive pair of ensemble sizes
    control.csv       per-node t, u, psi, label, singular_feedback
    trajectories.csv  ensemble-mean states under the final control

CSV numbers carry 17 significant digits so they read back bit-exact.
"""

import json
import logging
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import pandas as pd

from .ensemble import describe
from .pmp import MAX, MIN, SINGULAR
from .solver import SolveReport

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
CONVERGENCE_COLUMNS = ["k", "J", "rel_J", "rel_u", "inner_iters"]
CONTROL_COLUMNS = ["t", "u", "psi", "label", "singular_feedback"]
OUTPUT_FILES = ("summary.json", "convergence.csv", "control.csv", "trajectories.csv")


def convergence_frame(report: SolveReport) -> pd.DataFrame:
    rows = [{"k": rec.k, "J": rec.J, "rel_J": rec.rel_J, "rel_u": rec.rel_u,
             "inner_iters": rec.inner_iters} for rec in report.pairs()]
    return pd.DataFrame(rows, columns=CONVERGENCE_COLUMNS)


def control_frame(report: SolveReport) -> pd.DataFrame:
    u = report.control
    return pd.DataFrame({
        "t": u.grid.nodes,
        "u": u.values,
        "psi": report.switching.psi,
        "label": list(report.arcs.labels),
        "singular_feedback": report.feedback.value,
    }, columns=CONTROL_COLUMNS)


def trajectories_frame(report: SolveReport, state_names) -> pd.DataFrame:
    frame = pd.DataFrame(report.mean_states, columns=list(state_names))
    frame.insert(0, "t", report.control.grid.nodes)
    return frame


def _finite_or_none(value):
    if value is None:
        return None
    value = float(value)
    return value if np.isfinite(value) else None


def build_summary(report: SolveReport, config: Optional[Dict] = None) -> Dict:
    """
    JSON-ready summary of a solve.

    Args:
        report: SolveReport from saa_solve
        config: Normalized run config to embed

    Returns:
        Dictionary
    """
    feedback = report.feedback
    defined = np.isfinite(feedback.value)
    singular = np.array([lab == SINGULAR for lab in report.arcs.labels])
    mismatch = np.abs(report.feedback.value[defined] - report.control.values[defined])
    psi_gap = float(np.max(np.abs(report.switching.psi - report.discrete_psi)))
    summary = {
        "final_J": report.final_J,
        "baseline_J": report.baseline_J,
        "stopped_early": report.stopped_early,
        "schedule": [rec.k for rec in report.iterations],
        "iterations": [
            {"k": rec.k, "seed": rec.seed, "J": rec.J, "rel_J": _finite_or_none(rec.rel_J),
             "rel_u": _finite_or_none(rec.rel_u),
             "inner_iters": rec.inner_iters, "stalled": rec.stalled}
            for rec in report.iterations
        ],
        "arcs": {
            "eps_sing": report.switching.eps_sing,
            "counts": {label: report.arcs.count(label) for label in (MAX, MIN, SINGULAR)},
            "intervals": report.arcs.interval_times(),
        },
        "singular_feedback": {
            "singular_nodes": int(singular.sum()),
            "defined_nodes": int(defined.sum()),
            "clamped_nodes": len(feedback.clamped_nodes),
            "max_abs_mismatch": float(mismatch.max()) if mismatch.size else None,
        },
        "switching": {
            "max_abs_psi": report.switching.scale,
            "max_abs_psi_discrete_gap": psi_gap,
        },
        "ensemble": {"seed": report.ensemble.seed, "samples": describe(report.ensemble)},
        "validation": {key: _finite_or_none(val) if key != "samples" else val
                       for key, val in report.validation.items()},
        "timings": {
            "wall_clock": report.wall_clock,
            "per_iteration": [rec.wall for rec in report.iterations],
        },
    }
    if config is not None:
        summary["config"] = config
    return summary


def write_outputs(report: SolveReport, out_dir: Union[str, Path], state_names=(),
                  config: Optional[Dict] = None) -> Dict[str, Path]:
    """
    Write the run directory.

    Args:
        report: SolveReport from saa_solve
        out_dir: Target directory (created if missing)
        state_names: Column names for trajectories.csv
        config: Normalized config echoed into summary.json

    Returns:
        Mapping of file name to written path
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = tuple(state_names) or tuple(f"x{i + 1}" for i in range(report.mean_states.shape[1]))
    paths = {name: out / name for name in OUTPUT_FILES}

    with open(paths["summary.json"], "w") as f:
        json.dump(build_summary(report, config), f, indent=2)
        f.write("\n")
    convergence_frame(report).to_csv(paths["convergence.csv"], index=False,
                                     float_format=FLOAT_FORMAT, na_rep="nan")
    control_frame(report).to_csv(paths["control.csv"], index=False,
                                 float_format=FLOAT_FORMAT, na_rep="nan")
    trajectories_frame(report, names).to_csv(paths["trajectories.csv"], index=False,
                                             float_format=FLOAT_FORMAT)
    logger.info("wrote %s", ", ".join(str(p) for p in paths.values()))
    return paths


def gnuplot_script(out_dir: Union[str, Path]) -> str:
    """gnuplot commands drawing the convergence metrics and the control from the CSVs."""
    out = Path(out_dir)
    return "\n".join([
        "# ensemble-pmp run plots",
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set terminal pngcairo size 900,600",
        "",
        f"set output '{out / 'rel_J.png'}'",
        "set logscale y",
        "set xlabel 'k'",
        "set ylabel '|J(k-1) - J(k)| / |J(k-1)|'",
        f"plot '{out / 'convergence.csv'}' using 1:3 with linespoints",
        "",
        f"set output '{out / 'rel_u.png'}'",
        "set ylabel '|u(k-1) - u(k)| / |u(k-1)|'",
        f"plot '{out / 'convergence.csv'}' using 1:4 with linespoints",
        "",
        f"set output '{out / 'control.png'}'",
        "unset logscale y",
        "set xlabel 't'",
        "set ylabel 'u(t)'",
        "set y2label 'Psi(t)'",
        "set y2tics",
        "set ytics nomirror",
        f"plot '{out / 'control.csv'}' using 1:2 with lines lc 'grey' title 'optimized control', \\",
        "     '' using 1:5 with lines dashtype 2 lc 'red' title 'singular feedback', \\",
        "     '' using 1:3 axes x1y2 with lines lc 'blue' title 'switching function'",
        "",
    ])


def write_gnuplot_script(out_dir: Union[str, Path]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "plot.gp"
    path.write_text(gnuplot_script(out))
    return path


def read_convergence(out_dir: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(Path(out_dir) / "convergence.csv")


def read_control(out_dir: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(Path(out_dir) / "control.csv")


def read_summary(out_dir: Union[str, Path]) -> Dict:
    with open(Path(out_dir) / "summary.json", "r") as f:
        return json.load(f)
