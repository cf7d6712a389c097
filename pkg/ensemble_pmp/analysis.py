"""
Acceptance metrics recomputed from a run directory: convergence trends of
the SAA metrics, bang-bang consistency of the control with its switching
function, and agreement of the singular feedback law with the optimizer.
"""

import logging
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import pandas as pd
from scipy import stats

from .pmp import MAX, MIN, SINGULAR
from .report import read_control, read_convergence, read_summary

logger = logging.getLogger(__name__)

TAIL_PAIRS = 3
BANG_TOLERANCE = 1e-2
BANG_FRACTION = 0.98
SINGULAR_TOLERANCE = 0.1
REL_J_TARGET = 5e-3
REL_U_TARGET = 5e-2


def log_slope(values) -> Optional[float]:
    """
    Slope of log(values) against the iteration index.

    Zero, infinite and missing entries are skipped; fewer than two usable
    points give None.
    """
    arr = np.asarray(values, dtype=float)
    idx = np.arange(arr.size)
    keep = np.isfinite(arr) & (arr > 0)
    if keep.sum() < 2:
        return None
    fit = stats.linregress(idx[keep], np.log(arr[keep]))
    return float(fit.slope)


def convergence_metrics(convergence: pd.DataFrame, tail: int = TAIL_PAIRS) -> Dict:
    """
    Trend and tail of rel_J and rel_u.

    Args:
        convergence: convergence.csv contents
        tail: Number of trailing pairs for the minima

    Returns:
        Dictionary with slopes, tail minima and pair count
    """
    rel_J = convergence["rel_J"].to_numpy(dtype=float)
    rel_u = convergence["rel_u"].to_numpy(dtype=float)
    return {
        "pairs": int(len(convergence)),
        "slope_log_rel_J": log_slope(rel_J),
        "slope_log_rel_u": log_slope(rel_u),
        "tail_min_rel_J": float(np.nanmin(rel_J[-tail:])) if rel_J.size else None,
        "tail_min_rel_u": float(np.nanmin(rel_u[-tail:])) if rel_u.size else None,
    }


def bang_bang_consistency(control: pd.DataFrame, u_min: float, u_max: float,
                          tolerance: float = BANG_TOLERANCE) -> Dict:
    """
    Fraction of MAX (MIN) nodes whose control sits within tolerance * (u_max - u_min) of u_max (u_min).
    """
    band = tolerance * (u_max - u_min)
    out = {}
    for label, bound in ((MAX, u_max), (MIN, u_min)):
        u = control.loc[control["label"] == label, "u"].to_numpy(dtype=float)
        out[label] = {
            "nodes": int(u.size),
            "fraction": float(np.mean(np.abs(u - bound) <= band)) if u.size else None,
        }
    return out


def singular_agreement(control: pd.DataFrame, u_min: float, u_max: float,
                       tolerance: float = SINGULAR_TOLERANCE) -> Dict:
    """
    Compare the singular feedback with the optimized control on SINGULAR nodes
    where the feedback is defined.
    """
    mask = (control["label"] == SINGULAR) & np.isfinite(control["singular_feedback"].astype(float))
    if not mask.any():
        return {"nodes": 0, "detected": False, "max_mismatch": None, "within_tolerance": None}
    diff = np.abs(control.loc[mask, "singular_feedback"].to_numpy(dtype=float)
                  - control.loc[mask, "u"].to_numpy(dtype=float))
    limit = tolerance * (u_max - u_min)
    return {
        "nodes": int(mask.sum()),
        "detected": True,
        "max_mismatch": float(diff.max()),
        "fraction_within": float(np.mean(diff <= limit)),
        "within_tolerance": bool(np.all(diff <= limit)),
    }


def _status(ok: Optional[bool]) -> str:
    if ok is None:
        return "WARNING"
    return "PASS" if ok else "FAIL"


def analyze_frames(convergence: pd.DataFrame, control: pd.DataFrame,
                   u_min: float, u_max: float) -> Dict:
    """Metrics and PASS/WARNING/FAIL verdicts from the two CSV tables."""
    conv = convergence_metrics(convergence)
    bang = bang_bang_consistency(control, u_min, u_max)
    sing = singular_agreement(control, u_min, u_max)

    def below(value, target):
        return None if value is None else value <= target

    def negative(slope):
        return None if slope is None else slope < 0

    def enough(entry):
        return None if entry["fraction"] is None else entry["fraction"] >= BANG_FRACTION

    checks = {
        "tail_rel_J": _status(below(conv["tail_min_rel_J"], REL_J_TARGET)),
        "tail_rel_u": _status(below(conv["tail_min_rel_u"], REL_U_TARGET)),
        "trend_rel_J": _status(negative(conv["slope_log_rel_J"])),
        "trend_rel_u": _status(negative(conv["slope_log_rel_u"])),
        "bang_bang_max": _status(enough(bang[MAX])),
        "bang_bang_min": _status(enough(bang[MIN])),
        "singular_feedback": _status(sing["within_tolerance"]),
    }
    return {"convergence": conv, "bang_bang": bang, "singular": sing, "checks": checks}


def analyze_run(out_dir: Union[str, Path]) -> Dict:
    """
    Recompute the acceptance metrics of a finished run.

    Args:
        out_dir: Run directory written by the solve command

    Returns:
        Dictionary of metrics and per-check statuses
    """
    summary = read_summary(out_dir)
    config = summary.get("config") or {}
    u_min, u_max = config.get("u_min"), config.get("u_max")
    control = read_control(out_dir)
    if u_min is None or u_max is None:
        u_min, u_max = float(control["u"].min()), float(control["u"].max())
        logger.warning("summary.json carries no control bounds; using the observed range")
    result = analyze_frames(read_convergence(out_dir), control, u_min, u_max)
    result["final_J"] = summary.get("final_J")
    return result
