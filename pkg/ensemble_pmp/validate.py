"""
Integrity checks for a run directory written by the solve command.
"""

import json
from pathlib import Path
from typing import Dict, Union

import numpy as np
import pandas as pd

from .pmp import MAX, MIN, SINGULAR
from .report import CONTROL_COLUMNS, CONVERGENCE_COLUMNS

SUMMARY_KEYS = ("final_J", "baseline_J", "iterations", "arcs", "singular_feedback", "timings")


def _check_csv(path: Path, columns, expected_rows=None) -> Dict:
    if not path.exists():
        return {'status': 'FAIL', 'error': f'File not found: {path}'}
    try:
        df = pd.read_csv(path)
    except Exception as e:
        return {'status': 'FAIL', 'error': str(e)}
    result = {'status': 'PASS', 'rows': len(df), 'columns': list(df.columns)}
    if list(df.columns) != list(columns):
        result['status'] = 'FAIL'
        result['error'] = f'columns {list(df.columns)} != {list(columns)}'
    elif expected_rows is not None and len(df) != expected_rows:
        result['status'] = 'FAIL'
        result['error'] = f'{len(df)} rows, expected {expected_rows}'
    return result


def validate_run(out_dir: Union[str, Path]) -> Dict:
    """
    Validate the output manifest of a run directory.

    Args:
        out_dir: Run directory

    Returns:
        Dictionary with validation status for each artifact and an overall status
    """
    out = Path(out_dir)
    results = {}
    summary = None

    summary_path = out / "summary.json"
    if summary_path.exists():
        try:
            with open(summary_path, 'r') as f:
                summary = json.load(f)
            missing = [key for key in SUMMARY_KEYS if key not in summary]
            finite = summary.get('final_J') is not None and np.isfinite(summary['final_J'])
            results['summary'] = {
                'status': 'PASS' if not missing and finite else 'FAIL',
                'missing_keys': missing,
                'final_J': summary.get('final_J'),
            }
        except Exception as e:
            results['summary'] = {'status': 'FAIL', 'error': str(e)}
    else:
        results['summary'] = {'status': 'FAIL', 'error': f'File not found: {summary_path}'}

    pairs = None
    grid_nodes = None
    if summary is not None and 'iterations' in summary:
        pairs = max(len(summary['iterations']) - 1, 0)
    if summary is not None and isinstance(summary.get('config'), dict):
        grid_nodes = summary['config'].get('grid', 0) + 1

    results['convergence'] = _check_csv(out / "convergence.csv", CONVERGENCE_COLUMNS, pairs)
    results['control'] = _check_csv(out / "control.csv", CONTROL_COLUMNS, grid_nodes)
    if results['control']['status'] == 'PASS':
        labels = set(pd.read_csv(out / "control.csv")['label'])
        unknown = labels - {MAX, MIN, SINGULAR}
        if unknown:
            results['control']['status'] = 'FAIL'
            results['control']['error'] = f'unknown labels {sorted(unknown)}'

    traj = out / "trajectories.csv"
    if traj.exists():
        df = pd.read_csv(traj)
        ok = len(df.columns) >= 2 and df.columns[0] == 't'
        results['trajectories'] = {'status': 'PASS' if ok else 'FAIL', 'rows': len(df)}
    else:
        results['trajectories'] = {'status': 'WARNING', 'error': f'File not found: {traj}'}

    plot = out / "plot.gp"
    results['plot_script'] = {'status': 'PASS' if plot.exists() else 'WARNING'}
    if not plot.exists():
        results['plot_script']['error'] = f'File not found: {plot}'

    # Overall status
    statuses = [r.get('status', 'FAIL') for r in results.values()]
    if 'FAIL' in statuses:
        overall_status = 'FAIL'
    elif 'WARNING' in statuses:
        overall_status = 'WARNING'
    else:
        overall_status = 'PASS'

    results['overall'] = {'status': overall_status}
    return results
