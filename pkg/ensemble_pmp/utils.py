"""
Utility functions shared by the solver, the reports and the CLI.
"""

import numpy as np


def relative_change(previous: float, current: float) -> float:
    """
    Relative distance |previous - current| / |previous|.

    Returns 0 when both values are zero and inf when only previous is.
    """
    diff = abs(previous - current)
    if previous == 0:
        return 0.0 if diff == 0 else float("inf")
    return diff / abs(previous)


def trapezoid_weights(n_nodes: int, h: float) -> np.ndarray:
    """
    Quadrature weights of the composite trapezoidal rule on a uniform grid.

    Args:
        n_nodes: Number of grid nodes (N + 1)
        h: Step size

    Returns:
        Array of length n_nodes: h/2 at both ends, h inside
    """
    w = np.full(n_nodes, h, dtype=float)
    if n_nodes == 1:
        return np.zeros(1)
    w[0] = w[-1] = h / 2.0
    return w


def control_l2_norm(values: np.ndarray, h: float) -> float:
    """Continuous L2 norm of a grid function (trapezoidal weights)."""
    values = np.asarray(values, dtype=float)
    w = trapezoid_weights(values.size, h)
    return float(np.sqrt(np.sum(w * values ** 2)))


def format_number(num: float) -> str:
    """
    Format a number for the metric tables.

    Integers get thousands separators, reals use 4 significant digits
    in scientific notation.
    """
    if isinstance(num, (int, np.integer)):
        return f"{num:,}"
    if num is None or not np.isfinite(num):
        return "nan"
    return f"{num:.4e}"


def data_status_emoji(status: str) -> str:
    """
    Convert status string to emoji.

    Args:
        status: Status string ('PASS', 'WARNING', 'FAIL')

    Returns:
        Appropriate emoji
    """
    emoji_map = {
        'PASS': '✅',
        'WARNING': '⚠️',
        'FAIL': '❌'
    }
    return emoji_map.get(status.upper(), '❓')
