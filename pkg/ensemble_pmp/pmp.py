"""
Ensemble Pontryagin analysis: switching function, Hamiltonian, arc
classification and the first-order singular feedback law.

Sign convention: p(T) = -grad g and the control maximizes the ensemble
Hamiltonian, so u = u_max where the switching function is positive and
u = u_min where it is negative.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .dynamics import FieldPair, ProblemSpec, first_bracket, nested_brackets, param_values
from .ensemble import Ensemble
from .errors import DimensionError
from .integrate import AdjointPath, StatePath, TimeGrid

logger = logging.getLogger(__name__)

MAX, MIN, SINGULAR = "MAX", "MIN", "SINGULAR"
DEFAULT_EPS_RELATIVE = 1e-3
DEFAULT_DELTA_RELATIVE = 1e-8


@dataclass(frozen=True)
class SwitchingProfile:
    """Psi(t_j) = sum_i w_i <p_j^(i), f1(x_j^(i), w_i)> with its dead-band."""

    grid: TimeGrid
    psi: np.ndarray
    eps_sing: float

    @property
    def scale(self) -> float:
        return float(np.max(np.abs(self.psi))) if self.psi.size else 0.0


@dataclass(frozen=True)
class ArcClassification:
    """Per-node labels and the maximal constant-label intervals."""

    labels: Tuple[str, ...]
    intervals: Tuple[Tuple[str, int, int], ...]
    grid: Optional[TimeGrid] = None

    def interval_times(self) -> List[dict]:
        """Intervals as {label, start, end, t_start, t_end} records."""
        nodes = self.grid.nodes if self.grid is not None else None
        out = []
        for label, start, end in self.intervals:
            record = {"label": label, "start": start, "end": end}
            if nodes is not None:
                record["t_start"] = float(nodes[start])
                record["t_end"] = float(nodes[end])
            out.append(record)
        return out

    def count(self, label: str) -> int:
        return sum(1 for lab in self.labels if lab == label)


def stack_paths(paths: Sequence[StatePath], adjoints: Sequence[AdjointPath],
                ensemble: Ensemble) -> Tuple[np.ndarray, np.ndarray]:
    """Stack per-sample paths into arrays of shape (N+1, k, n)."""
    if not (len(paths) == len(adjoints) == ensemble.size):
        raise DimensionError(f"got {len(paths)} paths and {len(adjoints)} adjoints "
                             f"for an ensemble of {ensemble.size}")
    grid = paths[0].grid
    for path, adj in zip(paths, adjoints):
        if path.grid != grid or adj.grid != grid:
            raise DimensionError("paths and adjoints must share one time grid")
    states = np.stack([p.states for p in paths], axis=1)
    costates = np.stack([a.costates for a in adjoints], axis=1)
    return states, costates


def _dead_band(psi: np.ndarray, eps_sing: Optional[float]) -> float:
    if eps_sing is not None:
        return float(eps_sing)
    scale = float(np.max(np.abs(psi))) if psi.size else 0.0
    return DEFAULT_EPS_RELATIVE * scale if scale > 0 else np.finfo(float).tiny


def switching_values(fields: FieldPair, states: np.ndarray, costates: np.ndarray,
                     ensemble: Ensemble) -> np.ndarray:
    """Psi at every node from stacked arrays."""
    values = ensemble.stacked()
    inner = np.einsum("jkn,jkn->jk", costates, fields.f1(states, values))
    return inner @ ensemble.weights


def switching_function(adjoints: Sequence[AdjointPath], paths: Sequence[StatePath],
                       ensemble: Ensemble, fields: FieldPair,
                       eps_sing: Optional[float] = None) -> SwitchingProfile:
    """
    Ensemble switching function on the common grid.

    Args:
        adjoints: One costate path per sample
        paths: One state path per sample
        ensemble: Weights and parameters, same sample order
        fields: The control-affine pair
        eps_sing: Dead-band; defaults to 1e-3 * max |Psi|

    Returns:
        SwitchingProfile
    """
    states, costates = stack_paths(paths, adjoints, ensemble)
    psi = switching_values(fields, states, costates, ensemble)
    return SwitchingProfile(paths[0].grid, psi, _dead_band(psi, eps_sing))


def switching_derivative(fields: FieldPair, states: np.ndarray, costates: np.ndarray,
                         ensemble: Ensemble) -> np.ndarray:
    """d Psi / dt = sum_i w_i <p, [f0, f1]> at every node."""
    values = ensemble.stacked()
    bracket = first_bracket(fields, states, values)
    return np.einsum("jkn,jkn->jk", costates, bracket) @ ensemble.weights


def hamiltonian(fields: FieldPair, x: np.ndarray, p: np.ndarray, u, omega) -> np.ndarray:
    """
    H = <p, f0(x, w) + f1(x, w) u>.

    Args:
        fields: The control-affine pair
        x: State(s), shape (..., n)
        p: Costate(s), same shape
        u: Control value
        omega: Parameter sample

    Returns:
        Hamiltonian value(s), shape (...)
    """
    values = param_values(omega)
    x = np.asarray(x, dtype=float)
    rhs = fields.f0(x, values) + fields.f1(x, values) * u
    return np.einsum("...i,...i->...", np.asarray(p, dtype=float), rhs)


def ensemble_hamiltonian(fields: FieldPair, paths: Sequence[StatePath],
                         adjoints: Sequence[AdjointPath], ensemble: Ensemble,
                         j: int, u: float) -> float:
    """sum_i w_i H(x_j^(i), p_j^(i), u, w_i)."""
    states, costates = stack_paths(paths, adjoints, ensemble)
    h = hamiltonian(fields, states[j], costates[j], u, ensemble.stacked())
    return float(h @ ensemble.weights)


def _label(psi: np.ndarray, eps: float) -> List[str]:
    return [MAX if v > eps else MIN if v < -eps else SINGULAR for v in psi]


def _runs(labels: Sequence[str]) -> List[List]:
    runs: List[List] = []
    for idx, lab in enumerate(labels):
        if runs and runs[-1][0] == lab:
            runs[-1][2] = idx
        else:
            runs.append([lab, idx, idx])
    return runs


def _absorb_short(runs: List[List], min_nodes: int) -> List[List]:
    """Fold runs shorter than min_nodes into their longer neighbour, then re-merge."""
    while len(runs) > 1:
        lengths = [end - start + 1 for _, start, end in runs]
        short = [i for i, n in enumerate(lengths) if n < min_nodes]
        if not short:
            break
        i = min(short, key=lambda s: (lengths[s], s))
        left = lengths[i - 1] if i > 0 else -1
        right = lengths[i + 1] if i + 1 < len(runs) else -1
        target = i - 1 if left >= right else i + 1
        if target < i:
            runs[target][2] = runs[i][2]
        else:
            runs[target][1] = runs[i][1]
        del runs[i]
        merged: List[List] = []
        for run in runs:
            if merged and merged[-1][0] == run[0]:
                merged[-1][2] = run[2]
            else:
                merged.append(run)
        runs = merged
    return runs


def classify_arcs(psi: SwitchingProfile, min_nodes: int = 2) -> ArcClassification:
    """
    Label every node MAX / MIN / SINGULAR and merge labels into intervals.

    Node labels follow the dead-band exactly; intervals shorter than
    min_nodes are absorbed into the longer neighbouring interval.

    Args:
        psi: Switching profile (eps_sing > 0)
        min_nodes: Shortest interval kept on its own

    Returns:
        ArcClassification
    """
    if not psi.eps_sing > 0:
        raise ValueError(f"dead-band eps_sing must be positive, got {psi.eps_sing}")
    labels = _label(psi.psi, psi.eps_sing)
    runs = _absorb_short(_runs(labels), max(1, int(min_nodes)))
    return ArcClassification(tuple(labels), tuple((lab, s, e) for lab, s, e in runs), psi.grid)


@dataclass
class SingularFeedback:
    """Numerator, denominator and clamped feedback value at every node (NaN where undefined)."""

    numerator: np.ndarray
    denominator: np.ndarray
    value: np.ndarray
    unclamped: np.ndarray
    clamped_nodes: List[int] = field(default_factory=list)


def singular_feedback_profile(spec: ProblemSpec, states: np.ndarray, costates: np.ndarray,
                              ensemble: Ensemble, nodes: Optional[np.ndarray] = None,
                              delta_relative: float = DEFAULT_DELTA_RELATIVE) -> SingularFeedback:
    """
    u = -n_j / d_j with n_j = sum_i w_i <p, [f0,[f0,f1]]>, d_j = sum_i w_i <p, [f1,[f0,f1]]>.

    Args:
        spec: Problem description
        states, costates: Stacked arrays of shape (N+1, k, n)
        ensemble: Weights and parameters
        nodes: Boolean mask of nodes to evaluate (default: all)
        delta_relative: Denominator threshold factor, |d_j| > delta (|n_j| + 1)

    Returns:
        SingularFeedback; value is NaN where undefined or not evaluated
    """
    size = states.shape[0]
    mask = np.ones(size, dtype=bool) if nodes is None else np.asarray(nodes, dtype=bool)
    numerator = np.full(size, np.nan)
    denominator = np.full(size, np.nan)
    value = np.full(size, np.nan)
    unclamped = np.full(size, np.nan)
    clamped: List[int] = []
    idx = np.flatnonzero(mask)
    if idx.size:
        ad0, ad1 = nested_brackets(spec.fields, states[idx], ensemble.stacked())
        w = ensemble.weights
        numerator[idx] = np.einsum("jkn,jkn->jk", costates[idx], ad0) @ w
        denominator[idx] = np.einsum("jkn,jkn->jk", costates[idx], ad1) @ w
        defined = np.abs(denominator[idx]) > delta_relative * (np.abs(numerator[idx]) + 1.0)
        good = idx[defined]
        unclamped[good] = -numerator[good] / denominator[good]
        value[good] = np.clip(unclamped[good], spec.u_min, spec.u_max)
        clamped = [int(j) for j in good if value[j] != unclamped[j]]
        if clamped:
            logger.warning("singular feedback left [%g, %g] at %d node(s); values clamped",
                           spec.u_min, spec.u_max, len(clamped))
    return SingularFeedback(numerator, denominator, value, unclamped, clamped)


def singular_feedback(spec: ProblemSpec, paths: Sequence[StatePath],
                      adjoints: Sequence[AdjointPath], ensemble: Ensemble, j: int,
                      delta_relative: float = DEFAULT_DELTA_RELATIVE) -> Optional[float]:
    """
    Singular-arc control at node j, or None when the denominator vanishes
    (a higher-order singular arc).
    """
    states, costates = stack_paths(paths, adjoints, ensemble)
    mask = np.zeros(states.shape[0], dtype=bool)
    mask[j] = True
    result = singular_feedback_profile(spec, states, costates, ensemble, mask, delta_relative)
    v = result.value[j]
    return None if np.isnan(v) else float(v)
