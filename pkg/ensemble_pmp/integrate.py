"""
Fixed-grid RK4 integration of the state ensemble (forward) and of the
costate ensemble (backward), with the exact discrete adjoint of the
forward scheme and the Gronwall a-priori bound.

Inside a step the control is linear between its node values, so the two
middle RK stages use the average of the adjacent controls. All samples of
an ensemble are integrated together as one array of shape (k, n); the
results do not depend on that batching.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Mapping, Optional, Tuple

import numpy as np
from scipy.interpolate import interp1d

from .dynamics import ProblemSpec, param_values
from .ensemble import Ensemble, ParamSample
from .errors import DimensionError, IntegrationAbort, ModelDomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_j = t0 + j (T - t0) / N, j = 0..N."""

    t0: float
    T: float
    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise DimensionError(f"grid needs N >= 1 steps, got {self.N}")
        if not self.T > self.t0:
            raise DimensionError(f"grid needs T > t0, got [{self.t0}, {self.T}]")

    @classmethod
    def for_problem(cls, spec: ProblemSpec, N: int) -> "TimeGrid":
        return cls(spec.t0, spec.T, int(N))

    @property
    def h(self) -> float:
        return (self.T - self.t0) / self.N

    @property
    def nodes(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.N + 1)

    @property
    def size(self) -> int:
        return self.N + 1


@dataclass(frozen=True)
class ControlGrid:
    """Control node values on a TimeGrid."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.size,):
            raise DimensionError(f"control has shape {values.shape}, expected ({self.grid.size},)")
        if not np.all(np.isfinite(values)):
            raise DimensionError("control values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, grid: TimeGrid, value: float) -> "ControlGrid":
        return cls(grid, np.full(grid.size, float(value)))

    def project(self, u_min: float, u_max: float) -> "ControlGrid":
        return ControlGrid(self.grid, np.clip(self.values, u_min, u_max))

    def within(self, u_min: float, u_max: float) -> bool:
        return bool(np.all(self.values >= u_min) and np.all(self.values <= u_max))

    def resample(self, grid: TimeGrid) -> "ControlGrid":
        """Piecewise-linear transfer onto another grid."""
        if grid == self.grid:
            return self
        transfer = interp1d(self.grid.nodes, self.values, kind="linear",
                            bounds_error=False, fill_value=(self.values[0], self.values[-1]))
        return ControlGrid(grid, transfer(grid.nodes))

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True)
class StatePath:
    """State trajectory x(t_j, w) of one sample."""

    grid: TimeGrid
    states: np.ndarray
    sample: ParamSample

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


@dataclass(frozen=True)
class AdjointPath:
    """Costate trajectory p(t_j, w) of one sample."""

    grid: TimeGrid
    costates: np.ndarray
    sample: ParamSample


def _batched_values(omega) -> Mapping[str, np.ndarray]:
    """Parameter values as arrays of shape (k,) (k = 1 for a single sample)."""
    if isinstance(omega, Ensemble):
        return omega.stacked()
    return {name: np.atleast_1d(np.asarray(value, dtype=float))
            for name, value in param_values(omega).items()}


def _batch_size(values: Mapping[str, np.ndarray]) -> int:
    sizes = {np.size(v) for v in values.values()}
    if len(sizes) > 1:
        raise DimensionError(f"parameter arrays disagree in length: {sorted(sizes)}")
    return sizes.pop() if sizes else 1


def _check_finite(array: np.ndarray, what: str, step: int, time: float, offset: int = 0) -> None:
    if np.all(np.isfinite(array)):
        return
    bad = np.argwhere(~np.isfinite(array.reshape(array.shape[0], -1)))
    sample = int(bad[0][0]) + offset if bad.size else None
    raise IntegrationAbort(f"non-finite {what}", step=step, time=time, sample=sample)


def _rhs(spec: ProblemSpec, x: np.ndarray, u: float, values, step: int, time: float) -> np.ndarray:
    fields = spec.fields
    try:
        return fields.f0(x, values) + fields.f1(x, values) * u
    except ModelDomainError as exc:
        raise IntegrationAbort(str(exc), step=step, time=time) from exc


def forward_sweep(spec: ProblemSpec, u: ControlGrid, omega,
                  store_stages: bool = False) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    RK4 integration of all samples at once.

    Args:
        spec: Problem description
        u: Control on the integration grid
        omega: Ensemble, ParamSample or mapping of parameter values
        store_stages: Keep the four stage states of every step (discrete adjoint)

    Returns:
        (states of shape (N+1, k, n), stages of shape (N, 4, k, n) or None)
    """
    values = _batched_values(omega)
    k = _batch_size(values)
    grid = u.grid
    h, t = grid.h, grid.nodes
    n = spec.fields.state_dim
    states = np.empty((grid.size, k, n))
    states[0] = spec.x0
    stages = np.empty((grid.N, 4, k, n)) if store_stages else None
    uv = u.values

    x = states[0].copy()
    for j in range(grid.N):
        ua, ub = uv[j], uv[j + 1]
        um = 0.5 * (ua + ub)
        tm = t[j] + 0.5 * h
        k1 = _rhs(spec, x, ua, values, j, t[j])
        y2 = x + 0.5 * h * k1
        k2 = _rhs(spec, y2, um, values, j, tm)
        y3 = x + 0.5 * h * k2
        k3 = _rhs(spec, y3, um, values, j, tm)
        y4 = x + h * k3
        k4 = _rhs(spec, y4, ub, values, j, t[j + 1])
        if store_stages:
            stages[j, 0], stages[j, 1], stages[j, 2], stages[j, 3] = x, y2, y3, y4
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _check_finite(x, "state", j + 1, t[j + 1])
        states[j + 1] = x
    return states, stages


def integrate_forward(spec: ProblemSpec, u: ControlGrid, omega: ParamSample) -> StatePath:
    """
    State trajectory of one sample under control u.

    Args:
        spec: Problem description
        u: Control on the integration grid
        omega: Parameter sample

    Returns:
        StatePath with x_0 = x0
    """
    states, _ = forward_sweep(spec, u, omega)
    return StatePath(u.grid, states[:, 0, :], omega)


def integrate_ensemble(spec: ProblemSpec, u: ControlGrid, ensemble: Ensemble) -> List[StatePath]:
    """integrate_forward for every sample, in sample order."""
    states, _ = forward_sweep(spec, u, ensemble)
    return paths_from_array(u.grid, states, ensemble)


def paths_from_array(grid: TimeGrid, states: np.ndarray, ensemble: Ensemble) -> List[StatePath]:
    return [StatePath(grid, states[:, i, :], sample) for i, sample in enumerate(ensemble.samples)]


def adjoint_sweep(spec: ProblemSpec, u: ControlGrid, states: np.ndarray, omega) -> np.ndarray:
    """
    Backward RK4 for -p' = (J0 + u J1)^T p with p(T) = -grad g(x(T)).

    States between nodes are interpolated linearly.

    Args:
        spec: Problem description
        u: Control used for the forward sweep
        states: Forward states, shape (N+1, k, n)
        omega: Ensemble, ParamSample or mapping of parameter values

    Returns:
        Costates of shape (N+1, k, n)
    """
    values = _batched_values(omega)
    grid = u.grid
    h, t = grid.h, grid.nodes
    fields = spec.fields
    if states.shape[0] != grid.size:
        raise DimensionError(f"state path has {states.shape[0]} nodes, control has {grid.size}")
    costates = np.empty_like(states)
    p = -spec.grad_terminal_cost(states[-1], values)
    _check_finite(p, "costate", grid.N, t[-1])
    costates[-1] = p
    uv = u.values

    def rhs(x, uu, pp, step, time):
        try:
            A = fields.jac_f0(x, values) + uu * fields.jac_f1(x, values)
        except ModelDomainError as exc:
            raise IntegrationAbort(str(exc), step=step, time=time) from exc
        return -np.einsum("...ji,...j->...i", A, pp)

    for j in range(grid.N - 1, -1, -1):
        xa, xb = states[j], states[j + 1]
        xm = 0.5 * (xa + xb)
        um = 0.5 * (uv[j] + uv[j + 1])
        tm = t[j] + 0.5 * h
        k1 = rhs(xb, uv[j + 1], p, j + 1, t[j + 1])
        k2 = rhs(xm, um, p - 0.5 * h * k1, j, tm)
        k3 = rhs(xm, um, p - 0.5 * h * k2, j, tm)
        k4 = rhs(xa, uv[j], p - h * k3, j, t[j])
        p = p - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _check_finite(p, "costate", j, t[j])
        costates[j] = p
    return costates


def integrate_adjoint(spec: ProblemSpec, u: ControlGrid, path: StatePath,
                      omega: ParamSample) -> AdjointPath:
    """
    Costate trajectory of one sample along a forward path.

    Args:
        spec: Problem description
        u: Control of the forward run
        path: Output of integrate_forward for the same (u, omega)
        omega: Parameter sample

    Returns:
        AdjointPath with p_N = -grad g(x_N, omega)
    """
    costates = adjoint_sweep(spec, u, path.states[:, None, :], omega)
    return AdjointPath(u.grid, costates[:, 0, :], omega)


def adjoints_from_array(grid: TimeGrid, costates: np.ndarray, ensemble: Ensemble) -> List[AdjointPath]:
    return [AdjointPath(grid, costates[:, i, :], sample) for i, sample in enumerate(ensemble.samples)]


def discrete_adjoint_gradient(spec: ProblemSpec, u: ControlGrid, omega,
                              states: np.ndarray, stages: np.ndarray) -> np.ndarray:
    """
    Exact gradient of g(x_N) with respect to the control nodes.

    Reverse sweep through the RK4 stages of forward_sweep (with
    store_stages=True); the result is the derivative of the discrete cost,
    so it agrees with finite differences of cost_evaluate up to their own
    truncation error.

    Args:
        spec: Problem description
        u: Control of the forward run
        omega: Ensemble, ParamSample or mapping of parameter values
        states: Forward states, shape (N+1, k, n)
        stages: Stage states, shape (N, 4, k, n)

    Returns:
        Array of shape (k, N+1): d g(x_N^(i)) / d u_j per sample
    """
    values = _batched_values(omega)
    grid = u.grid
    h, t = grid.h, grid.nodes
    fields = spec.fields
    k = states.shape[1]
    grad = np.zeros((k, grid.size))
    lam = spec.grad_terminal_cost(states[-1], values)
    uv = u.values

    def pullback(y, uu, bar):
        A = fields.jac_f0(y, values) + uu * fields.jac_f1(y, values)
        ybar = np.einsum("...ji,...j->...i", A, bar)
        ubar = np.einsum("...i,...i->...", fields.f1(y, values), bar)
        return ybar, ubar

    for j in range(grid.N - 1, -1, -1):
        ua, ub = uv[j], uv[j + 1]
        um = 0.5 * (ua + ub)
        y1, y2, y3, y4 = stages[j]
        k1bar = (h / 6.0) * lam
        k2bar = (h / 3.0) * lam
        k3bar = (h / 3.0) * lam
        k4bar = (h / 6.0) * lam

        y4bar, ub_bar = pullback(y4, ub, k4bar)
        k3bar = k3bar + h * y4bar
        y3bar, um_bar3 = pullback(y3, um, k3bar)
        k2bar = k2bar + 0.5 * h * y3bar
        y2bar, um_bar2 = pullback(y2, um, k2bar)
        k1bar = k1bar + 0.5 * h * y2bar
        y1bar, ua_bar = pullback(y1, ua, k1bar)

        um_bar = um_bar2 + um_bar3
        grad[:, j] += ua_bar + 0.5 * um_bar
        grad[:, j + 1] += ub_bar + 0.5 * um_bar
        lam = lam + y1bar + y2bar + y3bar + y4bar
        _check_finite(lam, "discrete costate", j, t[j])
    return grad


def gronwall_bound(spec: ProblemSpec, u: ControlGrid) -> float:
    """
    A-priori ceiling [|x0| + c (T - t0)] exp(c (T - t0)), c = c0 + |u|_inf c1.

    The growth constants (c0, c1) come from the model. Returns inf when the
    exponential overflows a double.
    """
    if spec.fields.growth is None:
        raise ValueError(f"model '{spec.name}' does not declare linear growth constants")
    c0, c1 = spec.fields.growth
    c = c0 + u.sup_norm * c1
    span = spec.T - spec.t0
    x0 = float(np.linalg.norm(spec.x0))
    exponent = c * span
    if exponent > 700.0:
        return math.inf
    return (x0 + c * span) * math.exp(exponent)


def sup_norm(path: StatePath) -> float:
    """max_j |x_j| (Euclidean norm per node)."""
    return float(np.max(np.linalg.norm(path.states, axis=-1)))
