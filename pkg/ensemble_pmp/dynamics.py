"""
Control-affine vector fields, Lie brackets and the problem description.

Every field is evaluated as f(x, omega) where x has shape (..., n) and the
parameter values in omega are scalars or arrays broadcastable against
x[..., 0]. A single sample uses x of shape (n,) with scalar parameters; the
integrators pass a whole ensemble at once with x of shape (k, n).
Jacobians have shape (..., n, n) and second derivatives shape (..., n, n, n)
with H[..., i, j, l] = d^2 f_i / dx_j dx_l.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional, Tuple, Union

import numpy as np

from .ensemble import ParamDistribution, ParamSample
from .errors import ConfigError, DimensionError

Params = Union[ParamSample, Mapping[str, object]]
VectorField = Callable[[np.ndarray, Mapping], np.ndarray]
MatrixField = Callable[[np.ndarray, Mapping], np.ndarray]

FD_RELATIVE_STEP = 1e-6


def param_values(omega: Params) -> Mapping:
    """Mapping of parameter name to value for either a ParamSample or a dict."""
    if isinstance(omega, ParamSample):
        return omega.values
    return omega


def fd_steps(x: np.ndarray) -> np.ndarray:
    """Per-coordinate central-difference step max(1e-6, 1e-6 * |x_j|)."""
    return np.maximum(FD_RELATIVE_STEP, FD_RELATIVE_STEP * np.abs(x))


def matvec(matrix: np.ndarray, vector: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...j->...i", matrix, vector)


@dataclass(frozen=True)
class Field:
    """One smooth vector field with its Jacobian and optional second derivative."""

    func: VectorField
    jac: MatrixField
    hess: Optional[Callable] = None

    def __call__(self, x, omega):
        return self.func(x, param_values(omega))

    def jacobian(self, x, omega):
        return self.jac(x, param_values(omega))

    def second_derivative(self, x, omega) -> np.ndarray:
        """Analytic second derivative when supplied, else central differences of the Jacobian."""
        values = param_values(omega)
        if self.hess is not None:
            return self.hess(x, values)
        return jacobian_derivative_fd(self.jac, x, values)


def jacobian_derivative_fd(jac: MatrixField, x: np.ndarray, values: Mapping) -> np.ndarray:
    """
    Central finite differences of an analytic Jacobian.

    Args:
        jac: Jacobian evaluator
        x: State(s), shape (..., n)
        values: Parameter values

    Returns:
        Array of shape (..., n, n, n), entry [i, j, l] = d J_ij / d x_l
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    steps = fd_steps(x)
    out = np.empty(x.shape[:-1] + (n, n, n))
    for l in range(n):
        e = np.zeros_like(x)
        e[..., l] = steps[..., l]
        diff = jac(x + e, values) - jac(x - e, values)
        out[..., :, :, l] = diff / (2.0 * steps[..., l])[..., None, None]
    return out


def jacobian_fd(func: VectorField, x: np.ndarray, omega: Params) -> np.ndarray:
    """Central-difference Jacobian of a vector field (test oracle)."""
    values = param_values(omega)
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    steps = fd_steps(x)
    out = np.empty(x.shape[:-1] + (n, n))
    for j in range(n):
        e = np.zeros_like(x)
        e[..., j] = steps[..., j]
        out[..., :, j] = (func(x + e, values) - func(x - e, values)) / (2.0 * steps[..., j])[..., None]
    return out


@dataclass(frozen=True)
class FieldPair:
    """The control-affine pair (f0, f1) of x' = f0(x, w) + f1(x, w) u."""

    state_dim: int
    f0: VectorField
    f1: VectorField
    jac_f0: MatrixField
    jac_f1: MatrixField
    hess_f0: Optional[Callable] = None
    hess_f1: Optional[Callable] = None
    # linear growth constants (c0, c1): |f_i(x, w)| <= c_i (1 + |x|)
    growth: Optional[Tuple[float, float]] = None
    state_names: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.state_dim < 1:
            raise DimensionError(f"state dimension must be positive, got {self.state_dim}")
        if not self.state_names:
            object.__setattr__(self, "state_names",
                               tuple(f"x{i + 1}" for i in range(self.state_dim)))
        elif len(self.state_names) != self.state_dim:
            raise DimensionError("state_names must have one entry per state component")

    @property
    def drift(self) -> Field:
        return Field(self.f0, self.jac_f0, self.hess_f0)

    @property
    def control(self) -> Field:
        return Field(self.f1, self.jac_f1, self.hess_f1)

    def jacobian(self, x: np.ndarray, u, omega: Params) -> np.ndarray:
        """d/dx (f0 + f1 u)."""
        values = param_values(omega)
        return self.jac_f0(x, values) + _control_column(u, 2) * self.jac_f1(x, values)


def _control_column(u, trailing: int):
    """Reshape a scalar or per-sample control so it broadcasts over trailing axes."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        return u
    return u.reshape(u.shape + (1,) * trailing)


def _check_state(fields: FieldPair, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (fields.state_dim,):
        raise DimensionError(f"state has shape {x.shape}, expected trailing dimension {fields.state_dim}")
    return x


def eval_rhs(fields: FieldPair, x: np.ndarray, u, omega: Params) -> np.ndarray:
    """
    Right-hand side f0(x, w) + f1(x, w) u.

    Args:
        fields: The control-affine pair
        x: State(s), shape (..., n)
        u: Control value (scalar or one per leading index)
        omega: Parameter sample

    Returns:
        Array with the same shape as x
    """
    x = _check_state(fields, x)
    values = param_values(omega)
    out = fields.f0(x, values) + fields.f1(x, values) * _control_column(u, 1)
    if out.shape != x.shape:
        raise DimensionError(f"field returned shape {out.shape} for state shape {x.shape}")
    return out


def lie_bracket(a_field: Field, b_field: Field, x: np.ndarray, omega: Params) -> np.ndarray:
    """
    Lie bracket [a, b](x) = b'(x) a(x) - a'(x) b(x).

    Args:
        a_field: First field (with Jacobian)
        b_field: Second field (with Jacobian)
        x: State(s), shape (..., n)
        omega: Parameter sample

    Returns:
        Bracket vector(s), same shape as x
    """
    x = np.asarray(x, dtype=float)
    a = a_field(x, omega)
    b = b_field(x, omega)
    ja = a_field.jacobian(x, omega)
    jb = b_field.jacobian(x, omega)
    n = x.shape[-1]
    for name, arr, shape in (("a", a, (n,)), ("b", b, (n,)), ("a'", ja, (n, n)), ("b'", jb, (n, n))):
        if np.shape(arr)[-len(shape):] != shape:
            raise DimensionError(f"{name} has shape {np.shape(arr)}, expected trailing {shape}")
    return matvec(jb, a) - matvec(ja, b)


def nested_brackets(fields: FieldPair, x: np.ndarray, omega: Params) -> Tuple[np.ndarray, np.ndarray]:
    """
    Evaluate [f0, [f0, f1]] and [f1, [f0, f1]] at x.

    The inner bracket b = J1 f0 - J0 f1 has Jacobian
    Db = H1[f0] + J1 J0 - H0[f1] - J0 J1, with H[v]_ij = sum_l H_ilj v_l.
    """
    x = _check_state(fields, x)
    values = param_values(omega)
    drift, control = fields.drift, fields.control
    f0 = fields.f0(x, values)
    f1 = np.broadcast_to(fields.f1(x, values), x.shape)
    j0 = fields.jac_f0(x, values)
    j1 = np.broadcast_to(fields.jac_f1(x, values), x.shape + (x.shape[-1],))
    h0 = drift.second_derivative(x, values)
    h1 = control.second_derivative(x, values)

    inner = matvec(j1, f0) - matvec(j0, f1)
    d_inner = (np.einsum("...ilj,...l->...ij", h1, f0) + j1 @ j0
               - np.einsum("...ilj,...l->...ij", h0, f1) - j0 @ j1)
    outer0 = matvec(d_inner, f0) - matvec(j0, inner)
    outer1 = matvec(d_inner, f1) - matvec(j1, inner)
    return outer0, outer1


def nested_bracket_fields(fields: FieldPair) -> Tuple[Callable, Callable]:
    """
    Evaluators x -> [f0, [f0, f1]](x, w) and x -> [f1, [f0, f1]](x, w).

    Second derivatives are analytic when the pair supplies them, otherwise
    central differences of the Jacobians with step max(1e-6, 1e-6 |x_j|).
    """
    def ad0(x, omega):
        return nested_brackets(fields, x, omega)[0]

    def ad1(x, omega):
        return nested_brackets(fields, x, omega)[1]

    return ad0, ad1


def first_bracket(fields: FieldPair, x: np.ndarray, omega: Params) -> np.ndarray:
    """[f0, f1](x, w)."""
    return lie_bracket(fields.drift, fields.control, x, omega)


@dataclass(frozen=True)
class ProblemSpec:
    """Full description of a Mayer-form ensemble optimal control problem."""

    name: str
    fields: FieldPair
    t0: float
    T: float
    x0: np.ndarray
    u_min: float
    u_max: float
    terminal_cost: Callable[[np.ndarray, Mapping], np.ndarray]
    grad_terminal_cost: Callable[[np.ndarray, Mapping], np.ndarray]
    distributions: Tuple[ParamDistribution, ...]
    params: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.T > self.t0:
            raise ConfigError(f"horizon needs T > t0, got t0={self.t0}, T={self.T}", field="T")
        if not self.u_min < self.u_max:
            raise ConfigError(f"control bounds need u_min < u_max, got [{self.u_min}, {self.u_max}]",
                              field="u_max")
        x0 = np.asarray(self.x0, dtype=float)
        if x0.shape != (self.fields.state_dim,):
            raise DimensionError(f"x0 has shape {x0.shape}, expected ({self.fields.state_dim},)")
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "distributions", tuple(self.distributions))

    @property
    def horizon(self) -> Tuple[float, float]:
        return (self.t0, self.T)

    @property
    def parameter_names(self) -> Tuple[str, ...]:
        return tuple(d.name for d in self.distributions)

    def cost(self, x: np.ndarray, omega: Params) -> np.ndarray:
        return self.terminal_cost(np.asarray(x, dtype=float), param_values(omega))

    def cost_gradient(self, x: np.ndarray, omega: Params) -> np.ndarray:
        return self.grad_terminal_cost(np.asarray(x, dtype=float), param_values(omega))
