"""
Built-in problems: the sterile insect technique (SIT) release model in
Mayer form, plus the small toys used as analytic oracles.

Models are addressed by name from the run config; custom problems are
built directly as ProblemSpec objects through the library.
"""

from dataclasses import asdict, dataclass, fields as dc_fields, replace
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .dynamics import FieldPair, ProblemSpec
from .ensemble import ParamDistribution
from .errors import ConfigError, ModelDomainError

SIT_STATES = ("A", "F", "M", "M_s", "z")
DENOMINATOR_FLOOR = 1e-12

SIT_DISTRIBUTIONS = (
    ParamDistribution.uniform("nu", 0.09, 0.11),
    ParamDistribution.uniform("mu_A", 0.009, 0.01),
    ParamDistribution.uniform("mu_F", 0.0625, 0.0714),
    ParamDistribution.uniform("mu_M", 0.0714, 0.083),
    ParamDistribution.uniform("mu_S", 0.111, 0.125),
)


@dataclass(frozen=True)
class SITParameters:
    """Fixed (non-random) parameters of the SIT release problem."""

    T: float = 90.0
    alpha: float = 6.66
    gamma: float = 0.91
    r: float = 0.5
    k: float = 20000.0
    c1: float = 0.15
    c2: float = 200.0
    A0: float = 19941.0
    F0: float = 14956.0
    M0: float = 12962.0
    Ms0: float = 0.0
    u_min: float = 0.0
    u_max: float = 2.0e5

    def __post_init__(self):
        if not self.k > 0:
            raise ConfigError(f"carrying capacity k must be positive, got {self.k}", field="k")
        if not self.gamma > 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}", field="gamma")
        if not 0.0 <= self.r <= 1.0:
            raise ConfigError(f"sex ratio r must lie in [0, 1], got {self.r}", field="r")
        if self.alpha < 0 or self.c1 < 0 or self.c2 < 0:
            raise ConfigError("alpha, c1 and c2 must be non-negative", field="alpha")
        if min(self.A0, self.F0, self.M0, self.Ms0) < 0:
            raise ConfigError("initial populations must be non-negative", field="A0")


def _apply_overrides(defaults, overrides: Optional[Mapping]):
    """dataclasses.replace with unknown keys reported by name."""
    if not overrides:
        return defaults
    known = {f.name for f in dc_fields(defaults)}
    unknown = sorted(set(overrides) - known)
    if unknown:
        raise ConfigError(f"unknown model parameter(s) {unknown}; known: {sorted(known)}",
                          field=f"params.{unknown[0]}")
    return replace(defaults, **{key: float(value) for key, value in overrides.items()})


def _upper(distributions: Sequence[ParamDistribution], name: str) -> float:
    for d in distributions:
        if d.name == name:
            return max(abs(d.support[0]), abs(d.support[1]))
    raise ConfigError(f"model needs a law for parameter '{name}'", field="distributions")


def _check_names(distributions: Sequence[ParamDistribution], required: Tuple[str, ...]) -> None:
    names = {d.name for d in distributions}
    missing = [name for name in required if name not in names]
    if missing:
        raise ConfigError(f"missing parameter law(s) {missing}", field="distributions")


def sit_problem(params: Optional[Mapping] = None,
                distributions: Optional[Sequence[ParamDistribution]] = None) -> ProblemSpec:
    """
    SIT release problem with the running cost absorbed into z' = c1 u.

    States (A, F, M, M_s, z); cost g = z(T) + c2 (F(T) + M(T));
    random parameters nu, mu_A, mu_F, mu_M, mu_S.

    Args:
        params: Overrides of SITParameters fields
        distributions: Replacement parameter laws (defaults to the uniform laws)

    Returns:
        ProblemSpec
    """
    fixed = params if isinstance(params, SITParameters) else _apply_overrides(SITParameters(), params)
    laws = tuple(distributions) if distributions else SIT_DISTRIBUTIONS
    _check_names(laws, ("nu", "mu_A", "mu_F", "mu_M", "mu_S"))
    alpha, gamma, r, cap, c1, c2 = fixed.alpha, fixed.gamma, fixed.r, fixed.k, fixed.c1, fixed.c2

    def unpack(x):
        return x[..., 0], x[..., 1], x[..., 2], x[..., 3]

    def denominator(M, Ms):
        D = M + gamma * Ms
        if np.any(np.abs(D) < DENOMINATOR_FLOOR):
            raise ModelDomainError("M + gamma*M_s vanished in the SIT drift")
        return D

    def f0(x, p):
        A, F, M, Ms = unpack(x)
        D = denominator(M, Ms)
        nu = p["nu"]
        out = np.zeros(np.broadcast_shapes(x.shape, np.shape(nu) + (5,)))
        out[..., 0] = alpha * M * F / D * (1.0 - A / cap) - (p["mu_A"] + nu) * A
        out[..., 1] = r * nu * A - p["mu_F"] * F
        out[..., 2] = (1.0 - r) * nu * A - p["mu_M"] * M
        out[..., 3] = -p["mu_S"] * Ms
        return out

    def f1(x, p):
        out = np.zeros(x.shape)
        out[..., 3] = 1.0
        out[..., 4] = c1
        return out

    def jac_f0(x, p):
        A, F, M, Ms = unpack(x)
        D = denominator(M, Ms)
        nu = p["nu"]
        L = 1.0 - A / cap
        J = np.zeros(np.broadcast_shapes(x.shape, np.shape(nu) + (5,)) + (5,))
        J[..., 0, 0] = -alpha * M * F / (D * cap) - (p["mu_A"] + nu)
        J[..., 0, 1] = alpha * L * M / D
        J[..., 0, 2] = alpha * L * F * gamma * Ms / D ** 2
        J[..., 0, 3] = -alpha * L * gamma * M * F / D ** 2
        J[..., 1, 0] = r * nu
        J[..., 1, 1] = -p["mu_F"]
        J[..., 2, 0] = (1.0 - r) * nu
        J[..., 2, 2] = -p["mu_M"]
        J[..., 3, 3] = -p["mu_S"]
        return J

    def jac_f1(x, p):
        return np.zeros(x.shape + (5,))

    def hess_f0(x, p):
        A, F, M, Ms = unpack(x)
        D = denominator(M, Ms)
        L = 1.0 - A / cap
        H = np.zeros(x.shape + (5, 5))
        entries = {
            (0, 1): -alpha * M / (cap * D),
            (0, 2): -alpha * F * gamma * Ms / (cap * D ** 2),
            (0, 3): alpha * gamma * M * F / (cap * D ** 2),
            (1, 2): alpha * L * gamma * Ms / D ** 2,
            (1, 3): -alpha * L * gamma * M / D ** 2,
            (2, 2): -2.0 * alpha * L * F * gamma * Ms / D ** 3,
            (2, 3): alpha * L * F * gamma * (M - gamma * Ms) / D ** 3,
            (3, 3): 2.0 * alpha * L * gamma ** 2 * M * F / D ** 3,
        }
        for (j, l), value in entries.items():
            H[..., 0, j, l] = value
            H[..., 0, l, j] = value
        return H

    def hess_f1(x, p):
        return np.zeros(x.shape + (5, 5))

    def g(x, p):
        return x[..., 4] + c2 * (x[..., 1] + x[..., 2])

    def grad_g(x, p):
        out = np.zeros(x.shape)
        out[..., 1] = c2
        out[..., 2] = c2
        out[..., 4] = 1.0
        return out

    # on the invariant region 0 <= A <= k, M_s >= 0 every coefficient bounds its column
    c0 = alpha + 2.0 * _upper(laws, "nu") + sum(_upper(laws, n) for n in ("mu_A", "mu_F", "mu_M", "mu_S"))
    pair = FieldPair(state_dim=5, f0=f0, f1=f1, jac_f0=jac_f0, jac_f1=jac_f1,
                     hess_f0=hess_f0, hess_f1=hess_f1,
                     growth=(c0, float(np.hypot(1.0, c1))), state_names=SIT_STATES)
    return ProblemSpec(
        name="sit", fields=pair, t0=0.0, T=fixed.T,
        x0=np.array([fixed.A0, fixed.F0, fixed.M0, fixed.Ms0, 0.0]),
        u_min=fixed.u_min, u_max=fixed.u_max,
        terminal_cost=g, grad_terminal_cost=grad_g,
        distributions=laws, params=asdict(fixed),
    )


@dataclass(frozen=True)
class LinearToyParameters:
    """x' = a x + b u, g = c x(T)."""

    b: float = 1.0
    c: float = 1.0
    x0: float = 0.0
    T: float = 1.0
    u_min: float = -1.0
    u_max: float = 1.0


def lq_toy(params: Optional[Mapping] = None,
           distributions: Optional[Sequence[ParamDistribution]] = None) -> ProblemSpec:
    """
    Scalar linear toy x' = a x + b u with terminal cost c x(T).

    The drift coefficient a is the random parameter (point mass at 0 by
    default, which reduces the dynamics to x' = b u).
    """
    fixed = _apply_overrides(LinearToyParameters(), params)
    laws = tuple(distributions) if distributions else (ParamDistribution.point("a", 0.0),)
    _check_names(laws, ("a",))
    b, c = fixed.b, fixed.c

    def f0(x, p):
        return np.asarray(p["a"])[..., None] * x

    def f1(x, p):
        return np.full(x.shape, b)

    def jac_f0(x, p):
        return np.asarray(p["a"])[..., None, None] * np.ones(x.shape + (1,))

    def jac_f1(x, p):
        return np.zeros(x.shape + (1,))

    def zero_hess(x, p):
        return np.zeros(x.shape + (1, 1))

    def g(x, p):
        return c * x[..., 0]

    def grad_g(x, p):
        return np.full(x.shape, c)

    pair = FieldPair(state_dim=1, f0=f0, f1=f1, jac_f0=jac_f0, jac_f1=jac_f1,
                     hess_f0=zero_hess, hess_f1=zero_hess,
                     growth=(_upper(laws, "a"), abs(b)), state_names=("x",))
    return ProblemSpec(name="lq_toy", fields=pair, t0=0.0, T=fixed.T, x0=np.array([fixed.x0]),
                       u_min=fixed.u_min, u_max=fixed.u_max, terminal_cost=g,
                       grad_terminal_cost=grad_g, distributions=laws, params=asdict(fixed))


def lq_ensemble(params: Optional[Mapping] = None,
                distributions: Optional[Sequence[ParamDistribution]] = None) -> ProblemSpec:
    """Linear toy with the drift coefficient a ~ Uniform(-0.5, 0.5)."""
    laws = tuple(distributions) if distributions else (ParamDistribution.uniform("a", -0.5, 0.5),)
    return replace(lq_toy(params, laws), name="lq_ensemble")


@dataclass(frozen=True)
class DoubleIntegratorParameters:
    T: float = 2.0
    x10: float = 0.0
    x20: float = 0.0
    u_min: float = -1.0
    u_max: float = 1.0


def double_integrator(params: Optional[Mapping] = None,
                      distributions: Optional[Sequence[ParamDistribution]] = None) -> ProblemSpec:
    """x1' = x2, x2' = u / m, cost x1(T); [f1, [f0, f1]] vanishes identically."""
    fixed = _apply_overrides(DoubleIntegratorParameters(), params)
    laws = tuple(distributions) if distributions else (ParamDistribution.point("m", 1.0),)
    _check_names(laws, ("m",))

    def f0(x, p):
        out = np.zeros(x.shape)
        out[..., 0] = x[..., 1]
        return out

    def f1(x, p):
        out = np.zeros(np.broadcast_shapes(x.shape, np.shape(p["m"]) + (2,)))
        out[..., 1] = 1.0 / np.asarray(p["m"])
        return out

    def jac_f0(x, p):
        J = np.zeros(x.shape + (2,))
        J[..., 0, 1] = 1.0
        return J

    def jac_f1(x, p):
        return np.zeros(x.shape + (2,))

    def zero_hess(x, p):
        return np.zeros(x.shape + (2, 2))

    def g(x, p):
        return x[..., 0]

    def grad_g(x, p):
        out = np.zeros(x.shape)
        out[..., 0] = 1.0
        return out

    m_low = min(abs(d.support[0]) for d in laws if d.name == "m")
    if m_low == 0:
        raise ConfigError("mass m must be bounded away from zero", field="distributions")
    pair = FieldPair(state_dim=2, f0=f0, f1=f1, jac_f0=jac_f0, jac_f1=jac_f1,
                     hess_f0=zero_hess, hess_f1=zero_hess, growth=(1.0, 1.0 / m_low),
                     state_names=("x1", "x2"))
    return ProblemSpec(name="double_integrator", fields=pair, t0=0.0, T=fixed.T,
                       x0=np.array([fixed.x10, fixed.x20]), u_min=fixed.u_min, u_max=fixed.u_max,
                       terminal_cost=g, grad_terminal_cost=grad_g, distributions=laws,
                       params=asdict(fixed))


@dataclass(frozen=True)
class SingularToyParameters:
    T: float = 3.0
    x0: float = 1.0
    u_min: float = -1.0
    u_max: float = 1.0


def singular_toy(params: Optional[Mapping] = None,
                 distributions: Optional[Sequence[ParamDistribution]] = None) -> ProblemSpec:
    """
    Minimize q * integral of x^2 with x' = u, written in Mayer form.

    States (x, y) with y' = q x^2, cost y(T). The optimum drives x to 0 with
    u = u_min and then stays on a first-order singular arc with u = 0, where
    [f1, [f0, f1]] = (0, -2q) keeps the feedback denominator away from zero.
    """
    fixed = _apply_overrides(SingularToyParameters(), params)
    laws = tuple(distributions) if distributions else (ParamDistribution.point("q", 1.0),)
    _check_names(laws, ("q",))

    def f0(x, p):
        out = np.zeros(np.broadcast_shapes(x.shape, np.shape(p["q"]) + (2,)))
        out[..., 1] = np.asarray(p["q"]) * x[..., 0] ** 2
        return out

    def f1(x, p):
        out = np.zeros(x.shape)
        out[..., 0] = 1.0
        return out

    def jac_f0(x, p):
        J = np.zeros(np.broadcast_shapes(x.shape, np.shape(p["q"]) + (2,)) + (2,))
        J[..., 1, 0] = 2.0 * np.asarray(p["q"]) * x[..., 0]
        return J

    def jac_f1(x, p):
        return np.zeros(x.shape + (2,))

    def hess_f0(x, p):
        H = np.zeros(np.broadcast_shapes(x.shape, np.shape(p["q"]) + (2,)) + (2, 2))
        H[..., 1, 0, 0] = 2.0 * np.asarray(p["q"])
        return H

    def hess_f1(x, p):
        return np.zeros(x.shape + (2, 2))

    def g(x, p):
        return x[..., 1]

    def grad_g(x, p):
        out = np.zeros(x.shape)
        out[..., 1] = 1.0
        return out

    pair = FieldPair(state_dim=2, f0=f0, f1=f1, jac_f0=jac_f0, jac_f1=jac_f1,
                     hess_f0=hess_f0, hess_f1=hess_f1, growth=None, state_names=("x", "y"))
    return ProblemSpec(name="singular_toy", fields=pair, t0=0.0, T=fixed.T,
                       x0=np.array([fixed.x0, 0.0]), u_min=fixed.u_min, u_max=fixed.u_max,
                       terminal_cost=g, grad_terminal_cost=grad_g, distributions=laws,
                       params=asdict(fixed))


MODELS: Dict[str, Callable[..., ProblemSpec]] = {
    "sit": sit_problem,
    "lq_toy": lq_toy,
    "lq_ensemble": lq_ensemble,
    "double_integrator": double_integrator,
    "singular_toy": singular_toy,
}


def build_problem(name: str, params: Optional[Mapping] = None,
                  distributions: Optional[Sequence[ParamDistribution]] = None) -> ProblemSpec:
    """Look up a built-in model by name and construct its ProblemSpec."""
    if name not in MODELS:
        raise ConfigError(f"unknown model '{name}' (available: {sorted(MODELS)})", field="model")
    return MODELS[name](params, distributions)
