"""
Projected-gradient solver for the fixed-ensemble problem and the sample
average approximation (SAA) outer loop.

The inner loop alternates a forward sweep over all samples, an adjoint
sweep, and a projected step u <- clip(u - eta * grad) accepted by Armijo
backtracking on the ensemble cost, followed by bang steps that settle nodes
with a clear switching sign on their bound. The outer loop redraws the
ensemble for every size k of the schedule (or extends one nested draw),
warm-starts from the previous control and records the relative cost and
control distances between consecutive sizes.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from tqdm import tqdm

from .dynamics import ProblemSpec
from .ensemble import (Ensemble, ParamDistribution, derive_seed, expectation, leading_samples,
                       sample_ensemble)
from .errors import ConfigError, IntegrationAbort, ModelDomainError, SolverError
from .integrate import (ControlGrid, TimeGrid, adjoint_sweep, discrete_adjoint_gradient,
                        forward_sweep)
from .pmp import (ArcClassification, SingularFeedback, SwitchingProfile, SINGULAR,
                  classify_arcs, singular_feedback_profile, switching_values)
from .utils import control_l2_norm, relative_change, trapezoid_weights

logger = logging.getLogger(__name__)

GRADIENT_METHODS = ("discrete", "continuous")
STEP_RULES = ("bb", "expand")


@dataclass(frozen=True)
class SolverOptions:
    """Inner-solver knobs."""

    max_inner_iters: int = 300
    eta0: Optional[float] = None
    beta: float = 0.5
    armijo: float = 1e-4
    tol_inner: float = 1e-7
    grid: int = 900
    eps_sing: float = 1e-3
    delta_den: float = 1e-8
    max_backtracks: int = 40
    min_arc_nodes: int = 2
    gradient: str = "discrete"
    step_rule: str = "bb"
    bang_steps: int = 10

    def __post_init__(self):
        positive = {
            "max_inner_iters": self.max_inner_iters, "beta": self.beta, "armijo": self.armijo,
            "tol_inner": self.tol_inner, "grid": self.grid, "eps_sing": self.eps_sing,
            "delta_den": self.delta_den, "max_backtracks": self.max_backtracks,
            "min_arc_nodes": self.min_arc_nodes,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ConfigError(f"{name} must be positive, got {value}", field=f"solver.{name}")
        if self.bang_steps < 0:
            raise ConfigError(f"bang_steps must be non-negative, got {self.bang_steps}",
                              field="solver.bang_steps")
        if self.eta0 is not None and not self.eta0 > 0:
            raise ConfigError(f"eta0 must be positive, got {self.eta0}", field="solver.eta0")
        if not self.beta < 1:
            raise ConfigError(f"backtracking factor beta must be < 1, got {self.beta}", field="solver.beta")
        if not self.armijo < 1:
            raise ConfigError(f"armijo constant must be < 1, got {self.armijo}", field="solver.armijo")
        if self.gradient not in GRADIENT_METHODS:
            raise ConfigError(f"gradient must be one of {GRADIENT_METHODS}", field="solver.gradient")
        if self.step_rule not in STEP_RULES:
            raise ConfigError(f"step_rule must be one of {STEP_RULES}", field="solver.step_rule")


@dataclass(frozen=True)
class SaaSchedule:
    """
    Increasing ensemble sizes, base seed and outer stopping tolerances.

    With ``nested`` set, every size takes the leading samples of one draw of
    the largest size, so each ensemble extends the previous one.
    """

    sizes: Tuple[int, ...]
    base_seed: int = 0
    tol_J: float = 0.0
    tol_u: float = 0.0
    nested: bool = False

    def __post_init__(self):
        sizes = tuple(int(k) for k in self.sizes)
        if not sizes:
            raise ConfigError("schedule needs at least one ensemble size", field="schedule")
        if sizes[0] < 1 or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ConfigError(f"schedule sizes must be positive and strictly increasing, got {sizes}",
                              field="schedule")
        if self.base_seed < 0:
            raise ConfigError("base seed must be unsigned", field="seed")
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def from_range(cls, k_min: int, k_max: int, step: int = 1, **kwargs) -> "SaaSchedule":
        return cls(tuple(range(k_min, k_max + 1, step)), **kwargs)


@dataclass
class InnerResult:
    """Outcome of solve_fixed_ensemble."""

    control: ControlGrid
    J: float
    iterations: int
    stalled: bool
    history: List[float]
    gradient: np.ndarray


@dataclass
class IterationRecord:
    """One outer SAA iteration."""

    k: int
    seed: int
    J: float
    rel_J: Optional[float]
    rel_u: Optional[float]
    inner_iters: int
    stalled: bool
    wall: float

    def as_row(self) -> Dict:
        return {"k": self.k, "J": self.J, "rel_J": self.rel_J, "rel_u": self.rel_u,
                "inner_iters": self.inner_iters, "stalled": self.stalled}


@dataclass
class PMPAnalysis:
    """First-order optimality picture of a control on one ensemble."""

    states: np.ndarray
    costates: np.ndarray
    switching: SwitchingProfile
    arcs: ArcClassification
    feedback: SingularFeedback
    discrete_psi: np.ndarray


@dataclass
class SolveReport:
    """Result of saa_solve."""

    iterations: List[IterationRecord]
    control: ControlGrid
    switching: SwitchingProfile
    arcs: ArcClassification
    feedback: SingularFeedback
    discrete_psi: np.ndarray
    ensemble: Ensemble
    mean_states: np.ndarray
    baseline_J: float
    validation: Dict[str, float] = field(default_factory=dict)
    wall_clock: float = 0.0
    stopped_early: bool = False

    @property
    def final_J(self) -> float:
        return self.iterations[-1].J

    def pairs(self) -> List[IterationRecord]:
        """Records that carry rel_J / rel_u (one per consecutive pair of sizes)."""
        return [rec for rec in self.iterations if rec.rel_J is not None]


def terminal_costs(spec: ProblemSpec, states: np.ndarray, ensemble: Ensemble) -> np.ndarray:
    """g(x_i(T), w_i) for every sample."""
    return np.asarray(spec.terminal_cost(states[-1], ensemble.stacked()), dtype=float)


def _tag_sample(exc: IntegrationAbort, ensemble: Ensemble) -> IntegrationAbort:
    if exc.sample is None:
        return exc
    base = str(exc.args[0]).rsplit(" (", 1)[0]
    return IntegrationAbort(f"{base}, parameters "
                            f"{dict(ensemble.samples[exc.sample].values)}",
                            step=exc.step, time=exc.time, sample=exc.sample)


def _forward(spec: ProblemSpec, ensemble: Ensemble, u: ControlGrid, store_stages: bool):
    try:
        return forward_sweep(spec, u, ensemble, store_stages=store_stages)
    except IntegrationAbort as exc:
        raise _tag_sample(exc, ensemble) from exc


def cost_evaluate(spec: ProblemSpec, ensemble: Ensemble, u: ControlGrid) -> float:
    """
    Ensemble cost J_k[u] = sum_i w_i g(x_i(T), w_i).

    Args:
        spec: Problem description
        ensemble: Samples and weights
        u: Control on the configured grid

    Returns:
        Cost value
    """
    states, _ = _forward(spec, ensemble, u, store_stages=False)
    return expectation(terminal_costs(spec, states, ensemble), ensemble)


def ensemble_gradient(spec: ProblemSpec, ensemble: Ensemble, u: ControlGrid,
                      method: str = "discrete", states=None, stages=None) -> Tuple[float, np.ndarray]:
    """
    Cost and nodewise gradient dJ/du_j.

    "discrete" differentiates the RK4 scheme exactly; "continuous" uses
    -Psi_j times the trapezoid weight of node j with Psi from the backward
    costate sweep.

    Returns:
        (J, gradient of shape (N+1,))
    """
    if states is None or (method == "discrete" and stages is None):
        states, stages = _forward(spec, ensemble, u, store_stages=(method == "discrete"))
    J = expectation(terminal_costs(spec, states, ensemble), ensemble)
    if method == "discrete":
        per_sample = discrete_adjoint_gradient(spec, u, ensemble, states, stages)
        return J, ensemble.weights @ per_sample
    costates = adjoint_sweep(spec, u, states, ensemble)
    psi = switching_values(spec.fields, states, costates, ensemble)
    return J, -psi * trapezoid_weights(u.grid.size, u.grid.h)


def initial_control(spec: ProblemSpec, grid: TimeGrid) -> ControlGrid:
    """Midpoint of the control box."""
    return ControlGrid.constant(grid, 0.5 * (spec.u_min + spec.u_max))


class _Descent:
    """Mutable state of one fixed-ensemble solve."""

    def __init__(self, spec: ProblemSpec, ensemble: Ensemble, options: SolverOptions, u: ControlGrid):
        self.spec, self.ensemble, self.options = spec, ensemble, options
        self.store = options.gradient == "discrete"
        self.lo, self.hi = spec.u_min, spec.u_max
        self.u = u
        self.J, self.grad = ensemble_gradient(spec, ensemble, u, options.gradient)
        self.history = [self.J]
        self.iterations = 0
        self.stalled = False
        self.decrease = np.inf

    def _evaluate(self, values: np.ndarray):
        """Cost of a trial control, or None when the trial leaves the integrable region."""
        candidate = ControlGrid(self.u.grid, values)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                states, stages = _forward(self.spec, self.ensemble, candidate, self.store)
                J = expectation(terminal_costs(self.spec, states, self.ensemble), self.ensemble)
        except (IntegrationAbort, ModelDomainError) as exc:
            logger.debug("trial rejected: %s", exc)
            return None
        if not np.isfinite(J):
            logger.debug("trial rejected: non-finite cost")
            return None
        return candidate, J, states, stages

    def _backtrack(self, trial_at: Callable[[float], np.ndarray], step: float) -> Tuple[bool, float]:
        """
        Armijo backtracking along trial_at(step).

        Returns:
            (accepted, last step tried)
        """
        for _ in range(self.options.max_backtracks):
            values = trial_at(step)
            move = values - self.u.values
            if not np.any(move):
                return False, step
            evaluated = self._evaluate(values)
            if evaluated is not None:
                candidate, J_new, states, stages = evaluated
                if J_new <= self.J + self.options.armijo * float(self.grad @ move):
                    self.decrease = (self.J - J_new) / max(abs(self.J), np.finfo(float).tiny)
                    self.u, self.J = candidate, J_new
                    _, self.grad = ensemble_gradient(self.spec, self.ensemble, candidate,
                                                     self.options.gradient, states, stages)
                    self.history.append(J_new)
                    return True, step
            step *= self.options.beta
        return False, step

    def gradient_steps(self) -> None:
        """Projected-gradient iterations until the relative decrease drops below tol_inner."""
        opts = self.options
        lo, hi = self.lo, self.hi
        eta = None
        previous: Optional[Tuple[np.ndarray, np.ndarray]] = None
        while self.iterations < opts.max_inner_iters:
            self.iterations += 1
            gmax = float(np.max(np.abs(self.grad)))
            if gmax == 0.0:
                logger.debug("zero gradient at inner iteration %d", self.iterations)
                return
            if eta is None:
                eta = opts.eta0 if opts.eta0 is not None else (hi - lo) / gmax
            elif opts.step_rule == "bb" and previous is not None:
                s = self.u.values - previous[0]
                y = self.grad - previous[1]
                sy = float(s @ y)
                eta = float(s @ s) / sy if sy > 0 else eta / opts.beta
            else:
                eta = eta / opts.beta

            u0, g0 = self.u.values, self.grad
            accepted, eta = self._backtrack(lambda step: np.clip(u0 - step * g0, lo, hi), eta)
            if not accepted:
                if np.any(np.clip(u0 - eta * g0, lo, hi) - u0):
                    self.stalled = True
                    logger.warning("line search exhausted after %d backtracks at inner iteration %d",
                                   opts.max_backtracks, self.iterations)
                return
            previous = (u0, g0)
            logger.debug("inner %d: J=%.10g eta=%.3g rel decrease=%.3g",
                         self.iterations, self.J, eta, self.decrease)
            if self.decrease < opts.tol_inner:
                return

    def bang_step(self) -> bool:
        """
        Move every node whose switching value lies outside the dead band
        toward the bound its sign selects, backtracking on the fraction of
        the move. Nodes inside the dead band stay put.

        Returns:
            True when a move was accepted
        """
        psi = -self.grad / trapezoid_weights(self.u.grid.size, self.u.grid.h)
        scale = float(np.max(np.abs(psi)))
        if scale == 0.0:
            return False
        eps = self.options.eps_sing * scale
        base = self.u.values
        target = base.copy()
        target[psi > eps] = self.hi
        target[psi < -eps] = self.lo
        direction = target - base
        if not np.any(direction):
            return False
        self.iterations += 1

        def trial_at(fraction: float) -> np.ndarray:
            return target if fraction >= 1.0 else base + fraction * direction

        accepted, fraction = self._backtrack(trial_at, 1.0)
        logger.debug("bang step %s (fraction %.3g, %d nodes)", "accepted" if accepted else "rejected",
                     fraction, int(np.count_nonzero(direction)))
        return accepted


def solve_fixed_ensemble(spec: ProblemSpec, ensemble: Ensemble, options: SolverOptions,
                         warm_start: Optional[ControlGrid] = None) -> InnerResult:
    """
    Projected gradient with Armijo backtracking for the fixed-ensemble problem.

    Once the gradient iterations stall on the relative-decrease test, up to
    ``options.bang_steps`` bang steps push nodes with a clear switching sign
    onto their bound, each followed by a fresh round of gradient iterations.
    A trial control whose sweep aborts counts as a rejected trial.

    Args:
        spec: Problem description
        ensemble: Samples and weights
        options: Solver knobs
        warm_start: Starting control (resampled onto the solver grid)

    Returns:
        InnerResult holding the best iterate; stalled is set when the line
        search ran out of backtracks

    Raises:
        IntegrationAbort: the starting control cannot be integrated
    """
    grid = TimeGrid.for_problem(spec, options.grid)
    if warm_start is not None:
        u = warm_start.resample(grid).project(spec.u_min, spec.u_max)
    else:
        u = initial_control(spec, grid)

    descent = _Descent(spec, ensemble, options, u)
    descent.gradient_steps()
    rounds = 0
    while (rounds < options.bang_steps and not descent.stalled
           and descent.iterations < options.max_inner_iters and descent.bang_step()):
        rounds += 1
        descent.gradient_steps()

    return InnerResult(control=descent.u, J=descent.J, iterations=descent.iterations,
                       stalled=descent.stalled, history=descent.history, gradient=descent.grad)


def analyze_control(spec: ProblemSpec, ensemble: Ensemble, u: ControlGrid,
                    options: SolverOptions) -> PMPAnalysis:
    """
    Switching function, arc labels and singular feedback for a control.

    Args:
        spec: Problem description
        ensemble: Samples and weights
        u: Control to analyse
        options: Supplies eps_sing, delta_den and min_arc_nodes

    Returns:
        PMPAnalysis
    """
    states, stages = _forward(spec, ensemble, u, store_stages=True)
    costates = adjoint_sweep(spec, u, states, ensemble)
    psi = switching_values(spec.fields, states, costates, ensemble)
    scale = float(np.max(np.abs(psi)))
    eps = options.eps_sing * scale if scale > 0 else np.finfo(float).tiny
    profile = SwitchingProfile(u.grid, psi, eps)
    arcs = classify_arcs(profile, options.min_arc_nodes)
    singular_nodes = np.array([lab == SINGULAR for lab in arcs.labels])
    feedback = singular_feedback_profile(spec, states, costates, ensemble, singular_nodes,
                                         options.delta_den)
    per_sample = discrete_adjoint_gradient(spec, u, ensemble, states, stages)
    weights = trapezoid_weights(u.grid.size, u.grid.h)
    discrete_psi = -(ensemble.weights @ per_sample) / weights
    return PMPAnalysis(states, costates, profile, arcs, feedback, discrete_psi)


def validate_control(spec: ProblemSpec, u: ControlGrid, n: int, seed: int,
                     distributions: Optional[Sequence[ParamDistribution]] = None) -> Dict[str, float]:
    """
    Out-of-sample estimate of the true expected cost of a control.

    Args:
        spec: Problem description
        u: Control to evaluate
        n: Number of fresh samples
        seed: Seed of the validation ensemble
        distributions: Parameter laws (defaults to the problem's own)

    Returns:
        {"samples", "mean", "stderr"}
    """
    ensemble = sample_ensemble(distributions or spec.distributions, n, seed)
    states, _ = _forward(spec, ensemble, u, store_stages=False)
    costs = terminal_costs(spec, states, ensemble)
    stderr = float(stats.sem(costs)) if n > 1 else 0.0
    return {"samples": n, "mean": expectation(costs, ensemble), "stderr": stderr}


def saa_solve(spec: ProblemSpec, schedule: SaaSchedule, options: SolverOptions,
              validation_samples: int = 0, progress: bool = False) -> SolveReport:
    """
    Sample average approximation over an increasing schedule of ensemble sizes.

    Args:
        spec: Problem description
        schedule: Ensemble sizes, base seed and outer tolerances
        options: Inner-solver knobs
        validation_samples: Size of the out-of-sample check (0 disables it)
        progress: Show a progress bar

    Returns:
        SolveReport
    """
    start = time.perf_counter()
    records: List[IterationRecord] = []
    warm: Optional[ControlGrid] = None
    prev_J: Optional[float] = None
    ensemble: Optional[Ensemble] = None
    stopped_early = False
    pool: Optional[Ensemble] = None
    if schedule.nested:
        k_max = schedule.sizes[-1]
        pool = sample_ensemble(spec.distributions, k_max, derive_seed(schedule.base_seed, k_max))

    for k in tqdm(schedule.sizes, desc="SAA", unit="k", disable=not progress):
        tic = time.perf_counter()
        if pool is not None:
            seed = pool.seed
            ensemble = leading_samples(pool, k)
        else:
            seed = derive_seed(schedule.base_seed, k)
            ensemble = sample_ensemble(spec.distributions, k, seed)
        try:
            inner = solve_fixed_ensemble(spec, ensemble, options, warm_start=warm)
        except (IntegrationAbort, ModelDomainError) as exc:
            raise SolverError(f"inner solve failed at k={k}: {exc}",
                              partial_report=records) from exc
        if not np.isfinite(inner.J):
            raise SolverError(f"non-finite cost at k={k}", partial_report=records)

        rel_J = rel_u = None
        if warm is not None:
            rel_J = relative_change(prev_J, inner.J)
            norm_prev = control_l2_norm(warm.values, warm.grid.h)
            diff = control_l2_norm(warm.values - inner.control.values, warm.grid.h)
            rel_u = diff / norm_prev if norm_prev > 0 else (0.0 if diff == 0 else float("inf"))
        records.append(IterationRecord(k=k, seed=seed, J=inner.J, rel_J=rel_J, rel_u=rel_u,
                                       inner_iters=inner.iterations, stalled=inner.stalled,
                                       wall=time.perf_counter() - tic))
        logger.info("k=%d J=%.10g rel_J=%s rel_u=%s inner=%d", k, inner.J, rel_J, rel_u,
                    inner.iterations)
        warm, prev_J = inner.control, inner.J
        if rel_J is not None and rel_J < schedule.tol_J and rel_u < schedule.tol_u:
            stopped_early = True
            logger.info("outer tolerances met at k=%d", k)
            break

    try:
        analysis = analyze_control(spec, ensemble, warm, options)
        baseline = cost_evaluate(spec, ensemble, ControlGrid.constant(warm.grid, spec.u_min))
        validation = {}
        if validation_samples > 0:
            validation = validate_control(spec, warm, validation_samples,
                                          derive_seed(schedule.base_seed, 0))
    except (IntegrationAbort, ModelDomainError) as exc:
        raise SolverError(f"post-solve analysis failed: {exc}", partial_report=records) from exc

    return SolveReport(
        iterations=records, control=warm, switching=analysis.switching, arcs=analysis.arcs,
        feedback=analysis.feedback, discrete_psi=analysis.discrete_psi, ensemble=ensemble,
        mean_states=np.einsum("jkn,k->jn", analysis.states, ensemble.weights),
        baseline_J=baseline, validation=validation,
        wall_clock=time.perf_counter() - start, stopped_early=stopped_early,
    )
