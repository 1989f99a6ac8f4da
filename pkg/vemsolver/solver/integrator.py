"""
Variation-time integration.

Integrates a semi-discretized flow in variation time tau with either an
explicit Dormand-Prince 5(4) pair or a two-stage L-stable SDIRK method
with simplified Newton iterations. The driver ``evolve`` monitors descent
of the flow's functional at every accepted step, emits diagnostics at
fixed tau intervals and stops on stationarity, on the tau horizon or on
the step budget.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from tqdm import tqdm

from vemsolver.core.exceptions import (
    DescentViolationError,
    EvaluationError,
    IntegrationError,
    StiffnessSuspectedError,
    UsageError,
)
from vemsolver.core.settings_manager import get_solver_settings
from vemsolver.flows.base import BaseFlow
from vemsolver.flows.cov_flow import CovFlow, CovGains, CovVariant
from vemsolver.flows.zs_flow import FlowState, ZsFlow, ZsGains, default_guess
from vemsolver.models.grid import Profile, TimeGrid
from vemsolver.models.problem_defs import OcpProblem, VariationalProblem
from vemsolver.solver.jacobian import FlowJacobian

# Configure logger
logger = logging.getLogger(__name__)

RHS = Callable[[float, np.ndarray], np.ndarray]

MIN_DTAU = 1e-14
SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0

# Dormand-Prince 5(4), first-same-as-last
DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
DP_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)
# PI step-size control exponents
PI_ALPHA = 0.7 / 5
PI_BETA = 0.4 / 5

# Alexander's two-stage SDIRK, L-stable, order 2
SDIRK_GAMMA = 1.0 - math.sqrt(2.0) / 2.0


class Method(str, Enum):
    """Integration method."""

    RK45 = "rk45"
    STIFF = "stiff"


class EvolveOptions(BaseModel):
    """
    Options of a variation-time solve.

    Defaults for unset fields come from the [solver] section of
    config/settings.ini through ``from_settings``.
    """

    model_config = ConfigDict(extra="forbid")

    method: Optional[Method] = None
    rel_tol: float = Field(1e-6, gt=0)
    abs_tol: float = Field(1e-8, gt=0)
    tau_max: float = Field(1000.0, gt=0)
    residual_tol: float = Field(1e-6, gt=0)
    snapshot_every: float = Field(1.0, gt=0)
    max_steps: int = Field(200000, gt=0)
    descent_slack: float = Field(1e-9, ge=0)
    descent_abort_factor: float = Field(100.0, gt=1)
    newton_max_iter: int = Field(10, gt=0)
    fixed_step: Optional[float] = Field(None, gt=0)
    first_step: Optional[float] = Field(None, gt=0)
    max_dtau: Optional[float] = Field(None, gt=0)
    progress: bool = False

    @model_validator(mode="after")
    def check_fixed_step(self) -> "EvolveOptions":
        if self.fixed_step is not None and self.method is Method.STIFF:
            raise ValueError("fixed_step is only supported by the rk45 method")
        return self

    @classmethod
    def from_settings(cls, **overrides: Any) -> "EvolveOptions":
        """Build options from settings.ini defaults, with explicit overrides on top."""
        values: Dict[str, Any] = dict(get_solver_settings())
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class Tolerances:
    """Step-control tolerances."""

    rel_tol: float = 1e-6
    abs_tol: float = 1e-8
    max_dtau: float = math.inf
    newton_max_iter: int = 10


@dataclass
class StepResult:
    """
    Outcome of one accepted step.

    Attributes:
        y (np.ndarray): New state.
        dtau (float): Step actually taken.
        dtau_next (float): Suggested next step.
        error (float): Scaled error estimate of the accepted step.
        rejected (int): Trial steps rejected before acceptance.
        evaluations (int): Right-hand side evaluations spent.
        f_new (Optional[np.ndarray]): Right-hand side at the new state when known.
    """

    y: np.ndarray
    dtau: float
    dtau_next: float
    error: float
    rejected: int = 0
    evaluations: int = 0
    f_new: Optional[np.ndarray] = None


def error_norm(err: np.ndarray, y: np.ndarray, y_new: np.ndarray, tols: Tolerances) -> float:
    """RMS of err scaled by abs_tol + rel_tol * max(|y|, |y_new|)."""
    if err.size == 0:
        return 0.0
    scale = tols.abs_tol + tols.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
    value = float(np.sqrt(np.mean((err / scale) ** 2)))
    return value if math.isfinite(value) else math.inf


def initial_step(rhs: RHS, tau: float, y: np.ndarray, f0: np.ndarray, order: int, tols: Tolerances) -> float:
    """Starting step from the size and curvature of the solution."""
    scale = tols.abs_tol + np.abs(y) * tols.rel_tol
    d0 = float(np.sqrt(np.mean((y / scale) ** 2))) if y.size else 0.0
    d1 = float(np.sqrt(np.mean((f0 / scale) ** 2))) if y.size else 0.0
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    try:
        f1 = rhs(tau + h0, y + h0 * f0)
    except EvaluationError:
        return h0
    d2 = float(np.sqrt(np.mean(((f1 - f0) / scale) ** 2))) / h0 if y.size else 0.0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / (order + 1))
    return min(100.0 * h0, h1, tols.max_dtau)


def step_rk45(
    rhs: RHS,
    y: np.ndarray,
    tau: float,
    dtau: float,
    tols: Tolerances,
    f0: Optional[np.ndarray] = None,
    prev_error: Optional[float] = None,
    fixed: bool = False,
) -> StepResult:
    """
    One accepted Dormand-Prince 5(4) step.

    Trial steps whose scaled error exceeds 1 are rejected and retried with
    a smaller step; an accepted step proposes the next size with a
    safety-factored PI rule. With ``fixed`` the step is taken as given.

    Args:
        rhs (RHS): Right-hand side f(tau, y).
        y (np.ndarray): Current state.
        tau (float): Current variation time.
        dtau (float): Trial step, > 0.
        tols (Tolerances): Error tolerances.
        f0 (Optional[np.ndarray]): f(tau, y) if already known.
        prev_error (Optional[float]): Error of the previous accepted step.
        fixed (bool): Skip error control.

    Returns:
        StepResult: The accepted step; ``f_new`` holds f at the new state.

    Raises:
        StiffnessSuspectedError: If the step underflows below 1e-14.
    """
    if dtau <= 0:
        raise ValueError(f"dtau must be positive, got {dtau}")
    evaluations = 0
    if f0 is None:
        f0 = rhs(tau, y)
        evaluations += 1
    rejected = 0
    while True:
        if dtau < MIN_DTAU:
            raise StiffnessSuspectedError(
                f"Explicit step size collapsed to {dtau:.3e} at tau={tau:.6g}; "
                "the flow looks stiff, use the stiff method"
            )
        try:
            stages = [f0]
            for i in range(1, 7):
                increment = sum(a * k for a, k in zip(DP_A[i], stages) if a != 0.0)
                stage_y = y + dtau * increment
                stages.append(rhs(tau + DP_C[i] * dtau, stage_y))
                evaluations += 1
            y_new = stage_y
            err_vec = dtau * sum(e * k for e, k in zip(DP_E, stages) if e != 0.0)
            error = error_norm(err_vec, y, y_new, tols)
        except EvaluationError as exc:
            if fixed:
                raise
            logger.debug(f"Trial step {dtau:.3e} failed to evaluate ({exc}); halving")
            error = math.inf

        if fixed:
            return StepResult(y_new, dtau, dtau, error, rejected, evaluations, stages[-1])

        if error <= 1.0:
            if error == 0.0:
                factor = MAX_FACTOR
            else:
                previous = max(prev_error if prev_error is not None else 1.0, 1e-4)
                factor = SAFETY * error ** (-PI_ALPHA) * previous ** PI_BETA
                factor = min(MAX_FACTOR, max(MIN_FACTOR, factor))
            dtau_next = min(dtau * factor, tols.max_dtau)
            return StepResult(y_new, dtau, dtau_next, error, rejected, evaluations, stages[-1])

        rejected += 1
        if math.isfinite(error):
            dtau *= max(MIN_FACTOR, SAFETY * error ** -0.2)
        else:
            dtau *= 0.5


def _newton(
    rhs: RHS,
    tau: float,
    base: np.ndarray,
    guess: np.ndarray,
    c: float,
    solver,
    tols: Tolerances,
) -> Tuple[np.ndarray, Optional[np.ndarray], int, bool]:
    """Solve Z = base + c f(tau, Z); returns (Z, (Z - base) / c, evaluations, converged)."""
    z = guess.copy()
    previous = None
    for iteration in range(1, tols.newton_max_iter + 1):
        residual = z - base - c * rhs(tau, z)
        delta = solver.solve(-residual)
        z = z + delta
        norm = float(np.abs(delta).max()) if delta.size else 0.0
        tolerance = min(tols.rel_tol, 1e-8) * max(float(np.abs(z).max()) if z.size else 0.0, 1.0)
        if not math.isfinite(norm):
            return z, None, iteration, False
        if norm <= tolerance:
            return z, (z - base) / c, iteration, True
        if previous is not None:
            rate = norm / previous
            if rate >= 1.0:
                return z, None, iteration, False
            if rate / (1.0 - rate) * norm <= tolerance:
                return z, (z - base) / c, iteration, True
        previous = norm
    return z, None, tols.newton_max_iter, False


def step_implicit(
    rhs: RHS,
    y: np.ndarray,
    tau: float,
    dtau: float,
    tols: Tolerances,
    jacobian: Optional[FlowJacobian] = None,
    f0: Optional[np.ndarray] = None,
) -> StepResult:
    """
    One accepted step of the two-stage L-stable SDIRK method.

    Stage equations are solved by simplified Newton iterations on a reused
    finite-difference Jacobian. When Newton stalls the Jacobian is rebuilt
    at the step start and the step retried; if it still stalls the step is
    halved. The local error estimate is filtered through the iteration
    matrix so that stiff components do not throttle the step.

    Args:
        rhs (RHS): Right-hand side f(tau, y).
        y (np.ndarray): Current state.
        tau (float): Current variation time.
        dtau (float): Trial step, > 0.
        tols (Tolerances): Error and Newton settings.
        jacobian (Optional[FlowJacobian]): Cached Jacobian reused across steps.
        f0 (Optional[np.ndarray]): f(tau, y) if already known.

    Returns:
        StepResult: The accepted step.

    Raises:
        IntegrationError: If the step underflows below 1e-14.
    """
    if dtau <= 0:
        raise ValueError(f"dtau must be positive, got {dtau}")
    jac = jacobian if jacobian is not None else FlowJacobian(rhs)
    evaluations = 0
    if not jac.available or jac.size != y.size:
        jac.compute(tau, y, f0)
        evaluations += y.size
    fresh = jac.age == 0
    rejected = 0
    gamma = SDIRK_GAMMA

    while True:
        if dtau < MIN_DTAU:
            raise IntegrationError(f"Implicit step size collapsed to {dtau:.3e} at tau={tau:.6g}")
        c = dtau * gamma
        converged = False
        try:
            solver = jac.factor(c)
            stage1, f1, count, converged = _newton(rhs, tau + c, y, y, c, solver, tols)
            evaluations += count
            if converged:
                base = y + dtau * (1.0 - gamma) * f1
                stage2, f2, count, converged = _newton(rhs, tau + dtau, base, y + dtau * f1, c, solver, tols)
                evaluations += count
        except (EvaluationError, RuntimeError) as exc:
            logger.debug(f"Stage evaluation failed at dtau={dtau:.3e}: {exc}")
            converged = False

        if not converged:
            if not fresh:
                logger.debug(f"Newton stalled at tau={tau:.6g}, dtau={dtau:.3e}; rebuilding Jacobian")
                jac.compute(tau, y)
                evaluations += y.size
                fresh = True
                continue
            rejected += 1
            dtau *= 0.5
            continue

        err_vec = solver.solve(c * (f2 - f1))
        error = error_norm(err_vec, y, stage2, tols)
        if error <= 1.0:
            factor = MAX_FACTOR if error == 0.0 else min(MAX_FACTOR, max(MIN_FACTOR, SAFETY * error ** -0.5))
            jac.age += 1
            return StepResult(stage2, dtau, min(dtau * factor, tols.max_dtau), error, rejected, evaluations)

        rejected += 1
        dtau *= max(MIN_FACTOR, SAFETY * error ** -0.5) if math.isfinite(error) else 0.5


@dataclass
class IntegrationStats:
    """Work counters of a solve."""

    accepted: int = 0
    rejected: int = 0
    rhs_evaluations: int = 0
    jacobian_evaluations: int = 0


@dataclass
class IntegrationResult:
    """Outcome of ``integrate``."""

    y: np.ndarray
    tau: float
    stop_reason: str
    stats: IntegrationStats


StepCallback = Callable[[float, np.ndarray, np.ndarray, bool], Optional[str]]


def integrate(
    rhs: RHS,
    y0: np.ndarray,
    tau_end: float,
    method: Union[Method, str] = Method.RK45,
    tols: Optional[Tolerances] = None,
    checkpoint_every: Optional[float] = None,
    on_step: Optional[StepCallback] = None,
    first_step: Optional[float] = None,
    fixed_step: Optional[float] = None,
    max_steps: int = 200000,
    progress: bool = False,
) -> IntegrationResult:
    """
    Integrate y' = rhs(tau, y) from tau = 0 to tau_end.

    Steps are clipped so that they land exactly on every multiple of
    ``checkpoint_every`` and on tau_end. After each accepted step
    ``on_step(tau, y, f, at_checkpoint)`` may return a stop reason.

    Returns:
        IntegrationResult: Final state, final tau and the stop reason
        ('tau_max', 'max_steps' or whatever the callback returned).
    """
    method = Method(method)
    tols = tols or Tolerances()
    y = np.asarray(y0, dtype=float).copy()
    stats = IntegrationStats()
    tau = 0.0
    f = rhs(tau, y)
    stats.rhs_evaluations += 1
    jacobian = FlowJacobian(rhs) if method is Method.STIFF else None

    if fixed_step is not None:
        dtau = fixed_step
    elif first_step is not None:
        dtau = first_step
    else:
        dtau = initial_step(rhs, tau, y, f, 5 if method is Method.RK45 else 2, tols)
        stats.rhs_evaluations += 1
    prev_error: Optional[float] = None
    next_checkpoint = checkpoint_every if checkpoint_every else math.inf

    bar = tqdm(total=tau_end, disable=not progress, unit="tau", leave=False)
    reason = "tau_max"
    try:
        while True:
            if stats.accepted >= max_steps:
                reason = "max_steps"
                break
            target = min(next_checkpoint, tau_end)
            requested = fixed_step if fixed_step is not None else dtau
            # land on the checkpoint rather than leave a sliver step
            clipped = requested >= (target - tau) * (1.0 - 1e-9)
            trial = target - tau if clipped else requested

            if method is Method.RK45:
                step = step_rk45(rhs, y, tau, trial, tols, f0=f, prev_error=prev_error,
                                 fixed=fixed_step is not None)
            else:
                before = jacobian.evaluations
                step = step_implicit(rhs, y, tau, trial, tols, jacobian=jacobian, f0=f)
                stats.jacobian_evaluations += jacobian.evaluations - before

            stats.accepted += 1
            stats.rejected += step.rejected
            stats.rhs_evaluations += step.evaluations
            landed = step.dtau == trial and clipped
            tau_new = target if landed else tau + step.dtau
            y = step.y
            if step.f_new is not None:
                f = step.f_new
            else:
                f = rhs(tau_new, y)
                stats.rhs_evaluations += 1
            bar.update(tau_new - tau)
            tau = tau_new
            prev_error = step.error

            if fixed_step is None:
                dtau = max(step.dtau_next, dtau) if (landed and step.rejected == 0) else step.dtau_next

            at_checkpoint = landed and target == next_checkpoint
            if at_checkpoint:
                next_checkpoint += checkpoint_every
            if on_step is not None:
                stop = on_step(tau, y, f, at_checkpoint or tau >= tau_end)
                if stop:
                    reason = stop
                    break
            if tau >= tau_end:
                reason = "tau_max"
                break
    except EvaluationError as exc:
        raise exc.with_tau(tau) from exc
    finally:
        bar.close()

    return IntegrationResult(y=y, tau=tau, stop_reason=reason, stats=stats)


# ---------------------------------------------------------------------------
# Flow solves
# ---------------------------------------------------------------------------


@dataclass
class DiagnosticsRecord:
    """
    Diagnostics at one snapshot.

    Attributes:
        tau (float): Variation time.
        J (float): Original functional (integral of F, or the Bolza cost).
        J1 (Optional[float]): Sum-of-squares functional, optimal control solves only.
        residual_norm (float): Max norm of the optimality residual.
        stationarity (float): Max of |rate| / gain over the integrated values.
        tf (Optional[float]): Terminal time when it is free.
        descent_ok (bool): False if the monitored functional rose by more than
            the slack on any step since the previous record.
    """

    tau: float
    J: float
    J1: Optional[float]
    residual_norm: float
    stationarity: float
    tf: Optional[float]
    descent_ok: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class Snapshot:
    """Nodal values at one snapshot."""

    tau: float
    tf: float
    values: np.ndarray


@dataclass
class EvolveResult:
    """
    Outcome of ``evolve``.

    Attributes:
        values (np.ndarray): Final (N, width) nodal values.
        tf (float): Final terminal time.
        state (Union[Profile, FlowState]): Final state in problem form.
        diagnostics (List[DiagnosticsRecord]): Records in increasing tau.
        snapshots (List[Snapshot]): Nodal values at each record.
        stop_reason (str): 'residual_tol', 'tau_max' or 'max_steps'.
        tau (float): Final variation time.
        stats (IntegrationStats): Work counters.
        component_names (List[str]): Column names of ``values``.
        flow_size (int): Length of the integrated vector.
        flow_total_size (int): All nodal values plus tf, pinned ones included.
    """

    values: np.ndarray
    tf: float
    state: Union[Profile, FlowState]
    diagnostics: List[DiagnosticsRecord]
    snapshots: List[Snapshot]
    stop_reason: str
    tau: float
    stats: IntegrationStats
    component_names: List[str] = field(default_factory=list)
    flow_size: int = 0
    flow_total_size: int = 0

    @property
    def converged(self) -> bool:
        return self.stop_reason == "residual_tol"

    @property
    def final(self) -> DiagnosticsRecord:
        return self.diagnostics[-1]


def build_flow(problem: Union[VariationalProblem, OcpProblem], grid: TimeGrid,
               gains: Union[CovGains, ZsGains, None] = None) -> BaseFlow:
    """Pick the flow matching the problem family."""
    if isinstance(problem, VariationalProblem):
        return CovFlow(problem, grid, gains if gains is not None else CovGains())
    if isinstance(problem, OcpProblem):
        return ZsFlow(problem, grid, gains if gains is not None else ZsGains())
    raise TypeError(f"Unsupported problem type: {type(problem).__name__}")


def _initial_values(flow: BaseFlow, initial: Any) -> Tuple[np.ndarray, Optional[float]]:
    grid, problem = flow.grid, flow.problem
    if initial is None:
        if isinstance(flow, ZsFlow):
            return default_guess(problem, grid), problem.tf_initial
        return np.zeros((grid.n_points, flow.width)), None
    if isinstance(initial, FlowState):
        return initial.values, initial.tf
    if isinstance(initial, Profile):
        return initial.values, None
    return np.asarray(initial, dtype=float), None


def evolve(
    problem: Union[VariationalProblem, OcpProblem],
    initial: Union[Profile, FlowState, np.ndarray, None],
    grid: TimeGrid,
    gains: Union[CovGains, ZsGains, None] = None,
    opts: Optional[EvolveOptions] = None,
) -> EvolveResult:
    """
    Integrate the variation flow of a problem from an initial guess.

    Args:
        problem: Variational or optimal control problem.
        initial: Initial guess; None uses the default guess.
        grid (TimeGrid): Grid of the solve. Its tf is updated to the final
            terminal time when tf is free.
        gains: CovGains or ZsGains matching the problem.
        opts (Optional[EvolveOptions]): Solve options.

    Returns:
        EvolveResult: Final state, diagnostics and snapshots.

    Raises:
        DescentViolationError: If the monitored functional rises well beyond
            the slack (points at an inconsistent right-hand side).
        EvaluationError: With tau and node context when a callable fails.
    """
    flow = build_flow(problem, grid, gains)
    values, tf = _initial_values(flow, initial)
    if isinstance(flow, ZsFlow) and flow.has_tf and tf is None:
        tf = problem.tf_initial
    z0 = flow.prepare(values, tf)
    result = evolve_flow(flow, z0, opts or EvolveOptions())
    if flow.has_tf:
        grid.tf = result.tf
    return result


def evolve_flow(flow: BaseFlow, z0: np.ndarray, opts: EvolveOptions) -> EvolveResult:
    """Integrate a prepared flow; see ``evolve``."""
    method = opts.method or (Method.RK45 if isinstance(flow, CovFlow) else Method.STIFF)
    if opts.fixed_step is not None and method is Method.STIFF:
        raise UsageError("fixed_step is only supported by the rk45 method")
    if (isinstance(flow, CovFlow) and flow.gains.variant is CovVariant.SIGN
            and flow.gains.epsilon == 0.0 and opts.fixed_step is None):
        logger.warning("Pure sign variant with adaptive steps; expect step-size chattering")
    tols = Tolerances(opts.rel_tol, opts.abs_tol, opts.max_dtau or math.inf, opts.newton_max_iter)
    layout = flow.layout
    logger.info(
        f"Solving {getattr(flow.problem, 'name', 'problem')} with {method.value}: "
        f"{layout.size} integrated values ({layout.total_size} in total), tau_max={opts.tau_max:g}"
    )

    def _tf(tf: Optional[float]) -> float:
        return flow.grid.tf if tf is None else tf

    def _record(tau: float, z: np.ndarray, dz: np.ndarray, descent_ok: bool) -> DiagnosticsRecord:
        values, tf = flow.unpack(z)
        metrics = flow.metrics(values, tf)
        return DiagnosticsRecord(
            tau=tau,
            J=metrics["J"],
            J1=metrics["J1"],
            residual_norm=metrics["residual_norm"],
            stationarity=flow.stationarity(dz),
            tf=tf,
            descent_ok=descent_ok,
        )

    values0, tf0 = flow.unpack(z0)
    dz0 = flow.rhs(0.0, z0)
    diagnostics = [_record(0.0, z0, dz0, True)]
    snapshots = [Snapshot(0.0, _tf(tf0), values0.copy())]

    monitor = {
        "start": flow.functional(values0, tf0),
        "previous": None,
        "window_ok": True,
    }
    monitor["previous"] = monitor["start"]
    slack = opts.descent_slack * max(1.0, abs(monitor["start"]))
    abort_rise = opts.descent_abort_factor * slack

    def _on_step(tau: float, z: np.ndarray, dz: np.ndarray, at_checkpoint: bool) -> Optional[str]:
        values, tf = flow.unpack(z)
        current = flow.functional(values, tf)
        rise = current - monitor["previous"]
        if rise > slack:
            # one warning per diagnostics window
            log = logger.warning if monitor["window_ok"] else logger.debug
            log(f"{flow.monitored} rose by {rise:.3e} at tau={tau:.6g}")
            monitor["window_ok"] = False
            achieved = max(monitor["start"] - monitor["previous"], 0.0)
            if rise > abort_rise and rise > 1e-3 * achieved:
                dump = [record.to_dict() for record in diagnostics]
                raise DescentViolationError(
                    f"{flow.monitored} rose by {rise:.3e} at tau={tau:.6g} "
                    f"(slack {slack:.1e}); the flow right-hand side is inconsistent",
                    dump=dump,
                )
        monitor["previous"] = current

        stationarity = flow.stationarity(dz)
        converged = stationarity <= opts.residual_tol
        if at_checkpoint or converged:
            diagnostics.append(_record(tau, z, dz, monitor["window_ok"]))
            snapshots.append(Snapshot(tau, _tf(tf), values.copy()))
            monitor["window_ok"] = True
            logger.debug(
                f"tau={tau:.6g} {flow.monitored}={current:.6e} stationarity={stationarity:.3e}"
            )
        if converged:
            return "residual_tol"
        return None

    if flow.stationarity(dz0) <= opts.residual_tol:
        logger.info("Initial guess is already stationary")
        z_final, tau_final, reason = z0, 0.0, "residual_tol"
        stats = IntegrationStats(rhs_evaluations=1)
    else:
        outcome = integrate(
            flow.rhs,
            z0,
            opts.tau_max,
            method=method,
            tols=tols,
            checkpoint_every=opts.snapshot_every,
            on_step=_on_step,
            first_step=opts.first_step,
            fixed_step=opts.fixed_step,
            max_steps=opts.max_steps,
            progress=opts.progress,
        )
        z_final, tau_final, reason, stats = outcome.y, outcome.tau, outcome.stop_reason, outcome.stats
        if diagnostics[-1].tau < tau_final:
            dz_final = flow.rhs(tau_final, z_final)
            values_final, tf_final = flow.unpack(z_final)
            diagnostics.append(_record(tau_final, z_final, dz_final, monitor["window_ok"]))
            snapshots.append(Snapshot(tau_final, _tf(tf_final), values_final.copy()))

    values, tf = flow.unpack(z_final)
    if isinstance(flow, ZsFlow):
        problem = flow.problem
        state: Union[Profile, FlowState] = FlowState.from_values(values, problem.n, problem.m, tf)
    else:
        state = Profile(values, label="y")

    logger.info(
        f"Stopped at tau={tau_final:.6g} ({reason}) after {stats.accepted} steps, "
        f"{stats.rejected} rejected; {flow.monitored}={flow.functional(values, tf):.6e}"
    )
    return EvolveResult(
        values=values,
        tf=_tf(tf),
        state=state,
        diagnostics=diagnostics,
        snapshots=snapshots,
        stop_reason=reason,
        tau=tau_final,
        stats=stats,
        component_names=list(flow.component_names),
        flow_size=flow.layout.size,
        flow_total_size=flow.layout.total_size,
    )
