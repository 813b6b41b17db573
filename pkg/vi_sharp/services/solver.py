"""The sharp-penalty fixed-point iteration with diminishing steps and restarts.

Each step is x <- x - theta_k * (F(x) + lambda * P(x)) while ||x|| stays within
the restart radius (2*rho_f by default); beyond it the iterate is reset to x0.
The iteration counter keeps running across restarts, so the step schedule is
never reset.
"""
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from loguru import logger
from numpy.typing import ArrayLike
from pydantic import ValidationError

from vi_sharp.core.config import settings
from vi_sharp.core.exceptions import (
    ConfigInvalid,
    NonFiniteIterate,
    NonPositiveArgument,
)
from vi_sharp.models.schemas import PenaltyMethod, SolverConfig, Zone
from vi_sharp.services.cones import has_exact_projection
from vi_sharp.services.geometry import Vector, as_vector
from vi_sharp.services.operators import (
    PenalizedOperator,
    Problem,
    estimate_operator_bound,
    lambda_bound,
    residual_checked,
)
from vi_sharp.services.schedules import StepController, describe
from vi_sharp.utils.decorators import timing_decorator


@dataclass(frozen=True)
class TraceRecord:
    """State at iteration k, before the update.

    ``step`` is the step size actually applied and ``restarted`` marks an iterate
    beyond the restart radius, whose successor is x0. F is never evaluated at a
    restarted iterate, so its ``f_norm`` and ``residual`` are None.
    """

    k: int
    x: Vector
    step: float
    f_norm: Optional[float]
    zone: Zone
    residual: Optional[float]
    merit: Optional[float]
    restarted: bool


@dataclass
class SolveResult:
    best: Vector
    best_iter: int
    best_residual: float
    restarts: int
    iters_run: int
    certified_eps: float
    lam: float
    lambda_bound: float
    m_bound: float
    restart_radius: float
    epsilon: float
    schedule: str
    note: Optional[str] = None
    known_solution: Optional[Vector] = None
    restart_iters: List[int] = field(default_factory=list)
    trace: List[TraceRecord] = field(default_factory=list)


def _validation_field(e: ValidationError) -> Tuple[str, str]:
    error = e.errors()[0]
    loc = ".".join(str(part) for part in error["loc"]) or "solver"
    return f"solver.{loc}" if loc != "solver" else loc, error["msg"]


def resolve_config(cfg: SolverConfig, problem: Problem) -> SolverConfig:
    """Fill rho_f from the operator and re-check the invariants that depend on it.

    Raises:
        ConfigInvalid: naming the offending field.
    """
    op, feasible_set = problem
    if cfg.rho_f is None:
        data = cfg.model_dump(by_alias=True)
        data["rho_f"] = op.rho_f
        try:
            cfg = SolverConfig.model_validate(data)
        except ValidationError as e:
            raise ConfigInvalid(*_validation_field(e)) from e
    if cfg.x0 is not None and len(cfg.x0) != op.dim:
        raise ConfigInvalid("solver.x0", f"has dimension {len(cfg.x0)}, expected {op.dim}")

    reach = feasible_set.norm_bound()
    if reach > cfg.rho_f:
        message = f"feasible set reaches ||x|| = {reach:.6g} beyond rho_f = {cfg.rho_f:g}"
        if has_exact_projection(feasible_set):
            raise ConfigInvalid("solver.rho_f", message)
        # level-set bounds come from a padded box and over-estimate the reach
        logger.warning(message)
    return cfg


def initial_point(cfg: SolverConfig, dim: int) -> Vector:
    if cfg.x0 is None:
        return np.zeros(dim)
    return as_vector(cfg.x0, dim, "x0")


def _restart_radius(cfg: SolverConfig, op: PenalizedOperator) -> float:
    if cfg.restart_radius is not None:
        return cfg.restart_radius
    return 2.0 * (cfg.rho_f if cfg.rho_f is not None else op.base.rho_f)


def _merit(x: Vector, x_star: Optional[Vector]) -> Optional[float]:
    if x_star is None:
        return None
    offset = x - x_star
    return float(offset @ offset)


def _advance(x: Vector, f: Vector, theta: float, k: Optional[int] = None) -> Vector:
    x_next = x - theta * f
    if not np.isfinite(x_next).all():
        raise NonFiniteIterate(k)
    return x_next


def step(
    x: ArrayLike, op: PenalizedOperator, theta: float, cfg: SolverConfig
) -> Tuple[Vector, bool]:
    """One iteration: (x - theta * F_lambda(x), False), or (x0, True) past the restart radius.

    Raises:
        NonFiniteIterate: the update overflowed.
    """
    if not theta > 0:
        raise NonPositiveArgument(f"theta must be positive, got {theta}")
    x = as_vector(x, op.dim)
    if np.linalg.norm(x) > _restart_radius(cfg, op):
        return initial_point(cfg, op.dim), True
    return _advance(x, op(x), theta), False


def choose_lambda(cfg: SolverConfig, problem: Problem) -> Tuple[float, float, float]:
    """Return (lambda, Lambda_eps, M-hat) for a resolved config."""
    op = problem.operator
    m_hat = estimate_operator_bound(op, cfg.rho_f, settings.BOUND_SAMPLES, seed=cfg.seed)
    if m_hat == 0.0:
        logger.warning(f"{op.name}: F vanishes on the sampled ball; using M-hat = 1")
        m_hat = 1.0
    bound = lambda_bound(cfg.rho_f, m_hat, cfg.epsilon)
    if cfg.lambda_ == "auto":
        lam = cfg.lambda_factor * bound
    else:
        lam = float(cfg.lambda_)
        if lam < bound:
            logger.warning(
                f"lambda = {lam:.6g} is below the bound {bound:.6g}; "
                f"the penalized operator may not be oriented toward x*"
            )
    return lam, bound, m_hat


@timing_decorator
def solve(
    problem: Problem,
    cfg: SolverConfig,
    method: PenaltyMethod,
    on_record: Optional[Callable[[TraceRecord], None]] = None,
) -> SolveResult:
    """Run the penalized iteration for cfg.max_iters steps.

    Non-convergence is never an error: the result reports the best recorded
    iterate (least natural residual) and how far it is from x* when x* is known.

    Args:
        problem: Operator and feasible set.
        cfg: Solver configuration; rho_f defaults to the operator's.
        method: Penalty construction; its epsilon must match cfg.epsilon.
        on_record: Called with every trace record as it is produced.

    Raises:
        ConfigInvalid: inconsistent configuration.
        NonFiniteIterate: an iterate overflowed.
    """
    cfg = resolve_config(cfg, problem)
    if method.epsilon != cfg.epsilon:
        raise ConfigInvalid(
            "penalty.epsilon", f"{method.epsilon:g} differs from solver.epsilon {cfg.epsilon:g}"
        )
    op, feasible_set = problem
    lam, bound, m_hat = choose_lambda(cfg, problem)
    penalized = PenalizedOperator(op, feasible_set, method, lam)
    # superiorized form: P + F/lambda with steps lambda*theta_k
    operator = penalized.rescaled() if cfg.superiorized else penalized
    step_scale = lam if cfg.superiorized else 1.0
    controller = StepController(cfg.schedule)
    radius = cfg.radius
    x0 = initial_point(cfg, op.dim)
    x_star = op.known_solution

    logger.info(
        f"{op.name}: solving with eps={cfg.epsilon:g}, lambda={lam:.6g} "
        f"(bound {bound:.6g}, M-hat {m_hat:.6g}), {describe(cfg.schedule)}, "
        f"{cfg.max_iters} iterations"
    )

    trace: List[TraceRecord] = []
    restart_iters: List[int] = []
    best, best_iter, best_residual = x0, 0, float("inf")
    x = x0
    iters_run = 0
    for k in range(cfg.max_iters):
        theta_k = step_scale * controller(k)
        norm_x = float(np.sqrt(x @ x))
        if norm_x > radius:
            # F is only guaranteed finite within the radius: the record carries no F data
            record = TraceRecord(
                k=k,
                x=x,
                step=theta_k,
                f_norm=None,
                zone=penalized.penalty(x).zone,
                residual=None,
                merit=_merit(x, x_star),
                restarted=True,
            )
            trace.append(record)
            if on_record is not None:
                on_record(record)
            restart_iters.append(k)
            logger.debug(f"{op.name}: restart at k={k}, ||x|| = {norm_x:.4g}")
            iters_run = k + 1
            x = x0.copy()
            continue

        evaluation = operator.evaluate_checked(x)
        f = evaluation.value
        residual = residual_checked(feasible_set, x, evaluation.base)
        controller.observe(residual)
        stop = cfg.stop_residual is not None and residual <= cfg.stop_residual

        if stop or k % cfg.trace_every == 0:
            record = TraceRecord(
                k=k,
                x=x,
                step=theta_k,
                f_norm=float(np.sqrt(f @ f)),
                zone=evaluation.penalty.zone,
                residual=residual,
                merit=_merit(x, x_star),
                restarted=False,
            )
            trace.append(record)
            if on_record is not None:
                on_record(record)
            if residual < best_residual:
                best, best_iter, best_residual = x, k, residual

        iters_run = k + 1
        if stop:
            logger.info(f"{op.name}: residual {residual:.3e} reached the stop threshold at k={k}")
            break
        x = _advance(x, f, theta_k, k)

    if x_star is not None:
        certified_eps = float(np.linalg.norm(best - x_star))
    else:
        certified_eps = best_residual

    logger.info(
        f"{op.name}: best residual {best_residual:.3e} at k={best_iter}, "
        f"certified eps {certified_eps:.3e}, {len(restart_iters)} restarts"
    )
    return SolveResult(
        best=best,
        best_iter=best_iter,
        best_residual=best_residual,
        restarts=len(restart_iters),
        iters_run=iters_run,
        certified_eps=certified_eps,
        lam=lam,
        lambda_bound=bound,
        m_bound=m_hat,
        restart_radius=radius,
        epsilon=cfg.epsilon,
        schedule=describe(cfg.schedule),
        note=controller.note,
        known_solution=x_star,
        restart_iters=restart_iters,
        trace=trace,
    )
