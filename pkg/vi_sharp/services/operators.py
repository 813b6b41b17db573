"""VI operators, the penalized operator F + lambda*P and operator diagnostics."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Union

import numpy as np
from loguru import logger
from numpy.typing import ArrayLike, NDArray
from scipy.stats import norm, qmc

from vi_sharp.core.config import settings
from vi_sharp.core.exceptions import (
    DidNotConverge,
    DimensionMismatch,
    NonFiniteOperatorValue,
    NonPositiveArgument,
)
from vi_sharp.models.schemas import PenaltyMethod, Zone
from vi_sharp.services.cones import PenaltyValue, penalty_at
from vi_sharp.services.geometry import ConvexSet, Vector, as_vector


@dataclass(frozen=True)
class ViOperator:
    """Single-valued operator F: R^dim -> R^dim with its problem metadata.

    Attributes:
        func: Pure map x -> F(x).
        dim: Space dimension.
        rho_f: Long-range orientation radius.
        monotone: Whether F is claimed to be monotone.
        kappa: Long-range orientation constant, diagnostic only.
        known_solution: x* when known (test problems).
        lipschitz: Lipschitz constant of F when known.
        batch_func: Optional vectorised map from an (n, dim) array to (n, dim) values.
    """

    func: Callable[[Vector], ArrayLike]
    dim: int
    rho_f: float
    monotone: bool = False
    kappa: Optional[float] = None
    known_solution: Optional[Vector] = None
    lipschitz: Optional[float] = None
    name: str = "custom"
    batch_func: Optional[Callable[[NDArray], NDArray]] = field(default=None, repr=False)

    def __post_init__(self):
        if self.dim < 1:
            raise NonPositiveArgument(f"dim must be positive, got {self.dim}")
        if not self.rho_f > 0:
            raise NonPositiveArgument(f"rho_f must be positive, got {self.rho_f}")
        if self.known_solution is not None:
            x_star = as_vector(self.known_solution, self.dim, "known_solution")
            x_star.setflags(write=False)
            object.__setattr__(self, "known_solution", x_star)

    def eval(self, x: ArrayLike) -> Vector:
        return self.eval_checked(as_vector(x, self.dim))

    def eval_checked(self, x: Vector) -> Vector:
        """F(x) for an already validated x; only the value is checked."""
        fx = np.asarray(self.func(x), dtype=np.float64).reshape(-1)
        if fx.size != self.dim:
            raise DimensionMismatch(self.dim, fx.size, "F(x)")
        if not np.isfinite(fx).all():
            raise NonFiniteOperatorValue(f"F({x.tolist()}) is not finite")
        return fx

    def eval_batch(self, points: NDArray) -> NDArray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if points.shape[1] != self.dim:
            raise DimensionMismatch(self.dim, points.shape[1], "points")
        if self.batch_func is not None:
            values = np.asarray(self.batch_func(points), dtype=np.float64)
        else:
            values = np.array([self.eval(p) for p in points])
        values = values.reshape(points.shape[0], self.dim)
        if not np.all(np.isfinite(values)):
            raise NonFiniteOperatorValue(f"{self.name}: F is not finite on the sampled points")
        return values


class Problem(NamedTuple):
    operator: ViOperator
    feasible_set: ConvexSet


@dataclass(frozen=True)
class PenalizedEvaluation:
    value: Vector
    base: Vector
    penalty: PenaltyValue


class PenalizedOperator:
    """F_lambda(x) = F(x) + lambda * P(x) with P the eps-sharp penalty mapping."""

    def __init__(
        self,
        base: ViOperator,
        feasible_set: ConvexSet,
        method: PenaltyMethod,
        lam: float,
        certify_strong: bool = False,
    ):
        if not lam > 0:
            raise NonPositiveArgument(f"lambda must be positive, got {lam}")
        if base.dim != feasible_set.dim:
            raise DimensionMismatch(base.dim, feasible_set.dim, "feasible set")
        self.base = base
        self.feasible_set = feasible_set
        self.method = method
        self.lam = float(lam)
        self.certify_strong = certify_strong

    @property
    def dim(self) -> int:
        return self.base.dim

    def penalty(self, x: Vector) -> PenaltyValue:
        return penalty_at(self.feasible_set, x, self.method, certify=self.certify_strong)

    def evaluate(self, x: ArrayLike) -> PenalizedEvaluation:
        return self.evaluate_checked(as_vector(x, self.dim))

    def evaluate_checked(self, x: Vector) -> PenalizedEvaluation:
        fx = self.base.eval_checked(x)
        pen = self.penalty(x)
        if pen.zone is Zone.INSIDE:
            return PenalizedEvaluation(fx, fx, pen)
        return PenalizedEvaluation(fx + self.lam * pen.direction, fx, pen)

    def __call__(self, x: ArrayLike) -> Vector:
        return self.evaluate(x).value

    def rescaled(self) -> "RescaledPenalizedOperator":
        return RescaledPenalizedOperator(
            self.base, self.feasible_set, self.method, self.lam, self.certify_strong
        )


class RescaledPenalizedOperator(PenalizedOperator):
    """P(x) + F(x)/lambda, the superiorized form; used with steps lambda*theta_k."""

    def evaluate_checked(self, x: Vector) -> PenalizedEvaluation:
        fx = self.base.eval_checked(x)
        pen = self.penalty(x)
        return PenalizedEvaluation(pen.direction + fx / self.lam, fx, pen)


def eval_penalized(op: PenalizedOperator, x: ArrayLike) -> Vector:
    """F(x) + lambda * sharp_penalty(X, x).direction; exactly F(x) inside X."""
    return op.evaluate(x).value


def natural_residual(feasible_set: ConvexSet, x: ArrayLike, fx: ArrayLike) -> float:
    """||x - P_X(x - F(x))||, zero exactly at VI solutions."""
    x = as_vector(x, feasible_set.dim)
    return residual_checked(feasible_set, x, np.asarray(fx, dtype=np.float64))


def residual_checked(feasible_set: ConvexSet, x: Vector, fx: Vector) -> float:
    offset = x - feasible_set._project(x - fx)
    return float(np.sqrt(offset @ offset))


# Sampling helpers


def ball_points(
    dim: int, radius: float, samples: int, seed: Optional[int] = None, center=None
) -> NDArray:
    """Quasi-random points in the ball ``center + radius*B`` (scrambled Halton)."""
    if samples < 1:
        raise NonPositiveArgument(f"samples must be positive, got {samples}")
    seed = settings.SAMPLING_SEED if seed is None else seed
    sampler = qmc.Halton(d=dim + 1, scramble=True, seed=seed)
    u = np.clip(sampler.random(samples), 1e-12, 1.0 - 1e-12)
    dirs = norm.ppf(u[:, 1:])
    lengths = np.linalg.norm(dirs, axis=1, keepdims=True)
    lengths[lengths == 0.0] = 1.0
    radii = radius * u[:, 0] ** (1.0 / dim)
    points = dirs / lengths * radii[:, None]
    if center is not None:
        points = points + np.asarray(center, dtype=np.float64)
    return points


def _point_pairs(dim: int, radius: float, samples: int, seed: Optional[int]):
    # half far pairs over the ball, half near pairs at 1% of the radius
    first = ball_points(dim, radius, samples, seed)
    second = ball_points(dim, radius, samples, None if seed is None else seed + 1)
    n_near = samples // 2
    second[:n_near] = first[:n_near] + 0.01 * second[:n_near]
    return first, second


def _evaluate_many(op: Union[ViOperator, PenalizedOperator], points: NDArray) -> NDArray:
    if isinstance(op, ViOperator):
        return op.eval_batch(points)
    return np.array([op(p) for p in points])


# Operator metadata


def estimate_operator_bound(
    op: ViOperator, radius: float, samples: Optional[int] = None, seed: Optional[int] = None
) -> float:
    """M-hat = safety factor times the largest sampled ||F(x)|| on ``radius*B``."""
    if not radius > 0:
        raise NonPositiveArgument(f"radius must be positive, got {radius}")
    samples = settings.BOUND_SAMPLES if samples is None else samples
    values = op.eval_batch(ball_points(op.dim, radius, samples, seed))
    bound = settings.BOUND_SAFETY_FACTOR * float(np.max(np.linalg.norm(values, axis=1)))
    logger.debug(f"{op.name}: operator bound M-hat = {bound:.6g} on {radius:g}B")
    return bound


def lambda_bound(rho_f: float, m_bound: float, eps: float) -> float:
    """Lambda_eps = rho_f * M / eps."""
    for label, value in (("rho_f", rho_f), ("m_bound", m_bound), ("eps", eps)):
        if not value > 0:
            raise NonPositiveArgument(f"{label} must be positive, got {value}")
    return rho_f * m_bound / eps


def orientation_margin(
    op: Union[ViOperator, PenalizedOperator],
    target: ArrayLike,
    region_radius: float,
    eps: float,
    samples: Optional[int] = None,
    seed: Optional[int] = None,
) -> float:
    """Empirical min of f(x).(x - target) over region_radius*B minus target + eps*B.

    A positive value is the sampled stand-in for a strong-orientation margin.
    Returns +inf when no sample falls outside the excluded ball.
    """
    if not eps > 0:
        raise NonPositiveArgument(f"eps must be positive, got {eps}")
    target = as_vector(target, op.dim, "target")
    samples = settings.BOUND_SAMPLES if samples is None else samples
    points = ball_points(op.dim, region_radius, samples, seed)
    offsets = points - target
    keep = np.linalg.norm(offsets, axis=1) > eps
    if not np.any(keep):
        return float("inf")
    values = _evaluate_many(op, points[keep])
    return float(np.min(np.sum(values * offsets[keep], axis=1)))


def estimate_lipschitz(
    op: ViOperator, radius: float, samples: Optional[int] = None, seed: Optional[int] = None
) -> float:
    """Largest sampled difference quotient ||F(x) - F(y)|| / ||x - y|| on radius*B."""
    samples = settings.BOUND_SAMPLES if samples is None else samples
    first, second = _point_pairs(op.dim, radius, samples, seed)
    gaps = np.linalg.norm(first - second, axis=1)
    keep = gaps > 0.0
    diffs = np.linalg.norm(op.eval_batch(first[keep]) - op.eval_batch(second[keep]), axis=1)
    return float(np.max(diffs / gaps[keep]))


@dataclass(frozen=True)
class MonotonicityAudit:
    worst: float
    pairs: int
    passed: bool


def monotonicity_audit(
    op: ViOperator,
    radius: Optional[float] = None,
    samples: Optional[int] = None,
    seed: Optional[int] = None,
    tol: float = 1e-8,
) -> MonotonicityAudit:
    """Check (F(x) - F(y)).(x - y) >= -tol on sampled pairs of ``radius*B``."""
    radius = 2.0 * op.rho_f if radius is None else radius
    samples = settings.BOUND_SAMPLES if samples is None else samples
    first, second = _point_pairs(op.dim, radius, samples, seed)
    products = np.sum(
        (op.eval_batch(first) - op.eval_batch(second)) * (first - second), axis=1
    )
    worst = float(np.min(products))
    audit = MonotonicityAudit(worst=worst, pairs=samples, passed=worst >= -tol)
    if op.monotone and not audit.passed:
        logger.warning(f"{op.name} is flagged monotone but fails the audit: {worst:.3e}")
    return audit


def estimate_orientation_radius(
    op: ViOperator,
    feasible_set: ConvexSet,
    kappa: float = 0.0,
    start: Optional[float] = None,
    growth: float = 2.0,
    max_steps: int = 20,
    samples: int = 2000,
    seed: Optional[int] = None,
) -> float:
    """Smallest rho on a geometric ladder with F(x).(x - y) > kappa*||x - y||.

    Tested for sampled x at distance at least rho from X (on the sphere of radius
    ||X|| + rho) against sampled y in X.
    """
    rng = np.random.default_rng(settings.SAMPLING_SEED if seed is None else seed)
    anchors = feasible_set.sample(samples, rng, boundary_fraction=0.5)
    reach = feasible_set.norm_bound()
    rho = start if start is not None else max(reach, 1.0) / 4.0
    dirs = ball_points(op.dim, 1.0, samples, seed)
    dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-300)
    for _ in range(max_steps):
        points = dirs * (reach + rho)
        offsets = points - anchors
        lhs = np.sum(op.eval_batch(points) * offsets, axis=1)
        if np.all(lhs > kappa * np.linalg.norm(offsets, axis=1)):
            return rho
        rho *= growth
    raise DidNotConverge(f"{op.name}: no long-range orientation radius found on the ladder")
