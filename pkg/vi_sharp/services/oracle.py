"""Reference solvers that mint x* certificates for validating the main iteration.

Every certificate is gated the same way: the natural residual at x* must be at
most ``settings.ORACLE_ACCEPT_RESIDUAL`` and the sampled PVI inequality
F(y).(y - x*) >= -``settings.ORACLE_GAP_TOL`` must hold over points y of X.
"""
from typing import Optional, Tuple

import numpy as np
from loguru import logger
from numpy.typing import ArrayLike, NDArray

from vi_sharp.core.config import settings
from vi_sharp.core.exceptions import (
    CertificateRejected,
    DidNotConverge,
    DimensionTooLarge,
    NonPositiveArgument,
    OraclePreconditionError,
)
from vi_sharp.models.schemas import OracleCertificate
from vi_sharp.services.geometry import as_vector
from vi_sharp.services.operators import Problem, estimate_lipschitz, natural_residual
from vi_sharp.utils.decorators import timing_decorator
from vi_sharp.utils.parallel import ThreadedMap

MAX_GRID_DIM = 3
MAX_GRID_LEVELS = 60


def pvi_gap(problem: Problem, x_star: ArrayLike, points: NDArray) -> float:
    """Smallest F(y).(y - x*) over the given points of X."""
    offsets = points - np.asarray(x_star, dtype=np.float64)
    return float(np.min(np.sum(problem.operator.eval_batch(points) * offsets, axis=1)))


def certify(
    problem: Problem,
    x_star: ArrayLike,
    method: str,
    extra_points: Optional[NDArray] = None,
) -> OracleCertificate:
    """Check a candidate x* and wrap it in a certificate.

    Raises:
        CertificateRejected: residual or sampled PVI gap outside tolerance.
    """
    op, feasible_set = problem
    x_star = as_vector(x_star, op.dim, "x_star")
    residual = natural_residual(feasible_set, x_star, op.eval(x_star))
    rng = np.random.default_rng(settings.SAMPLING_SEED)
    points = feasible_set.sample(settings.ORACLE_GAP_SAMPLES, rng, boundary_fraction=0.5)
    if extra_points is not None and len(extra_points):
        points = np.vstack([points, extra_points])
    gap_min = pvi_gap(problem, x_star, points)

    if residual > settings.ORACLE_ACCEPT_RESIDUAL:
        raise CertificateRejected(
            f"{op.name}: {method} candidate has residual {residual:.3e} "
            f"> {settings.ORACLE_ACCEPT_RESIDUAL:g}"
        )
    if gap_min < -settings.ORACLE_GAP_TOL:
        raise CertificateRejected(
            f"{op.name}: PVI gap {gap_min:.3e} below -{settings.ORACLE_GAP_TOL:g}"
        )
    logger.info(
        f"{op.name}: {method} certificate accepted (residual {residual:.2e}, "
        f"gap {gap_min:.2e} over {len(points)} points)"
    )
    return OracleCertificate(
        x_star=x_star.tolist(),
        method=method,
        residual=residual,
        gap_samples=len(points),
        gap_min=gap_min,
        problem=op.name,
        seed=settings.SAMPLING_SEED,
    )


def _chunk_best(problem: Problem, chunk: NDArray) -> Tuple[Optional[NDArray], float]:
    op, feasible_set = problem
    points = chunk[feasible_set.contains_batch(chunk, settings.TOL_PROJ)]
    if not len(points):
        return None, float("inf")
    values = op.eval_batch(points)
    residuals = np.linalg.norm(points - feasible_set.project_batch(points - values), axis=1)
    best = int(np.argmin(residuals))
    return points[best], float(residuals[best])


def _grid(lower: NDArray, upper: NDArray, resolution: int) -> NDArray:
    axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(lower, upper)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))


def _scan(problem: Problem, grid: NDArray, pool: ThreadedMap) -> Tuple[NDArray, float]:
    size = settings.GRID_CHUNK_SIZE
    chunks = [grid[i : i + size] for i in range(0, len(grid), size)]
    results = pool.map(lambda chunk: _chunk_best(problem, chunk), chunks)
    point, residual = min(results, key=lambda item: item[1])
    if point is None:
        raise DidNotConverge(f"{problem.operator.name}: no grid point lies in the set")
    return point, residual


@timing_decorator
def oracle_grid(
    problem: Problem,
    resolution: int,
    levels: Optional[int] = None,
    num_threads: Optional[int] = None,
) -> OracleCertificate:
    """Exhaustive grid scan of X for the least natural residual, then zoomed re-scans.

    Each level re-grids a window of +-5 cells around the incumbent. With
    ``levels=None`` refinement continues until the cell width drops to 1e-9 of
    the bounding-box width.

    Raises:
        DimensionTooLarge: dim > 3.
    """
    op, feasible_set = problem
    if op.dim > MAX_GRID_DIM:
        raise DimensionTooLarge(f"grid oracle supports dim <= {MAX_GRID_DIM}, got {op.dim}")
    if resolution < 2:
        raise NonPositiveArgument(f"resolution must be at least 2, got {resolution}")

    box_lower, box_upper = (np.asarray(b, dtype=np.float64) for b in feasible_set.bounding_box())
    width = float(np.max(box_upper - box_lower))
    pool = ThreadedMap(num_threads)

    coarse = _grid(box_lower, box_upper, resolution)
    best, residual = _scan(problem, coarse, pool)
    lower, upper = box_lower, box_upper
    max_levels = MAX_GRID_LEVELS if levels is None else levels
    for level in range(max_levels):
        cell = (upper - lower) / (resolution - 1)
        if levels is None and np.max(cell) <= 1e-9 * width:
            break
        lower = np.maximum(box_lower, best - 5.0 * cell)
        upper = np.minimum(box_upper, best + 5.0 * cell)
        candidate, candidate_residual = _scan(problem, _grid(lower, upper, resolution), pool)
        if candidate_residual <= residual:
            best, residual = candidate, candidate_residual
        logger.debug(f"{op.name}: grid level {level + 1} residual {residual:.3e}")

    # the PVI check also covers the coarse grid points of X
    inside = coarse[feasible_set.contains_batch(coarse, settings.TOL_PROJ)]
    return certify(problem, best, "grid", extra_points=inside[: settings.ORACLE_GAP_SAMPLES])


def extragradient_solution(
    problem: Problem,
    step: Optional[float] = None,
    tol: float = 1e-8,
    max_iters: int = 100000,
    x0: Optional[ArrayLike] = None,
) -> NDArray:
    """Run the two-projection extragradient iteration until the residual is <= tol."""
    op, feasible_set = problem
    if not op.monotone:
        raise OraclePreconditionError(
            f"{op.name}: extragradient needs a monotone operator"
        )
    if step is None:
        lipschitz = op.lipschitz
        if lipschitz is None:
            lipschitz = estimate_lipschitz(op, max(feasible_set.norm_bound(), 1.0))
        step = 0.9 / lipschitz
    if not step > 0:
        raise NonPositiveArgument(f"step must be positive, got {step}")

    if x0 is None:
        center = feasible_set.interior_point()
        x0 = center if center is not None else np.zeros(op.dim)
    x = feasible_set.project(x0)
    for _ in range(max_iters):
        fx = op.eval(x)
        if natural_residual(feasible_set, x, fx) <= tol:
            return x
        y = feasible_set.project(x - step * fx)
        x = feasible_set.project(x - step * op.eval(y))
    raise DidNotConverge(
        f"{op.name}: extragradient did not reach residual {tol:g} in {max_iters} iterations"
    )


@timing_decorator
def oracle_extragradient(
    problem: Problem,
    step: Optional[float] = None,
    tol: float = 1e-8,
    max_iters: int = 100000,
) -> OracleCertificate:
    """Extragradient with step 0.9/L on a monotone Lipschitz problem.

    Raises:
        OraclePreconditionError: the operator is not flagged monotone.
        DidNotConverge: the residual stayed above ``tol``.
    """
    x_star = extragradient_solution(problem, step=step, tol=tol, max_iters=max_iters)
    return certify(problem, x_star, "extragradient")


def oracle_analytic(problem: Problem) -> OracleCertificate:
    """Certificate for a problem that carries its own x*."""
    if problem.operator.known_solution is None:
        raise OraclePreconditionError(f"{problem.operator.name} has no known solution")
    return certify(problem, problem.operator.known_solution, "analytic")


def mint_certificate(
    problem: Problem, kind: str = "auto", tolerance: float = 1e-8, resolution: int = 41
) -> OracleCertificate:
    """Dispatch to an oracle; ``auto`` prefers extragradient, then grid, then analytic."""
    op = problem.operator
    if kind == "auto":
        if op.monotone:
            kind = "extragradient"
        elif op.dim <= MAX_GRID_DIM:
            kind = "grid"
        else:
            kind = "analytic"
    if kind == "extragradient":
        return oracle_extragradient(problem, tol=tolerance)
    if kind == "grid":
        return oracle_grid(problem, resolution)
    if kind == "analytic":
        return oracle_analytic(problem)
    raise OraclePreconditionError(f"unknown oracle kind {kind!r}")


def verify_eps_solution(
    problem: Problem, x: ArrayLike, eps: float, cert: OracleCertificate
) -> bool:
    """True when ||x - x*|| <= eps for the certified x*."""
    x = as_vector(x, problem.operator.dim)
    return bool(np.linalg.norm(x - cert.vector) <= eps)
