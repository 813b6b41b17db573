"""Built-in test problems and problems assembled from a run configuration."""
from dataclasses import replace
from functools import lru_cache
from typing import Optional

import numpy as np
from loguru import logger

from vi_sharp.core.exceptions import ConfigInvalid, NonUniqueSolution, UnknownProblem
from vi_sharp.models.schemas import (
    BallSpec,
    BoxSpec,
    BuiltinProblemSpec,
    HalfspacesSpec,
    ProblemSpec,
    QuadraticLevelSetSpec,
    QuadraticProblemSpec,
    SetSpec,
)
from vi_sharp.services.geometry import (
    Ball,
    Box,
    ConstraintFunction,
    ConvexSet,
    Halfspaces,
    LevelSet,
    product_box,
)
from vi_sharp.services.operators import Problem, ViOperator
from vi_sharp.services.oracle import extragradient_solution

CATALOG_SEEDS = {"affine": 1729, "saddle": 4104}
REFERENCE_TOL = 1e-10
AGREEMENT_TOL = 1e-6


def _affine_operator(matrix, vector, name, rho_f, monotone, known_solution=None) -> ViOperator:
    a = np.array(matrix, dtype=np.float64)
    b = np.array(vector, dtype=np.float64)
    a.setflags(write=False)
    b.setflags(write=False)
    return ViOperator(
        func=lambda x: a @ x + b,
        batch_func=lambda points: points @ a.T + b,
        dim=b.size,
        rho_f=rho_f,
        monotone=monotone,
        known_solution=known_solution,
        lipschitz=float(np.linalg.norm(a, 2)),
        name=name,
    )


def _with_reference_solution(problem: Problem) -> Problem:
    """Attach x* from extragradient runs started at the centre and two corners."""
    op, feasible_set = problem
    lower, upper = feasible_set.bounding_box()
    starts = [feasible_set.interior_point(), lower, upper]
    solutions = [
        extragradient_solution(problem, tol=REFERENCE_TOL, x0=start)
        for start in starts
        if start is not None
    ]
    for other in solutions[1:]:
        if np.linalg.norm(other - solutions[0]) > AGREEMENT_TOL:
            raise NonUniqueSolution(
                f"{op.name}: reference runs disagree ({solutions[0].tolist()} vs {other.tolist()})"
            )
    logger.debug(f"{op.name}: reference solution {solutions[0].tolist()}")
    return Problem(replace(op, known_solution=solutions[0]), feasible_set)


def _fig1() -> Problem:
    def func(x):
        return x + 0.3 * x**2 * np.sin(25.0 * x)

    op = ViOperator(
        func=func,
        batch_func=func,
        dim=1,
        rho_f=2.0,
        monotone=False,
        known_solution=np.zeros(1),
        name="fig1",
    )
    return Problem(op, Box([-1.0], [1.0]))


def _affine() -> Problem:
    rng = np.random.default_rng(CATALOG_SEEDS["affine"])
    g = rng.standard_normal((3, 3))
    h = rng.standard_normal((3, 3))
    matrix = g.T @ g / 3.0 + 0.5 * np.eye(3) + (h - h.T) / 2.0
    vector = rng.standard_normal(3)
    op = _affine_operator(matrix, vector, "affine", rho_f=2.0, monotone=True)
    return _with_reference_solution(Problem(op, Box(-np.ones(3), np.ones(3))))


def _qp_grad() -> Problem:
    q = np.array([[2.0, 0.5], [0.5, 1.0]])
    a = np.array([1.2, 0.8])
    # minimiser a lies outside the unit ball, so x* sits on the sphere
    op = _affine_operator(q, -q @ a, "qp-grad", rho_f=2.0, monotone=True)
    return _with_reference_solution(Problem(op, Ball(np.zeros(2), 1.0)))


def _saddle() -> Problem:
    # variables (u1, u2, v); regularised bilinear coupling keeps F strongly monotone
    coupling = np.array([[1.0], [-0.5]])
    mu = 0.5
    matrix = np.block([[mu * np.eye(2), coupling], [-coupling.T, mu * np.eye(1)]])
    vector = np.array([0.3, -0.2, 0.4])
    op = _affine_operator(matrix, vector, "saddle", rho_f=2.0, monotone=True)
    feasible_set = product_box([Box([-1.0, -1.0], [1.0, 1.0]), Box([-1.0], [1.0])])
    return _with_reference_solution(Problem(op, feasible_set))


CATALOG = {
    "fig1": _fig1,
    "affine": _affine,
    "qp-grad": _qp_grad,
    "saddle": _saddle,
}


@lru_cache(maxsize=None)
def builtin_problem(name: str) -> Problem:
    """Look up a catalog problem by name.

    Raises:
        UnknownProblem: name is not in the catalog.
    """
    try:
        factory = CATALOG[name]
    except KeyError:
        raise UnknownProblem(
            f"unknown problem {name!r}; available: {', '.join(sorted(CATALOG))}"
        ) from None
    return factory()


def build_set(spec: SetSpec) -> ConvexSet:
    if isinstance(spec, BallSpec):
        return Ball(spec.center, spec.radius)
    if isinstance(spec, BoxSpec):
        return Box(spec.lower, spec.upper)
    if isinstance(spec, HalfspacesSpec):
        return Halfspaces(spec.normals, spec.offsets)
    if isinstance(spec, QuadraticLevelSetSpec):
        return _quadratic_level_set(spec)
    raise ConfigInvalid("problem.set", f"unsupported set kind {spec!r}")


def _quadratic_level_set(spec: QuadraticLevelSetSpec) -> LevelSet:
    q = np.array(spec.matrix, dtype=np.float64)
    lin = np.array(spec.vector, dtype=np.float64)
    dim = lin.size
    if q.shape != (dim, dim):
        raise ConfigInvalid("problem.set.matrix", f"expected a {dim}x{dim} matrix")
    if np.min(np.linalg.eigvalsh((q + q.T) / 2.0)) < -1e-12:
        raise ConfigInvalid("problem.set.matrix", "matrix must be positive semidefinite")
    offset = spec.offset
    h = ConstraintFunction(
        value=lambda x: float(x @ q @ x + lin @ x + offset),
        subgradient=lambda x: (q + q.T) @ x + lin,
        lipschitz_bound=spec.lipschitz_bound,
    )
    return LevelSet(h, dim, spec.interior_point)


def build_problem(spec: ProblemSpec, rho_f: Optional[float] = None) -> Problem:
    """Problem for a config's problem section; ``rho_f`` overrides the operator's radius."""
    if isinstance(spec, BuiltinProblemSpec):
        problem = builtin_problem(spec.name)
        if rho_f is None or rho_f == problem.operator.rho_f:
            return problem
        return Problem(replace(problem.operator, rho_f=rho_f), problem.feasible_set)

    feasible_set = build_set(spec.feasible_set)
    vector = np.array(spec.vector, dtype=np.float64)
    matrix = np.array(spec.matrix, dtype=np.float64)
    if matrix.shape != (vector.size, vector.size):
        raise ConfigInvalid("problem.matrix", f"expected a {vector.size}x{vector.size} matrix")
    if vector.size != feasible_set.dim:
        raise ConfigInvalid(
            "problem.vector", f"dimension {vector.size} does not match the set ({feasible_set.dim})"
        )
    radius = rho_f or spec.rho_f or 2.0 * feasible_set.norm_bound()
    if isinstance(spec, QuadraticProblemSpec):
        if not np.allclose(matrix, matrix.T):
            raise ConfigInvalid("problem.matrix", "a gradient operator needs a symmetric matrix")
        monotone = bool(np.min(np.linalg.eigvalsh(matrix)) >= -1e-12)
        name = "quadratic"
    else:
        monotone = bool(np.min(np.linalg.eigvalsh((matrix + matrix.T) / 2.0)) >= -1e-12)
        name = "affine-config"
    op = _affine_operator(matrix, vector, name, radius, monotone, spec.known_solution)
    return Problem(op, feasible_set)
