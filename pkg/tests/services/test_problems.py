import numpy as np
import pytest

from vi_sharp.core.exceptions import ConfigInvalid, UnknownProblem
from vi_sharp.models.schemas import (
    AffineProblemSpec,
    BallSpec,
    BoxSpec,
    BuiltinProblemSpec,
    HalfspacesSpec,
    QuadraticLevelSetSpec,
    QuadraticProblemSpec,
)
from vi_sharp.services.geometry import Ball, Box, Halfspaces, LevelSet
from vi_sharp.services.operators import natural_residual
from vi_sharp.services.problems import CATALOG, build_problem, build_set, builtin_problem


def test_fig1_values():
    """Test F(0) = 0 and F(1) = 1 + 0.3 sin(25)."""
    # Arrange
    op = builtin_problem("fig1").operator

    # Act / Assert
    assert op.eval([0.0])[0] == 0.0
    assert op.eval([1.0])[0] == pytest.approx(0.9603, abs=1e-4)
    assert not op.monotone
    np.testing.assert_array_equal(op.known_solution, [0.0])


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_catalog_problem_metadata(name):
    """Test that every catalog entry is consistent and solved by its known solution."""
    # Act
    op, feasible_set = builtin_problem(name)

    # Assert
    assert op.name == name
    assert op.dim == feasible_set.dim
    assert op.known_solution is not None
    assert feasible_set.contains(op.known_solution, 1e-9)
    assert natural_residual(feasible_set, op.known_solution, op.eval(op.known_solution)) < 1e-8


def test_builtin_problem_is_cached():
    """Test that repeated lookups share one instance."""
    assert builtin_problem("affine") is builtin_problem("affine")


def test_affine_catalog_problem_is_seeded():
    """Test that the affine catalog problem lives on the unit cube in R^3."""
    # Act
    op, feasible_set = builtin_problem("affine")

    # Assert
    assert isinstance(feasible_set, Box)
    assert op.dim == 3
    assert op.monotone


def test_qp_grad_solution_on_sphere():
    """Test that the unconstrained minimiser lies outside, pushing x* to the sphere."""
    # Act
    op, feasible_set = builtin_problem("qp-grad")

    # Assert
    assert isinstance(feasible_set, Ball)
    assert np.linalg.norm(op.known_solution) == pytest.approx(1.0, abs=1e-8)


def test_unknown_problem():
    """Test the catalog lookup error."""
    # Act
    with pytest.raises(UnknownProblem) as exc_info:
        builtin_problem("nope")

    # Assert
    assert "fig1" in str(exc_info.value)


def test_build_problem_rho_f_override():
    """Test that a configured rho_f replaces the catalog radius."""
    # Act
    problem = build_problem(BuiltinProblemSpec(name="fig1"), rho_f=3.0)

    # Assert
    assert problem.operator.rho_f == 3.0
    assert builtin_problem("fig1").operator.rho_f == 2.0


def test_build_affine_problem_with_interior_solution():
    """Test that F(x) = x - a over a box containing a is solved at a."""
    # Arrange
    spec = AffineProblemSpec(
        matrix=[[1.0, 0.0], [0.0, 1.0]],
        vector=[-0.3, 0.2],
        set=BoxSpec(lower=[-1.0, -1.0], upper=[1.0, 1.0]),
    )

    # Act
    op, feasible_set = build_problem(spec)

    # Assert
    assert op.name == "affine-config"
    assert op.monotone
    assert op.rho_f == pytest.approx(2.0 * np.sqrt(2.0))
    assert natural_residual(feasible_set, [0.3, -0.2], op.eval([0.3, -0.2])) == pytest.approx(0.0)


def test_build_quadratic_problem_requires_symmetry():
    """Test that a gradient operator needs a symmetric matrix."""
    # Arrange
    spec = QuadraticProblemSpec(
        matrix=[[1.0, 1.0], [0.0, 1.0]],
        vector=[0.0, 0.0],
        set=BallSpec(center=[0.0, 0.0], radius=1.0),
    )

    # Act / Assert
    with pytest.raises(ConfigInvalid) as exc_info:
        build_problem(spec)
    assert exc_info.value.field == "problem.matrix"


def test_build_problem_dimension_mismatch():
    """Test that vector and set dimensions must agree."""
    # Arrange
    spec = AffineProblemSpec(
        matrix=[[1.0]], vector=[0.0], set=BoxSpec(lower=[0.0, 0.0], upper=[1.0, 1.0])
    )

    # Act / Assert
    with pytest.raises(ConfigInvalid):
        build_problem(spec)


def test_build_indefinite_quadratic_is_not_monotone():
    """Test that an indefinite Q is not claimed monotone."""
    # Arrange
    spec = QuadraticProblemSpec(
        matrix=[[1.0, 0.0], [0.0, -1.0]],
        vector=[0.0, 0.0],
        set=BoxSpec(lower=[-1.0, -1.0], upper=[1.0, 1.0]),
        rho_f=1.5,
    )

    # Act
    op, _ = build_problem(spec)

    # Assert
    assert not op.monotone
    assert op.rho_f == 1.5


@pytest.mark.parametrize(
    "spec,expected_type",
    [
        (BallSpec(center=[0.0], radius=2.0), Ball),
        (BoxSpec(lower=[0.0], upper=[1.0]), Box),
        (HalfspacesSpec(normals=[[1.0], [-1.0]], offsets=[1.0, 1.0]), Halfspaces),
    ],
)
def test_build_set(spec, expected_type):
    """Test that each set spec maps to its geometry class."""
    assert isinstance(build_set(spec), expected_type)


def test_build_quadratic_level_set():
    """Test {x'x - 1 <= 0} built from its coefficients."""
    # Arrange
    spec = QuadraticLevelSetSpec(
        matrix=[[1.0, 0.0], [0.0, 1.0]],
        vector=[0.0, 0.0],
        offset=-1.0,
        lipschitz_bound=2.0,
        interior_point=[0.0, 0.0],
    )

    # Act
    level_set = build_set(spec)

    # Assert
    assert isinstance(level_set, LevelSet)
    assert level_set.contains([0.6, 0.6])
    assert not level_set.contains([0.8, 0.8])
    np.testing.assert_allclose(level_set.constraint().grad(np.array([1.0, 0.0])), [2.0, 0.0])


def test_build_quadratic_level_set_rejects_indefinite_matrix():
    """Test that a non-convex quadratic is rejected."""
    # Arrange
    spec = QuadraticLevelSetSpec(
        matrix=[[1.0, 0.0], [0.0, -1.0]], vector=[0.0, 0.0], offset=-1.0
    )

    # Act / Assert
    with pytest.raises(ConfigInvalid):
        build_set(spec)
