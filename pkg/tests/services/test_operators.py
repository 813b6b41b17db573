import numpy as np
import pytest

from vi_sharp.core.exceptions import (
    DidNotConverge,
    DimensionMismatch,
    NonFiniteOperatorValue,
    NonPositiveArgument,
)
from vi_sharp.models.schemas import PenaltyKind, PenaltyMethod, Zone
from vi_sharp.services.geometry import Ball, Box
from vi_sharp.services.operators import (
    PenalizedOperator,
    ViOperator,
    ball_points,
    estimate_lipschitz,
    estimate_operator_bound,
    estimate_orientation_radius,
    eval_penalized,
    lambda_bound,
    monotonicity_audit,
    natural_residual,
    orientation_margin,
)
from vi_sharp.services.problems import builtin_problem


def linear(dim=1, scale=1.0, shift=0.0, monotone=True):
    return ViOperator(
        func=lambda x: scale * x + shift, dim=dim, rho_f=2.0, monotone=monotone, name="linear"
    )


@pytest.fixture
def identity_penalized():
    """F(x) = x on [-1, 1] with lambda 5 and eps 0.1."""
    method = PenaltyMethod(method=PenaltyKind.PROJECTION, epsilon=0.1)
    return PenalizedOperator(linear(), Box([-1.0], [1.0]), method, lam=5.0)


@pytest.mark.parametrize("x,expected", [(0.5, 0.5), (2.0, 7.0), (-3.0, -8.0)])
def test_eval_penalized(identity_penalized, x, expected):
    """Test F + lambda*P inside and on both sides outside the interval."""
    # Act
    value = eval_penalized(identity_penalized, [x])

    # Assert
    np.testing.assert_allclose(value, [expected])


def test_eval_penalized_inside_is_exactly_f(identity_penalized):
    """Test that the penalty contributes nothing inside X."""
    # Act
    evaluation = identity_penalized.evaluate([0.25])

    # Assert
    assert evaluation.penalty.zone is Zone.INSIDE
    assert evaluation.value[0] == 0.25


def test_penalized_operator_rejects_non_positive_lambda():
    """Test that lambda must be positive."""
    method = PenaltyMethod(method=PenaltyKind.PROJECTION, epsilon=0.1)
    with pytest.raises(NonPositiveArgument):
        PenalizedOperator(linear(), Box([-1.0], [1.0]), method, lam=0.0)


def test_penalized_operator_rejects_dimension_mismatch():
    """Test that F and X must live in the same space."""
    method = PenaltyMethod(method=PenaltyKind.PROJECTION, epsilon=0.1)
    with pytest.raises(DimensionMismatch):
        PenalizedOperator(linear(dim=2), Box([-1.0], [1.0]), method, lam=1.0)


def test_rescaled_operator_is_scaled_copy(identity_penalized):
    """Test that P + F/lambda equals F_lambda / lambda outside X."""
    # Arrange
    rescaled = identity_penalized.rescaled()

    # Act / Assert
    np.testing.assert_allclose(rescaled([2.0]) * 5.0, identity_penalized([2.0]))


def test_eval_rejects_wrong_output_dimension():
    """Test that F must map R^dim to R^dim."""
    # Arrange
    op = ViOperator(func=lambda x: np.array([1.0, 2.0]), dim=1, rho_f=1.0)

    # Act / Assert
    with pytest.raises(DimensionMismatch):
        op.eval([0.0])


def test_eval_rejects_non_finite_values():
    """Test that NaN operator values are reported."""
    # Arrange
    op = ViOperator(func=lambda x: x / 0.0, dim=1, rho_f=1.0)

    # Act / Assert
    with pytest.raises(NonFiniteOperatorValue):
        with np.errstate(divide="ignore", invalid="ignore"):
            op.eval([0.0])


def test_known_solution_is_read_only():
    """Test that the operator freezes its known solution."""
    # Arrange
    op = ViOperator(func=lambda x: x, dim=2, rho_f=1.0, known_solution=[0.0, 0.0])

    # Act / Assert
    with pytest.raises(ValueError):
        op.known_solution[0] = 1.0


@pytest.mark.parametrize(
    "op,radius,expected",
    [
        (linear(), 2.0, 3.0),
        (linear(scale=0.0), 1.0, 0.0),
        (
            ViOperator(func=lambda x: np.array([1.0, 0.0]), dim=2, rho_f=1.0),
            5.0,
            1.5,
        ),
    ],
)
def test_estimate_operator_bound(op, radius, expected):
    """Test the safety-scaled sampled bound of ||F|| on a ball."""
    # Act
    bound = estimate_operator_bound(op, radius, samples=4000)

    # Assert
    assert bound == pytest.approx(expected, rel=1e-2, abs=1e-12)
    assert bound <= expected + 1e-12


def test_estimate_operator_bound_is_deterministic():
    """Test that the Halton sampler repeats for a fixed seed."""
    # Arrange
    op = builtin_problem("fig1").operator

    # Act / Assert
    assert estimate_operator_bound(op, 2.0, samples=500, seed=3) == estimate_operator_bound(
        op, 2.0, samples=500, seed=3
    )


@pytest.mark.parametrize(
    "rho_f,m_bound,eps,expected",
    [(2.0, 5.0, 0.1, 100.0), (1.0, 1.0, 1.0, 1.0), (3.0, 2.0, 0.05, 120.0)],
)
def test_lambda_bound(rho_f, m_bound, eps, expected):
    """Test Lambda_eps = rho_f * M / eps."""
    assert lambda_bound(rho_f, m_bound, eps) == pytest.approx(expected)


def test_lambda_bound_rejects_zero_eps():
    """Test that eps = 0 is rejected."""
    with pytest.raises(NonPositiveArgument):
        lambda_bound(2.0, 5.0, 0.0)


def test_orientation_margin_identity():
    """Test that F(x) = x has margin at least eps^2 outside the eps-ball."""
    # Act
    margin = orientation_margin(linear(dim=2), [0.0, 0.0], 1.0, 0.5, samples=4000)

    # Assert
    assert margin >= 0.25


def test_orientation_margin_fig1_is_positive():
    """Test that the non-monotone catalog operator still points away from x* = 0."""
    # Arrange
    op = builtin_problem("fig1").operator

    # Act
    margin = orientation_margin(op, [0.0], 1.0, 0.1, samples=4000)

    # Assert
    assert margin > 0.0


def test_orientation_margin_negative_control():
    """Test that F(x) = -x is detected as not oriented."""
    # Act
    margin = orientation_margin(linear(scale=-1.0), [0.0], 1.0, 0.1, samples=1000)

    # Assert
    assert margin < 0.0


def test_orientation_margin_all_points_excluded():
    """Test that an empty region gives +inf."""
    # Act
    margin = orientation_margin(linear(), [0.0], 0.5, 1.0, samples=100)

    # Assert
    assert margin == float("inf")


def catalog_penalized(name, eps, lam=None):
    """Catalog problem penalized at eps, with lambda defaulting to twice its bound."""
    op, feasible_set = builtin_problem(name)
    if lam is None:
        lam = 2.0 * lambda_bound(op.rho_f, estimate_operator_bound(op, op.rho_f), eps)
    method = PenaltyMethod(method=PenaltyKind.PROJECTION, epsilon=eps)
    return PenalizedOperator(op, feasible_set, method, lam=lam)


@pytest.mark.parametrize("eps", [0.05, 0.1])
@pytest.mark.parametrize("name", ["fig1", "affine", "qp-grad", "saddle"])
def test_penalized_catalog_is_strongly_oriented(name, eps):
    """Test that F + 2*Lambda_eps*P points away from x* outside its eps-ball."""
    # Arrange
    penalized = catalog_penalized(name, eps)
    x_star = penalized.base.known_solution

    # Act
    margin = orientation_margin(penalized, x_star, penalized.base.rho_f, eps, samples=10000)

    # Assert
    assert margin > 0.0


def test_vanishing_lambda_loses_orientation_on_qp_grad():
    """Test that without the penalty, points beyond the boundary solution are not oriented."""
    # Arrange
    penalized = catalog_penalized("qp-grad", 0.05, lam=1e-9)
    x_star = penalized.base.known_solution
    outside = x_star + 0.5 * (np.array([1.2, 0.8]) - x_star)

    # Act
    margin = orientation_margin(penalized, x_star, penalized.base.rho_f, 0.05, samples=10000)

    # Assert
    assert np.linalg.norm(x_star) == pytest.approx(1.0, abs=1e-6)
    assert np.linalg.norm(outside) > 1.0
    assert penalized(outside) @ (outside - x_star) < 0.0
    assert margin < 0.0


def test_ball_points_stay_in_ball():
    """Test that quasi-random points fill the ball without leaving it."""
    # Act
    points = ball_points(3, 2.0, 2000, seed=1, center=[1.0, 0.0, 0.0])

    # Assert
    assert points.shape == (2000, 3)
    assert np.all(np.linalg.norm(points - [1.0, 0.0, 0.0], axis=1) <= 2.0)
    assert np.max(np.linalg.norm(points - [1.0, 0.0, 0.0], axis=1)) > 1.9


def test_natural_residual():
    """Test ||x - P(x - F(x))|| at a solution and away from it."""
    # Arrange
    box = Box([-1.0], [1.0])

    # Act / Assert
    assert natural_residual(box, [-1.0], [1.0]) == 0.0
    assert natural_residual(box, [0.5], [0.5]) == pytest.approx(0.5)


def test_estimate_lipschitz_of_linear_map():
    """Test the sampled difference quotient of a linear map."""
    # Arrange
    op = linear(dim=2, scale=3.0)

    # Act / Assert
    assert estimate_lipschitz(op, 1.0, samples=500) == pytest.approx(3.0)


def test_monotonicity_audit_flags_fig1(log_messages):
    """Test that the sin perturbation breaks monotonicity."""
    # Arrange
    op = builtin_problem("fig1").operator

    # Act
    audit = monotonicity_audit(op, samples=4000)

    # Assert
    assert not audit.passed
    assert audit.worst < 0.0
    assert not any("fails the audit" in m for m in log_messages)


def test_monotonicity_audit_warns_on_false_claim(log_messages):
    """Test that a false monotone claim is logged."""
    # Act
    audit = monotonicity_audit(linear(scale=-1.0, monotone=True), samples=200)

    # Assert
    assert not audit.passed
    assert any("fails the audit" in m for m in log_messages)


@pytest.mark.parametrize("name", ["affine", "qp-grad", "saddle"])
def test_catalog_monotone_operators_pass_audit(name):
    """Test that operators flagged monotone pass the sampled audit."""
    # Arrange
    op = builtin_problem(name).operator

    # Act
    audit = monotonicity_audit(op, samples=2000)

    # Assert
    assert op.monotone
    assert audit.passed


def test_estimate_orientation_radius_for_attracting_map():
    """Test that F(x) = x is long-range oriented beyond a small radius."""
    # Act
    rho = estimate_orientation_radius(linear(dim=2), Ball([0.0, 0.0], 1.0), samples=500)

    # Assert
    assert 0.0 < rho <= 4.0


def test_estimate_orientation_radius_gives_up():
    """Test that a repelling map exhausts the ladder."""
    with pytest.raises(DidNotConverge):
        estimate_orientation_radius(
            linear(dim=2, scale=-1.0), Ball([0.0, 0.0], 1.0), max_steps=5, samples=200
        )
