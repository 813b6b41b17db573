"""Error hierarchy shared by every vi_sharp module."""
from typing import Optional


class ViSharpError(Exception):
    """Base class for all solver errors."""


# Geometry


class GeometryError(ViSharpError):
    pass


class DimensionMismatch(GeometryError):
    def __init__(self, expected: int, got: int, what: str = "vector"):
        self.expected = expected
        self.got = got
        super().__init__(f"{what} has dimension {got}, expected {expected}")


class UnboundedSet(GeometryError):
    pass


class NoInteriorPoint(GeometryError):
    pass


class CenterNotInterior(GeometryError):
    pass


class MissingLipschitzBound(GeometryError):
    pass


class DidNotConverge(ViSharpError):
    """An inner iterative scheme (projection, bisection, oracle) stalled."""


# Penalty mapping


class PenaltyError(ViSharpError):
    pass


class InsideSet(PenaltyError):
    pass


class SlaterViolation(PenaltyError):
    pass


class ZeroSubgradient(PenaltyError):
    pass


# Operators


class OperatorError(ViSharpError):
    pass


class NonFiniteOperatorValue(OperatorError):
    pass


class NonPositiveArgument(OperatorError, ValueError):
    pass


class UnknownProblem(OperatorError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown problem"


class NonUniqueSolution(OperatorError):
    pass


# Solver


class SolverError(ViSharpError):
    pass


class NonFiniteIterate(SolverError):
    def __init__(self, k: Optional[int] = None):
        self.k = k
        where = "" if k is None else f" at k={k}"
        super().__init__(
            f"iterate became non-finite{where}; lambda or theta0 is likely mis-scaled"
        )


class EmptyTrace(SolverError):
    pass


# Oracle


class OracleError(ViSharpError):
    pass


class DimensionTooLarge(OracleError):
    pass


class OraclePreconditionError(OracleError):
    pass


class CertificateRejected(OracleError):
    pass


# Configuration


class ConfigError(ViSharpError):
    pass


class ConfigInvalid(ConfigError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
