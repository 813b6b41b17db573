from enum import Enum
from typing import Annotated, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from vi_sharp.core.config import settings

EXPERIMENTAL_NOTE = "experimental: convergence not guaranteed for this step schedule"


class PenaltyKind(str, Enum):
    """How a polar-cone element is constructed."""

    PROJECTION = "projection"
    SUBGRADIENT = "subgradient"
    MINKOWSKI = "minkowski"


class Zone(str, Enum):
    """Position of a point relative to X and its eps-expansion."""

    INSIDE = "inside"
    SHELL = "shell"
    OUTSIDE = "outside"


class PenaltyMethod(BaseModel):
    """Choice of polar-cone construction and the eps of the eps-strong cone."""

    method: PenaltyKind = Field(
        PenaltyKind.PROJECTION, description="Polar-cone element construction"
    )
    epsilon: float = Field(..., gt=0, description="Target accuracy of the eps-solution")

    model_config = ConfigDict(
        frozen=True,
        extra="forbid",
        json_schema_extra={"example": {"method": "projection", "epsilon": 0.05}},
    )


# Step schedules


class HarmonicSchedule(BaseModel):
    """theta_k = theta0 / (k+1)^power; vanishing with a divergent sum."""

    kind: Literal["harmonic"] = "harmonic"
    theta0: float = Field(..., gt=0)
    power: float = Field(1.0, description="Decay exponent in (0.5, 1]")

    model_config = ConfigDict(frozen=True, extra="forbid")

    @field_validator("power")
    @classmethod
    def validate_power(cls, v):
        if not 0.5 < v <= 1.0:
            raise ValueError("power must lie in (0.5, 1]")
        return v

    @property
    def experimental(self) -> bool:
        return False


class GeometricSchedule(BaseModel):
    """theta_k = theta0 * ratio^k (summable, experimental)."""

    kind: Literal["geometric"] = "geometric"
    theta0: float = Field(..., gt=0)
    ratio: float = Field(..., gt=0, lt=1)

    model_config = ConfigDict(frozen=True, extra="forbid")

    @property
    def experimental(self) -> bool:
        return True


class AdaptiveLeastNormSchedule(BaseModel):
    """theta0 * shrink^(windows without residual improvement) (experimental)."""

    kind: Literal["adaptive"] = "adaptive"
    theta0: float = Field(..., gt=0)
    shrink: float = Field(0.5, gt=0, lt=1)
    window: int = Field(100, ge=1)

    model_config = ConfigDict(frozen=True, extra="forbid")

    @property
    def experimental(self) -> bool:
        return True


StepSchedule = Annotated[
    Union[HarmonicSchedule, GeometricSchedule, AdaptiveLeastNormSchedule],
    Field(discriminator="kind"),
]


class SolverConfig(BaseModel):
    """Parameters of the penalized fixed-point iteration."""

    epsilon: float = Field(..., gt=0, description="Target accuracy eps")
    lambda_: Union[float, Literal["auto"]] = Field(
        "auto", alias="lambda", description="Penalty constant, or 'auto'"
    )
    lambda_factor: float = Field(
        default_factory=lambda: settings.LAMBDA_FACTOR,
        gt=0,
        description="Multiple of the lambda bound used when lambda is 'auto'",
    )
    rho_f: Optional[float] = Field(
        None, gt=0, description="Long-range orientation radius; operator default if unset"
    )
    restart_radius: Optional[float] = Field(
        None, gt=0, description="Restart threshold on ||x||, default 2*rho_f"
    )
    schedule: StepSchedule = Field(default_factory=lambda: HarmonicSchedule(theta0=0.5))
    max_iters: int = Field(10000, ge=1)
    x0: Optional[List[float]] = Field(None, description="Initial point, origin if unset")
    trace_every: int = Field(1, ge=1)
    seed: int = 0
    stop_residual: Optional[float] = Field(
        None, gt=0, description="Opt-in early exit once the natural residual drops below"
    )
    superiorized: bool = Field(
        False, description="Run the rescaled form: steps lambda*theta_k on P + F/lambda"
    )

    model_config = ConfigDict(
        frozen=True,
        extra="forbid",
        populate_by_name=True,
        json_schema_extra={
            "example": {
                "epsilon": 0.05,
                "lambda": "auto",
                "rho_f": 2.0,
                "schedule": {"kind": "harmonic", "theta0": 0.5, "power": 1.0},
                "max_iters": 100000,
                "x0": [0.5],
            }
        },
    )

    @field_validator("lambda_")
    @classmethod
    def validate_lambda(cls, v):
        if v != "auto" and not v > 0:
            raise ValueError("lambda must be positive or 'auto'")
        return v

    @field_validator("x0")
    @classmethod
    def validate_x0(cls, v):
        if v is not None and (len(v) == 0 or not np.all(np.isfinite(v))):
            raise ValueError("x0 must be a non-empty finite vector")
        return v

    @model_validator(mode="after")
    def validate_radii(self):
        if self.rho_f is not None:
            if self.restart_radius is not None and self.restart_radius < self.rho_f:
                raise ValueError(
                    f"restart_radius {self.restart_radius} must be >= rho_f {self.rho_f}"
                )
            if self.x0 is not None:
                norm = float(np.linalg.norm(self.x0))
                if norm > self.rho_f:
                    raise ValueError(
                        f"x0 must be an initial point inside rho_f*B: "
                        f"||x0|| = {norm:g} > rho_f = {self.rho_f:g}"
                    )
        return self

    @property
    def radius(self) -> float:
        if self.restart_radius is not None:
            return self.restart_radius
        if self.rho_f is None:
            raise ValueError("rho_f is not resolved")
        return 2.0 * self.rho_f


# Feasible sets


class BallSpec(BaseModel):
    kind: Literal["ball"] = "ball"
    center: List[float]
    radius: float = Field(..., gt=0)

    model_config = ConfigDict(frozen=True, extra="forbid")


class BoxSpec(BaseModel):
    kind: Literal["box"] = "box"
    lower: List[float]
    upper: List[float]

    model_config = ConfigDict(frozen=True, extra="forbid")

    @model_validator(mode="after")
    def validate_bounds(self):
        if len(self.lower) != len(self.upper) or not self.lower:
            raise ValueError("lower and upper must be non-empty and of equal length")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("box bounds must satisfy lower <= upper")
        return self


class HalfspacesSpec(BaseModel):
    """{x: normals[i] . x <= offsets[i]}; must be bounded."""

    kind: Literal["halfspaces"] = "halfspaces"
    normals: List[List[float]]
    offsets: List[float]

    model_config = ConfigDict(frozen=True, extra="forbid")

    @model_validator(mode="after")
    def validate_shape(self):
        if len(self.normals) != len(self.offsets) or not self.normals:
            raise ValueError("need one offset per normal")
        if len({len(row) for row in self.normals}) != 1:
            raise ValueError("all normals must have the same dimension")
        return self


class QuadraticLevelSetSpec(BaseModel):
    """{x: x'Qx + q'x + c <= 0} with Q positive semidefinite."""

    kind: Literal["quadratic_level_set"] = "quadratic_level_set"
    matrix: List[List[float]]
    vector: List[float]
    offset: float
    lipschitz_bound: Optional[float] = Field(None, gt=0)
    interior_point: Optional[List[float]] = None

    model_config = ConfigDict(frozen=True, extra="forbid")


SetSpec = Annotated[
    Union[BallSpec, BoxSpec, HalfspacesSpec, QuadraticLevelSetSpec],
    Field(discriminator="kind"),
]


# Problems


class BuiltinProblemSpec(BaseModel):
    kind: Literal["builtin"] = "builtin"
    name: str

    model_config = ConfigDict(frozen=True, extra="forbid")


class AffineProblemSpec(BaseModel):
    """F(x) = A x + b over a configured set."""

    kind: Literal["affine"] = "affine"
    matrix: List[List[float]]
    vector: List[float]
    feasible_set: SetSpec = Field(..., alias="set")
    rho_f: Optional[float] = Field(None, gt=0)
    known_solution: Optional[List[float]] = None

    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)


class QuadraticProblemSpec(BaseModel):
    """F(x) = Q x + q, the gradient of x'Qx/2 + q'x, over a configured set."""

    kind: Literal["quadratic"] = "quadratic"
    matrix: List[List[float]]
    vector: List[float]
    feasible_set: SetSpec = Field(..., alias="set")
    rho_f: Optional[float] = Field(None, gt=0)
    known_solution: Optional[List[float]] = None

    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)


ProblemSpec = Annotated[
    Union[BuiltinProblemSpec, AffineProblemSpec, QuadraticProblemSpec],
    Field(discriminator="kind"),
]


class PenaltySpec(BaseModel):
    method: PenaltyKind = PenaltyKind.PROJECTION
    epsilon: Optional[float] = Field(None, gt=0, description="Defaults to solver.epsilon")

    model_config = ConfigDict(frozen=True, extra="forbid")


class OutputSpec(BaseModel):
    trace_path: str = Field("trace.csv", description="Relative paths resolve under OUTPUT_DIR")
    summary_path: str = "summary.json"
    format: Literal["csv", "structured-text"] = "csv"

    model_config = ConfigDict(frozen=True, extra="forbid")


class OracleSpec(BaseModel):
    enabled: bool = False
    kind: Literal["auto", "grid", "extragradient", "analytic"] = "auto"
    tolerance: float = Field(1e-8, gt=0)
    resolution: int = Field(41, ge=2)
    use_cache: bool = True

    model_config = ConfigDict(frozen=True, extra="forbid")


class RunConfig(BaseModel):
    """Top-level run configuration file."""

    schema_version: str = Field(default_factory=lambda: settings.CONFIG_SCHEMA)
    problem: ProblemSpec
    solver: SolverConfig
    penalty: PenaltySpec = Field(default_factory=PenaltySpec)
    output: OutputSpec = Field(default_factory=OutputSpec)
    oracle: OracleSpec = Field(default_factory=OracleSpec)

    model_config = ConfigDict(
        frozen=True,
        extra="forbid",
        json_schema_extra={
            "example": {
                "schema_version": "vi-sharp/1",
                "problem": {"kind": "builtin", "name": "fig1"},
                "solver": {
                    "epsilon": 0.05,
                    "lambda": "auto",
                    "schedule": {"kind": "harmonic", "theta0": 0.5, "power": 1.0},
                    "max_iters": 100000,
                },
                "penalty": {"method": "projection"},
                "output": {"trace_path": "fig1.csv", "summary_path": "fig1.json"},
            }
        },
    )

    @field_validator("schema_version")
    @classmethod
    def validate_schema_version(cls, v):
        if v != settings.CONFIG_SCHEMA:
            raise ValueError(
                f"unsupported schema_version {v!r}, expected {settings.CONFIG_SCHEMA!r}"
            )
        return v

    @model_validator(mode="after")
    def validate_epsilon(self):
        if self.penalty.epsilon is not None and self.penalty.epsilon != self.solver.epsilon:
            raise ValueError("penalty.epsilon must match solver.epsilon")
        return self

    def penalty_method(self) -> PenaltyMethod:
        return PenaltyMethod(method=self.penalty.method, epsilon=self.solver.epsilon)


# Results


class OracleCertificate(BaseModel):
    """Reference solution x* with its residual and sampled PVI check."""

    x_star: List[float]
    method: Literal["grid", "extragradient", "analytic"]
    residual: float = Field(..., ge=0)
    gap_samples: int = Field(..., ge=0)
    gap_min: float = Field(0.0, description="Smallest sampled F(y)(y - x*)")
    problem: str = ""
    seed: int = 0
    tool_version: str = Field(default_factory=lambda: settings.TOOL_VERSION)

    model_config = ConfigDict(frozen=True)

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.x_star, dtype=np.float64)


class ConvergenceReport(BaseModel):
    """Boundedness (A1) and merit-descent (A2 proxy) diagnostics of a trace."""

    max_norm: float
    a1_bound: float
    a1_pass: bool
    a2_status: Literal["pass", "fail", "vacuous"]
    restarts: int
    last_restart_iter: Optional[int] = None


class RunSummary(BaseModel):
    """Summary document written next to the trace."""

    schema_version: str = Field(default_factory=lambda: settings.CONFIG_SCHEMA)
    tool_version: str = Field(default_factory=lambda: settings.TOOL_VERSION)
    problem: str
    config: RunConfig
    best: List[float]
    best_iter: int
    best_residual: float
    certified_eps: float
    restarts: int
    iters_run: int
    schedule: str
    experimental: bool
    note: Optional[str] = None
    lambda_: float = Field(..., alias="lambda")
    lambda_bound: float
    operator_bound: float
    convergence: ConvergenceReport
    certificate: Optional[OracleCertificate] = None

    model_config = ConfigDict(populate_by_name=True)
