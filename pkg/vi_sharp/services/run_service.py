import hashlib
import json
from dataclasses import replace
from typing import List, Optional, Sequence, Tuple

from loguru import logger
from pydantic import ValidationError

from vi_sharp.core.exceptions import ConfigInvalid
from vi_sharp.models.schemas import (
    BuiltinProblemSpec,
    OracleCertificate,
    PenaltyMethod,
    RunConfig,
    RunSummary,
    SolverConfig,
)
from vi_sharp.repository.certificate_store import CertificateStore
from vi_sharp.services.diagnostics import check_a1_a2
from vi_sharp.services.operators import Problem
from vi_sharp.services.oracle import mint_certificate
from vi_sharp.services.problems import build_problem
from vi_sharp.services.report_service import ReportService
from vi_sharp.services.solver import SolveResult, choose_lambda, resolve_config, solve
from vi_sharp.utils.decorators import timing_decorator
from vi_sharp.utils.parallel import ThreadedMap

SWEEP_PARAMETERS = ("theta0", "power", "ratio", "lambda", "epsilon")


def _config_error(e: ValidationError) -> ConfigInvalid:
    error = e.errors()[0]
    loc = ".".join(str(part) for part in error["loc"])
    return ConfigInvalid(loc or "config", error["msg"])


class RunService:
    """Service for config-driven runs: oracle, solve, diagnostics and artifacts."""

    def __init__(
        self,
        thread_count: Optional[int] = None,
        report_service: Optional[ReportService] = None,
        certificate_store: Optional[CertificateStore] = None,
    ):
        """Initialize the run service."""
        self.thread_count = thread_count
        self.report_service = report_service or ReportService()
        self._certificate_store = certificate_store

    @property
    def certificate_store(self) -> CertificateStore:
        if self._certificate_store is None:
            self._certificate_store = CertificateStore()
        return self._certificate_store

    # Configuration

    @staticmethod
    def load_config(config_path: str) -> RunConfig:
        """Read and validate a JSON run configuration.

        Raises:
            ConfigInvalid: unreadable file, malformed JSON or a field that fails validation.
        """
        try:
            with open(config_path) as file:
                data = json.load(file)
        except OSError as e:
            raise ConfigInvalid("config", f"cannot read {config_path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigInvalid("config", f"{config_path} is not valid JSON: {e}") from e
        try:
            return RunConfig.model_validate(data)
        except ValidationError as e:
            raise _config_error(e) from e

    @staticmethod
    def with_solver_overrides(config: RunConfig, **overrides) -> RunConfig:
        """Copy of ``config`` with solver fields replaced, re-validated."""
        overrides = {k: v for k, v in overrides.items() if v is not None}
        if not overrides:
            return config
        data = config.model_dump(by_alias=True)
        data["solver"].update(overrides)
        if "epsilon" in overrides:
            data["penalty"]["epsilon"] = None
        try:
            return RunConfig.model_validate(data)
        except ValidationError as e:
            raise _config_error(e) from e

    @staticmethod
    def problem_key(config: RunConfig, problem: Problem) -> str:
        if isinstance(config.problem, BuiltinProblemSpec):
            return problem.operator.name
        digest = hashlib.sha1(config.problem.model_dump_json(by_alias=True).encode()).hexdigest()
        return f"{problem.operator.name}-{digest[:12]}"

    def prepare(self, config: RunConfig) -> Tuple[Problem, SolverConfig, PenaltyMethod]:
        problem = build_problem(config.problem, config.solver.rho_f)
        solver_config = resolve_config(config.solver, problem)
        return problem, solver_config, config.penalty_method()

    def check_outputs(self, config: RunConfig) -> None:
        """Fail before any compute when the trace or summary path cannot be written."""
        self.report_service.check_writable(config.output.trace_path, "output.trace_path")
        self.report_service.check_writable(config.output.summary_path, "output.summary_path")

    # Oracle

    @timing_decorator
    def certificate(self, config: RunConfig, problem: Problem) -> OracleCertificate:
        """Mint an oracle certificate, reusing the cached one when allowed."""
        key = f"{self.problem_key(config, problem)}-{config.oracle.kind}"
        if config.oracle.use_cache:
            cached = self.certificate_store.get(key)
            if cached is not None:
                logger.info(f"Using cached {cached.method} certificate for {key}")
                return cached
        certificate = mint_certificate(
            problem,
            kind=config.oracle.kind,
            tolerance=config.oracle.tolerance,
            resolution=config.oracle.resolution,
        )
        self.certificate_store.create(key, certificate)
        return certificate

    # Runs

    @timing_decorator
    def run(self, config: RunConfig) -> RunSummary:
        """Optional oracle, then solve with a streamed trace, then the summary document."""
        self.check_outputs(config)
        problem, solver_config, method = self.prepare(config)
        certificate = None
        if config.oracle.enabled:
            certificate = self.certificate(config, problem)
            if problem.operator.known_solution is None:
                problem = Problem(
                    replace(problem.operator, known_solution=certificate.vector),
                    problem.feasible_set,
                )

        with self.report_service.open_trace(
            config.output.trace_path, config.output.format, problem.operator.dim
        ) as writer:
            result = solve(problem, solver_config, method, on_record=writer.write)

        summary = self.summarize(config, problem, result, certificate)
        self.report_service.save_summary(summary, config.output.summary_path)
        return summary

    @staticmethod
    def summarize(
        config: RunConfig,
        problem: Problem,
        result: SolveResult,
        certificate: Optional[OracleCertificate] = None,
    ) -> RunSummary:
        return RunSummary(
            problem=problem.operator.name,
            config=config,
            best=result.best.tolist(),
            best_iter=result.best_iter,
            best_residual=result.best_residual,
            certified_eps=result.certified_eps,
            restarts=result.restarts,
            iters_run=result.iters_run,
            schedule=result.schedule,
            experimental=result.note is not None,
            note=result.note,
            lambda_=result.lam,
            lambda_bound=result.lambda_bound,
            operator_bound=result.m_bound,
            convergence=check_a1_a2(result),
            certificate=certificate,
        )

    # Sweeps

    def _sweep_value(self, config: RunConfig, parameter: str, raw: str) -> float:
        raw = raw.strip()
        if parameter == "lambda" and raw.upper().endswith("L"):
            auto = self.with_solver_overrides(config, **{"lambda": "auto"})
            problem, solver_config, _ = self.prepare(auto)
            _, bound, _ = choose_lambda(solver_config, problem)
            return float(raw[:-1] or 1.0) * bound
        try:
            return float(raw)
        except ValueError as e:
            raise ConfigInvalid(f"sweep.{parameter}", f"cannot parse value {raw!r}") from e

    def sweep_config(self, config: RunConfig, parameter: str, value: float) -> RunConfig:
        """Config with one swept parameter replaced."""
        if parameter not in SWEEP_PARAMETERS:
            raise ConfigInvalid(
                "sweep.param", f"{parameter!r} is not one of {', '.join(SWEEP_PARAMETERS)}"
            )
        if parameter in ("lambda", "epsilon"):
            return self.with_solver_overrides(config, **{parameter: value})
        schedule = config.solver.schedule.model_dump()
        if parameter not in schedule:
            raise ConfigInvalid(
                "sweep.param", f"the {schedule['kind']} schedule has no {parameter!r}"
            )
        schedule[parameter] = value
        return self.with_solver_overrides(config, schedule=schedule)

    @timing_decorator
    def sweep(
        self,
        config: RunConfig,
        parameter: str,
        values: Sequence[str],
        output_path: Optional[str] = None,
    ) -> List[list]:
        """One solve per value; writes and returns the (value, iters, restarts,
        certified_eps, best_residual) table."""
        numbers = [self._sweep_value(config, parameter, raw) for raw in values]
        configs = [self.sweep_config(config, parameter, value) for value in numbers]

        def run_one(variant: RunConfig) -> SolveResult:
            problem, solver_config, method = self.prepare(variant)
            return solve(problem, solver_config, method)

        results = ThreadedMap(self.thread_count).map(run_one, configs)
        rows = [
            [value, result.iters_run, result.restarts, result.certified_eps, result.best_residual]
            for value, result in zip(numbers, results)
        ]
        self.report_service.save_sweep_table(
            rows,
            output_path or f"sweep_{parameter}.csv",
            experimental=config.solver.schedule.experimental,
        )
        return rows
