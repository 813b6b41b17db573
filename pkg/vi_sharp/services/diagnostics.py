"""Trace diagnostics: boundedness (A1), merit descent (A2 proxy) and per-step descent."""
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from vi_sharp.core.exceptions import EmptyTrace
from vi_sharp.models.schemas import ConvergenceReport
from vi_sharp.services.solver import SolveResult, TraceRecord


def _last_restart_index(trace: List[TraceRecord]) -> Optional[int]:
    for i in range(len(trace) - 1, -1, -1):
        if trace[i].restarted:
            return i
    return None


def _check_bounded(result: SolveResult) -> tuple:
    trace = result.trace
    norms = np.array([np.linalg.norm(r.x) for r in trace])
    last = _last_restart_index(trace)
    tail = trace if last is None else trace[last + 1 :]
    if tail:
        theta_max = max(r.step for r in tail)
        f_max = max(r.f_norm for r in tail)
    else:
        theta_max = f_max = 0.0
    bound = result.restart_radius + theta_max * f_max
    start = 0 if last is None else last + 1
    tail_ok = bool(np.all(norms[start:] <= bound))
    # any iterate beyond the radius must have been restarted
    flags_ok = all(r.restarted for r, n in zip(trace, norms) if n > result.restart_radius)
    return float(norms.max()), bound, tail_ok and flags_ok


def _check_merit_descent(result: SolveResult) -> str:
    """Runs of records outside x* + eps*B must reach a W below their first value.

    The record that ends a run (the first one back inside the ball) belongs to it.
    """
    if result.known_solution is None:
        return "vacuous"
    merits = [
        r.merit if r.merit is not None else float(np.sum((r.x - result.known_solution) ** 2))
        for r in result.trace
    ]
    outside = [m > result.epsilon**2 for m in merits]
    evaluated = 0
    i = 0
    while i < len(merits):
        if not outside[i]:
            i += 1
            continue
        j = i + 1
        while j < len(merits) and outside[j]:
            j += 1
        segment = merits[i + 1 : min(j + 1, len(merits))]
        if segment:
            evaluated += 1
            if not min(segment) < merits[i]:
                return "fail"
        i = j
    return "pass" if evaluated else "vacuous"


def check_a1_a2(result: SolveResult) -> ConvergenceReport:
    """Boundedness and merit-descent report for a finished run.

    Raises:
        EmptyTrace: the result holds no trace records.
    """
    if not result.trace:
        raise EmptyTrace("cannot diagnose an empty trace")
    max_norm, bound, bounded = _check_bounded(result)
    last = _last_restart_index(result.trace)
    return ConvergenceReport(
        max_norm=max_norm,
        a1_bound=bound,
        a1_pass=bounded,
        a2_status=_check_merit_descent(result),
        restarts=result.restarts,
        last_restart_iter=None if last is None else result.trace[last].k,
    )


@dataclass
class DescentCheck:
    checked: int = 0
    violations: List[int] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def descent_violations(
    result: SolveResult, delta_hat: float, c_hat: Optional[float] = None
) -> DescentCheck:
    """Steps that should strictly decrease W(x) = ||x - x*||^2 but do not.

    A traced step qualifies when the next record is the very next iterate, x lies
    outside x* + eps*B and within the restart radius, and theta_k < delta/C^2 with
    C the largest traced ||f^k|| unless given.
    """
    x_star = result.known_solution
    if x_star is None or not result.trace:
        return DescentCheck()
    trace = result.trace
    if c_hat is None:
        c_hat = max((r.f_norm for r in trace if r.f_norm is not None), default=0.0)
    if c_hat == 0.0 or delta_hat <= 0.0:
        return DescentCheck()
    threshold = delta_hat / c_hat**2
    check = DescentCheck()
    for current, following in zip(trace, trace[1:]):
        if following.k != current.k + 1 or current.restarted:
            continue
        w_now = float(np.sum((current.x - x_star) ** 2))
        if w_now <= result.epsilon**2:
            continue
        if np.linalg.norm(current.x) > result.restart_radius or current.step >= threshold:
            continue
        check.checked += 1
        if not float(np.sum((following.x - x_star) ** 2)) < w_now:
            check.violations.append(current.k)
    return check
