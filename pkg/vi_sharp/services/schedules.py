"""Step-size schedules theta_k."""
from typing import Optional

from loguru import logger

from vi_sharp.models.schemas import (
    EXPERIMENTAL_NOTE,
    AdaptiveLeastNormSchedule,
    GeometricSchedule,
    HarmonicSchedule,
    StepSchedule,
)


def theta(schedule: StepSchedule, k: int, stalled_windows: int = 0) -> float:
    """Step size at iteration ``k``.

    ``stalled_windows`` is only read by the adaptive schedule: the number of
    completed windows in which the best residual did not improve.
    """
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    if isinstance(schedule, HarmonicSchedule):
        return schedule.theta0 / (k + 1) ** schedule.power
    if isinstance(schedule, GeometricSchedule):
        return schedule.theta0 * schedule.ratio**k
    if isinstance(schedule, AdaptiveLeastNormSchedule):
        return schedule.theta0 * schedule.shrink**stalled_windows
    raise TypeError(f"unknown schedule {schedule!r}")


def describe(schedule: StepSchedule) -> str:
    """One-line label, carrying the experimental marker where it applies."""
    params = schedule.model_dump(exclude={"kind"})
    label = f"{schedule.kind}(" + ", ".join(f"{k}={v:g}" for k, v in params.items()) + ")"
    if schedule.experimental:
        label += f" [{EXPERIMENTAL_NOTE}]"
    return label


class StepController:
    """Produces theta_k for a run, tracking residual windows for the adaptive schedule."""

    def __init__(self, schedule: StepSchedule):
        self.schedule = schedule
        self.stalled_windows = 0
        self._best = float("inf")
        self._window_best = float("inf")
        self._window_fill = 0
        if schedule.experimental:
            logger.warning(f"{schedule.kind} schedule: {EXPERIMENTAL_NOTE}")

    def __call__(self, k: int) -> float:
        return theta(self.schedule, k, self.stalled_windows)

    def observe(self, residual: float) -> None:
        """Feed the residual of the latest iterate."""
        if not isinstance(self.schedule, AdaptiveLeastNormSchedule):
            return
        self._window_best = min(self._window_best, residual)
        self._window_fill += 1
        if self._window_fill < self.schedule.window:
            return
        if self._window_best < self._best:
            self._best = self._window_best
        else:
            self.stalled_windows += 1
        self._window_best = float("inf")
        self._window_fill = 0

    @property
    def note(self) -> Optional[str]:
        return EXPERIMENTAL_NOTE if self.schedule.experimental else None
