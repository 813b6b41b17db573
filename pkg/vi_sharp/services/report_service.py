import csv
import json
import os
from typing import IO, List, Optional, Sequence

from loguru import logger

from vi_sharp.core.config import settings
from vi_sharp.core.exceptions import ConfigInvalid
from vi_sharp.models.schemas import EXPERIMENTAL_NOTE, RunSummary
from vi_sharp.services.solver import TraceRecord
from vi_sharp.utils.decorators import timing_decorator

SWEEP_COLUMNS = ["value", "iters", "restarts", "certified_eps", "best_residual"]


def trace_header(dim: int) -> List[str]:
    return ["k", "step", "f_norm", "zone", "residual", "merit", "restarted"] + [
        f"x_{i}" for i in range(dim)
    ]


def _cell(value: Optional[float]) -> str:
    return "" if value is None else repr(value)


class TraceWriter:
    """Buffered trace sink (CSV or JSON lines), flushed at every restart."""

    def __init__(self, path: str, fmt: str, dim: int):
        self.path = path
        self.fmt = fmt
        self.dim = dim
        self.rows = 0
        self._file: Optional[IO[str]] = None
        self._csv = None

    def __enter__(self) -> "TraceWriter":
        os.makedirs(os.path.dirname(self.path) or ".", exist_ok=True)
        self._file = open(self.path, "w", newline="")
        if self.fmt == "csv":
            self._csv = csv.writer(self._file, lineterminator="\n")
            self._csv.writerow(trace_header(self.dim))
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if self._file is not None:
            self._file.close()
            self._file = None
        logger.info(f"Trace ({self.rows} records) saved to {self.path}")

    def write(self, record: TraceRecord) -> None:
        merit = _cell(record.merit)
        if self.fmt == "csv":
            self._csv.writerow(
                [
                    record.k,
                    repr(record.step),
                    _cell(record.f_norm),
                    record.zone.value,
                    _cell(record.residual),
                    merit,
                    "true" if record.restarted else "false",
                ]
                + [repr(float(v)) for v in record.x]
            )
        else:
            self._file.write(
                json.dumps(
                    {
                        "k": record.k,
                        "step": record.step,
                        "f_norm": record.f_norm,
                        "zone": record.zone.value,
                        "residual": record.residual,
                        "merit": record.merit,
                        "restarted": record.restarted,
                        "x": [float(v) for v in record.x],
                    }
                )
                + "\n"
            )
        self.rows += 1
        if record.restarted:
            self._file.flush()


class ReportService:
    """Service for writing run artifacts: traces, summaries and sweep tables."""

    def __init__(self, output_dir: Optional[str] = None):
        self.output_dir = output_dir or settings.OUTPUT_DIR

    def resolve_path(self, path: str) -> str:
        """Relative paths land under the output directory."""
        if os.path.isabs(path):
            return path
        return os.path.join(self.output_dir, path)

    def check_writable(self, path: str, field: str) -> str:
        """Create the parent directory of an artifact path and confirm it accepts a file.

        Raises:
            ConfigInvalid: naming ``field`` when the location cannot be written.
        """
        resolved = self.resolve_path(path)
        directory = os.path.dirname(resolved) or "."
        try:
            os.makedirs(directory, exist_ok=True)
        except OSError as e:
            raise ConfigInvalid(field, f"cannot create {directory}: {e}") from e
        target = resolved if os.path.exists(resolved) else directory
        if os.path.isdir(resolved) or not os.access(target, os.W_OK):
            raise ConfigInvalid(field, f"{resolved} is not writable")
        return resolved

    def open_trace(self, path: str, fmt: str, dim: int) -> TraceWriter:
        return TraceWriter(self.resolve_path(path), fmt, dim)

    @timing_decorator
    def save_summary(self, summary: RunSummary, output_path: str) -> str:
        """Save the run summary as a JSON document."""
        output_path = self.resolve_path(output_path)
        os.makedirs(os.path.dirname(output_path) or ".", exist_ok=True)
        with open(output_path, "w") as file:
            file.write(summary.model_dump_json(indent=2, by_alias=True))
        logger.info(f"Summary saved to {output_path}")
        return output_path

    def save_sweep_table(
        self, rows: Sequence[Sequence], output_path: str, experimental: bool = False
    ) -> str:
        """Save a sweep table as CSV, led by a comment line for experimental schedules."""
        output_path = self.resolve_path(output_path)
        os.makedirs(os.path.dirname(output_path) or ".", exist_ok=True)
        with open(output_path, "w", newline="") as file:
            if experimental:
                file.write(f"# {EXPERIMENTAL_NOTE}\n")
            writer = csv.writer(file, lineterminator="\n")
            writer.writerow(SWEEP_COLUMNS)
            writer.writerows(rows)
        logger.info(f"Sweep table saved to {output_path}")
        return output_path
