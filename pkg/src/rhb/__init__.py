"""Restarted heavy-ball optimization with trace-level verification tools."""

from .core import (
    DenseVector,
    EpochState,
    Event,
    HBConfig,
    IterationRecord,
    MalformedTrace,
    OracleFailure,
    OracleResult,
    RunResult,
    TerminationReason,
    read_trace_csv,
    running_average_update,
    vector_norm,
    write_trace_csv,
)
from .gradient_descent import gd_run
from .heavy_ball import hb_step, initial_state, run
from .problems import DifferentiableProblem, RatingTriple

__version__ = "0.1.0"

__all__ = [
    "DenseVector",
    "DifferentiableProblem",
    "EpochState",
    "Event",
    "HBConfig",
    "IterationRecord",
    "MalformedTrace",
    "OracleFailure",
    "OracleResult",
    "RatingTriple",
    "RunResult",
    "TerminationReason",
    "gd_run",
    "hb_step",
    "initial_state",
    "read_trace_csv",
    "run",
    "running_average_update",
    "vector_norm",
    "write_trace_csv",
    "__version__",
]
