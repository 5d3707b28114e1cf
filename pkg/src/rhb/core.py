"""Shared domain types, vector helpers, and trace records.

Everything here is a plain value: optimizer state and records are small
dataclasses over float64 numpy vectors, safe to hand between threads. A
single optimizer run never mutates shared state.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import numpy.typing as npt

DenseVector = npt.NDArray[np.float64]

# Columns of the trace CSV, in order. Reals are rendered with %.17g so a
# written trace round-trips bit-exactly through read_trace_csv.
TRACE_HEADER = (
    "K", "k", "oracle_calls", "f_x", "grad_norm_x", "grad_norm_xbar",
    "f_xbar", "v_norm", "s_sum", "h", "ell", "best_value", "event",
)


class OracleFailure(RuntimeError):
    """The objective or gradient came back non-finite at a query point."""


class MalformedTrace(ValueError):
    """A trace file or record sequence violates the trace format."""


class Event(enum.Enum):
    """What happened at the end of one optimizer iteration."""

    NONE = "none"
    RESTART_UNSUCCESSFUL = "restart_unsuccessful"
    RESTART_SUCCESSFUL = "restart_successful"
    TERMINATED = "terminated"


class TerminationReason(enum.Enum):
    GRAD_TOL = "grad_tol"
    BUDGET = "budget"


def as_vector(x) -> DenseVector:
    """Coerce to a 1-D float64 array and reject NaN/inf entries."""
    v = np.ascontiguousarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise ValueError(f"expected a 1-D vector with at least one entry, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def vector_norm(x: DenseVector) -> float:
    """Euclidean norm sqrt(sum(x_i^2))."""
    return float(np.linalg.norm(x))


def running_average_update(xbar: DenseVector, x: DenseVector, k: int) -> DenseVector:
    """Fold one more point into a running mean of k points.

    Given xbar = mean of k points and a new point x, returns the mean of all
    k+1 points via xbar + (x - xbar)/(k+1). This incremental form is more
    stable at large k than the weighted form (k/(k+1))*xbar + x/(k+1);
    both are mathematically identical.
    """
    if xbar.shape != x.shape:
        raise ValueError(f"dimension mismatch: {xbar.shape} vs {x.shape}")
    if k < 1:
        raise ValueError("k must be a positive integer")
    return xbar + (x - xbar) / (k + 1)


@dataclass(frozen=True)
class OracleResult:
    """Joint objective value and gradient at one query point."""

    value: float
    gradient: DenseVector


def checked_oracle(problem, x: DenseVector) -> OracleResult:
    """Evaluate the problem oracle, rejecting non-finite output.

    One call returns both f(x) and its gradient; runs account their cost in
    units of these joint calls.
    """
    res = problem.evaluate(x)
    if not np.isfinite(res.value) or not np.all(np.isfinite(res.gradient)):
        raise OracleFailure(
            f"non-finite oracle output for problem {getattr(problem, 'name', '?')!r}: "
            f"f={res.value!r} at a point with |x|_inf={np.max(np.abs(x)):.3e}"
        )
    return res


@dataclass(frozen=True)
class HBConfig:
    """Run parameters shared by the heavy-ball method and the GD baseline.

    l_init, alpha and beta control the online step-size estimate: the
    estimate grows by alpha when a proposed step fails the descent test and
    shrinks by beta on a momentum restart (heavy ball) or after an accepted
    step (GD). Recommended heavy-ball values are (1e-3, 2, 0.1); the GD
    baseline is conventionally run with beta = 0.9 instead.
    """

    l_init: float = 1e-3
    alpha: float = 2.0
    beta: float = 0.1
    eps_grad: float = 1e-8
    max_oracle_calls: int = 100_000
    # Relative slack for the descent test; absorbs rounding when the
    # inequality holds with equality (exact on quadratics).
    descent_slack_rel: float = 1e-12

    def validate(self) -> None:
        if not self.l_init > 0:
            raise ValueError("l_init must be positive")
        if not self.alpha > 1:
            raise ValueError("alpha must be > 1")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must be in (0, 1]")
        if self.eps_grad < 0:
            raise ValueError("eps_grad must be nonnegative")
        if self.max_oracle_calls < 1:
            raise ValueError("max_oracle_calls must be a positive integer")
        if self.descent_slack_rel < 0:
            raise ValueError("descent_slack_rel must be nonnegative")


@dataclass(frozen=True, slots=True)
class EpochState:
    """Full optimizer state between heavy-ball iterations.

    k counts iterations inside the current epoch (spans between restarts)
    and resets to 0 at every restart; K counts all iterations of the run.
    s_sum accumulates the squared velocity norms of the epoch and h is the
    epoch's running curvature-oscillation estimate; both restart at 0.
    f_x/g_x cache the oracle output at x so restarts cost no extra calls.
    """

    k: int
    K: int
    x: DenseVector
    v: DenseVector
    xbar: Optional[DenseVector]  # mean of the epoch's iterates; None until k >= 1
    s_sum: float
    h: float
    ell: float
    f_x: float
    g_x: DenseVector
    best_point: DenseVector
    best_value: float
    best_grad: DenseVector
    oracle_calls: int


@dataclass(frozen=True, slots=True)
class IterationRecord:
    """One trace row, enough to re-check the per-epoch inequalities offline."""

    K: int
    k: int
    oracle_calls: int
    f_x: float
    grad_norm_x: float
    grad_norm_xbar: float
    f_xbar: float
    v_norm: float
    s_sum: float
    h: float
    ell: float
    best_value: float
    event: Event


@dataclass(frozen=True)
class RunResult:
    """Outcome of one optimizer run: best point found plus the full trace."""

    best_point: DenseVector
    best_value: float
    returned_grad_norm: float
    total_iterations: int
    oracle_calls: int
    trace: Sequence[IterationRecord]
    terminated_by: TerminationReason


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trace_csv(records: Sequence[IterationRecord], path) -> None:
    """Write the trace with the fixed header; reals carry 17 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for r in records:
            writer.writerow(
                [
                    r.K, r.k, r.oracle_calls,
                    _fmt(r.f_x), _fmt(r.grad_norm_x), _fmt(r.grad_norm_xbar),
                    _fmt(r.f_xbar), _fmt(r.v_norm), _fmt(r.s_sum),
                    _fmt(r.h), _fmt(r.ell), _fmt(r.best_value),
                    r.event.value,
                ]
            )


def read_trace_csv(path) -> list[IterationRecord]:
    """Parse a trace CSV back into records, validating the basic structure."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise MalformedTrace(f"cannot read trace {path}: {exc}") from exc
    if not rows or tuple(rows[0]) != TRACE_HEADER:
        raise MalformedTrace(f"trace {path} is missing the expected header")
    records: list[IterationRecord] = []
    prev_K = 0
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(TRACE_HEADER):
            raise MalformedTrace(f"trace {path} line {lineno}: expected {len(TRACE_HEADER)} fields")
        try:
            rec = IterationRecord(
                K=int(row[0]), k=int(row[1]), oracle_calls=int(row[2]),
                f_x=float(row[3]), grad_norm_x=float(row[4]),
                grad_norm_xbar=float(row[5]), f_xbar=float(row[6]),
                v_norm=float(row[7]), s_sum=float(row[8]), h=float(row[9]),
                ell=float(row[10]), best_value=float(row[11]),
                event=Event(row[12]),
            )
        except (ValueError, KeyError) as exc:
            raise MalformedTrace(f"trace {path} line {lineno}: {exc}") from exc
        if rec.K <= prev_K:
            raise MalformedTrace(f"trace {path} line {lineno}: K must increase strictly")
        if rec.k < 1:
            raise MalformedTrace(f"trace {path} line {lineno}: k must be >= 1")
        prev_K = rec.K
        records.append(rec)
    return records


def split_epochs(records: Sequence[IterationRecord]) -> list[list[IterationRecord]]:
    """Group a trace into epochs using the in-epoch counter k.

    Within an epoch k runs 1, 2, 3, ...; a reset to 1 starts the next epoch.
    The step-size estimate is constant inside an epoch, which is validated
    here as a structural sanity check.
    """
    epochs: list[list[IterationRecord]] = []
    for rec in records:
        if rec.k == 1:
            epochs.append([rec])
            continue
        if not epochs or rec.k != epochs[-1][-1].k + 1:
            raise MalformedTrace(f"record K={rec.K} breaks the in-epoch counter sequence")
        if rec.ell != epochs[-1][-1].ell:
            raise MalformedTrace(f"record K={rec.K} changes ell inside an epoch")
        epochs[-1].append(rec)
    return epochs
