"""Restarted heavy-ball method with online smoothness estimation.

The method keeps a step-size estimate ell and a per-epoch curvature
oscillation estimate h, requiring no problem constants as input. Each
iteration moves with unit momentum, x_k = x_{k-1} + v_k with
v_k = v_{k-1} - grad f(x_{k-1}) / ell, and evaluates the joint oracle at
the new iterate and at the epoch's running average. Two restarts bound the
damage of a bad ell: a failed descent test restarts from the best point
seen with ell * alpha ("unsuccessful"), and k (k+1) h_k > (3/8) ell
restarts with ell * beta once the momentum has run long enough for the
accumulated curvature error to matter ("successful"). The run terminates
when the gradient norm at the averaged iterate reaches the target, which
is the point the method's guarantee certifies.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Optional

import numpy as np

from .core import (
    DenseVector,
    EpochState,
    Event,
    HBConfig,
    IterationRecord,
    RunResult,
    TerminationReason,
    as_vector,
    checked_oracle,
    running_average_update,
    vector_norm,
)

# Overflow guard only; restarts may shrink ell indefinitely otherwise.
ELL_FLOOR = 1e-300


def update_velocity(v_prev: DenseVector, grad_prev: DenseVector, ell: float) -> DenseVector:
    """One momentum update v_k = v_{k-1} - grad/ell (unit momentum factor)."""
    if v_prev.shape != grad_prev.shape:
        raise ValueError(f"dimension mismatch: {v_prev.shape} vs {grad_prev.shape}")
    return v_prev - grad_prev / ell


def descent_holds(
    f_prev: float,
    f_cur: float,
    grad_prev: DenseVector,
    v: DenseVector,
    ell: float,
    slack_rel: float,
) -> bool:
    """Test f_cur - f_prev <= <grad_prev, v> + (ell/2) ||v||^2 up to relative slack.

    v must be the displacement x_cur - x_prev. The slack
    slack_rel * (|f_prev| + |f_cur|) absorbs rounding when the inequality
    holds with equality, e.g. on quadratics with ell equal to the curvature.
    """
    rhs = float(np.dot(grad_prev, v)) + 0.5 * ell * float(np.dot(v, v))
    slack = slack_rel * (abs(f_prev) + abs(f_cur))
    return f_cur - f_prev <= rhs + slack


def update_h(
    state: EpochState,
    f_cur: float,
    grad_cur: DenseVector,
    grad_xbar: DenseVector,
) -> float:
    """Tighten the epoch's curvature oscillation estimate h.

    Called after v, x, xbar, and s_sum have been advanced to iteration k
    while f_x/g_x still cache the previous iterate. The new estimate is the
    smallest h >= h_prev for which both of the method's per-iteration
    inequalities hold at k by construction:

      f(x_k) - f(x_{k-1}) <= <g_{k-1} + g_k, v_k>/2 + h ||v_k||^2 / 3
      ||grad f(xbar_k)||  <= (ell/k) ||v_k|| + h sqrt(k S_k / 8)

    A zero velocity makes the first ratio 0/0 with the inequality true for
    any h, so that term is taken as 0; likewise the second when S_k = 0.
    """
    v = state.v
    vsq = float(np.dot(v, v))
    if vsq > 0.0:
        trapezoid_gap = f_cur - state.f_x - 0.5 * float(np.dot(state.g_x + grad_cur, v))
        term_obj = 3.0 * trapezoid_gap / vsq
    else:
        term_obj = 0.0
    if state.s_sum > 0.0:
        excess = vector_norm(grad_xbar) - (state.ell / state.k) * vector_norm(v)
        term_avg = float(np.sqrt(8.0 / (state.k * state.s_sum))) * excess
    else:
        term_avg = 0.0
    return max(state.h, term_obj, term_avg)


def momentum_restart_due(k: int, h: float, ell: float) -> bool:
    """True once k (k+1) h exceeds (3/8) ell: the momentum has run long enough."""
    return k * (k + 1) * h > 0.375 * ell


def initial_state(problem, x_init: DenseVector, config: HBConfig) -> EpochState:
    """Evaluate the oracle at the start point (one call) and build the state."""
    x = as_vector(x_init)
    if x.size != problem.dim:
        raise ValueError(f"x_init has dim {x.size}, problem expects {problem.dim}")
    res = checked_oracle(problem, x)
    return EpochState(
        k=0,
        K=0,
        x=x,
        v=np.zeros_like(x),
        xbar=None,
        s_sum=0.0,
        h=0.0,
        ell=config.l_init,
        f_x=res.value,
        g_x=res.gradient,
        best_point=x,
        best_value=res.value,
        best_grad=res.gradient,
        oracle_calls=1,
    )


def _epoch_reset(state: EpochState, new_ell: float) -> EpochState:
    """Restart from the best point seen; its oracle result is cached, so 0 calls."""
    return replace(
        state,
        k=0,
        x=state.best_point,
        v=np.zeros_like(state.best_point),
        xbar=None,
        s_sum=0.0,
        h=0.0,
        ell=max(new_ell, ELL_FLOOR),
        f_x=state.best_value,
        g_x=state.best_grad,
    )


def hb_step(problem, state: EpochState, config: HBConfig) -> tuple[EpochState, IterationRecord]:
    """Execute one loop body: move, evaluate, estimate, and maybe restart.

    Costs two oracle calls (new iterate and new average), except the first
    iteration of an epoch where the average equals the start point and its
    cached result is reused. The emitted record carries the ell in effect
    during the iteration; a restart's ell change shows up from the next
    record on. The record's event is TERMINATED only when the iteration
    both met the gradient target at the average and fired no restart, so
    restart events always reflect the descent test faithfully.
    """
    k = state.k + 1
    v = update_velocity(state.v, state.g_x, state.ell)
    x = state.x + v
    res_x = checked_oracle(problem, x)
    calls = state.oracle_calls + 1

    if k == 1:
        xbar = state.x
        f_xbar, g_xbar = state.f_x, state.g_x
    else:
        xbar = running_average_update(state.xbar, state.x, k - 1)
        res_xbar = checked_oracle(problem, xbar)
        calls += 1
        f_xbar, g_xbar = res_xbar.value, res_xbar.gradient

    v_norm = vector_norm(v)
    s_sum = state.s_sum + v_norm * v_norm

    # Running best over every point evaluated so far; strict improvement
    # keeps the earlier point on ties. The new iterate is considered before
    # the new average, matching evaluation order.
    best_point, best_value, best_grad = state.best_point, state.best_value, state.best_grad
    if res_x.value < best_value:
        best_point, best_value, best_grad = x, res_x.value, res_x.gradient
    if k >= 2 and f_xbar < best_value:
        best_point, best_value, best_grad = xbar, f_xbar, g_xbar

    mid = replace(
        state,
        k=k,
        K=state.K + 1,
        x=x,
        v=v,
        xbar=xbar,
        s_sum=s_sum,
        oracle_calls=calls,
        best_point=best_point,
        best_value=best_value,
        best_grad=best_grad,
    )
    h = update_h(mid, res_x.value, res_x.gradient, g_xbar)

    grad_norm_xbar = vector_norm(g_xbar)
    if not descent_holds(state.f_x, res_x.value, state.g_x, v, state.ell, config.descent_slack_rel):
        event = Event.RESTART_UNSUCCESSFUL
        next_state = _epoch_reset(mid, state.ell * config.alpha)
    elif momentum_restart_due(k, h, state.ell):
        event = Event.RESTART_SUCCESSFUL
        next_state = _epoch_reset(mid, state.ell * config.beta)
    else:
        event = Event.TERMINATED if grad_norm_xbar <= config.eps_grad else Event.NONE
        next_state = replace(mid, h=h, f_x=res_x.value, g_x=res_x.gradient)

    record = IterationRecord(
        K=mid.K,
        k=k,
        oracle_calls=calls,
        f_x=res_x.value,
        grad_norm_x=vector_norm(res_x.gradient),
        grad_norm_xbar=grad_norm_xbar,
        f_xbar=f_xbar,
        v_norm=v_norm,
        s_sum=s_sum,
        h=h,
        ell=state.ell,
        best_value=best_value,
        event=event,
    )
    return next_state, record


def run(problem, x_init: DenseVector, config: HBConfig, observer=None) -> RunResult:
    """Run the method until the averaged iterate is eps-stationary or the budget ends.

    The initial oracle call at x_init counts toward the budget. Iterations
    stop once the recorded gradient norm at the average drops to
    config.eps_grad (even when a restart fired the same iteration) or once
    oracle_calls reaches config.max_oracle_calls; a final iteration may
    finish its average evaluation, overshooting the budget by at most one
    call. The optional observer, called as observer(state_before,
    state_after, record) after every step, is a hook for verification
    instrumentation.
    """
    config.validate()
    state = initial_state(problem, x_init, config)
    records: list[IterationRecord] = []
    terminated_by = TerminationReason.BUDGET
    while state.oracle_calls < config.max_oracle_calls:
        prev = state
        state, record = hb_step(problem, state, config)
        records.append(record)
        if observer is not None:
            observer(prev, state, record)
        if record.grad_norm_xbar <= config.eps_grad:
            terminated_by = TerminationReason.GRAD_TOL
            break
    return RunResult(
        best_point=state.best_point,
        best_value=state.best_value,
        returned_grad_norm=vector_norm(state.best_grad),
        total_iterations=state.K,
        oracle_calls=state.oracle_calls,
        trace=records,
        terminated_by=terminated_by,
    )
