"""Gradient descent with backtracking on the step-size estimate.

The comparison baseline. It shares the heavy-ball module's parameter
vocabulary: ell starts at l_init, grows by alpha whenever a proposed step
fails the descent test, and shrinks by beta after every accepted step
(the conventional choice here is beta = 0.9 rather than the heavy-ball
default 0.1). Traces use the common format with the average-iterate
columns repeating the iterate columns, since GD keeps no average.
"""

from __future__ import annotations

import numpy as np

from .core import (
    DenseVector,
    Event,
    HBConfig,
    IterationRecord,
    RunResult,
    TerminationReason,
    as_vector,
    checked_oracle,
    vector_norm,
)
from .heavy_ball import ELL_FLOOR, descent_holds

GD_DEFAULT_BETA = 0.9

# This many consecutive rejected proposals means ell has grown past any
# plausible curvature, which signals a broken or non-smooth oracle.
MAX_BACKTRACKS = 200


class BacktrackLimitExceeded(RuntimeError):
    """The descent test kept failing while ell grew; the oracle looks unusable."""


def gd_run(problem, x_init: DenseVector, config: HBConfig) -> RunResult:
    """Backtracking gradient descent until ||grad f(x)|| <= eps or budget.

    Each proposal x - grad/ell costs one oracle call; rejected proposals
    double ell (times alpha) and re-propose. Oracle calls total
    1 + number of proposals. A start point that already meets the gradient
    target terminates after the initial call with an empty trace.
    """
    config.validate()
    x = as_vector(x_init)
    if x.size != problem.dim:
        raise ValueError(f"x_init has dim {x.size}, problem expects {problem.dim}")
    res = checked_oracle(problem, x)
    f_x, g_x = res.value, res.gradient
    calls = 1
    best_point, best_value, best_grad = x, f_x, g_x

    records: list[IterationRecord] = []
    ell = config.l_init
    s_sum = 0.0
    total_iters = 0
    terminated_by = TerminationReason.BUDGET

    if vector_norm(g_x) <= config.eps_grad:
        terminated_by = TerminationReason.GRAD_TOL
    else:
        while calls < config.max_oracle_calls:
            backtracks = 0
            accepted = False
            while calls < config.max_oracle_calls:
                v = -g_x / ell
                x_new = x + v
                res_new = checked_oracle(problem, x_new)
                calls += 1
                if res_new.value < best_value:
                    best_point, best_value, best_grad = x_new, res_new.value, res_new.gradient
                if descent_holds(f_x, res_new.value, g_x, v, ell, config.descent_slack_rel):
                    accepted = True
                    break
                backtracks += 1
                if backtracks > MAX_BACKTRACKS:
                    raise BacktrackLimitExceeded(
                        f"{MAX_BACKTRACKS} consecutive rejected proposals on "
                        f"{getattr(problem, 'name', '?')!r}; ell reached {ell:.3e}"
                    )
                ell *= config.alpha
            if not accepted:
                break
            total_iters += 1
            v_norm = vector_norm(v)
            s_sum += v_norm * v_norm
            grad_norm = vector_norm(res_new.gradient)
            done = grad_norm <= config.eps_grad
            records.append(
                IterationRecord(
                    K=total_iters,
                    k=total_iters,
                    oracle_calls=calls,
                    f_x=res_new.value,
                    grad_norm_x=grad_norm,
                    grad_norm_xbar=grad_norm,
                    f_xbar=res_new.value,
                    v_norm=v_norm,
                    s_sum=s_sum,
                    h=0.0,
                    ell=ell,
                    best_value=best_value,
                    event=Event.TERMINATED if done else Event.NONE,
                )
            )
            x, f_x, g_x = x_new, res_new.value, res_new.gradient
            ell = max(ell * config.beta, ELL_FLOOR)
            if done:
                terminated_by = TerminationReason.GRAD_TOL
                break

    return RunResult(
        best_point=best_point,
        best_value=best_value,
        returned_grad_norm=vector_norm(best_grad),
        total_iterations=total_iters,
        oracle_calls=calls,
        trace=records,
        terminated_by=terminated_by,
    )
