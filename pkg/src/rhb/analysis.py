"""Numerical verification of the optimizer's guarantees on recorded traces.

Contains brute-force constant estimators (gradient Lipschitz constant and
Hessian oscillation over a box), trace verifiers for the per-epoch
decrease and averaged-gradient bounds, a streaming per-iteration
inequality checker, the explicit worst-case iteration bound, and a
log-log scaling-exponent fit. Sampled constants are lower bounds of the
true suprema, so every check that multiplies by one carries an explicit
5 percent slack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import (
    DenseVector,
    Event,
    HBConfig,
    IterationRecord,
    MalformedTrace,
    RunResult,
    running_average_update,
    split_epochs,
    vector_norm,
)
from .heavy_ball import run, update_velocity
from .problems import DifferentiableProblem, fd_hessian

# Absolute slack floors: rounding noise in the h estimate scales with the
# objective magnitude (the trapezoid gap is float-exact on quadratics), and
# the pointwise checks meet exact equalities at zero right-hand sides.
H_BOUND_ABS_FLOOR = 1e-8
POINTWISE_ABS_FLOOR = 1e-12
SAMPLED_SLACK = 1.05


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by per-coordinate bounds."""

    lower: DenseVector
    upper: DenseVector

    def __post_init__(self):
        if self.lower.shape != self.upper.shape or np.any(self.lower > self.upper):
            raise ValueError("box bounds must satisfy lower <= upper elementwise")

    @property
    def dim(self) -> int:
        return self.lower.size

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.lower + (self.upper - self.lower) * rng.random((n, self.dim))

    @staticmethod
    def inflated(lower: DenseVector, upper: DenseVector, inflate: float = 0.1) -> "Box":
        """Box widened about its center by the given fraction."""
        lower = np.asarray(lower, dtype=np.float64)
        upper = np.asarray(upper, dtype=np.float64)
        center = 0.5 * (lower + upper)
        half = 0.5 * (upper - lower) * (1.0 + inflate)
        return Box(center - half, center + half)


@dataclass(frozen=True)
class HolderEstimate:
    """Sampled Hessian-oscillation constant over a region.

    h_hat is a maximum over sampled pairs, hence a lower bound on the true
    supremum of ||H(x) - H(y)|| / ||x - y||^nu over the region.
    """

    nu: float
    h_hat: float
    region: Box
    samples: int


@dataclass(frozen=True)
class ScalingPoint:
    """One (target accuracy, measured oracle calls) pair of a scaling study."""

    eps: float
    oracle_calls: int


@dataclass(frozen=True)
class Violation:
    """A failed inequality: the identifying indices plus both sides.

    For trace checks K and k are the iteration indices; sample-based checks
    store the sample index in K with k = 0.
    """

    check: str
    K: int
    k: int
    lhs: float
    rhs: float


def report(check: str, violations: Sequence[Violation], tolerance) -> dict:
    """JSON-ready summary of one verifier pass."""
    return {
        "check": check,
        "violations": [
            {"K": v.K, "k": v.k, "lhs": v.lhs, "rhs": v.rhs} for v in violations
        ],
        "tolerance": tolerance,
    }


# ----------------------------------------------------------------------------
# constant estimation
# ----------------------------------------------------------------------------


def estimate_grad_lipschitz(
    problem: DifferentiableProblem,
    region: Box,
    n_samples: int,
    seed: int,
) -> float:
    """Max of ||g(x) - g(y)|| / ||x - y|| over all pairs of sampled points.

    A lower bound on the regional Lipschitz constant of the gradient.
    """
    if n_samples < 2:
        raise ValueError("need at least 2 samples")
    rng = np.random.default_rng(seed)
    pts = region.sample(rng, n_samples)
    grads = np.stack([problem.evaluate(p).gradient for p in pts])
    best = 0.0
    for i in range(n_samples - 1):
        dx = pts[i + 1 :] - pts[i]
        dg = grads[i + 1 :] - grads[i]
        dist = np.linalg.norm(dx, axis=1)
        keep = dist > 0
        if np.any(keep):
            ratios = np.linalg.norm(dg[keep], axis=1) / dist[keep]
            best = max(best, float(ratios.max()))
    return best


def _holder_points(region: Box, rng: np.random.Generator, n: int) -> np.ndarray:
    """Sample points for Hessian probing: uniform draws alternating with
    axis-aligned partners of the previous draw.

    The partners matter because the oscillation supremum of separable
    objectives is attained on axis-aligned pairs, which uniform pairs
    almost never approximate in more than a few dimensions. Drawing point
    j consumes a fixed amount of the stream, so a longer run with the same
    seed extends the same sequence.
    """
    d = region.dim
    width = region.upper - region.lower
    pts = np.empty((n, d))
    for j in range(n):
        if j % 2 == 0:
            pts[j] = region.lower + width * rng.random(d)
        else:
            pts[j] = pts[j - 1]
            axis = int(rng.integers(d))
            pts[j, axis] = region.lower[axis] + width[axis] * rng.random()
    return pts


def estimate_holder_hessian(
    problem: DifferentiableProblem,
    region: Box,
    nu: float,
    n_samples: int,
    seed: int,
) -> HolderEstimate:
    """Max over sampled pairs of ||H(x) - H(y)||_op / ||x - y||^nu.

    Hessians come from central differences of the analytic gradient;
    operator norms of the symmetric differences are exact symmetric
    eigenvalue computations (LAPACK). Monotone in n_samples at fixed seed.
    """
    if not 0.0 <= nu <= 1.0:
        raise ValueError("nu must lie in [0, 1]")
    if n_samples < 2:
        raise ValueError("need at least 2 samples")
    rng = np.random.default_rng(seed)
    pts = _holder_points(region, rng, n_samples)
    hessians = np.stack([fd_hessian(problem, p) for p in pts])
    best = 0.0
    for i in range(n_samples - 1):
        dist = np.linalg.norm(pts[i + 1 :] - pts[i], axis=1)
        keep = dist > 0
        if not np.any(keep):
            continue
        diffs = hessians[i + 1 :][keep] - hessians[i]
        opnorms = np.max(np.abs(np.linalg.eigvalsh(diffs)), axis=1)
        ratios = opnorms / dist[keep] ** nu
        best = max(best, float(ratios.max()))
    return HolderEstimate(nu=nu, h_hat=best, region=region, samples=n_samples)


# ----------------------------------------------------------------------------
# trace verifiers
# ----------------------------------------------------------------------------


def verify_epoch_decrease(trace: Sequence[IterationRecord]) -> list[Violation]:
    """Check the per-epoch decrease bound on every prefix where it applies.

    For a prefix of length k of an epoch in which every descent test
    passed (guaranteed by the control flow for every record except a
    trailing unsuccessful restart), the best objective among the epoch's
    iterates must lie below f(x_0) - ell * S_k / (4k), up to
    1e-9 * (1 + |f(x_0)|). The epoch's f(x_0) is read off the first
    record's average column, since the first average equals the start
    point.
    """
    violations: list[Violation] = []
    for epoch in split_epochs(trace):
        f0 = epoch[0].f_xbar
        ell = epoch[0].ell
        tol = 1e-9 * (1.0 + abs(f0))
        valid = len(epoch) - 1 if epoch[-1].event is Event.RESTART_UNSUCCESSFUL else len(epoch)
        run_min = math.inf
        for rec in epoch[:valid]:
            run_min = min(run_min, rec.f_x)
            bound = f0 - ell * rec.s_sum / (4.0 * rec.k)
            if run_min > bound + tol:
                violations.append(Violation("epoch_decrease", rec.K, rec.k, run_min, bound))
    return violations


def verify_avg_grad_bound(trace: Sequence[IterationRecord]) -> list[Violation]:
    """Check min_{i<k} ||grad f(xbar_i)|| <= ell sqrt(8 S_{k-1} / k^3) at k >= 2.

    Holds at every iteration an epoch actually reaches, regardless of how
    the epoch ends; tolerance 1e-9 * (1 + bound).
    """
    violations: list[Violation] = []
    for epoch in split_epochs(trace):
        ell = epoch[0].ell
        run_min = math.inf
        prev_s = 0.0
        for rec in epoch:
            if rec.k >= 2:
                bound = ell * math.sqrt(8.0 * prev_s / rec.k**3)
                if run_min > bound + 1e-9 * (1.0 + bound):
                    violations.append(Violation("avg_grad_bound", rec.K, rec.k, run_min, bound))
            run_min = min(run_min, rec.grad_norm_xbar)
            prev_s = rec.s_sum
    return violations


def verify_continuation(trace: Sequence[IterationRecord]) -> list[Violation]:
    """Check k (k-1) h_{k-1} <= (3/8) ell at each iteration start, zero tolerance.

    This is the momentum-restart guarantee: the previous iteration of the
    epoch did not fire the restart, so the product was already below the
    threshold under the exact same floating-point comparison.
    """
    violations: list[Violation] = []
    for epoch in split_epochs(trace):
        ell = epoch[0].ell
        h_prev = 0.0
        for rec in epoch:
            lhs = rec.k * (rec.k - 1) * h_prev
            if lhs > 0.375 * ell:
                violations.append(Violation("continuation", rec.K, rec.k, lhs, 0.375 * ell))
            h_prev = rec.h
    return violations


def verify_h_bound(trace: Sequence[IterationRecord], estimate: HolderEstimate) -> list[Violation]:
    """Check h_k <= h_hat (k S_k)^(nu/2) against a sampled regional constant.

    The caller must supply an estimate whose region covers the convex hull
    of the trace's iterates and averages. Because h_hat is a sampled lower
    bound of the true constant, the right-hand side carries a 5 percent
    slack, plus an absolute floor 1e-8 * (1 + |f_x|) that absorbs the
    float-rounding scale of h on stretches where the estimate is exact.
    """
    violations: list[Violation] = []
    for rec in trace:
        rhs = estimate.h_hat * (rec.k * rec.s_sum) ** (estimate.nu / 2.0)
        limit = rhs * SAMPLED_SLACK + H_BOUND_ABS_FLOOR * (1.0 + abs(rec.f_x))
        if rec.h > limit:
            violations.append(Violation(f"h_bound[nu={estimate.nu:g}]", rec.K, rec.k, rec.h, rhs))
    return violations


def verify_pointwise_lemmas(
    problem: DifferentiableProblem,
    estimate: HolderEstimate,
    n_samples: int,
    seed: int,
) -> list[Violation]:
    """Sample-check the two smoothness inequalities behind the h estimate.

    Per configuration: (a) the gradient at a convex combination of up to 5
    points stays within H/(1+nu) * sum lam_i ||z_i - zbar||^(1+nu) of the
    combination of gradients, and (b) the trapezoid gap
    |f(x) - f(y) - <g(x)+g(y), x-y>/2| stays below
    2H ||x-y||^(2+nu) / ((1+nu)(2+nu)(3+nu)). Both right-hand sides carry
    the 5 percent sampled-constant slack plus a tiny absolute floor for
    exact-equality cases.
    """
    rng = np.random.default_rng(seed)
    region = estimate.region
    h_hat, nu = estimate.h_hat, estimate.nu
    jensen_coef = h_hat / (1.0 + nu)
    trap_coef = 2.0 * h_hat / ((1.0 + nu) * (2.0 + nu) * (3.0 + nu))
    violations: list[Violation] = []
    for idx in range(n_samples):
        m = int(rng.integers(1, 6))
        z = region.sample(rng, m)
        lam = rng.dirichlet(np.ones(m))
        zbar = lam @ z
        grads = np.stack([problem.evaluate(p).gradient for p in z])
        g_bar = problem.evaluate(zbar).gradient
        lhs = vector_norm(g_bar - lam @ grads)
        rhs = jensen_coef * float(np.dot(lam, np.linalg.norm(z - zbar, axis=1) ** (1.0 + nu)))
        if lhs > rhs * SAMPLED_SLACK + POINTWISE_ABS_FLOOR * (1.0 + vector_norm(g_bar)):
            violations.append(Violation("gradient_jensen", idx, 0, lhs, rhs))

        x, y = region.sample(rng, 2)
        rx, ry = problem.evaluate(x), problem.evaluate(y)
        gap = abs(rx.value - ry.value - 0.5 * float(np.dot(rx.gradient + ry.gradient, x - y)))
        rhs = trap_coef * vector_norm(x - y) ** (2.0 + nu)
        if gap > rhs * SAMPLED_SLACK + POINTWISE_ABS_FLOOR * (1.0 + abs(rx.value) + abs(ry.value)):
            violations.append(Violation("trapezoid_error", idx, 0, gap, rhs))
    return violations


# ----------------------------------------------------------------------------
# streaming per-iteration checks
# ----------------------------------------------------------------------------


def run_with_inequality_checks(
    problem: DifferentiableProblem,
    x_init: DenseVector,
    config: HBConfig,
) -> tuple[RunResult, list[Violation]]:
    """Run the heavy-ball method while re-deriving each step independently.

    An observer replays every iteration from the pre-step state: it
    recomputes the velocity, iterate, and average, re-queries the pure
    oracle at them, and checks (a) the trapezoid decrease inequality with
    the recorded h, (b) the averaged-gradient inequality, (c) the
    continuation guarantee, and (d) bit-exact agreement of the recorded
    scalars with the replay, which pins the replay to the real trajectory.
    Memory stays O(dim); oracle work roughly doubles.
    """
    violations: list[Violation] = []

    def observer(before, after, rec: IterationRecord) -> None:
        k = rec.k
        ell = rec.ell
        v = update_velocity(before.v, before.g_x, before.ell)
        x = before.x + v
        res = problem.evaluate(x)
        if k == 1:
            f_xbar, g_xbar = before.f_x, before.g_x
        else:
            xbar = running_average_update(before.xbar, before.x, k - 1)
            res_bar = problem.evaluate(xbar)
            f_xbar, g_xbar = res_bar.value, res_bar.gradient

        # replay consistency, exact float equality
        if (
            rec.f_x != res.value
            or rec.v_norm != vector_norm(v)
            or rec.f_xbar != f_xbar
            or rec.ell != before.ell
        ):
            violations.append(Violation("trace_consistency", rec.K, k, rec.f_x, res.value))
            return

        lhs = res.value - before.f_x
        rhs = 0.5 * float(np.dot(before.g_x + res.gradient, v)) + rec.h / 3.0 * float(np.dot(v, v))
        if lhs > rhs + 1e-10 * (1.0 + abs(res.value)):
            violations.append(Violation("trapezoid_decrease", rec.K, k, lhs, rhs))

        g_norm = vector_norm(g_xbar)
        rhs = ell / k * rec.v_norm + rec.h * math.sqrt(k * rec.s_sum / 8.0)
        if g_norm > rhs + 1e-10 * (1.0 + g_norm):
            violations.append(Violation("avg_grad_iteration", rec.K, k, g_norm, rhs))

        cont = k * (k - 1) * before.h
        if cont > 0.375 * ell:
            violations.append(Violation("continuation", rec.K, k, cont, 0.375 * ell))
        if rec.h < before.h or rec.s_sum < before.s_sum:
            violations.append(Violation("monotonicity", rec.K, k, rec.h, before.h))

    result = run(problem, x_init, config, observer=observer)
    return result, violations


# ----------------------------------------------------------------------------
# complexity bound and scaling fits
# ----------------------------------------------------------------------------


def theorem_bound(
    delta: float,
    l_bar: float,
    holder_grid: Iterable[tuple[float, float]],
    eps: float,
    l_init: float,
    alpha: float,
    beta: float,
) -> float:
    """Explicit worst-case total-iteration bound of the restarted method.

    With c1 = log_alpha(1/beta) and c2 = 1 + log_alpha(l_bar / l_init),
    the bound is the minimum over the (nu, H) grid of

        91 (1 + sqrt(c1)) delta sqrt(l_bar) H^(1/(2+2nu)) eps^(-(4+3nu)/(2+2nu))
        + 256 c1 delta H^(1/(1+nu)) eps^(-(2+nu)/(1+nu))

    plus 6 sqrt(c2 delta l_bar) / eps + c2. Grid entries with H = 0
    contribute 0, and minimizing over a finite grid upper-bounds the exact
    infimum over nu, which is the safe direction for acceptance checks.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if l_init <= 0 or l_bar <= 0:
        raise ValueError("l_init and l_bar must be positive")
    if alpha <= 1 or not 0 < beta <= 1:
        raise ValueError("need alpha > 1 and beta in (0, 1]")
    grid = list(holder_grid)
    if not grid:
        raise ValueError("holder_grid must be nonempty")
    log_alpha = math.log(alpha)
    c1 = math.log(1.0 / beta) / log_alpha
    c2 = 1.0 + math.log(l_bar / l_init) / log_alpha
    best = math.inf
    for nu, h in grid:
        if not 0.0 <= nu <= 1.0:
            raise ValueError(f"nu = {nu} outside [0, 1]")
        if h < 0:
            raise ValueError("H must be nonnegative")
        if h == 0.0:
            term = 0.0
        else:
            term = 91.0 * (1.0 + math.sqrt(c1)) * delta * math.sqrt(l_bar) * h ** (
                1.0 / (2.0 + 2.0 * nu)
            ) * eps ** (-(4.0 + 3.0 * nu) / (2.0 + 2.0 * nu))
            term += 256.0 * c1 * delta * h ** (1.0 / (1.0 + nu)) * eps ** (
                -(2.0 + nu) / (1.0 + nu)
            )
        best = min(best, term)
    return best + 6.0 * math.sqrt(c2 * delta * l_bar) / eps + c2


def fit_scaling_exponent(points: Sequence[ScalingPoint]) -> float:
    """Least-squares slope of log(oracle_calls) against log(1/eps)."""
    if len(points) < 2:
        raise ValueError("need at least 2 scaling points")
    eps = np.array([p.eps for p in points], dtype=np.float64)
    calls = np.array([p.oracle_calls for p in points], dtype=np.float64)
    if np.any(eps <= 0) or np.any(calls <= 0):
        raise ValueError("eps and oracle_calls must be positive")
    if len(np.unique(eps)) != len(eps):
        raise ValueError("eps values must be distinct")
    slope = np.polyfit(np.log(1.0 / eps), np.log(calls), 1)[0]
    return float(slope)
