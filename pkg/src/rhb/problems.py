"""Differentiable benchmark problems with analytic gradients.

Includes the four classic test functions, the balanced low-rank matrix
completion objective with its data loaders, convex quadratics for exact
checks, and finite-difference oracles used to validate every gradient.
All oracles are pure and deterministic, so evaluations can run from any
thread and reruns are bit-stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .core import DenseVector, OracleResult, as_vector

FD_HESSIAN_MAX_DIM = 64


class DimensionTooLarge(ValueError):
    """Dense Hessian probing is guarded to small dimensions."""


class ParseError(ValueError):
    """A ratings file line could not be parsed; the message carries the line number."""


class EmptyFileError(ValueError):
    """A ratings file contained no records."""


@dataclass(frozen=True)
class DifferentiableProblem:
    """An objective accessed through a joint (value, gradient) oracle.

    known_optimum, when present, is a valid lower bound on f attained at
    `minimizer`; known_grad_lipschitz, when present, is the exact global
    Lipschitz constant of the gradient.
    """

    name: str
    dim: int
    oracle: Callable[[DenseVector], tuple[float, DenseVector]]
    known_optimum: Optional[float] = None
    known_grad_lipschitz: Optional[float] = None
    minimizer: Optional[DenseVector] = None

    def evaluate(self, x: DenseVector) -> OracleResult:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise ValueError(f"{self.name}: expected shape ({self.dim},), got {x.shape}")
        value, grad = self.oracle(x)
        return OracleResult(float(value), np.asarray(grad, dtype=np.float64))


@dataclass(frozen=True)
class RatingTriple:
    """One observed matrix entry: 0-based (row, col) and the value there."""

    row: int
    col: int
    value: float


@dataclass
class OracleCall:
    """One logged oracle query; used by verification instrumentation."""

    x: DenseVector
    value: float
    gradient: DenseVector


def with_query_log(problem: DifferentiableProblem) -> tuple[DifferentiableProblem, list[OracleCall]]:
    """Wrap a problem so every oracle query is appended to a shared list."""
    log: list[OracleCall] = []
    inner = problem.oracle

    def oracle(x: DenseVector) -> tuple[float, DenseVector]:
        value, grad = inner(x)
        log.append(OracleCall(np.array(x), float(value), np.array(grad)))
        return value, grad

    return replace(problem, oracle=oracle), log


def with_bounding_box(problem: DifferentiableProblem) -> tuple[DifferentiableProblem, dict]:
    """Wrap a problem so the axis-aligned box of all queried points is tracked.

    Returns the wrapped problem and a dict updated in place with keys
    "lower" and "upper" (None until the first query). Memory stays O(dim),
    unlike with_query_log.
    """
    box: dict = {"lower": None, "upper": None}
    inner = problem.oracle

    def oracle(x: DenseVector) -> tuple[float, DenseVector]:
        if box["lower"] is None:
            box["lower"] = np.array(x)
            box["upper"] = np.array(x)
        else:
            np.minimum(box["lower"], x, out=box["lower"])
            np.maximum(box["upper"], x, out=box["upper"])
        return inner(x)

    return replace(problem, oracle=oracle), box


# ----------------------------------------------------------------------------
# benchmark functions
# ----------------------------------------------------------------------------


def dixon_price(d: int) -> DifferentiableProblem:
    """f(x) = (x_1 - 1)^2 + sum_{i=2}^d i (2 x_i^2 - x_{i-1})^2, minimum 0."""
    if d < 2:
        raise ValueError("dixon_price needs d >= 2")
    coef = np.arange(2.0, d + 1)  # i = 2..d

    def oracle(x: DenseVector) -> tuple[float, DenseVector]:
        t = 2.0 * x[1:] ** 2 - x[:-1]
        value = (x[0] - 1.0) ** 2 + float(np.dot(coef, t * t))
        grad = np.zeros_like(x)
        grad[0] = 2.0 * (x[0] - 1.0)
        grad[1:] += coef * 2.0 * t * 4.0 * x[1:]
        grad[:-1] -= coef * 2.0 * t
        return value, grad

    # x*_i = 2^(2^(1-i) - 1) for 1-based i
    i = np.arange(1, d + 1)
    xstar = np.power(2.0, np.power(2.0, 1.0 - i) - 1.0)
    return DifferentiableProblem("dixon-price", d, oracle, known_optimum=0.0, minimizer=xstar)


def powell(d: int) -> DifferentiableProblem:
    """Powell's singular function over floor(d/4) blocks of four variables.

    Any trailing d mod 4 coordinates do not enter the objective and carry
    zero gradient. The minimum value 0 is attained at the origin.
    """
    if d < 4:
        raise ValueError("powell needs d >= 4")
    n_blocks = d // 4
    i1 = np.arange(n_blocks) * 4
    i2, i3, i4 = i1 + 1, i1 + 2, i1 + 3

    def oracle(x: DenseVector) -> tuple[float, DenseVector]:
        a = x[i1] + 10.0 * x[i2]
        b = x[i3] - x[i4]
        c = x[i2] - 2.0 * x[i3]
        e = x[i1] - x[i4]
        value = float(np.sum(a * a + 5.0 * b * b + c**4 + 10.0 * e**4))
        grad = np.zeros_like(x)
        grad[i1] = 2.0 * a + 40.0 * e**3
        grad[i2] = 20.0 * a + 4.0 * c**3
        grad[i3] = 10.0 * b - 8.0 * c**3
        grad[i4] = -10.0 * b - 40.0 * e**3
        return value, grad

    return DifferentiableProblem("powell", d, oracle, known_optimum=0.0, minimizer=np.zeros(d))


def qing(d: int) -> DifferentiableProblem:
    """f(x) = sum_{i=1}^{d-1} (x_i^2 - i)^2 with the sum stopping at d-1.

    The last coordinate is unconstrained by the objective, so the documented
    minimizer (sqrt(1), ..., sqrt(d)) is one of a continuum; optimality
    checks should ignore x_d.
    """
    if d < 2:
        raise ValueError("qing needs d >= 2")
    idx = np.arange(1.0, d)  # i = 1..d-1

    def oracle(x: DenseVector) -> tuple[float, DenseVector]:
        t = x[:-1] ** 2 - idx
        value = float(np.dot(t, t))
        grad = np.zeros_like(x)
        grad[:-1] = 4.0 * x[:-1] * t
        return value, grad

    xstar = np.sqrt(np.arange(1.0, d + 1))
    return DifferentiableProblem("qing", d, oracle, known_optimum=0.0, minimizer=xstar)


def rosenbrock(d: int) -> DifferentiableProblem:
    """f(x) = sum_{i=1}^{d-1} (100 (x_{i+1} - x_i^2)^2 + (x_i - 1)^2), minimum 0 at the ones vector."""
    if d < 2:
        raise ValueError("rosenbrock needs d >= 2")

    def oracle(x: DenseVector) -> tuple[float, DenseVector]:
        t = x[1:] - x[:-1] ** 2
        u = x[:-1] - 1.0
        value = float(100.0 * np.dot(t, t) + np.dot(u, u))
        grad = np.zeros_like(x)
        grad[:-1] = -400.0 * x[:-1] * t + 2.0 * u
        grad[1:] += 200.0 * t
        return value, grad

    return DifferentiableProblem("rosenbrock", d, oracle, known_optimum=0.0, minimizer=np.ones(d))


def quadratic(d: int) -> DifferentiableProblem:
    """f(x) = ||x||^2 / 2, the exactly solvable sanity problem (L = 1)."""

    def oracle(x: DenseVector) -> tuple[float, DenseVector]:
        return 0.5 * float(np.dot(x, x)), x.copy()

    return DifferentiableProblem(
        "quadratic-test", d, oracle,
        known_optimum=0.0, known_grad_lipschitz=1.0, minimizer=np.zeros(d),
    )


def separable_cubic(d: int) -> DifferentiableProblem:
    """f(x) = sum_i x_i^3 / 6; the Hessian diag(x) changes at unit rate.

    Unbounded below, so only budgeted runs make sense; useful because the
    Hessian's Lipschitz constant is exactly 1 everywhere.
    """

    def oracle(x: DenseVector) -> tuple[float, DenseVector]:
        return float(np.sum(x**3)) / 6.0, 0.5 * x**2

    return DifferentiableProblem("separable-cubic", d, oracle)


def random_quadratic(
    d: int,
    seed: int,
    eig_low: float = 0.1,
    eig_high: float = 10.0,
    center_scale: float = 1.0,
) -> DifferentiableProblem:
    """A random convex quadratic f(x) = (x-c)' A (x-c) / 2 with known spectrum.

    A = Q diag(lam) Q' with Q orthogonal and lam uniform in [eig_low,
    eig_high], so the gradient's Lipschitz constant is exactly max(lam).
    """
    rng = np.random.default_rng(seed)
    lam = rng.uniform(eig_low, eig_high, size=d)
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    a = (q * lam) @ q.T
    a = 0.5 * (a + a.T)
    lmax = float(np.max(np.abs(np.linalg.eigvalsh(a))))
    center = center_scale * rng.standard_normal(d)

    def oracle(x: DenseVector) -> tuple[float, DenseVector]:
        dx = x - center
        g = a @ dx
        return 0.5 * float(np.dot(dx, g)), g

    return DifferentiableProblem(
        f"random-quadratic-{seed}", d, oracle,
        known_optimum=0.0, known_grad_lipschitz=lmax, minimizer=center,
    )


# ----------------------------------------------------------------------------
# low-rank matrix completion
# ----------------------------------------------------------------------------


def matrix_completion(p: int, q: int, r: int, omega: Sequence[RatingTriple]) -> DifferentiableProblem:
    """Balanced factorization objective over the observed entries omega.

    The variable packs U (p x r) then V (q x r), both row-major. With
    N = |omega| and M = U'U - V'V,

        f = sum_{(i,j,s)} ((U V')_ij - s)^2 / (2N) + ||M||_F^2 / (2N),

    whose gradient is (residual scatter)/N plus 2 U M / N and -2 V M / N.
    Evaluation touches only observed entries: cost O(|omega| r + (p+q) r^2).
    Triples are re-sorted by (row, col) at construction so the accumulation
    order, and hence the float result, is independent of input permutation.
    """
    if min(p, q, r) < 1:
        raise ValueError("p, q, r must be positive")
    if not omega:
        raise ValueError("omega must be nonempty")
    rows = np.array([t.row for t in omega], dtype=np.intp)
    cols = np.array([t.col for t in omega], dtype=np.intp)
    vals = np.array([t.value for t in omega], dtype=np.float64)
    if rows.min() < 0 or rows.max() >= p or cols.min() < 0 or cols.max() >= q:
        raise IndexError(f"rating index out of range for a {p} x {q} matrix")
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    n_obs = float(len(vals))
    dim = (p + q) * r

    def oracle(z: DenseVector) -> tuple[float, DenseVector]:
        u = z[: p * r].reshape(p, r)
        v = z[p * r :].reshape(q, r)
        pred = np.einsum("ij,ij->i", u[rows], v[cols])
        resid = pred - vals
        m = u.T @ u - v.T @ v
        value = (float(np.dot(resid, resid)) + float(np.sum(m * m))) / (2.0 * n_obs)
        grad_u = (2.0 / n_obs) * (u @ m)
        grad_v = (-2.0 / n_obs) * (v @ m)
        scaled = resid / n_obs
        wu = scaled[:, None] * v[cols]
        wv = scaled[:, None] * u[rows]
        for j in range(r):
            grad_u[:, j] += np.bincount(rows, weights=wu[:, j], minlength=p)
            grad_v[:, j] += np.bincount(cols, weights=wv[:, j], minlength=q)
        return value, np.concatenate([grad_u.ravel(), grad_v.ravel()])

    return DifferentiableProblem(f"completion-{p}x{q}-r{r}", dim, oracle)


def pack_factors(u: np.ndarray, v: np.ndarray) -> DenseVector:
    """Pack factor matrices into the flat variable layout used by matrix_completion."""
    return np.concatenate([np.asarray(u, dtype=np.float64).ravel(),
                           np.asarray(v, dtype=np.float64).ravel()])


def load_movielens(path) -> tuple[int, int, list[RatingTriple]]:
    """Read a ratings file with lines "user item rating timestamp" (tab separated).

    Ids in the file are 1-based; returned triples are 0-based with the
    rating as a float and the timestamp discarded. The matrix shape is
    inferred from the largest ids observed.
    """
    triples: list[RatingTriple] = []
    p = q = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 4:
                raise ParseError(f"line {lineno}: expected 4 tab-separated fields, got {len(fields)}")
            try:
                user, item, rating = int(fields[0]), int(fields[1]), int(fields[2])
            except ValueError as exc:
                raise ParseError(f"line {lineno}: {exc}") from exc
            if user < 1 or item < 1:
                raise ParseError(f"line {lineno}: ids must be 1-based positive integers")
            triples.append(RatingTriple(user - 1, item - 1, float(rating)))
            p = max(p, user)
            q = max(q, item)
    if not triples:
        raise EmptyFileError(f"{path}: no ratings found")
    return p, q, triples


def synthetic_completion(
    p: int,
    q: int,
    r: int,
    density: float,
    seed: int,
    balanced: bool = False,
) -> tuple[list[RatingTriple], tuple[np.ndarray, np.ndarray]]:
    """Plant rank-r factors and sample ceil(density * p * q) distinct entries.

    The planted factors have standard-normal entries. With balanced=True
    they are re-factored through a thin SVD of their product so that
    U'U = V'V, which makes the completion objective exactly zero at the
    planted point (desk-scale sizes only: this materializes the p x q
    product). Deterministic given the seed.
    """
    if not 0 < density <= 1:
        raise ValueError("density must lie in (0, 1]")
    count = math.ceil(density * p * q)
    if count < 1:
        raise ValueError("density * p * q must be at least 1")
    rng = np.random.default_rng(seed)
    u0 = rng.standard_normal((p, r))
    v0 = rng.standard_normal((q, r))
    if balanced:
        left, sing, right_t = np.linalg.svd(u0 @ v0.T, full_matrices=False)
        root = np.sqrt(sing[:r])
        u0 = left[:, :r] * root
        v0 = right_t[:r].T * root
    flat = np.sort(rng.choice(p * q, size=count, replace=False))
    rows = flat // q
    cols = flat % q
    vals = np.einsum("ij,ij->i", u0[rows], v0[cols])
    triples = [RatingTriple(int(i), int(j), float(s)) for i, j, s in zip(rows, cols, vals)]
    return triples, (u0, v0)


def save_triples_csv(triples: Sequence[RatingTriple], path) -> None:
    """Write triples as "row,col,value" lines with a header."""
    with open(path, "w") as fh:
        fh.write("row,col,value\n")
        for t in triples:
            fh.write(f"{t.row},{t.col},{format(t.value, '.17g')}\n")


def load_triples_csv(path) -> list[RatingTriple]:
    """Read triples written by save_triples_csv."""
    triples: list[RatingTriple] = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "row,col,value":
            raise ParseError("line 1: expected header 'row,col,value'")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            fields = line.strip().split(",")
            if len(fields) != 3:
                raise ParseError(f"line {lineno}: expected 3 comma-separated fields")
            try:
                triples.append(RatingTriple(int(fields[0]), int(fields[1]), float(fields[2])))
            except ValueError as exc:
                raise ParseError(f"line {lineno}: {exc}") from exc
    if not triples:
        raise EmptyFileError(f"{path}: no ratings found")
    return triples


# ----------------------------------------------------------------------------
# finite-difference oracles
# ----------------------------------------------------------------------------


def _default_step(x: DenseVector) -> float:
    return 1e-6 * (1.0 + float(np.max(np.abs(x))))


def fd_gradient(problem: DifferentiableProblem, x: DenseVector, h: Optional[float] = None) -> DenseVector:
    """Central-difference gradient (f(x + h e_i) - f(x - h e_i)) / (2h)."""
    x = as_vector(x)
    step = _default_step(x) if h is None else float(h)
    if step <= 0:
        raise ValueError("h must be positive")
    grad = np.empty_like(x)
    e = np.zeros_like(x)
    for i in range(x.size):
        e[i] = step
        fp = problem.evaluate(x + e).value
        fm = problem.evaluate(x - e).value
        grad[i] = (fp - fm) / (2.0 * step)
        e[i] = 0.0
    return grad


def fd_hessian(problem: DifferentiableProblem, x: DenseVector, h: Optional[float] = None) -> np.ndarray:
    """Central differences of the analytic gradient, symmetrized as (A + A')/2."""
    x = as_vector(x)
    if x.size > FD_HESSIAN_MAX_DIM:
        raise DimensionTooLarge(f"fd_hessian is limited to dim <= {FD_HESSIAN_MAX_DIM}, got {x.size}")
    step = _default_step(x) if h is None else float(h)
    if step <= 0:
        raise ValueError("h must be positive")
    cols = np.empty((x.size, x.size))
    e = np.zeros_like(x)
    for i in range(x.size):
        e[i] = step
        gp = problem.evaluate(x + e).gradient
        gm = problem.evaluate(x - e).gradient
        cols[:, i] = (gp - gm) / (2.0 * step)
        e[i] = 0.0
    return 0.5 * (cols + cols.T)


_BENCHMARKS = {
    "dixon-price": dixon_price,
    "powell": powell,
    "qing": qing,
    "rosenbrock": rosenbrock,
    "quadratic-test": quadratic,
}


def benchmark_by_name(name: str, dim: int) -> DifferentiableProblem:
    """Look up one of the named benchmark constructors."""
    try:
        ctor = _BENCHMARKS[name]
    except KeyError:
        raise ValueError(f"unknown benchmark {name!r}") from None
    return ctor(dim)
