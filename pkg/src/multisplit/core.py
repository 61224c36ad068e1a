"""Multiple splitting engine.

Minimizes ``F(x) = f_1(x) + ... + f_K(x)`` over a common space where every
``f_i`` is convex with a Lipschitz gradient and exposes an exact prox.  Each
iteration solves ``K`` independent subproblems; subproblem ``i`` keeps ``f_i``
exact and replaces the other terms by their linearization plus a proximal
term with parameter ``mu``.  The block iterates are then recombined with a
doubly stochastic mixing matrix (MSA), optionally with a momentum sequence
(FaMSA, FaMSA-s).

The gradient method and Nesterov's accelerated gradient method are provided
as baselines sharing the same run loop.

Points may be arrays of any shape (vectors for Fermat-Weber, 2D grids for
deblurring); a set of ``K`` block iterates is stored as one array with a
leading axis of length ``K``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Sequence

import numpy as np

__all__ = [
    "ALGORITHMS",
    "DivergedError",
    "InvalidProblemError",
    "LeastSquares",
    "Quadratic",
    "RunRecord",
    "RunState",
    "SmoothFunction",
    "SplitProblem",
    "default_mu",
    "famsa_step",
    "famsas_step",
    "grad_step",
    "init_state",
    "iterate",
    "linearization",
    "mix",
    "mixing_matrix",
    "msa_step",
    "nest_step",
    "relative_error",
    "run",
    "step",
    "subproblem_point",
    "surrogate_value",
    "t_next",
]

ALGORITHMS = ("msa", "famsa", "famsa-s", "grad", "nest")
SPLITTING_ALGORITHMS = ("msa", "famsa", "famsa-s")


class InvalidProblemError(ValueError):
    """Raised when a problem, parameter or mixing matrix is malformed."""


class DivergedError(RuntimeError):
    """A run produced a nonfinite objective.

    The partial trace is available as ``record``; its last row is the first
    nonfinite one, ``record.last_finite_row()`` the one before it.
    """

    def __init__(self, record: "RunRecord"):
        super().__init__(f"{record.algo} diverged at iteration {record.iterations}")
        self.record = record


# ---------------------------------------------------------------------------
# Oracles


class SmoothFunction:
    """A convex function with Lipschitz gradient and an exact prox.

    Subclasses set ``shape`` and ``lipschitz`` and implement ``value``,
    ``grad`` and ``prox``.  ``prox(lam, y)`` must return the exact minimizer
    of ``f(u) + ||u - y||^2 / (2 lam)``.  Instances are treated as read-only.
    """

    shape: tuple[int, ...]
    lipschitz: float

    @property
    def dim(self) -> int:
        return int(np.prod(self.shape))

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def prox(self, lam: float, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x):
        return self.value(x)


class Quadratic(SmoothFunction):
    """``(weight / 2) * ||x - center||^2``."""

    def __init__(self, center, weight: float = 1.0):
        self.center = np.asarray(center, dtype=float)
        self.weight = float(weight)
        self.shape = self.center.shape
        self.lipschitz = self.weight

    def value(self, x):
        d = np.asarray(x) - self.center
        return 0.5 * self.weight * float(np.vdot(d, d))

    def grad(self, x):
        return self.weight * (np.asarray(x) - self.center)

    def prox(self, lam, y):
        return (np.asarray(y) + lam * self.weight * self.center) / (1.0 + lam * self.weight)


class LeastSquares(SmoothFunction):
    """``0.5 * ||A x - b||^2`` for a dense matrix ``A``."""

    def __init__(self, A, b):
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.shape = (self.A.shape[1],)
        self.lipschitz = float(np.linalg.norm(self.A, 2) ** 2)
        self._AtA = self.A.T @ self.A
        self._Atb = self.A.T @ self.b

    def value(self, x):
        r = self.A @ x - self.b
        return 0.5 * float(r @ r)

    def grad(self, x):
        return self._AtA @ x - self._Atb

    def prox(self, lam, y):
        lhs = self._AtA + np.eye(self.shape[0]) / lam
        return np.linalg.solve(lhs, self._Atb + np.asarray(y) / lam)


class SplitProblem:
    """An ordered list of ``K >= 2`` smooth terms over a common space."""

    def __init__(self, functions: Sequence[SmoothFunction]):
        functions = list(functions)
        if len(functions) < 2:
            raise InvalidProblemError("splitting needs at least K = 2 functions")
        shapes = {tuple(f.shape) for f in functions}
        if len(shapes) != 1:
            raise InvalidProblemError(f"functions disagree on shape: {sorted(shapes)}")
        self.functions = functions
        self.shape = shapes.pop()

    @property
    def K(self) -> int:
        return len(self.functions)

    @property
    def dim(self) -> int:
        return int(np.prod(self.shape))

    @property
    def lipschitz_constants(self) -> np.ndarray:
        return np.array([f.lipschitz for f in self.functions], dtype=float)

    def value(self, x) -> float:
        return math.fsum(f.value(x) for f in self.functions)

    def grad(self, x) -> np.ndarray:
        g = self.functions[0].grad(x)
        for f in self.functions[1:]:
            g = g + f.grad(x)
        return g

    def subproblem_points_shared(self, w, mu: float) -> np.ndarray:
        """All ``K`` subproblem solutions for one shared anchor ``w``."""
        lam = mu / (self.K - 1)
        grads = [f.grad(w) for f in self.functions]
        total = grads[0]
        for g in grads[1:]:
            total = total + g
        return np.stack([f.prox(lam, w - lam * (total - g))
                         for f, g in zip(self.functions, grads)])

    def subproblem_points(self, anchors, mu: float) -> np.ndarray:
        """Subproblem solutions ``p_i(w^i, ..., w^i)`` for per-block anchors."""
        anchors = np.asarray(anchors)
        if all(np.array_equal(anchors[0], a) for a in anchors[1:]):
            return self.subproblem_points_shared(anchors[0], mu)
        return np.stack([subproblem_point(self, i, anchors[i], mu) for i in range(self.K)])


def default_mu(problem: SplitProblem) -> float:
    """Largest admissible proximal parameter, ``1 / max_i L(f_i)``."""
    L = problem.lipschitz_constants
    if not np.all(np.isfinite(L)) or np.any(L <= 0):
        raise InvalidProblemError(f"Lipschitz constants must be finite and positive, got {L}")
    return 1.0 / float(L.max())


def t_next(t: float) -> float:
    """Momentum sequence update ``(1 + sqrt(1 + 4 t^2)) / 2``."""
    return (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0


def mixing_matrix(choice, K: int) -> np.ndarray:
    """Return a validated ``K x K`` doubly stochastic matrix.

    ``choice`` is ``"uniform"`` (all entries ``1/K``), ``"identity"``, or an
    explicit array.
    """
    if isinstance(choice, str):
        if choice == "uniform":
            D = np.full((K, K), 1.0 / K)
        elif choice == "identity":
            D = np.eye(K)
        else:
            raise InvalidProblemError(f"unknown mixing choice {choice!r}")
    else:
        D = np.asarray(choice, dtype=float)
    if D.shape != (K, K):
        raise InvalidProblemError(f"mixing matrix must be {K}x{K}, got {D.shape}")
    if np.any(D < 0):
        raise InvalidProblemError("mixing matrix has negative entries")
    if (np.abs(D.sum(axis=0) - 1).max() > 1e-12
            or np.abs(D.sum(axis=1) - 1).max() > 1e-12):
        raise InvalidProblemError("mixing matrix is not doubly stochastic")
    return D


def mix(blocks, D) -> np.ndarray:
    """Recombine block iterates: output ``j`` is ``sum_i D[i, j] * blocks[i]``."""
    blocks = np.asarray(blocks)
    D = np.asarray(D)
    if D.shape != (blocks.shape[0], blocks.shape[0]):
        raise InvalidProblemError(
            f"mixing matrix {D.shape} does not match {blocks.shape[0]} blocks")
    if np.all(D == D[:, :1]):
        # identical columns: compute once so the outputs are bitwise equal
        out = np.tensordot(D[:, 0], blocks, axes=(0, 0))
        return np.broadcast_to(out, blocks.shape).copy()
    return np.tensordot(D, blocks, axes=(0, 0))


def linearization(f: SmoothFunction, u, v, mu: float) -> float:
    """Linear model of ``f`` at ``v`` plus ``||u - v||^2 / (2 mu)``, evaluated at ``u``."""
    d = np.asarray(u) - np.asarray(v)
    return f.value(v) + float(np.vdot(f.grad(v), d)) + float(np.vdot(d, d)) / (2.0 * mu)


def surrogate_value(problem: SplitProblem, i: int, v, p, mu: float) -> float:
    """Model of ``F`` keeping ``f_i`` exact at ``p``, linearizing the rest at ``v``."""
    return problem.functions[i].value(p) + math.fsum(
        linearization(f, p, v, mu) for j, f in enumerate(problem.functions) if j != i)


def subproblem_point(problem: SplitProblem, i: int, w, mu: float) -> np.ndarray:
    """Minimizer over ``u`` of the surrogate with all anchors equal to ``w``.

    Completing the square reduces it to ``prox`` of ``f_i`` with parameter
    ``mu / (K - 1)`` at ``w - mu / (K - 1) * sum_{j != i} grad f_j(w)``.
    """
    K = problem.K
    if K < 2:
        raise InvalidProblemError("subproblem needs K >= 2")
    if mu <= 0:
        raise InvalidProblemError("mu must be positive")
    lam = mu / (K - 1)
    g = None
    for j, f in enumerate(problem.functions):
        if j != i:
            g = f.grad(w) if g is None else g + f.grad(w)
    return problem.functions[i].prox(lam, w - lam * g)


# ---------------------------------------------------------------------------
# Algorithm state and single steps


@dataclass(frozen=True)
class RunState:
    """Iterates after ``k`` completed iterations.

    ``x`` holds the block iterates (leading axis ``K``; a single row for the
    gradient baselines).  ``w`` is the anchor for the next iteration: one per
    block for MSA/FaMSA, a single point for FaMSA-s, and Nesterov's
    extrapolated point for ``nest``.  ``what``/``what_prev`` are the mixed
    points of the current and previous iteration; ``t`` is the momentum
    scalar to be used by the next iteration and ``t_prev`` the one used by
    the last.
    """

    algo: str
    k: int
    x: np.ndarray
    w: np.ndarray | None = None
    what: np.ndarray | None = None
    what_prev: np.ndarray | None = None
    t: float = 1.0
    t_prev: float = 1.0
    mu: float | None = None
    tau: float | None = None


def init_state(problem: SplitProblem, algo: str, x0, *, mu=None, tau=None) -> RunState:
    if algo not in ALGORITHMS:
        raise InvalidProblemError(f"unknown algorithm {algo!r}; choose from {ALGORITHMS}")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != tuple(problem.shape):
        raise InvalidProblemError(f"x0 has shape {x0.shape}, expected {problem.shape}")
    if algo in SPLITTING_ALGORITHMS:
        if mu is None or not mu > 0:
            raise InvalidProblemError("splitting algorithms need mu > 0")
        blocks = np.stack([x0] * problem.K)
        if algo == "msa":
            return RunState(algo, 0, blocks, w=blocks.copy(), mu=mu)
        if algo == "famsa":
            return RunState(algo, 0, blocks, w=blocks.copy(), what=blocks.copy(), mu=mu)
        return RunState(algo, 0, blocks, w=x0.copy(), what=x0.copy(), mu=mu)
    if tau is None or not tau > 0:
        raise InvalidProblemError("gradient baselines need tau > 0")
    return RunState(algo, 0, x0[None].copy(), w=x0.copy(), tau=tau)


def msa_step(problem: SplitProblem, state: RunState, D) -> RunState:
    x = problem.subproblem_points(state.w, state.mu)
    return replace(state, k=state.k + 1, x=x, w=mix(x, D))


def famsa_step(problem: SplitProblem, state: RunState, D) -> RunState:
    x = problem.subproblem_points(state.w, state.mu)
    what = mix(x, D)
    t, t_new = state.t, t_next(state.t)
    w = what + (t * (x - state.what) - (what - state.what)) / t_new
    return replace(state, k=state.k + 1, x=x, w=w, what=what,
                   what_prev=state.what, t=t_new, t_prev=t)


def famsas_step(problem: SplitProblem, state: RunState) -> RunState:
    x = problem.subproblem_points_shared(state.w, state.mu)
    what = x.mean(axis=0)
    t, t_new = state.t, t_next(state.t)
    w = what + ((t - 1.0) / t_new) * (what - state.what)
    return replace(state, k=state.k + 1, x=x, w=w, what=what,
                   what_prev=state.what, t=t_new, t_prev=t)


def grad_step(x, tau: float, problem: SplitProblem) -> np.ndarray:
    """One step of the gradient method on the full sum."""
    return x - tau * problem.grad(x)


def nest_step(x_prev, y_prev, k: int, tau: float, problem: SplitProblem):
    """Iteration ``k >= 1`` of Nesterov's method; returns ``(x_k, y_k)``.

    The extrapolation adds ``(k - 1) / (k + 2)`` times the last displacement.
    """
    x = y_prev - tau * problem.grad(y_prev)
    y = x + ((k - 1.0) / (k + 2.0)) * (x - x_prev)
    return x, y


def step(problem: SplitProblem, state: RunState, D=None) -> RunState:
    """Advance ``state`` by one iteration of its algorithm."""
    if state.algo == "msa":
        return msa_step(problem, state, D)
    if state.algo == "famsa":
        return famsa_step(problem, state, D)
    if state.algo == "famsa-s":
        return famsas_step(problem, state)
    if state.algo == "grad":
        x = grad_step(state.x[0], state.tau, problem)
        return replace(state, k=state.k + 1, x=x[None], w=x)
    x, y = nest_step(state.x[0], state.w, state.k + 1, state.tau, problem)
    return replace(state, k=state.k + 1, x=x[None], w=y)


def _resolve_steps(problem, algo, mu, tau):
    if algo in SPLITTING_ALGORITHMS:
        if mu is None:
            mu = default_mu(problem) if tau is None else tau * (problem.K - 1)
        return mu, None
    if tau is None:
        tau = mu / (problem.K - 1) if mu is not None else 1.0 / problem.lipschitz_constants.sum()
    return None, tau


def iterate(problem: SplitProblem, algo: str = "famsa-s", *, mu=None, tau=None,
            mixing="uniform", x0=None) -> Iterator[RunState]:
    """Yield the initial state and then the state after every iteration.

    Splitting algorithms use ``mu`` (default ``1 / max L``, or ``tau (K - 1)``
    if only ``tau`` is given).  Baselines use ``tau`` (default ``mu / (K - 1)``
    or ``1 / sum L``).
    """
    mu, tau = _resolve_steps(problem, algo, mu, tau)
    D = mixing_matrix(mixing, problem.K) if algo in ("msa", "famsa") else None
    if x0 is None:
        x0 = np.zeros(problem.shape)
    state = init_state(problem, algo, x0, mu=mu, tau=tau)
    yield state
    while True:
        state = step(problem, state, D)
        yield state


# ---------------------------------------------------------------------------
# Run loop


@dataclass
class RunRecord:
    """Per-iteration trace of a run.

    Every row holds ``iter``, ``obj_min`` (best block objective), ``obj_sum``
    (sum over the ``K`` blocks), ``relerr`` (NaN without a reference value)
    and ``elapsed_ms``, plus any columns added by a monitor.  ``status`` is
    ``"converged"``, ``"max_iter"`` or ``"diverged"``.
    """

    algo: str
    rows: list = field(default_factory=list)
    status: str = "running"
    state: RunState | None = None
    x: np.ndarray | None = None

    @property
    def iterations(self) -> int:
        return self.rows[-1]["iter"] if self.rows else 0

    @property
    def columns(self) -> list:
        return list(self.rows[0]) if self.rows else []

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows], dtype=float)

    def last_finite_row(self) -> dict | None:
        for row in reversed(self.rows):
            if np.isfinite(row["obj_min"]) and np.isfinite(row["obj_sum"]):
                return row
        return None


def relative_error(value: float, reference: float) -> float:
    if reference == 0:
        return abs(value)
    return abs(value - reference) / abs(reference)


def run(problem: SplitProblem, algo: str = "famsa-s", *, mu=None, tau=None,
        mixing="uniform", x0=None, max_iter: int = 500, tol: float | None = None,
        f_star: float | None = None, objective: Callable | None = None,
        monitor: Callable | None = None, callback: Callable | None = None,
        raise_on_divergence: bool = False) -> RunRecord:
    """Run ``algo`` and record every iteration.

    Parameters
    ----------
    objective : callable, optional
        Function reported in the trace and used for the stopping rule.
        Defaults to ``problem.value``; pass the nonsmooth objective when the
        problem wraps smoothed terms.
    f_star : float, optional
        Reference optimal value.  Without it ``relerr`` is NaN and the run
        stops only at ``max_iter``.
    tol : float, optional
        Stop as soon as ``relerr < tol``.
    monitor : callable, optional
        ``monitor(x) -> dict`` of extra columns, evaluated at the block with
        the smallest objective.
    callback : callable, optional
        ``callback(state)`` after every recorded state.

    A nonfinite objective ends the run with ``status == "diverged"``; the
    offending row is kept.  With ``raise_on_divergence`` a
    :class:`DivergedError` carrying the record is raised instead.
    """
    if max_iter < 0:
        raise InvalidProblemError("max_iter must be nonnegative")
    objective = problem.value if objective is None else objective
    record = RunRecord(algo)
    single = algo not in SPLITTING_ALGORITHMS
    start = time.perf_counter()
    with np.errstate(over="ignore", invalid="ignore"):
        for state in iterate(problem, algo, mu=mu, tau=tau, mixing=mixing, x0=x0):
            values = np.array([objective(xi) for xi in state.x], dtype=float)
            best = int(np.argmin(values)) if np.all(np.isfinite(values)) else 0
            obj_min = float(values.min()) if np.all(np.isfinite(values)) else math.inf
            obj_sum = problem.K * float(values[0]) if single else math.fsum(values)
            relerr = relative_error(obj_min, f_star) if f_star is not None else math.nan
            row = {"iter": state.k, "obj_min": obj_min, "obj_sum": obj_sum,
                   "relerr": relerr, "elapsed_ms": 1e3 * (time.perf_counter() - start)}
            if monitor is not None:
                row.update(monitor(state.x[best]))
            record.rows.append(row)
            record.state = state
            record.x = state.x[best]
            if callback is not None:
                callback(state)
            if not (np.isfinite(obj_min) and np.isfinite(obj_sum)):
                record.status = "diverged"
                break
            if tol is not None and f_star is not None and relerr < tol:
                record.status = "converged"
                break
            if state.k >= max_iter:
                record.status = "max_iter"
                break
    if record.status == "diverged" and raise_on_divergence:
        raise DivergedError(record)
    return record
