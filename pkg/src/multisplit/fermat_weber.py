"""Smoothed Fermat-Weber problem.

Minimize ``sum_i ||x - c^i||`` over ``x`` after replacing every distance by
its smoothed version (see :mod:`multisplit.smoothing`).  With a shared anchor
all ``K`` subproblems are solved together in closed form at roughly the cost
of one full gradient, see :func:`fw_batch_step`.

Two reference oracles are provided, both independent of the splitting code:
:func:`weiszfeld_reference` for the nonsmooth optimum and
:func:`smoothed_reference` (restarted accelerated gradient) for the smoothed
one.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .core import SplitProblem, run, subproblem_point
from .fileio import atomic_write
from .smoothing import SmoothedNorm

__all__ = [
    "FWInstance",
    "FWReference",
    "FermatWeberProblem",
    "OracleFailure",
    "fw_batch_step",
    "fw_experiment",
    "fw_objective",
    "fw_objective_smoothed",
    "fw_prox_closed_form",
    "gen_instance",
    "load_instance",
    "optimality_residual",
    "save_instance",
    "smoothed_reference",
    "weiszfeld_reference",
]


class OracleFailure(RuntimeError):
    """A reference solver did not reach its tolerance."""


@dataclass(frozen=True)
class FWInstance:
    points: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("points must be a nonempty K x n array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def K(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[1]

    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)


@dataclass(frozen=True)
class FWReference:
    x_star: np.ndarray
    f_star: float
    residual: float
    iterations: int


def gen_instance(n: int, K: int, seed: int = 0) -> FWInstance:
    """``K`` points in R^n with i.i.d. N(0, n) entries (variance ``n``)."""
    if n < 1 or K < 1:
        raise ValueError("n and K must be positive")
    rng = np.random.default_rng(seed)
    return FWInstance(rng.normal(0.0, math.sqrt(n), size=(K, n)), seed)


def save_instance(instance: FWInstance, path) -> None:
    """Write ``n K seed`` then one row of ``n`` reals per point."""
    seed = -1 if instance.seed is None else instance.seed
    lines = [f"{instance.n} {instance.K} {seed}"]
    lines += [" ".join(format(v, ".17g") for v in row) for row in instance.points]
    atomic_write(path, "\n".join(lines) + "\n")


def load_instance(path) -> FWInstance:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValueError(f"{path}: expected header 'n K seed'")
        n, K, seed = (int(v) for v in header)
        points = np.loadtxt(fh, ndmin=2)
    if points.shape != (K, n):
        raise ValueError(f"{path}: header says {K}x{n}, found {points.shape}")
    return FWInstance(points, None if seed < 0 else seed)


def fw_objective(x, instance: FWInstance) -> float:
    return float(np.linalg.norm(instance.points - x, axis=1).sum())


def _huber_of_norm(r, rho):
    return np.where(r <= rho, r * r / (2.0 * rho), r - rho / 2.0)


def fw_objective_smoothed(x, instance: FWInstance, rho: float) -> float:
    r = np.linalg.norm(instance.points - x, axis=1)
    return float(_huber_of_norm(r, rho).sum())


def fw_prox_closed_form(i: int, z, mu: float, rho: float, K: int,
                        instance: FWInstance) -> np.ndarray:
    """Exact minimizer of subproblem ``i`` given its shifted point ``z``.

    Solves ``min_u f_i^rho(u) + (K - 1) / (2 mu) ||u - z||^2``.
    """
    c = instance.points[i]
    d = np.asarray(z, dtype=float) - c
    r = float(np.linalg.norm(d))
    if r <= rho + mu / (K - 1):
        return c + (rho * (K - 1) / (mu + rho * (K - 1))) * d
    return c + (((K - 1) * r - mu) / ((K - 1) * r)) * d


def fw_batch_step(w, instance: FWInstance, mu: float, rho: float) -> np.ndarray:
    """All ``K`` subproblem solutions for a shared anchor ``w``, vectorized."""
    C = instance.points
    K = instance.K
    if K < 2:
        raise ValueError("fw_batch_step needs K >= 2")
    D = w - C
    Y = D / np.maximum(rho, np.linalg.norm(D, axis=1))[:, None]
    zhat = Y.sum(axis=0)
    Z = w - (mu / (K - 1)) * (zhat - Y)
    dZ = Z - C
    scale = 1.0 - mu / np.maximum((K - 1) * np.linalg.norm(dZ, axis=1), mu + rho * (K - 1))
    return C + scale[:, None] * dZ


class FermatWeberProblem(SplitProblem):
    """Split problem with one smoothed distance per point."""

    def __init__(self, instance: FWInstance, rho: float):
        super().__init__([SmoothedNorm(c, rho) for c in instance.points])
        self.instance = instance
        self.rho = float(rho)

    def value(self, x):
        return fw_objective_smoothed(x, self.instance, self.rho)

    def nonsmooth_value(self, x):
        return fw_objective(x, self.instance)

    def grad(self, x):
        D = x - self.instance.points
        return (D / np.maximum(self.rho, np.linalg.norm(D, axis=1))[:, None]).sum(axis=0)

    def subproblem_points_shared(self, w, mu):
        return fw_batch_step(w, self.instance, mu, self.rho)

    def subproblem_points(self, anchors, mu):
        anchors = np.asarray(anchors)
        if all(np.array_equal(anchors[0], a) for a in anchors[1:]):
            return fw_batch_step(anchors[0], self.instance, mu, self.rho)
        return np.stack([subproblem_point(self, i, anchors[i], mu) for i in range(self.K)])


def optimality_residual(x, points) -> float:
    """Distance of 0 from the subdifferential of ``sum_i ||x - c^i||``.

    Points within ``1e-14`` of ``x`` contribute the unit ball, so the
    residual is ``max(0, ||sum of unit vectors to the others|| - multiplicity)``.
    """
    D = np.asarray(x) - points
    r = np.linalg.norm(D, axis=1)
    on = r <= 1e-14
    resultant = float(np.linalg.norm((D[~on] / r[~on, None]).sum(axis=0)))
    return max(0.0, resultant - float(on.sum()))


def weiszfeld_reference(instance: FWInstance, tol: float = 1e-12,
                        max_iter: int = 100_000) -> FWReference:
    """Geometric median by Weiszfeld's iteration.

    When an iterate lands on a data point the Vardi-Zhang modification is
    used: the point is accepted if the resultant of unit vectors to the
    other points has norm at most its multiplicity, otherwise the iterate is
    pushed off it.  Stops when the step norm is ``<= tol``.
    """
    C = instance.points
    if np.all(C == C[0]):
        return FWReference(C[0].copy(), 0.0, 0.0, 0)
    x = C.mean(axis=0)
    for it in range(1, max_iter + 1):
        D = C - x
        r = np.linalg.norm(D, axis=1)
        on = r <= 1e-14
        w = 1.0 / r[~on]
        T = (w @ C[~on]) / w.sum()
        if on.any():
            resultant = float(np.linalg.norm((D[~on] * w[:, None]).sum(axis=0)))
            eta = float(on.sum())
            if resultant <= eta:
                return FWReference(x.copy(), fw_objective(x, instance), 0.0, it)
            a = eta / resultant
            x_new = (1.0 - a) * T + a * x
        else:
            x_new = T
        step = float(np.linalg.norm(x_new - x))
        x = x_new
        if step <= tol:
            # iterates creep towards an optimal data point without landing on it
            j = int(np.argmin(np.linalg.norm(C - x, axis=1)))
            if optimality_residual(C[j], C) == 0.0:
                x = C[j].copy()
            return FWReference(x, fw_objective(x, instance), optimality_residual(x, C), it)
    raise OracleFailure(f"Weiszfeld did not reach step {tol:g} in {max_iter} iterations")


def smoothed_reference(instance: FWInstance, rho: float, max_iter: int = 100_000,
                       gtol: float = 1e-12) -> FWReference:
    """Optimum of the smoothed problem by restarted accelerated gradient.

    Uses step ``rho / K`` (the inverse Lipschitz constant of the full
    gradient), Nesterov momentum with gradient-based restarts, and stops
    after ``max_iter`` iterations or once the gradient norm is ``<= gtol``.
    """
    C = instance.points
    K = instance.K

    def F(x):
        r = np.linalg.norm(C - x, axis=1)
        return math.fsum(np.where(r <= rho, r * r / (2.0 * rho), r - rho / 2.0))

    def G(x):
        D = x - C
        return (D / np.maximum(rho, np.linalg.norm(D, axis=1))[:, None]).sum(axis=0)

    step = rho / K
    x = C.mean(axis=0)
    y = x.copy()
    t = 1.0
    g = G(x)
    it = 0
    for it in range(1, max_iter + 1):
        x_new = y - step * G(y)
        t_new = (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0
        if np.vdot(y - x_new, x_new - x) > 0.0:
            # momentum points uphill: restart
            t_new, y = 1.0, x_new
        else:
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new
        g = G(x)
        if np.linalg.norm(g) <= gtol:
            break
    return FWReference(x, F(x), float(np.linalg.norm(g)), it)


def fw_experiment(n: int, K: int, tau: float, rho: float = 1e-3, tol: float = 1e-6,
                  seed: int = 0, algos=("msa", "famsa-s", "grad", "nest"),
                  max_iter: int = 500, instance: FWInstance | None = None,
                  reference: FWReference | None = None) -> list[dict]:
    """One row of the Fermat-Weber comparison.

    All methods start from the centroid of the points; splitting methods use
    ``mu = tau (K - 1)`` and uniform mixing.  ``relerr`` compares the
    nonsmooth objective of the best block with the Weiszfeld optimum.
    Returns one dict per algorithm with ``iter``, ``relerr``, ``time``.
    """
    if instance is None:
        instance = gen_instance(n, K, seed)
    t0 = time.perf_counter()
    if reference is None:
        reference = weiszfeld_reference(instance)
    ref_time = time.perf_counter() - t0
    problem = FermatWeberProblem(instance, rho)
    x0 = instance.centroid()
    rows = []
    for algo in algos:
        t0 = time.perf_counter()
        record = run(problem, algo, mu=tau * (K - 1), tau=tau, x0=x0,
                     max_iter=max_iter, tol=tol, f_star=reference.f_star,
                     objective=problem.nonsmooth_value)
        rows.append({
            "n": instance.n, "K": instance.K, "tau": tau, "algo": algo,
            "iter": record.iterations, "relerr": record.rows[-1]["relerr"],
            "time": time.perf_counter() - t0, "ref_time": ref_time,
            "status": record.status,
        })
    return rows
