"""Smooth approximations of the l1 norm and the Euclidean distance.

Both are obtained by maximizing ``<x, u> - rho * d(u)`` over a bounded set
with ``d(u) = ||u||^2 / 2`` (strong convexity parameter 1).  The maximizers
have closed forms (Huber functions), which is what is coded here; the tests
check them against direct numerical maximization.

The resulting functions have ``1/rho``-Lipschitz gradients and satisfy

    f_rho(x) <= f(x) <= f_rho(x) + rho * D,   D = max_u d(u),

with ``D = n/2`` over the unit infinity-ball (l1) and ``D = 1/2`` over the
unit Euclidean ball (norm).
"""

from __future__ import annotations

import numpy as np

from .core import SmoothFunction

__all__ = [
    "SmoothedL1",
    "SmoothedNorm",
    "huber_prox",
    "l1_prox_diameter",
    "l1_smooth_grad",
    "l1_smooth_value",
    "norm_smooth_grad",
    "norm_smooth_value",
    "NORM_PROX_DIAMETER",
    "rho_for_epsilon",
]

# max of ||u||^2 / 2 over ||u||_2 <= 1
NORM_PROX_DIAMETER = 0.5


def l1_prox_diameter(n: int) -> float:
    """max of ``||u||^2 / 2`` over ``||u||_inf <= 1`` in ``n`` dimensions."""
    return n / 2.0


def l1_smooth_value(x, rho: float) -> float:
    a = np.abs(np.asarray(x, dtype=float))
    h = np.where(a <= rho, a * a / (2.0 * rho), a - rho / 2.0)
    return float(h.sum())


def l1_smooth_grad(x, rho: float) -> np.ndarray:
    return np.clip(np.asarray(x, dtype=float) / rho, -1.0, 1.0)


def huber_prox(lam: float, y, rho: float) -> np.ndarray:
    """Componentwise minimizer of ``h_rho(u) + (u - y)^2 / (2 lam)``."""
    y = np.asarray(y, dtype=float)
    return np.where(np.abs(y) <= rho + lam, rho * y / (rho + lam), y - lam * np.sign(y))


def norm_smooth_value(x, c, rho: float) -> float:
    r = float(np.linalg.norm(np.asarray(x, dtype=float) - c))
    return r * r / (2.0 * rho) if r <= rho else r - rho / 2.0


def norm_smooth_grad(x, c, rho: float) -> np.ndarray:
    d = np.asarray(x, dtype=float) - c
    return d / max(rho, float(np.linalg.norm(d)))


def rho_for_epsilon(eps: float, D: float) -> float:
    """Smoothing parameter giving an ``eps/2`` uniform approximation gap."""
    if eps <= 0 or D <= 0:
        raise ValueError("eps and D must be positive")
    return eps / (2.0 * D)


class SmoothedL1(SmoothFunction):
    """Smoothed ``weight * ||x||_1`` (Huber)."""

    def __init__(self, dim: int, rho: float, weight: float = 1.0):
        if rho <= 0:
            raise ValueError("rho must be positive")
        self.shape = (int(dim),)
        self.rho = float(rho)
        self.weight = float(weight)
        self.lipschitz = self.weight / self.rho

    @property
    def prox_diameter(self) -> float:
        return l1_prox_diameter(self.dim)

    def value(self, x):
        return self.weight * l1_smooth_value(x, self.rho)

    def grad(self, x):
        return self.weight * l1_smooth_grad(x, self.rho)

    def prox(self, lam, y):
        return huber_prox(lam * self.weight, y, self.rho)

    def nonsmooth_value(self, x) -> float:
        return self.weight * float(np.abs(x).sum())


class SmoothedNorm(SmoothFunction):
    """Smoothed distance ``||x - center||``."""

    prox_diameter = NORM_PROX_DIAMETER

    def __init__(self, center, rho: float):
        if rho <= 0:
            raise ValueError("rho must be positive")
        self.center = np.asarray(center, dtype=float)
        self.shape = self.center.shape
        self.rho = float(rho)
        self.lipschitz = 1.0 / self.rho

    def value(self, x):
        return norm_smooth_value(x, self.center, self.rho)

    def grad(self, x):
        return norm_smooth_grad(x, self.center, self.rho)

    def prox(self, lam, y):
        d = np.asarray(y, dtype=float) - self.center
        r = float(np.linalg.norm(d))
        if r <= self.rho + lam:
            return self.center + (self.rho / (self.rho + lam)) * d
        return self.center + (1.0 - lam / r) * d

    def nonsmooth_value(self, x) -> float:
        return float(np.linalg.norm(np.asarray(x) - self.center))
