"""
How much does smoothing cost?
=============================

The Huber-type smoothing of |.| and of ||.|| underestimates the original
function by at most rho * D, where D is the largest value of ||u||^2 / 2 over
the dual ball.  Choosing rho = eps / (2D) makes the gap eps / 2 at the price
of a gradient Lipschitz constant 1 / rho.
"""

import numpy as np

from multisplit.smoothing import (NORM_PROX_DIAMETER, l1_prox_diameter, l1_smooth_value,
                                  norm_smooth_value, rho_for_epsilon)

rng = np.random.default_rng(0)
n = 20
x = rng.normal(size=n) * 0.05

print(f"{'rho':>8} {'l1 gap':>10} {'bound':>10} {'norm gap':>10} {'bound':>10}")
for rho in (1e-3, 1e-2, 1e-1, 1.0):
    l1_gap = np.abs(x).sum() - l1_smooth_value(x, rho)
    nm_gap = np.linalg.norm(x) - norm_smooth_value(x, np.zeros(n), rho)
    print(f"{rho:8g} {l1_gap:10.3e} {rho * l1_prox_diameter(n):10.3e} "
          f"{nm_gap:10.3e} {rho * NORM_PROX_DIAMETER:10.3e}")

# The l1 bound grows with the dimension; the norm bound does not.
for eps in (1e-1, 1e-3):
    rho = rho_for_epsilon(eps, l1_prox_diameter(n))
    print(f"eps={eps:g}: rho={rho:.2e}, Lipschitz constant {1 / rho:.2e}")
