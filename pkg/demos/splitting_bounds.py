"""
Convergence envelopes of the splitting schemes
==============================================

On a small smoothed geometric-median problem we track the best block value
min_i F(x_k^i) - F* against the guaranteed envelopes

    MSA:               (K - 1) R^2 / (2 mu k)
    FaMSA, FaMSA-s:  2 (K - 1) R^2 / (mu (k + 1)^2)

with R = ||x_0 - x*|| and mu = 1 / max_i L(f_i).
"""

import numpy as np

from multisplit import FermatWeberProblem, default_mu, gen_instance, run, smoothed_reference

rho = 1e-2
inst = gen_instance(10, 6, seed=1)
ref = smoothed_reference(inst, rho)
prob = FermatWeberProblem(inst, rho)
mu = default_mu(prob)
x0 = inst.centroid()
R2 = float(np.sum((x0 - ref.x_star) ** 2))
K = inst.K

records = {a: run(prob, a, mu=mu, x0=x0, max_iter=200) for a in ("msa", "famsa", "famsa-s")}

print(f"{'k':>4} {'msa gap':>10} {'envelope':>10} {'famsa gap':>10} {'famsa-s gap':>11} {'envelope':>10}")
for k in (1, 5, 10, 50, 100, 200):
    slow = (K - 1) * R2 / (2 * mu * k)
    fast = 2 * (K - 1) * R2 / (mu * (k + 1) ** 2)
    gaps = {a: r.rows[k]["obj_min"] - ref.f_star for a, r in records.items()}
    print(f"{k:4d} {gaps['msa']:10.3e} {slow:10.3e} {gaps['famsa']:10.3e} "
          f"{gaps['famsa-s']:11.3e} {fast:10.3e}")

# The MSA block sum never increases.
s = records["msa"].column("obj_sum")
print("MSA block sum non-increasing:", bool(np.all(np.diff(s) <= 1e-12 * s[:-1])))
