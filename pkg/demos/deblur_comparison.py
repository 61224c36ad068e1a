"""
TV + wavelet deblurring with three splitting blocks
===================================================

A 64x64 piecewise-constant image is blurred with a 9x9 box kernel (periodic
boundary) and corrupted by Gaussian noise.  The objective is

    0.001 TV(x) + 0.035 ||Haar(x)||_1 + 0.5 ||A x - b||^2

split into its three terms.  We compare the plain averaging scheme, the
accelerated single-anchor variant and the gradient method at two values of
the splitting parameter.
"""

import numpy as np

from multisplit import DeblurParams, deblur_run, make_problem, synthetic_image

truth = synthetic_image(64)
b, problem = make_problem(truth, DeblurParams())

for mu in (1.0, 5.0):
    print(f"\nmu = {mu}")
    print(f"{'algo':>8} {'iter':>5} {'objective':>12} {'ISNR (dB)':>10}")
    for algo in ("msa", "famsa-s", "grad"):
        rec = deblur_run(problem, truth, algo, mu=mu, max_iter=200)
        for k in (20, 50, 100, 200):
            if k < len(rec.rows):
                row = rec.rows[k]
                print(f"{algo:>8} {k:5d} {row['obj_min']:12.4e} {row['isnr']:10.3f}")

# At mu = 1 the accelerated variant reaches a lower objective within a few
# dozen iterations.  At mu = 5 only the averaging scheme stays bounded; the
# other two blow up geometrically (they overflow after a few hundred steps).
