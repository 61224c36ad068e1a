"""Multiple-splitting first-order methods for sums of smooth convex functions."""

from .core import (ALGORITHMS, DivergedError, InvalidProblemError, LeastSquares, Quadratic,
                   RunRecord, RunState, SmoothFunction, SplitProblem, default_mu, iterate,
                   mix, mixing_matrix, run, step, subproblem_point, t_next)
from .deblur import DeblurParams, DeblurProblem, deblur_run, isnr, make_problem, synthetic_image
from .fermat_weber import (FermatWeberProblem, FWInstance, fw_experiment, gen_instance,
                           smoothed_reference, weiszfeld_reference)
from .smoothing import SmoothedL1, SmoothedNorm, rho_for_epsilon

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS", "DeblurParams", "DeblurProblem", "DivergedError", "FWInstance",
    "FermatWeberProblem", "InvalidProblemError", "LeastSquares", "Quadratic", "RunRecord",
    "RunState", "SmoothFunction", "SmoothedL1", "SmoothedNorm", "SplitProblem",
    "deblur_run", "default_mu", "fw_experiment", "gen_instance", "isnr", "iterate",
    "make_problem", "mix", "mixing_matrix", "rho_for_epsilon", "run",
    "smoothed_reference", "step", "subproblem_point", "synthetic_image", "t_next",
    "weiszfeld_reference",
]
