"""TV + wavelet image deblurring as a three-term splitting problem.

Objective (with ``A`` a 9x9 uniform periodic blur and ``Phi`` an orthonormal
multilevel Haar transform)::

    alpha * TV(x) + beta * ||Phi x||_1 + 0.5 * ||A x - b||^2

For the splitting engine TV is replaced by ``alpha * sum sqrt(|grad x|^2 + delta)``
and the l1 term by its Huber smoothing with parameter ``sigma``.  The three
subproblems are solved as follows:

* TV block: a TV denoising problem on the *nonsmooth* TV, approximated by a
  fixed number of Chambolle dual projection iterations (inexact);
* wavelet block: closed form in the wavelet domain;
* data block: a circulant linear system solved exactly with the FFT.

Boundary conventions: TV uses forward differences that vanish on the last
row/column; the blur is periodic so that ``A^T A + c I`` is diagonalized by
the 2D DFT.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import SmoothFunction, SplitProblem, mixing_matrix, run, step

__all__ = [
    "BlurOperator",
    "DataFidelity",
    "DeblurParams",
    "DeblurProblem",
    "SmoothedTV",
    "WaveletL1",
    "WaveletTransform",
    "chambolle_tv_denoise",
    "data_solve",
    "deblur_run",
    "deblur_step",
    "divergence",
    "forward_differences",
    "isnr",
    "l1_wavelet_smooth_grad",
    "l1_wavelet_smooth_value",
    "make_problem",
    "solve_data_system",
    "synthetic_image",
    "tv_smooth_grad",
    "tv_smooth_value",
    "tv_value",
    "wavelet_forward",
    "wavelet_inverse",
    "wavelet_prox_step",
]

_SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# Haar wavelet


def _max_levels(shape) -> int:
    H, W = shape
    for s in (H, W):
        if s < 1 or s & (s - 1):
            raise ValueError(f"image dimensions must be powers of two, got {shape}")
    return int(math.log2(min(H, W)))


def _check_levels(shape, levels):
    top = _max_levels(shape)
    if levels is None:
        return top
    if not 0 <= levels <= top:
        raise ValueError(f"levels must be in [0, {top}] for shape {shape}")
    return levels


def wavelet_forward(x, levels: int | None = None) -> np.ndarray:
    """Orthonormal 2D Haar analysis, coefficients packed in an array of the
    same shape (approximation in the top-left corner)."""
    out = np.array(x, dtype=float)
    levels = _check_levels(out.shape, levels)
    h, w = out.shape
    for _ in range(levels):
        a = out[:h, :w]
        a = np.concatenate([a[0::2] + a[1::2], a[0::2] - a[1::2]], axis=0) / _SQRT2
        a = np.concatenate([a[:, 0::2] + a[:, 1::2], a[:, 0::2] - a[:, 1::2]], axis=1) / _SQRT2
        out[:h, :w] = a
        h, w = h // 2, w // 2
    return out


def wavelet_inverse(coeffs, levels: int | None = None) -> np.ndarray:
    out = np.array(coeffs, dtype=float)
    levels = _check_levels(out.shape, levels)
    H, W = out.shape
    for lev in reversed(range(levels)):
        h, w = H >> lev, W >> lev
        a = out[:h, :w]
        lo, hi = a[:, : w // 2], a[:, w // 2:]
        b = np.empty_like(a)
        b[:, 0::2] = (lo + hi) / _SQRT2
        b[:, 1::2] = (lo - hi) / _SQRT2
        lo, hi = b[: h // 2], b[h // 2:]
        a = np.empty_like(b)
        a[0::2] = (lo + hi) / _SQRT2
        a[1::2] = (lo - hi) / _SQRT2
        out[:h, :w] = a
    return out


class WaveletTransform:
    """Orthonormal Haar transform with a fixed number of levels.

    Orthonormality means the adjoint is the inverse.
    """

    def __init__(self, levels: int | None = None):
        self.levels = levels

    def forward(self, x):
        return wavelet_forward(x, self.levels)

    def inverse(self, c):
        return wavelet_inverse(c, self.levels)

    adjoint = inverse


# ---------------------------------------------------------------------------
# Blur


class BlurOperator:
    """Convolution with a ``size x size`` uniform kernel, periodic boundary."""

    def __init__(self, shape, size: int = 9):
        if size < 1 or size % 2 == 0:
            raise ValueError("kernel size must be a positive odd integer")
        self.shape = tuple(shape)
        self.size = size
        H, W = self.shape
        psf = np.zeros(self.shape)
        r = size // 2
        idx_r = np.arange(-r, r + 1) % H
        idx_c = np.arange(-r, r + 1) % W
        psf[np.ix_(idx_r, idx_c)] = 1.0 / size**2
        self.kernel = np.full((size, size), 1.0 / size**2)
        self.psf = psf
        # symmetric kernel: the spectrum is real
        self.spectrum = np.fft.fft2(psf).real

    def apply(self, x):
        return np.fft.ifft2(self.spectrum * np.fft.fft2(x)).real

    def adjoint(self, y):
        return np.fft.ifft2(np.conj(self.spectrum) * np.fft.fft2(y)).real

    def normal_eigenvalues(self):
        return np.abs(self.spectrum) ** 2


def solve_data_system(rhs, blur: BlurOperator, mu: float) -> np.ndarray:
    """Solve ``(A^T A + (2/mu) I) z = rhs`` in the Fourier domain."""
    denom = blur.normal_eigenvalues() + 2.0 / mu
    return np.fft.ifft2(np.fft.fft2(rhs) / denom).real


def data_solve(w, grad_tv, grad_wavelet, blur: BlurOperator, b, mu: float) -> np.ndarray:
    """Data-block subproblem at anchor ``w`` given the other two gradients."""
    rhs = blur.adjoint(b) - grad_tv + (2.0 / mu) * w - grad_wavelet
    return solve_data_system(rhs, blur, mu)


# ---------------------------------------------------------------------------
# Total variation


def forward_differences(x):
    """Vertical and horizontal forward differences, zero on the last row/column."""
    x = np.asarray(x, dtype=float)
    d1 = np.zeros_like(x)
    d2 = np.zeros_like(x)
    d1[:-1] = x[1:] - x[:-1]
    d2[:, :-1] = x[:, 1:] - x[:, :-1]
    return d1, d2


def divergence(p1, p2):
    """Negative adjoint of :func:`forward_differences`."""
    div = np.zeros_like(p1)
    div[:-1] += p1[:-1]
    div[1:] -= p1[:-1]
    div[:, :-1] += p2[:, :-1]
    div[:, 1:] -= p2[:, :-1]
    return div


def tv_value(x) -> float:
    d1, d2 = forward_differences(x)
    return float(np.sqrt(d1 * d1 + d2 * d2).sum())


def tv_smooth_value(x, delta: float, alpha: float = 1.0) -> float:
    d1, d2 = forward_differences(x)
    return alpha * float(np.sqrt(d1 * d1 + d2 * d2 + delta).sum())


def tv_smooth_grad(x, delta: float, alpha: float = 1.0) -> np.ndarray:
    d1, d2 = forward_differences(x)
    s = np.sqrt(d1 * d1 + d2 * d2 + delta)
    return -alpha * divergence(d1 / s, d2 / s)


def chambolle_tv_denoise(g, weight: float, inner_iters: int = 10,
                         step: float = 0.25) -> np.ndarray:
    """Approximate ``argmin_x weight * TV(x) + 0.5 * ||x - g||^2``.

    Chambolle's dual projection iteration started from a zero dual field.
    """
    if inner_iters < 1:
        raise ValueError("inner_iters must be >= 1")
    g = np.asarray(g, dtype=float)
    if weight <= 0:
        return g.copy()
    p1 = np.zeros_like(g)
    p2 = np.zeros_like(g)
    for _ in range(inner_iters):
        q1, q2 = forward_differences(divergence(p1, p2) - g / weight)
        scale = 1.0 + step * np.sqrt(q1 * q1 + q2 * q2)
        p1 = (p1 + step * q1) / scale
        p2 = (p2 + step * q2) / scale
    return g - weight * divergence(p1, p2)


# ---------------------------------------------------------------------------
# Smoothed wavelet l1


def l1_wavelet_smooth_value(x, sigma: float, beta: float = 1.0,
                            wavelet: WaveletTransform | None = None) -> float:
    c = np.abs((wavelet or WaveletTransform()).forward(x))
    return beta * float(np.where(c <= sigma, c * c / (2.0 * sigma), c - sigma / 2.0).sum())


def l1_wavelet_smooth_grad(x, sigma: float, beta: float = 1.0,
                           wavelet: WaveletTransform | None = None) -> np.ndarray:
    wavelet = wavelet or WaveletTransform()
    return beta * wavelet.inverse(np.clip(wavelet.forward(x) / sigma, -1.0, 1.0))


def wavelet_prox_step(wbar, mu: float, beta: float, sigma: float,
                      wavelet: WaveletTransform | None = None) -> np.ndarray:
    """Exact ``argmin_y (mu/2) f_sigma(y) + 0.5 ||y - wbar||^2`` for the
    smoothed ``beta * ||Phi y||_1``."""
    wavelet = wavelet or WaveletTransform()
    c = wavelet.forward(wbar)
    shrink = np.clip(2.0 * c / (2.0 * sigma + beta * mu), -1.0, 1.0)
    return wavelet.inverse(c - (mu * beta / 2.0) * shrink)


# ---------------------------------------------------------------------------
# Oracles


class SmoothedTV(SmoothFunction):
    """``alpha * sum sqrt(|grad x|^2 + delta)``.

    ``prox`` is inexact: it runs ``inner_iters`` Chambolle iterations on the
    nonsmooth ``alpha * TV``.
    """

    def __init__(self, shape, alpha: float, delta: float, inner_iters: int = 10):
        self.shape = tuple(shape)
        self.alpha = float(alpha)
        self.delta = float(delta)
        self.inner_iters = inner_iters
        # ||forward_differences||^2 <= 8
        self.lipschitz = 8.0 * self.alpha / math.sqrt(self.delta)

    def value(self, x):
        return tv_smooth_value(x, self.delta, self.alpha)

    def grad(self, x):
        return tv_smooth_grad(x, self.delta, self.alpha)

    def prox(self, lam, y):
        return chambolle_tv_denoise(y, self.alpha * lam, self.inner_iters)

    def nonsmooth_value(self, x):
        return self.alpha * tv_value(x)


class WaveletL1(SmoothFunction):
    """Huber-smoothed ``beta * ||Phi x||_1``."""

    def __init__(self, shape, beta: float, sigma: float, wavelet: WaveletTransform):
        self.shape = tuple(shape)
        self.beta = float(beta)
        self.sigma = float(sigma)
        self.wavelet = wavelet
        self.lipschitz = self.beta / self.sigma

    def value(self, x):
        return l1_wavelet_smooth_value(x, self.sigma, self.beta, self.wavelet)

    def grad(self, x):
        return l1_wavelet_smooth_grad(x, self.sigma, self.beta, self.wavelet)

    def prox(self, lam, y):
        return wavelet_prox_step(y, 2.0 * lam, self.beta, self.sigma, self.wavelet)

    def nonsmooth_value(self, x):
        return self.beta * float(np.abs(self.wavelet.forward(x)).sum())


class DataFidelity(SmoothFunction):
    """``0.5 * ||A x - b||^2``."""

    def __init__(self, blur: BlurOperator, b):
        self.blur = blur
        self.b = np.asarray(b, dtype=float)
        self.shape = self.b.shape
        self.lipschitz = float(blur.normal_eigenvalues().max())
        self._Atb = blur.adjoint(self.b)

    def value(self, x):
        r = self.blur.apply(x) - self.b
        return 0.5 * float(np.vdot(r, r))

    def grad(self, x):
        return self.blur.adjoint(self.blur.apply(x)) - self._Atb

    def prox(self, lam, y):
        return solve_data_system(self._Atb + np.asarray(y) / lam, self.blur, 2.0 * lam)

    nonsmooth_value = value


@dataclass(frozen=True)
class DeblurParams:
    alpha: float = 0.001
    beta: float = 0.035
    delta: float = 1e-4
    sigma: float = 1e-4
    mu: float = 1.0
    noise_sd: float = 0.56
    seed: int = 0
    blur_size: int = 9
    levels: int | None = 4
    inner_iters: int = 10

    def __post_init__(self):
        for name in ("alpha", "beta", "delta", "sigma", "mu"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


class DeblurProblem(SplitProblem):
    """The three smoothed terms (TV, wavelet l1, data) for one observation."""

    def __init__(self, b, params: DeblurParams, blur: BlurOperator | None = None):
        b = np.asarray(b, dtype=float)
        self.params = params
        self.b = b
        self.blur = blur or BlurOperator(b.shape, params.blur_size)
        self.wavelet = WaveletTransform(params.levels)
        _check_levels(b.shape, params.levels)
        super().__init__([
            SmoothedTV(b.shape, params.alpha, params.delta, params.inner_iters),
            WaveletL1(b.shape, params.beta, params.sigma, self.wavelet),
            DataFidelity(self.blur, b),
        ])

    def nonsmooth_value(self, x) -> float:
        """``alpha TV(x) + beta ||Phi x||_1 + 0.5 ||A x - b||^2``."""
        return math.fsum(f.nonsmooth_value(x) for f in self.functions)


def synthetic_image(size: int = 64) -> np.ndarray:
    """Piecewise-constant test image with intensities in [0, 255]."""
    img = np.full((size, size), 40.0)
    s = size / 64.0
    i, j = np.mgrid[0:size, 0:size]
    img[int(8 * s):int(40 * s), int(10 * s):int(30 * s)] = 200.0
    img[(i - 42 * s) ** 2 + (j - 44 * s) ** 2 <= (14 * s) ** 2] = 120.0
    img[int(46 * s):int(58 * s), int(6 * s):int(22 * s)] = 255.0
    img[int(12 * s):int(20 * s), int(40 * s):int(58 * s)] = 90.0
    return img


def make_problem(truth, params: DeblurParams = DeblurParams()):
    """Blur ``truth``, add seeded Gaussian noise, return ``(b, problem)``."""
    truth = np.asarray(truth, dtype=float)
    blur = BlurOperator(truth.shape, params.blur_size)
    b = blur.apply(truth)
    if params.noise_sd:
        b = b + np.random.default_rng(params.seed).normal(0.0, params.noise_sd, truth.shape)
    return b, DeblurProblem(b, params, blur)


def isnr(x, b, truth) -> float:
    """Improvement in SNR of ``x`` over the observation ``b``, in dB:
    ``10 log10(||b - truth||^2 / ||x - truth||^2)``; ``inf`` if ``x == truth``."""
    num = float(np.sum((np.asarray(b) - truth) ** 2))
    den = float(np.sum((np.asarray(x) - truth) ** 2))
    if den == 0:
        return math.inf
    if not np.isfinite(den):
        return -math.inf
    return 10.0 * math.log10(num / den)


def deblur_step(problem: DeblurProblem, state, mixing="uniform"):
    """One iteration of the state's algorithm on the deblurring problem."""
    D = mixing_matrix(mixing, problem.K) if state.algo in ("msa", "famsa") else None
    return step(problem, state, D)


def deblur_run(problem: DeblurProblem, truth, algo: str = "msa", mu: float | None = None,
               max_iter: int = 100, mixing="uniform", **kwargs):
    """Run from the zero image, recording the nonsmooth objective and ISNR."""
    mu = problem.params.mu if mu is None else mu
    return run(problem, algo, mu=mu, mixing=mixing, max_iter=max_iter,
               x0=np.zeros(problem.shape), objective=problem.nonsmooth_value,
               monitor=lambda x: {"isnr": isnr(x, problem.b, truth)}, **kwargs)
