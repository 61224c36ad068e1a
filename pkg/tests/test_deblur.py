import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multisplit.core import init_state, iterate, mixing_matrix
from multisplit.deblur import (BlurOperator, DeblurParams, DeblurProblem, WaveletTransform,
                               chambolle_tv_denoise, data_solve, deblur_run, deblur_step,
                               divergence, forward_differences, isnr, l1_wavelet_smooth_grad,
                               l1_wavelet_smooth_value, make_problem, solve_data_system,
                               synthetic_image, tv_smooth_grad, tv_smooth_value, tv_value,
                               wavelet_forward, wavelet_inverse, wavelet_prox_step)


def central_fd(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        g[idx] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def dense_matrix(op, shape):
    N = shape[0] * shape[1]
    M = np.zeros((N, N))
    for k in range(N):
        e = np.zeros(N)
        e[k] = 1.0
        M[:, k] = op(e.reshape(shape)).ravel()
    return M


def tv_denoise_objective(x, g, weight):
    return weight * tv_value(x) + 0.5 * float(np.sum((x - g) ** 2))


# --- TV


def test_tv_examples():
    assert tv_value(np.full((4, 4), 3.0)) == 0.0
    assert tv_value(np.array([[0.0, 1.0], [0.0, 1.0]])) == 2.0
    rng = np.random.default_rng(0)
    x = rng.normal(size=(6, 6))
    assert tv_value(-2.5 * x) == pytest.approx(2.5 * tv_value(x), rel=1e-14)


def test_tv_brute_force():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(5, 4))
    H, W = x.shape
    total = 0.0
    for i in range(H):
        for j in range(W):
            dv = x[i + 1, j] - x[i, j] if i + 1 < H else 0.0
            dh = x[i, j + 1] - x[i, j] if j + 1 < W else 0.0
            total += math.hypot(dv, dh)
    assert tv_value(x) == pytest.approx(total, rel=1e-14)


def test_divergence_is_negative_adjoint():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(7, 5))
    p1, p2 = rng.normal(size=(2, 7, 5))
    d1, d2 = forward_differences(x)
    lhs = float(np.sum(d1 * p1) + np.sum(d2 * p2))
    assert lhs == pytest.approx(-float(np.sum(x * divergence(p1, p2))), rel=1e-12)


def test_tv_smooth_examples():
    delta, alpha = 1e-4, 0.3
    c = np.full((4, 8), 7.0)
    assert tv_smooth_value(c, delta, alpha) == pytest.approx(alpha * 32 * math.sqrt(delta))
    np.testing.assert_array_equal(tv_smooth_grad(c, delta, alpha), np.zeros((4, 8)))
    rng = np.random.default_rng(3)
    x = rng.normal(size=(6, 6))
    assert tv_smooth_value(x, 1e-14) == pytest.approx(tv_value(x), rel=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_tv_smooth_grad_fd(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(6, 6))
    g = tv_smooth_grad(x, 1e-2, 0.7)
    fd = central_fd(lambda z: tv_smooth_value(z, 1e-2, 0.7), x)
    assert np.linalg.norm(fd - g) <= 1e-5 * np.linalg.norm(fd)


# --- Haar


@pytest.mark.parametrize("shape,levels", [((8, 8), None), ((16, 8), 2), ((4, 32), 1), ((8, 8), 0)])
def test_wavelet_round_trip_and_parseval(shape, levels):
    rng = np.random.default_rng(4)
    x = rng.normal(size=shape)
    c = wavelet_forward(x, levels)
    assert np.abs(wavelet_inverse(c, levels) - x).max() <= 1e-12
    assert np.linalg.norm(c) == pytest.approx(np.linalg.norm(x), rel=1e-12)


def test_wavelet_constant_has_no_details():
    c = wavelet_forward(np.full((16, 16), 2.0))
    assert c[0, 0] == pytest.approx(2.0 * 16, rel=1e-14)
    c[0, 0] = 0.0
    assert np.abs(c).max() <= 1e-12


def test_wavelet_single_level_values():
    # one level on a 2x2 block: average and the three differences, scaled by 1/2
    c = wavelet_forward(np.array([[1.0, 2.0], [3.0, 4.0]]), 1)
    np.testing.assert_allclose(c, [[5.0, -1.0], [-2.0, 0.0]], atol=1e-15)


def test_wavelet_matrix_is_orthogonal():
    W = dense_matrix(lambda x: wavelet_forward(x, 2), (4, 8))
    np.testing.assert_allclose(W.T @ W, np.eye(32), atol=1e-12)


def test_wavelet_errors():
    with pytest.raises(ValueError):
        wavelet_forward(np.zeros((6, 8)))
    with pytest.raises(ValueError):
        wavelet_forward(np.zeros((8, 8)), 4)


def test_wavelet_smooth_grad_examples():
    sigma, beta = 1e-2, 0.4
    np.testing.assert_array_equal(l1_wavelet_smooth_grad(np.zeros((8, 8)), sigma, beta), 0.0)
    rng = np.random.default_rng(5)
    x = rng.normal(size=(8, 8))
    c = wavelet_forward(x)
    assert np.abs(c).min() >= sigma
    np.testing.assert_allclose(l1_wavelet_smooth_grad(x, sigma, beta),
                               beta * wavelet_inverse(np.sign(c)), atol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_wavelet_smooth_grad_fd(seed):
    rng = np.random.default_rng(seed)
    sigma, beta = 0.3, 0.8
    wt = WaveletTransform(2)
    x = rng.normal(size=(8, 8))
    if np.min(np.abs(np.abs(wt.forward(x)) - sigma)) < 1e-4:
        pytest.skip("too close to a Huber branch boundary")
    g = l1_wavelet_smooth_grad(x, sigma, beta, wt)
    fd = central_fd(lambda z: l1_wavelet_smooth_value(z, sigma, beta, wt), x)
    assert np.linalg.norm(fd - g) <= 1e-5 * np.linalg.norm(fd)


def wavelet_prox_objective(y, wbar, mu, beta, sigma):
    return mu / 2 * l1_wavelet_smooth_value(y, sigma, beta) + 0.5 * float(np.sum((y - wbar) ** 2))


def test_wavelet_prox_examples():
    np.testing.assert_array_equal(wavelet_prox_step(np.zeros((8, 8)), 1.0, 0.035, 1e-4), 0.0)
    rng = np.random.default_rng(6)
    wbar = rng.normal(size=(8, 8))
    np.testing.assert_allclose(wavelet_prox_step(wbar, 1.0, 0.5, 1e12), wbar, atol=1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_wavelet_prox_perturbation(seed):
    rng = np.random.default_rng(seed)
    wbar = rng.normal(size=(8, 8))
    mu, beta, sigma = rng.uniform(0.2, 3), rng.uniform(0.05, 1), rng.uniform(1e-3, 0.5)
    y = wavelet_prox_step(wbar, mu, beta, sigma)
    base = wavelet_prox_objective(y, wbar, mu, beta, sigma)
    for _ in range(20):
        d = rng.normal(size=(8, 8))
        d *= 1e-3 / np.linalg.norm(d)
        assert base <= wavelet_prox_objective(y + d, wbar, mu, beta, sigma)
    # stationarity of the smooth objective
    r = mu / 2 * l1_wavelet_smooth_grad(y, sigma, beta) + (y - wbar)
    assert np.linalg.norm(r) <= 1e-10 * max(1, np.linalg.norm(wbar))


# --- blur and data solve


def test_blur_matches_direct_periodic_convolution():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(16, 12))
    blur = BlurOperator(x.shape, 9)
    direct = np.zeros_like(x)
    for a in range(-4, 5):
        for b in range(-4, 5):
            direct += np.roll(np.roll(x, a, axis=0), b, axis=1) / 81.0
    np.testing.assert_allclose(blur.apply(x), direct, atol=1e-12)
    np.testing.assert_allclose(blur.adjoint(x), direct, atol=1e-12)
    assert blur.kernel.sum() == pytest.approx(1.0, rel=1e-15)


def test_blur_symmetric_and_mass_preserving():
    rng = np.random.default_rng(8)
    blur = BlurOperator((16, 16))
    x, y = rng.normal(size=(2, 16, 16))
    assert abs(np.vdot(blur.apply(x), y) - np.vdot(x, blur.adjoint(y))) <= 1e-10
    assert abs(np.vdot(blur.apply(x), y) - np.vdot(x, blur.apply(y))) <= 1e-10
    assert blur.apply(x).mean() == pytest.approx(x.mean(), abs=1e-12)


def test_blur_errors():
    with pytest.raises(ValueError):
        BlurOperator((8, 8), 4)


@pytest.mark.parametrize("shape", [(4, 4), (8, 8), (4, 8)])
def test_data_system_against_dense(shape):
    rng = np.random.default_rng(9)
    blur = BlurOperator(shape, 3)
    A = dense_matrix(blur.apply, shape)
    mu = 0.7
    rhs = rng.normal(size=shape)
    z = solve_data_system(rhs, blur, mu)
    dense = np.linalg.solve(A.T @ A + (2 / mu) * np.eye(A.shape[0]), rhs.ravel())
    assert np.abs(z.ravel() - dense).max() <= 1e-10
    residual = blur.adjoint(blur.apply(z)) + (2 / mu) * z - rhs
    assert np.linalg.norm(residual) <= 1e-10 * np.linalg.norm(rhs)


def test_data_solve_identity_blur_fixed_point():
    rng = np.random.default_rng(10)
    b = rng.normal(size=(8, 8))
    blur = BlurOperator(b.shape, 1)
    z = data_solve(b, np.zeros_like(b), np.zeros_like(b), blur, b, 0.5)
    np.testing.assert_allclose(z, b, atol=1e-13)


# --- Chambolle


def test_chambolle_examples():
    g = np.full((8, 8), 3.0)
    np.testing.assert_allclose(chambolle_tv_denoise(g, 2.0, 50), g, atol=1e-14)
    rng = np.random.default_rng(11)
    g = rng.normal(size=(8, 8))
    np.testing.assert_array_equal(chambolle_tv_denoise(g, 0.0), g)
    np.testing.assert_allclose(chambolle_tv_denoise(g, 1e-9, 10), g, atol=1e-8)
    with pytest.raises(ValueError):
        chambolle_tv_denoise(g, 1.0, 0)


def test_chambolle_long_run():
    g = np.zeros((8, 8))
    g[2:6, 1:5] = 1.0
    g[5:, 5:] = -0.5
    g += 0.1 * np.random.default_rng(12).normal(size=g.shape)
    weight = 0.2
    ref = tv_denoise_objective(chambolle_tv_denoise(g, weight, 10_000), g, weight)
    got = tv_denoise_objective(chambolle_tv_denoise(g, weight, 2_000), g, weight)
    assert abs(got - ref) <= 1e-4


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(1e-3, 5.0), st.integers(1, 30))
def test_chambolle_never_worse_than_input(seed, weight, iters):
    g = np.random.default_rng(seed).normal(size=(8, 8)) * 3
    out = chambolle_tv_denoise(g, weight, iters)
    assert tv_denoise_objective(out, g, weight) <= tv_denoise_objective(g, g, weight) + 1e-12


# --- problem assembly and steps


def test_params_defaults_and_validation():
    p = DeblurParams()
    assert (p.alpha, p.beta, p.delta, p.sigma, p.noise_sd) == (0.001, 0.035, 1e-4, 1e-4, 0.56)
    with pytest.raises(ValueError):
        DeblurParams(alpha=0.0)


def test_make_problem_examples():
    truth = synthetic_image(32)
    b, prob = make_problem(truth, DeblurParams(noise_sd=0.0, blur_size=1))
    np.testing.assert_allclose(b, truth, atol=1e-12)
    b1, _ = make_problem(truth, DeblurParams(seed=3))
    b2, _ = make_problem(truth, DeblurParams(seed=3))
    np.testing.assert_array_equal(b1, b2)
    assert prob.K == 3
    assert abs(b1.mean() - truth.mean()) < 0.1


def test_synthetic_image():
    img = synthetic_image(64)
    assert img.shape == (64, 64)
    assert set(np.unique(img)) <= {40.0, 90.0, 120.0, 200.0, 255.0}
    assert len(np.unique(img)) == 5


def test_nonsmooth_objective():
    truth = synthetic_image(16)
    b, prob = make_problem(truth, DeblurParams(levels=2))
    x = truth + 1.0
    p = prob.params
    expected = (p.alpha * tv_value(x) + p.beta * np.abs(wavelet_forward(x, 2)).sum()
                + 0.5 * np.sum((prob.blur.apply(x) - b) ** 2))
    assert prob.nonsmooth_value(x) == pytest.approx(expected, rel=1e-12)


def test_msa_step_matches_explicit_blocks():
    truth = synthetic_image(32)
    params = DeblurParams(levels=3)
    b, prob = make_problem(truth, params)
    mu = 1.0
    w = truth + np.random.default_rng(13).normal(size=truth.shape)
    state = init_state(prob, "msa", w, mu=mu)
    new = deblur_step(prob, state, "uniform")
    tv, wl, data = prob.functions
    wt = WaveletTransform(3)
    x = chambolle_tv_denoise(w - mu * (wl.grad(w) + data.grad(w)) / 2, params.alpha * mu / 2, 10)
    y = wavelet_prox_step(w - mu * (tv.grad(w) + data.grad(w)) / 2, mu, params.beta,
                          params.sigma, wt)
    z = data_solve(w, tv.grad(w), wl.grad(w), prob.blur, b, mu)
    np.testing.assert_allclose(new.x[0], x, atol=1e-9)
    np.testing.assert_allclose(new.x[1], y, atol=1e-9)
    np.testing.assert_allclose(new.x[2], z, atol=1e-9)
    np.testing.assert_allclose(new.w[0], (x + y + z) / 3, atol=1e-9)


def test_prox_residuals_of_exact_blocks():
    truth = synthetic_image(16)
    _, prob = make_problem(truth, DeblurParams(levels=2))
    rng = np.random.default_rng(14)
    y = truth + rng.normal(size=truth.shape)
    for f in prob.functions[1:]:
        lam = 0.4
        p = f.prox(lam, y)
        assert np.linalg.norm(f.grad(p) + (p - y) / lam) <= 1e-8 * np.linalg.norm(y)


def test_isnr_examples():
    rng = np.random.default_rng(15)
    truth = rng.normal(size=(8, 8))
    b = truth + rng.normal(size=(8, 8))
    assert isnr(b, b, truth) == 0.0
    assert isnr(truth + 0.5 * (b - truth), b, truth) == pytest.approx(10 * math.log10(4))
    assert isnr(truth, b, truth) == math.inf
    assert isnr(np.full((8, 8), np.inf), b, truth) == -math.inf


def test_msa_run_small_monotone_and_improving():
    truth = synthetic_image(32)
    _, prob = make_problem(truth, DeblurParams(levels=3))
    rec = deblur_run(prob, truth, "msa", mu=1.0, max_iter=30)
    s = rec.column("obj_sum")
    assert np.all(np.diff(s) <= 1e-12 * np.abs(s[:-1]))
    assert rec.rows[-1]["isnr"] > rec.rows[1]["isnr"]
    assert "isnr" in rec.columns


def test_iterate_on_deblur_is_lazy():
    truth = synthetic_image(16)
    _, prob = make_problem(truth, DeblurParams(levels=2))
    states = iterate(prob, "famsa-s", mu=1.0, x0=np.zeros((16, 16)))
    assert next(states).k == 0
    assert next(states).k == 1


def test_problem_rejects_bad_levels():
    with pytest.raises(ValueError):
        DeblurProblem(np.zeros((8, 8)), DeblurParams(levels=5))
    with pytest.raises(ValueError):
        DeblurProblem(np.zeros((12, 8)), DeblurParams())
    assert mixing_matrix("uniform", 3).shape == (3, 3)
