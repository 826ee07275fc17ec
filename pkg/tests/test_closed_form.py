"""Closed-form estimators: frozen values and dense oracles."""

import numpy as np

from clearfit import rng
from clearfit.closed_form import (hard_threshold, soft_threshold, solve_constrained_ls,
                                  solve_tikhonov, threshold_jvp, tikhonov_jvp,
                                  tikhonov_model)
from clearfit.operators import (as_matrix, circular_convolution, forward_gradient_1d,
                                gaussian_blur_kernel, identity)


def test_soft_threshold_frozen():
    y = np.array([3.0, -0.5, 1.0, -4.0, 0.0])
    fit = soft_threshold(y, 1.0)
    assert np.array_equal(fit.estimate, np.array([2.0, 0.0, 0.0, -3.0, 0.0]))
    assert np.array_equal(fit.support, np.array([True, False, False, True, False]))


def test_hard_threshold_frozen():
    y = np.array([3.0, -0.5, 1.0, -4.0, 0.0])
    fit = hard_threshold(y, 1.0)
    # strict inequality: |y| == lam is zeroed
    assert np.array_equal(fit.estimate, np.array([3.0, 0.0, 0.0, -4.0, 0.0]))
    assert np.array_equal(fit.support, fit.estimate != 0)


def test_threshold_jvp_masks_direction():
    gen = rng.stream(21)
    y = gen.standard_normal(40)
    d = gen.standard_normal(40)
    for fit in (soft_threshold(y, 0.8), hard_threshold(y, 0.8)):
        got = threshold_jvp(fit, d)
        assert np.array_equal(got, np.where(fit.support, d, 0.0))


def test_soft_threshold_jvp_matches_fd():
    gen = rng.stream(22)
    y = gen.standard_normal(30) * 3
    d = gen.standard_normal(30)
    fit = soft_threshold(y, 1.0)
    eps = 1e-7
    fd = (soft_threshold(y + eps * d, 1.0).estimate - fit.estimate) / eps
    # valid whenever no entry sits on the threshold boundary
    assert np.max(np.abs(threshold_jvp(fit, d) - fd)) < 1e-6


def test_constrained_ls_is_projector():
    gen = rng.stream(23)
    phi = identity((10, 1))
    basis = gen.standard_normal((10, 3))
    y = gen.standard_normal((10, 1))
    fit = solve_constrained_ls(phi, basis, y)
    # solving again from the estimate must be a fixed point
    again = solve_constrained_ls(phi, basis, fit.estimate)
    assert np.max(np.abs(again.estimate - fit.estimate)) < 1e-12
    # orthogonal projector onto span(basis)
    q, _ = np.linalg.qr(basis)
    want = (q @ (q.T @ y.ravel())).reshape(10, 1)
    assert np.max(np.abs(fit.estimate - want)) < 1e-10


def test_constrained_ls_jacobian_pushes_directions():
    gen = rng.stream(24)
    phi = identity((8, 1))
    basis = gen.standard_normal((8, 2))
    y = gen.standard_normal((8, 1))
    fit = solve_constrained_ls(phi, basis, y)
    d = gen.standard_normal((8, 1))
    eps = 1e-7
    fd = (solve_constrained_ls(phi, basis, y + eps * d).estimate - fit.estimate) / eps
    jd = (fit.jac @ d.ravel()).reshape(8, 1)
    assert np.max(np.abs(jd - fd)) < 1e-6


def test_tikhonov_matches_dense_solve():
    gen = rng.stream(25)
    shape = (6, 6)
    phi = circular_convolution(gaussian_blur_kernel(1, 0.8), shape)
    gamma = identity(shape)
    lam = 0.7
    model = tikhonov_model(phi, gamma, lam)
    y = gen.standard_normal(shape)
    got = solve_tikhonov(model, y)
    pm = as_matrix(phi)
    gm = as_matrix(gamma)
    want = np.linalg.solve(pm.T @ pm + lam * gm.T @ gm, pm.T @ y.ravel())
    assert np.max(np.abs(got.ravel() - want)) < 1e-10


def test_tikhonov_jvp_is_estimate_of_direction():
    # the map is linear, so the jacobian push equals the solve on the direction
    gen = rng.stream(26)
    phi = identity((12, 1))
    gamma = forward_gradient_1d(12)
    model = tikhonov_model(phi, gamma, 2.0)
    d = gen.standard_normal((12, 1))
    assert np.max(np.abs(tikhonov_jvp(model, d) - solve_tikhonov(model, d))) < 1e-12


def test_tikhonov_gradient_penalty_smooths():
    y = np.zeros((16, 1))
    y[8:] = 10.0
    model = tikhonov_model(identity((16, 1)), forward_gradient_1d(16), 50.0)
    x = solve_tikhonov(model, y)
    # heavy quadratic smoothing flattens the step but keeps the mean
    assert abs(x.mean() - y.mean()) < 1e-8
    assert np.max(np.abs(np.diff(x.ravel()))) < np.max(np.abs(np.diff(y.ravel()))) / 4
