"""Patch-averaging denoiser: dense oracle, invariances, derivative, cost."""

import time

import numpy as np

from clearfit import rng
from clearfit.nlm import NlmParams, box_filter, nlm_with_jvp, shift
from clearfit.refit_engine import fd_jvp


def _naive_nlm(y, params):
    """Literal accumulation over sites and offsets, O(n^2 b^2) per pixel."""
    rows, cols = y.shape
    b, s, h = params.patch_radius, params.search_radius, params.h
    patch = (2 * b + 1) ** 2
    central = np.exp(-2.0 * params.sigma**2 * patch / h)
    out = np.zeros_like(y)
    for i in range(rows):
        for j in range(cols):
            wsum = central
            wysum = central * y[i, j]
            for k1 in range(-s, s + 1):
                for k2 in range(-s, s + 1):
                    if k1 == 0 and k2 == 0:
                        continue
                    w = 0.0
                    for t1 in range(-b, b + 1):
                        for t2 in range(-b, b + 1):
                            e = 0.0
                            for u1 in range(-b, b + 1):
                                for u2 in range(-b, b + 1):
                                    a = y[(i + t1 + u1) % rows, (j + t2 + u2) % cols]
                                    c = y[(i + t1 + u1 - k1) % rows,
                                          (j + t2 + u2 - k2) % cols]
                                    e += (a - c) ** 2
                            w += np.exp(-e / h)
                    wsum += w
                    wysum += w * y[(i - k1) % rows, (j - k2) % cols]
            out[i, j] = wysum / wsum
    return out


def test_matches_naive_accumulation():
    gen = rng.stream(51)
    y = gen.random((8, 8)) * 100
    params = NlmParams(h=2000.0, search_radius=2, patch_radius=1, sigma=0.0)
    fast = nlm_with_jvp(y, params).estimate
    slow = _naive_nlm(y, params)
    assert np.max(np.abs(fast - slow)) < 1e-10


def test_shift_semantics():
    u = np.arange(12.0).reshape(3, 4)
    assert np.array_equal(shift(u, (1, 0))[1:], u[:2])
    assert shift(u, (0, 2))[0, 2] == u[0, 0]


def test_box_filter_matches_direct_sum():
    gen = rng.stream(52)
    u = gen.random((7, 9))
    b = 2
    got = box_filter(u, b)
    for i, j in ((0, 0), (3, 4), (6, 8)):
        want = sum(u[(i + a) % 7, (j + c) % 9]
                   for a in range(-b, b + 1) for c in range(-b, b + 1))
        assert abs(got[i, j] - want) < 1e-12


def test_shift_equivariance():
    # the denoiser commutes with periodic translation of the input
    gen = rng.stream(53)
    y = gen.random((12, 12)) * 200
    params = NlmParams(h=5000.0, search_radius=2, patch_radius=1)
    base = nlm_with_jvp(y, params).estimate
    moved = nlm_with_jvp(shift(y, (3, 5)), params).estimate
    assert np.max(np.abs(moved - shift(base, (3, 5)))) < 1e-10


def test_output_in_convex_hull():
    # weights are positive and normalized, so the estimate is a convex
    # combination of input values
    gen = rng.stream(54)
    y = gen.random((10, 10)) * 255
    fit = nlm_with_jvp(y, NlmParams(h=3000.0, search_radius=3, patch_radius=1))
    assert fit.estimate.min() >= y.min() - 1e-10
    assert fit.estimate.max() <= y.max() + 1e-10
    assert np.all(fit.weight_sum > 0)


def test_constant_input_is_fixed_point():
    y = np.full((9, 9), 42.0)
    fit = nlm_with_jvp(y, NlmParams(h=1000.0, search_radius=2, patch_radius=1))
    assert np.max(np.abs(fit.estimate - 42.0)) < 1e-12


def test_jvp_matches_central_fd():
    gen = rng.stream(55)
    y = gen.random((12, 12)) * 100
    d = gen.standard_normal((12, 12))
    params = NlmParams(h=4000.0, search_radius=2, patch_radius=1)
    fit = nlm_with_jvp(y, params, direction=d)
    fd = fd_jvp(lambda v: nlm_with_jvp(v, params).estimate, y, d, central=True)
    rel = np.linalg.norm(fit.jvp - fd) / np.linalg.norm(fd)
    assert rel < 1e-6


def test_jvp_linear_in_direction():
    gen = rng.stream(56)
    y = gen.random((10, 10)) * 100
    d1 = gen.standard_normal((10, 10))
    d2 = gen.standard_normal((10, 10))
    params = NlmParams(h=4000.0, search_radius=2, patch_radius=1)
    j1 = nlm_with_jvp(y, params, direction=d1).jvp
    j2 = nlm_with_jvp(y, params, direction=d2).jvp
    j12 = nlm_with_jvp(y, params, direction=1.5 * d1 - 2.0 * d2).jvp
    assert np.max(np.abs(j12 - (1.5 * j1 - 2.0 * j2))) < 1e-10


def test_noise_offset_reduces_self_weight():
    gen = rng.stream(57)
    y = gen.random((10, 10)) * 100
    plain = nlm_with_jvp(y, NlmParams(h=3000.0, search_radius=2, patch_radius=1, sigma=0.0))
    offset = nlm_with_jvp(y, NlmParams(h=3000.0, search_radius=2, patch_radius=1, sigma=20.0))
    # sigma only discounts the central weight, so the normalization drops
    assert np.all(offset.weight_sum < plain.weight_sum)


def test_cost_linear_in_window_area():
    # doubling s quadruples the offsets; patch radius must not enter.
    # allow generous slack since the grids are small
    gen = rng.stream(58)
    y = gen.random((48, 48)) * 100

    def best_of(params):
        t = []
        for _ in range(3):
            t0 = time.perf_counter()
            nlm_with_jvp(y, params)
            t.append(time.perf_counter() - t0)
        return min(t)

    t_s1 = best_of(NlmParams(h=3000.0, search_radius=1, patch_radius=1))
    t_s2 = best_of(NlmParams(h=3000.0, search_radius=2, patch_radius=1))
    offsets_ratio = ((2 * 2 + 1) ** 2 - 1) / ((2 * 1 + 1) ** 2 - 1)  # = 3
    assert t_s2 / t_s1 < offsets_ratio * 3

    t_b1 = best_of(NlmParams(h=3000.0, search_radius=2, patch_radius=1))
    t_b4 = best_of(NlmParams(h=3000.0, search_radius=2, patch_radius=4))
    assert t_b4 / t_b1 < 3
