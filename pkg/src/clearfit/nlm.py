"""Non-local means with an exact directional derivative.

The estimate averages pixels whose surrounding patches look alike:

    x_i = sum_j wbar_ij y_j / sum_j wbar_ij

with block weights wbar_ij accumulated from patch weights
w_ij = phi(||P_i y - P_j y||^2), phi(e) = exp(-e / h).  Rather than
forming the weight matrix, the loop runs over the (2s+1)^2 - 1 offsets
of the search window: for offset k the squared patch distance at every
site is a box filter of (y - S_k y)^2, so each offset costs a constant
number of O(n) passes, independent of the patch radius b.

Because the weights depend on y, the Jacobian has a weight-derivative
part on top of the averaging part.  Pushing a direction d through the
chain rule gives, per offset, the patch-distance derivative
2 (y - S_k y)(d - S_k d) box-filtered, times phi'(e), box-filtered
again for the block aggregation.  The same accumulators that produce
the estimate then yield J d as

    (W'_y - W' * x) / W

where W, W_y carry weights and weighted data and W', W'_y their
derivatives along d.  The central offset contributes the constant
weight phi(2 sigma^2 (2b+1)^2) with zero derivative.

All shifts and box filters wrap periodically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["NlmParams", "NlmFit", "box_filter", "shift", "nlm_with_jvp"]


@dataclass
class NlmParams:
    """Bandwidth h, search radius s, patch radius b, noise level sigma."""

    h: float
    search_radius: int = 3
    patch_radius: int = 1
    sigma: float = 0.0

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("h must be > 0")
        if self.search_radius < 1 or self.patch_radius < 0:
            raise ValueError("need search_radius >= 1 and patch_radius >= 0")


@dataclass
class NlmFit:
    estimate: np.ndarray
    jvp: np.ndarray | None
    weight_sum: np.ndarray  # W, the per-pixel normalization


def shift(u: np.ndarray, k) -> np.ndarray:
    """Periodic shift: shift(u, k)[i] = u[i - k] (componentwise)."""
    return np.roll(u, k, axis=(0, 1))


def _box_1d(u: np.ndarray, b: int, axis: int) -> np.ndarray:
    if b == 0:
        return u
    n = u.shape[axis]
    lo = u.take(range(n - b, n), axis=axis)
    hi = u.take(range(0, b), axis=axis)
    padded = np.concatenate([lo, u, hi], axis=axis)
    cs = np.cumsum(padded, axis=axis)
    zero = np.zeros_like(cs.take([0], axis=axis))
    cs = np.concatenate([zero, cs], axis=axis)
    w = 2 * b + 1
    return cs.take(range(w, w + n), axis=axis) - cs.take(range(0, n), axis=axis)


def box_filter(u: np.ndarray, b: int) -> np.ndarray:
    """Periodic sum over the (2b+1)^2 window, via running sums per axis.

    Cost is O(n) regardless of b; the window is separable so two 1-d
    passes suffice.
    """
    if b < 0:
        raise ValueError("b must be >= 0")
    return _box_1d(_box_1d(u, b, 0), b, 1)


def nlm_with_jvp(y: np.ndarray, params: NlmParams,
                 direction: np.ndarray | None = None) -> NlmFit:
    """One pass over the search window; jvp is None unless a direction is given."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2:
        raise ValueError("y must be a 2-d grid")
    b = params.patch_radius
    s = params.search_radius
    h = params.h
    patch = (2 * b + 1) ** 2
    central = np.exp(-2.0 * params.sigma**2 * patch / h)

    w_sum = np.full(y.shape, central)
    wy_sum = central * y
    with_jvp = direction is not None
    if with_jvp:
        d = np.asarray(direction, dtype=np.float64)
        if d.shape != y.shape:
            raise ValueError("direction must match y")
        wp_sum = np.zeros(y.shape)
        wyp_sum = central * d

    for k1 in range(-s, s + 1):
        for k2 in range(-s, s + 1):
            if k1 == 0 and k2 == 0:
                continue
            k = (k1, k2)
            dy = y - shift(y, k)
            e = box_filter(dy * dy, b)
            pe = np.exp(-e / h)
            w = box_filter(pe, b)
            w_sum += w
            wy_sum += w * shift(y, k)
            if with_jvp:
                de = box_filter(2.0 * dy * (d - shift(d, k)), b)
                wp = box_filter(de * (-pe / h), b)
                wp_sum += wp
                wyp_sum += wp * shift(y, k) + w * shift(d, k)

    estimate = wy_sum / w_sum
    jvp = (wyp_sum - wp_sum * estimate) / w_sum if with_jvp else None
    return NlmFit(estimate, jvp, w_sum)
