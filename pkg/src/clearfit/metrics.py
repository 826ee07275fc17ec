"""Restoration quality metrics on [0, 255]-scaled grids.

PSNR uses the fixed peak 255 regardless of the actual dynamic range, so
values are comparable across experiments.  SSIM follows the standard
Gaussian-weighted form: 11x11 window with sigma 1.5, K1=0.01, K2=0.03,
L=255, averaged over all fully interior windows.  Signals with a single
column use an 11x1 window instead.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import convolve2d

__all__ = ["mse", "psnr", "ssim"]

_PEAK = 255.0
_K1 = 0.01
_K2 = 0.03
_WIN = 11
_WIN_SIGMA = 1.5


def mse(a: np.ndarray, ref: np.ndarray) -> float:
    """Mean squared error (1/p) ||a - ref||^2."""
    a = np.asarray(a, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if a.shape != ref.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {ref.shape}")
    return float(np.mean((a - ref) ** 2))


def psnr(a: np.ndarray, ref: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB; inf for an exact match."""
    err = mse(a, ref)
    if err == 0.0:
        return float("inf")
    return float(10.0 * np.log10(_PEAK * _PEAK / err))


def _window(shape) -> np.ndarray:
    t = np.arange(_WIN, dtype=np.float64) - (_WIN - 1) / 2.0
    g = np.exp(-0.5 * (t / _WIN_SIGMA) ** 2)
    g /= g.sum()
    if shape[1] == 1:
        return g[:, None]
    return np.outer(g, g)


def ssim(a: np.ndarray, ref: np.ndarray) -> float:
    """Mean structural similarity over Gaussian-weighted windows."""
    a = np.asarray(a, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if a.shape != ref.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {ref.shape}")
    if a.ndim != 2 or a.shape[0] < _WIN or (a.shape[1] not in (1,) and a.shape[1] < _WIN):
        raise ValueError(f"grid too small for {_WIN}-wide SSIM window: {a.shape}")
    w = _window(a.shape)

    def smooth(u):
        return convolve2d(u, w, mode="valid")

    mu_a = smooth(a)
    mu_r = smooth(ref)
    # weighted second moments; no small-sample correction
    var_a = smooth(a * a) - mu_a**2
    var_r = smooth(ref * ref) - mu_r**2
    cov = smooth(a * ref) - mu_a * mu_r
    c1 = (_K1 * _PEAK) ** 2
    c2 = (_K2 * _PEAK) ** 2
    num = (2 * mu_a * mu_r + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_r**2 + c1) * (var_a + var_r + c2)
    return float(np.mean(num / den))
