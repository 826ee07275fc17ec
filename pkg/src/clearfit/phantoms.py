"""Piecewise-constant test scenes.

All phantoms are deterministic float64 grids with values in [0, 255].
They provide known plateau structure (steps, squares, ellipses) or high
patch redundancy (stripes) for exercising the estimators and refits.
"""

from __future__ import annotations

import numpy as np

__all__ = ["step_1d", "squares_2d", "shepp_like", "texture_stripes", "by_name"]


def step_1d(n: int, low: float = 50.0, high: float = 150.0) -> np.ndarray:
    """Two plateaus with a single jump at the midpoint, shape (n, 1)."""
    if n < 2:
        raise ValueError("need at least 2 samples")
    x = np.full((n, 1), low, dtype=np.float64)
    x[n // 2:, 0] = high
    return x


def squares_2d(size: int) -> np.ndarray:
    """Overlapping axis-aligned squares on a flat background.

    Six squares with distinct gray levels; later squares paint over
    earlier ones, which produces nested plateaus and T-junctions.
    """
    if size < 8:
        raise ValueError("need size >= 8")
    x = np.full((size, size), 30.0, dtype=np.float64)
    s = size / 64.0
    # (top, left, side, level) in 64-unit coordinates
    layout = [
        (4, 4, 30, 90.0),
        (20, 24, 28, 150.0),
        (10, 40, 16, 200.0),
        (40, 8, 18, 120.0),
        (34, 34, 20, 60.0),
        (48, 44, 12, 230.0),
    ]
    for top, left, side, level in layout:
        r0 = int(round(top * s))
        c0 = int(round(left * s))
        d = max(1, int(round(side * s)))
        x[r0:min(r0 + d, size), c0:min(c0 + d, size)] = level
    return x


def shepp_like(size: int) -> np.ndarray:
    """A few nested ellipses in the spirit of the classic head phantom.

    Drawn directly at the requested size so edges stay crisp (no
    resampling), values piecewise constant.
    """
    if size < 8:
        raise ValueError("need size >= 8")
    r = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    yy, xx = np.meshgrid(r, r, indexing="ij")
    x = np.zeros((size, size), dtype=np.float64)
    # (cy, cx, ay, ax, angle_deg, level); later entries overwrite
    ellipses = [
        (0.0, 0.0, 0.92, 0.72, 0.0, 210.0),
        (0.0, 0.0, 0.85, 0.65, 0.0, 50.0),
        (-0.2, 0.18, 0.42, 0.26, -18.0, 120.0),
        (-0.2, -0.2, 0.46, 0.22, 18.0, 90.0),
        (0.35, 0.0, 0.18, 0.22, 0.0, 170.0),
        (-0.55, 0.0, 0.09, 0.06, 0.0, 230.0),
    ]
    for cy, cx, ay, ax, ang, level in ellipses:
        th = np.deg2rad(ang)
        u = (yy - cy) * np.cos(th) + (xx - cx) * np.sin(th)
        v = -(yy - cy) * np.sin(th) + (xx - cx) * np.cos(th)
        x[(u / ay) ** 2 + (v / ax) ** 2 <= 1.0] = level
    return x


def texture_stripes(size: int, period: int = 8) -> np.ndarray:
    """Diagonal binary stripes; every patch repeats along the stripes."""
    if size < 8 or period < 2:
        raise ValueError("need size >= 8 and period >= 2")
    idx = np.add.outer(np.arange(size), np.arange(size))
    x = np.where((idx // (period // 2)) % 2 == 0, 64.0, 192.0)
    return x.astype(np.float64)


def by_name(name: str, size: int) -> np.ndarray:
    """Phantom lookup used by the command line."""
    table = {
        "step_1d": step_1d,
        "squares_2d": squares_2d,
        "shepp_like": shepp_like,
        "texture_stripes": texture_stripes,
    }
    if name not in table:
        raise KeyError(f"unknown phantom {name!r}; choose from {sorted(table)}")
    return table[name](size)
