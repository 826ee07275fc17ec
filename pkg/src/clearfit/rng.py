"""Deterministic random streams for noise, masks and solver seeding.

All randomness in the package flows through this module.  Streams are
built on the counter-based Philox generator so that a 64-bit seed plus
an optional path of integers (e.g. a sweep point index) pins down the
stream exactly, independent of execution order.  Normal deviates are
produced by the Box-Muller transform from Philox uniforms, which keeps
the draw sequence reproducible across numpy versions.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream", "normals", "mask_indices"]


def stream(seed: int, *path: int) -> np.random.Generator:
    """Generator for (seed, path).  Same arguments, same stream."""
    ss = np.random.SeedSequence([int(seed), *[int(q) for q in path]])
    return np.random.Generator(np.random.Philox(ss))


def normals(gen: np.random.Generator, shape) -> np.ndarray:
    """Standard normal deviates via Box-Muller.

    Draws pairs (u1, u2) uniform on (0, 1] x [0, 1) and maps them to
    r*cos(2 pi u2), r*sin(2 pi u2) with r = sqrt(-2 log u1).
    """
    count = int(np.prod(shape)) if shape else 1
    pairs = (count + 1) // 2
    # random() yields [0, 1); flip u1 to (0, 1] so the log is finite
    u1 = 1.0 - gen.random(pairs)
    u2 = gen.random(pairs)
    r = np.sqrt(-2.0 * np.log(u1))
    ang = 2.0 * np.pi * u2
    z = np.concatenate([r * np.cos(ang), r * np.sin(ang)])
    return z[:count].reshape(shape)


def mask_indices(gen: np.random.Generator, p: int, count: int) -> np.ndarray:
    """`count` distinct flat indices in [0, p), uniform without replacement."""
    if not 0 <= count <= p:
        raise ValueError(f"count {count} out of range for p={p}")
    return gen.permutation(p)[:count]
