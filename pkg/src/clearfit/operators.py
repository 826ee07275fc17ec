"""Linear operators on regular grids with exact adjoints.

Grids are float64 arrays of shape (rows, cols); 1-d signals use cols=1.
Gradient outputs are vector fields with the component axis last, e.g.
(rows, cols, 2) for the 2-d forward gradient, so the b components of a
site sit contiguously in memory.

Every operator is a `LinearMap` with `apply` and `adjoint`.  The pair is
exact up to rounding: `<A u, w> == <u, A^T w>`.  Cheap kinds (identity,
mask, gradients) accept extra leading batch axes and act on the trailing
grid axes, which the differentiated primal-dual solver relies on to push
many directions through one iteration loop.

The forward gradients use one-sided differences with a Neumann boundary:
the last difference along each axis is zero, so constant grids lie in
the kernel and a 1-d signal of n samples has at most n-1 active entries.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy import ndimage

__all__ = [
    "LinearMap",
    "identity",
    "diagonal_mask",
    "circular_convolution",
    "forward_gradient_1d",
    "forward_gradient_2d",
    "composition",
    "as_matrix",
    "op_norm_sq",
    "cg_solve",
    "gaussian_blur_kernel",
]


class LinearMap:
    """A linear operator between grid/field spaces.

    Parameters
    ----------
    kind : str
        One of identity, diagonal_mask, circular_convolution,
        forward_gradient_1d, forward_gradient_2d, composition.
    in_shape, out_shape : tuple of int
        Trailing shapes of admissible inputs and of outputs.
    """

    def __init__(self, kind: str, in_shape, out_shape):
        self.kind = kind
        self.in_shape = tuple(in_shape)
        self.out_shape = tuple(out_shape)

    def apply(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return self.apply(u)

    def _check(self, u, shape):
        nd = len(shape)
        if u.ndim < nd or u.shape[u.ndim - nd:] != shape:
            raise ValueError(f"{self.kind}: got {u.shape}, want trailing {shape}")


class _Identity(LinearMap):
    def __init__(self, shape):
        super().__init__("identity", shape, shape)

    def apply(self, u):
        self._check(u, self.in_shape)
        return u.copy()

    adjoint = apply


class _DiagonalMask(LinearMap):
    def __init__(self, mask):
        mask = np.asarray(mask, dtype=np.float64)
        super().__init__("diagonal_mask", mask.shape, mask.shape)
        self.mask = mask

    def apply(self, u):
        self._check(u, self.in_shape)
        return u * self.mask

    adjoint = apply


class _CircularConvolution(LinearMap):
    def __init__(self, kernel, shape):
        kernel = np.asarray(kernel, dtype=np.float64)
        if kernel.ndim != 2 or any(s % 2 == 0 for s in kernel.shape):
            raise ValueError("kernel must be 2-d with odd sizes")
        super().__init__("circular_convolution", shape, shape)
        self.kernel = kernel

    def _run(self, u, func):
        self._check(u, self.in_shape)
        if u.ndim == 2:
            return func(u, self.kernel, mode="wrap")
        flat = u.reshape((-1,) + self.in_shape)
        out = np.empty_like(flat)
        for i in range(flat.shape[0]):
            out[i] = func(flat[i], self.kernel, mode="wrap")
        return out.reshape(u.shape)

    def apply(self, u):
        return self._run(u, ndimage.convolve)

    def adjoint(self, w):
        # correlation is the exact adjoint of periodic convolution
        return self._run(w, ndimage.correlate)


class _ForwardGradient1D(LinearMap):
    def __init__(self, n):
        super().__init__("forward_gradient_1d", (n, 1), (n, 1))

    def apply(self, u):
        self._check(u, self.in_shape)
        g = np.zeros_like(u)
        g[..., :-1, :] = u[..., 1:, :] - u[..., :-1, :]
        return g

    def adjoint(self, w):
        self._check(w, self.out_shape)
        v = np.zeros_like(w)
        v[..., :-1, :] -= w[..., :-1, :]
        v[..., 1:, :] += w[..., :-1, :]
        return v


class _ForwardGradient2D(LinearMap):
    def __init__(self, shape):
        super().__init__("forward_gradient_2d", shape, shape + (2,))

    def apply(self, u):
        self._check(u, self.in_shape)
        g = np.zeros(u.shape + (2,), dtype=u.dtype)
        g[..., :-1, :, 0] = u[..., 1:, :] - u[..., :-1, :]
        g[..., :, :-1, 1] = u[..., :, 1:] - u[..., :, :-1]
        return g

    def adjoint(self, w):
        self._check(w, self.out_shape)
        v = np.zeros(w.shape[:-1], dtype=w.dtype)
        v[..., :-1, :] -= w[..., :-1, :, 0]
        v[..., 1:, :] += w[..., :-1, :, 0]
        v[..., :, :-1] -= w[..., :, :-1, 1]
        v[..., :, 1:] += w[..., :, :-1, 1]
        return v


class _Composition(LinearMap):
    def __init__(self, outer, inner):
        if inner.out_shape != outer.in_shape:
            raise ValueError(
                f"cannot compose: inner out {inner.out_shape} vs outer in {outer.in_shape}"
            )
        super().__init__("composition", inner.in_shape, outer.out_shape)
        self.outer = outer
        self.inner = inner

    def apply(self, u):
        return self.outer.apply(self.inner.apply(u))

    def adjoint(self, w):
        return self.inner.adjoint(self.outer.adjoint(w))


def identity(shape) -> LinearMap:
    """Identity on grids of the given shape."""
    return _Identity(tuple(shape))


def diagonal_mask(mask: np.ndarray) -> LinearMap:
    """Entrywise multiplication by a fixed 0/1 (or general) mask grid."""
    return _DiagonalMask(mask)


def circular_convolution(kernel: np.ndarray, shape) -> LinearMap:
    """Periodic convolution with an odd-sized 2-d kernel."""
    return _CircularConvolution(kernel, tuple(shape))


def forward_gradient_1d(n: int) -> LinearMap:
    """One-sided difference on (n, 1) signals, last entry zero."""
    return _ForwardGradient1D(n)


def forward_gradient_2d(shape) -> LinearMap:
    """One-sided differences along both axes, (r, c) -> (r, c, 2)."""
    return _ForwardGradient2D(tuple(shape))


def composition(outer: LinearMap, inner: LinearMap) -> LinearMap:
    """outer applied after inner; adjoint composes in reverse."""
    return _Composition(outer, inner)


def as_matrix(op: LinearMap) -> np.ndarray:
    """Dense matrix of `op`, columns ordered by C-order flat index.

    Intended for small-instance oracles and closed forms; cost is one
    apply per input entry.
    """
    p = int(np.prod(op.in_shape))
    m = int(np.prod(op.out_shape))
    mat = np.empty((m, p))
    e = np.zeros(op.in_shape)
    flat = e.reshape(-1)
    for j in range(p):
        flat[j] = 1.0
        mat[:, j] = op.apply(e).reshape(-1)
        flat[j] = 0.0
    return mat


def op_norm_sq(op: LinearMap, iters: int = 200, seed: int = 0) -> float:
    """Largest eigenvalue of A^T A by power iteration (so ||A||_2^2).

    The Rayleigh estimate approaches the true value from below; callers
    that need a safe upper bound should add their own margin.
    """
    from . import rng

    gen = rng.stream(seed)
    u = rng.normals(gen, op.in_shape)
    u /= np.linalg.norm(u)
    est = 0.0
    for _ in range(iters):
        w = op.adjoint(op.apply(u))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        u = w / nw
        est = nw
    return float(est)


def cg_solve(matvec, rhs: np.ndarray, tol: float = 1e-10, maxiter: int | None = None,
             x0: np.ndarray | None = None) -> np.ndarray:
    """Conjugate gradients for an SPD map given as a callable.

    Stops when the residual norm drops below tol * ||rhs|| (or at
    maxiter, default 10x the problem size).  Works on arrays of any
    shape; the inner products run over all axes.
    """
    if maxiter is None:
        maxiter = 10 * rhs.size
    x = np.zeros_like(rhs) if x0 is None else x0.copy()
    r = rhs - matvec(x)
    p = r.copy()
    rs = np.vdot(r, r).real
    target = tol * np.linalg.norm(rhs.ravel())
    for _ in range(maxiter):
        if np.sqrt(rs) <= target:
            break
        ap = matvec(p)
        alpha = rs / np.vdot(p, ap).real
        x += alpha * p
        r -= alpha * ap
        rs_new = np.vdot(r, r).real
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x


def gaussian_blur_kernel(radius: int, width: float) -> np.ndarray:
    """(2*radius+1)^2 truncated Gaussian, normalized to unit sum."""
    if radius < 0 or width <= 0:
        raise ValueError("radius must be >= 0 and width > 0")
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-0.5 * (t / width) ** 2)
    k = np.outer(g, g)
    return k / k.sum()
