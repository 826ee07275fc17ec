"""Estimators with explicit solution maps and Jacobians.

Three families live here:

* soft and hard thresholding of the data itself (denoising with an
  identity forward map); both keep the strict support |y_i| > lam and
  act as the identity on it, so their Jacobian is the same coordinate
  projection,
* constrained least squares x = b + A (Phi A)^+ (y - Phi b), the
  prototype of every refitting target: its Jacobian A (Phi A)^+ makes
  Phi J an orthogonal projector,
* Tikhonov regularization with a quadratic analysis penalty, solved
  through the normal matrix Phi^T Phi + lam Gamma^T Gamma, whose
  Jacobian is constant in y.

Small problems (up to 2000 unknowns) assemble the normal matrix densely
and factor it once; larger ones fall back to conjugate gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .operators import LinearMap, as_matrix, cg_solve

__all__ = [
    "ThresholdFit",
    "soft_threshold",
    "hard_threshold",
    "threshold_jvp",
    "ConstrainedLsFit",
    "solve_constrained_ls",
    "TikhonovModel",
    "tikhonov_model",
    "solve_tikhonov",
    "tikhonov_jvp",
]

PINV_CUTOFF = 1e-12  # relative to the largest singular value
DENSE_LIMIT = 2000


@dataclass
class ThresholdFit:
    """Thresholded estimate plus the strict support it identified."""

    estimate: np.ndarray
    support: np.ndarray  # boolean, same shape as the data
    lam: float


def soft_threshold(y: np.ndarray, lam: float) -> ThresholdFit:
    """Shrink toward zero by lam; entries with |y_i| <= lam vanish."""
    if lam < 0:
        raise ValueError("lam must be >= 0")
    y = np.asarray(y, dtype=np.float64)
    support = np.abs(y) > lam
    est = np.where(support, y - lam * np.sign(y), 0.0)
    return ThresholdFit(est, support, float(lam))


def hard_threshold(y: np.ndarray, lam: float) -> ThresholdFit:
    """Keep entries with |y_i| > lam unchanged, zero the rest."""
    if lam < 0:
        raise ValueError("lam must be >= 0")
    y = np.asarray(y, dtype=np.float64)
    support = np.abs(y) > lam
    return ThresholdFit(np.where(support, y, 0.0), support, float(lam))


def threshold_jvp(fit: ThresholdFit, d: np.ndarray) -> np.ndarray:
    """Both thresholds restrict a direction to the kept coordinates."""
    return np.where(fit.support, d, 0.0)


@dataclass
class ConstrainedLsFit:
    """Least-squares fit over an affine model b + span(A)."""

    estimate: np.ndarray
    jac: np.ndarray  # dense (p, n): maps flat data to flat signal


def solve_constrained_ls(phi: LinearMap, basis: np.ndarray, y: np.ndarray,
                         offset: np.ndarray | None = None) -> ConstrainedLsFit:
    """Minimize ||Phi x - y|| over x = b + A c.

    `basis` is A with one column per degree of freedom, rows in C order
    over the signal grid.  The minimum-norm coefficient solution gives
    x = b + A (Phi A)^+ (y - Phi b) and the Jacobian A (Phi A)^+.
    """
    p = int(np.prod(phi.in_shape))
    basis = np.asarray(basis, dtype=np.float64)
    if basis.ndim != 2 or basis.shape[0] != p:
        raise ValueError(f"basis must be ({p}, r)")
    cols = np.stack(
        [phi.apply(basis[:, j].reshape(phi.in_shape)).ravel() for j in range(basis.shape[1])],
        axis=1,
    )
    jac = basis @ np.linalg.pinv(cols, rcond=PINV_CUTOFF)
    if offset is None:
        resid = np.asarray(y, dtype=np.float64).ravel()
        est = jac @ resid
    else:
        resid = np.asarray(y, dtype=np.float64).ravel() - phi.apply(offset).ravel()
        est = offset.ravel() + jac @ resid
    return ConstrainedLsFit(est.reshape(phi.in_shape), jac)


@dataclass
class TikhonovModel:
    """Factored normal equations for a quadratic analysis penalty."""

    phi: LinearMap
    gamma: LinearMap
    lam: float
    chol: tuple | None = field(default=None, repr=False)
    phi_mat: np.ndarray | None = field(default=None, repr=False)


def tikhonov_model(phi: LinearMap, gamma: LinearMap, lam: float,
                   dense_limit: int = DENSE_LIMIT) -> TikhonovModel:
    """Build and (for small problems) factor Phi^T Phi + lam Gamma^T Gamma.

    The dense path asserts the normal matrix is positive definite, i.e.
    the forward map and the penalty have no common kernel direction.
    """
    if lam <= 0:
        raise ValueError("lam must be > 0")
    p = int(np.prod(phi.in_shape))
    if p > dense_limit:
        return TikhonovModel(phi, gamma, float(lam))
    pm = as_matrix(phi)
    gm = as_matrix(gamma)
    normal = pm.T @ pm + lam * (gm.T @ gm)
    smallest = float(sla.eigvalsh(normal, subset_by_index=(0, 0))[0])
    if smallest <= 1e-10:
        raise ValueError(f"normal matrix is singular (min eigenvalue {smallest:.3e})")
    return TikhonovModel(phi, gamma, float(lam), sla.cho_factor(normal), pm)


def _tikhonov_solve_rhs(model: TikhonovModel, rhs_grid: np.ndarray) -> np.ndarray:
    if model.chol is not None:
        sol = sla.cho_solve(model.chol, rhs_grid.ravel())
        return sol.reshape(model.phi.in_shape)
    phi, gamma, lam = model.phi, model.gamma, model.lam

    def matvec(v):
        return phi.adjoint(phi.apply(v)) + lam * gamma.adjoint(gamma.apply(v))

    return cg_solve(matvec, rhs_grid, tol=1e-10, maxiter=10 * rhs_grid.size)


def solve_tikhonov(model: TikhonovModel, y: np.ndarray) -> np.ndarray:
    """x = (Phi^T Phi + lam Gamma^T Gamma)^{-1} Phi^T y."""
    return _tikhonov_solve_rhs(model, model.phi.adjoint(np.asarray(y, dtype=np.float64)))


def tikhonov_jvp(model: TikhonovModel, d: np.ndarray) -> np.ndarray:
    """Directional derivative; the map is linear so y never enters."""
    return _tikhonov_solve_rhs(model, model.phi.adjoint(np.asarray(d, dtype=np.float64)))
