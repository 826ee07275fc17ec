"""Re-fitting of biased estimators along their own Jacobian.

An estimator x(y) that shrinks (thresholding, total variation, Tikhonov,
patch averaging) leaves a residual y - Phi x(y) that still contains
signal.  The covariant refit adds back the part of that residual the
estimator is able to represent, by pushing it through the Jacobian J of
the solution map at y:

    refit = x(y) + rho * J (y - Phi x(y))

with the step

    rho = <Phi J delta, delta> / ||Phi J delta||^2,  delta = y - Phi x(y),

the least-squares optimal amplitude for the data fit.  When Phi J is an
orthogonal projector (thresholding, constrained least squares), rho = 1
and the refit reaches the projection of the data itself.  When the
estimator is invariant to its own re-application (J Phi x = x, true for
positively homogeneous penalties), the two-step formula collapses to a
single blend (1 - rho) x + rho J y, computable from one differentiated
solver run with direction y.

The engine only needs two callables per estimator, the solution map and
its directional derivative; `JvpProvider` bundles them.  Every refit
variant (data-driven, frozen at a guess z, tangent affine approximation,
dense invariant refit through the pseudo-inverse of Phi J) is a few
lines on top.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import closed_form as cf
from .nlm import NlmParams, nlm_with_jvp
from .operators import LinearMap
from .primal_dual import PDConfig, solve_analysis

__all__ = [
    "JvpProvider",
    "RefitResult",
    "threshold_provider",
    "tikhonov_provider",
    "constrained_ls_provider",
    "analysis_provider",
    "nlm_provider",
    "fd_provider",
    "rho",
    "clear_two_step",
    "clear_one_step",
    "guess_based_refit",
    "tangent_estimator",
    "fd_jvp",
    "invariant_refit_dense",
    "boost_twicing",
    "boost_bregman",
    "boost_sos",
]

RHO_GUARD = 1e-12


@dataclass
class JvpProvider:
    """A solution map plus its directional derivative.

    estimate_at(y) returns the estimate; jvp_at(y, d) the Jacobian of
    the map at y applied to d.  jvp_batch, when set, pushes a whole
    stack of directions through one solver run.  mode records how the
    derivative is obtained ("analytic", "algorithmic" or "fd").
    """

    estimate_at: Callable[[np.ndarray], np.ndarray]
    jvp_at: Callable[[np.ndarray, np.ndarray], np.ndarray]
    mode: str
    jvp_batch: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None


@dataclass
class RefitResult:
    refit: np.ndarray
    estimate: np.ndarray
    rho: float
    delta: np.ndarray


def threshold_provider(kind: str, lam: float) -> JvpProvider:
    """Soft or hard thresholding; the Jacobian masks to the support."""
    fit_fn = {"soft": cf.soft_threshold, "hard": cf.hard_threshold}[kind]
    return JvpProvider(
        estimate_at=lambda y: fit_fn(y, lam).estimate,
        jvp_at=lambda y, d: cf.threshold_jvp(fit_fn(y, lam), d),
        mode="analytic",
    )


def tikhonov_provider(model: cf.TikhonovModel) -> JvpProvider:
    """Linear estimator; the Jacobian never depends on y."""
    return JvpProvider(
        estimate_at=lambda y: cf.solve_tikhonov(model, y),
        jvp_at=lambda y, d: cf.tikhonov_jvp(model, d),
        mode="analytic",
    )


def constrained_ls_provider(phi: LinearMap, basis: np.ndarray,
                            offset: np.ndarray | None = None) -> JvpProvider:
    """Affine least squares over b + span(A); Phi J is a projector."""
    probe = np.zeros(phi.out_shape)
    jac = cf.solve_constrained_ls(phi, basis, probe, offset=None).jac

    def estimate_at(y):
        return cf.solve_constrained_ls(phi, basis, y, offset=offset).estimate

    return JvpProvider(
        estimate_at=estimate_at,
        jvp_at=lambda y, d: (jac @ np.asarray(d, dtype=np.float64).ravel()).reshape(phi.in_shape),
        mode="analytic",
    )


def analysis_provider(phi: LinearMap, gamma: LinearMap, cfg: PDConfig) -> JvpProvider:
    """Differentiated primal-dual runs for l1/l12 analysis penalties."""
    return JvpProvider(
        estimate_at=lambda y: solve_analysis(phi, gamma, y, cfg).estimate,
        jvp_at=lambda y, d: solve_analysis(phi, gamma, y, cfg, direction=d).jvp_out,
        mode="algorithmic",
        jvp_batch=lambda y, ds: solve_analysis(phi, gamma, y, cfg, direction=ds).jvp_out,
    )


def nlm_provider(params: NlmParams) -> JvpProvider:
    """Patch averaging with the exact weight-derivative Jacobian."""
    return JvpProvider(
        estimate_at=lambda y: nlm_with_jvp(y, params).estimate,
        jvp_at=lambda y, d: nlm_with_jvp(y, params, direction=d).jvp,
        mode="analytic",
    )


def fd_provider(estimate_fn: Callable[[np.ndarray], np.ndarray],
                eps: float | None = None, central: bool = False) -> JvpProvider:
    """Black-box wrapper: derivative by finite differences."""
    return JvpProvider(
        estimate_at=estimate_fn,
        jvp_at=lambda y, d: fd_jvp(estimate_fn, y, d, eps=eps, central=central),
        mode="fd",
    )


def rho(phi_j_delta: np.ndarray, delta: np.ndarray, guard: float = RHO_GUARD) -> float:
    """Optimal refit amplitude, defaulting to 1 when Phi J delta vanishes."""
    den = float(np.vdot(phi_j_delta, phi_j_delta).real)
    dnorm = float(np.vdot(delta, delta).real)
    if den <= guard * dnorm:
        return 1.0
    return float(np.vdot(phi_j_delta, delta).real / den)


def clear_two_step(provider: JvpProvider, phi: LinearMap, y: np.ndarray) -> RefitResult:
    """Estimate, then push the residual through the Jacobian at y."""
    y = np.asarray(y, dtype=np.float64)
    est = provider.estimate_at(y)
    delta = y - phi.apply(est)
    j_delta = provider.jvp_at(y, delta)
    r = rho(phi.apply(j_delta), delta)
    return RefitResult(est + r * j_delta, est, r, delta)


def clear_one_step(estimate: np.ndarray, jvp_y: np.ndarray, phi: LinearMap,
                   y: np.ndarray) -> RefitResult:
    """Blend (1 - rho) x + rho J y for maps invariant to re-application.

    Valid when J Phi x(y) = x(y) (positively homogeneous penalties), in
    which case J delta = J y - x(y) and the two-step formula reduces to
    this single blend; jvp_y is J y from a differentiated run with
    direction y.
    """
    y = np.asarray(y, dtype=np.float64)
    delta = y - phi.apply(estimate)
    u = phi.apply(jvp_y - estimate)
    r = rho(u, delta)
    return RefitResult((1.0 - r) * estimate + r * jvp_y, estimate, r, delta)


def guess_based_refit(provider: JvpProvider, phi: LinearMap, z: np.ndarray,
                      y: np.ndarray) -> RefitResult:
    """Refit frozen at a guess z, evaluated on data y.

    Estimate, Jacobian and amplitude all come from z, so the map is
    affine in y; with z = y it reduces to the plain refit.
    """
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    est = provider.estimate_at(z)
    delta_z = z - phi.apply(est)
    r = rho(phi.apply(provider.jvp_at(z, delta_z)), delta_z)
    correction = provider.jvp_at(z, y - phi.apply(est))
    return RefitResult(est + r * correction, est, r, delta_z)


def tangent_estimator(provider: JvpProvider, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """First-order expansion of the map around z: x(z) + J (y - z)."""
    z = np.asarray(z, dtype=np.float64)
    return provider.estimate_at(z) + provider.jvp_at(z, np.asarray(y, dtype=np.float64) - z)


def fd_jvp(estimate_fn: Callable[[np.ndarray], np.ndarray], y: np.ndarray,
           d: np.ndarray, eps: float | None = None, central: bool = False) -> np.ndarray:
    """Directional derivative of a black-box map by finite differences.

    The default step scales with the data and direction magnitudes:
    eps = 1e-6 * max(||y||_inf, 1) / max(||d||_inf, 1e-12).
    """
    y = np.asarray(y, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if eps is None:
        eps = 1e-6 * max(np.abs(y).max(), 1.0) / max(np.abs(d).max(), 1e-12)
    if central:
        return (estimate_fn(y + eps * d) - estimate_fn(y - eps * d)) / (2.0 * eps)
    return (estimate_fn(y + eps * d) - estimate_fn(y)) / eps


def invariant_refit_dense(provider: JvpProvider, phi: LinearMap, y: np.ndarray,
                          rcond: float = 1e-12) -> np.ndarray:
    """Amplitude-free refit x(y) + J (Phi J)^+ (y - Phi x(y)).

    Assembles J densely by pushing every data basis vector through the
    Jacobian (one batched solver run when the provider supports it), so
    this is for small instances and oracle comparisons.
    """
    y = np.asarray(y, dtype=np.float64)
    est = provider.estimate_at(y)
    delta = y - phi.apply(est)
    n = int(np.prod(phi.out_shape))
    basis = np.eye(n).reshape((n,) + phi.out_shape)
    if provider.jvp_batch is not None:
        cols = provider.jvp_batch(y, basis)
    else:
        cols = np.stack([provider.jvp_at(y, basis[i]) for i in range(n)])
    j_rows = cols.reshape(n, -1)  # row i holds J e_i
    phi_j_rows = phi.apply(cols).reshape(n, -1)
    w = np.linalg.pinv(phi_j_rows.T, rcond=rcond) @ delta.ravel()
    return est + (j_rows.T @ w).reshape(est.shape)


def boost_twicing(estimate_fn: Callable[[np.ndarray], np.ndarray], phi: LinearMap,
                  y: np.ndarray, k: int = 2) -> np.ndarray:
    """k rounds of estimating the current residual and adding it back."""
    xt = np.zeros(phi.in_shape)
    for _ in range(k):
        xt = xt + estimate_fn(y - phi.apply(xt))
    return xt


def boost_bregman(estimate_fn: Callable[[np.ndarray], np.ndarray], phi: LinearMap,
                  y: np.ndarray, k: int) -> np.ndarray:
    """Re-estimate on data enriched by all accumulated residuals."""
    acc = np.zeros(phi.out_shape)
    xt = np.zeros(phi.in_shape)
    for _ in range(k):
        xt = estimate_fn(y + acc)
        acc = acc + (y - phi.apply(xt))
    return xt


def boost_sos(estimate_fn: Callable[[np.ndarray], np.ndarray], phi: LinearMap,
              y: np.ndarray, k: int, alpha: float, tau_sos: float = 1.0) -> np.ndarray:
    """Strengthen-operate-subtract: feed back alpha Phi x, then recenter."""
    xt = np.zeros(phi.in_shape)
    for _ in range(k):
        xt = tau_sos * estimate_fn(y + alpha * phi.apply(xt)) - (tau_sos * alpha + tau_sos - 1.0) * xt
    return xt
