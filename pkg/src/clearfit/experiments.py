"""Degradation models, restoration runs, sweeps and statistical checks.

This module wires the estimators and the refit engine into repeatable
experiments: synthesize an observation from a clean scene, restore it
with a chosen estimator, refit, and score both against the truth.  It
also holds the small-instance oracles (dense closed forms on an
identified support) and the Monte-Carlo harness that checks the
first- and second-moment formulas of the frozen refit.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from . import closed_form as cf
from . import metrics, phantoms, rng
from . import refit_engine as rfe
from .nlm import NlmParams, nlm_with_jvp
from .operators import (LinearMap, as_matrix, circular_convolution, diagonal_mask,
                        forward_gradient_1d, forward_gradient_2d, gaussian_blur_kernel,
                        identity)
from .primal_dual import PDConfig, default_config, solve_analysis

__all__ = [
    "DegradationSpec",
    "build_operator",
    "degrade",
    "EstimatorOptions",
    "RestoreOutcome",
    "run_restoration",
    "SweepRecord",
    "sweep",
    "sweep_to_csv",
    "CSV_HEADER",
    "iterative_hard_thresholding_baseline",
    "support_basis",
    "invariant_target",
    "l1_analysis_oracle",
    "plateau_average_1d",
    "McStats",
    "montecarlo_guess_refit",
    "geometric_grid",
]

ESTIMATORS = ("tv_aniso", "tv_iso", "lasso", "tikhonov", "soft", "hard", "nlm")


# ---------------------------------------------------------------------------
# degradation


@dataclass
class DegradationSpec:
    """How to turn a clean scene into an observation.

    task: "denoise" (identity), "inpaint" (random 0/1 mask) or "deblur"
    (periodic Gaussian blur).  Noise is white Gaussian of level
    noise_sigma added after the forward map.  The seed pins both the
    mask draw (sub-stream 0) and the noise draw (sub-stream 1).
    """

    task: str = "denoise"
    noise_sigma: float = 0.0
    mask_fraction: float = 0.0
    blur_radius: int = 2
    blur_width: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.task not in ("denoise", "inpaint", "deblur"):
            raise ValueError(f"unknown task {self.task!r}")
        if not 0.0 <= self.mask_fraction <= 1.0:
            raise ValueError("mask_fraction must lie in [0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


def build_operator(spec: DegradationSpec, shape) -> LinearMap:
    shape = tuple(shape)
    if spec.task == "denoise":
        return identity(shape)
    if spec.task == "inpaint":
        p = int(np.prod(shape))
        removed = int(np.floor(spec.mask_fraction * p))
        mask = np.ones(p)
        mask[rng.mask_indices(rng.stream(spec.seed, 0), p, removed)] = 0.0
        return diagonal_mask(mask.reshape(shape))
    kernel = gaussian_blur_kernel(spec.blur_radius, spec.blur_width)
    return circular_convolution(kernel, shape)


def degrade(x0: np.ndarray, spec: DegradationSpec):
    """Observation y = Phi x0 + noise and the forward map used.

    Noise lives in observation coordinates: for inpainting the removed
    samples carry no data, so the mask is applied to the noise as well
    and Phi y == y holds for the stored observation.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    phi = build_operator(spec, x0.shape)
    y = phi.apply(x0)
    if spec.noise_sigma > 0:
        noise = spec.noise_sigma * rng.normals(rng.stream(spec.seed, 1), y.shape)
        if spec.task == "inpaint":
            noise = phi.apply(noise)
        y = y + noise
    return y, phi


# ---------------------------------------------------------------------------
# one restoration run


@dataclass
class EstimatorOptions:
    """Knobs shared by the command line and the sweeps."""

    max_iters: int = 20000
    rel_tol: float = 1e-9
    beta: float | None = None
    jvp_mode: str = "algorithmic"  # "algorithmic" | "fd"
    search_radius: int = 3
    patch_radius: int = 1
    noise_sigma: float = 0.0  # patch self-weight compensation for nlm


@dataclass
class RestoreOutcome:
    estimate: np.ndarray
    refit: np.ndarray
    rho: float
    iters: int


def _analysis_parts(phi: LinearMap, estimator_id: str):
    shape = phi.in_shape
    if estimator_id == "lasso":
        return identity(shape), "l1"
    if estimator_id == "tv_iso":
        if shape[1] == 1:
            raise ValueError("tv_iso needs a 2-d grid")
        return forward_gradient_2d(shape), "l12"
    if shape[1] == 1:
        return forward_gradient_1d(shape[0]), "l1"
    return forward_gradient_2d(shape), "l1"


def run_restoration(phi: LinearMap, y: np.ndarray, estimator_id: str, param: float,
                    opts: EstimatorOptions | None = None) -> RestoreOutcome:
    """Estimate and refit one observation.

    `param` is the regularization weight, or the bandwidth h for nlm.
    Analysis estimators refit from a single differentiated run pushed
    along y (their solution maps satisfy J Phi x = x); Tikhonov,
    thresholding and nlm use the generic two-step path.  jvp_mode "fd"
    swaps the derivative for forward finite differences.
    """
    opts = opts or EstimatorOptions()
    y = np.asarray(y, dtype=np.float64)
    if estimator_id not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator_id!r}")

    if estimator_id in ("soft", "hard", "nlm") and phi.kind != "identity":
        raise ValueError(f"{estimator_id} is a denoiser; the forward map must be identity")

    if estimator_id in ("tv_aniso", "tv_iso", "lasso"):
        gamma, penalty = _analysis_parts(phi, estimator_id)
        cfg = default_config(gamma, param, penalty, beta=opts.beta,
                             rel_tol=opts.rel_tol, max_iters=opts.max_iters)
        if opts.jvp_mode == "fd":
            est_fn = lambda v: solve_analysis(phi, gamma, v, cfg).estimate
            res = solve_analysis(phi, gamma, y, cfg)
            out = rfe.clear_two_step(rfe.fd_provider(est_fn), phi, y)
            return RestoreOutcome(res.estimate, out.refit, out.rho, res.iters_used)
        res = solve_analysis(phi, gamma, y, cfg, direction=y)
        out = rfe.clear_one_step(res.estimate, res.jvp_out, phi, y)
        return RestoreOutcome(res.estimate, out.refit, out.rho, res.iters_used)

    if estimator_id == "tikhonov":
        gamma, _ = _analysis_parts(phi, "tv_aniso")
        model = cf.tikhonov_model(phi, gamma, param)
        prov = rfe.tikhonov_provider(model)
        if opts.jvp_mode == "fd":
            prov = rfe.fd_provider(lambda v: cf.solve_tikhonov(model, v))
        out = rfe.clear_two_step(prov, phi, y)
        return RestoreOutcome(out.estimate, out.refit, out.rho, 1)

    if estimator_id in ("soft", "hard"):
        prov = rfe.threshold_provider(estimator_id, param)
        if opts.jvp_mode == "fd":
            prov = rfe.fd_provider(prov.estimate_at)
        out = rfe.clear_two_step(prov, phi, y)
        return RestoreOutcome(out.estimate, out.refit, out.rho, 1)

    params = NlmParams(h=param, search_radius=opts.search_radius,
                       patch_radius=opts.patch_radius, sigma=opts.noise_sigma)
    prov = rfe.nlm_provider(params)
    if opts.jvp_mode == "fd":
        prov = rfe.fd_provider(prov.estimate_at)
    out = rfe.clear_two_step(prov, phi, y)
    return RestoreOutcome(out.estimate, out.refit, out.rho, 1)


# ---------------------------------------------------------------------------
# parameter sweeps


CSV_HEADER = "param,mse_orig,mse_refit,psnr_orig,psnr_refit,ssim_orig,ssim_refit,rho,iters"


@dataclass
class SweepRecord:
    param: float
    mse_orig: float
    mse_refit: float
    psnr_orig: float
    psnr_refit: float
    ssim_orig: float
    ssim_refit: float
    rho: float
    iters: int


def geometric_grid(lo: float, hi: float, count: int) -> np.ndarray:
    if lo <= 0 or hi <= lo or count < 2:
        raise ValueError("need 0 < lo < hi and count >= 2")
    return np.geomspace(lo, hi, count)


def _sweep_point(payload) -> SweepRecord:
    x0, y, spec, estimator_id, param, opts = payload
    phi = build_operator(spec, x0.shape)
    outcome = run_restoration(phi, y, estimator_id, param, opts)
    return SweepRecord(
        param=float(param),
        mse_orig=metrics.mse(outcome.estimate, x0),
        mse_refit=metrics.mse(outcome.refit, x0),
        psnr_orig=metrics.psnr(outcome.estimate, x0),
        psnr_refit=metrics.psnr(outcome.refit, x0),
        ssim_orig=metrics.ssim(outcome.estimate, x0),
        ssim_refit=metrics.ssim(outcome.refit, x0),
        rho=outcome.rho,
        iters=outcome.iters,
    )


def sweep(x0: np.ndarray, spec: DegradationSpec, estimator_id: str, grid,
          opts: EstimatorOptions | None = None, parallel: int = 0) -> list:
    """Score estimate and refit over a parameter grid.

    The observation is synthesized once from `spec`, so every point
    sees the same data and runs independently; with parallel > 1 the
    points execute in worker processes and are merged back in grid
    order, leaving the records identical to a serial run.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    opts = opts or EstimatorOptions()
    y, _ = degrade(x0, spec)
    payloads = [(x0, y, spec, estimator_id, float(g), opts) for g in grid]
    workers = max(int(parallel), 0)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_point, payloads))
    return [_sweep_point(q) for q in payloads]


def _fmt(v) -> str:
    return repr(float(v))


def sweep_to_csv(records, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in records:
            fh.write(",".join([
                _fmt(r.param), _fmt(r.mse_orig), _fmt(r.mse_refit),
                _fmt(r.psnr_orig), _fmt(r.psnr_refit),
                _fmt(r.ssim_orig), _fmt(r.ssim_refit),
                _fmt(r.rho), str(int(r.iters)),
            ]) + "\n")


# ---------------------------------------------------------------------------
# comparison baseline


def iterative_hard_thresholding_baseline(phi: LinearMap, gamma: LinearMap,
                                         y: np.ndarray, cfg: PDConfig):
    """Same iteration with the dual soft clamp swapped for the hard one."""
    return solve_analysis(phi, gamma, y, dataclasses.replace(cfg, clamp="hard"))


# ---------------------------------------------------------------------------
# dense small-instance oracles


def support_basis(gamma_mat: np.ndarray, active: np.ndarray) -> np.ndarray:
    """Orthonormal basis U of the model space {x : Gamma_i x = 0 off the support}."""
    inactive = gamma_mat[~np.asarray(active, dtype=bool).ravel()]
    if inactive.shape[0] == 0:
        return np.eye(gamma_mat.shape[1])
    u = sla.null_space(inactive)
    if u.shape[1] == 0:
        raise ValueError("empty model space: every analysis row is inactive-constrained")
    return u


def invariant_target(phi_mat: np.ndarray, u_basis: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least-squares fit of the data inside the model space: U (Phi U)^+ y."""
    return u_basis @ (np.linalg.pinv(phi_mat @ u_basis, rcond=cf.PINV_CUTOFF) @ np.ravel(y))


def l1_analysis_oracle(phi_mat: np.ndarray, gamma_mat: np.ndarray, y: np.ndarray,
                       lam: float, active: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """Closed form of the analysis minimizer on a known support.

    With U spanning the model space of the support and s the signs of
    the active coefficients, the minimizer is the model-space data fit
    minus a lam-proportional correction:

        x = U (Phi U)^+ y - lam U [(Phi U)^T (Phi U)]^{-1} U^T Gamma_I^T s
    """
    active = np.asarray(active, dtype=bool).ravel()
    u = support_basis(gamma_mat, active)
    pu = phi_mat @ u
    fit = u @ (np.linalg.pinv(pu, rcond=cf.PINV_CUTOFF) @ np.ravel(y))
    corr = u @ np.linalg.solve(pu.T @ pu, u.T @ (gamma_mat[active].T @ np.ravel(signs)))
    return fit - lam * corr


def plateau_average_1d(y: np.ndarray, active: np.ndarray) -> np.ndarray:
    """Average y over the plateaus cut by the active jump set (identity map)."""
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    jumps = np.flatnonzero(np.asarray(active, dtype=bool).ravel()[:n - 1])
    edges = np.concatenate([[0], jumps + 1, [n]])
    out = y.copy()
    for a, b in zip(edges[:-1], edges[1:]):
        out[a:b] = y[a:b].mean()
    return out


# ---------------------------------------------------------------------------
# Monte-Carlo verification of the frozen refit moments


@dataclass
class McStats:
    """Empirical vs predicted moments of the frozen refit and tangent map."""

    rho: float
    bias_d_emp: np.ndarray
    bias_d_theory: np.ndarray
    cov_d_emp: np.ndarray
    cov_d_theory: np.ndarray
    se_bias_d: np.ndarray
    se_cov_d: np.ndarray
    bias_t_emp: np.ndarray
    bias_t_theory: np.ndarray
    cov_t_emp: np.ndarray
    cov_t_theory: np.ndarray
    se_bias_t: np.ndarray
    se_cov_t: np.ndarray


def _cov_se(cov: np.ndarray, n_draws: int) -> np.ndarray:
    d = np.diag(cov)
    return np.sqrt((np.outer(d, d) + cov**2) / n_draws)


def montecarlo_guess_refit(phi_mat: np.ndarray, jac: np.ndarray, x0: np.ndarray,
                           z: np.ndarray, xz: np.ndarray, sigma: float,
                           n_draws: int, seed: int) -> McStats:
    """Sample y = Phi x0 + noise and compare moments to the affine formulas.

    The refit frozen at the guess z is affine in y, so its bias is
    (Id - rho J Phi)(x(z) - x0) and its covariance rho^2 J Sigma J^T;
    the tangent map replaces rho J Phi by J Phi and drops rho from the
    covariance.  Standard errors use the predicted covariances (mean:
    sqrt(C_ii/N); covariance entries: sqrt((C_ii C_jj + C_ij^2)/N)).
    """
    x0 = np.ravel(x0)
    z = np.ravel(z)
    xz = np.ravel(xz)
    n = phi_mat.shape[0]
    delta_z = z - phi_mat @ xz
    r = rfe.rho(phi_mat @ (jac @ delta_z), delta_z)

    noise = sigma * rng.normals(rng.stream(seed), (n, n_draws))
    ys = (phi_mat @ x0)[:, None] + noise
    d_draws = xz[:, None] + r * (jac @ (ys - (phi_mat @ xz)[:, None]))
    t_draws = xz[:, None] + jac @ (ys - z[:, None])

    sig = sigma**2 * np.eye(n)
    cov_d_theory = r**2 * (jac @ sig @ jac.T)
    cov_t_theory = jac @ sig @ jac.T
    p = x0.size
    return McStats(
        rho=r,
        bias_d_emp=d_draws.mean(axis=1) - x0,
        bias_d_theory=(np.eye(p) - r * (jac @ phi_mat)) @ (xz - x0),
        cov_d_emp=np.cov(d_draws, bias=False),
        cov_d_theory=cov_d_theory,
        se_bias_d=np.sqrt(np.diag(cov_d_theory) / n_draws),
        se_cov_d=_cov_se(cov_d_theory, n_draws),
        bias_t_emp=t_draws.mean(axis=1) - x0,
        bias_t_theory=(xz - x0) + jac @ (phi_mat @ x0 - z),
        cov_t_emp=np.cov(t_draws, bias=False),
        cov_t_theory=cov_t_theory,
        se_bias_t=np.sqrt(np.diag(cov_t_theory) / n_draws),
        se_cov_t=_cov_se(cov_t_theory, n_draws),
    )
