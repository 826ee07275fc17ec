"""Command line front end.

Three subcommands:

* ``restore``: synthesize or load an observation, estimate, refit, and
  write grids (PGM preview + lossless F64), a residual map, a figure
  and a manifest into the output directory.
* ``sweep``: score estimate and refit over a parameter grid, writing
  sweep.csv, a curve figure and a manifest.
* ``validate``: run the structural property checks and exit nonzero if
  any fails.

Every run writes a ``manifest.txt`` of resolved parameters; feeding a
manifest back through `manifest_argv` replays the run and reproduces
the data outputs byte for byte.  Exit codes: 0 success, 1 failed
validation, 2 usage error, 3 input/output error.

Input conventions: ``--in`` accepts a file (PGM or F64 grid) or a
phantom spec ``phantom[:name[:size]]``.  Without ``--truth`` the input
is the clean scene and the observation is synthesized from the task
parameters and seed; with ``--truth`` the input is the observation
itself (denoise/deblur only, since a stored observation does not pin
the inpainting mask) and the truth file is used for scoring.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import __version__, gridio, metrics, phantoms, report
from .experiments import (CSV_HEADER, DegradationSpec, EstimatorOptions, ESTIMATORS,
                          build_operator, degrade, geometric_grid, run_restoration,
                          sweep, sweep_to_csv)
from .validation import SUITES, run_suite

__all__ = ["main", "manifest_argv"]


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="clearfit",
                                 description="restoration with covariant refitting")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--estimator", choices=ESTIMATORS, required=True)
        p.add_argument("--task", choices=("denoise", "inpaint", "deblur"), default="denoise")
        p.add_argument("--lambda", dest="lam", type=float, help="regularization weight")
        p.add_argument("--h", type=float, help="patch bandwidth (nlm)")
        p.add_argument("--s", type=int, default=3, help="search radius (nlm)")
        p.add_argument("--b", type=int, default=1, help="patch radius (nlm)")
        p.add_argument("--sigma", type=float, default=0.0, help="noise level")
        p.add_argument("--mask-fraction", type=float, default=0.25)
        p.add_argument("--blur", default="2:1.0", help="radius:width of the blur kernel")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--iters", type=int, default=20000)
        p.add_argument("--tol", type=float, default=1e-9)
        p.add_argument("--beta", type=float, default=None)
        p.add_argument("--jvp", choices=("algorithmic", "fd"), default="algorithmic")
        p.add_argument("--in", dest="input", required=True,
                       help="grid file or phantom[:name[:size]]")
        p.add_argument("--truth", default=None, help="truth grid for scoring")
        p.add_argument("--out", required=True, help="output directory")

    pr = sub.add_parser("restore", help="restore one observation")
    common(pr)

    ps = sub.add_parser("sweep", help="score a parameter grid")
    common(ps)
    ps.add_argument("--grid", default=None, help="lo:hi:count (geometric) or v1,v2,...")
    ps.add_argument("--parallel", type=int, default=0, help="worker processes")

    pv = sub.add_parser("validate", help="run property checks")
    pv.add_argument("suite", choices=sorted(SUITES) + ["all"])
    pv.add_argument("--seed", type=int, default=None)
    pv.add_argument("--n", type=int, default=20000, help="Monte-Carlo draws")
    pv.add_argument("--beta", type=float, default=None)
    return ap


def _resolve_seed(flag) -> int:
    if flag is not None:
        return int(flag)
    env = os.environ.get("CLEAR_SEED")
    return int(env) if env else 0


def _parse_blur(text: str):
    try:
        if ":" in text:
            r, w = text.split(":", 1)
            return int(r), float(w)
        width = float(text)
        return max(1, int(np.ceil(3 * width))), width
    except ValueError as exc:
        raise UsageError(f"bad --blur {text!r}; expected radius:width") from exc


def _load_input(text: str):
    """Returns (grid, spec_string)."""
    if text == "phantom" or text.startswith("phantom:"):
        parts = text.split(":")
        name = parts[1] if len(parts) > 1 and parts[1] else "squares_2d"
        size = int(parts[2]) if len(parts) > 2 else 64
        try:
            return phantoms.by_name(name, size), f"phantom:{name}:{size}"
        except KeyError as exc:
            raise UsageError(str(exc)) from exc
    return gridio.load_grid(text), text


def _param_for(args) -> float:
    if args.estimator == "nlm":
        if args.h is None:
            raise UsageError("--h is required for the nlm estimator")
        return float(args.h)
    if args.lam is None:
        raise UsageError(f"--lambda is required for the {args.estimator} estimator")
    return float(args.lam)


def _spec_from(args, seed: int) -> DegradationSpec:
    radius, width = _parse_blur(args.blur)
    return DegradationSpec(task=args.task, noise_sigma=float(args.sigma),
                           mask_fraction=float(args.mask_fraction),
                           blur_radius=radius, blur_width=width, seed=seed)


def _opts_from(args) -> EstimatorOptions:
    return EstimatorOptions(max_iters=int(args.iters), rel_tol=float(args.tol),
                            beta=args.beta, jvp_mode=args.jvp,
                            search_radius=int(args.s), patch_radius=int(args.b),
                            noise_sigma=float(args.sigma))


def _base_manifest(args, command, seed, param, input_spec):
    radius, width = _parse_blur(args.blur)
    entries = {
        "command": command,
        "version": __version__,
        "estimator": args.estimator,
        "task": args.task,
        "param": repr(float(param)),
        "sigma": repr(float(args.sigma)),
        "mask_fraction": repr(float(args.mask_fraction)),
        "blur": f"{radius}:{repr(width)}",
        "seed": str(seed),
        "iters": str(int(args.iters)),
        "tol": repr(float(args.tol)),
        "beta": "" if args.beta is None else repr(float(args.beta)),
        "jvp": args.jvp,
        "s": str(int(args.s)),
        "b": str(int(args.b)),
        "in": input_spec,
        "truth": args.truth or "",
        "out": args.out,
    }
    return entries


def manifest_argv(manifest: dict) -> list:
    """Rebuild the command line that reproduces a recorded run."""
    cmd = manifest["command"]
    argv = [cmd, "--estimator", manifest["estimator"], "--task", manifest["task"],
            "--sigma", manifest["sigma"], "--mask-fraction", manifest["mask_fraction"],
            "--blur", manifest["blur"], "--seed", manifest["seed"],
            "--iters", manifest["iters"], "--tol", manifest["tol"],
            "--jvp", manifest["jvp"], "--s", manifest["s"], "--b", manifest["b"],
            "--in", manifest["in"], "--out", manifest["out"]]
    if manifest["estimator"] == "nlm":
        argv += ["--h", manifest["param"]]
    else:
        argv += ["--lambda", manifest["param"]]
    if manifest.get("beta"):
        argv += ["--beta", manifest["beta"]]
    if manifest.get("truth"):
        argv += ["--truth", manifest["truth"]]
    if cmd == "sweep":
        argv += ["--grid", manifest["grid"], "--parallel", manifest.get("parallel", "0")]
    return argv


def _prepare_data(args, seed):
    """Observation, forward map, truth (or None) and the input spec string."""
    grid, input_spec = _load_input(args.input)
    spec = _spec_from(args, seed)
    if args.truth:
        if args.input.startswith("phantom"):
            raise UsageError("--truth only applies to file observations")
        if args.task == "inpaint":
            raise UsageError("--truth with inpainting is not reproducible; "
                             "pass the clean scene as --in instead")
        phi = build_operator(spec, grid.shape)
        return grid, phi, gridio.load_grid(args.truth), input_spec
    y, phi = degrade(grid, spec)
    return y, phi, grid, input_spec


def _cmd_restore(args) -> int:
    seed = _resolve_seed(args.seed)
    param = _param_for(args)
    t0 = time.monotonic()
    y, phi, truth, input_spec = _prepare_data(args, seed)
    outcome = run_restoration(phi, y, args.estimator, param, _opts_from(args))
    os.makedirs(args.out, exist_ok=True)
    gridio.write_f64(os.path.join(args.out, "y.f64"), y)
    gridio.write_f64(os.path.join(args.out, "estimate.f64"), outcome.estimate)
    gridio.write_pgm(os.path.join(args.out, "estimate.pgm"), outcome.estimate)
    gridio.write_f64(os.path.join(args.out, "refit.f64"), outcome.refit)
    gridio.write_pgm(os.path.join(args.out, "refit.pgm"), outcome.refit)
    gridio.write_f64(os.path.join(args.out, "residual.f64"), y - phi.apply(outcome.estimate))

    entries = _base_manifest(args, "restore", seed, param, input_spec)
    entries["rho"] = repr(float(outcome.rho))
    entries["iters_used"] = str(int(outcome.iters))
    lines = [f"rho={entries['rho']}", f"iters_used={entries['iters_used']}"]
    if truth is not None:
        for label, grid in (("orig", outcome.estimate), ("refit", outcome.refit)):
            entries[f"mse_{label}"] = repr(metrics.mse(grid, truth))
            entries[f"psnr_{label}"] = repr(metrics.psnr(grid, truth))
            entries[f"ssim_{label}"] = repr(metrics.ssim(grid, truth))
            lines.append(f"{label}: mse={entries[f'mse_{label}']} "
                         f"psnr={entries[f'psnr_{label}']} ssim={entries[f'ssim_{label}']}")
    caption = f"{args.estimator} param={param:g} rho={outcome.rho:.4f}"
    report.render_restore(os.path.join(args.out, "restore.png"), y, outcome.estimate,
                          outcome.refit, truth=truth, caption=caption)
    entries["wall_time_s"] = f"{time.monotonic() - t0:.3f}"
    gridio.write_manifest(os.path.join(args.out, "manifest.txt"), entries)
    for line in lines:
        print(line)
    return 0


def _parse_grid(text: str | None, estimator: str) -> tuple:
    if text is None:
        text = "1000:100000:20" if estimator == "nlm" else "1:100:20"
    try:
        if ":" in text:
            lo, hi, count = text.split(":")
            return tuple(geometric_grid(float(lo), float(hi), int(count))), text
        values = tuple(float(v) for v in text.split(","))
        if not values:
            raise ValueError
        return values, text
    except ValueError as exc:
        raise UsageError(f"bad --grid {text!r}; expected lo:hi:count or v1,v2,...") from exc


def _cmd_sweep(args) -> int:
    seed = _resolve_seed(args.seed)
    if args.truth:
        raise UsageError("sweep scores against --in as the clean scene; --truth is not accepted")
    grid_values, grid_text = _parse_grid(args.grid, args.estimator)
    if args.estimator == "nlm" and args.lam is not None:
        raise UsageError("nlm sweeps use --grid over h; --lambda does not apply")
    t0 = time.monotonic()
    x0, input_spec = _load_input(args.input)
    spec = _spec_from(args, seed)
    records = sweep(x0, spec, args.estimator, grid_values, _opts_from(args),
                    parallel=max(0, int(args.parallel)))
    os.makedirs(args.out, exist_ok=True)
    sweep_to_csv(records, os.path.join(args.out, "sweep.csv"))
    label = "h" if args.estimator == "nlm" else "lambda"
    report.render_sweep(os.path.join(args.out, "sweep.png"), records, label)

    entries = _base_manifest(args, "sweep", seed, grid_values[0], input_spec)
    entries["param"] = repr(float(grid_values[0]))
    entries["grid"] = grid_text
    entries["parallel"] = str(max(0, int(args.parallel)))
    best_orig = min(records, key=lambda r: r.mse_orig)
    best_refit = min(records, key=lambda r: r.mse_refit)
    entries["best_param_orig"] = repr(best_orig.param)
    entries["best_mse_orig"] = repr(best_orig.mse_orig)
    entries["best_param_refit"] = repr(best_refit.param)
    entries["best_mse_refit"] = repr(best_refit.mse_refit)
    entries["wall_time_s"] = f"{time.monotonic() - t0:.3f}"
    gridio.write_manifest(os.path.join(args.out, "manifest.txt"), entries)
    print(f"best estimate: {label}={best_orig.param:g} mse={best_orig.mse_orig:.4f}")
    print(f"best refit:    {label}={best_refit.param:g} mse={best_refit.mse_refit:.4f}")
    return 0


def _cmd_validate(args) -> int:
    seed = _resolve_seed(args.seed)
    kwargs = {}
    informational = False
    if args.suite == "montecarlo":
        kwargs = {"n_draws": int(args.n), "seed": seed if args.seed is not None else 7}
    elif args.suite == "twin_limit":
        kwargs = {"beta": args.beta}
        informational = args.beta == 0.0
    elif args.suite in SUITES and args.seed is not None:
        kwargs = {"seed": seed}
    results = run_suite(args.suite, **kwargs)
    failed = [r for r in results if not r.ok]
    for r in results:
        print(f"[{'ok' if r.ok else 'FAIL'}] {r.name}: {r.detail}")
    if failed and informational:
        print(f"note: {len(failed)} failing check(s) reported informationally (beta=0)")
        return 0
    return 1 if failed else 0


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        if args.command == "restore":
            return _cmd_restore(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        return _cmd_validate(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
