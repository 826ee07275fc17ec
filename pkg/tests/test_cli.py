"""Command line behavior: outputs, exit codes, manifest replay."""

import filecmp
import os

import numpy as np

from clearfit import gridio
from clearfit.cli import main, manifest_argv

RESTORE_FILES = ("manifest.txt", "y.f64", "estimate.f64", "estimate.pgm",
                 "refit.f64", "refit.pgm", "residual.f64", "restore.png")


def _restore_args(out, extra=()):
    return ["restore", "--estimator", "soft", "--lambda", "25", "--sigma", "10",
            "--seed", "4", "--in", "phantom:squares_2d:16", "--out", str(out),
            *extra]


def test_restore_writes_all_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(_restore_args(out)) == 0
    for name in RESTORE_FILES:
        assert (out / name).exists(), name
    printed = capsys.readouterr().out
    assert "rho=" in printed and "refit:" in printed
    man = gridio.read_manifest(out / "manifest.txt")
    assert man["command"] == "restore"
    assert man["estimator"] == "soft"
    assert "wall_time_s" in man
    # scoring against the phantom is included since the scene is known
    assert float(man["mse_refit"]) > 0


def test_restore_replay_is_byte_identical(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert main(_restore_args(a)) == 0
    man = gridio.read_manifest(a / "manifest.txt")
    argv = manifest_argv(man)
    argv[argv.index("--out") + 1] = str(b)
    assert main(argv) == 0
    for name in RESTORE_FILES:
        if name == "manifest.txt":
            continue
        assert filecmp.cmp(a / name, b / name, shallow=False), name
    # manifests agree except for the run-local fields
    ma = gridio.read_manifest(a / "manifest.txt")
    mb = gridio.read_manifest(b / "manifest.txt")
    for key in ma:
        if key not in ("out", "wall_time_s"):
            assert ma[key] == mb[key], key


def test_residual_consistency(tmp_path):
    out = tmp_path / "run"
    assert main(_restore_args(out)) == 0
    y = gridio.read_f64(out / "y.f64")
    est = gridio.read_f64(out / "estimate.f64")
    resid = gridio.read_f64(out / "residual.f64")
    assert np.array_equal(resid, y - est)  # denoising: Phi = Id


def test_sweep_outputs_and_parallel_determinism(tmp_path):
    base = ["sweep", "--estimator", "soft", "--sigma", "10", "--seed", "4",
            "--in", "phantom:squares_2d:16", "--grid", "10,30,60"]
    a = tmp_path / "serial"
    b = tmp_path / "workers"
    assert main(base + ["--out", str(a)]) == 0
    assert main(base + ["--out", str(b), "--parallel", "3"]) == 0
    for name in ("sweep.csv", "sweep.png"):
        assert filecmp.cmp(a / name, b / name, shallow=False), name
    lines = (a / "sweep.csv").read_text().strip().split("\n")
    assert len(lines) == 4
    man = gridio.read_manifest(a / "manifest.txt")
    assert man["grid"] == "10,30,60"
    assert "best_param_refit" in man


def test_sweep_replay_from_manifest(tmp_path):
    first = tmp_path / "first"
    again = tmp_path / "again"
    assert main(["sweep", "--estimator", "soft", "--sigma", "10", "--seed", "4",
                 "--in", "phantom:squares_2d:16", "--grid", "15:60:3",
                 "--out", str(first)]) == 0
    argv = manifest_argv(gridio.read_manifest(first / "manifest.txt"))
    argv[argv.index("--out") + 1] = str(again)
    assert main(argv) == 0
    assert filecmp.cmp(first / "sweep.csv", again / "sweep.csv", shallow=False)


def test_validate_prints_status_lines(capsys):
    assert main(["validate", "projector"]) == 0
    out = capsys.readouterr().out
    assert out.count("[ok]") >= 2
    assert "[FAIL]" not in out


def test_usage_errors_exit_two(tmp_path, capsys):
    # unknown estimator is rejected by the parser
    assert main(_restore_args(tmp_path, ())[:2] + ["bogus"] +
                _restore_args(tmp_path)[3:]) == 2
    # missing the regularization weight
    argv = _restore_args(tmp_path)
    argv.remove("--lambda")
    argv.remove("25")
    assert main(argv) == 2
    # unknown phantom name
    bad = _restore_args(tmp_path)
    bad[bad.index("phantom:squares_2d:16")] = "phantom:nope:16"
    assert main(bad) == 2
    # truth together with a phantom input
    assert main(_restore_args(tmp_path, ("--truth", "x.pgm"))) == 2
    capsys.readouterr()


def test_missing_input_exits_three(tmp_path):
    argv = _restore_args(tmp_path)
    argv[argv.index("phantom:squares_2d:16")] = str(tmp_path / "absent.pgm")
    assert main(argv) == 3


def test_env_seed_fallback(tmp_path):
    flagged = tmp_path / "flag"
    env = tmp_path / "env"
    assert main(_restore_args(flagged)) == 0
    old = os.environ.get("CLEAR_SEED")
    os.environ["CLEAR_SEED"] = "4"
    try:
        argv = _restore_args(env)
        i = argv.index("--seed")
        del argv[i:i + 2]
        assert main(argv) == 0
    finally:
        if old is None:
            del os.environ["CLEAR_SEED"]
        else:
            os.environ["CLEAR_SEED"] = old
    assert filecmp.cmp(flagged / "refit.f64", env / "refit.f64", shallow=False)


def test_truth_mode_scores_against_file(tmp_path):
    from clearfit.experiments import DegradationSpec, degrade
    from clearfit.phantoms import squares_2d
    x0 = squares_2d(16)
    spec = DegradationSpec(task="denoise", noise_sigma=10.0, mask_fraction=0.25,
                           blur_radius=2, blur_width=1.0, seed=4)
    y, _ = degrade(x0, spec)
    obs = tmp_path / "obs.f64"
    truth = tmp_path / "truth.f64"
    gridio.write_f64(obs, y)
    gridio.write_f64(truth, x0)
    out = tmp_path / "run"
    argv = ["restore", "--estimator", "soft", "--lambda", "25", "--sigma", "10",
            "--seed", "4", "--in", str(obs), "--truth", str(truth), "--out", str(out)]
    assert main(argv) == 0
    # the observation is used as-is, not re-degraded
    assert np.array_equal(gridio.read_f64(out / "y.f64"), y)
    man = gridio.read_manifest(out / "manifest.txt")
    direct = main(_restore_args(tmp_path / "direct"))
    assert direct == 0
    man2 = gridio.read_manifest(tmp_path / "direct" / "manifest.txt")
    assert man["mse_refit"] == man2["mse_refit"]
