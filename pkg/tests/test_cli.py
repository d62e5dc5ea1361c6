import hashlib
import json
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from weakreset.cli import main, resolve, build_parser
from weakreset.simulate import read_trajectories

from conftest import mnist_dir


def run(args, environ=None):
    return main([str(a) for a in args], environ=environ or {})


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_devices_row_count(tmp_path):
    assert run(["devices", "-n", 64, "-p", 300, "--seed", 7, "--out-dir", tmp_path]) == 0
    lines = (tmp_path / "trajectories.csv").read_text().splitlines()
    assert len(lines) == 1 + 64 * 300
    assert read_trajectories(tmp_path / "trajectories.csv").w_total.shape == (64, 300)


def test_devices_no_noise_no_d2d_identical(tmp_path):
    assert run(["devices", "-n", 8, "-p", 200, "--seed", 1, "--no-noise", "--no-d2d", "--out-dir", tmp_path]) == 0
    w = read_trajectories(tmp_path / "trajectories.csv").w_total
    assert np.all(w == w[0])


def test_devices_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(["devices", "-n", 16, "-p", 500, "--seed", 3, "--out-dir", d]) == 0
    assert digest(a / "trajectories.csv") == digest(b / "trajectories.csv")


def test_devices_identical_across_thread_settings(tmp_path):
    hashes = []
    for threads in ("1", "3"):
        out = tmp_path / threads
        env = dict(os.environ, NUMBA_NUM_THREADS=threads, OMP_NUM_THREADS=threads, OPENBLAS_NUM_THREADS=threads)
        subprocess.run([sys.executable, "-m", "weakreset", "devices", "-n", "8", "-p", "400", "--seed", "5",
                        "--out-dir", str(out)], env=env, check=True, capture_output=True)
        hashes.append(digest(out / "trajectories.csv"))
    assert hashes[0] == hashes[1]


def test_stats_schema(tmp_path):
    assert run(["devices", "-n", 16, "-p", 2000, "--seed", 0, "--out-dir", tmp_path]) == 0
    assert run(["stats", tmp_path / "trajectories.csv", "--out-dir", tmp_path]) == 0
    report = json.loads((tmp_path / "stats.json").read_text())
    assert {"slope_low", "slope_high"} <= set(report["psd"])
    fit = report["delta_w_fit"]
    assert not fit["degenerate"] and {"aic_cauchy", "aic_gauss"} <= set(fit)
    assert "auto_cross_ratio" in report["correlation"]
    assert (tmp_path / "psd.csv").read_text().startswith("freq,psd\n")
    assert (tmp_path / "correlation.csv").read_text().startswith("lag,auto,cross\n")
    assert (tmp_path / "delta_w_hist.csv").read_text().startswith("delta_w,bin_count\n")


def test_stats_degenerate_for_noise_free_run(tmp_path):
    assert run(["devices", "-n", 4, "-p", 300, "--no-noise", "--no-d2d", "--out-dir", tmp_path]) == 0
    assert run(["stats", tmp_path / "trajectories.csv", "--out-dir", tmp_path]) == 0
    assert json.loads((tmp_path / "stats.json").read_text())["delta_w_fit"]["degenerate"] is True


def test_stats_malformed_input(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("device,t,w_mean\n0,x,1\n")
    assert run(["stats", bad, "--out-dir", tmp_path]) == 2
    assert "line" in capsys.readouterr().err


def test_exit_codes(tmp_path):
    assert run(["stats", tmp_path / "missing.csv", "--out-dir", tmp_path]) == 2
    assert run(["devices", "-n", 0, "--out-dir", tmp_path]) == 2
    assert run(["validate", "--fast", "--out-dir", tmp_path]) == 2
    bad = tmp_path / "c.json"
    bad.write_text(json.dumps({"bogus": 1}))
    assert run(["devices", "--config", bad, "--out-dir", tmp_path]) == 2
    bad.write_text(json.dumps({"m1.params": [0.0, -1.0]}))
    assert run(["devices", "--config", bad, "--out-dir", tmp_path]) == 2
    with pytest.raises(SystemExit) as exc:
        run(["devices", "--devices", "many"])
    assert exc.value.code == 2


def test_missing_dataset_gives_hint(tmp_path, capsys):
    assert run(["train", "--data-dir", tmp_path, "--out-dir", tmp_path]) == 2
    assert "WEAKRESET_DATA_DIR" in capsys.readouterr().err


def test_settings_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"devices": 5, "pulses": 11, "pulses_per_step": 2, "noise.alpha": 0.5}))
    args = build_parser().parse_args(["devices", "--config", str(cfg), "--pulses", "13"])
    s = resolve(args, {"WEAKRESET_PULSES_PER_STEP": "3", "WEAKRESET_NOISE__ALPHA": "0.1"})
    assert (s["devices"], s["pulses"], s["pulses_per_step"], s["noise.alpha"]) == (5, 13, 3, 0.1)
    s = resolve(build_parser().parse_args(["devices"]), {"WEAKRESET_CONFIG": str(cfg), "WEAKRESET_NO_NOISE": "yes"})
    assert s["devices"] == 5 and s["no_noise"] is True


def test_env_override_changes_output(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["devices", "-n", 2, "-p", 50, "--out-dir", a]) == 0
    assert run(["devices", "-n", 2, "-p", 50, "--out-dir", b], {"WEAKRESET_NOISE__ALPHA": "0"}) == 0
    assert digest(a / "trajectories.csv") != digest(b / "trajectories.csv")


def test_validate_twice_identical(tmp_path):
    reports = []
    for name in ("a", "b"):
        code = run(["validate", "--seed", 7, "--fast", "--out-dir", tmp_path / name])
        assert code in (0, 1)
        reports.append((tmp_path / name / "validate_report.txt").read_text())
    assert reports[0] == reports[1]
    for c in range(1, 8):
        if c != 5:
            assert f"criterion {c}:" in reports[0]


def test_train_smoke(mnist, tmp_path, capsys):
    start = time.perf_counter()
    code = run(["train", "--epochs", 1, "--limit", 1000, "--data-dir", mnist_dir(), "--out-dir", tmp_path])
    assert code == 0 and time.perf_counter() - start < 60
    lines = (tmp_path / "metrics_float_baseline.csv").read_text().splitlines()
    assert len(lines) == 2 and lines[1].split(",")[1] == "float_baseline"


def test_train_device_mode_snapshot(mnist, tmp_path):
    code = run(["train", "--mode", "device_full", "--epochs", 1, "--limit", 500, "--snapshot",
                "--data-dir", mnist_dir(), "--out-dir", tmp_path])
    assert code == 0
    assert (tmp_path / "metrics_device_full.csv").exists()
    assert (tmp_path / "snapshot_device_full_layer0.csv").exists()
