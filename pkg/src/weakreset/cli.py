"""Command-line front end.

Settings resolve in this order, later winning: built-in defaults, the flat
JSON file given by ``--config``, ``WEAKRESET_*`` environment variables, and
command-line flags. Every flag has a config key of the same name with
dashes turned into underscores (``--no-d2d`` is ``no_d2d``). Device
distributions use keys such as ``m1.kind`` / ``m1.params``; noise constants
``noise.alpha`` etc.; trainer fields ``trainer.lr`` etc. In environment
variables dots become double underscores: ``WEAKRESET_NOISE__ALPHA``.

Exit codes: 0 success, 1 runtime failure or failed criterion, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from .device import CycleNoiseParams, GapOverflowError
from .simulate import TrajectoryFormatError, read_trajectories, simulate_ensemble, write_trajectories
from .stats import DegenerateFitError, correlation, delta_w_fit, ensemble_psd, increment_histogram, pooled_increments
from .variability import FIELDS, ConfigError, D2DConfig

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
ENV_PREFIX = "WEAKRESET_"

DEFAULTS = {
    "seed": None,
    "out_dir": ".",
    "devices": 64,
    "pulses": 10_000,
    "pulses_per_step": 1,
    "no_noise": False,
    "no_d2d": False,
    "rtn_second_regime_only": False,
    "input": None,
    "low_band": None,
    "high_band": None,
    "welch_nperseg": None,
    "mode": "float_baseline",
    "epochs": None,
    "limit": None,
    "data_dir": None,
    "snapshot": False,
    "full": False,
}
NOISE_KEYS = tuple(f.name for f in dataclasses.fields(CycleNoiseParams))


class UsageError(Exception):
    pass


def _coerce(key: str, value):
    """Turn a string from the environment into the type the key expects."""
    if not isinstance(value, str):
        return value
    default = DEFAULTS.get(key)
    if isinstance(default, bool) or key in ("no_noise", "no_d2d", "rtn_second_regime_only", "snapshot", "full"):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off", ""):
            return False
        raise UsageError(f"{key}: expected a boolean, got {value!r}")
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        return value


def load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(data, dict) or any(isinstance(v, dict) for v in data.values()):
        raise UsageError(f"{path}: config must be a flat JSON object")
    return data


def env_settings(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for name, value in environ.items():
        if name.startswith(ENV_PREFIX):
            key = name[len(ENV_PREFIX):].lower().replace("__", ".")
            out[key] = _coerce(key, value)
    return out


def _known(key: str) -> bool:
    if key in DEFAULTS:
        return True
    head, _, tail = key.partition(".")
    if head == "noise":
        return tail in NOISE_KEYS
    if head == "trainer":
        return True  # checked when the trainer config is built
    return head in FIELDS and tail in ("kind", "params", "lower")


def resolve(args: argparse.Namespace, environ=None) -> dict:
    settings = dict(DEFAULTS)
    given = {k: v for k, v in vars(args).items() if k not in ("command", "handler")}
    environ = os.environ if environ is None else environ
    config_path = given.pop("config", None) or environ.get(ENV_PREFIX + "CONFIG")
    layers = [load_config_file(config_path)] if config_path else []
    layers.append({k: v for k, v in env_settings(environ).items() if k != "config"})
    layers.append(given)
    for layer in layers:
        for key, value in layer.items():
            if not _known(key):
                raise UsageError(f"unknown setting {key!r}")
            settings[key] = value
    return settings


def d2d_from(settings: dict) -> D2DConfig:
    flat = {k: v for k, v in settings.items() if k.partition(".")[0] in FIELDS}
    base = D2DConfig().to_flat()
    base.update(flat)
    return D2DConfig.from_flat(base)


def noise_from(settings: dict) -> CycleNoiseParams:
    kw = {k.partition(".")[2]: v for k, v in settings.items() if k.startswith("noise.")}
    try:
        noise = CycleNoiseParams(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad noise settings: {exc}") from None
    if settings.get("rtn_second_regime_only"):
        noise = dataclasses.replace(noise, rtn_second_regime_only=True)
    return noise


def _seed(settings: dict) -> int:
    seed = settings.get("seed")
    if seed is None:
        return 0
    try:
        return int(seed)
    except (TypeError, ValueError):
        raise UsageError(f"seed must be an integer, got {seed!r}") from None


def _out_dir(settings: dict) -> Path:
    out = Path(settings["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory not writable: {out}")
    return out


def cmd_devices(settings: dict) -> int:
    n, p = int(settings["devices"]), int(settings["pulses"])
    if n < 1 or p < 1:
        raise UsageError("--devices and --pulses must be at least 1")
    config, noise = d2d_from(settings), noise_from(settings)
    if settings["no_noise"]:
        config, noise = config.without_rtn(), noise.silenced()
    if settings["no_d2d"]:
        config = config.at_medians()
    traj = simulate_ensemble(n, p, _seed(settings), config, noise, int(settings["pulses_per_step"]))
    path = _out_dir(settings) / "trajectories.csv"
    write_trajectories(traj, path)
    print(path)
    return EXIT_OK


def _band(value):
    if value is None:
        return None
    if isinstance(value, str):
        value = [float(v) for v in value.split(",")]
    if len(value) != 2 or not 0 < value[0] < value[1]:
        raise UsageError(f"a band is two increasing positive frequencies, got {value!r}")
    return tuple(float(v) for v in value)


def stats_report(w: np.ndarray, low_band=None, high_band=None, welch_nperseg=None) -> tuple[dict, dict]:
    """JSON-ready summary plus the curves behind it."""
    psd = ensemble_psd(w, low_band, high_band, welch_nperseg=welch_nperseg)
    report = {"n_devices": int(w.shape[0]), "n_pulses": int(w.shape[1]), "psd": psd.summary()}
    try:
        report["delta_w_fit"] = {"degenerate": False, **delta_w_fit(w).summary()}
    except DegenerateFitError as exc:
        report["delta_w_fit"] = {"degenerate": True, "reason": str(exc)}
    curves = {"psd": (psd.frequencies, psd.psd)}
    if w.shape[0] >= 2:
        corr = correlation(w)
        report["correlation"] = {"auto0": float(corr.auto[0]), "cross0": float(corr.cross[0]), "auto_cross_ratio": corr.ratio0}
        curves["correlation"] = (corr.lags, corr.auto, corr.cross)
    else:
        corr = correlation(w, "auto")
        report["correlation"] = {"auto0": float(corr.auto[0])}
        curves["correlation"] = (corr.lags, corr.auto, np.full_like(corr.auto, np.nan))
    d = pooled_increments(w)
    if np.ptp(d) > 0:
        curves["hist"] = increment_histogram(d)
    else:
        curves["hist"] = (np.array([d[0]]), np.array([d.size]))
    return report, curves


def _write_columns(path: Path, header: str, columns) -> None:
    table = np.column_stack(columns)
    np.savetxt(path, table, delimiter=",", header=header, comments="", fmt="%.17g")


def cmd_stats(settings: dict) -> int:
    src = settings.get("input")
    if not src:
        raise UsageError("stats needs a trajectory CSV (positional argument or 'input' key)")
    try:
        traj = read_trajectories(src)
    except FileNotFoundError:
        raise UsageError(f"trajectory file not found: {src}") from None
    report, curves = stats_report(traj.w_total, _band(settings["low_band"]), _band(settings["high_band"]),
                                  settings["welch_nperseg"])
    out = _out_dir(settings)
    (out / "stats.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    _write_columns(out / "psd.csv", "freq,psd", curves["psd"])
    _write_columns(out / "correlation.csv", "lag,auto,cross", curves["correlation"])
    centers, counts = curves["hist"]
    with open(out / "delta_w_hist.csv", "w") as fh:
        fh.write("delta_w,bin_count\n")
        for c, k in zip(centers, counts):
            fh.write(f"{float(c)!r},{int(k)}\n")
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def trainer_config_from(settings: dict, mode: str):
    from .trainer import TrainerConfig

    kw = {k.partition(".")[2]: v for k, v in settings.items() if k.startswith("trainer.")}
    kw["mode"] = mode
    kw["master_seed"] = _seed(settings)
    if settings.get("epochs") is not None:
        kw["epochs"] = int(settings["epochs"])
    kw["d2d"] = d2d_from(settings).to_flat()
    kw["noise"] = dataclasses.asdict(noise_from(settings))
    return TrainerConfig.from_dict(kw)


def _load_data(settings: dict):
    from .trainer.mnist import DOWNLOAD_HINT, IdxError, load_mnist_dir

    try:
        return load_mnist_dir(settings.get("data_dir"))
    except FileNotFoundError as exc:
        raise UsageError(str(exc) if DOWNLOAD_HINT in str(exc) else f"{exc}. {DOWNLOAD_HINT}") from None
    except IdxError as exc:
        raise UsageError(f"corrupt dataset: {exc}") from None


def cmd_train(settings: dict) -> int:
    from .trainer import MODES, train, write_metrics

    mode = settings["mode"]
    modes = MODES if mode == "all" else (mode,)
    configs = [trainer_config_from(settings, m) for m in modes]
    train_set, test_set = _load_data(settings)
    limit = settings.get("limit")
    if limit is not None:
        train_set, test_set = train_set.head(int(limit)), test_set.head(int(limit))
    out = _out_dir(settings)

    def progress(m, seconds):
        print(",".join(str(v) for v in m.row()), flush=True)
        print(f"  epoch {m.epoch} took {seconds:.1f} s", file=sys.stderr, flush=True)

    for cfg in configs:
        history, model = train(cfg, train_set, test_set, progress=progress)
        write_metrics(history, out / f"metrics_{cfg.mode}.csv")
        if settings.get("snapshot") and cfg.mode != "float_baseline":
            for i, layer in enumerate(model.layers):
                layer.weights.array.write_snapshot(out / f"snapshot_{cfg.mode}_layer{i}.csv")
    return EXIT_OK


def cmd_validate(settings: dict) -> int:
    from . import validate

    if settings.get("seed") is None:
        raise UsageError("validate requires --seed")
    full = bool(settings.get("full"))
    out = _out_dir(settings)
    if full:
        _load_data(settings)  # fail early with the download hint
    checks = validate.run(_seed(settings), full=full, data_dir=settings.get("data_dir"), out_dir=out)
    report = validate.format_report(checks)
    (out / "validate_report.txt").write_text(report)
    sys.stdout.write(report)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False, argument_default=S)
    common.add_argument("--seed", type=int, help="master seed (default 0; mandatory for validate)")
    common.add_argument("--out-dir", help="directory for output files (default: current directory)")
    common.add_argument("--config", help="flat JSON file with settings")

    parser = argparse.ArgumentParser(prog="weakreset", description="Weak-RESET RRAM simulator and BNN trainer.",
                                     parents=[common], argument_default=S)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("devices", parents=[common], argument_default=S, help="simulate a device ensemble")
    p.add_argument("-n", "--devices", type=int, help="number of devices (default 64)")
    p.add_argument("-p", "--pulses", type=int, help="pulses per device (default 10000)")
    p.add_argument("--pulses-per-step", type=int, help="pulses applied between readings (default 1)")
    p.add_argument("--no-noise", action="store_true", help="disable telegraph and pink noise")
    p.add_argument("--no-d2d", action="store_true", help="every device at the distribution medians")
    p.add_argument("--rtn-second-regime-only", action="store_true", help="telegraph noise only after t_star")
    p.set_defaults(handler=cmd_devices)

    p = sub.add_parser("stats", parents=[common], argument_default=S, help="ensemble statistics of a trajectory CSV")
    p.add_argument("input", nargs="?", help="trajectory CSV written by 'devices'")
    p.add_argument("--low-band", help="low fit band as 'f1,f2' in cycles per pulse")
    p.add_argument("--high-band", help="high fit band as 'f1,f2'")
    p.add_argument("--welch-nperseg", type=int, help="average Welch segments of this length")
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser("train", parents=[common], argument_default=S, help="train the BNN on MNIST")
    p.add_argument("--mode", choices=["float_baseline", "device_full", "device_no_noise", "device_no_d2d",
                                      "device_no_noise_no_d2d", "all"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--limit", type=int, help="use only the first N training and test images")
    p.add_argument("--data-dir", help="directory with the MNIST IDX files")
    p.add_argument("--snapshot", action="store_true", help="write array snapshots after training")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("validate", parents=[common], argument_default=S, help="run the acceptance battery")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--fast", dest="full", action="store_false", help="statistics only (default)")
    g.add_argument("--full", dest="full", action="store_true", help="also run the MNIST ablation")
    p.add_argument("--data-dir", help="directory with the MNIST IDX files")
    p.set_defaults(handler=cmd_validate)
    return parser


def main(argv=None, environ=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = args.handler
    try:
        settings = resolve(args, environ)
        return handler(settings)
    except (UsageError, ConfigError, TrajectoryFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GapOverflowError, RuntimeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
