"""Training loop for the device-backed BNN and its ablations."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..array import SynapseArray
from ..device import CycleNoiseParams, w_mean
from ..rng import Purpose, SeedPolicy, uniforms
from ..variability import ConfigError, D2DConfig, median_device
from .bnn import BnnLinear, BnnModel, DeviceWeights, FloatWeights, backward_ste, softmax_cross_entropy
from .mnist import LabeledDataset
from .optim import Adam

MODES = ("float_baseline", "device_full", "device_no_noise", "device_no_d2d", "device_no_noise_no_d2d")
METRICS_HEADER = ["epoch", "mode", "train_loss", "test_accuracy", "total_pulses_applied"]


@dataclass(frozen=True)
class TrainerConfig:
    layers: tuple[int, ...] = (784, 512, 10)
    epochs: int = 10
    batch_size: int = 100
    lr: float = 0.03
    # multiplicative learning-rate factor applied after every epoch
    lr_decay: float = 0.6
    pulse_gain: float = 200.0
    w_clip: float = 1.0
    mode: str = "float_baseline"
    master_seed: int = 0
    # initial programming: each synapse receives a signed pulse count drawn uniformly from [-init_pulses, init_pulses]
    init_pulses: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    d2d: D2DConfig = field(default_factory=D2DConfig)
    noise: CycleNoiseParams = field(default_factory=CycleNoiseParams)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.pulse_gain > 0:
            raise ConfigError(f"pulse_gain must be positive, got {self.pulse_gain}")
        if not self.w_clip > 0:
            raise ConfigError(f"w_clip must be positive, got {self.w_clip}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError(f"lr_decay must lie in (0, 1], got {self.lr_decay}")
        if self.epochs < 1 or self.batch_size < 1 or self.init_pulses < 0:
            raise ConfigError("epochs and batch_size must be positive; init_pulses nonnegative")
        if len(self.layers) < 2 or any(int(n) < 1 for n in self.layers):
            raise ConfigError(f"bad architecture {self.layers}")

    def device_setup(self) -> tuple[D2DConfig, CycleNoiseParams]:
        """Device distributions and noise for this mode."""
        d2d, noise = self.d2d, self.noise
        if self.mode in ("device_no_noise", "device_no_noise_no_d2d"):
            d2d, noise = d2d.without_rtn(), noise.silenced()
        if self.mode in ("device_no_d2d", "device_no_noise_no_d2d"):
            d2d = d2d.at_medians()
        return d2d, noise

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name not in ("d2d", "noise")}
        out["layers"] = list(self.layers)
        out["noise"] = dataclasses.asdict(self.noise)
        out["d2d"] = self.d2d.to_flat()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> TrainerConfig:
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown trainer config keys: {sorted(unknown)}")
        if "layers" in d:
            d["layers"] = tuple(int(n) for n in d["layers"])
        if "noise" in d:
            try:
                d["noise"] = CycleNoiseParams(**d["noise"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad noise section: {exc}") from None
        if "d2d" in d:
            d["d2d"] = D2DConfig.from_flat(d["d2d"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> TrainerConfig:
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None


@dataclass
class EpochMetrics:
    epoch: int
    mode: str
    train_loss: float
    test_accuracy: float
    total_pulses_applied: int

    def row(self) -> list:
        return [self.epoch, self.mode, f"{self.train_loss:.6f}", f"{self.test_accuracy:.4f}", self.total_pulses_applied]


def binarize_inputs(images: np.ndarray, threshold: float) -> np.ndarray:
    x = images.reshape(len(images), -1)
    return np.where(x > threshold, 1.0, -1.0).astype(np.float32)


def init_pulse_counts(config: TrainerConfig, layer: int, shape) -> np.ndarray:
    """Signed programming pulses for every synapse of one layer (shared by all modes)."""
    seeds = SeedPolicy(config.master_seed)
    cells = np.arange(int(np.prod(shape)), dtype=np.int64)
    keys = seeds.keys(cells + _layer_offset(config, layer), Purpose.INIT)
    u = uniforms(keys, np.zeros_like(cells))
    k = np.floor(u * (2 * config.init_pulses + 1)).astype(np.int64) - config.init_pulses
    return k.reshape(shape)


def _layer_offset(config: TrainerConfig, layer: int) -> int:
    return int(sum(a * b for a, b in zip(config.layers[:layer], config.layers[1:layer + 1])))


def build_model(config: TrainerConfig) -> BnnModel:
    layers = []
    n_layers = len(config.layers) - 1
    d2d, noise = config.device_setup()
    seeds = SeedPolicy(config.master_seed)
    med = median_device(config.d2d).mean
    for i, (fan_in, fan_out) in enumerate(zip(config.layers, config.layers[1:])):
        k = init_pulse_counts(config, i, (fan_in, fan_out))
        if config.mode == "float_baseline":
            # the real weight a noise-free median pair would hold after the same programming pulses
            w0 = np.sign(k) * (w_mean(med, np.abs(k)) - w_mean(med, 0)) / math.log(10)
            weights = FloatWeights(np.clip(w0, -config.w_clip, config.w_clip), config.w_clip)
        else:
            arr = SynapseArray(fan_in, fan_out, d2d, noise, seeds, index_offset=_layer_offset(config, i))
            arr.apply_updates(k)
            weights = DeviceWeights(arr)
        layers.append(BnnLinear(weights, output=(i == n_layers - 1), w_clip=config.w_clip))
    return BnnModel(layers)


def evaluate(model: BnnModel, x: np.ndarray, labels: np.ndarray) -> float:
    return float((model.predict(x) == labels).mean())


def train(config: TrainerConfig, train_set: LabeledDataset, test_set: LabeledDataset,
          progress=None, model: BnnModel | None = None) -> tuple[list[EpochMetrics], BnnModel]:
    """Train for ``config.epochs`` epochs; returns one metrics record per epoch and the model."""
    threshold = float(train_set.images.mean())
    x_train = binarize_inputs(train_set.images, threshold)
    y_train = train_set.labels.astype(np.int64)
    x_test = binarize_inputs(test_set.images, threshold)
    y_test = test_set.labels.astype(np.int64)

    model = model or build_model(config)
    opt = Adam(config.lr, config.beta1, config.beta2, config.eps)
    seeds = SeedPolicy(config.master_seed)
    pulses = 0
    history = []
    n = len(x_train)
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        opt.lr = config.lr * config.lr_decay ** (epoch - 1)
        order = seeds.generator(0x5EED, epoch).permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            scores = model.forward(x_train[idx], train=True)
            loss, d_scores = softmax_cross_entropy(scores, y_train[idx])
            losses.append(loss)
            grads = backward_ste(model, d_scores)
            for li, (layer, g) in enumerate(zip(model.layers, grads)):
                pulses += layer.weights.update(opt.step(f"w{li}", g["w"]), config.pulse_gain)
                layer.beta += opt.step(f"beta{li}", g["beta"])
                if "gamma" in g:
                    layer.gamma += opt.step(f"gamma{li}", g["gamma"])
        acc = evaluate(model, x_test, y_test)
        m = EpochMetrics(epoch, config.mode, float(np.mean(losses)), acc, pulses)
        history.append(m)
        if progress is not None:
            progress(m, time.perf_counter() - t0)
    return history, model


def write_metrics(history: list[EpochMetrics], path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(METRICS_HEADER)
        for m in history:
            out.writerow(m.row())
