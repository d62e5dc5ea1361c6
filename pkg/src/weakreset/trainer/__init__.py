from .bnn import BnnLinear, BnnModel, backward_ste, binarize_activation, softmax_cross_entropy
from .mnist import LabeledDataset, load_mnist, load_mnist_dir
from .optim import Adam, MomentState, moment_update, quantize_update
from .train import MODES, EpochMetrics, TrainerConfig, build_model, train, write_metrics

__all__ = [
    "Adam", "BnnLinear", "BnnModel", "EpochMetrics", "LabeledDataset", "MODES", "MomentState",
    "TrainerConfig", "backward_ste", "binarize_activation", "build_model", "load_mnist",
    "load_mnist_dir", "moment_update", "quantize_update", "softmax_cross_entropy", "train", "write_metrics",
]
