"""MNIST in IDX format (raw or gzip-compressed)."""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

DOWNLOAD_HINT = (
    "MNIST files not found. Place train-images-idx3-ubyte, train-labels-idx1-ubyte, "
    "t10k-images-idx3-ubyte and t10k-labels-idx1-ubyte (optionally .gz) in one directory "
    "and pass it with --data-dir or the WEAKRESET_DATA_DIR environment variable. "
    "They are published at http://yann.lecun.com/exdb/mnist/ and mirrored by several "
    "package registries (e.g. the npm package 'mnist-data')."
)


class IdxError(ValueError):
    pass


class BadMagicError(IdxError):
    pass


class TruncatedFileError(IdxError):
    pass


class CountMismatchError(IdxError):
    pass


@dataclass
class LabeledDataset:
    images: np.ndarray  # (n, 28, 28) uint8
    labels: np.ndarray  # (n,) uint8

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise CountMismatchError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self):
        return len(self.labels)

    def head(self, n: int | None) -> LabeledDataset:
        if n is None:
            return self
        return LabeledDataset(self.images[:n], self.labels[:n])


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def read_idx(path, magic: int) -> np.ndarray:
    """Parse one IDX file with big-endian header ``magic, dims...`` and uint8 payload."""
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise TruncatedFileError(f"{path}: truncated file: header needs 4 bytes, got {len(raw)}")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise BadMagicError(f"{path}: bad magic number 0x{found:08x}, expected 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedFileError(f"{path}: truncated file: header needs {header} bytes, got {len(raw)}")
    dims = struct.unpack(">" + "I" * ndim, raw[4:header])
    expected = header + int(np.prod(dims))
    if len(raw) < expected:
        raise TruncatedFileError(f"{path}: truncated file: expected {expected} bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8, count=expected - header, offset=header).reshape(dims)


def load_mnist(images_path, labels_path) -> LabeledDataset:
    images = read_idx(images_path, IMAGE_MAGIC)
    labels = read_idx(labels_path, LABEL_MAGIC)
    if len(images) != len(labels):
        raise CountMismatchError(f"{images_path} holds {len(images)} images but {labels_path} holds {len(labels)} labels")
    return LabeledDataset(images, labels)


def _find(directory: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx"), stem.replace("-idx", ".idx") + ".gz"):
        if (directory / name).exists():
            return directory / name
    raise FileNotFoundError(f"{directory / stem}: not found. {DOWNLOAD_HINT}")


def default_data_dir() -> Path:
    return Path(os.environ.get("WEAKRESET_DATA_DIR", "data/mnist"))


def load_mnist_dir(directory=None) -> tuple[LabeledDataset, LabeledDataset]:
    """Training and test splits from a directory holding the four canonical files."""
    directory = Path(directory) if directory is not None else default_data_dir()
    train = load_mnist(_find(directory, "train-images-idx3-ubyte"), _find(directory, "train-labels-idx1-ubyte"))
    test = load_mnist(_find(directory, "t10k-images-idx3-ubyte"), _find(directory, "t10k-labels-idx1-ubyte"))
    return train, test
