import gzip
import struct

import numpy as np
import pytest

from weakreset.trainer.mnist import (
    BadMagicError,
    CountMismatchError,
    LabeledDataset,
    TruncatedFileError,
    load_mnist,
    load_mnist_dir,
)


def write_images(path, images, magic=0x803, truncate=0, opener=open):
    n, h, w = images.shape
    raw = struct.pack(">IIII", magic, n, h, w) + images.astype(np.uint8).tobytes()
    with opener(path, "wb") as fh:
        fh.write(raw[: len(raw) - truncate])


def write_labels(path, labels, magic=0x801, opener=open):
    with opener(path, "wb") as fh:
        fh.write(struct.pack(">II", magic, len(labels)) + np.asarray(labels, np.uint8).tobytes())


@pytest.fixture
def small(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(5, 28, 28), dtype=np.uint8)
    labels = rng.integers(0, 10, size=5, dtype=np.uint8)
    return tmp_path, images, labels


def test_roundtrip(small):
    d, images, labels = small
    write_images(d / "img", images)
    write_labels(d / "lab", labels)
    ds = load_mnist(d / "img", d / "lab")
    assert np.array_equal(ds.images, images) and np.array_equal(ds.labels, labels)
    assert len(ds) == 5 and len(ds.head(2)) == 2


def test_gzip(small):
    d, images, labels = small
    write_images(d / "img.gz", images, opener=gzip.open)
    write_labels(d / "lab.gz", labels, opener=gzip.open)
    assert np.array_equal(load_mnist(d / "img.gz", d / "lab.gz").images, images)


def test_bad_magic(small):
    d, images, labels = small
    write_images(d / "img", images, magic=0x801)
    write_labels(d / "lab", labels)
    with pytest.raises(BadMagicError, match="0x00000801"):
        load_mnist(d / "img", d / "lab")


def test_truncated_payload_names_byte_counts(small):
    d, images, labels = small
    write_images(d / "img", images, truncate=10)
    write_labels(d / "lab", labels)
    expected = 16 + 5 * 784
    with pytest.raises(TruncatedFileError, match=f"truncated file: expected {expected} bytes, got {expected - 10}"):
        load_mnist(d / "img", d / "lab")


def test_truncated_header(tmp_path):
    (tmp_path / "img").write_bytes(struct.pack(">II", 0x803, 5))
    with pytest.raises(TruncatedFileError, match="truncated file"):
        load_mnist(tmp_path / "img", tmp_path / "img")


def test_count_mismatch(small):
    d, images, labels = small
    write_images(d / "img", images)
    write_labels(d / "lab", labels[:4])
    with pytest.raises(CountMismatchError):
        load_mnist(d / "img", d / "lab")
    with pytest.raises(CountMismatchError):
        LabeledDataset(images, labels[:3])


def test_error_kinds_are_distinct():
    kinds = {BadMagicError, TruncatedFileError, CountMismatchError}
    assert len(kinds) == 3 and not any(issubclass(a, b) for a in kinds for b in kinds if a is not b)


def test_missing_directory_gives_hint(tmp_path):
    with pytest.raises(FileNotFoundError, match="WEAKRESET_DATA_DIR"):
        load_mnist_dir(tmp_path)


def test_canonical_files(mnist):
    train, test = mnist
    assert train.images.shape == (60000, 28, 28) and len(train.labels) == 60000
    assert test.images.shape == (10000, 28, 28) and len(test.labels) == 10000
    assert set(np.unique(train.labels)) == set(range(10))
