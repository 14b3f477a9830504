import gzip

import numpy as np
import pytest

from trimsgd.dataio import (
    Dataset,
    batch_permutation,
    dataset_from_idx,
    desk_subset,
    iter_batches,
    load_dataset,
    make_batches,
    normalize,
    parse_idx,
    read_idx_file,
    write_idx,
)
from trimsgd.errors import ConfigError, FormatError, LengthError


def test_hand_assembled_label_file():
    dims, payload = parse_idx(bytes([0, 0, 8, 1, 0, 0, 0, 3, 5, 2, 9]))
    assert dims == [3] and payload.tolist() == [5, 2, 9]


def test_image_header():
    blob = bytes([0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 2]) + bytes([1, 2, 3, 4])
    dims, payload = parse_idx(blob)
    assert dims == [2, 1, 2] and payload.tolist() == [1, 2, 3, 4]


def test_bad_magic_and_lengths():
    with pytest.raises(FormatError, match="0x00000899"):
        parse_idx(bytes([0, 0, 8, 0x99, 0, 0, 0, 0]))
    with pytest.raises(LengthError):
        parse_idx(bytes([0, 0, 8, 1, 0, 0, 0, 3, 5, 2]))
    with pytest.raises(LengthError):
        parse_idx(bytes([0, 0, 8, 1, 0, 0, 0, 3, 5, 2, 9, 9]))
    with pytest.raises(LengthError):
        parse_idx(bytes([0, 0, 8, 3, 0, 0]))


def test_gzip_is_transparent(tmp_path):
    arr = np.arange(12, dtype=np.uint8)
    write_idx(tmp_path / "a.gz", arr)
    assert read_idx_file(tmp_path / "a.gz")[1].tolist() == arr.tolist()
    assert gzip.decompress((tmp_path / "a.gz").read_bytes())[:4] == b"\x00\x00\x08\x01"


def test_normalize_values():
    assert normalize(np.array([0, 255, 128], dtype=np.uint8)).tolist() == [0.0, 1.0, 128 / 255]


def _blobs(n, classes, base):
    rng = np.random.default_rng(n)
    images = rng.integers(0, 256, size=(n, 28, 28), dtype=np.uint8)
    labels = rng.integers(base, base + classes, size=n).astype(np.uint8)
    hdr_i = b"\x00\x00\x08\x03" + np.array([n, 28, 28], ">u4").tobytes()
    hdr_l = b"\x00\x00\x08\x01" + np.array([n], ">u4").tobytes()
    return images, labels, hdr_i + images.tobytes(), hdr_l + labels.tobytes()


def test_dataset_label_conventions():
    images, labels, bi, bl = _blobs(30, 10, 0)
    d = dataset_from_idx("MNIST", "train", bi, bl)
    assert d.num_classes == 10 and d.loss_scale == 100.0
    assert np.array_equal(d.labels, labels + 1)
    assert d.input_shape == (1, 28, 28)
    f = dataset_from_idx("fashion-mnist", "test", bi, bl)
    assert f.loss_scale == 10.0
    images, labels, bi, bl = _blobs(30, 26, 1)
    e = dataset_from_idx("EMNIST", "train", bi, bl)
    assert e.num_classes == 26 and np.array_equal(e.labels, labels)
    # EMNIST images are stored transposed
    assert np.array_equal(e.pixels[:, 0], images.transpose(0, 2, 1))


def test_dataset_rejects_mismatches():
    _, _, bi, _ = _blobs(30, 10, 0)
    _, _, _, bl = _blobs(31, 10, 0)
    with pytest.raises(LengthError):
        dataset_from_idx("MNIST", "train", bi, bl)
    with pytest.raises(FormatError):
        dataset_from_idx("MNIST", "train", bl, bl)


def test_load_dataset_finds_files(tmp_path):
    root = tmp_path / "emnist"
    root.mkdir()
    write_idx(root / "emnist-letters-train-images-idx3-ubyte.gz", np.zeros((5, 28, 28)))
    write_idx(root / "emnist-letters-train-labels-idx1-ubyte.gz", np.array([1, 2, 3, 26, 5]))
    d = load_dataset("EMNIST", "train", tmp_path)
    assert len(d) == 5 and d.labels.tolist() == [1, 2, 3, 26, 5]
    with pytest.raises(FileNotFoundError):
        load_dataset("MNIST", "train", tmp_path)


def _toy(n):
    return Dataset("MNIST", "train", np.zeros((n, 1, 28, 28), np.uint8), np.ones(n, np.int64), 10, 100.0)


def test_batch_sizes():
    assert [len(b) for b in make_batches(_toy(5), 2, 0, 0)] == [2, 2, 1]
    with pytest.raises(ConfigError):
        make_batches(_toy(5), 1, 0, 0)


def test_permutation_determinism_and_bijection():
    assert np.array_equal(batch_permutation(50, 3, 7), batch_permutation(50, 3, 7))
    assert not np.array_equal(batch_permutation(50, 3, 7), batch_permutation(50, 3, 8))
    for epoch in range(1000):
        idx = np.concatenate([b.indices for b in iter_batches(_toy(37), 8, 1, epoch)])
        assert np.array_equal(np.sort(idx), np.arange(37))


def test_desk_subset():
    d = _toy(100)
    assert desk_subset(d, None) is d
    sub = desk_subset(d, 10)
    assert len(sub) == 10
    with pytest.raises(ConfigError):
        desk_subset(d, 0)


def test_real_mnist_counts(data_dir):
    train, test = load_dataset("MNIST", "train", data_dir), load_dataset("MNIST", "test", data_dir)
    assert (len(train), len(test), train.num_classes) == (60000, 10000, 10)
    assert train.pixels.shape == (60000, 1, 28, 28)
    x = train.images
    assert x.min() >= 0.0 and x.max() <= 1.0
    assert np.bincount(train.labels, minlength=11)[1:].tolist() == [5923, 6742, 5958, 6131, 5842, 5421,
                                                                    5918, 6265, 5851, 5949]
