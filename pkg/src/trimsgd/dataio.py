"""IDX parsing and seeded mini-batching for MNIST, Fashion-MNIST and EMNIST-Letters."""

import gzip
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from trimsgd.errors import ConfigError, FormatError, LabelError, LengthError
from trimsgd.rng import Rng

IDX_LABELS = 0x00000801
IDX_IMAGES = 0x00000803

DATASETS = {
    "MNIST": {"classes": 10, "loss_scale": 100.0, "label_offset": 1, "transpose": False},
    "FashionMNIST": {"classes": 10, "loss_scale": 10.0, "label_offset": 1, "transpose": False},
    "EMNISTLetters": {"classes": 26, "loss_scale": 10.0, "label_offset": 0, "transpose": True},
}
_ALIASES = {
    "mnist": "MNIST",
    "fashionmnist": "FashionMNIST",
    "fashion-mnist": "FashionMNIST",
    "fashion_mnist": "FashionMNIST",
    "emnistletters": "EMNISTLetters",
    "emnist-letters": "EMNISTLetters",
    "emnist_letters": "EMNISTLetters",
    "emnist": "EMNISTLetters",
}

# candidate file names per split, tried in order under data_dir/<subdir>
_FILES = {
    ("MNIST", "train"): ["train-images-idx3-ubyte", "train-images.idx3-ubyte"],
    ("MNIST", "test"): ["t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"],
    ("EMNISTLetters", "train"): ["emnist-letters-train-images-idx3-ubyte"],
    ("EMNISTLetters", "test"): ["emnist-letters-test-images-idx3-ubyte"],
}
_FILES[("FashionMNIST", "train")] = _FILES[("MNIST", "train")]
_FILES[("FashionMNIST", "test")] = _FILES[("MNIST", "test")]
_SUBDIRS = {
    "MNIST": ["mnist", "MNIST", "."],
    "FashionMNIST": ["fashion-mnist", "fashion_mnist", "FashionMNIST", "."],
    "EMNISTLetters": ["emnist", "EMNIST", "emnist-letters", "."],
}


def canonical_dataset(name):
    key = str(name).lower()
    if key not in _ALIASES:
        raise ConfigError(f"unknown dataset {name!r}; expected one of {', '.join(DATASETS)}")
    return _ALIASES[key]


def parse_idx(data):
    """Parse an uncompressed IDX blob. Returns ``(dims, payload uint8 array)``."""
    if len(data) < 4:
        raise FormatError(f"IDX blob too short for a magic number ({len(data)} bytes)")
    (magic,) = struct.unpack_from(">I", data, 0)
    if magic not in (IDX_LABELS, IDX_IMAGES):
        raise FormatError(f"bad IDX magic 0x{magic:08x}; expected 0x00000801 or 0x00000803")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(data) < header:
        raise LengthError(f"IDX header needs {header} bytes, got {len(data)}")
    dims = list(struct.unpack_from(f">{ndim}I", data, 4))
    expected = math.prod(dims)
    actual = len(data) - header
    if actual != expected:
        raise LengthError(f"IDX payload length mismatch: expected {expected} bytes, got {actual}")
    return dims, np.frombuffer(data, dtype=np.uint8, offset=header)


def read_idx_file(path):
    """Read an IDX file, transparently gunzipping when it starts with 1F 8B."""
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return parse_idx(raw)


def normalize(raw):
    """uint8 pixels -> float64 in [0, 1], exactly ``value / 255``."""
    return np.asarray(raw, dtype=np.float64) / 255.0


@dataclass
class Dataset:
    name: str
    split: str
    pixels: np.ndarray  # uint8 [n, 1, 28, 28]
    labels: np.ndarray  # int64 in 1..L
    num_classes: int
    loss_scale: float

    def __post_init__(self):
        if len(self.pixels) != len(self.labels):
            raise LengthError(f"{len(self.pixels)} images but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 1 or self.labels.max() > self.num_classes):
            raise LabelError(f"labels outside 1..{self.num_classes}")

    def __len__(self):
        return len(self.labels)

    @property
    def images(self):
        return normalize(self.pixels)

    @property
    def input_shape(self):
        return tuple(self.pixels.shape[1:])

    def inputs(self, indices):
        return normalize(self.pixels[indices])

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.name, self.split, self.pixels[indices], self.labels[indices],
                       self.num_classes, self.loss_scale)


def dataset_from_idx(name, split, image_blob, label_blob):
    """Build a :class:`Dataset` from raw (decompressed) IDX image and label bytes."""
    name = canonical_dataset(name)
    info = DATASETS[name]
    idims, pixels = parse_idx(image_blob)
    ldims, raw_labels = parse_idx(label_blob)
    if len(idims) != 3:
        raise FormatError(f"image file must have 3 dimensions, got {idims}")
    if len(ldims) != 1:
        raise FormatError(f"label file must have 1 dimension, got {ldims}")
    pixels = pixels.reshape(idims[0], 1, idims[1], idims[2])
    if info["transpose"]:
        pixels = pixels.transpose(0, 1, 3, 2)
    labels = raw_labels.astype(np.int64) + info["label_offset"]
    return Dataset(name, split, np.ascontiguousarray(pixels), labels, info["classes"], info["loss_scale"])


def _find(data_dir, name, split):
    base = Path(data_dir)
    tried = []
    for sub in _SUBDIRS[name]:
        for stem in _FILES[(name, split)]:
            for suffix in ("", ".gz"):
                img = base / sub / (stem + suffix)
                tried.append(str(img))
                if img.exists():
                    lab_stem = stem.replace("images", "labels").replace("idx3", "idx1")
                    lab = base / sub / (lab_stem + suffix)
                    if not lab.exists():
                        raise FileNotFoundError(f"found {img} but not its labels {lab}")
                    return img, lab
    raise FileNotFoundError(f"no {name} {split} files under {base}; tried: {', '.join(tried[:6])} ...")


def load_dataset(name, split, data_dir):
    name = canonical_dataset(name)
    if split not in ("train", "test"):
        raise ConfigError(f"split must be train or test, got {split!r}")
    img, lab = _find(data_dir, name, split)

    def raw(path):
        blob = Path(path).read_bytes()
        return gzip.decompress(blob) if blob[:2] == b"\x1f\x8b" else blob

    return dataset_from_idx(name, split, raw(img), raw(lab))


# -- batching -----------------------------------------------------------------


@dataclass
class MiniBatch:
    indices: np.ndarray
    inputs: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.indices)


def batch_permutation(n, seed, epoch):
    """The epoch's visiting order: a Fisher-Yates permutation from stream (seed, "batches", epoch)."""
    return Rng(seed, "batches", epoch).permutation(n)


def iter_batches(dataset, batch_size, seed, epoch):
    """Yield the epoch's mini-batches lazily (same contents as :func:`make_batches`)."""
    if batch_size < 2:
        raise ConfigError(f"batch size must be at least 2 for trimming, got {batch_size}")
    perm = batch_permutation(len(dataset), seed, epoch)
    for start in range(0, len(perm), batch_size):
        idx = perm[start : start + batch_size]
        yield MiniBatch(idx, dataset.inputs(idx), dataset.labels[idx])


def make_batches(dataset, batch_size, seed, epoch):
    """Consecutive chunks of one seeded permutation; the last chunk may be short."""
    return list(iter_batches(dataset, batch_size, seed, epoch))


def desk_subset(dataset, n_sub):
    """First ``n_sub`` examples of the dataset shuffled with seed 0 (or the whole set)."""
    if n_sub is None or n_sub >= len(dataset):
        return dataset
    if n_sub < 1:
        raise ConfigError(f"subset size must be positive, got {n_sub}")
    perm = Rng(0, "subset").permutation(len(dataset))
    return dataset.subset(perm[:n_sub])


def write_idx(path, array):
    """Write a uint8 array as IDX (1-D labels or 3-D images). Handy for fixtures."""
    array = np.asarray(array, dtype=np.uint8)
    magic = {1: IDX_LABELS, 3: IDX_IMAGES}.get(array.ndim)
    if magic is None:
        raise FormatError(f"IDX writer supports 1 or 3 dimensions, got {array.ndim}")
    blob = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape) + array.tobytes()
    if str(path).endswith(".gz"):
        blob = gzip.compress(blob, mtime=0)
    Path(path).write_bytes(blob)
