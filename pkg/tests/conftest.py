import os
from pathlib import Path

import numpy as np
import pytest

from trimsgd.dataio import write_idx

DATA_DIR = Path(os.environ.get("TRIMSGD_DATA_DIR", "/root/data"))
ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records one PASS/FAIL line for the summary."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def mnist_available():
    return (DATA_DIR / "mnist" / "train-images.idx3-ubyte").exists() or any(
        DATA_DIR.glob("**/train-images*idx3-ubyte*")
    )


@pytest.fixture(scope="session")
def data_dir():
    if not mnist_available():
        pytest.skip(f"MNIST not found under {DATA_DIR} (set TRIMSGD_DATA_DIR)")
    return str(DATA_DIR)


def write_fake_split(root, prefix, n, classes, rng, label_base=0):
    images = rng.integers(0, 256, size=(n, 28, 28), dtype=np.uint8)
    labels = (rng.integers(0, classes, size=n) + label_base).astype(np.uint8)
    write_idx(root / f"{prefix}-images-idx3-ubyte", images)
    write_idx(root / f"{prefix}-labels-idx1-ubyte", labels)
    return images, labels


@pytest.fixture
def fake_mnist(tmp_path):
    """A 200/80 example MNIST-layout directory of random pixels whose class
    is readable from the mean brightness, so small nets can learn it."""
    rng = np.random.default_rng(7)
    root = tmp_path / "mnist"
    root.mkdir()
    for prefix, n in (("train", 200), ("t10k", 80)):
        labels = rng.integers(0, 10, size=n).astype(np.uint8)
        images = rng.integers(0, 40, size=(n, 28, 28)).astype(np.uint8)
        images += (labels * 20)[:, None, None].astype(np.uint8)
        write_idx(root / f"{prefix}-images-idx3-ubyte", images)
        write_idx(root / f"{prefix}-labels-idx1-ubyte", labels)
    return tmp_path


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
