"""Label-noise injection, loss-rank example trimming and the trim schedule."""

import csv
import math
from dataclasses import dataclass

import numpy as np

from trimsgd import kernels
from trimsgd.errors import ClockError, ConfigError, InputError
from trimsgd.models import example_losses

TRIM_SCHEDULES = ("constant", "linear")


@dataclass(frozen=True)
class TrimNoiseConfig:
    rho: float = 0.0
    eps: float = 0.0
    schedule: str = "constant"

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError(f"noise ratio rho must lie in [0, 1], got {self.rho}")
        if not 0.0 <= self.eps < 1.0:
            raise ConfigError(f"trim ratio eps must lie in [0, 1), got {self.eps}")
        if self.schedule not in TRIM_SCHEDULES:
            raise ConfigError(f"trim schedule must be one of {TRIM_SCHEDULES}, got {self.schedule!r}")


@dataclass
class NoisedLabels:
    labels: np.ndarray
    flipped_mask: np.ndarray


def inject_label_noise(labels, rho, num_classes, rng):
    """Replace each label, with probability ``rho``, by a uniform draw from 1..L.

    Per example the stream yields one uniform coin; only when it lands below
    ``rho`` is a second draw (the class) consumed. The uniform class may equal
    the original one.
    """
    if not 0.0 <= rho <= 1.0:
        raise ConfigError(f"noise ratio rho must lie in [0, 1], got {rho}")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 1 or labels.max() > num_classes):
        raise ConfigError(f"labels must lie in 1..{num_classes}")
    noised, flipped = kernels.label_noise(rng.state, labels, float(rho), int(num_classes))
    return NoisedLabels(noised, flipped)


@dataclass
class TrimResult:
    kept_indices: np.ndarray
    removed_low: np.ndarray
    removed_high: np.ndarray
    k_per_side: int
    comparisons: int = 0


def trim_count(batch_size, eps):
    k = math.floor(eps * batch_size / 2)
    if 2 * k >= batch_size:
        k = (batch_size - 1) // 2
    return k


def trim_batch(losses, eps_effective):
    """Drop the ``floor(eps*B/2)`` lowest- and highest-loss examples.

    Ranking is by ascending loss, ties by ascending batch position.
    """
    losses = np.asarray(losses, dtype=np.float64)
    b = losses.size
    if b == 0:
        raise InputError("cannot trim an empty batch")
    if not 0.0 <= eps_effective < 1.0:
        raise ConfigError(f"trim ratio must lie in [0, 1), got {eps_effective}")
    k = trim_count(b, eps_effective)
    if k == 0:
        everything = np.arange(b, dtype=np.int64)
        return TrimResult(everything, everything[:0], everything[:0], 0, 0)
    order, comparisons = kernels.argsort_stable(losses)
    return TrimResult(
        np.sort(order[k : b - k]),
        order[:k].copy(),
        order[b - k :].copy(),
        k,
        comparisons,
    )


def effective_trim_ratio(config, theta):
    if not 0.0 <= theta <= 1.0:
        raise ClockError(f"training progress theta must lie in [0, 1], got {theta}")
    if config.schedule == "linear":
        return theta * config.eps
    return config.eps


@dataclass
class LossHistogram:
    bin_edges: np.ndarray
    counts_original: np.ndarray
    counts_noised: np.ndarray
    losses_original: np.ndarray
    losses_noised: np.ndarray


def _bin(values, edges):
    idx = np.searchsorted(edges, values, side="right") - 1
    idx = np.clip(idx, 0, len(edges) - 2)
    return np.bincount(idx, minlength=len(edges) - 1)


def loss_histogram(model, dataset, rho, bins=100, rng=None):
    """Per-example losses with original and once-noised labels on shared log bins.

    Bins span [smallest positive loss, largest loss] over both series; exact
    zeros fall into the first bin so both count vectors sum to ``len(dataset)``.
    """
    if bins < 10:
        raise ConfigError(f"need at least 10 bins, got {bins}")
    if rng is None:
        raise ConfigError("loss_histogram needs an explicit rng")
    clean, _ = example_losses(model, dataset)
    noised = inject_label_noise(dataset.labels, rho, dataset.num_classes, rng)
    noisy, _ = example_losses(model, dataset, noised.labels)
    both = np.concatenate([clean, noisy])
    positive = both[both > 0]
    if positive.size == 0:
        raise InputError("all example losses are zero; log-spaced bins are undefined")
    lo, hi = positive.min(), both.max()
    if hi <= lo:
        hi = lo * (1.0 + 1e-9)
    edges = np.logspace(np.log10(lo), np.log10(hi), bins + 1)
    edges[0], edges[-1] = lo, hi
    return LossHistogram(edges, _bin(clean, edges), _bin(noisy, edges), clean, noisy)


def write_histogram_csv(hist, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin_lo", "bin_hi", "count_original", "count_noised"])
        for i in range(len(hist.counts_original)):
            writer.writerow([repr(float(hist.bin_edges[i])), repr(float(hist.bin_edges[i + 1])),
                             int(hist.counts_original[i]), int(hist.counts_noised[i])])
