"""Seeded multi-trial experiments, the loss metrics, and result files."""

import csv
import dataclasses
import functools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from trimsgd import kernels
from trimsgd.dataio import canonical_dataset, desk_subset, iter_batches, load_dataset
from trimsgd.errors import AggregationError, ConfigError, DivergenceError
from trimsgd.models import build_model, canonical_arch, example_losses
from trimsgd.optimize import (
    LR_SCHEDULES,
    OPTIMIZERS,
    LrSchedule,
    TrainClock,
    make_optimizer,
    trimsgd_train_step,
)
from trimsgd.regularize import TRIM_SCHEDULES, TrimNoiseConfig
from trimsgd.rng import Rng

log = logging.getLogger(__name__)

RHO_GRID = [0.0, 0.025, 0.05, 0.075, 0.10, 0.15]
EPS_GRID = [0.0, 0.10, 0.20, 0.40]
# initial learning-rate grids searched per method family
SGD_ETA_GRID = [0.005, 0.01, 0.05, 0.1]
ADAPTIVE_ETA_GRID = [0.0001, 0.0005, 0.001, 0.005]

DEFAULT_METHODS = {
    "SGD": {"optimizer": "sgd", "lr_schedule": "sigmoid", "eta0": 0.01, "rho": 0.0, "eps": 0.0},
    "RMSprop": {"optimizer": "rmsprop", "lr_schedule": "constant", "eta0": 0.001, "rho": 0.0, "eps": 0.0},
    "Adam": {"optimizer": "adam", "lr_schedule": "constant", "eta0": 0.001, "rho": 0.0, "eps": 0.0},
    "Ours": {"optimizer": "sgd", "lr_schedule": "sigmoid", "eta0": 0.01, "rho": 0.1, "eps": 0.2,
             "trim_schedule": "linear"},
}

CSV_COLUMNS = ["trial", "epoch", "train_loss", "test_loss", "test_acc", "lr"]


@dataclass
class ExperimentConfig:
    dataset: str = "MNIST"
    arch: str = "NN2"
    optimizer: str = "sgd"
    eta0: float = 0.01
    lr_schedule: str = "sigmoid"
    lr_steepness: float = 10.0
    batch_size: int = 128
    epochs: int = 100
    momentum: float = 0.9
    weight_decay: float = 0.0
    rho: float = 0.0
    eps: float = 0.0
    trim_schedule: str = "linear"
    trials: int = 10
    seed: int = 0
    hidden: int = 256
    data_dir: str = "data"
    train_subset: int | None = None
    test_subset: int | None = None
    rho_grid: list = field(default_factory=lambda: list(RHO_GRID))
    eps_grid: list = field(default_factory=lambda: list(EPS_GRID))
    methods: dict = field(default_factory=lambda: json.loads(json.dumps(DEFAULT_METHODS)))
    hist_rho: float = 0.1
    hist_bins: int = 100
    checkpoint: str | None = None
    log_y: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        self.dataset = canonical_dataset(self.dataset)
        self.arch = canonical_arch(self.arch)
        self.optimizer = str(self.optimizer).lower()
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ConfigError(f"lr_schedule must be one of {LR_SCHEDULES}, got {self.lr_schedule!r}")
        if self.trim_schedule not in TRIM_SCHEDULES:
            raise ConfigError(f"trim_schedule must be one of {TRIM_SCHEDULES}, got {self.trim_schedule!r}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be at least 1, got {self.epochs}")
        if self.trials < 1:
            raise ConfigError(f"trials must be at least 1, got {self.trials}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be at least 2, got {self.batch_size}")
        if not self.eta0 > 0:
            raise ConfigError(f"eta0 must be positive, got {self.eta0}")
        TrimNoiseConfig(self.rho, self.eps, self.trim_schedule)
        for name, overrides in self.methods.items():
            unknown = set(overrides) - set(config_keys())
            if unknown:
                raise ConfigError(f"method {name!r} overrides unknown keys: {sorted(unknown)}")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)


def config_keys():
    return [f.name for f in dataclasses.fields(ExperimentConfig)]


def config_from_dict(data):
    unknown = set(data) - set(config_keys())
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return ExperimentConfig(**data)


def trial_seed(config, trial_index):
    """Seed of trial ``i`` is ``seed + i`` so any trial can be re-run alone."""
    return config.seed + trial_index


def _experiment_key(config):
    d = config.to_dict()
    for k in ("trials", "data_dir", "rho_grid", "eps_grid", "methods", "hist_rho", "hist_bins",
              "checkpoint", "log_y"):
        d.pop(k)
    return json.dumps(d, sort_keys=True)


@dataclass
class TrialResult:
    trial: int
    seed: int
    train_loss: list
    test_loss: list
    test_acc: list
    lr: list
    trim_loss: list
    train_size: int
    test_size: int
    wall_time: float = field(default=0.0, compare=False)
    config_key: str = ""


@dataclass
class AggregateResult:
    mean_test_loss: float
    min_test_loss: float
    mean_train_curve: list
    mean_test_curve: list
    mean_acc_curve: list
    window: int
    trials: int
    loss_scale: float
    config: dict = field(default_factory=dict)


@functools.lru_cache(maxsize=8)
def _load(name, split, data_dir, subset):
    data = load_dataset(name, split, data_dir)
    return desk_subset(data, subset)


def load_splits(config):
    train = _load(config.dataset, "train", str(config.data_dir), config.train_subset)
    test = _load(config.dataset, "test", str(config.data_dir), config.test_subset)
    return train, test


def run_trial(config, trial_index, train=None, test=None, model_out=None):
    """Train one seeded trial and evaluate after every epoch.

    Train loss is measured with the original labels over the whole training
    set; noise and trimming touch only the optimization steps.
    """
    if train is None or test is None:
        train, test = load_splits(config)
    if train.num_classes != test.num_classes:
        raise ConfigError("train and test class counts differ")
    seed = trial_seed(config, trial_index)
    started = time.perf_counter()
    model = build_model(config.arch, train.input_shape, train.num_classes, seed, config.hidden)
    steps = math.ceil(len(train) / config.batch_size)
    clock = TrainClock(config.epochs * steps)
    schedule = LrSchedule(config.lr_schedule, config.eta0, clock.total_iterations, config.lr_steepness)
    opt = make_optimizer(config.optimizer, model.params, momentum=config.momentum,
                         weight_decay=config.weight_decay)
    trim_noise = TrimNoiseConfig(config.rho, config.eps, config.trim_schedule)
    noise_rng = Rng(seed, "noise")

    result = TrialResult(trial_index, seed, [], [], [], [], [], len(train), len(test),
                         config_key=_experiment_key(config))
    for epoch in range(config.epochs):
        clock.epoch = epoch
        kept_loss, kept_n, lr = 0.0, 0, config.eta0
        for batch in iter_batches(train, config.batch_size, seed, epoch):
            report = trimsgd_train_step(model, batch, trim_noise, opt, schedule, clock, noise_rng)
            lr = report.lr
            if not math.isfinite(report.loss):
                raise DivergenceError(epoch + 1, lr)
            kept_loss += report.loss * report.kept
            kept_n += report.kept
        train_losses, _ = example_losses(model, train)
        test_losses, correct = example_losses(model, test)
        tr, te = float(train_losses.mean()), float(test_losses.mean())
        if not (math.isfinite(tr) and math.isfinite(te)):
            raise DivergenceError(epoch + 1, lr)
        result.train_loss.append(tr)
        result.test_loss.append(te)
        result.test_acc.append(float(correct.mean()))
        result.lr.append(lr)
        result.trim_loss.append(kept_loss / kept_n)
        log.info("trial %d epoch %d/%d train %.5f test %.5f acc %.4f lr %.5g", trial_index,
                 epoch + 1, config.epochs, tr, te, result.test_acc[-1], lr)
    result.wall_time = time.perf_counter() - started
    if model_out is not None:
        from trimsgd.models import save_checkpoint

        save_checkpoint(model, model_out)
    return result


def aggregate(results, loss_scale):
    """Mean test loss over the last ceil(E/10) epochs of all trials, and the
    minimum over every epoch and trial, both multiplied by ``loss_scale``."""
    if not results:
        raise AggregationError("nothing to aggregate")
    keys = {r.config_key for r in results}
    if len(keys) > 1:
        raise AggregationError("results come from different experiment configurations")
    lengths = {len(r.test_loss) for r in results}
    if len(lengths) > 1:
        raise AggregationError(f"trajectories have different lengths: {sorted(lengths)}")
    ordered = sorted(results, key=lambda r: r.trial)
    test = np.array([r.test_loss for r in ordered])
    train = np.array([r.train_loss for r in ordered])
    acc = np.array([r.test_acc for r in ordered])
    epochs = test.shape[1]
    window = math.ceil(epochs / 10)
    return AggregateResult(
        mean_test_loss=float(loss_scale * test[:, -window:].mean()),
        min_test_loss=float(loss_scale * test.min()),
        mean_train_curve=train.mean(axis=0).tolist(),
        mean_test_curve=test.mean(axis=0).tolist(),
        mean_acc_curve=acc.mean(axis=0).tolist(),
        window=window,
        trials=len(results),
        loss_scale=loss_scale,
    )


def _trial_job(args):
    config, index, model_out = args
    return run_trial(config, index, model_out=model_out)


def run_trials(config, jobs=1, model_dir=None):
    """All trials of one config, in trial order; ``jobs > 1`` uses worker processes.

    With ``model_dir`` each trial's final model is saved as ``model_trial<i>.tgm``.
    """
    jobs_args = []
    for i in range(config.trials):
        out = None if model_dir is None else str(Path(model_dir) / f"model_trial{i}.tgm")
        jobs_args.append((config, i, out))
    if jobs <= 1 or len(jobs_args) == 1:
        return [_trial_job(a) for a in jobs_args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_trial_job, jobs_args))


def run_experiment(config, jobs=1, model_dir=None):
    results = run_trials(config, jobs, model_dir)
    train, _ = load_splits(config)
    agg = aggregate(results, train.loss_scale)
    agg.config = config.to_dict()
    return results, agg


def sweep(config, rho_values, eps_values, jobs=1):
    """Grid over (rho, eps), rho outer and eps inner, every cell on the same base seed."""
    if not rho_values or not eps_values:
        raise ConfigError("sweep grids must be non-empty")
    cells = []
    for rho in rho_values:
        for eps in eps_values:
            cell = config.replace(rho=float(rho), eps=float(eps))
            results, agg = run_experiment(cell, jobs)
            cells.append((float(rho), float(eps), results, agg))
    return cells


def compare(config, methods=None, jobs=1):
    """Run every named method (config overrides) on the same seeds."""
    methods = config.methods if methods is None else methods
    out = []
    for name, overrides in methods.items():
        cell = config.replace(**overrides)
        results, agg = run_experiment(cell, jobs)
        out.append((name, results, agg))
    return out


# -- files ----------------------------------------------------------------------


def write_results_csv(results, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in sorted(results, key=lambda r: r.trial):
            for e in range(len(r.test_loss)):
                writer.writerow([r.trial, e + 1, repr(r.train_loss[e]), repr(r.test_loss[e]),
                                 repr(r.test_acc[e]), repr(r.lr[e])])


def read_results_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k in ("trial", "epoch") else float(v)) for k, v in row.items()} for row in rows]


def metadata(config, results, agg):
    return {
        "config": config.to_dict(),
        "seeds": [r.seed for r in sorted(results, key=lambda r: r.trial)],
        "train_size": results[0].train_size,
        "test_size": results[0].test_size,
        "backend": kernels.BACKEND,
        "loss_scale": agg.loss_scale,
        "window_epochs": agg.window,
        "mean_test_loss": agg.mean_test_loss,
        "min_test_loss": agg.min_test_loss,
        "final_test_acc": agg.mean_acc_curve[-1],
    }


def write_experiment(out_dir, config, results, agg, stem="results"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_results_csv(results, out / f"{stem}.csv")
    with open(out / f"{stem}.json", "w") as fh:
        json.dump(metadata(config, results, agg), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out / f"{stem}.csv"
