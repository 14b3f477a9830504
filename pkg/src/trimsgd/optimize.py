"""Update rules, learning-rate schedules and the label-noised trimmed SGD step."""

import math
from dataclasses import dataclass, field

import numpy as np

from trimsgd import nn
from trimsgd.errors import ClockError, ConfigError, DimensionError, InvariantError
from trimsgd.models import backward, forward_cached
from trimsgd.regularize import effective_trim_ratio, inject_label_noise, trim_batch

OPTIMIZERS = ("sgd", "rmsprop", "adam")
LR_SCHEDULES = ("constant", "sigmoid")


@dataclass
class OptimizerState:
    kind: str
    buffers: list
    momentum: float = 0.9
    rms_decay: float = 0.95
    betas: tuple = (0.9, 0.999)
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0


def make_optimizer(kind, params, momentum=0.9, rms_decay=0.95, betas=(0.9, 0.999),
                   epsilon=1e-8, weight_decay=0.0):
    kind = str(kind).lower()
    if kind not in OPTIMIZERS:
        raise ConfigError(f"unknown optimizer {kind!r}; expected one of {OPTIMIZERS}")
    if weight_decay < 0:
        raise ConfigError(f"weight decay must be non-negative, got {weight_decay}")
    n = 2 if kind == "adam" else 1
    buffers = [np.zeros_like(params.data) for _ in range(n)]
    return OptimizerState(kind, buffers, momentum, rms_decay, tuple(betas), epsilon, weight_decay)


def _checked(params, grads, state):
    if grads.data.shape != params.data.shape:
        raise DimensionError(f"gradient length {grads.data.size} != parameter length {params.data.size}")
    for buf in state.buffers:
        if buf.shape != params.data.shape:
            raise DimensionError("optimizer buffers do not match the parameter vector")
    g = grads.data
    if state.weight_decay > 0:
        g = g + state.weight_decay * params.data
    return g


def sgd_step(params, grads, state, lr):
    """Heavy-ball SGD: ``v = mu*v + g``; ``w -= lr*v``. ``mu = 0`` is plain SGD."""
    g = _checked(params, grads, state)
    v = state.buffers[0]
    v *= state.momentum
    v += g
    params.data -= lr * v
    state.step += 1
    params.bump()
    return params


def rmsprop_step(params, grads, state, lr):
    g = _checked(params, grads, state)
    s = state.buffers[0]
    s *= state.rms_decay
    s += (1.0 - state.rms_decay) * (g * g)
    params.data -= lr * g / (np.sqrt(s) + state.epsilon)
    state.step += 1
    params.bump()
    return params


def adam_step(params, grads, state, lr):
    g = _checked(params, grads, state)
    b1, b2 = state.betas
    m, v = state.buffers
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    state.step += 1
    m_hat = m / (1.0 - b1**state.step)
    v_hat = v / (1.0 - b2**state.step)
    params.data -= lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    params.bump()
    return params


_STEPS = {"sgd": sgd_step, "rmsprop": rmsprop_step, "adam": adam_step}


def optimizer_step(params, grads, state, lr):
    return _STEPS[state.kind](params, grads, state, lr)


# -- schedules ----------------------------------------------------------------


@dataclass(frozen=True)
class LrSchedule:
    kind: str
    eta0: float
    total_iterations: int
    steepness: float = 10.0

    def __post_init__(self):
        if self.kind not in LR_SCHEDULES:
            raise ConfigError(f"learning-rate schedule must be one of {LR_SCHEDULES}, got {self.kind!r}")
        if not self.eta0 > 0:
            raise ConfigError(f"initial learning rate must be positive, got {self.eta0}")
        if self.total_iterations < 1:
            raise ConfigError("schedule needs at least one iteration")


@dataclass
class TrainClock:
    total_iterations: int
    iteration: int = 0
    epoch: int = 0

    @property
    def theta(self):
        return self.iteration / self.total_iterations

    def advance(self):
        if self.iteration >= self.total_iterations:
            raise ClockError(f"clock already at its end ({self.total_iterations} iterations)")
        self.iteration += 1


def lr_at(schedule, clock):
    """Learning rate at the clock's progress ``theta`` in [0, 1].

    The sigmoid schedule decays logistically from ``eta0`` to ``eta0/100``
    centred at ``theta = 1/2``; the two endpoints are returned exactly.
    """
    theta = clock.theta if isinstance(clock, TrainClock) else float(clock)
    if not 0.0 <= theta <= 1.0:
        raise ClockError(f"training progress theta must lie in [0, 1], got {theta}")
    if schedule.kind == "constant" or theta == 0.0:
        return schedule.eta0
    eta_end = schedule.eta0 / 100.0
    if theta == 1.0:
        return eta_end
    x = schedule.steepness * (theta - 0.5)
    weight = 1.0 / (1.0 + math.exp(x))
    return eta_end + (schedule.eta0 - eta_end) * weight


# -- training steps -----------------------------------------------------------


@dataclass
class StepReport:
    loss: float
    kept: int
    lr: float
    eps_effective: float = 0.0
    batch_loss: float = 0.0
    flipped: int = 0
    trim: object = field(default=None, repr=False)


def sgd_train_step(model, batch, opt_state, schedule, clock):
    """Plain mini-batch step: mean gradient over the whole batch, no noise or trimming."""
    logits, cache = forward_cached(model, batch.inputs)
    losses, logit_grads = nn.softmax_cross_entropy(logits, batch.labels)
    b = len(losses)
    grads = backward(model, cache, logit_grads / b)
    lr = lr_at(schedule, clock)
    optimizer_step(model.params, grads, opt_state, lr)
    clock.advance()
    mean = float(losses.mean())
    return StepReport(mean, b, lr, 0.0, mean)


def trimsgd_train_step(model, batch, config, opt_state, schedule, clock, rng):
    """One iteration: noise labels, per-example losses, trim by loss rank,
    backpropagate the kept examples' mean loss, update."""
    noised = inject_label_noise(batch.labels, config.rho, model.num_classes, rng)
    logits, cache = forward_cached(model, batch.inputs)
    losses, logit_grads = nn.softmax_cross_entropy(logits, noised.labels)
    b = len(losses)
    eps_eff = effective_trim_ratio(config, clock.theta)
    trim = trim_batch(losses, eps_eff)
    kept = trim.kept_indices
    if kept.size == 0:
        raise InvariantError("trimming removed every example")
    if kept.size == b:
        grads = backward(model, cache, logit_grads / b)
    else:
        scaled = np.zeros_like(logit_grads)
        scaled[kept] = logit_grads[kept] / kept.size
        grads = backward(model, cache, scaled, rows=kept)
    lr = lr_at(schedule, clock)
    optimizer_step(model.params, grads, opt_state, lr)
    clock.advance()
    return StepReport(
        float(losses[kept].mean()),
        int(kept.size),
        lr,
        eps_eff,
        float(losses.mean()),
        int(noised.flipped_mask.sum()),
        trim,
    )
