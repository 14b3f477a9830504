"""NN-2, NN-3 and LeNet as ordered layer stacks over one flat parameter buffer.

Layer parameters are views into ``model.params.data``, so optimizers update
the flat vector in place and every layer sees the change.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from trimsgd import nn
from trimsgd.errors import ConfigError, DimensionError, FormatError, StateError
from trimsgd.rng import Rng

ARCHS = ("NN2", "NN3", "LeNet")
_ARCH_IDS = {name: i for i, name in enumerate(ARCHS)}
_ALIASES = {"nn2": "NN2", "nn-2": "NN2", "nn3": "NN3", "nn-3": "NN3", "lenet": "LeNet"}

CHECKPOINT_MAGIC = b"TGM1"


def canonical_arch(name):
    key = str(name).lower()
    if key not in _ALIASES:
        raise ConfigError(f"unknown architecture {name!r}; expected one of {', '.join(ARCHS)}")
    return _ALIASES[key]


@dataclass(frozen=True)
class ParamSlot:
    layer: int
    which: int
    offset: int
    shape: tuple

    @property
    def size(self):
        return int(np.prod(self.shape))


class ParamVector:
    """Flat float64 vector plus the map from slices back to layer parameters."""

    def __init__(self, data, index):
        self.data = data
        self.index = tuple(index)
        self.version = 0

    def __len__(self):
        return self.data.size

    def zeros_like(self):
        return ParamVector(np.zeros_like(self.data), self.index)

    def copy(self):
        return ParamVector(self.data.copy(), self.index)

    def unflatten(self):
        """List (one entry per slot) of array views into ``data``."""
        return [self.data[s.offset : s.offset + s.size].reshape(s.shape) for s in self.index]

    @classmethod
    def flatten(cls, arrays, index):
        data = np.concatenate([np.ravel(a) for a in arrays]) if arrays else np.zeros(0)
        return cls(data.astype(np.float64), index)

    def bump(self):
        self.version += 1


@dataclass
class Layer:
    kind: str
    params: list = field(default_factory=list)
    stride: int = 1
    pad: int = 0
    in_shape: tuple = ()
    out_shape: tuple = ()


class Model:
    def __init__(self, arch, input_shape, num_classes, hidden, specs):
        self.arch = arch
        self.input_shape = tuple(input_shape)
        self.num_classes = num_classes
        self.hidden = hidden
        self.layers = []
        shapes = []
        shape = self.input_shape
        for spec in specs:
            layer, pshapes = _make_layer(spec, shape)
            shapes.append(pshapes)
            self.layers.append(layer)
            shape = layer.out_shape
        if shape != (num_classes,):
            raise DimensionError(f"network output {shape} does not match {num_classes} classes")
        index, offset = [], 0
        for li, pshapes in enumerate(shapes):
            for wi, ps in enumerate(pshapes):
                index.append(ParamSlot(li, wi, offset, tuple(ps)))
                offset += int(np.prod(ps))
        self.params = ParamVector(np.zeros(offset), index)
        views = self.params.unflatten()
        for slot, view in zip(index, views):
            self.layers[slot.layer].params.append(view)

    @property
    def num_params(self):
        return len(self.params)

    def __repr__(self):
        return f"Model({self.arch}, input={self.input_shape}, classes={self.num_classes}, params={self.num_params})"


def _make_layer(spec, shape):
    kind = spec[0]
    if kind == "flatten":
        return Layer("flatten", in_shape=shape, out_shape=(int(np.prod(shape)),)), []
    if kind == "affine":
        if len(shape) != 1:
            raise DimensionError(f"affine layer needs flat input, got {shape}")
        width = spec[1]
        return Layer("affine", in_shape=shape, out_shape=(width,)), [(shape[0], width), (width,)]
    if kind == "relu":
        return Layer("relu", in_shape=shape, out_shape=shape), []
    if kind == "conv":
        _, filters, k, pad = spec
        if len(shape) != 3:
            raise DimensionError(f"conv layer needs [C,H,W] input, got {shape}")
        c, h, w = shape
        oh = nn.conv_output_size(h, k, 1, pad)
        ow = nn.conv_output_size(w, k, 1, pad)
        layer = Layer("conv", pad=pad, in_shape=shape, out_shape=(filters, oh, ow))
        return layer, [(filters, c, k, k), (filters,)]
    if kind == "maxpool":
        c, h, w = shape
        if h % 2 or w % 2:
            raise DimensionError(f"max-pool needs even extents, got {h}x{w}")
        return Layer("maxpool", in_shape=shape, out_shape=(c, h // 2, w // 2)), []
    raise ValueError(kind)


def _specs(arch, num_classes, hidden):
    if arch == "NN2":
        return [("flatten",), ("affine", hidden), ("relu",), ("affine", hidden), ("relu",),
                ("affine", num_classes)]
    if arch == "NN3":
        return [("flatten",), ("affine", hidden), ("relu",), ("affine", hidden), ("relu",),
                ("affine", hidden), ("relu",), ("affine", num_classes)]
    return [("conv", 6, 5, 2), ("relu",), ("maxpool",), ("conv", 16, 5, 0), ("relu",), ("maxpool",),
            ("flatten",), ("affine", 120), ("relu",), ("affine", num_classes)]


def build_model(arch, input_shape, num_classes, init_seed=0, hidden=256):
    """Construct an architecture with He-uniform weights and zero biases.

    ``input_shape`` is an int (flat) or a ``(C, H, W)`` tuple; LeNet needs the
    latter with geometry that survives both conv/pool stages (28x28 gives the
    usual 400-wide flatten).
    """
    arch = canonical_arch(arch)
    if num_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {num_classes}")
    shape = (int(input_shape),) if np.isscalar(input_shape) else tuple(int(s) for s in input_shape)
    if any(s < 1 for s in shape):
        raise ConfigError(f"unsupported input shape {shape}")
    if arch == "LeNet" and len(shape) != 3:
        raise ConfigError(f"LeNet needs a (C, H, W) input shape, got {shape}")
    if arch != "LeNet" and hidden < 1:
        raise ConfigError(f"hidden width must be positive, got {hidden}")
    try:
        model = Model(arch, shape, num_classes, hidden, _specs(arch, num_classes, hidden))
    except (DimensionError, nn.GeometryError) as exc:
        raise ConfigError(f"unsupported input shape {shape} for {arch}: {exc}") from exc
    rng = Rng(init_seed, "init")
    for layer in model.layers:
        if layer.kind in ("affine", "conv"):
            w = layer.params[0]
            fan_in = int(np.prod(w.shape[1:])) if layer.kind == "conv" else w.shape[0]
            limit = np.sqrt(6.0 / fan_in)
            w[...] = rng.uniform(-limit, limit, w.shape)
    return model


# -- forward / backward -------------------------------------------------------


@dataclass
class ForwardCache:
    params: ParamVector
    version: int
    inputs: list
    aux: list
    batch: int


def _as_batch(model, x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    shape = model.input_shape
    if x.ndim < 2:
        raise DimensionError(f"expected a batch with leading example axis, got shape {x.shape}")
    if x.shape[1:] != shape:
        if len(shape) == 1 and int(np.prod(x.shape[1:])) == shape[0]:
            x = x.reshape(x.shape[0], shape[0])
        else:
            raise DimensionError(f"batch shape {x.shape[1:]} does not match model input {shape}")
    return x


def forward_cached(model, x):
    """Forward pass returning ``(logits, cache)`` for a later :func:`backward`."""
    h = _as_batch(model, x)
    n = h.shape[0]
    inputs, aux = [], []
    for layer in model.layers:
        inputs.append(h)
        extra = None
        if layer.kind == "flatten":
            h = h.reshape(n, -1)
        elif layer.kind == "affine":
            h = nn.affine_forward(h, layer.params[0], layer.params[1])
        elif layer.kind == "relu":
            h = nn.relu_forward(h)
        elif layer.kind == "conv":
            h = nn.conv2d_forward(h, layer.params[0], layer.params[1], layer.stride, layer.pad)
        elif layer.kind == "maxpool":
            h, extra = nn.maxpool2x2_forward(h)
        aux.append(extra)
    return h, ForwardCache(model.params, model.params.version, inputs, aux, n)


def forward(model, x):
    return forward_cached(model, x)[0]


def backward(model, cache, logit_grads, rows=None):
    """Gradient of ``sum_i logit_grads[i] . logits[i]`` w.r.t. every parameter.

    ``rows`` restricts backpropagation to those batch positions; the result
    equals the full-batch gradient with the other rows of ``logit_grads``
    zeroed.
    """
    if cache is None or not isinstance(cache, ForwardCache):
        raise StateError("backward needs the cache returned by forward_cached")
    if cache.params is not model.params or cache.version != model.params.version:
        raise StateError("forward cache is stale: parameters changed since the forward pass")
    up = np.ascontiguousarray(logit_grads, dtype=np.float64)
    if up.shape != (cache.batch, model.num_classes):
        raise DimensionError(f"logit_grads shape {up.shape} != {(cache.batch, model.num_classes)}")
    inputs, aux = cache.inputs, cache.aux
    if rows is not None:
        rows = np.asarray(rows, dtype=np.intp)
        up = np.ascontiguousarray(up[rows])
        inputs = [np.ascontiguousarray(a[rows]) for a in inputs]
        aux = [None if a is None else np.ascontiguousarray(a[rows]) for a in aux]

    grads = model.params.zeros_like()
    views = grads.unflatten()
    by_layer = {}
    for slot, view in zip(model.params.index, views):
        by_layer.setdefault(slot.layer, []).append(view)
    first_param = min(by_layer) if by_layer else len(model.layers)

    for li in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[li]
        x_in = inputs[li]
        need_dx = li > first_param
        if layer.kind == "flatten":
            up = up.reshape(x_in.shape)
        elif layer.kind == "affine":
            g = nn.affine_backward(x_in, layer.params[0], up, input_grad=need_dx)
            by_layer[li][0][...] = g.param_grads[0]
            by_layer[li][1][...] = g.param_grads[1]
            up = g.input_grad
        elif layer.kind == "relu":
            up = nn.relu_backward(x_in, up)
        elif layer.kind == "conv":
            g = nn.conv2d_backward(x_in, layer.params[0], up, layer.stride, layer.pad, input_grad=need_dx)
            by_layer[li][0][...] = g.param_grads[0]
            by_layer[li][1][...] = g.param_grads[1]
            up = g.input_grad
        elif layer.kind == "maxpool":
            up = nn.maxpool2x2_backward(aux[li], up)
        if up is None:
            break
    return grads


def activation_pattern(model, cache):
    """Flat signature of every kink in a forward pass: ReLU input signs and
    max-pool winners. Two passes with equal patterns lie on one smooth piece."""
    parts = []
    for layer, x_in, extra in zip(model.layers, cache.inputs, cache.aux):
        if layer.kind == "relu":
            parts.append(np.ravel(x_in > 0).astype(np.int64))
        elif layer.kind == "maxpool":
            parts.append(np.ravel(extra).astype(np.int64))
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


# -- checkpoints --------------------------------------------------------------


def save_checkpoint(model, path):
    """Write ``TGM1`` | arch, classes, hidden, ndim (uint32 LE) | dims | count
    (uint64 LE) | parameters (float64 LE, ParamVector order)."""
    header = CHECKPOINT_MAGIC + struct.pack(
        "<IIII", _ARCH_IDS[model.arch], model.num_classes, model.hidden, len(model.input_shape)
    )
    header += struct.pack(f"<{len(model.input_shape)}I", *model.input_shape)
    header += struct.pack("<Q", model.num_params)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(model.params.data.astype("<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"not a model checkpoint: magic {blob[:4]!r}")
    arch_id, num_classes, hidden, ndim = struct.unpack_from("<IIII", blob, 4)
    if arch_id >= len(ARCHS):
        raise FormatError(f"unknown architecture id {arch_id}")
    pos = 20
    dims = struct.unpack_from(f"<{ndim}I", blob, pos)
    pos += 4 * ndim
    (count,) = struct.unpack_from("<Q", blob, pos)
    pos += 8
    model = build_model(ARCHS[arch_id], dims, num_classes, 0, hidden)
    if count != model.num_params or len(blob) - pos != 8 * count:
        raise FormatError(f"checkpoint holds {len(blob) - pos} parameter bytes, expected {8 * model.num_params}")
    model.params.data[:] = np.frombuffer(blob, dtype="<f8", offset=pos, count=count)
    return model


def example_losses(model, dataset, labels=None, chunk=1000):
    """Per-example cross-entropy over a whole dataset, and per-example correctness.

    ``labels`` overrides the dataset's own labels (e.g. noised ones).
    """
    labels = dataset.labels if labels is None else np.asarray(labels)
    n = len(dataset)
    losses = np.empty(n)
    correct = np.empty(n, dtype=bool)
    for start in range(0, n, chunk):
        idx = np.arange(start, min(start + chunk, n))
        logits = forward(model, dataset.inputs(idx))
        losses[idx], _ = nn.softmax_cross_entropy(logits, labels[idx])
        correct[idx] = np.argmax(logits, axis=1) + 1 == labels[idx]
    return losses, correct
