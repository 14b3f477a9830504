"""Forward/backward primitives: affine, 2-D convolution, 2x2 max-pool, ReLU
and softmax cross-entropy.

Arrays are float64 numpy arrays. Backward functions return gradients of a
*summed* loss; dividing by the batch size is left to the optimizer.
"""

from dataclasses import dataclass

import numpy as np

from trimsgd import kernels
from trimsgd.errors import DimensionError, GeometryError, LabelError


@dataclass
class LayerGrad:
    param_grads: list
    input_grad: np.ndarray | None


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def affine_forward(x, W, b):
    x, W, b = _f64(x), _f64(W), _f64(b)
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[0] or b.shape != (W.shape[1],):
        raise DimensionError(f"affine shapes do not agree: x{x.shape}, W{W.shape}, b{b.shape}")
    return kernels.matmul(x, W) + b


def affine_backward(x, W, upstream, input_grad=True):
    """Gradients of ``sum(upstream * affine_forward(x, W, b))``.

    Returns ``LayerGrad([dW, db], dx)``; ``dx`` is None when ``input_grad``
    is false (first layer of a network).
    """
    x, W, up = _f64(x), _f64(W), _f64(upstream)
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[0]:
        raise DimensionError(f"affine shapes do not agree: x{x.shape}, W{W.shape}")
    if up.shape != (x.shape[0], W.shape[1]):
        raise DimensionError(f"upstream shape {up.shape} does not match output {(x.shape[0], W.shape[1])}")
    dW = kernels.matmul_tn(x, up)
    db = kernels.colsum(up)
    dx = kernels.matmul(up, np.ascontiguousarray(W.T)) if input_grad else None
    return LayerGrad([dW, db], dx)


def conv_output_size(size, k, stride, pad):
    span = size + 2 * pad - k
    if k < 1 or stride < 1 or pad < 0 or span < 0 or span % stride:
        raise GeometryError(
            f"convolution geometry invalid: size={size}, kernel={k}, stride={stride}, pad={pad}, "
            f"span={span} (size + 2*pad - kernel must be a non-negative multiple of stride)"
        )
    return span // stride + 1


def conv2d_forward(x, kernels_, bias, stride=1, pad=0):
    """Zero-padded cross-correlation of ``x [N,C,H,W]`` with ``kernels_ [F,C,k,k]``."""
    x, K, b = _f64(x), _f64(kernels_), _f64(bias)
    if x.ndim != 4 or K.ndim != 4 or K.shape[2] != K.shape[3] or x.shape[1] != K.shape[1]:
        raise DimensionError(f"conv shapes do not agree: x{x.shape}, kernels{K.shape}")
    if b.shape != (K.shape[0],):
        raise DimensionError(f"conv bias shape {b.shape} does not match {K.shape[0]} filters")
    n, _, h, w = x.shape
    f, c, k, _ = K.shape
    oh = conv_output_size(h, k, stride, pad)
    ow = conv_output_size(w, k, stride, pad)
    cols = kernels.im2col(x, k, stride, pad)
    out = kernels.matmul(cols, np.ascontiguousarray(K.reshape(f, c * k * k).T)) + b
    return np.ascontiguousarray(out.reshape(n, oh, ow, f).transpose(0, 3, 1, 2))


def conv2d_backward(x, kernels_, upstream, stride=1, pad=0, input_grad=True):
    x, K, up = _f64(x), _f64(kernels_), _f64(upstream)
    n, _, h, w = x.shape
    f, c, k, _ = K.shape
    oh = conv_output_size(h, k, stride, pad)
    ow = conv_output_size(w, k, stride, pad)
    if up.shape != (n, f, oh, ow):
        raise DimensionError(f"upstream shape {up.shape} does not match output {(n, f, oh, ow)}")
    cols = kernels.im2col(x, k, stride, pad)
    up2 = np.ascontiguousarray(up.transpose(0, 2, 3, 1).reshape(n * oh * ow, f))
    dK = kernels.matmul_tn(up2, cols).reshape(K.shape)
    db = kernels.colsum(up2)
    dx = None
    if input_grad:
        dcols = kernels.matmul(up2, np.ascontiguousarray(K.reshape(f, c * k * k)))
        dx = kernels.col2im(dcols, x.shape, k, stride, pad)
    return LayerGrad([dK, db], dx)


def maxpool2x2_forward(x):
    """Non-overlapping 2x2 max. Returns ``(pooled, argmax)`` where ``argmax``
    holds the winning slot 0..3 of each window in row-major order; ties go to
    the earliest slot."""
    x = _f64(x)
    if x.ndim != 4:
        raise DimensionError(f"max-pool expects [N,C,H,W], got {x.shape}")
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise GeometryError(f"max-pool needs even spatial extents, got {x.shape[2]}x{x.shape[3]}")
    return kernels.maxpool2x2_forward(x)


def maxpool2x2_backward(argmax, upstream):
    argmax = np.ascontiguousarray(argmax, dtype=np.int8)
    up = _f64(upstream)
    if argmax.shape != up.shape:
        raise DimensionError(f"argmax {argmax.shape} and upstream {up.shape} differ")
    return kernels.maxpool2x2_backward(argmax, up)


def relu_forward(x):
    return np.maximum(x, 0.0)


def relu_backward(x, upstream):
    return np.where(x > 0, upstream, 0.0)


def softmax_cross_entropy(logits, labels):
    """Per-example cross-entropy with class ids ``1..L``.

    Returns ``(losses [N], logit_grads [N, L])`` with
    ``logit_grads = softmax(logits) - onehot(labels)``, not divided by N.
    """
    z = _f64(logits)
    if z.ndim != 2:
        raise DimensionError(f"logits must be [N, L], got {z.shape}")
    n, num_classes = z.shape
    y = np.asarray(labels)
    if y.shape != (n,):
        raise DimensionError(f"expected {n} labels, got shape {y.shape}")
    bad = np.flatnonzero((y < 1) | (y > num_classes))
    if bad.size:
        i = int(bad[0])
        raise LabelError(f"label {y[i]!r} at index {i} outside 1..{num_classes}")
    target = y.astype(np.intp) - 1
    rows = np.arange(n)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e.sum(axis=1)
    losses = np.maximum(np.log(s) - z[rows, target], 0.0)
    grads = e / s[:, None]
    grads[rows, target] -= 1.0
    return losses, grads
