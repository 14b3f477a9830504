"""Finite-difference and brute-force oracles shared by the tests."""

import numpy as np

from trimsgd import nn
from trimsgd.models import activation_pattern, forward, forward_cached


def rel_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale < 1e-300:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def numeric_grad(f, x, h=1e-5, coords=None):
    """Central differences of scalar ``f()`` w.r.t. array ``x`` (perturbed in place)."""
    flat = x.reshape(-1)
    coords = range(flat.size) if coords is None else coords
    out = []
    for i in coords:
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        out.append((up - down) / (2 * h))
    return np.array(out)


def naive_matmul(a, b):
    n, k = a.shape
    m = b.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def naive_conv(x, w, b, stride, pad):
    n, c, h, wd = x.shape
    f, _, k, _ = w.shape
    xp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
    xp[:, :, pad : pad + h, pad : pad + wd] = x
    oh = (h + 2 * pad - k) // stride + 1
    ow = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((n, f, oh, ow))
    for i in range(n):
        for o in range(f):
            for r in range(oh):
                for s in range(ow):
                    acc = 0.0
                    for ch in range(c):
                        for p in range(k):
                            for q in range(k):
                                acc += xp[i, ch, r * stride + p, s * stride + q] * w[o, ch, p, q]
                    out[i, o, r, s] = acc + b[o]
    return out


def naive_pool(x):
    n, c, h, w = x.shape
    out = np.zeros((n, c, h // 2, w // 2))
    arg = np.zeros((n, c, h // 2, w // 2), dtype=np.int64)
    for i in range(n):
        for ch in range(c):
            for r in range(h // 2):
                for s in range(w // 2):
                    window = [x[i, ch, 2 * r, 2 * s], x[i, ch, 2 * r, 2 * s + 1],
                              x[i, ch, 2 * r + 1, 2 * s], x[i, ch, 2 * r + 1, 2 * s + 1]]
                    best = 0
                    for slot in range(1, 4):
                        if window[slot] > window[best]:
                            best = slot
                    out[i, ch, r, s] = window[best]
                    arg[i, ch, r, s] = best
    return out, arg


def model_loss(model, x, labels):
    return float(nn.softmax_cross_entropy(forward(model, x), labels)[0].sum())


def check_model_gradient(model, x, labels, rng, per_array=6, h=1e-5):
    """Worst norm-wise relative error over the model's parameter arrays.

    A few coordinates are sampled per array. Coordinates whose +-h probe
    changes a ReLU sign or a pooling winner are skipped, because the
    central difference straddles a kink there. Returns ``(error, checked)``.
    """
    logits, cache = forward_cached(model, x)
    _, dlogits = nn.softmax_cross_entropy(logits, labels)
    from trimsgd.models import backward

    grads = backward(model, cache, dlogits).data
    base = activation_pattern(model, cache)
    data = model.params.data
    worst, checked = 0.0, 0
    for slot in model.params.index:
        picks = rng.choice(slot.size, size=min(per_array, slot.size), replace=False) + slot.offset
        analytic, numeric = [], []
        for i in picks:
            old = data[i]
            vals, smooth = [], True
            for sign in (1, -1):
                data[i] = old + sign * h
                lg, c = forward_cached(model, x)
                smooth &= np.array_equal(activation_pattern(model, c), base)
                vals.append(float(nn.softmax_cross_entropy(lg, labels)[0].sum()))
            data[i] = old
            if smooth:
                analytic.append(grads[i])
                numeric.append((vals[0] - vals[1]) / (2 * h))
        if analytic:
            worst = max(worst, rel_error(analytic, numeric))
            checked += len(analytic)
    return worst, checked
