"""Pure numpy implementation of the hot kernels.

Every reduction accumulates in ascending index order with one rounding per
multiply and one per add (no fused multiply-add, no pairwise summation), so
results are bit-identical to :mod:`trimsgd._ckernels` and to naive loops.
"""

import numpy as np

BACKEND = "python"

_MASK = (1 << 64) - 1


def matmul(a, b):
    """``a @ b`` summed over the inner index in ascending order."""
    m, kdim = a.shape
    out = np.zeros((m, b.shape[1]))
    for k in range(kdim):
        out += a[:, k : k + 1] * b[k]
    return out


def matmul_tn(a, b):
    """``a.T @ b`` summed over rows in ascending order."""
    out = np.zeros((a.shape[1], b.shape[1]))
    for r in range(a.shape[0]):
        out += a[r][:, None] * b[r][None, :]
    return out


def colsum(a):
    out = np.zeros(a.shape[1])
    for r in range(a.shape[0]):
        out += a[r]
    return out


def im2col(x, k, stride, pad):
    n, c, h, w = x.shape
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((n, oh, ow, c, k, k))
    for p in range(k):
        for q in range(k):
            patch = xp[:, :, p : p + stride * oh : stride, q : q + stride * ow : stride]
            cols[:, :, :, :, p, q] = patch.transpose(0, 2, 3, 1)
    return cols.reshape(n * oh * ow, c * k * k)


def col2im(cols, x_shape, k, stride, pad):
    # contributions to each input pixel arrive in ascending output-position order
    n, c, h, w = x_shape
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    patches = cols.reshape(n, oh, ow, c, k, k)
    for i in range(oh):
        for j in range(ow):
            dxp[:, :, i * stride : i * stride + k, j * stride : j * stride + k] += patches[:, i, j]
    return np.ascontiguousarray(dxp[:, :, pad : pad + h, pad : pad + w])


def maxpool2x2_forward(x):
    n, c, h, w = x.shape
    cand = np.stack(
        [x[:, :, 0::2, 0::2], x[:, :, 0::2, 1::2], x[:, :, 1::2, 0::2], x[:, :, 1::2, 1::2]],
        axis=-1,
    )
    arg = np.argmax(cand, axis=-1).astype(np.int8)
    pooled = np.take_along_axis(cand, arg[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(pooled), arg


def maxpool2x2_backward(arg, upstream):
    n, c, ph, pw = upstream.shape
    dx = np.zeros((n, c, 2 * ph, 2 * pw))
    for slot, (di, dj) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
        dx[:, :, di::2, dj::2] = np.where(arg == slot, upstream, 0.0)
    return dx


# -- xoshiro256** ------------------------------------------------------------


def _rotl(v, r):
    return ((v << r) | (v >> (64 - r))) & _MASK


def _next(s):
    s0, s1, s2, s3 = s
    result = (_rotl((s1 * 5) & _MASK, 7) * 9) & _MASK
    t = (s1 << 17) & _MASK
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    s[0], s[1], s[2], s[3] = s0, s1, s2, s3
    return result


def _bounded(s, n):
    # reject the 2**64 mod n lowest raw values so the residue is unbiased
    threshold = (1 << 64) % n
    while True:
        r = _next(s)
        if r >= threshold:
            return r % n


def _load(state):
    return [int(v) for v in state]


def _store(state, s):
    state[:] = np.array(s, dtype=np.uint64)


def next_u64(state, count):
    s = _load(state)
    out = np.array([_next(s) for _ in range(count)], dtype=np.uint64)
    _store(state, s)
    return out


def fill_uniform(state, count):
    s = _load(state)
    out = np.array([(_next(s) >> 11) * (1.0 / 9007199254740992.0) for _ in range(count)])
    _store(state, s)
    return out


def bounded_ints(state, n, count):
    s = _load(state)
    out = np.array([_bounded(s, n) for _ in range(count)], dtype=np.int64)
    _store(state, s)
    return out


def permutation(state, n):
    s = _load(state)
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = _bounded(s, i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    _store(state, s)
    return np.array(perm, dtype=np.int64)


def label_noise(state, labels, rho, num_classes):
    s = _load(state)
    noised = np.array(labels, dtype=np.int64, copy=True)
    flipped = np.zeros(len(noised), dtype=bool)
    for i in range(len(noised)):
        u = (_next(s) >> 11) * (1.0 / 9007199254740992.0)
        if u < rho:
            flipped[i] = True
            noised[i] = 1 + _bounded(s, num_classes)
    _store(state, s)
    return noised, flipped


# -- stable merge sort --------------------------------------------------------


def argsort_stable(values):
    """Bottom-up merge sort of positions by value; returns (order, comparisons).

    Ties keep ascending position because the left run wins on equality.
    """
    v = [float(x) for x in values]
    n = len(v)
    src = list(range(n))
    dst = [0] * n
    comparisons = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, o = lo, mid, lo
            while i < mid and j < hi:
                comparisons += 1
                if v[src[j]] < v[src[i]]:
                    dst[o] = src[j]
                    j += 1
                else:
                    dst[o] = src[i]
                    i += 1
                o += 1
            while i < mid:
                dst[o] = src[i]
                i += 1
                o += 1
            while j < hi:
                dst[o] = src[j]
                j += 1
                o += 1
        src, dst = dst, src
        width *= 2
    return np.array(src, dtype=np.int64), comparisons
