# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels.

Same contract as ``_pykernels``: every reduction runs in ascending index
order with separate multiply and add roundings (built with
``-ffp-contract=off``), so both backends agree bit for bit.
"""

import numpy as np

from libc.stdint cimport uint64_t, int64_t
from libc.string cimport memset

BACKEND = "compiled"

cdef double _TWO_M53 = 1.0 / 9007199254740992.0


def matmul(const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t M = a.shape[0], K = a.shape[1], N = b.shape[1]
    if b.shape[0] != K:
        raise ValueError("inner dimensions differ")
    out = np.zeros((M, N))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t m, k, j
    cdef double a0, a1, a2, a3
    cdef double *orow
    cdef const double *b0
    cdef const double *b1
    cdef const double *b2
    cdef const double *b3
    if N == 0:
        return out
    with nogil:
        for m in range(M):
            orow = &o[m, 0]
            k = 0
            while k + 4 <= K:
                a0 = a[m, k]
                a1 = a[m, k + 1]
                a2 = a[m, k + 2]
                a3 = a[m, k + 3]
                b0 = &b[k, 0]
                b1 = &b[k + 1, 0]
                b2 = &b[k + 2, 0]
                b3 = &b[k + 3, 0]
                for j in range(N):
                    orow[j] = (((orow[j] + a0 * b0[j]) + a1 * b1[j]) + a2 * b2[j]) + a3 * b3[j]
                k += 4
            while k < K:
                a0 = a[m, k]
                b0 = &b[k, 0]
                for j in range(N):
                    orow[j] = orow[j] + a0 * b0[j]
                k += 1
    return out


def matmul_tn(const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t R = a.shape[0], M = a.shape[1], N = b.shape[1]
    if b.shape[0] != R:
        raise ValueError("row counts differ")
    out = np.zeros((M, N))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t r, m, j
    cdef double av
    cdef double *orow
    cdef const double *brow
    if N == 0:
        return out
    with nogil:
        for r in range(R):
            brow = &b[r, 0]
            for m in range(M):
                av = a[r, m]
                orow = &o[m, 0]
                for j in range(N):
                    orow[j] = orow[j] + av * brow[j]
    return out


def colsum(const double[:, ::1] a):
    cdef Py_ssize_t R = a.shape[0], N = a.shape[1]
    out = np.zeros(N)
    cdef double[::1] o = out
    cdef Py_ssize_t r, j
    with nogil:
        for r in range(R):
            for j in range(N):
                o[j] = o[j] + a[r, j]
    return out


def im2col(const double[:, :, :, ::1] x, int k, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - k) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - k) // stride + 1
    out = np.empty((n * oh * ow, c * k * k))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t b, i, j, ch, p, q, row, col, ih, iw
    with nogil:
        row = 0
        for b in range(n):
            for i in range(oh):
                for j in range(ow):
                    col = 0
                    for ch in range(c):
                        for p in range(k):
                            ih = i * stride + p - pad
                            for q in range(k):
                                iw = j * stride + q - pad
                                if 0 <= ih < h and 0 <= iw < w:
                                    o[row, col] = x[b, ch, ih, iw]
                                else:
                                    o[row, col] = 0.0
                                col += 1
                    row += 1
    return out


def col2im(const double[:, ::1] cols, tuple x_shape, int k, int stride, int pad):
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1], h = x_shape[2], w = x_shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - k) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - k) // stride + 1
    dx = np.zeros((n, c, h, w))
    cdef double[:, :, :, ::1] d = dx
    cdef Py_ssize_t b, i, j, ch, p, q, row, col, ih, iw
    with nogil:
        row = 0
        for b in range(n):
            for i in range(oh):
                for j in range(ow):
                    col = 0
                    for ch in range(c):
                        for p in range(k):
                            ih = i * stride + p - pad
                            for q in range(k):
                                iw = j * stride + q - pad
                                if 0 <= ih < h and 0 <= iw < w:
                                    d[b, ch, ih, iw] = d[b, ch, ih, iw] + cols[row, col]
                                col += 1
                    row += 1
    return dx


def maxpool2x2_forward(const double[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], ph = x.shape[2] // 2, pw = x.shape[3] // 2
    pooled = np.empty((n, c, ph, pw))
    arg = np.empty((n, c, ph, pw), dtype=np.int8)
    cdef double[:, :, :, ::1] po = pooled
    cdef signed char[:, :, :, ::1] ar = arg
    cdef Py_ssize_t b, ch, i, j
    cdef double best, v
    cdef signed char slot
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(ph):
                    for j in range(pw):
                        best = x[b, ch, 2 * i, 2 * j]
                        slot = 0
                        v = x[b, ch, 2 * i, 2 * j + 1]
                        if v > best:
                            best = v
                            slot = 1
                        v = x[b, ch, 2 * i + 1, 2 * j]
                        if v > best:
                            best = v
                            slot = 2
                        v = x[b, ch, 2 * i + 1, 2 * j + 1]
                        if v > best:
                            best = v
                            slot = 3
                        po[b, ch, i, j] = best
                        ar[b, ch, i, j] = slot
    return pooled, arg


def maxpool2x2_backward(const signed char[:, :, :, ::1] arg, const double[:, :, :, ::1] upstream):
    cdef Py_ssize_t n = upstream.shape[0], c = upstream.shape[1]
    cdef Py_ssize_t ph = upstream.shape[2], pw = upstream.shape[3]
    dx = np.zeros((n, c, 2 * ph, 2 * pw))
    cdef double[:, :, :, ::1] d = dx
    cdef Py_ssize_t b, ch, i, j
    cdef signed char slot
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(ph):
                    for j in range(pw):
                        slot = arg[b, ch, i, j]
                        d[b, ch, 2 * i + (slot >> 1), 2 * j + (slot & 1)] = upstream[b, ch, i, j]
    return dx


# -- xoshiro256** ------------------------------------------------------------


cdef inline uint64_t _rotl(uint64_t v, int r) nogil:
    return (v << r) | (v >> (64 - r))


cdef inline uint64_t _next(uint64_t *s) nogil:
    cdef uint64_t result = _rotl(s[1] * 5, 7) * 9
    cdef uint64_t t = s[1] << 17
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


cdef inline uint64_t _bounded(uint64_t *s, uint64_t n) nogil:
    cdef uint64_t threshold = (0 - n) % n
    cdef uint64_t r
    while True:
        r = _next(s)
        if r >= threshold:
            return r % n


def next_u64(uint64_t[::1] state, Py_ssize_t count):
    out = np.empty(count, dtype=np.uint64)
    cdef uint64_t[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(count):
            o[i] = _next(&state[0])
    return out


def fill_uniform(uint64_t[::1] state, Py_ssize_t count):
    out = np.empty(count)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(count):
            o[i] = <double>(_next(&state[0]) >> 11) * _TWO_M53
    return out


def bounded_ints(uint64_t[::1] state, uint64_t n, Py_ssize_t count):
    out = np.empty(count, dtype=np.int64)
    cdef int64_t[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(count):
            o[i] = <int64_t>_bounded(&state[0], n)
    return out


def permutation(uint64_t[::1] state, Py_ssize_t n):
    out = np.arange(n, dtype=np.int64)
    cdef int64_t[::1] p = out
    cdef Py_ssize_t i, j
    cdef int64_t tmp
    with nogil:
        i = n - 1
        while i > 0:
            j = <Py_ssize_t>_bounded(&state[0], <uint64_t>(i + 1))
            tmp = p[i]
            p[i] = p[j]
            p[j] = tmp
            i -= 1
    return out


def label_noise(uint64_t[::1] state, labels, double rho, int num_classes):
    noised = np.array(labels, dtype=np.int64, copy=True)
    flipped = np.zeros(noised.shape[0], dtype=np.uint8)
    cdef int64_t[::1] y = noised
    cdef unsigned char[::1] f = flipped
    cdef Py_ssize_t i
    cdef double u
    with nogil:
        for i in range(y.shape[0]):
            u = <double>(_next(&state[0]) >> 11) * _TWO_M53
            if u < rho:
                f[i] = 1
                y[i] = 1 + <int64_t>_bounded(&state[0], <uint64_t>num_classes)
    return noised, flipped.view(bool)


# -- stable merge sort --------------------------------------------------------


def argsort_stable(values):
    cdef double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0]
    a = np.arange(n, dtype=np.int64)
    b = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] src = a
    cdef int64_t[::1] dst = b
    cdef int64_t[::1] swap
    cdef Py_ssize_t width = 1, lo, mid, hi, i, j, o
    cdef long long comparisons = 0
    while width < n:
        lo = 0
        while lo < n:
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i = lo
            j = mid
            o = lo
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
            lo += 2 * width
        swap = src
        src = dst
        dst = swap
        width *= 2
    return np.asarray(src).copy(), int(comparisons)
