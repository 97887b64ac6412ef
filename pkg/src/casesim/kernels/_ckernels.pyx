# Compiled twins of the functions in _pykernels.py. Results must stay
# bit-identical to the pure-Python versions.
import numpy as np
cimport numpy as cnp
from libc.math cimport floor
from libc.stdint cimport int64_t, uint64_t

cnp.import_array()


cdef class SplitMix64:
    cdef public uint64_t state

    def __init__(self, seed):
        self.state = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)

    cdef inline uint64_t _next(self) nogil:
        cdef uint64_t z
        self.state += 0x9E3779B97F4A7C15ULL
        z = self.state
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
        return z ^ (z >> 31)

    def next(self):
        return self._next()

    def below(self, n):
        return self._next() % <uint64_t>n


cdef inline double _round_half_away(double x) nogil:
    cdef double r = floor(x)
    if x - r >= 0.5:
        r += 1.0
    return r


cdef inline unsigned char _grey(double z, double z_min, double eps, double z_max) nogil:
    cdef double den, g
    if z <= eps:
        den = eps - z_min
        if den > 0.0:
            g = (z - z_min) / den * 127.0
        else:
            g = 0.0
    else:
        den = z_max - eps
        if den > 0.0:
            g = 127.0 + (z - eps) / den * 128.0
        else:
            g = 127.0
    if g <= 0.0:
        return 0
    g = _round_half_away(g)
    if g > 255.0:
        return 255
    return <unsigned char>g


def grey_level(double z, double z_min, double epsilon, double z_max):
    return int(_grey(z, z_min, epsilon, z_max))


def project_grey(z, double z_min, double epsilon, double z_max):
    arr = np.ascontiguousarray(z, dtype=np.float64)
    out = np.empty(arr.shape, dtype=np.uint8)
    cdef double[::1] src = arr.reshape(-1)
    cdef unsigned char[::1] dst = out.reshape(-1)
    cdef Py_ssize_t i, n = src.shape[0]
    with nogil:
        for i in range(n):
            dst[i] = _grey(src[i], z_min, epsilon, z_max)
    return out


cdef void _axis(Py_ssize_t in_size, Py_ssize_t out_size,
                int64_t[::1] lo, int64_t[::1] hi, double[::1] w) nogil:
    cdef double scale = <double>in_size / <double>out_size
    cdef double s, f
    cdef int64_t s0
    cdef Py_ssize_t d
    for d in range(out_size):
        s = (d + 0.5) * scale - 0.5
        s0 = <int64_t>floor(s)
        f = s - s0
        if s0 < 0:
            s0 = 0
            f = 0.0
        if s0 >= in_size - 1:
            s0 = in_size - 1
            f = 0.0
        lo[d] = s0
        hi[d] = s0 + 1 if s0 + 1 < in_size else in_size - 1
        w[d] = f


def bilinear_resize(img, Py_ssize_t out_h, Py_ssize_t out_w):
    arr = np.ascontiguousarray(img, dtype=np.float64)
    cdef double[:, ::1] src = arr
    cdef Py_ssize_t in_h = src.shape[0], in_w = src.shape[1]
    out = np.empty((out_h, out_w), dtype=np.float64)
    cdef double[:, ::1] dst = out
    y0a = np.empty(out_h, dtype=np.int64); y1a = np.empty(out_h, dtype=np.int64)
    x0a = np.empty(out_w, dtype=np.int64); x1a = np.empty(out_w, dtype=np.int64)
    wya = np.empty(out_h, dtype=np.float64); wxa = np.empty(out_w, dtype=np.float64)
    cdef int64_t[::1] y0 = y0a, y1 = y1a, x0 = x0a, x1 = x1a
    cdef double[::1] wy = wya, wx = wxa
    cdef Py_ssize_t r, c
    cdef double fy, fx, top, bot
    with nogil:
        _axis(in_h, out_h, y0, y1, wy)
        _axis(in_w, out_w, x0, x1, wx)
        for r in range(out_h):
            fy = wy[r]
            for c in range(out_w):
                fx = wx[c]
                top = (1.0 - fx) * src[y0[r], x0[c]] + fx * src[y0[r], x1[c]]
                bot = (1.0 - fx) * src[y1[r], x0[c]] + fx * src[y1[r], x1[c]]
                dst[r, c] = (1.0 - fy) * top + fy * bot
    return out


def lcs_length(a, b, int64_t skip):
    cdef int64_t[::1] xs = np.ascontiguousarray(a, dtype=np.int64)
    cdef int64_t[::1] ys = np.ascontiguousarray(b, dtype=np.int64)
    cdef Py_ssize_t n = xs.shape[0], m = ys.shape[0], i, j
    if n == 0 or m == 0:
        return 0
    prev_a = np.zeros(m + 1, dtype=np.int64)
    cur_a = np.zeros(m + 1, dtype=np.int64)
    cdef int64_t[::1] prev = prev_a, cur = cur_a, tmp
    cdef int64_t x
    with nogil:
        for i in range(n):
            x = xs[i]
            cur[0] = 0
            for j in range(1, m + 1):
                if x == ys[j - 1] and x != skip:
                    cur[j] = prev[j - 1] + 1
                elif cur[j - 1] > prev[j]:
                    cur[j] = cur[j - 1]
                else:
                    cur[j] = prev[j]
            tmp = prev
            prev = cur
            cur = tmp
    return int(prev[m])


def reservoir_cluster_pairs(labels, Py_ssize_t k_same, Py_ssize_t k_diff, seed):
    cdef int64_t[::1] lab = np.ascontiguousarray(labels, dtype=np.int64)
    cdef SplitMix64 rng = SplitMix64(seed)
    same_a = np.zeros((k_same, 2), dtype=np.int64)
    diff_a = np.zeros((k_diff, 2), dtype=np.int64)
    cdef int64_t[:, ::1] same = same_a, diff = diff_a
    cdef Py_ssize_t n = lab.shape[0], a, b
    cdef uint64_t n_same = 0, n_diff = 0, j
    cdef int64_t la
    with nogil:
        for a in range(n):
            la = lab[a]
            for b in range(a + 1, n):
                if lab[b] == la:
                    if n_same < <uint64_t>k_same:
                        same[n_same, 0] = a
                        same[n_same, 1] = b
                    else:
                        j = rng._next() % (n_same + 1)
                        if j < <uint64_t>k_same:
                            same[j, 0] = a
                            same[j, 1] = b
                    n_same += 1
                else:
                    if n_diff < <uint64_t>k_diff:
                        diff[n_diff, 0] = a
                        diff[n_diff, 1] = b
                    else:
                        j = rng._next() % (n_diff + 1)
                        if j < <uint64_t>k_diff:
                            diff[j, 0] = a
                            diff[j, 1] = b
                    n_diff += 1
    return (same_a[: min(<uint64_t>k_same, n_same)], diff_a[: min(<uint64_t>k_diff, n_diff)],
            int(n_same), int(n_diff))
