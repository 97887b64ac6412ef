"""Pure-Python implementations of the hot kernels.

Every function here has a twin in ``_ckernels.pyx`` with the same
signature and bit-identical results. Keep the arithmetic order in sync.
"""

import math

import numpy as np

_MASK = (1 << 64) - 1


class SplitMix64:
    """Tiny 64-bit generator shared by both kernel implementations."""

    def __init__(self, seed):
        self.state = int(seed) & _MASK

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def below(self, n):
        return self.next() % n


def round_half_away(x):
    r = math.floor(x)
    if x - r >= 0.5:
        r += 1
    return r


def grey_level(z, z_min, epsilon, z_max):
    if z <= epsilon:
        den = epsilon - z_min
        g = (z - z_min) / den * 127.0 if den > 0.0 else 0.0
    else:
        den = z_max - epsilon
        g = 127.0 + (z - epsilon) / den * 128.0 if den > 0.0 else 127.0
    if g <= 0.0:
        return 0
    g = round_half_away(g)
    return 255 if g > 255 else int(g)


def project_grey(z, z_min, epsilon, z_max):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty(z.shape, dtype=np.uint8)
    flat_in = z.ravel()
    flat_out = out.ravel()
    for i in range(flat_in.shape[0]):
        flat_out[i] = grey_level(float(flat_in[i]), z_min, epsilon, z_max)
    return out


def _axis_coords(in_size, out_size):
    scale = in_size / out_size
    lo = np.empty(out_size, dtype=np.int64)
    hi = np.empty(out_size, dtype=np.int64)
    w = np.empty(out_size, dtype=np.float64)
    for d in range(out_size):
        s = (d + 0.5) * scale - 0.5
        s0 = math.floor(s)
        f = s - s0
        if s0 < 0:
            s0, f = 0, 0.0
        if s0 >= in_size - 1:
            s0, f = in_size - 1, 0.0
        lo[d] = s0
        hi[d] = min(s0 + 1, in_size - 1)
        w[d] = f
    return lo, hi, w


def bilinear_resize(img, out_h, out_w):
    img = np.asarray(img, dtype=np.float64)
    in_h, in_w = img.shape
    y0, y1, wy = _axis_coords(in_h, out_h)
    x0, x1, wx = _axis_coords(in_w, out_w)
    out = np.empty((out_h, out_w), dtype=np.float64)
    for r in range(out_h):
        a, b, fy = y0[r], y1[r], wy[r]
        for c in range(out_w):
            p, q, fx = x0[c], x1[c], wx[c]
            top = (1.0 - fx) * img[a, p] + fx * img[a, q]
            bot = (1.0 - fx) * img[b, p] + fx * img[b, q]
            out[r, c] = (1.0 - fy) * top + fy * bot
    return out


def lcs_length(a, b, skip):
    """LCS length of two int sequences; ``skip`` never matches anything."""
    a = [int(t) for t in a]
    b = [int(t) for t in b]
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, 1):
            if x == y and x != skip:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = cur[j - 1] if cur[j - 1] > prev[j] else prev[j]
        prev = cur
    return prev[-1]


def reservoir_cluster_pairs(labels, k_same, k_diff, seed):
    """Reservoir-sample index pairs (a < b) by same/different label.

    Pairs are visited in lexicographic (a, b) order and one generator is
    shared by both reservoirs. Returns (same, diff, n_same, n_diff).
    """
    labels = [int(x) for x in labels]
    rng = SplitMix64(seed)
    same = np.zeros((k_same, 2), dtype=np.int64)
    diff = np.zeros((k_diff, 2), dtype=np.int64)
    n_same = n_diff = 0
    n = len(labels)
    for a in range(n):
        la = labels[a]
        for b in range(a + 1, n):
            if labels[b] == la:
                if n_same < k_same:
                    same[n_same, 0] = a
                    same[n_same, 1] = b
                else:
                    j = rng.below(n_same + 1)
                    if j < k_same:
                        same[j, 0] = a
                        same[j, 1] = b
                n_same += 1
            else:
                if n_diff < k_diff:
                    diff[n_diff, 0] = a
                    diff[n_diff, 1] = b
                else:
                    j = rng.below(n_diff + 1)
                    if j < k_diff:
                        diff[j, 0] = a
                        diff[j, 1] = b
                n_diff += 1
    return same[: min(k_same, n_same)], diff[: min(k_diff, n_diff)], n_same, n_diff
