"""Uniform cubic B-spline interpolation kernels (numba).

Coefficients come from scipy.ndimage.spline_filter with mode='mirror'; the
evaluators below reflect out-of-range coefficient indices the same way.
"""
from __future__ import annotations

import numpy as np
from numba import njit
from scipy import ndimage


def prefilter(values: np.ndarray) -> np.ndarray:
    """Cubic B-spline coefficients of a real array (any dimension)."""
    return ndimage.spline_filter(np.asarray(values, dtype=np.float64), order=3,
                                 mode="mirror", output=np.float64)


@njit(cache=True, inline="always")
def _mirror(i, n):
    if n == 1:
        return 0
    period = 2 * (n - 1)
    i = abs(i) % period
    if i >= n:
        i = period - i
    return i


@njit(cache=True, inline="always")
def _weights(t):
    # t in [0, 1): weights for nodes i-1, i, i+1, i+2
    t2 = t * t
    t3 = t2 * t
    w0 = (1.0 - 3.0 * t + 3.0 * t2 - t3) / 6.0
    w1 = (4.0 - 6.0 * t2 + 3.0 * t3) / 6.0
    w2 = (1.0 + 3.0 * t + 3.0 * t2 - 3.0 * t3) / 6.0
    w3 = t3 / 6.0
    return w0, w1, w2, w3


@njit(cache=True)
def eval_1d(coef, h, x):
    """Spline at abscissa x >= 0 on nodes 0, h, 2h, ... (mirror-even about 0)."""
    n = coef.shape[0]
    s = abs(x) / h
    i = int(np.floor(s))
    t = s - i
    w0, w1, w2, w3 = _weights(t)
    return (w0 * coef[_mirror(i - 1, n)] + w1 * coef[_mirror(i, n)]
            + w2 * coef[_mirror(i + 1, n)] + w3 * coef[_mirror(i + 2, n)])


@njit(cache=True)
def eval_3d(cr, ci, lo, h, x, y, z):
    """Complex spline value (re, im) at (x, y, z) on the cube with corner lo."""
    n = cr.shape[0]
    sx = (x - lo) / h
    sy = (y - lo) / h
    sz = (z - lo) / h
    ix = int(np.floor(sx))
    iy = int(np.floor(sy))
    iz = int(np.floor(sz))
    ax = _weights(sx - ix)
    ay = _weights(sy - iy)
    az = _weights(sz - iz)
    re = 0.0
    im = 0.0
    for a in range(4):
        ja = _mirror(ix - 1 + a, n)
        wa = ax[a]
        for b in range(4):
            jb = _mirror(iy - 1 + b, n)
            wab = wa * ay[b]
            for c in range(4):
                jc = _mirror(iz - 1 + c, n)
                w = wab * az[c]
                re += w * cr[ja, jb, jc]
                im += w * ci[ja, jb, jc]
    return re, im


@njit(cache=True)
def eval_3d_many(cr, ci, lo, h, pts, out_re, out_im):
    for p in range(pts.shape[0]):
        r, i = eval_3d(cr, ci, lo, h, pts[p, 0], pts[p, 1], pts[p, 2])
        out_re[p] = r
        out_im[p] = i


@njit(cache=True)
def eval_1d_many(coef, h, xs, out):
    for p in range(xs.shape[0]):
        out[p] = eval_1d(coef, h, xs[p])


@njit(cache=True)
def trilinear_many(vr, vi, lo, h, pts, out_re, out_im):
    n = vr.shape[0]
    for p in range(pts.shape[0]):
        sx = (pts[p, 0] - lo) / h
        sy = (pts[p, 1] - lo) / h
        sz = (pts[p, 2] - lo) / h
        ix = min(max(int(np.floor(sx)), 0), n - 2)
        iy = min(max(int(np.floor(sy)), 0), n - 2)
        iz = min(max(int(np.floor(sz)), 0), n - 2)
        tx = sx - ix
        ty = sy - iy
        tz = sz - iz
        re = 0.0
        im = 0.0
        for a in range(2):
            wa = tx if a else 1.0 - tx
            for b in range(2):
                wb = ty if b else 1.0 - ty
                for c in range(2):
                    wc = tz if c else 1.0 - tz
                    w = wa * wb * wc
                    re += w * vr[ix + a, iy + b, iz + c]
                    im += w * vi[ix + a, iy + b, iz + c]
        out_re[p] = re
        out_im[p] = im


@njit(cache=True)
def hermite_1d(vals, ders, dz, z):
    """Cubic Hermite interpolation of a table on 0, dz, 2 dz, ...; zero beyond it."""
    z = abs(z)
    t = z / dz
    i = int(t)
    n = vals.shape[0]
    if i >= n - 1:
        if i == n - 1 and t == n - 1:
            return vals[n - 1]
        return 0.0
    u = t - i
    u1 = 1.0 - u
    return ((1.0 + 2.0 * u) * u1 * u1 * vals[i] + u * u1 * u1 * dz * ders[i]
            + u * u * (3.0 - 2.0 * u) * vals[i + 1] - u * u * u1 * dz * ders[i + 1])
