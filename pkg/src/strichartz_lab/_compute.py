"""Hot numeric kernels, each with a numba and a pure-numpy implementation.

Public entry points dispatch on :func:`strichartz_lab._accel.numba_enabled`
at call time.  Reductions use a fixed pairwise tree (pad to a power of two,
fold the upper half onto the lower half) so sums are reproducible bit for bit,
and the numba and numpy trees perform the same additions in the same order.
"""

import math

import numpy as np

from . import _accel
from ._accel import njit

__all__ = [
    "tree_sum",
    "tree_sum_rows",
    "direct_sum",
    "row_power_means",
    "row_power_stats",
    "broad_narrow_scan",
    "fill_phased",
]

_CHUNK_ELEMS = 1 << 20


# ---------------------------------------------------------------- tree sums


def _tree_sum_rows_np(a):
    a = np.asarray(a)
    n = a.shape[-1]
    if n == 0:
        return np.zeros(a.shape[:-1], dtype=a.dtype)
    m = 1 << (n - 1).bit_length()
    buf = np.zeros(a.shape[:-1] + (m,), dtype=a.dtype)
    buf[..., :n] = a
    while m > 1:
        m //= 2
        buf[..., :m] += buf[..., m : 2 * m]
    return buf[..., 0].copy()


@njit
def _tree_fold(buf, m):
    while m > 1:
        m //= 2
        for i in range(m):
            buf[i] += buf[i + m]
    return buf[0]


@njit
def _tree_sum_rows_nb(a):
    rows, n = a.shape
    out = np.zeros(rows, dtype=a.dtype)
    if n == 0:
        return out
    m = 1
    while m < n:
        m *= 2
    buf = np.zeros(m, dtype=a.dtype)
    for r in range(rows):
        for i in range(n):
            buf[i] = a[r, i]
        for i in range(n, m):
            buf[i] = 0
        out[r] = _tree_fold(buf, m)
    return out


def tree_sum_rows(a):
    """Pairwise-tree sum along the last axis of a 2-D array."""
    a = np.ascontiguousarray(a)
    if a.ndim != 2:
        raise ValueError("tree_sum_rows expects a 2-D array")
    if _accel.numba_enabled() and a.dtype in (np.float64, np.complex128):
        return _tree_sum_rows_nb(a)
    return _tree_sum_rows_np(a)


def tree_sum(a):
    """Pairwise-tree sum of a 1-D array."""
    a = np.asarray(a).reshape(1, -1)
    return tree_sum_rows(a)[0]


# ------------------------------------------------------- power means per row


def _row_power_means_np(v, q, mask):
    v = np.asarray(v)
    half = q / 2.0
    if float(half).is_integer() and half >= 1:
        s = v.real * v.real + v.imag * v.imag
        r = s.copy()
        for _ in range(int(half) - 1):
            r *= s
    else:
        r = np.abs(v) ** q
    if mask is not None:
        r = np.where(mask, r, 0.0)
    return _tree_sum_rows_np(r) / v.shape[-1]


@njit
def _row_power_means_nb(v, p_int, q, mask, use_mask):
    rows, n = v.shape
    out = np.zeros(rows)
    m = 1
    while m < n:
        m *= 2
    buf = np.zeros(m)
    for r in range(rows):
        for i in range(n):
            z = v[r, i]
            if use_mask and not mask[r, i]:
                buf[i] = 0.0
                continue
            if p_int > 0:
                s = z.real * z.real + z.imag * z.imag
                acc = s
                for _ in range(p_int - 1):
                    acc *= s
                buf[i] = acc
            else:
                buf[i] = abs(z) ** q
        for i in range(n, m):
            buf[i] = 0.0
        out[r] = _tree_fold(buf, m) / n
    return out


def row_power_means(values, q, mask=None):
    """Mean of ``|values|**q`` along the last axis of a 2-D complex array.

    Even integer ``q`` is computed by repeated multiplication of ``|v|^2``.
    """
    v = np.ascontiguousarray(values, dtype=np.complex128)
    if v.ndim != 2:
        raise ValueError("row_power_means expects a 2-D array")
    if mask is not None:
        mask = np.ascontiguousarray(np.broadcast_to(mask, v.shape), dtype=np.bool_)
    if _accel.numba_enabled():
        half = q / 2.0
        p_int = int(half) if (float(half).is_integer() and half >= 1) else 0
        dummy = mask if mask is not None else np.zeros((1, 1), dtype=np.bool_)
        return _row_power_means_nb(v, p_int, float(q), dummy, mask is not None)
    return _row_power_means_np(v, q, mask)


def _row_power_stats_np(v, q, thr2):
    s = v.real * v.real + v.imag * v.imag
    half = q / 2.0
    if float(half).is_integer() and half >= 1:
        r = s.copy()
        for _ in range(int(half) - 1):
            r *= s
    else:
        r = s ** half
    n = v.shape[-1]
    means = _tree_sum_rows_np(r) / n
    frac = np.count_nonzero(s >= thr2, axis=-1) / n
    return means, frac


@njit
def _row_power_stats_nb(v, p_int, half, thr2):
    rows, n = v.shape
    means = np.zeros(rows)
    frac = np.zeros(rows)
    m = 1
    while m < n:
        m *= 2
    buf = np.zeros(m)
    for r in range(rows):
        cnt = 0
        for i in range(n):
            z = v[r, i]
            s = z.real * z.real + z.imag * z.imag
            if s >= thr2:
                cnt += 1
            if p_int > 0:
                acc = s
                for _ in range(p_int - 1):
                    acc *= s
                buf[i] = acc
            else:
                buf[i] = s**half
        for i in range(n, m):
            buf[i] = 0.0
        means[r] = _tree_fold(buf, m) / n
        frac[r] = cnt / n
    return means, frac


def row_power_stats(values, q, threshold):
    """Per row: mean of ``|v|**q`` and the fraction of entries with ``|v| >= threshold``.

    The threshold test is done on ``|v|^2 >= threshold^2``.
    """
    v = np.ascontiguousarray(values, dtype=np.complex128)
    if v.ndim != 2:
        raise ValueError("row_power_stats expects a 2-D array")
    thr = abs(float(threshold))
    thr2 = thr * thr if thr < 1e150 else math.inf
    if _accel.numba_enabled():
        half = q / 2.0
        p_int = int(half) if (float(half).is_integer() and half >= 1) else 0
        return _row_power_stats_nb(v, p_int, float(half), thr2)
    return _row_power_stats_np(v, q, thr2)


# ------------------------------------------------------- slice assembly


def _fill_phased_np(out, flat, steps, base, scale):
    out[:, flat] = steps * base * scale[:, None]


@njit
def _fill_phased_nb(out, flat, steps, base, scale):
    rows, n = steps.shape
    for r in range(rows):
        sr = scale[r]
        for c in range(n):
            out[r, flat[c]] = steps[r, c] * base[c] * sr


def fill_phased(out, flat, steps, base, scale):
    """``out[r, flat[c]] = steps[r, c] * base[c] * scale[r]``; other entries untouched."""
    if _accel.numba_enabled():
        _fill_phased_nb(out, flat, steps, base, np.ascontiguousarray(scale, dtype=np.float64))
    else:
        _fill_phased_np(out, flat, steps, base, scale)


# ------------------------------------------------------------ direct sums


def _direct_sum_np(x, t, k, w, coef):
    P = x.shape[0]
    out = np.empty(P, dtype=np.complex128)
    step = max(1, _CHUNK_ELEMS // max(1, k.shape[0]))
    kt = k.T
    for s in range(0, P, step):
        ph = x[s : s + step] @ kt + np.outer(t[s : s + step], w)
        out[s : s + step] = np.exp(1j * ph) @ coef
    return out


@njit
def _direct_sum_nb(x, t, k, w, coef):
    P, d = x.shape
    N = k.shape[0]
    out = np.empty(P, dtype=np.complex128)
    for p in range(P):
        re = 0.0
        im = 0.0
        tp = t[p]
        for j in range(N):
            ph = tp * w[j]
            for a in range(d):
                ph += x[p, a] * k[j, a]
            c = math.cos(ph)
            s = math.sin(ph)
            cj = coef[j]
            re += cj.real * c - cj.imag * s
            im += cj.real * s + cj.imag * c
        out[p] = re + 1j * im
    return out


def direct_sum(x, t, k, coef, time_weights):
    """Brute-force exponential sum at scattered points.

    Returns ``sum_j coef[j] * exp(i (x[p] . k[j] + t[p] * time_weights[j]))``
    for each point ``p``.  ``x`` is ``(P, d)``, ``t`` is ``(P,)``, ``k`` is
    ``(N, d)``.
    """
    x = np.ascontiguousarray(np.atleast_2d(x), dtype=np.float64)
    t = np.ascontiguousarray(t, dtype=np.float64).reshape(-1)
    k = np.ascontiguousarray(np.atleast_2d(k), dtype=np.float64)
    w = np.ascontiguousarray(time_weights, dtype=np.float64).reshape(-1)
    coef = np.ascontiguousarray(coef, dtype=np.complex128).reshape(-1)
    if x.shape[0] != t.shape[0]:
        raise ValueError("x and t must describe the same number of points")
    if k.shape[0] != coef.shape[0] or w.shape[0] != coef.shape[0]:
        raise ValueError("k, coef and time_weights must have equal length")
    if k.shape[0] == 0:
        return np.zeros(x.shape[0], dtype=np.complex128)
    if _accel.numba_enabled():
        return _direct_sum_nb(x, t, k, w, coef)
    return _direct_sum_np(x, t, k, w, coef)


# ------------------------------------------------------ broad/narrow scan


def _broad_narrow_np(vals, sep, big_ratio, c1, broad_factor):
    C, P = vals.shape
    mods = np.abs(vals)
    star = np.argmax(mods, axis=0)
    vmax = mods[star, np.arange(P)]
    big = mods >= big_ratio * vmax
    big_count = big.sum(axis=0)
    broad = np.any(big & sep[star].T, axis=0)
    lhs = np.abs(vals.sum(axis=0))
    ia, ib = np.nonzero(np.triu(sep, 1))
    if ia.size:
        pairmax = np.empty(P)
        step = max(1, _CHUNK_ELEMS // ia.size)
        for s in range(0, P, step):
            blk = mods[:, s : s + step]
            pairmax[s : s + step] = np.sqrt((blk[ia] * blk[ib]).max(axis=0))
    else:
        pairmax = np.zeros(P)
    bound = np.where(broad, broad_factor * pairmax, c1 * vmax)
    return star, big_count, broad, lhs, bound


@njit
def _broad_narrow_nb(vals, sep, big_ratio, c1, broad_factor):
    C, P = vals.shape
    star = np.empty(P, dtype=np.int64)
    big_count = np.empty(P, dtype=np.int64)
    broad = np.empty(P, dtype=np.bool_)
    lhs = np.empty(P)
    bound = np.empty(P)
    mods = np.empty(C)
    for p in range(P):
        vmax = -1.0
        js = 0
        tot = 0j
        for c in range(C):
            z = vals[c, p]
            tot += z
            mods[c] = abs(z)
            if mods[c] > vmax:
                vmax = mods[c]
                js = c
        thr = big_ratio * vmax
        nb = 0
        isb = False
        for c in range(C):
            if mods[c] >= thr:
                nb += 1
                if sep[js, c]:
                    isb = True
        pm = 0.0
        for a in range(C):
            for b in range(a + 1, C):
                if sep[a, b]:
                    pr = mods[a] * mods[b]
                    if pr > pm:
                        pm = pr
        star[p] = js
        big_count[p] = nb
        broad[p] = isb
        lhs[p] = abs(tot)
        bound[p] = broad_factor * math.sqrt(pm) if isb else c1 * vmax
    return star, big_count, broad, lhs, bound


def broad_narrow_scan(vals, sep, big_ratio, c1, broad_factor):
    """Pointwise broad/narrow classification.

    ``vals`` is ``(C, P)``: child values at ``P`` points.  ``sep`` is the
    ``(C, C)`` separation matrix.  Returns ``(star, big_count, broad, lhs,
    bound)`` where ``bound`` is ``c1 * max`` at narrow points and
    ``broad_factor * max_sep_pair |v_a v_b|^(1/2)`` at broad points.
    """
    vals = np.ascontiguousarray(vals, dtype=np.complex128)
    sep = np.ascontiguousarray(sep, dtype=np.bool_)
    if _accel.numba_enabled():
        return _broad_narrow_nb(vals, sep, float(big_ratio), float(c1), float(broad_factor))
    return _broad_narrow_np(vals, sep, float(big_ratio), float(c1), float(broad_factor))
