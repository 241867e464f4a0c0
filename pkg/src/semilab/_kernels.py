"""Hot loops with a compiled path and a pure-numpy path.

``partition_scan`` and ``lagged_mollify`` are the two public entry points; each
dispatches on :data:`semilab._accel.USE_NUMBA`.  The ``*_numpy`` variants are
kept importable so the benchmark and the equivalence tests can call both.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, njit


class PartitionOverflow(RuntimeError):
    """Raised when a stopping partition would exceed its length cap."""


# --------------------------------------------------------------------------
# stopping-time partition scan
# --------------------------------------------------------------------------

def _partition_scan_py(values, left, eps, cap):
    n = values.shape[0]
    out = np.empty(min(n, cap), dtype=np.int64)
    out[0] = 0
    count = 1
    anchor = values[0]
    for j in range(1, n):
        if abs(values[j] - anchor) >= eps or abs(left[j] - anchor) >= eps:
            if count >= cap:
                return out, -1
            out[count] = j
            count += 1
            anchor = values[j]
    return out, count


_partition_scan_jit = njit(_partition_scan_py)


def partition_scan_numba(values, left, eps, cap):
    out, count = _partition_scan_jit(values, left, eps, cap)
    if count < 0:
        raise PartitionOverflow(f"stopping partition exceeds cap of {cap} points")
    return out[:count].copy()


def partition_scan_numpy(values, left, eps, cap):
    n = values.shape[0]
    idx = [0]
    start = 0
    window = 16
    while start < n - 1:
        anchor = values[start]
        lo = start + 1
        found = -1
        while lo < n:
            hi = min(n, lo + window)
            hit = (np.abs(values[lo:hi] - anchor) >= eps) | (np.abs(left[lo:hi] - anchor) >= eps)
            pos = np.flatnonzero(hit)
            if pos.size:
                found = lo + int(pos[0])
                break
            lo = hi
            window *= 2
        if found < 0:
            break
        if len(idx) >= cap:
            raise PartitionOverflow(f"stopping partition exceeds cap of {cap} points")
        idx.append(found)
        # next cell is probably about as long as this one
        window = max(16, 2 * (found - start))
        start = found
    return np.asarray(idx, dtype=np.int64)


def partition_scan(values, left, eps, cap):
    """Indices of the level partition: first grid index after each anchor where
    either the value or the left limit moves by at least ``eps``."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    left = np.ascontiguousarray(left, dtype=np.float64)
    if USE_NUMBA:
        return partition_scan_numba(values, left, float(eps), int(cap))
    return partition_scan_numpy(values, left, float(eps), int(cap))


# --------------------------------------------------------------------------
# one-sided mollifier
# --------------------------------------------------------------------------

def bump(x):
    """Unnormalised bump exp(-1/(1-x^2)) on (-1, 1), zero elsewhere."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


def _lagged_mollify_py(knots, widths, h, query, n):
    # h is a step function: value h[j] on [knots[j], knots[j] + widths[j])
    m = query.shape[0]
    out = np.empty(m)
    start = 0
    nk = knots.shape[0]
    for q in range(m):
        t = query[q]
        lo_t = t - 2.0 / n
        while start < nk and knots[start] + widths[start] <= lo_t:
            start += 1
        num = 0.0
        den = 0.0
        j = start
        while j < nk and knots[j] <= t:
            x = n * (t - knots[j] - 0.5 * widths[j]) - 1.0
            if -1.0 < x < 1.0:
                w = math.exp(-1.0 / (1.0 - x * x)) * widths[j]
                num += w * h[j]
                den += w
            j += 1
        if den > 0.0:
            out[q] = num / den
        else:
            # no kernel mass yet: fall back to the latest value known at t
            k = j - 1
            out[q] = h[k] if k >= 0 else 0.0
    return out


_lagged_mollify_jit = njit(_lagged_mollify_py)


def lagged_mollify_numba(knots, widths, h, query, n):
    return _lagged_mollify_jit(knots, widths, h, query, float(n))


def lagged_mollify_numpy(knots, widths, h, query, n):
    out = np.empty(query.shape[0])
    mids = knots + 0.5 * widths
    lo = np.searchsorted(knots + widths, query - 2.0 / n, side="right")
    hi = np.searchsorted(knots, query, side="right")
    for q, t in enumerate(query):
        sl = slice(lo[q], hi[q])
        w = bump(n * (t - mids[sl]) - 1.0) * widths[sl]
        den = w.sum()
        if den > 0.0:
            out[q] = np.dot(w, h[sl]) / den
        else:
            k = hi[q] - 1
            out[q] = h[k] if k >= 0 else 0.0
    return out


def lagged_mollify(knots, widths, h, query, n):
    """Kernel average of ``h`` over ``(t - 2/n, t]`` for every query time ``t``.

    The kernel is ``bump(n(t - s) - 1)``; it vanishes at ``s = t`` and at
    ``s = t - 2/n`` so no value recorded after ``t`` is ever read.  Weights are
    renormalised over the available mass, which handles the burn-in window.
    """
    args = [np.ascontiguousarray(a, dtype=np.float64) for a in (knots, widths, h, query)]
    if USE_NUMBA:
        return lagged_mollify_numba(*args, n)
    return lagged_mollify_numpy(*args, n)


# --------------------------------------------------------------------------
# truncation-ladder sup distances
# --------------------------------------------------------------------------

def _band_sups_py(terms, band, n_bands, horizon_idx):
    # terms[r, k] is the increment on cell k (closing at grid index k + 1);
    # band[r, k] = j >= 1 means it enters between rungs j-1 and j.
    rows, cells = terms.shape
    nh = horizon_idx.shape[0]
    out = np.zeros((rows, n_bands, nh))
    running = np.zeros(n_bands + 1)
    best = np.zeros(n_bands + 1)
    for r in range(rows):
        running[:] = 0.0
        best[:] = 0.0
        h = 0
        while h < nh and horizon_idx[h] <= 0:
            h += 1
        for k in range(cells):
            b = band[r, k]
            if b >= 1:
                running[b] += terms[r, k]
                a = abs(running[b])
                if a > best[b]:
                    best[b] = a
            while h < nh and horizon_idx[h] <= k + 1:
                for j in range(n_bands):
                    out[r, j, h] = best[j + 1]
                h += 1
        while h < nh:
            for j in range(n_bands):
                out[r, j, h] = best[j + 1]
            h += 1
    return out


_band_sups_jit = njit(_band_sups_py)


def band_sups_numba(terms, band, n_bands, horizon_idx):
    return _band_sups_jit(terms, band, n_bands, horizon_idx)


def band_sups_numpy(terms, band, n_bands, horizon_idx):
    rows = terms.shape[0]
    out = np.zeros((rows, n_bands, horizon_idx.size))
    for j in range(1, n_bands + 1):
        run = np.cumsum(np.where(band == j, terms, 0.0), axis=1)
        best = np.maximum.accumulate(np.abs(run), axis=1)
        for h, k in enumerate(horizon_idx):
            out[:, j - 1, h] = best[:, k - 1] if k > 0 else 0.0
    return out


def band_sups(terms, band, n_bands, horizon_idx):
    """sup_{t <= T} |sum of band-j terms up to t| for each row, band and horizon index."""
    terms = np.ascontiguousarray(terms, dtype=np.float64)
    band = np.ascontiguousarray(np.broadcast_to(band, terms.shape), dtype=np.int16)
    horizon_idx = np.ascontiguousarray(horizon_idx, dtype=np.int64)
    if USE_NUMBA:
        return band_sups_numba(terms, band, int(n_bands), horizon_idx)
    return band_sups_numpy(terms, band, int(n_bands), horizon_idx)
