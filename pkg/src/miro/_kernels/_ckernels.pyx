# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled backend for the hot kernels (see _pykernels for the reference)."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


def segment_sum(values, targets, Py_ssize_t n_out):
    """Sum rows of values into n_out buckets; matches _pykernels bit for bit."""
    cdef const double[:, ::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef const long long[::1] t = np.ascontiguousarray(targets, dtype=np.int64)
    cdef Py_ssize_t E = v.shape[0], D = v.shape[1], e, d
    out_arr = np.zeros((n_out, D), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef long long tgt
    for e in range(E):
        tgt = t[e]
        for d in range(D):
            out[tgt, d] += v[e, d]
    return out_arr


cdef Py_ssize_t _lower_bound(long long[::1] arr, long long key) nogil:
    cdef Py_ssize_t lo = 0, hi = arr.shape[0], mid
    while lo < hi:
        mid = (lo + hi) // 2
        if arr[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef void _insertion_sort(long long[::1] a, Py_ssize_t n) nogil:
    cdef Py_ssize_t i, j
    cdef long long x
    for i in range(1, n):
        x = a[i]
        j = i - 1
        while j >= 0 and a[j] > x:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = x


def dbscan_labels(coords, double eps, long long min_pts):
    """DBSCAN with a uniform grid index; identical semantics to _pykernels."""
    cdef const double[:, ::1] xy = np.ascontiguousarray(coords, dtype=np.float64)
    cdef Py_ssize_t n = xy.shape[0]
    labels_arr = np.full(n, -2, dtype=np.int64)
    cdef long long[::1] labels = labels_arr
    if n == 0:
        return labels_arr

    cdef double xmin = xy[0, 0], ymin = xy[0, 1]
    cdef double xmax = xy[0, 0], ymax = xy[0, 1]
    cdef Py_ssize_t i
    for i in range(n):
        if xy[i, 0] < xmin:
            xmin = xy[i, 0]
        if xy[i, 0] > xmax:
            xmax = xy[i, 0]
        if xy[i, 1] < ymin:
            ymin = xy[i, 1]
        if xy[i, 1] > ymax:
            ymax = xy[i, 1]

    # cell-index overflow happens only for eps vastly smaller than the
    # extent; fall back to a full quadratic scan there (checked in float
    # before any integer cast)
    cdef bint use_grid = ((xmax - xmin) / eps < 2147483648.0
                          and (ymax - ymin) / eps < 2147483648.0)

    cdef long long[::1] cx = np.empty(n, dtype=np.int64)
    cdef long long[::1] cy = np.empty(n, dtype=np.int64)
    cdef long long nx = 0, ny = 1
    cdef long long[::1] skeys
    cdef long long[::1] order
    if use_grid:
        ny = 0
        for i in range(n):
            cx[i] = <long long> ((xy[i, 0] - xmin) / eps)
            cy[i] = <long long> ((xy[i, 1] - ymin) / eps)
            if cx[i] >= nx:
                nx = cx[i] + 1
            if cy[i] >= ny:
                ny = cy[i] + 1
        keys_arr = np.asarray(cx) * ny + np.asarray(cy)
        order_arr = np.argsort(keys_arr, kind="stable").astype(np.int64)
        skeys_arr = keys_arr[order_arr]
        skeys = skeys_arr
        order = order_arr
    else:
        skeys = np.empty(0, dtype=np.int64)
        order = np.empty(0, dtype=np.int64)

    cdef long long[::1] neigh = np.empty(n, dtype=np.int64)
    cdef long long[::1] queue = np.empty(n, dtype=np.int64)
    cdef long long[::1] queued = np.full(n, -1, dtype=np.int64)  # cluster stamp
    cdef double eps2 = eps * eps, dx, dy
    cdef Py_ssize_t cnt, qhead, qtail, t, lo, hi
    cdef long long cid = 0, gx, gy, key, j, dxi, dyi

    cdef Py_ssize_t p, q
    for p in range(n):
        if labels[p] != -2:
            continue
        cnt = _region(xy, p, eps2, use_grid, cx, cy, ny, skeys, order, neigh)
        if cnt < min_pts:
            labels[p] = -1
            continue
        labels[p] = cid
        qhead = 0
        qtail = 0
        for t in range(cnt):
            j = neigh[t]
            if j != p and queued[j] != cid:
                queued[j] = cid
                queue[qtail] = j
                qtail += 1
        while qhead < qtail:
            j = queue[qhead]
            qhead += 1
            if labels[j] == -1:
                labels[j] = cid
            if labels[j] != -2:
                continue
            labels[j] = cid
            cnt = _region(xy, <Py_ssize_t> j, eps2, use_grid, cx, cy, ny, skeys, order, neigh)
            if cnt >= min_pts:
                for t in range(cnt):
                    q = <Py_ssize_t> neigh[t]
                    if queued[q] != cid and labels[q] < 0:
                        queued[q] = cid
                        queue[qtail] = q
                        qtail += 1
        cid += 1
    return labels_arr


cdef Py_ssize_t _region(const double[:, ::1] xy, Py_ssize_t i, double eps2, bint use_grid,
                        long long[::1] cx, long long[::1] cy, long long ny,
                        long long[::1] skeys, long long[::1] order,
                        long long[::1] out) nogil:
    """Indices within eps of point i (itself included), ascending."""
    cdef Py_ssize_t cnt = 0, t, lo, hi, n = xy.shape[0]
    cdef long long dxi, dyi, gx, gy, key, j
    cdef double dx, dy
    if not use_grid:
        for t in range(n):
            dx = xy[t, 0] - xy[i, 0]
            dy = xy[t, 1] - xy[i, 1]
            if dx * dx + dy * dy <= eps2:
                out[cnt] = t
                cnt += 1
        return cnt
    for dxi in range(-1, 2):
        gx = cx[i] + dxi
        if gx < 0:
            continue
        for dyi in range(-1, 2):
            gy = cy[i] + dyi
            if gy < 0 or gy >= ny:
                continue
            key = gx * ny + gy
            lo = _lower_bound(skeys, key)
            hi = lo
            while hi < skeys.shape[0] and skeys[hi] == key:
                hi += 1
            for t in range(lo, hi):
                j = order[t]
                dx = xy[j, 0] - xy[i, 0]
                dy = xy[j, 1] - xy[i, 1]
                if dx * dx + dy * dy <= eps2:
                    out[cnt] = j
                    cnt += 1
    _insertion_sort(out, cnt)
    return cnt
