# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Contracts and band-storage layout match _fallback;
expression order is kept identical so both implementations agree bitwise
(the build disables floating-point contraction for the same reason)."""

from libc.math cimport INFINITY, ceil
from libc.stdlib cimport free, malloc, realloc

import numpy as np

from ..errors import NumericalFailureError


def solve_banded_spd(ab_in, Py_ssize_t k, rhs):
    """Solve A x = rhs, A symmetric positive-definite with bandwidth k.

    See _fallback.solve_banded_spd for the full contract.
    """
    ab_arr = np.array(ab_in, dtype=np.float64, order="C", copy=True)
    y_arr = np.array(rhs, dtype=np.float64, copy=True)
    cdef double[:, ::1] ab = ab_arr
    cdef double[::1] y = y_arr
    cdef Py_ssize_t n = ab.shape[1]
    if ab.shape[0] != 2 * k + 1:
        raise ValueError(f"band storage must have 2k+1={2 * k + 1} rows, got {ab.shape[0]}")
    if y.shape[0] != n:
        raise ValueError("rhs length does not match system size")

    cdef Py_ssize_t col, jj, i, m, r0, lo
    cdef double piv, u, yj, xj

    for col in range(n):
        piv = ab[k, col]
        if not piv > 0.0:
            raise NumericalFailureError(
                f"non-positive pivot {piv!r} at column {col} during banded LU"
            )
        m = n - 1 - col
        if m > k:
            m = k
        if m == 0:
            continue
        for i in range(1, m + 1):
            ab[k + i, col] = ab[k + i, col] / piv
        for jj in range(col + 1, col + 1 + m):
            u = ab[k + col - jj, jj]
            if u != 0.0:
                r0 = k + col + 1 - jj
                for i in range(m):
                    ab[r0 + i, jj] = ab[r0 + i, jj] - ab[k + 1 + i, col] * u

    for col in range(n - 1):
        yj = y[col]
        if yj != 0.0:
            m = n - 1 - col
            if m > k:
                m = k
            for i in range(m):
                y[col + 1 + i] = y[col + 1 + i] - ab[k + 1 + i, col] * yj

    for col in range(n - 1, -1, -1):
        y[col] = y[col] / ab[k, col]
        xj = y[col]
        if xj != 0.0:
            lo = col - k
            if lo < 0:
                lo = 0
            for i in range(lo, col):
                y[i] = y[i] - ab[k + i - col, col] * xj
    return y_arr


cdef inline Py_ssize_t _patch_index(double f, Py_ssize_t limit) noexcept nogil:
    cdef Py_ssize_t idx = <Py_ssize_t>ceil(f) - 1
    if idx < 0:
        idx = 0
    if idx > limit - 2:
        idx = limit - 2
    return idx


def bilinear_values(field_in, double origin_x, double origin_y, double resolution,
                    xs_in, ys_in):
    field_arr = np.ascontiguousarray(field_in, dtype=np.float64)
    xs_arr = np.ascontiguousarray(xs_in, dtype=np.float64)
    ys_arr = np.ascontiguousarray(ys_in, dtype=np.float64)
    cdef const double[:, ::1] field = field_arr
    cdef const double[::1] xs = xs_arr
    cdef const double[::1] ys = ys_arr
    cdef Py_ssize_t h = field.shape[0], w = field.shape[1]
    cdef Py_ssize_t npts = xs.shape[0]
    out_arr = np.empty(npts, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t p, x0, y0
    cdef double fx, fy, tx, ty, f00, f10, f01, f11
    for p in range(npts):
        fx = (xs[p] - origin_x) / resolution - 0.5
        fy = (ys[p] - origin_y) / resolution - 0.5
        x0 = _patch_index(fx, w)
        y0 = _patch_index(fy, h)
        tx = fx - x0
        ty = fy - y0
        f00 = field[y0, x0]
        f10 = field[y0, x0 + 1]
        f01 = field[y0 + 1, x0]
        f11 = field[y0 + 1, x0 + 1]
        out[p] = (1.0 - ty) * ((1.0 - tx) * f00 + tx * f10) + ty * ((1.0 - tx) * f01 + tx * f11)
    return out_arr


def bilinear_with_gradient(field_in, double origin_x, double origin_y, double resolution,
                           xs_in, ys_in):
    field_arr = np.ascontiguousarray(field_in, dtype=np.float64)
    xs_arr = np.ascontiguousarray(xs_in, dtype=np.float64)
    ys_arr = np.ascontiguousarray(ys_in, dtype=np.float64)
    cdef const double[:, ::1] field = field_arr
    cdef const double[::1] xs = xs_arr
    cdef const double[::1] ys = ys_arr
    cdef Py_ssize_t h = field.shape[0], w = field.shape[1]
    cdef Py_ssize_t npts = xs.shape[0]
    values_arr = np.empty(npts, dtype=np.float64)
    gx_arr = np.empty(npts, dtype=np.float64)
    gy_arr = np.empty(npts, dtype=np.float64)
    cdef double[::1] values = values_arr
    cdef double[::1] gx = gx_arr
    cdef double[::1] gy = gy_arr
    cdef Py_ssize_t p, x0, y0
    cdef double fx, fy, tx, ty, f00, f10, f01, f11
    for p in range(npts):
        fx = (xs[p] - origin_x) / resolution - 0.5
        fy = (ys[p] - origin_y) / resolution - 0.5
        x0 = _patch_index(fx, w)
        y0 = _patch_index(fy, h)
        tx = fx - x0
        ty = fy - y0
        f00 = field[y0, x0]
        f10 = field[y0, x0 + 1]
        f01 = field[y0 + 1, x0]
        f11 = field[y0 + 1, x0 + 1]
        values[p] = (1.0 - ty) * ((1.0 - tx) * f00 + tx * f10) + ty * ((1.0 - tx) * f01 + tx * f11)
        gx[p] = ((1.0 - ty) * (f10 - f00) + ty * (f11 - f01)) / resolution
        gy[p] = ((1.0 - tx) * (f01 - f00) + tx * (f11 - f10)) / resolution
    return values_arr, gx_arr, gy_arr


# --- binary min-heap on (cost, counter) for the grid Dijkstra -------------

cdef struct _Heap:
    double* cost
    long long* counter
    long long* cell
    Py_ssize_t size
    Py_ssize_t cap


cdef inline bint _heap_init(_Heap* hp, Py_ssize_t cap) noexcept nogil:
    hp.cost = <double*>malloc(cap * sizeof(double))
    hp.counter = <long long*>malloc(cap * sizeof(long long))
    hp.cell = <long long*>malloc(cap * sizeof(long long))
    hp.size = 0
    hp.cap = cap
    return hp.cost != NULL and hp.counter != NULL and hp.cell != NULL


cdef inline void _heap_free(_Heap* hp) noexcept nogil:
    free(hp.cost)
    free(hp.counter)
    free(hp.cell)


cdef inline bint _heap_grow(_Heap* hp) noexcept nogil:
    cdef Py_ssize_t cap = hp.cap * 2
    hp.cost = <double*>realloc(hp.cost, cap * sizeof(double))
    hp.counter = <long long*>realloc(hp.counter, cap * sizeof(long long))
    hp.cell = <long long*>realloc(hp.cell, cap * sizeof(long long))
    hp.cap = cap
    return hp.cost != NULL and hp.counter != NULL and hp.cell != NULL


cdef inline bint _heap_less(_Heap* hp, double c, long long n, Py_ssize_t j) noexcept nogil:
    if c != hp.cost[j]:
        return c < hp.cost[j]
    return n < hp.counter[j]


cdef inline bint _heap_push(_Heap* hp, double c, long long n, long long cell) noexcept nogil:
    cdef Py_ssize_t i, parent
    if hp.size == hp.cap:
        if not _heap_grow(hp):
            return False
    i = hp.size
    hp.size += 1
    while i > 0:
        parent = (i - 1) >> 1
        if _heap_less(hp, c, n, parent):
            hp.cost[i] = hp.cost[parent]
            hp.counter[i] = hp.counter[parent]
            hp.cell[i] = hp.cell[parent]
            i = parent
        else:
            break
    hp.cost[i] = c
    hp.counter[i] = n
    hp.cell[i] = cell
    return True


cdef inline void _heap_pop(_Heap* hp, double* c_out, long long* cell_out) noexcept nogil:
    cdef double c = hp.cost[0]
    cdef long long cell = hp.cell[0]
    cdef Py_ssize_t i = 0, child
    cdef double lc
    cdef long long ln, lcell
    hp.size -= 1
    lc = hp.cost[hp.size]
    ln = hp.counter[hp.size]
    lcell = hp.cell[hp.size]
    while True:
        child = 2 * i + 1
        if child >= hp.size:
            break
        if child + 1 < hp.size and _heap_less(hp, hp.cost[child + 1], hp.counter[child + 1], child):
            child += 1
        if _heap_less(hp, lc, ln, child):
            break
        hp.cost[i] = hp.cost[child]
        hp.counter[i] = hp.counter[child]
        hp.cell[i] = hp.cell[child]
        i = child
    hp.cost[i] = lc
    hp.counter[i] = ln
    hp.cell[i] = lcell
    c_out[0] = c
    cell_out[0] = cell


def dijkstra_grid(blocked_in, Py_ssize_t goal_ix, Py_ssize_t goal_iy, moves_in, move_costs_in):
    """Grid Dijkstra with FIFO tie-breaking; see _fallback.dijkstra_grid."""
    blocked_arr = np.ascontiguousarray(blocked_in, dtype=np.uint8)
    moves_arr = np.ascontiguousarray(moves_in, dtype=np.int64)
    costs_arr = np.ascontiguousarray(move_costs_in, dtype=np.float64)
    cdef const unsigned char[:, ::1] blocked = blocked_arr
    cdef const long long[:, ::1] moves = moves_arr
    cdef const double[::1] mcost = costs_arr
    cdef Py_ssize_t h = blocked.shape[0], w = blocked.shape[1]
    cdef Py_ssize_t n_moves = moves.shape[0]
    cost_arr = np.full((h, w), np.inf, dtype=np.float64)
    pred_arr = np.full((h, w), -1, dtype=np.int32)
    cdef double[:, ::1] cost = cost_arr
    cdef int[:, ::1] pred = pred_arr
    if blocked[goal_iy, goal_ix]:
        return cost_arr, pred_arr

    cdef _Heap hp
    if not _heap_init(&hp, 1024):
        _heap_free(&hp)
        raise MemoryError("dijkstra heap allocation failed")

    cdef long long counter = 1
    cdef double c, nc
    cdef long long cell
    cdef Py_ssize_t x, y, nx, ny, m
    cdef bint ok = True
    try:
        cost[goal_iy, goal_ix] = 0.0
        _heap_push(&hp, 0.0, 0, goal_iy * w + goal_ix)
        with nogil:
            while hp.size > 0:
                _heap_pop(&hp, &c, &cell)
                x = cell % w
                y = cell // w
                if c > cost[y, x]:
                    continue
                for m in range(n_moves):
                    nx = x + moves[m, 0]
                    ny = y + moves[m, 1]
                    if 0 <= nx < w and 0 <= ny < h and blocked[ny, nx] == 0:
                        nc = c + mcost[m]
                        if nc < cost[ny, nx]:
                            cost[ny, nx] = nc
                            pred[ny, nx] = <int>m
                            if not _heap_push(&hp, nc, counter, ny * w + nx):
                                ok = False
                                break
                            counter += 1
                if not ok:
                    break
    finally:
        _heap_free(&hp)
    if not ok:
        raise MemoryError("dijkstra heap reallocation failed")
    return cost_arr, pred_arr
