"""Pure-numpy implementations of the hot kernels.

Same contracts as the compiled module `_native`; selected at import time when
the extension is unavailable (see package __init__). Band storage follows the
LAPACK convention for a symmetric matrix A with bandwidth k:

    ab[k + i - j, j] = A[i, j]   for |i - j| <= k

so ab has shape (2k + 1, n) and row k holds the main diagonal.
"""

import heapq
import math

import numpy as np

from ..errors import NumericalFailureError


def solve_banded_spd(ab, k, rhs):
    """Solve A x = rhs for a symmetric positive-definite banded A.

    In-band LU factorization (unit lower-triangular L, upper-triangular U,
    no pivoting, no fill outside the band), then forward elimination and
    back substitution. Inputs are not modified.

    Raises NumericalFailureError on a zero or negative pivot.
    """
    ab = np.array(ab, dtype=np.float64, copy=True)
    y = np.array(rhs, dtype=np.float64, copy=True)
    n = ab.shape[1]
    if ab.shape[0] != 2 * k + 1:
        raise ValueError(f"band storage must have 2k+1={2 * k + 1} rows, got {ab.shape[0]}")
    if y.shape != (n,):
        raise ValueError("rhs length does not match system size")

    # Factor: column sweep, eliminating below each pivot inside the band.
    for col in range(n):
        piv = ab[k, col]
        if not piv > 0.0:
            raise NumericalFailureError(
                f"non-positive pivot {piv!r} at column {col} during banded LU"
            )
        m = min(k, n - 1 - col)
        if m == 0:
            continue
        ab[k + 1 : k + 1 + m, col] /= piv
        for jj in range(col + 1, col + 1 + m):
            u = ab[k + col - jj, jj]
            if u != 0.0:
                r0 = k + col + 1 - jj
                ab[r0 : r0 + m, jj] -= ab[k + 1 : k + 1 + m, col] * u

    # Forward elimination L y = rhs (column oriented; L is unit lower).
    for col in range(n - 1):
        yj = y[col]
        if yj != 0.0:
            m = min(k, n - 1 - col)
            y[col + 1 : col + 1 + m] -= ab[k + 1 : k + 1 + m, col] * yj

    # Back substitution U x = y.
    for col in range(n - 1, -1, -1):
        y[col] /= ab[k, col]
        xj = y[col]
        if xj != 0.0:
            lo = max(0, col - k)
            if lo < col:
                y[lo:col] -= ab[k + lo - col : k, col] * xj
    return y


def _patch_indices(f, limit):
    """Lower cell index of the bilinear patch containing coordinate f.

    Ties on patch boundaries resolve toward the lower-index patch; indices
    are clipped so the patch stays inside [0, limit - 2].
    """
    idx = np.ceil(f).astype(np.int64) - 1
    return np.clip(idx, 0, limit - 2)


def bilinear_values(field, origin_x, origin_y, resolution, xs, ys):
    """Bilinear interpolation of a cell-centered scalar field at world points.

    Callers must guarantee every point is at least half a cell from the
    grid border (the four surrounding cell centers exist).
    """
    field = np.asarray(field, dtype=np.float64)
    h, w = field.shape
    fx = (np.asarray(xs, dtype=np.float64) - origin_x) / resolution - 0.5
    fy = (np.asarray(ys, dtype=np.float64) - origin_y) / resolution - 0.5
    x0 = _patch_indices(fx, w)
    y0 = _patch_indices(fy, h)
    tx = fx - x0
    ty = fy - y0
    f00 = field[y0, x0]
    f10 = field[y0, x0 + 1]
    f01 = field[y0 + 1, x0]
    f11 = field[y0 + 1, x0 + 1]
    return (1.0 - ty) * ((1.0 - tx) * f00 + tx * f10) + ty * ((1.0 - tx) * f01 + tx * f11)


def bilinear_with_gradient(field, origin_x, origin_y, resolution, xs, ys):
    """Interpolated values plus the analytic gradient of the bilinear patch.

    Returns (values, d/dx, d/dy). Same interior precondition as
    bilinear_values; on patch boundaries the gradient of the selected
    (lower-index) patch is reported.
    """
    field = np.asarray(field, dtype=np.float64)
    h, w = field.shape
    fx = (np.asarray(xs, dtype=np.float64) - origin_x) / resolution - 0.5
    fy = (np.asarray(ys, dtype=np.float64) - origin_y) / resolution - 0.5
    x0 = _patch_indices(fx, w)
    y0 = _patch_indices(fy, h)
    tx = fx - x0
    ty = fy - y0
    f00 = field[y0, x0]
    f10 = field[y0, x0 + 1]
    f01 = field[y0 + 1, x0]
    f11 = field[y0 + 1, x0 + 1]
    values = (1.0 - ty) * ((1.0 - tx) * f00 + tx * f10) + ty * ((1.0 - tx) * f01 + tx * f11)
    gx = ((1.0 - ty) * (f10 - f00) + ty * (f11 - f01)) / resolution
    gy = ((1.0 - tx) * (f01 - f00) + tx * (f11 - f10)) / resolution
    return values, gx, gy


def dijkstra_grid(blocked, goal_ix, goal_iy, moves, move_costs):
    """Single-source Dijkstra over a blocked/free cell grid.

    blocked: uint8 (H, W), nonzero cells are untraversable.
    moves: int (M, 2) displacements (dx, dy); move_costs: float (M,).

    Returns (cost, pred): cost is float64 (H, W) with +inf where
    unreachable or blocked; pred is int32 (H, W) holding the index of the
    move that reached each cell from its predecessor (-1 at the source and
    wherever cost is +inf). Ties in the priority queue break first-in
    first-out, so the predecessor tree is deterministic.
    """
    blocked = np.asarray(blocked)
    h, w = blocked.shape
    moves = np.asarray(moves, dtype=np.int64)
    move_costs = np.asarray(move_costs, dtype=np.float64)
    cost = np.full((h, w), math.inf, dtype=np.float64)
    pred = np.full((h, w), -1, dtype=np.int32)
    if blocked[goal_iy, goal_ix]:
        return cost, pred
    cost[goal_iy, goal_ix] = 0.0
    heap = [(0.0, 0, goal_ix, goal_iy)]
    counter = 1
    n_moves = len(moves)
    while heap:
        c, _, x, y = heapq.heappop(heap)
        if c > cost[y, x]:
            continue
        for m in range(n_moves):
            nx = x + moves[m, 0]
            ny = y + moves[m, 1]
            if 0 <= nx < w and 0 <= ny < h and not blocked[ny, nx]:
                nc = c + move_costs[m]
                if nc < cost[ny, nx]:
                    cost[ny, nx] = nc
                    pred[ny, nx] = m
                    heapq.heappush(heap, (nc, counter, nx, ny))
                    counter += 1
    return cost, pred
