"""Shared oracles and generators for the test suite."""

import math

import numpy as np

from latticenav.gridmap import FREE, OCCUPIED, GridGeometry, OccupancyGrid


def random_banded_spd(rng, n, k):
    """Random symmetric positive-definite banded system.

    Returns (ab, dense): ab is LAPACK-style band storage (2k+1, n) with
    ab[k + i - j, j] = A[i, j]; positive-definiteness comes from strict
    diagonal dominance.
    """
    dense = np.zeros((n, n))
    for i in range(n):
        for j in range(i, min(n, i + k + 1)):
            v = rng.normal()
            dense[i, j] = dense[j, i] = v
    np.fill_diagonal(dense, 0.0)
    row_sums = np.abs(dense).sum(axis=1)
    np.fill_diagonal(dense, row_sums + rng.uniform(0.5, 2.0, size=n))
    ab = np.zeros((2 * k + 1, n))
    for i in range(n):
        for j in range(max(0, i - k), min(n, i + k + 1)):
            ab[k + i - j, j] = dense[i, j]
    return ab, dense


def band_to_dense(ab, k):
    n = ab.shape[1]
    dense = np.zeros((n, n))
    for j in range(n):
        for i in range(max(0, j - k), min(n, j + k + 1)):
            dense[i, j] = ab[k + i - j, j]
    return dense


def dense_gaussian_elimination(a, b):
    """Plain Gaussian elimination with partial pivoting (solver oracle)."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    n = len(b)
    for col in range(n):
        pivot_row = col + np.argmax(np.abs(a[col:, col]))
        if pivot_row != col:
            a[[col, pivot_row]] = a[[pivot_row, col]]
            b[[col, pivot_row]] = b[[pivot_row, col]]
        for row in range(col + 1, n):
            factor = a[row, col] / a[col, col]
            if factor != 0.0:
                a[row, col:] -= factor * a[col, col:]
                b[row] -= factor * b[col]
    x = np.zeros(n)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - a[row, row + 1 :] @ x[row + 1 :]) / a[row, row]
    return x


def integrate_unicycle(theta0, v, omega, duration, steps=20000):
    """Fine fixed-step RK4 rollout of the unicycle model from the origin."""
    x = y = 0.0
    theta = theta0
    dt = duration / steps

    def deriv(th):
        return v * math.cos(th), v * math.sin(th), omega

    for _ in range(steps):
        k1 = deriv(theta)
        k2 = deriv(theta + 0.5 * dt * k1[2])
        k3 = deriv(theta + 0.5 * dt * k2[2])
        k4 = deriv(theta + dt * k3[2])
        x += dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        y += dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        theta += dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    return x, y, theta


def occupancy_from_ascii(art, resolution=0.1):
    """Build a grid from ASCII art: '#' occupied, '.' free.

    The first text line is the TOP row of the map (highest iy).
    """
    rows = [line.strip() for line in art.strip().splitlines()]
    h = len(rows)
    w = len(rows[0])
    cells = np.full((h, w), FREE, dtype=np.uint8)
    for r, line in enumerate(rows):
        assert len(line) == w, "ragged ascii map"
        for c, ch in enumerate(line):
            if ch == "#":
                cells[h - 1 - r, c] = OCCUPIED
    return OccupancyGrid(GridGeometry(w, h, resolution), cells)
