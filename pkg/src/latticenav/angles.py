"""Heading discretization and angle arithmetic.

All angles live in (-pi, pi], positive counterclockwise. Heading bins split
the full circle evenly; bin i covers the direction 2*pi*i / num_angles.
"""

import math

import numpy as np

DEFAULT_NUM_ANGLES = 16


def wrap_angle(theta):
    """Wrap an angle (scalar or array) into (-pi, pi]."""
    wrapped = -np.remainder(-np.asarray(theta) + math.pi, 2.0 * math.pi) + math.pi
    if np.ndim(theta) == 0:
        return float(wrapped)
    return wrapped


def angle_of_bin(index, num_angles=DEFAULT_NUM_ANGLES):
    """Continuous heading of a discrete bin, wrapped into (-pi, pi]."""
    return wrap_angle(2.0 * math.pi * (index % num_angles) / num_angles)


def bin_of_angle(theta, num_angles=DEFAULT_NUM_ANGLES):
    """Nearest heading bin for a continuous angle."""
    return int(round(theta / (2.0 * math.pi / num_angles))) % num_angles
