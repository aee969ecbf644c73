"""Cubic-spline path smoothing and time-optimal velocity profiling.

The optimized vertex chain is still piecewise linear; natural cubic
splines over a chord-length parameter turn it into a C2 path with a
well-defined curvature. Speed limits then come in two stages: a pointwise
maximum velocity curve (the hard cap from the velocity bound and the
lateral-acceleration/curvature bound), and a forward/backward integration
of v^2 under the tangential acceleration bound beneath that curve. The
pointwise minimum of the two passes is the time-optimal feasible profile
for the sampled problem.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import InvalidInputError

# 5-point Gauss-Legendre rule on [-1, 1]
_GL_NODES = np.array(
    [-0.906179845938664, -0.5384693101056831, 0.0, 0.5384693101056831, 0.906179845938664]
)
_GL_WEIGHTS = np.array(
    [0.23692688505618908, 0.47862867049936647, 128.0 / 225.0,
     0.47862867049936647, 0.23692688505618908]
)

DEFAULT_SAMPLE_STEP = 0.01  # meters along arc length

# Used only inside the time integral: a zero-speed sample would otherwise
# divide by zero at rest-to-rest endpoints.
V_FLOOR = 1e-3


@dataclass
class KinodynamicLimits:
    v_max: float = 0.7  # m/s
    a_max: float = 0.5  # m/s^2 tangential
    a_lat_max: float = 0.5  # m/s^2 centripetal

    def __post_init__(self):
        if min(self.v_max, self.a_max, self.a_lat_max) <= 0:
            raise InvalidInputError("kinodynamic limits must be positive")


class SmoothPath:
    """Natural cubic splines x(u), y(u) with an arc-length table.

    u is the chord-length parameter of the input vertices; the table maps
    between u and true arc length s (computed segment-by-segment with
    adaptive quadrature), so queries can be arc-length parameterized.
    """

    def __init__(self, vertices):
        vertices = np.asarray(vertices, dtype=np.float64)
        if len(vertices) < 3:
            raise InvalidInputError("spline smoothing needs at least 3 vertices")
        chords = np.hypot(*np.diff(vertices, axis=0).T)
        if (chords == 0.0).any():
            raise InvalidInputError("duplicate consecutive vertices")
        u = np.concatenate([[0.0], np.cumsum(chords)])
        self.u_knots = u
        self.spline_x = CubicSpline(u, vertices[:, 0], bc_type="natural")
        self.spline_y = CubicSpline(u, vertices[:, 1], bc_type="natural")
        self.vertices = vertices
        self._build_arclength_table()

    def _speed(self, u):
        return math.hypot(self.spline_x(u, 1), self.spline_y(u, 1))

    def _gauss_lengths(self, a, b):
        """Vectorized 5-point Gauss-Legendre speed integral per interval."""
        mid = 0.5 * (a + b)[:, None]
        half = 0.5 * (b - a)[:, None]
        u = (mid + half * _GL_NODES[None, :]).ravel()
        speed = np.hypot(self.spline_x(u, 1), self.spline_y(u, 1)).reshape(len(a), -1)
        return half[:, 0] * (speed @ _GL_WEIGHTS)

    def _build_arclength_table(self, tol=1e-4, max_du=0.02):
        # adaptive quadrature per table interval: accept the half-interval
        # sum when it agrees with the whole-interval estimate, otherwise
        # keep halving the offenders
        us = [np.array([0.0])]
        for a, b in zip(self.u_knots[:-1], self.u_knots[1:]):
            pieces = max(1, int(math.ceil((b - a) / max_du)))
            us.append(np.linspace(a, b, pieces + 1)[1:])
        us = np.concatenate(us)
        a = us[:-1]
        b = us[1:]
        whole = self._gauss_lengths(a, b)
        mid = 0.5 * (a + b)
        refined = self._gauss_lengths(a, mid) + self._gauss_lengths(mid, b)
        per_tol = tol / max(1, len(a))
        bad = np.nonzero(np.abs(refined - whole) > per_tol)[0]
        for i in bad:
            refined[i] = self._adaptive_interval(a[i], b[i], per_tol)
        self._table_u = us
        self._table_s = np.concatenate([[0.0], np.cumsum(refined)])
        self.total_length = float(self._table_s[-1])

    def _adaptive_interval(self, a, b, tol, depth=0):
        whole = self._gauss_lengths(np.array([a]), np.array([b]))[0]
        mid = 0.5 * (a + b)
        halves = self._gauss_lengths(np.array([a, mid]), np.array([mid, b]))
        refined = halves.sum()
        if depth >= 12 or abs(refined - whole) <= tol:
            return refined
        return self._adaptive_interval(a, mid, tol / 2, depth + 1) + self._adaptive_interval(
            mid, b, tol / 2, depth + 1
        )

    def u_at_s(self, s):
        return np.interp(s, self._table_s, self._table_u)

    def s_at_u(self, u):
        return np.interp(u, self._table_u, self._table_s)

    def point_at_u(self, u):
        return float(self.spline_x(u)), float(self.spline_y(u))

    def pose_at_s(self, s):
        """(x, y, heading) at arc length s; heading is the tangent angle."""
        u = self.u_at_s(s)
        dx, dy = float(self.spline_x(u, 1)), float(self.spline_y(u, 1))
        return float(self.spline_x(u)), float(self.spline_y(u)), math.atan2(dy, dx)

    def curvature_at_u(self, u):
        dx = self.spline_x(u, 1)
        dy = self.spline_y(u, 1)
        ddx = self.spline_x(u, 2)
        ddy = self.spline_y(u, 2)
        denom = (dx * dx + dy * dy) ** 1.5
        return (dx * ddy - dy * ddx) / denom

    def sample(self, step=DEFAULT_SAMPLE_STEP):
        """Evenly spaced arc-length samples: (s, x, y, curvature)."""
        n = max(2, int(math.ceil(self.total_length / step)) + 1)
        s = np.linspace(0.0, self.total_length, n)
        u = self.u_at_s(s)
        x = self.spline_x(u)
        y = self.spline_y(u)
        kappa = self.curvature_at_u(u)
        return s, x, y, kappa


def spline_smooth(chain) -> SmoothPath:
    """Natural cubic spline through the chain's vertices (interpolating:
    the spline passes through every input vertex exactly)."""
    vertices = chain.vertices if hasattr(chain, "vertices") else chain
    return SmoothPath(vertices)


@dataclass
class MvcSamples:
    """Pointwise speed cap along the path: min of the velocity bound and
    the curvature-limited speed sqrt(a_lat_max / |kappa|)."""

    s: np.ndarray
    v_cap: np.ndarray
    step: float


def compute_mvc(path: SmoothPath, limits: KinodynamicLimits, step=DEFAULT_SAMPLE_STEP) -> MvcSamples:
    s, _, _, kappa = path.sample(step)
    v_cap = np.full(len(s), float(limits.v_max))
    curved = np.abs(kappa) > 1e-12
    v_cap[curved] = np.minimum(
        v_cap[curved], np.sqrt(limits.a_lat_max / np.abs(kappa[curved]))
    )
    return MvcSamples(s, v_cap, step)


@dataclass
class VelocityProfile:
    s: np.ndarray
    v: np.ndarray
    t: np.ndarray
    total_time: float

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["s_m", "v_mps", "t_s"])
            for s, v, t in zip(self.s, self.v, self.t):
                writer.writerow([repr(float(s)), repr(float(v)), repr(float(t))])


def integrate_profile(mvc: MvcSamples, limits: KinodynamicLimits,
                      v_start=0.0, v_end=0.0) -> VelocityProfile:
    """Two-pass v^2 integration under the speed cap.

    The forward pass accelerates from v_start at a_max, the backward pass
    limits deceleration into v_end, both clipped to the cap; the pointwise
    minimum is feasible and time-optimal for the sampled problem. Segment
    times use the interval-average speed (exact for piecewise-constant
    acceleration); V_FLOOR guards the degenerate all-zero segment.
    """
    cap = mvc.v_cap
    s = mvc.s
    n = len(s)
    if v_start > cap[0] + 1e-12 or v_end > cap[-1] + 1e-12:
        raise InvalidInputError(
            f"endpoint speeds (v_start={v_start}, v_end={v_end}) exceed the "
            f"local speed caps ({cap[0]:.4f}, {cap[-1]:.4f})"
        )
    if n == 1 or s[-1] == 0.0:
        return VelocityProfile(s, np.array([min(v_start, cap[0])]), np.zeros(1), 0.0)

    ds = np.diff(s)
    forward = np.empty(n)
    forward[0] = min(v_start, cap[0]) ** 2
    for i in range(n - 1):
        forward[i + 1] = min(cap[i + 1] ** 2, forward[i] + 2.0 * limits.a_max * ds[i])
    backward = np.empty(n)
    backward[-1] = min(v_end, cap[-1]) ** 2
    for i in range(n - 2, -1, -1):
        backward[i] = min(cap[i] ** 2, backward[i + 1] + 2.0 * limits.a_max * ds[i])
    v = np.sqrt(np.minimum(forward, backward))

    t = np.empty(n)
    t[0] = 0.0
    pair_mean = 0.5 * (v[:-1] + v[1:])
    t[1:] = np.cumsum(ds / np.maximum(pair_mean, V_FLOOR))
    return VelocityProfile(s, v, t, float(t[-1]))
