"""Soft-constrained local path deformation.

The local path is an ordered chain of 2-D vertices; the first and last
stay fixed so the path keeps connecting the robot to the global route.
Two penalty families act on it:

  * smoothness: the second difference of consecutive vertices (the
    resultant of the two "springs" pulling at each interior vertex);
  * safety: the shortfall of the interpolated obstacle clearance below a
    safety distance, zero once the vertex is clear.

The weighted sum of squares is minimized by damped Gauss-Newton steps
(Levenberg-Marquardt). Each penalty couples at most three consecutive
vertices, so the normal matrix over the interleaved (x0, y0, x1, y1, ...)
parameter vector is symmetric banded with bandwidth 5, and each damped
system solves in O(bandwidth^2 * n) time through an in-band LU
factorization with forward elimination and back substitution — never a
dense factorization.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidInputError, NumericalFailureError
from .gridmap import DistanceGrid

BANDWIDTH = 5  # three-vertex coupling over interleaved x/y coordinates


@dataclass
class VertexChain:
    """Ordered path vertices; `fixed` marks vertices that must not move."""

    vertices: np.ndarray  # (N, 2) world coordinates
    fixed: np.ndarray = None  # (N,) bool; default: endpoints only

    def __post_init__(self):
        self.vertices = np.array(self.vertices, dtype=np.float64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise InvalidInputError("chain vertices must be an (N, 2) array")
        n = len(self.vertices)
        if n < 3:
            raise InvalidInputError(f"chain needs at least 3 vertices, got {n}")
        if self.fixed is None:
            self.fixed = np.zeros(n, dtype=bool)
            self.fixed[0] = self.fixed[-1] = True
        else:
            self.fixed = np.asarray(self.fixed, dtype=bool)
            if self.fixed.shape != (n,):
                raise InvalidInputError("fixed mask length does not match vertex count")

    def __len__(self):
        return len(self.vertices)

    def copy(self):
        return VertexChain(self.vertices.copy(), self.fixed.copy())


@dataclass
class OptimizerConfig:
    smooth_weight: float = 1.0
    obstacle_weight: float = 10.0
    safety_distance: float = 0.5  # meters
    max_iterations: int = 100
    initial_damping: float = 1e-4
    damping_up: float = 10.0
    damping_down: float = 10.0
    damping_ceiling: float = 1e8
    step_tolerance: float = 1e-6  # meters, on the step max-norm
    objective_tolerance: float = 1e-9

    def __post_init__(self):
        if self.smooth_weight <= 0 or self.obstacle_weight <= 0:
            raise InvalidInputError("weights must be positive")
        if self.safety_distance <= 0:
            raise InvalidInputError("safety distance must be positive")
        if self.initial_damping <= 0:
            raise InvalidInputError("damping must be positive")


class BandedSystem:
    """Symmetric banded system in LAPACK-style band storage.

    band[k + i - j, j] = A[i, j] for |i - j| <= k, shape (2k + 1, n).
    """

    def __init__(self, band, rhs, bandwidth):
        self.band = np.asarray(band, dtype=np.float64)
        self.rhs = np.asarray(rhs, dtype=np.float64)
        self.bandwidth = int(bandwidth)
        self.n = self.band.shape[1]
        if self.band.shape[0] != 2 * self.bandwidth + 1:
            raise InvalidInputError(
                f"band storage needs {2 * self.bandwidth + 1} rows for bandwidth "
                f"{self.bandwidth}, got {self.band.shape[0]}"
            )
        if self.rhs.shape != (self.n,):
            raise InvalidInputError("rhs length does not match band storage")

    def damped(self, damping):
        """New system with `damping` added to the diagonal (A + damping*I)."""
        band = self.band.copy()
        band[self.bandwidth, :] += damping
        return BandedSystem(band, self.rhs, self.bandwidth)

    def to_dense(self):
        k = self.bandwidth
        dense = np.zeros((self.n, self.n))
        for j in range(self.n):
            for i in range(max(0, j - k), min(self.n, j + k + 1)):
                dense[i, j] = self.band[k + i - j, j]
        return dense


def smoothness_residual(chain: VertexChain, i) -> np.ndarray:
    """Second difference x_{i+1} - 2 x_i + x_{i-1} at interior vertex i
    (0-based; valid for 1 <= i <= N-2)."""
    v = chain.vertices
    if not 1 <= i <= len(v) - 2:
        raise InvalidInputError(f"interior vertex index {i} out of range 1..{len(v) - 2}")
    return v[i + 1] - 2.0 * v[i] + v[i - 1]


def _clearance_and_gradient(dg: DistanceGrid, pts):
    """Interpolated clearance and gradient per vertex.

    Vertices outside the grid interior are treated as maximally unsafe:
    zero clearance with a zero gradient (no direction information).
    """
    geom = dg.geometry
    fx = (pts[:, 0] - geom.origin_x) / geom.resolution - 0.5
    fy = (pts[:, 1] - geom.origin_y) / geom.resolution - 0.5
    interior = (fx >= 0.0) & (fx <= geom.width - 1) & (fy >= 0.0) & (fy <= geom.height - 1)
    tau = np.zeros(len(pts))
    gx = np.zeros(len(pts))
    gy = np.zeros(len(pts))
    if interior.any():
        v, dx, dy = _kernels.bilinear_with_gradient(
            dg.distances, geom.origin_x, geom.origin_y, geom.resolution,
            pts[interior, 0], pts[interior, 1],
        )
        tau[interior] = v
        gx[interior] = dx
        gy[interior] = dy
    return tau, gx, gy, interior


def obstacle_residual(chain: VertexChain, i, dg: DistanceGrid, safety_distance) -> float:
    """Clearance shortfall max(0, safety_distance - tau) at vertex i.

    Exactly at tau == safety_distance the residual is zero and assemble
    uses the flat-side derivative (zero), the conservative one-sided
    choice at the junction of the piecewise definition.
    """
    pts = chain.vertices[i : i + 1]
    tau, _, _, _ = _clearance_and_gradient(dg, pts)
    return float(max(0.0, safety_distance - tau[0]))


def objective_value(vertices, dg: DistanceGrid, cfg: OptimizerConfig) -> float:
    """Weighted sum of squared smoothness and safety residuals."""
    second = vertices[2:] - 2.0 * vertices[1:-1] + vertices[:-2]
    tau, _, _, _ = _clearance_and_gradient(dg, vertices)
    shortfall = np.maximum(0.0, cfg.safety_distance - tau)
    return float(
        cfg.smooth_weight * np.sum(second * second)
        + cfg.obstacle_weight * np.sum(shortfall * shortfall)
    )


def assemble(chain: VertexChain, dg: DistanceGrid, cfg: OptimizerConfig):
    """Gauss-Newton normal system of the penalty objective at the chain.

    Returns (system, objective, gradient) where system holds the undamped
    normal matrix H (bandwidth 5, band storage) with the gradient vector b
    as its rhs; the local quadratic model is
    f(x + d) ~ objective + 2 b.T d + d.T H d, so a damped step solves
    (H + damping*I) d = -b. Rows and columns of fixed vertices are clamped
    to identity/zero so those coordinates never move.
    """
    v = chain.vertices
    n_vertices = len(v)
    n = 2 * n_vertices
    k = BANDWIDTH
    band = np.zeros((2 * k + 1, n))
    b = np.zeros(n)

    # smoothness blocks: weights (1, -2, 1) over three consecutive vertices
    second = v[2:] - 2.0 * v[1:-1] + v[:-2]
    w = (1.0, -2.0, 1.0)
    interior = np.arange(1, n_vertices - 1)
    for da in (-1, 0, 1):
        cols_v = 2 * (interior + da)
        b[cols_v] += cfg.smooth_weight * w[da + 1] * second[:, 0]
        b[cols_v + 1] += cfg.smooth_weight * w[da + 1] * second[:, 1]
        for db in (-1, 0, 1):
            val = cfg.smooth_weight * w[da + 1] * w[db + 1]
            row_off = k + 2 * (da - db)
            cols = 2 * (interior + db)
            band[row_off, cols] += val
            band[row_off, cols + 1] += val

    # obstacle blocks: rank-1 gradient outer products on single vertices
    tau, gx, gy, _ = _clearance_and_gradient(dg, v)
    shortfall = cfg.safety_distance - tau
    active = shortfall > 0.0
    objective = float(
        cfg.smooth_weight * np.sum(second * second)
        + cfg.obstacle_weight * np.sum(np.maximum(shortfall, 0.0) ** 2)
    )
    if active.any():
        idx = np.nonzero(active)[0]
        axg, ayg, sfall = gx[idx], gy[idx], shortfall[idx]
        cols = 2 * idx
        band[k, cols] += cfg.obstacle_weight * axg * axg
        band[k, cols + 1] += cfg.obstacle_weight * ayg * ayg
        band[k - 1, cols + 1] += cfg.obstacle_weight * axg * ayg  # A[2i, 2i+1]
        band[k + 1, cols] += cfg.obstacle_weight * axg * ayg  # A[2i+1, 2i]
        b[cols] += cfg.obstacle_weight * (-axg) * sfall
        b[cols + 1] += cfg.obstacle_weight * (-ayg) * sfall

    # clamp fixed vertices: identity row/column, zero gradient
    for vi in np.nonzero(chain.fixed)[0]:
        for j in (2 * vi, 2 * vi + 1):
            lo = max(0, j - k)
            hi = min(n - 1, j + k)
            for other in range(lo, hi + 1):
                band[k + j - other, other] = 0.0  # row j
                band[k + other - j, j] = 0.0  # column j
            band[k, j] = 1.0
            b[j] = 0.0

    return BandedSystem(band, b, k), objective, b


def banded_lu_solve(system: BandedSystem) -> np.ndarray:
    """Solve A d = -rhs inside the band; A must be SPD (damped normal
    matrix). Raises NumericalFailureError on a non-positive pivot, in
    which case the caller increases the damping and retries."""
    return _kernels.solve_banded_spd(system.band, system.bandwidth, -system.rhs)


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    damping: float
    step_norm: float
    accepted: bool


@dataclass
class OptimizationReport:
    records: list = field(default_factory=list)
    reason: str = ""
    initial_objective: float = math.nan
    final_objective: float = math.nan

    @property
    def iterations(self):
        return len(self.records)

    @property
    def non_converged(self):
        return self.reason == "damping_ceiling"

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "objective", "lambda", "step_norm", "accepted"])
            for r in self.records:
                writer.writerow(
                    [r.iteration, repr(r.objective), repr(r.damping), repr(r.step_norm),
                     int(r.accepted)]
                )


def optimize(chain: VertexChain, dg: DistanceGrid, cfg: OptimizerConfig = None):
    """Damped iteration: assemble, solve, try the step, adapt the damping.

    A step is accepted only if the objective strictly decreases; on
    rejection the previous vertices are restored and the damping grows.
    Stops on max_iterations, a small step, or a small objective decrease;
    if the damping exceeds its ceiling the best chain so far is returned
    with the report flagged non-converged.

    Returns (optimized chain, OptimizationReport).
    """
    if cfg is None:
        cfg = OptimizerConfig()
    current = chain.copy()
    report = OptimizationReport()
    damping = cfg.initial_damping

    system, f_current, _ = assemble(current, dg, cfg)
    report.initial_objective = f_current
    iteration = 0
    reason = "max_iterations"
    while iteration < cfg.max_iterations:
        iteration += 1
        try:
            delta = banded_lu_solve(system.damped(damping))
        except NumericalFailureError:
            damping *= cfg.damping_up
            report.records.append(IterationRecord(iteration, f_current, damping, math.nan, False))
            if damping > cfg.damping_ceiling:
                reason = "damping_ceiling"
                break
            continue
        step_norm = float(np.abs(delta).max())
        if step_norm < cfg.step_tolerance:
            report.records.append(IterationRecord(iteration, f_current, damping, step_norm, True))
            reason = "step_tolerance"
            break
        candidate = current.vertices + delta.reshape(-1, 2)
        f_new = objective_value(candidate, dg, cfg)
        if f_new < f_current:
            decrease = f_current - f_new
            current.vertices = candidate
            f_current = f_new
            damping = max(damping / cfg.damping_down, 1e-12)
            report.records.append(IterationRecord(iteration, f_new, damping, step_norm, True))
            if decrease < cfg.objective_tolerance:
                reason = "objective_tolerance"
                break
            system, f_current, _ = assemble(current, dg, cfg)
        else:
            damping *= cfg.damping_up
            report.records.append(IterationRecord(iteration, f_current, damping, step_norm, False))
            if damping > cfg.damping_ceiling:
                reason = "damping_ceiling"
                break

    report.reason = reason
    report.final_objective = f_current
    return current, report
