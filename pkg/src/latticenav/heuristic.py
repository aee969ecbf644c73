"""Backward Dijkstra cost-to-goal field over the 2-D grid.

Solves the planning problem with headings dropped: from the goal cell
outward over an 8- or 16-connected grid, skipping cells whose obstacle
clearance is below the robot's inscribed radius. Each cell keeps two
things the lattice planner consumes:

  * cost: shortest-path travel cost to the goal, in seconds (inf where
    blocked or unreachable) — the search heuristic;
  * guide_angle: direction from the cell toward its predecessor, i.e. one
    step along the heuristic path toward the goal — the one-step search
    direction prediction used to prune motion primitives.

The field is immutable after construction; rebuilds swap in a new object.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidGoalError
from .gridmap import DistanceGrid

_SQRT2 = math.sqrt(2.0)
_SQRT5 = math.sqrt(5.0)

# Move tables are fixed and ordered: relaxation ties break deterministically
# (first-popped predecessor wins), so the guide angles are reproducible.
MOVES_8 = [
    (1, 0, 1.0),
    (-1, 0, 1.0),
    (0, 1, 1.0),
    (0, -1, 1.0),
    (1, 1, _SQRT2),
    (1, -1, _SQRT2),
    (-1, 1, _SQRT2),
    (-1, -1, _SQRT2),
]
MOVES_16 = MOVES_8 + [
    (2, 1, _SQRT5),
    (2, -1, _SQRT5),
    (-2, 1, _SQRT5),
    (-2, -1, _SQRT5),
    (1, 2, _SQRT5),
    (1, -2, _SQRT5),
    (-1, 2, _SQRT5),
    (-1, -2, _SQRT5),
]
CONNECTIVITY = {8: MOVES_8, 16: MOVES_16}


@dataclass(frozen=True)
class HeuristicField:
    geometry: object
    cost: np.ndarray = field(repr=False)  # (H, W) seconds, inf blocked/unreachable
    guide_angle: np.ndarray = field(repr=False)  # (H, W) radians, NaN undefined
    goal_cell: tuple
    connectivity: int

    def __post_init__(self):
        self.cost.setflags(write=False)
        self.guide_angle.setflags(write=False)

    def value(self, ix, iy):
        """Cost-to-goal of a cell in seconds; inf outside the grid."""
        if not self.geometry.contains_cell(ix, iy):
            return math.inf
        return float(self.cost[iy, ix])

    def guide(self, ix, iy):
        """Guide angle of a cell; NaN where undefined or outside the grid."""
        if not self.geometry.contains_cell(ix, iy):
            return math.nan
        return float(self.guide_angle[iy, ix])


def build_heuristic(
    dg: DistanceGrid,
    goal_cell,
    connectivity=16,
    inscribed_r=0.15,
    cell_traversal_cost=1.0 / 0.7,
) -> HeuristicField:
    """Backward Dijkstra from the goal cell over the clearance-filtered grid.

    Cells with obstacle distance below `inscribed_r` are blocked (infinite
    cost). Edge costs are metric move lengths scaled by
    `cell_traversal_cost` (s/m), so costs come out in seconds and stay
    comparable with motion-primitive travel times. 16-connectivity matches
    a 16-bin heading discretization: the knight moves contribute the
    intermediate directions, hence at most 16 distinct guide angles.
    """
    if connectivity not in CONNECTIVITY:
        raise ValueError(f"connectivity must be one of {sorted(CONNECTIVITY)}, got {connectivity}")
    geom = dg.geometry
    gx, gy = goal_cell
    if not geom.contains_cell(gx, gy):
        raise InvalidGoalError(f"goal cell {goal_cell} outside the {geom.width}x{geom.height} grid")
    blocked = (dg.distances < inscribed_r).astype(np.uint8)
    if blocked[gy, gx]:
        raise InvalidGoalError(
            f"goal cell {goal_cell} lies in the inflated-obstacle region "
            f"(clearance {dg.distances[gy, gx]:.3f} m < inscribed radius {inscribed_r} m)"
        )
    table = CONNECTIVITY[connectivity]
    moves = np.array([(dx, dy) for dx, dy, _ in table], dtype=np.int64)
    step_costs = np.array(
        [length * geom.resolution * cell_traversal_cost for _, _, length in table]
    )
    cost, pred = _kernels.dijkstra_grid(blocked, gx, gy, moves, step_costs)
    # Direction from a cell toward its predecessor: the reverse of the move
    # that reached it during the backward search. Negate the integer moves
    # before the float conversion so a zero component stays +0.0 and the
    # angles land in (-pi, pi].
    toward_pred = np.arctan2((-moves[:, 1]).astype(float), (-moves[:, 0]).astype(float))
    guide = np.full(cost.shape, np.nan)
    reached = pred >= 0
    guide[reached] = toward_pred[pred[reached]]
    return HeuristicField(geom, cost, guide, (gx, gy), connectivity)


def save_field(field_: HeuristicField, path):
    """Dump cost and guide-angle rasters with their geometry for inspection."""
    geom = field_.geometry
    np.savez(
        path,
        cost=field_.cost,
        guide_angle=field_.guide_angle,
        width=geom.width,
        height=geom.height,
        resolution=geom.resolution,
        origin_x=geom.origin_x,
        origin_y=geom.origin_y,
        goal_cell=np.array(field_.goal_cell),
        connectivity=field_.connectivity,
    )
