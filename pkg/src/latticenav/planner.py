"""A* over the (x, y, heading) lattice with guided primitive pruning.

Successor moves come from the precomputed primitive set. When pruning is
enabled, the cost-to-goal field's per-cell guide angle provides a one-step
prediction of where the search should head: any non-basic primitive whose
lattice displacement direction deviates from the guide angle by more than
the deviation threshold is skipped before collision checking. The three
basic primitives (single-cell forward step, both in-place turns) always
stay in the successor set, which preserves resolution-completeness; the
pruning mechanism can only remove successors, never add cost.
"""

import math
import time
from dataclasses import dataclass
from heapq import heappop, heappush

import numpy as np

from .angles import angle_of_bin, wrap_angle
from .errors import InvalidEndpointError, InvalidInputError, LatticeNavError
from .gridmap import (
    DistanceGrid,
    RobotShape,
    clearance_at,
    footprint_cells_occupied,
    poses_collision_free,
)
from .heuristic import HeuristicField
from .primitives import LatticeState, MotionPrimitive, PrimitiveSet

DEFAULT_MAX_DEVIATION = math.pi / 4.0


@dataclass
class SearchStats:
    """Search effort counters for one planning query.

    branching_factor averages, per expansion, the successors that survived
    both pruning and collision checking (the ones actually offered to the
    open list).
    """

    expanded_states: int = 0
    graph_size: int = 0
    planning_time: float = 0.0
    branching_factor: float = 0.0


@dataclass
class GlobalPath:
    poses: np.ndarray  # (P, 3) continuous x, y, heading
    total_cost: float  # seconds
    states: list  # LatticeState sequence, start to goal
    primitive_ids: list  # chosen primitive per step, len(states) - 1

    def __post_init__(self):
        self.poses = np.asarray(self.poses, dtype=np.float64)


@dataclass
class PlanResult:
    path: object  # GlobalPath or None when no path exists
    stats: SearchStats

    @property
    def succeeded(self):
        return self.path is not None


class _Node:
    __slots__ = ("g", "parent", "prim", "closed")

    def __init__(self, g, parent, prim):
        self.g = g
        self.parent = parent
        self.prim = prim
        self.closed = False


def state_pose(state: LatticeState, geometry, num_angles):
    """Continuous pose anchored at the state's cell center."""
    cx, cy = geometry.cell_center(state.ix, state.iy)
    return cx, cy, angle_of_bin(state.itheta, num_angles)


def _check_endpoint(dg, state, robot, geometry, num_angles, label):
    if not geometry.contains_cell(state.ix, state.iy):
        raise InvalidEndpointError(f"{label} state {tuple(state)} outside the grid")
    pose = state_pose(state, geometry, num_angles)
    free = poses_collision_free(dg, [pose[0]], [pose[1]], [pose[2]], robot)
    if not free[0]:
        raise InvalidEndpointError(f"{label} state {tuple(state)} is in collision")


class _AngleTable:
    """Per start-angle primitive data laid out for batch collision checks."""

    def __init__(self, prims, num_angles):
        self.entries = []
        for itheta in range(num_angles):
            plist = prims.for_angle(itheta)
            xs = np.ascontiguousarray(np.concatenate([p.poses[:, 0] for p in plist]))
            ys = np.ascontiguousarray(np.concatenate([p.poses[:, 1] for p in plist]))
            ths = np.ascontiguousarray(np.concatenate([p.poses[:, 2] for p in plist]))
            counts = [len(p.poses) for p in plist]
            starts = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.intp)
            bounds = np.append(starts, len(xs))
            motion_angles = [
                math.atan2(p.end_offset[1], p.end_offset[0]) if not p.is_basic else None
                for p in plist
            ]
            self.entries.append((plist, xs, ys, ths, starts, bounds, motion_angles))


def plan(
    dg: DistanceGrid,
    prims: PrimitiveSet,
    field: HeuristicField,
    start: LatticeState,
    goal: LatticeState,
    robot: RobotShape,
    pruning=True,
    max_deviation=DEFAULT_MAX_DEVIATION,
    goal_any_heading=False,
) -> PlanResult:
    """Plan a kinematically feasible collision-free lattice path.

    Expands states in f = g + h order (ties prefer the larger g); every
    intermediate pose of a candidate primitive must pass the footprint
    collision test or the successor is dropped. Pruning compares each
    non-basic primitive's displacement direction against the cell's guide
    angle, both wrapped, and skips it when the absolute deviation exceeds
    `max_deviation`; cells without a guide angle (the goal cell, blocked
    cells) skip pruning entirely. Closed states are re-opened when a
    cheaper g appears, which keeps solution quality under an inconsistent
    heuristic.

    Returns a PlanResult whose path is None only when the open list runs
    dry (NO_PATH). Bad endpoints raise InvalidEndpointError instead.
    """
    geometry = dg.geometry
    num_angles = prims.num_angles
    if field.goal_cell != (goal.ix, goal.iy):
        raise InvalidInputError(
            f"heuristic field was built for goal cell {field.goal_cell}, "
            f"planner goal is {(goal.ix, goal.iy)}"
        )
    start = LatticeState(start.ix, start.iy, start.itheta % num_angles)
    goal = LatticeState(goal.ix, goal.iy, goal.itheta % num_angles)
    _check_endpoint(dg, start, robot, geometry, num_angles, "start")
    _check_endpoint(dg, goal, robot, geometry, num_angles, "goal")

    t0 = time.perf_counter()
    table = _AngleTable(prims, num_angles)
    nodes = {start: _Node(0.0, None, None)}
    counter = 0
    open_heap = [(field.value(start.ix, start.iy), 0.0, counter, start)]
    expanded = 0
    successors_total = 0
    goal_key = None

    while open_heap:
        f, neg_g, _, key = heappop(open_heap)
        node = nodes[key]
        g = -neg_g
        if node.closed or g > node.g:
            continue
        if key == goal or (goal_any_heading and key.ix == goal.ix and key.iy == goal.iy):
            goal_key = key
            break
        node.closed = True
        expanded += 1

        guide = field.guide(key.ix, key.iy)
        prune_here = pruning and not math.isnan(guide)
        plist, pxs, pys, pths, starts, bounds, motion_angles = table.entries[key.itheta]

        candidates = []
        for idx, prim in enumerate(plist):
            if prune_here and motion_angles[idx] is not None:
                if abs(wrap_angle(guide - motion_angles[idx])) > max_deviation:
                    continue
            succ = prim.apply(key, num_angles)
            if not geometry.contains_cell(succ.ix, succ.iy):
                continue
            candidates.append((idx, prim, succ))
        if not candidates:
            continue

        # One clearance batch over the whole angle's pose table, then a
        # per-primitive minimum decides the cheap tiers; only band poses
        # (inscribed <= d < circumscribed) fall through to the exact
        # footprint rasterization.
        anchor_x, anchor_y = geometry.cell_center(key.ix, key.iy)
        d = clearance_at(dg, pxs + anchor_x, pys + anchor_y)
        min_d = np.minimum.reduceat(d, starts)

        for idx, prim, succ in candidates:
            if min_d[idx] < robot.inscribed_radius:
                continue
            if min_d[idx] < robot.circumscribed_radius:
                s0, s1 = bounds[idx], bounds[idx + 1]
                blocked = False
                for p in range(s0, s1):
                    if d[p] < robot.circumscribed_radius and footprint_cells_occupied(
                        dg, (pxs[p] + anchor_x, pys[p] + anchor_y, pths[p]), robot.footprint
                    ):
                        blocked = True
                        break
                if blocked:
                    continue
            successors_total += 1
            new_g = node.g + prim.cost
            existing = nodes.get(succ)
            if existing is None:
                nodes[succ] = _Node(new_g, key, prim)
                counter += 1
                heappush(
                    open_heap,
                    (new_g + field.value(succ.ix, succ.iy), -new_g, counter, succ),
                )
            elif new_g < existing.g:
                existing.g = new_g
                existing.parent = key
                existing.prim = prim
                existing.closed = False  # re-open: cheaper route found
                counter += 1
                heappush(
                    open_heap,
                    (new_g + field.value(succ.ix, succ.iy), -new_g, counter, succ),
                )

    elapsed = time.perf_counter() - t0
    stats = SearchStats(
        expanded_states=expanded,
        graph_size=len(nodes),
        planning_time=elapsed,
        branching_factor=successors_total / expanded if expanded else 0.0,
    )
    if goal_key is None:
        return PlanResult(None, stats)
    path = reconstruct_path(nodes, goal_key, geometry, num_angles)
    return PlanResult(path, stats)


def reconstruct_path(nodes, goal_key, geometry, num_angles) -> GlobalPath:
    """Walk the parent chain and concatenate primitive pose chains.

    Exact duplicate poses at segment junctions are collapsed to a single
    pose. Raises on a broken parent chain (internal consistency)."""
    chain = []
    key = goal_key
    guard = len(nodes) + 1
    while True:
        node = nodes.get(key)
        if node is None:
            raise LatticeNavError(f"broken parent chain at state {key}")
        chain.append((key, node))
        if node.parent is None:
            break
        key = node.parent
        guard -= 1
        if guard <= 0:
            raise LatticeNavError("parent chain does not terminate")
    chain.reverse()

    states = [entry[0] for entry in chain]
    prim_ids = [entry[1].prim.prim_id for entry in chain[1:]]
    total_cost = chain[-1][1].g

    poses = []
    if len(chain) == 1:
        poses.append(state_pose(chain[0][0], geometry, num_angles))
    for (prev_key, _), (_, node) in zip(chain[:-1], chain[1:]):
        ax, ay = geometry.cell_center(prev_key.ix, prev_key.iy)
        segment = node.prim.poses + np.array([ax, ay, 0.0])
        for pose in segment:
            if poses and np.abs(np.asarray(poses[-1]) - pose).max() < 1e-9:
                continue
            poses.append(tuple(pose))
    return GlobalPath(np.array(poses), total_cost, states, prim_ids)
