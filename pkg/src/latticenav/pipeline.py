"""Three-layer planning loop and its deterministic simulation harness.

One step of the loop: refresh the distance-grid snapshot on its cycle,
replan the global lattice path when the planning cycle elapses (or the
current path got invalidated by a map change), extract a short local chain
from the global path, deform it with the soft-constrained optimizer over a
fine sliding-window distance grid, smooth it with splines, and profile the
velocity along it.

Everything here is single-threaded and driven by an explicit clock: the
periodic tasks of a live system (map updates, global replanning, local
optimization) are interleaved deterministically by their timestamps, and
all shared structures are immutable snapshots, so every run of a scenario
reproduces the same trajectory bit for bit.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .angles import bin_of_angle
from .errors import InvalidInputError
from .gridmap import (
    FREE,
    OCCUPIED,
    UNKNOWN,
    DistanceGrid,
    GridGeometry,
    OccupancyGrid,
    RobotShape,
    clearance_at,
    default_robot,
    distance_transform,
    load_map,
    poses_collision_free,
)
from .heuristic import build_heuristic
from .optimizer import OptimizerConfig, VertexChain, optimize
from .planner import LatticeState, plan
from .primitives import generate_arc_primitives
from .velocity import KinodynamicLimits, compute_mvc, integrate_profile, spline_smooth

SIM_DT = 0.01  # fixed 10 ms execution tick


@dataclass
class PipelineConfig:
    global_cycle: float = 0.25  # s between global replans
    edg_cycle: float = 0.04  # s between distance-grid refreshes
    local_cycle: float = 0.1  # s between local optimization runs
    local_window: float = 8.0  # m, side of the sliding fine grid
    local_resolution: float = 0.05  # m/cell of the sliding grid
    sample_interval: float = 0.1  # m spacing of the local chain
    chain_length_cap: float = 3.0  # m of global path fed to the optimizer
    goal_tolerance: float = 0.15  # m
    num_angles: int = 16
    connectivity: int = 16
    v_lin: float = 0.7  # m/s, also the metric-to-time heuristic scale
    v_ang: float = 1.0  # rad/s for in-place turns
    pruning: bool = True
    optimize_local: bool = True
    robot: RobotShape = field(default_factory=default_robot)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    limits: KinodynamicLimits = field(default_factory=KinodynamicLimits)

    def __post_init__(self):
        if self.global_cycle <= 0 or self.edg_cycle <= 0:
            raise InvalidInputError("cycles must be positive")
        if self.chain_length_cap > self.local_window / 2.0 - self.optimizer.safety_distance:
            raise InvalidInputError(
                "local chain cap must fit inside half the sliding window "
                "with the safety margin"
            )


def apply_override(cfg: PipelineConfig, dotted_key, raw_value):
    """Set a nested config field from its dotted path and a string value.

    The target field's current type decides the coercion (bool fields
    accept true/false/1/0)."""
    obj = cfg
    parts = dotted_key.split(".")
    for part in parts[:-1]:
        if not hasattr(obj, part):
            raise InvalidInputError(f"unknown config section {part!r} in {dotted_key!r}")
        obj = getattr(obj, part)
    leaf = parts[-1]
    if not hasattr(obj, leaf):
        raise InvalidInputError(f"unknown config field {dotted_key!r}")
    current = getattr(obj, leaf)
    if isinstance(current, bool):
        value = raw_value.strip().lower() in ("1", "true", "yes", "on")
    elif isinstance(current, int):
        value = int(raw_value)
    elif isinstance(current, float):
        value = float(raw_value)
    else:
        raise InvalidInputError(f"config field {dotted_key!r} is not overridable")
    setattr(obj, leaf, value)


# --- scenario files ---------------------------------------------------------

_OCC_NAMES = {"free": FREE, "occupied": OCCUPIED, "unknown": UNKNOWN}


@dataclass(frozen=True)
class MapEdit:
    """Rectangle of cells switched to an occupancy value at a sim time."""

    time: float
    ix0: int
    iy0: int
    ix1: int
    iy1: int
    occupancy: int

    def apply(self, grid: OccupancyGrid) -> OccupancyGrid:
        out = grid.copy()
        out.cells[self.iy0 : self.iy1 + 1, self.ix0 : self.ix1 + 1] = self.occupancy
        return out


@dataclass
class Scenario:
    map_path: str
    start: tuple  # (x, y, heading)
    goal: tuple
    edits: list = field(default_factory=list)
    overrides: list = field(default_factory=list)  # (dotted_key, raw_value)

    def load_grid(self) -> OccupancyGrid:
        return load_map(self.map_path)

    def build_config(self) -> PipelineConfig:
        cfg = PipelineConfig()
        for key, raw in self.overrides:
            apply_override(cfg, key, raw)
        return cfg


def parse_scenario(path) -> Scenario:
    """Key:value scenario file; see the README for the field list."""
    import os

    map_path = None
    start = goal = None
    edits = []
    overrides = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if ":" not in line:
                raise InvalidInputError(f"{path}:{lineno}: expected 'key: value'")
            key, value = (part.strip() for part in line.split(":", 1))
            try:
                if key == "map":
                    map_path = value
                    if not os.path.isabs(map_path):
                        map_path = os.path.join(os.path.dirname(os.path.abspath(path)), map_path)
                elif key == "start":
                    start = tuple(float(v) for v in value.split())
                elif key == "goal":
                    goal = tuple(float(v) for v in value.split())
                elif key == "edit":
                    parts = value.split()
                    if len(parts) != 6:
                        raise ValueError("edit needs: time ix0 iy0 ix1 iy1 occupancy")
                    edits.append(
                        MapEdit(
                            float(parts[0]), int(parts[1]), int(parts[2]),
                            int(parts[3]), int(parts[4]), _OCC_NAMES[parts[5].lower()],
                        )
                    )
                elif key == "set":
                    dotted, _, raw = value.partition("=")
                    if not raw:
                        raise ValueError("set needs key=value")
                    overrides.append((dotted.strip(), raw.strip()))
                else:
                    raise ValueError(f"unknown key {key!r}")
            except (ValueError, KeyError) as exc:
                raise InvalidInputError(f"{path}:{lineno}: {exc}") from None
    if map_path is None or start is None or goal is None:
        raise InvalidInputError(f"{path}: scenario needs map, start, and goal")
    if len(start) != 3 or len(goal) != 3:
        raise InvalidInputError(f"{path}: poses need x y heading")
    return Scenario(map_path, start, goal, edits, overrides)


# --- the planning loop ------------------------------------------------------


@dataclass
class PlanSnapshot:
    timestamp: float
    outcome: str  # OK | NO_PATH | NON_CONVERGED
    goal_reached: bool = False
    replanned: bool = False
    final_segment: bool = False
    global_path: object = None
    chain_initial: object = None
    chain_optimized: object = None
    smooth_path: object = None
    profile: object = None
    search_stats: object = None
    optimizer_report: object = None


def _local_window_grid(grid: OccupancyGrid, center, cfg: PipelineConfig) -> DistanceGrid:
    """Fine sliding-window distance grid around the robot.

    The coarse occupancy window is upsampled to the local resolution and
    distance-transformed; obstacles outside the window are invisible,
    which is safe because the optimizer only looks within its safety
    distance and the chain stays well inside the window.
    """
    geom = grid.geometry
    factor = int(round(geom.resolution / cfg.local_resolution))
    half = cfg.local_window / 2.0
    ix0 = max(0, int(math.floor((center[0] - half - geom.origin_x) / geom.resolution)))
    iy0 = max(0, int(math.floor((center[1] - half - geom.origin_y) / geom.resolution)))
    ix1 = min(geom.width, int(math.ceil((center[0] + half - geom.origin_x) / geom.resolution)))
    iy1 = min(geom.height, int(math.ceil((center[1] + half - geom.origin_y) / geom.resolution)))
    window = grid.cells[iy0:iy1, ix0:ix1]
    fine = np.repeat(np.repeat(window, factor, axis=0), factor, axis=1)
    fine_geom = GridGeometry(
        fine.shape[1], fine.shape[0], cfg.local_resolution,
        geom.origin_x + ix0 * geom.resolution, geom.origin_y + iy0 * geom.resolution,
    )
    return distance_transform(OccupancyGrid(fine_geom, fine))


def _arc_lengths(points):
    deltas = np.hypot(*np.diff(points, axis=0).T)
    return np.concatenate([[0.0], np.cumsum(deltas)])


class Pipeline:
    """Stateful planning loop; see module docstring. Call step() with a
    monotonically increasing clock."""

    def __init__(self, cfg: PipelineConfig = None):
        self.cfg = cfg or PipelineConfig()
        self.prims = None
        self._grid = None
        self._dist = None
        self._next_edg_time = -math.inf
        self._next_plan_time = -math.inf
        self._field = None
        self._goal_cell = None
        self._global_path = None
        self._map_changed = True
        self.replan_count = 0
        self._last_timestamp = -math.inf
        self._next_local_time = -math.inf
        self._cached_snapshot = None

    def _refresh_edg(self, grid, now):
        if now >= self._next_edg_time and (self._dist is None or grid is not self._grid):
            self._grid = grid
            self._dist = distance_transform(grid)
            self._next_edg_time = now + self.cfg.edg_cycle
            self._map_changed = True

    def _path_invalidated(self):
        if self._global_path is None or not self._map_changed:
            return False
        poses = self._global_path.poses
        free = poses_collision_free(
            self._dist, poses[:, 0], poses[:, 1], poses[:, 2], self.cfg.robot
        )
        return not free.all()

    def _replan_global(self, pose, goal, now):
        cfg = self.cfg
        geom = self._dist.geometry
        if self.prims is None or self.prims.resolution != geom.resolution:
            self.prims = generate_arc_primitives(
                cfg.num_angles, geom.resolution, cfg.v_lin, cfg.v_ang
            )
        start_state = LatticeState(
            *geom.world_to_cell(pose[0], pose[1]), bin_of_angle(pose[2], cfg.num_angles)
        )
        goal_state = LatticeState(
            *geom.world_to_cell(goal[0], goal[1]), bin_of_angle(goal[2], cfg.num_angles)
        )
        goal_cell = (goal_state.ix, goal_state.iy)
        if self._field is None or self._goal_cell != goal_cell or self._map_changed:
            self._field = build_heuristic(
                self._dist, goal_cell, cfg.connectivity,
                cfg.robot.inscribed_radius, 1.0 / cfg.v_lin,
            )
            self._goal_cell = goal_cell
        result = plan(
            self._dist, self.prims, self._field, start_state, goal_state,
            cfg.robot, pruning=cfg.pruning,
        )
        self._map_changed = False
        self._next_plan_time = now + cfg.global_cycle
        self.replan_count += 1
        if result.succeeded:
            self._global_path = result.path
        else:
            self._global_path = None
        return result

    def _extract_chain(self, pose):
        """Local chain: samples along the global path starting at the point
        closest to the robot, capped in cumulative length; truncated at the
        goal (final segment flagged)."""
        cfg = self.cfg
        points = self._global_path.poses[:, :2]
        keep = np.concatenate([[True], np.hypot(*np.diff(points, axis=0).T) > 1e-9])
        points = points[keep]
        s = _arc_lengths(points)
        nearest = int(np.argmin(np.hypot(points[:, 0] - pose[0], points[:, 1] - pose[1])))
        s0 = s[nearest]
        s_end = min(s[-1], s0 + cfg.chain_length_cap)
        final_segment = s_end >= s[-1] - 1e-9
        # keep a workable span even when the robot sits near the path end
        s0 = min(s0, max(0.0, s_end - 2.0 * cfg.sample_interval))
        n_samples = max(3, int(math.ceil((s_end - s0) / cfg.sample_interval)) + 1)
        targets = np.linspace(s0, s_end, n_samples)
        xs = np.interp(targets, s, points[:, 0])
        ys = np.interp(targets, s, points[:, 1])
        return VertexChain(np.column_stack([xs, ys])), final_segment

    def step(self, pose, goal, grid: OccupancyGrid, now, current_speed=0.0) -> PlanSnapshot:
        """One planning-loop iteration; returns the full snapshot."""
        if now <= self._last_timestamp:
            raise InvalidInputError("snapshot timestamps must strictly increase")
        self._last_timestamp = now
        cfg = self.cfg
        self._refresh_edg(grid, now)

        if math.hypot(pose[0] - goal[0], pose[1] - goal[1]) <= cfg.goal_tolerance:
            return PlanSnapshot(timestamp=now, outcome="OK", goal_reached=True)

        replanned = False
        if (
            self._global_path is None
            or now >= self._next_plan_time
            or self._path_invalidated()
        ):
            result = self._replan_global(pose, goal, now)
            replanned = True
            if not result.succeeded:
                return PlanSnapshot(
                    timestamp=now, outcome="NO_PATH", replanned=True,
                    search_stats=result.stats,
                )
            stats = result.stats
        else:
            stats = None

        # local layer runs on its own cycle; between runs the previous
        # local products stay valid and are re-issued with a fresh stamp
        if (
            not replanned
            and self._cached_snapshot is not None
            and now < self._next_local_time
        ):
            return replace(self._cached_snapshot, timestamp=now, replanned=False)
        self._next_local_time = now + cfg.local_cycle

        chain, final_segment = self._extract_chain(pose)
        local_dist = _local_window_grid(self._grid, (pose[0], pose[1]), cfg)
        report = None
        optimized = chain
        if cfg.optimize_local:
            optimized, report = optimize(chain, local_dist, cfg.optimizer)
        smooth = spline_smooth(optimized)
        mvc = compute_mvc(smooth, cfg.limits)
        v_start = min(current_speed, mvc.v_cap[0])
        v_end = 0.0 if final_segment else min(cfg.limits.v_max, float(mvc.v_cap[-1]))
        profile = integrate_profile(mvc, cfg.limits, v_start, v_end)

        outcome = "OK"
        if report is not None and report.non_converged:
            outcome = "NON_CONVERGED"
        snapshot = PlanSnapshot(
            timestamp=now,
            outcome=outcome,
            replanned=replanned,
            final_segment=final_segment,
            global_path=self._global_path,
            chain_initial=chain,
            chain_optimized=optimized,
            smooth_path=smooth,
            profile=profile,
            search_stats=stats,
            optimizer_report=report,
        )
        self._cached_snapshot = snapshot
        return snapshot


# --- simulation -------------------------------------------------------------


@dataclass
class SimulationResult:
    outcome: str  # OK | NO_PATH | FAILED | NON_CONVERGED
    travel_time: float
    min_clearance: float
    replan_count: int
    rows: list  # (t, x, y, heading, v, clearance)
    failure_time: float = math.nan

    def write_trajectory(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write("t_s,x_m,y_m,heading_rad,v_mps,clearance_m\n")
            for row in self.rows:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def simulate(
    grid: OccupancyGrid,
    start,
    goal,
    cfg: PipelineConfig = None,
    edits=(),
    max_time=180.0,
) -> SimulationResult:
    """Run the loop on a unicycle that follows each snapshot's profile.

    The execution tick is 10 ms; the planning step runs on the
    distance-grid cycle. Map edits apply at their timestamps (a fresh grid
    snapshot each time). The run fails if the robot's clearance drops
    below its inscribed radius, if planning finds no path, or on timeout.
    """
    cfg = cfg or PipelineConfig()
    pipe = Pipeline(cfg)
    pending = sorted(edits, key=lambda e: e.time)
    pose = tuple(start)
    speed = 0.0
    snapshot = None
    followed_path = None  # identity of the path the profile clock refers to
    profile_clock = 0.0
    rows = []
    min_clearance = math.inf
    outcome = None
    failure_time = math.nan
    goal_time = math.nan

    ticks_per_step = max(1, int(round(cfg.edg_cycle / SIM_DT)))
    n_ticks = int(round(max_time / SIM_DT))
    for tick in range(n_ticks + 1):
        now = tick * SIM_DT
        while pending and pending[0].time <= now:
            grid = pending.pop(0).apply(grid)

        if tick % ticks_per_step == 0:
            snapshot = pipe.step(pose, goal, grid, now + 0.5 * SIM_DT, current_speed=speed)
            if snapshot.goal_reached:
                outcome = "OK"
                goal_time = now
                break
            if snapshot.outcome == "NO_PATH":
                outcome = "NO_PATH"
                failure_time = now
                break
            # on a fresh local path, rejoin at the nearest arc position;
            # while the path is unchanged keep integrating the clock
            if snapshot.smooth_path is not followed_path:
                followed_path = snapshot.smooth_path
                smooth = snapshot.smooth_path
                s_samples = np.linspace(0.0, smooth.total_length, 400)
                u = smooth.u_at_s(s_samples)
                d2 = (smooth.spline_x(u) - pose[0]) ** 2 + (smooth.spline_y(u) - pose[1]) ** 2
                s_here = float(s_samples[int(np.argmin(d2))])
                profile_clock = float(np.interp(s_here, snapshot.profile.s, snapshot.profile.t))

        profile = snapshot.profile
        profile_clock += SIM_DT
        s_now = float(np.interp(profile_clock, profile.t, profile.s))
        speed = float(np.interp(profile_clock, profile.t, profile.v))
        pose = snapshot.smooth_path.pose_at_s(s_now)

        clearance = float(clearance_at(pipe._dist, [pose[0]], [pose[1]])[0])
        min_clearance = min(min_clearance, clearance)
        rows.append((now, pose[0], pose[1], pose[2], speed, clearance))
        if clearance - cfg.robot.inscribed_radius < 0.0:
            outcome = "FAILED"
            failure_time = now
            break
        if math.hypot(pose[0] - goal[0], pose[1] - goal[1]) <= cfg.goal_tolerance:
            outcome = "OK"
            goal_time = now
            break

    if outcome is None:
        outcome = "FAILED"  # timeout
        failure_time = n_ticks * SIM_DT
    travel_time = goal_time if outcome == "OK" else math.nan
    return SimulationResult(
        outcome=outcome,
        travel_time=travel_time,
        min_clearance=min_clearance if rows else math.nan,
        replan_count=pipe.replan_count,
        rows=rows,
        failure_time=failure_time,
    )
