"""Offline motion-primitive generation, validation, and file I/O.

A primitive is a short kinematically feasible motion (constant-velocity arc
or in-place turn) whose endpoint lands on a lattice state: an integer cell
offset plus a heading bin. Each start heading carries three basic
primitives that the planner's pruning stage must never drop: one single-cell
forward step and the two in-place turns. Together these can realize any
path that exists in the discretized space, which is what preserves
resolution-completeness when the remaining primitives are pruned.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .angles import DEFAULT_NUM_ANGLES, angle_of_bin, wrap_angle
from .errors import PrimitiveError

FORWARD_STEP = "FORWARD_STEP"
TURN_LEFT_IN_PLACE = "TURN_LEFT_IN_PLACE"
TURN_RIGHT_IN_PLACE = "TURN_RIGHT_IN_PLACE"
GENERAL = "GENERAL"

KINDS = (FORWARD_STEP, TURN_LEFT_IN_PLACE, TURN_RIGHT_IN_PLACE, GENERAL)
BASIC_KINDS = (FORWARD_STEP, TURN_LEFT_IN_PLACE, TURN_RIGHT_IN_PLACE)

DEFAULT_V_LIN = 0.7  # m/s, indoor linear-velocity cap
DEFAULT_V_ANG = 1.0  # rad/s


class LatticeState(NamedTuple):
    """Discrete planner state: cell indices plus heading bin."""

    ix: int
    iy: int
    itheta: int


@dataclass(frozen=True)
class MotionPrimitive:
    prim_id: int
    start_angle_index: int
    end_offset: tuple  # (dix, diy, end_angle_index)
    cost: float  # seconds at the assumed constant velocities
    kind: str
    poses: np.ndarray = field(repr=False)  # (P, 3): x, y offsets (m) + absolute heading

    def __post_init__(self):
        object.__setattr__(self, "poses", np.asarray(self.poses, dtype=np.float64))

    @property
    def is_basic(self):
        return self.kind in BASIC_KINDS

    def apply(self, state: LatticeState, num_angles) -> LatticeState:
        dix, diy, end_itheta = self.end_offset
        return LatticeState(state.ix + dix, state.iy + diy, end_itheta % num_angles)


@dataclass
class PrimitiveSet:
    num_angles: int
    resolution: float
    primitives: list  # all MotionPrimitive, any order

    def __post_init__(self):
        self._by_angle = [[] for _ in range(self.num_angles)]
        for prim in self.primitives:
            self._by_angle[prim.start_angle_index % self.num_angles].append(prim)

    def for_angle(self, itheta):
        return self._by_angle[itheta % self.num_angles]

    def __len__(self):
        return len(self.primitives)

    def validate(self):
        """Check the structural invariants; raises PrimitiveError on failure."""
        half_cell = 0.5 * self.resolution + 1e-9
        half_bin = 0.5 * (2.0 * math.pi / self.num_angles) + 1e-9
        for itheta in range(self.num_angles):
            kinds = [p.kind for p in self.for_angle(itheta)]
            for basic in BASIC_KINDS:
                if kinds.count(basic) != 1:
                    raise PrimitiveError(
                        f"start angle {itheta}: expected exactly one {basic}, "
                        f"found {kinds.count(basic)}"
                    )
        for prim in self.primitives:
            tag = f"primitive {prim.prim_id} (angle {prim.start_angle_index}, {prim.kind})"
            if prim.cost <= 0:
                raise PrimitiveError(f"{tag}: non-positive cost {prim.cost}")
            if prim.kind not in KINDS:
                raise PrimitiveError(f"{tag}: unknown kind")
            poses = prim.poses
            if len(poses) < 2:
                raise PrimitiveError(f"{tag}: needs at least two poses")
            start_theta = angle_of_bin(prim.start_angle_index, self.num_angles)
            if (
                abs(poses[0, 0]) > half_cell
                or abs(poses[0, 1]) > half_cell
                or abs(wrap_angle(poses[0, 2] - start_theta)) > half_bin
            ):
                raise PrimitiveError(f"{tag}: first pose {poses[0]} too far from start state")
            dix, diy, end_itheta = prim.end_offset
            end_x, end_y = dix * self.resolution, diy * self.resolution
            end_theta = angle_of_bin(end_itheta, self.num_angles)
            if (
                abs(poses[-1, 0] - end_x) > half_cell
                or abs(poses[-1, 1] - end_y) > half_cell
                or abs(wrap_angle(poses[-1, 2] - end_theta)) > half_bin
            ):
                raise PrimitiveError(f"{tag}: last pose {poses[-1]} too far from end state")
            steps = np.hypot(np.diff(poses[:, 0]), np.diff(poses[:, 1]))
            if steps.size and steps.max() > 0.5 * self.resolution + 1e-9:
                raise PrimitiveError(
                    f"{tag}: pose spacing {steps.max():.4f} m exceeds collision-check density"
                )
        return self


def _arc_endpoint(theta0, length, curvature):
    if curvature == 0.0:
        return length * math.cos(theta0), length * math.sin(theta0), theta0
    theta1 = theta0 + curvature * length
    x = (math.sin(theta1) - math.sin(theta0)) / curvature
    y = (math.cos(theta0) - math.cos(theta1)) / curvature
    return x, y, theta1


def _sample_arc(theta0, length, curvature, max_spacing):
    n = max(2, int(math.ceil(length / max_spacing)) + 1)
    ts = np.linspace(0.0, length, n)
    poses = np.empty((n, 3))
    for i, t in enumerate(ts):
        poses[i] = _arc_endpoint(theta0, t, curvature)
    poses[:, 2] = wrap_angle(poses[:, 2])
    return poses


def aligned_step_length(itheta, resolution):
    """Length of the shortest lattice-aligned forward step for a heading.

    Axis headings step one cell, diagonal headings step to the (1, 1)
    neighbor, the in-between headings step to the knight-like (2, 1)
    neighbor. Charging each straight its true metric length keeps the
    cost-to-goal grid heuristic consistent along straight-line motion,
    which matters because the planner re-opens closed states.
    """
    family = itheta % 4
    if family == 0:
        return resolution
    if family == 2:
        return math.sqrt(2.0) * resolution
    return math.sqrt(5.0) * resolution


def default_arc_specs(resolution, itheta):
    """Built-in arc inventory for one start heading: single and double
    aligned forward steps plus 90-degree arcs of 2-cell radius either way."""
    step = aligned_step_length(itheta, resolution)
    radius = 2.0 * resolution
    quarter = 0.5 * math.pi * radius
    return [
        (step, 0.0),
        (2.0 * step, 0.0),
        (quarter, 1.0 / radius),
        (quarter, -1.0 / radius),
    ]


def generate_arc_primitives(
    num_angles=DEFAULT_NUM_ANGLES,
    resolution=0.1,
    v_lin=DEFAULT_V_LIN,
    v_ang=DEFAULT_V_ANG,
    arc_specs=None,
    snap_tolerance=0.5,
) -> PrimitiveSet:
    """Generate a lattice-snapped primitive set from (length, curvature) arcs.

    Every arc is rolled out from each start heading under the unicycle
    model and its endpoint snapped to the nearest lattice state; a spec
    whose endpoint misses the snap tolerance is rejected with the residual
    in the message. `snap_tolerance` is a fraction of a cell (and of a
    heading bin); the default 0.5 is the coarsest value that keeps lattice
    states unambiguous — under it only degenerate arcs (those snapping
    onto their own start state) fail, tighter values reject sloppier
    specs. Arc cost is length / v_lin; the always-added in-place turns
    cost one heading bin over v_ang. The shortest straight arc of each
    heading becomes the basic FORWARD_STEP; backward motions are not
    generated.

    `arc_specs` is either a flat list of (length, curvature) pairs applied
    to every start heading, or a callable (itheta) -> list of pairs; the
    default is `default_arc_specs`, whose straight steps are
    heading-aligned.
    """
    if v_lin <= 0 or v_ang <= 0:
        raise PrimitiveError(f"velocities must be positive, got v_lin={v_lin}, v_ang={v_ang}")
    if arc_specs is None:
        specs_for = lambda itheta: default_arc_specs(resolution, itheta)
    elif callable(arc_specs):
        specs_for = arc_specs
    else:
        specs_for = lambda itheta: arc_specs
    bin_width = 2.0 * math.pi / num_angles
    max_spacing = 0.5 * resolution
    prims = []
    prim_id = 0
    for itheta in range(num_angles):
        theta0 = angle_of_bin(itheta, num_angles)
        straight_lengths = [length for length, curv in specs_for(itheta) if curv == 0.0]
        min_straight = min(straight_lengths) if straight_lengths else None
        for length, curvature in specs_for(itheta):
            if length <= 0:
                raise PrimitiveError(f"arc length must be positive, got {length}")
            ex, ey, etheta = _arc_endpoint(theta0, length, curvature)
            dix = int(round(ex / resolution))
            diy = int(round(ey / resolution))
            res_x = ex - dix * resolution
            res_y = ey - diy * resolution
            end_bin = int(round(etheta / bin_width))
            res_a = wrap_angle(etheta - end_bin * bin_width)
            if (
                abs(res_x) > snap_tolerance * resolution + 1e-9
                or abs(res_y) > snap_tolerance * resolution + 1e-9
                or abs(res_a) > snap_tolerance * bin_width + 1e-9
            ):
                raise PrimitiveError(
                    f"arc (length={length}, curvature={curvature}) from angle {itheta} "
                    f"does not snap to the lattice: residual ({res_x:.4f} m, {res_y:.4f} m, "
                    f"{res_a:.4f} rad)"
                )
            if dix == 0 and diy == 0:
                raise PrimitiveError(
                    f"arc (length={length}, curvature={curvature}) from angle {itheta} "
                    "snaps onto its own start cell"
                )
            kind = (
                FORWARD_STEP
                if curvature == 0.0 and length == min_straight
                else GENERAL
            )
            poses = _sample_arc(theta0, length, curvature, max_spacing)
            prims.append(
                MotionPrimitive(
                    prim_id=prim_id,
                    start_angle_index=itheta,
                    end_offset=(dix, diy, end_bin % num_angles),
                    cost=length / v_lin,
                    kind=kind,
                    poses=poses,
                )
            )
            prim_id += 1
        for direction, kind in ((1, TURN_LEFT_IN_PLACE), (-1, TURN_RIGHT_IN_PLACE)):
            n = 5
            headings = theta0 + direction * bin_width * np.linspace(0.0, 1.0, n)
            poses = np.zeros((n, 3))
            poses[:, 2] = wrap_angle(headings)
            prims.append(
                MotionPrimitive(
                    prim_id=prim_id,
                    start_angle_index=itheta,
                    end_offset=(0, 0, (itheta + direction) % num_angles),
                    cost=bin_width / v_ang,
                    kind=kind,
                    poses=poses,
                )
            )
            prim_id += 1
    return PrimitiveSet(num_angles, resolution, prims).validate()


# --- text file format -------------------------------------------------------


def save_primitive_file(pset: PrimitiveSet, path):
    """Write the set in the text exchange format (see load_primitive_file)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"resolution_m: {pset.resolution!r}\n")
        fh.write(f"num_angles: {pset.num_angles}\n")
        fh.write(f"total_primitives: {len(pset)}\n")
        for prim in pset.primitives:
            dix, diy, end_itheta = prim.end_offset
            fh.write(f"prim_id: {prim.prim_id}\n")
            fh.write(f"start_angle_index: {prim.start_angle_index}\n")
            fh.write(f"end_pose_offset: {dix} {diy} {end_itheta}\n")
            fh.write(f"cost_s: {float(prim.cost)!r}\n")
            fh.write(f"kind: {prim.kind}\n")
            fh.write(f"num_poses: {len(prim.poses)}\n")
            for x, y, theta in prim.poses:
                fh.write(f"{float(x)!r} {float(y)!r} {float(theta)!r}\n")


class _LineReader:
    def __init__(self, path):
        self.path = path
        with open(path, encoding="utf-8") as fh:
            self.lines = fh.readlines()
        self.lineno = 0

    def next_line(self):
        while self.lineno < len(self.lines):
            line = self.lines[self.lineno].strip()
            self.lineno += 1
            if line and not line.startswith("#"):
                return line
        return None

    def error(self, message):
        return PrimitiveError(f"{self.path}:{self.lineno}: {message}")

    def expect_field(self, key):
        line = self.next_line()
        if line is None:
            raise self.error(f"unexpected end of file, expected '{key}:'")
        if not line.startswith(key + ":"):
            raise self.error(f"expected '{key}:', got {line!r}")
        return line[len(key) + 1 :].strip()


def load_primitive_file(path, expected_resolution=None, validate=True) -> PrimitiveSet:
    """Load a primitive set from the text exchange format.

    Parse failures raise PrimitiveError with the offending line number.
    When `expected_resolution` is given, a header mismatch is rejected
    naming both values. `validate` additionally enforces the full
    PrimitiveSet invariants (basic kinds present per angle, endpoint snap,
    pose density); turn it off to inspect partial or hand-written files.
    """
    reader = _LineReader(path)
    try:
        resolution = float(reader.expect_field("resolution_m"))
        num_angles = int(reader.expect_field("num_angles"))
        total = int(reader.expect_field("total_primitives"))
    except ValueError as exc:
        raise reader.error(f"bad header value: {exc}") from None
    if expected_resolution is not None and abs(resolution - expected_resolution) > 1e-12:
        raise PrimitiveError(
            f"{path}: primitive file resolution {resolution} does not match "
            f"expected resolution {expected_resolution}"
        )
    prims = []
    for _ in range(total):
        try:
            prim_id = int(reader.expect_field("prim_id"))
            start_idx = int(reader.expect_field("start_angle_index"))
            off_parts = reader.expect_field("end_pose_offset").split()
            if len(off_parts) != 3:
                raise reader.error(f"end_pose_offset needs 3 integers, got {off_parts}")
            end_offset = (int(off_parts[0]), int(off_parts[1]), int(off_parts[2]))
            cost = float(reader.expect_field("cost_s"))
            kind = reader.expect_field("kind")
            num_poses = int(reader.expect_field("num_poses"))
        except ValueError as exc:
            raise reader.error(f"bad field value: {exc}") from None
        poses = np.empty((num_poses, 3))
        for p in range(num_poses):
            line = reader.next_line()
            if line is None:
                raise reader.error("unexpected end of file inside pose list")
            parts = line.split()
            if len(parts) != 3:
                raise reader.error(f"pose line needs 3 floats, got {line!r}")
            try:
                poses[p] = [float(v) for v in parts]
            except ValueError as exc:
                raise reader.error(f"bad pose value: {exc}") from None
        prims.append(MotionPrimitive(prim_id, start_idx, end_offset, cost, kind, poses))
    if reader.next_line() is not None:
        raise reader.error("trailing content after declared primitives")
    pset = PrimitiveSet(num_angles, resolution, prims)
    if validate:
        pset.validate()
    return pset
