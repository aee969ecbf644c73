"""Occupancy-grid world model and distance-field queries.

The world is a raster of FREE / OCCUPIED / UNKNOWN cells. A distance grid
derived from it stores, per cell, the exact Euclidean distance (meters,
cell center to cell center) to the nearest obstacle cell; continuous
queries between cell centers use bilinear interpolation.

Grid conventions: cells are indexed [iy, ix] row-major, iy = 0 is the
bottom row; cell (ix, iy) is centered at
(origin_x + (ix + 0.5) * resolution, origin_y + (iy + 0.5) * resolution).
Distance grids are immutable after construction and safe to share across
threads; map updates build a new snapshot.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import _kernels
from .errors import InvalidInputError, MapFormatError, OutOfBoundsError

FREE = 0
OCCUPIED = 1
UNKNOWN = 2

# Sidecar defaults matching common 2-D map tooling.
DEFAULT_OCCUPIED_THRESH = 0.65
DEFAULT_FREE_THRESH = 0.196

_PGM_FREE = 254
_PGM_OCCUPIED = 0
_PGM_UNKNOWN = 205


@dataclass(frozen=True)
class GridGeometry:
    """Shared raster header: dimensions, cell size, world origin.

    The origin is the world coordinate of the lower-left corner of cell
    (0, 0), not of its center.
    """

    width: int
    height: int
    resolution: float
    origin_x: float = 0.0
    origin_y: float = 0.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise InvalidInputError(f"empty grid: {self.width} x {self.height}")
        if self.resolution <= 0:
            raise InvalidInputError(f"non-positive resolution {self.resolution}")

    def cell_center(self, ix, iy):
        return (
            self.origin_x + (ix + 0.5) * self.resolution,
            self.origin_y + (iy + 0.5) * self.resolution,
        )

    def world_to_cell(self, x, y):
        ix = int(math.floor((x - self.origin_x) / self.resolution))
        iy = int(math.floor((y - self.origin_y) / self.resolution))
        return ix, iy

    def contains_cell(self, ix, iy):
        return 0 <= ix < self.width and 0 <= iy < self.height

    def contains_point(self, x, y):
        return (
            self.origin_x <= x < self.origin_x + self.width * self.resolution
            and self.origin_y <= y < self.origin_y + self.height * self.resolution
        )

    @property
    def max_distance(self):
        """Sentinel distance for obstacle-free maps: the map diagonal."""
        return math.hypot(self.width * self.resolution, self.height * self.resolution)


@dataclass
class OccupancyGrid:
    geometry: GridGeometry
    cells: np.ndarray  # uint8 (height, width), values FREE/OCCUPIED/UNKNOWN

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.uint8)
        expected = (self.geometry.height, self.geometry.width)
        if self.cells.shape != expected:
            raise InvalidInputError(
                f"cell array shape {self.cells.shape} does not match geometry {expected}"
            )
        if not np.isin(self.cells, (FREE, OCCUPIED, UNKNOWN)).all():
            raise InvalidInputError("cells contain values outside {FREE, OCCUPIED, UNKNOWN}")

    def copy(self):
        return OccupancyGrid(self.geometry, self.cells.copy())

    @classmethod
    def empty(cls, width, height, resolution, origin_x=0.0, origin_y=0.0):
        geom = GridGeometry(width, height, resolution, origin_x, origin_y)
        return cls(geom, np.full((height, width), FREE, dtype=np.uint8))


@dataclass(frozen=True)
class DistanceGrid:
    """Per-cell Euclidean distance (m) to the nearest obstacle cell center.

    Obstacle cells hold 0. Immutable snapshot; the backing array is marked
    read-only so accidental mutation fails loudly.
    """

    geometry: GridGeometry
    distances: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.distances, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "distances", arr)

    def distance_at_cell(self, ix, iy):
        return float(self.distances[iy, ix])


def distance_transform(grid: OccupancyGrid, unknown_is_obstacle: bool = True) -> DistanceGrid:
    """Exact Euclidean distance transform of an occupancy grid.

    Each cell receives the distance in meters from its center to the center
    of the nearest OCCUPIED cell (UNKNOWN counts as an obstacle when
    `unknown_is_obstacle`, the conservative default for partially unknown
    maps). A map with no obstacles yields the geometry's max_distance
    sentinel everywhere.
    """
    geom = grid.geometry
    obstacle = grid.cells == OCCUPIED
    if unknown_is_obstacle:
        obstacle |= grid.cells == UNKNOWN
    if not obstacle.any():
        dist = np.full((geom.height, geom.width), geom.max_distance)
        return DistanceGrid(geom, dist)
    # Transform in cell units, scale afterwards: center-to-center distances
    # are then sqrt(integer) * resolution, exactly reproducible by a
    # brute-force nearest-obstacle scan.
    dist = ndimage.distance_transform_edt(~obstacle) * geom.resolution
    return DistanceGrid(geom, dist)


def _interior_fractions(dg: DistanceGrid, xs, ys):
    geom = dg.geometry
    fx = (np.asarray(xs, dtype=np.float64) - geom.origin_x) / geom.resolution - 0.5
    fy = (np.asarray(ys, dtype=np.float64) - geom.origin_y) / geom.resolution - 0.5
    inside = (fx >= 0.0) & (fx <= geom.width - 1) & (fy >= 0.0) & (fy <= geom.height - 1)
    return fx, fy, inside


def interpolate_distance(dg: DistanceGrid, x, y) -> float:
    """Bilinearly interpolated obstacle distance at a world point.

    The point must lie in the grid interior (at least half a cell from the
    border) so that all four surrounding cell centers exist.
    """
    fx, fy, inside = _interior_fractions(dg, [x], [y])
    if not inside[0]:
        raise OutOfBoundsError(f"query ({x}, {y}) outside grid interior")
    geom = dg.geometry
    out = _kernels.bilinear_values(
        dg.distances, geom.origin_x, geom.origin_y, geom.resolution,
        np.asarray([x], dtype=np.float64), np.asarray([y], dtype=np.float64),
    )
    return float(out[0])


def interpolate_gradient(dg: DistanceGrid, x, y):
    """Analytic gradient (d/dx, d/dy) of the bilinear distance surface.

    On patch-boundary lines, where the piecewise surface has no unique
    gradient, the lower-index patch decides.
    """
    fx, fy, inside = _interior_fractions(dg, [x], [y])
    if not inside[0]:
        raise OutOfBoundsError(f"query ({x}, {y}) outside grid interior")
    geom = dg.geometry
    _, gx, gy = _kernels.bilinear_with_gradient(
        dg.distances, geom.origin_x, geom.origin_y, geom.resolution,
        np.asarray([x], dtype=np.float64), np.asarray([y], dtype=np.float64),
    )
    return float(gx[0]), float(gy[0])


def clearance_at(dg: DistanceGrid, xs, ys):
    """Vectorized obstacle distance with a total domain.

    Interior points interpolate bilinearly; points inside the grid but
    within half a cell of the border fall back to their cell's stored
    distance; points outside the grid return -inf (treat as collision).
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=np.float64))
    ys = np.atleast_1d(np.asarray(ys, dtype=np.float64))
    geom = dg.geometry
    fx, fy, interior = _interior_fractions(dg, xs, ys)
    out = np.full(xs.shape, -np.inf)
    if interior.any():
        out[interior] = _kernels.bilinear_values(
            dg.distances, geom.origin_x, geom.origin_y, geom.resolution,
            xs[interior], ys[interior],
        )
    border = ~interior
    if border.any():
        ix = np.floor((xs[border] - geom.origin_x) / geom.resolution).astype(np.int64)
        iy = np.floor((ys[border] - geom.origin_y) / geom.resolution).astype(np.int64)
        ongrid = (ix >= 0) & (ix < geom.width) & (iy >= 0) & (iy < geom.height)
        vals = np.full(ix.shape, -np.inf)
        vals[ongrid] = dg.distances[iy[ongrid], ix[ongrid]]
        out[border] = vals
    return out


@dataclass(frozen=True)
class RobotShape:
    """Convex-enough footprint polygon with its two bounding radii."""

    footprint: np.ndarray  # (V, 2) body-frame polygon vertices, meters
    inscribed_radius: float
    circumscribed_radius: float

    def __post_init__(self):
        object.__setattr__(self, "footprint", np.asarray(self.footprint, dtype=np.float64))
        if not 0.0 < self.inscribed_radius <= self.circumscribed_radius:
            raise InvalidInputError(
                "radii must satisfy 0 < inscribed <= circumscribed, got "
                f"{self.inscribed_radius} / {self.circumscribed_radius}"
            )

    @classmethod
    def rectangle(cls, half_length, half_width):
        fp = np.array(
            [
                (half_length, half_width),
                (-half_length, half_width),
                (-half_length, -half_width),
                (half_length, -half_width),
            ]
        )
        return cls(fp, min(half_length, half_width), math.hypot(half_length, half_width))

    @classmethod
    def octagon(cls, circumradius):
        """Regular octagon; a near-circular footprint keeps the band
        between the two radii (where the exact polygon check is needed)
        thin, so the cheap distance tiers decide almost every pose."""
        angles = (2 * np.arange(8) + 1) * math.pi / 8.0
        fp = circumradius * np.column_stack([np.cos(angles), np.sin(angles)])
        return cls(fp, circumradius * math.cos(math.pi / 8.0), circumradius)


def default_robot():
    """~0.33 m octagonal robot used by the fixtures and the CLI defaults."""
    return RobotShape.octagon(0.17)


def _points_in_polygon(px, py, poly):
    """Even-odd-rule point-in-polygon test, vectorized over points."""
    inside = np.zeros(px.shape, dtype=bool)
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        crosses = (y1 > py) != (y2 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_at = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (px < x_at)
    return inside


def footprint_cells_occupied(dg: DistanceGrid, pose, footprint):
    """True when any grid cell whose center falls inside the footprint
    polygon (placed at `pose`) is an obstacle cell (distance 0) or lies
    outside the grid."""
    x, y, theta = pose
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    world_poly = footprint @ rot.T + np.array([x, y])
    geom = dg.geometry
    lo_x, lo_y = world_poly.min(axis=0)
    hi_x, hi_y = world_poly.max(axis=0)
    ix0, iy0 = geom.world_to_cell(lo_x, lo_y)
    ix1, iy1 = geom.world_to_cell(hi_x, hi_y)
    if ix0 < 0 or iy0 < 0 or ix1 >= geom.width or iy1 >= geom.height:
        return True
    ixs = np.arange(ix0, ix1 + 1)
    iys = np.arange(iy0, iy1 + 1)
    cx = geom.origin_x + (ixs + 0.5) * geom.resolution
    cy = geom.origin_y + (iys + 0.5) * geom.resolution
    gx, gy = np.meshgrid(cx, cy)
    covered = _points_in_polygon(gx.ravel(), gy.ravel(), world_poly)
    if not covered.any():
        return False
    block = dg.distances[iy0 : iy1 + 1, ix0 : ix1 + 1].ravel()
    return bool((block[covered] <= 0.0).any())


def is_pose_collision_free(dg: DistanceGrid, pose, inscribed_r, circumscribed_r, footprint):
    """Three-tier footprint collision test at a continuous pose.

    Clearance at the pose >= circumscribed radius decides FREE, clearance
    below the inscribed radius decides COLLISION, and the in-between band
    falls through to an exact footprint rasterization. Poses outside the
    grid are COLLISION (conservative).
    """
    if not 0.0 < inscribed_r <= circumscribed_r:
        raise InvalidInputError("radii must satisfy 0 < inscribed <= circumscribed")
    x, y = pose[0], pose[1]
    d = clearance_at(dg, [x], [y])[0]
    if d >= circumscribed_r:
        return True
    if d < inscribed_r:
        return False
    return not footprint_cells_occupied(dg, pose, np.asarray(footprint, dtype=np.float64))


def poses_collision_free(dg: DistanceGrid, xs, ys, thetas, robot: RobotShape):
    """Batch variant of is_pose_collision_free over parallel pose arrays."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    d = clearance_at(dg, xs, ys)
    free = d >= robot.circumscribed_radius
    blocked = d < robot.inscribed_radius
    band = ~(free | blocked)
    if band.any():
        for i in np.nonzero(band)[0]:
            free[i] = not footprint_cells_occupied(
                dg, (xs[i], ys[i], thetas[i]), robot.footprint
            )
    return free


# --- map file I/O ----------------------------------------------------------


def _parse_metadata(path):
    """Parse the key:value sidecar; origin may be `[x, y, yaw]` or `x y yaw`."""
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if ":" not in line:
                raise MapFormatError(f"line {lineno}: expected 'key: value'", path=path)
            key, value = line.split(":", 1)
            meta[key.strip()] = value.strip()
    try:
        resolution = float(meta["resolution"])
        raw_origin = meta.get("origin", "0 0 0")
        origin = [float(v) for v in raw_origin.replace("[", "").replace("]", "").replace(",", " ").split()]
        occupied_thresh = float(meta.get("occupied_thresh", DEFAULT_OCCUPIED_THRESH))
        free_thresh = float(meta.get("free_thresh", DEFAULT_FREE_THRESH))
        negate = int(meta.get("negate", 0))
    except KeyError as exc:
        raise MapFormatError(f"missing metadata field {exc}", path=path) from None
    except ValueError as exc:
        raise MapFormatError(f"bad metadata value: {exc}", path=path) from None
    if len(origin) < 2:
        raise MapFormatError(f"origin needs at least x and y, got {raw_origin!r}", path=path)
    return resolution, origin, occupied_thresh, free_thresh, negate


def _read_pgm(path):
    """Binary PGM (P5) reader returning (array rows top-first, maxval)."""
    with open(path, "rb") as fh:
        data = fh.read()

    pos = 0

    def next_token():
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MapFormatError("truncated header", path=path, offset=start)
        return data[start:pos], start

    magic, off = next_token()
    if magic != b"P5":
        raise MapFormatError(f"expected magic 'P5', got {magic!r}", path=path, offset=off)
    fields = []
    for _ in range(3):
        tok, off = next_token()
        try:
            fields.append(int(tok))
        except ValueError:
            raise MapFormatError(f"bad header integer {tok!r}", path=path, offset=off) from None
    width, height, maxval = fields
    if maxval != 255:
        raise MapFormatError(f"only maxval 255 supported, got {maxval}", path=path)
    pos += 1  # single whitespace byte after maxval
    expected = width * height
    raster = data[pos : pos + expected]
    if len(raster) != expected:
        raise MapFormatError(
            f"raster truncated: expected {expected} bytes, got {len(raster)}",
            path=path,
            offset=pos,
        )
    img = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return img


def load_map(pgm_path, metadata_path=None) -> OccupancyGrid:
    """Load a PGM map plus its metadata sidecar into an OccupancyGrid.

    Image row 0 is the top of the picture while the origin names the
    bottom-left corner, so rows are flipped on load. Pixels map to
    occupancy probability (255 - p) / 255 (or p / 255 when `negate`),
    thresholded into OCCUPIED / FREE / UNKNOWN.
    """
    if metadata_path is None:
        metadata_path = str(pgm_path).rsplit(".", 1)[0] + ".yaml"
    resolution, origin, occ_thresh, free_thresh, negate = _parse_metadata(metadata_path)
    img = _read_pgm(pgm_path)
    img = np.flipud(img)  # row 0 becomes the bottom row
    p = img.astype(np.float64)
    occ = p / 255.0 if negate else (255.0 - p) / 255.0
    cells = np.full(img.shape, UNKNOWN, dtype=np.uint8)
    cells[occ > occ_thresh] = OCCUPIED
    cells[occ < free_thresh] = FREE
    geom = GridGeometry(img.shape[1], img.shape[0], resolution, origin[0], origin[1])
    return OccupancyGrid(geom, cells)


def save_map(grid: OccupancyGrid, pgm_path, metadata_path=None):
    """Write a grid as binary PGM plus metadata sidecar (load_map inverse)."""
    if metadata_path is None:
        metadata_path = str(pgm_path).rsplit(".", 1)[0] + ".yaml"
    img = np.full(grid.cells.shape, _PGM_UNKNOWN, dtype=np.uint8)
    img[grid.cells == FREE] = _PGM_FREE
    img[grid.cells == OCCUPIED] = _PGM_OCCUPIED
    img = np.flipud(img)
    geom = grid.geometry
    with open(pgm_path, "wb") as fh:
        fh.write(f"P5\n{geom.width} {geom.height}\n255\n".encode())
        fh.write(img.tobytes())
    with open(metadata_path, "w", encoding="utf-8") as fh:
        fh.write(f"resolution: {geom.resolution}\n")
        fh.write(f"origin: [{geom.origin_x}, {geom.origin_y}, 0.0]\n")
        fh.write(f"occupied_thresh: {DEFAULT_OCCUPIED_THRESH}\n")
        fh.write(f"free_thresh: {DEFAULT_FREE_THRESH}\n")
        fh.write("negate: 0\n")
