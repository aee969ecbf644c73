"""Programmatic benchmark fixture maps.

Five desk-scale 8 x 8 m worlds at the 0.1 m global resolution: an L-bend
corridor, a U-turn corridor, a lane maze, a two-room door scene with
boxes, and seeded random clutter. Start headings are chosen adversarially
(facing away from or across the route) so the planner has to turn before
making progress; that is the regime where primitive pruning pays off, and
it mirrors how a parked robot actually receives goals.

Each generator returns (grid, start_pose, goal_pose) with world-frame
poses (x, y, heading).
"""

import math

import numpy as np

from .errors import InvalidInputError
from .gridmap import FREE, OCCUPIED, GridGeometry, OccupancyGrid

SIZE_CELLS = 80
RESOLUTION = 0.1


def _blank(fill=OCCUPIED):
    geom = GridGeometry(SIZE_CELLS, SIZE_CELLS, RESOLUTION)
    return OccupancyGrid(geom, np.full((SIZE_CELLS, SIZE_CELLS), fill, dtype=np.uint8))


def _pose(ix, iy, theta):
    return ((ix + 0.5) * RESOLUTION, (iy + 0.5) * RESOLUTION, theta)


def corridor_map():
    """Two L-bends; the robot starts facing the dead-end side."""
    g = _blank()
    g.cells[10:24, 6:60] = FREE
    g.cells[10:70, 46:60] = FREE
    g.cells[56:70, 46:76] = FREE
    return g, _pose(10, 16, math.pi), _pose(72, 62, 0.0)


def uturn_map():
    """Two parallel corridors joined on the right; start across the lane."""
    g = _blank()
    g.cells[10:22, 8:72] = FREE
    g.cells[58:70, 8:72] = FREE
    g.cells[10:70, 60:72] = FREE
    return g, _pose(14, 16, -math.pi / 2.0), _pose(14, 64, math.pi)


def maze_map():
    """Three horizontal lanes with two connectors; start faces backward."""
    g = _blank()
    g.cells[6:22, 6:74] = FREE
    g.cells[32:48, 6:74] = FREE
    g.cells[58:74, 6:74] = FREE
    g.cells[6:74, 58:74] = FREE
    g.cells[6:58, 6:22] = FREE
    return g, _pose(12, 12, math.pi), _pose(66, 66, 0.0)


def door_map():
    """Two rooms split by a wall with one door, boxes on both sides."""
    g = _blank()
    g.cells[4:76, 4:76] = FREE
    g.cells[38:42, 4:34] = OCCUPIED
    g.cells[38:42, 46:76] = OCCUPIED
    g.cells[50:58, 22:30] = OCCUPIED
    g.cells[56:64, 52:60] = OCCUPIED
    g.cells[18:26, 50:58] = OCCUPIED
    return g, _pose(12, 12, -math.pi / 2.0), _pose(60, 66, math.pi / 2.0)


def clutter_map(seed=42, n_boxes=14, box_cells=7):
    """Random 0.7 m boxes in an open room, keep-out discs at the endpoints."""
    rng = np.random.default_rng(seed)
    g = _blank()
    g.cells[4:76, 4:76] = FREE
    placed = 0
    while placed < n_boxes:
        x, y = rng.integers(10, 64, 2)
        if (x - 10) ** 2 + (y - 10) ** 2 < 300 or (x - 64) ** 2 + (y - 64) ** 2 < 300:
            continue
        g.cells[y : y + box_cells, x : x + box_cells] = OCCUPIED
        placed += 1
    return g, _pose(10, 10, -math.pi / 2.0), _pose(68, 68, math.pi / 4.0)


FIXTURES = {
    "corridor": corridor_map,
    "uturn": uturn_map,
    "maze": maze_map,
    "door_boxes": door_map,
    "clutter": clutter_map,
}


def make_fixture(name, seed=42):
    """Build a named fixture; `seed` only affects the clutter map."""
    try:
        factory = FIXTURES[name]
    except KeyError:
        raise InvalidInputError(
            f"unknown fixture {name!r}; available: {', '.join(sorted(FIXTURES))}"
        ) from None
    if name == "clutter":
        return factory(seed=seed)
    return factory()
