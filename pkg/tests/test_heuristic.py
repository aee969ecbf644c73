"""Cost-to-goal field tests against a scipy sparse-graph Dijkstra oracle."""

import math

import numpy as np
import pytest
from helpers import occupancy_from_ascii
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as scipy_dijkstra

from latticenav.errors import InvalidGoalError
from latticenav.gridmap import FREE, OCCUPIED, GridGeometry, OccupancyGrid, distance_transform
from latticenav.heuristic import CONNECTIVITY, HeuristicField, build_heuristic, save_field

INSCRIBED = 0.15
CTC = 1.0 / 0.7  # s/m


def oracle_costs(dg, goal, connectivity, inscribed_r, ctc):
    """Independent Dijkstra over an explicitly materialized sparse graph."""
    geom = dg.geometry
    h, w = geom.height, geom.width
    blocked = np.asarray(dg.distances) < inscribed_r
    rows, cols, data = [], [], []
    for dx, dy, length in CONNECTIVITY[connectivity]:
        cost = length * geom.resolution * ctc
        for iy in range(h):
            ny = iy + dy
            if not 0 <= ny < h:
                continue
            for ix in range(w):
                nx = ix + dx
                if not 0 <= nx < w:
                    continue
                if blocked[iy, ix] or blocked[ny, nx]:
                    continue
                rows.append(iy * w + ix)
                cols.append(ny * w + nx)
                data.append(cost)
    graph = csr_matrix((data, (rows, cols)), shape=(h * w, h * w))
    gx, gy = goal
    dist = scipy_dijkstra(graph, indices=gy * w + gx, directed=True)
    dist = dist.reshape(h, w)
    dist[blocked] = math.inf
    return dist


def random_occupancy(rng, w=30, h=30, p=0.15):
    cells = np.where(rng.random((h, w)) < p, OCCUPIED, FREE).astype(np.uint8)
    return OccupancyGrid(GridGeometry(w, h, 0.1), cells)


def pick_goal(rng, dg, inscribed_r=INSCRIBED):
    free_iy, free_ix = np.nonzero(np.asarray(dg.distances) >= inscribed_r)
    i = rng.integers(len(free_ix))
    return int(free_ix[i]), int(free_iy[i])


class TestBuildHeuristic:
    def test_goal_cell_zero(self):
        grid = OccupancyGrid.empty(10, 10, 0.1)
        dg = distance_transform(grid)
        field = build_heuristic(dg, (4, 5), 16, INSCRIBED, CTC)
        assert field.value(4, 5) == 0.0
        assert math.isnan(field.guide(4, 5))

    def test_knight_move_cost_on_empty_grid(self):
        grid = OccupancyGrid.empty(20, 20, 0.1)
        dg = distance_transform(grid)
        field = build_heuristic(dg, (10, 10), 16, INSCRIBED, CTC)
        assert field.value(12, 11) == pytest.approx(math.sqrt(5) * 0.1 * CTC)
        assert field.value(11, 11) == pytest.approx(math.sqrt(2) * 0.1 * CTC)

    @pytest.mark.parametrize("connectivity", [8, 16])
    def test_matches_oracle_on_random_grids(self, connectivity):
        rng = np.random.default_rng(11)
        for _ in range(4):
            grid = random_occupancy(rng)
            dg = distance_transform(grid)
            goal = pick_goal(rng, dg)
            field = build_heuristic(dg, goal, connectivity, INSCRIBED, CTC)
            oracle = oracle_costs(dg, goal, connectivity, INSCRIBED, CTC)
            np.testing.assert_allclose(field.cost, oracle, rtol=1e-12, atol=0)

    def test_inflated_cells_are_infinite(self):
        grid = OccupancyGrid.empty(12, 12, 0.1)
        grid.cells[6, 6] = OCCUPIED
        dg = distance_transform(grid)
        field = build_heuristic(dg, (1, 1), 16, inscribed_r=0.15, cell_traversal_cost=CTC)
        # the obstacle cell and its 4-neighbors sit below 0.15 m clearance
        assert math.isinf(field.value(6, 6))
        assert math.isinf(field.value(7, 6))
        assert not math.isinf(field.value(8, 6))

    def test_goal_in_obstacle_region_rejected(self):
        grid = OccupancyGrid.empty(12, 12, 0.1)
        grid.cells[6, 6] = OCCUPIED
        dg = distance_transform(grid)
        with pytest.raises(InvalidGoalError):
            build_heuristic(dg, (6, 6), 16, INSCRIBED, CTC)
        with pytest.raises(InvalidGoalError):
            build_heuristic(dg, (40, 6), 16, INSCRIBED, CTC)

    def test_out_of_grid_value_is_infinite(self):
        grid = OccupancyGrid.empty(8, 8, 0.1)
        field = build_heuristic(distance_transform(grid), (4, 4), 16, INSCRIBED, CTC)
        assert math.isinf(field.value(-1, 0))
        assert math.isinf(field.value(0, 99))


def walk_guide_chain(field: HeuristicField, start):
    """Follow guide angles toward the goal; returns the number of steps."""
    step_of_angle = {}
    for dx, dy, _ in CONNECTIVITY[field.connectivity]:
        step_of_angle[round(math.atan2(-dy, -dx), 9)] = (-dx, -dy)
    ix, iy = start
    geom = field.geometry
    limit = geom.width * geom.height
    steps = 0
    while (ix, iy) != field.goal_cell:
        angle = field.guide(ix, iy)
        assert not math.isnan(angle), f"chain broke at ({ix}, {iy})"
        dx, dy = step_of_angle[round(angle, 9)]
        ix, iy = ix + dx, iy + dy
        steps += 1
        assert steps <= limit, "guide chain exceeded cell count"
    return steps


class TestGuideAngles:
    def test_at_most_16_distinct_angles(self):
        rng = np.random.default_rng(12)
        grid = random_occupancy(rng)
        dg = distance_transform(grid)
        field = build_heuristic(dg, pick_goal(rng, dg), 16, INSCRIBED, CTC)
        finite = field.guide_angle[~np.isnan(field.guide_angle)]
        assert len(np.unique(finite)) <= 16

    def test_chains_reach_goal_through_wall_gap(self):
        grid = occupancy_from_ascii(
            "....................\n"
            "....................\n"
            "....................\n"
            ".........#..........\n"
            ".........#..........\n"
            ".........#..........\n"
            ".........#..........\n"
            "....................\n"
            ".........#..........\n"
            ".........#..........\n"
            ".........#..........\n"
            ".........#..........\n"
            "....................\n"
            "....................\n",
            resolution=0.5,
        )
        dg = distance_transform(grid)
        field = build_heuristic(dg, (2, 7), 16, inscribed_r=0.3, cell_traversal_cost=CTC)
        gap_x = 9
        crossed = 0
        for iy in range(grid.geometry.height):
            for ix in range(12, grid.geometry.width):
                if math.isinf(field.value(ix, iy)):
                    continue
                walk_guide_chain(field, (ix, iy))
                crossed += 1
        assert crossed > 20  # the far side is reachable only through the gap

    def test_chains_reach_goal_on_random_maps(self):
        rng = np.random.default_rng(13)
        grid = random_occupancy(rng, p=0.1)
        dg = distance_transform(grid)
        goal = pick_goal(rng, dg)
        field = build_heuristic(dg, goal, 16, INSCRIBED, CTC)
        finite_iy, finite_ix = np.nonzero(np.isfinite(field.cost))
        for ix, iy in zip(finite_ix, finite_iy):
            walk_guide_chain(field, (int(ix), int(iy)))


class TestRelaxationCertificate:
    @pytest.mark.parametrize("connectivity", [8, 16])
    def test_full_sweep(self, connectivity):
        rng = np.random.default_rng(14)
        grid = random_occupancy(rng)
        dg = distance_transform(grid)
        field = build_heuristic(dg, pick_goal(rng, dg), connectivity, INSCRIBED, CTC)
        geom = dg.geometry
        blocked = np.asarray(dg.distances) < INSCRIBED
        for dx, dy, length in CONNECTIVITY[connectivity]:
            edge = length * geom.resolution * CTC
            for iy in range(geom.height):
                for ix in range(geom.width):
                    nx, ny = ix + dx, iy + dy
                    if not geom.contains_cell(nx, ny):
                        continue
                    if blocked[iy, ix] or blocked[ny, nx]:
                        continue
                    assert field.cost[iy, ix] <= field.cost[ny, nx] + edge + 1e-12


def test_save_field_round_trip(tmp_path):
    grid = OccupancyGrid.empty(9, 7, 0.1)
    field = build_heuristic(distance_transform(grid), (3, 3), 16, INSCRIBED, CTC)
    path = tmp_path / "field.npz"
    save_field(field, path)
    data = np.load(path)
    np.testing.assert_array_equal(data["cost"], field.cost)
    np.testing.assert_array_equal(data["guide_angle"], field.guide_angle)
    assert data["resolution"] == 0.1
    assert tuple(data["goal_cell"]) == (3, 3)
