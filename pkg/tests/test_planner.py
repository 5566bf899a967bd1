import heapq

import numpy as np
import pytest

from scenemotion.errors import BlockedStart, Unreachable
from scenemotion.goals import Goal
from scenemotion.planner import (
    SQRT2,
    WAYPOINT_RADIUS,
    NavGrid,
    NavPath,
    a_star,
    build_nav_grid,
    line_of_sight,
    next_subgoal,
    octile,
    plan_path,
    raycast_cells,
    simplify,
)
from scenemotion.voxel import Box, Scene, SceneObject


def _grid_from_bool(blocked, cell=1.0):
    return NavGrid(cell=cell, origin=np.zeros(2), blocked=np.asarray(blocked, dtype=bool),
                   radius=0.0)


def _dijkstra_cost(grid, start, goal):
    """Reference shortest-path cost with the same 8-connected move set."""
    dist = {start: 0.0}
    heap = [(0.0, start)]
    seen = set()
    while heap:
        d, cur = heapq.heappop(heap)
        if cur in seen:
            continue
        seen.add(cur)
        if cur == goal:
            return d
        ix, iz = cur
        for dx in (-1, 0, 1):
            for dz in (-1, 0, 1):
                if dx == 0 and dz == 0:
                    continue
                nb = (ix + dx, iz + dz)
                if grid.is_blocked(nb):
                    continue
                if dx != 0 and dz != 0:
                    if grid.is_blocked((ix + dx, iz)) or grid.is_blocked((ix, iz + dz)):
                        continue
                step = SQRT2 if dx != 0 and dz != 0 else 1.0
                cand = d + step
                if cand < dist.get(nb, np.inf) - 1e-12:
                    dist[nb] = cand
                    heapq.heappush(heap, (cand, nb))
    return None


def _path_cost(cells):
    cost = 0.0
    for a, b in zip(cells, cells[1:]):
        cost += SQRT2 if a[0] != b[0] and a[1] != b[1] else 1.0
    return cost


def test_a_star_matches_dijkstra_on_random_grids():
    rng = np.random.default_rng(31)
    solved = 0
    unreachable = 0
    for trial in range(60):
        blocked = rng.uniform(size=(16, 16)) < 0.35
        grid = _grid_from_bool(blocked)
        free = np.argwhere(~blocked)
        if len(free) < 2:
            continue
        a, b = free[rng.integers(len(free))], free[rng.integers(len(free))]
        start, goal = (int(a[1]), int(a[0])), (int(b[1]), int(b[0]))
        oracle = _dijkstra_cost(grid, start, goal)
        if oracle is None:
            with pytest.raises(Unreachable):
                a_star(grid, start, goal)
            unreachable += 1
            continue
        path = a_star(grid, start, goal)
        assert path[0] == start and path[-1] == goal
        for c in path:
            assert not grid.is_blocked(c)
        assert np.isclose(_path_cost(path), oracle, atol=1e-9)
        solved += 1
    assert solved >= 20 and unreachable >= 1


def test_a_star_start_goal_validation():
    blocked = np.zeros((4, 4), dtype=bool)
    blocked[1, 1] = True
    grid = _grid_from_bool(blocked)
    with pytest.raises(BlockedStart):
        a_star(grid, (1, 1), (3, 3))
    with pytest.raises(Unreachable):
        a_star(grid, (0, 0), (1, 1))


def test_octile_heuristic_is_exact_on_empty_grid():
    grid = _grid_from_bool(np.zeros((12, 12), dtype=bool))
    rng = np.random.default_rng(32)
    for _ in range(20):
        s = (int(rng.integers(12)), int(rng.integers(12)))
        g = (int(rng.integers(12)), int(rng.integers(12)))
        path = a_star(grid, s, g)
        assert np.isclose(_path_cost(path), octile(s, g), atol=1e-9)


def test_raycast_supercover_covers_segment_cells():
    grid = _grid_from_bool(np.zeros((8, 8), dtype=bool))
    # horizontal ray through three cells
    cells = list(raycast_cells(grid, np.array([0.5, 0.5]), np.array([2.5, 0.5])))
    assert cells == [(0, 0), (1, 0), (2, 0)]
    # diagonal through the corner touches both side cells
    cells = set(raycast_cells(grid, np.array([0.5, 0.5]), np.array([1.5, 1.5])))
    assert {(0, 0), (1, 1), (1, 0), (0, 1)} == cells
    # oracle: every sampled point along random segments lies in a yielded cell
    rng = np.random.default_rng(33)
    for _ in range(50):
        p, q = rng.uniform(0.1, 7.9, size=2), rng.uniform(0.1, 7.9, size=2)
        cells = set(raycast_cells(grid, p, q))
        for t in np.linspace(0, 1, 64):
            x = p + t * (q - p)
            c = (int(np.floor(x[0])), int(np.floor(x[1])))
            # points exactly on gridlines may belong to either neighbor
            on_x = np.isclose(x[0], np.round(x[0]), atol=1e-9)
            on_z = np.isclose(x[1], np.round(x[1]), atol=1e-9)
            if not (on_x or on_z):
                assert c in cells


def test_line_of_sight_blocked_by_wall():
    blocked = np.zeros((5, 5), dtype=bool)
    blocked[:, 2] = True
    grid = _grid_from_bool(blocked)
    assert not line_of_sight(grid, np.array([0.5, 2.5]), np.array([4.5, 2.5]))
    assert line_of_sight(grid, np.array([0.5, 0.5]), np.array([1.5, 4.5]))


def test_simplify_straightens_collinear_cells():
    grid = _grid_from_bool(np.zeros((6, 6), dtype=bool))
    cells = [(i, 0) for i in range(6)]
    path = simplify(cells, grid)
    assert len(path.waypoints) == 2
    assert np.allclose(path.waypoints[0], [0.5, 0.5])
    assert np.allclose(path.waypoints[-1], [5.5, 0.5])
    # an L-shaped corridor keeps at least one corner
    blocked = np.ones((5, 5), dtype=bool)
    blocked[0, :] = False
    blocked[:, 4] = False
    cells = [(i, 0) for i in range(5)] + [(4, j) for j in range(1, 5)]
    path = simplify(cells, blocked_grid := _grid_from_bool(blocked))
    assert len(path.waypoints) >= 3
    for a, b in zip(path.waypoints, path.waypoints[1:]):
        assert line_of_sight(blocked_grid, a, b)


def _wall_scene(gap=None):
    boxes = []
    if gap is None:
        boxes.append(Box(np.array([0.0, 0.5, 0.0]), np.array([0.2, 0.5, 3.0])))
    else:
        boxes.append(Box(np.array([0.0, 0.5, -1.8]), np.array([0.2, 0.5, 1.2])))
        boxes.append(Box(np.array([0.0, 0.5, 1.8]), np.array([0.2, 0.5, 1.2])))
    wall = SceneObject(id="wall", category="wall", boxes=boxes)
    return Scene([wall], bounds_min=np.array([-3.0, -3.0]), bounds_max=np.array([3.0, 3.0]))


def test_plan_path_routes_through_gap():
    scene = _wall_scene(gap=0.9)
    start, goal = np.array([-2.5, 0.0]), np.array([2.5, 0.0])
    path = plan_path(scene, start, goal, radius=0.2, cell=0.2)
    assert np.linalg.norm(path.waypoints[0] - start) < 0.3
    assert np.linalg.norm(path.waypoints[-1] - goal) < 0.3
    # the only opening is near z=0.6 between the wall halves; crossing x=0
    # must happen inside it
    for a, b in zip(path.waypoints, path.waypoints[1:]):
        if (a[0] < 0) != (b[0] < 0):
            t = -a[0] / (b[0] - a[0])
            z = a[1] + t * (b[1] - a[1])
            assert -0.7 < z < 0.7
    # length is at least the straight-line distance
    assert path.length >= np.linalg.norm(goal - start) - 1e-9


def test_plan_path_unreachable_behind_solid_wall():
    scene = _wall_scene(gap=None)
    with pytest.raises(Unreachable):
        plan_path(scene, np.array([-2.5, 0.0]), np.array([2.5, 0.0]), radius=0.2, cell=0.2)


def test_build_nav_grid_inflates_by_radius():
    scene = _wall_scene(gap=0.9)
    tight = build_nav_grid(scene, radius=0.05, cell=0.2)
    fat = build_nav_grid(scene, radius=0.5, cell=0.2)
    assert fat.blocked.sum() > tight.blocked.sum()


def test_next_subgoal_consumption_rule():
    wps = [np.array([0.0, 0.0]), np.array([2.0, 0.0]), np.array([2.0, 2.0])]
    path = NavPath(waypoints=wps)
    goal = Goal(np.array([2.0, 0.4, 2.0]), np.array([0.0, 0.0, 1.0]), "sit")

    # far from the first waypoint: walk toward it
    cursor, sub, act = next_subgoal(path, np.array([-1.0, 0.0]), goal, 0)
    assert cursor == 0 and act == "walk"
    assert np.allclose(sub.position[[0, 2]], wps[0])

    # inside the consumption radius the cursor advances
    cursor, sub, act = next_subgoal(path, wps[0] + [WAYPOINT_RADIUS - 0.01, 0.0], goal, 0)
    assert cursor == 1 and act == "walk"
    assert np.allclose(sub.position[[0, 2]], wps[1])
    # direction of the incoming segment
    assert np.allclose(sub.direction[[0, 2]], [1.0, 0.0])

    # just outside the radius nothing is consumed
    cursor, _, _ = next_subgoal(path, wps[0] + [WAYPOINT_RADIUS + 0.01, 0.0], goal, 0)
    assert cursor == 0

    # the last waypoint hands out the true goal
    cursor, sub, act = next_subgoal(path, wps[1] + [0.1, 0.0], goal, 1)
    assert cursor == 2 and act == "sit"
    assert sub is goal

    # clustered waypoints are consumed in one call
    tight = NavPath(waypoints=[np.array([0.0, 0.0]), np.array([0.2, 0.0]),
                               np.array([2.0, 0.0])])
    cursor, sub, act = next_subgoal(tight, np.array([0.05, 0.0]), goal, 0)
    assert cursor == 2 and sub is goal


def test_next_subgoal_single_point_path():
    path = NavPath(waypoints=[np.array([1.0, 1.0])])
    goal = Goal(np.array([1.0, 0.0, 1.0]), np.array([0.0, 0.0, 1.0]), "sit")
    cursor, sub, act = next_subgoal(path, np.array([5.0, 5.0]), goal, 0)
    assert cursor == 0 and sub is goal and act == "sit"
    with pytest.raises(ValueError):
        next_subgoal(NavPath(waypoints=[]), np.zeros(2), goal, 0)
