"""Occupancy-grid path planning: A*, string-pulling, and sub-goal handout.

The walkable area is a uniform grid of square cells; a cell is blocked when
any object footprint, inflated by the character radius, touches it. Paths
come back as a short list of mutually visible waypoints; the character works
through them as intermediate walk goals and performs the target action at
the last one.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .errors import BlockedStart, DegenerateScene, Unreachable
from .goals import Goal
from .voxel import Scene

SQRT2 = float(np.sqrt(2.0))
WAYPOINT_RADIUS = 0.4  # m, consumption distance for sub-goals


@dataclass
class NavGrid:
    cell: float
    origin: np.ndarray  # (2,) world x/z of the grid's low corner
    blocked: np.ndarray  # (nz, nx) bool
    radius: float

    @property
    def nx(self) -> int:
        return self.blocked.shape[1]

    @property
    def nz(self) -> int:
        return self.blocked.shape[0]

    def cell_center(self, c: tuple[int, int]) -> np.ndarray:
        ix, iz = c
        return self.origin + (np.array([ix, iz]) + 0.5) * self.cell

    def cell_of(self, p: np.ndarray) -> tuple[int, int]:
        q = (np.asarray(p, dtype=float) - self.origin) / self.cell
        ix = min(max(int(np.floor(q[0])), 0), self.nx - 1)
        iz = min(max(int(np.floor(q[1])), 0), self.nz - 1)
        return ix, iz

    def is_blocked(self, c: tuple[int, int]) -> bool:
        ix, iz = c
        if not (0 <= ix < self.nx and 0 <= iz < self.nz):
            return True
        return bool(self.blocked[iz, ix])

    def index(self, c: tuple[int, int]) -> int:
        return c[1] * self.nx + c[0]


@dataclass
class NavPath:
    waypoints: list[np.ndarray]  # 2D points

    @property
    def length(self) -> float:
        return float(sum(np.linalg.norm(b - a)
                         for a, b in zip(self.waypoints, self.waypoints[1:])))

    def to_dict(self) -> dict:
        return {"waypoints": [[float(w[0]), float(w[1])] for w in self.waypoints],
                "cost": self.length}


# ---------------------------------------------------------------------------
# footprint geometry (2D convex polygons on the ground plane)


def _seg_seg_dist(p1, p2, q1, q2) -> float:
    """Minimum distance between two 2D segments."""

    def pt_seg(p, a, b):
        ab = b - a
        denom = ab @ ab
        t = 0.0 if denom < 1e-18 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
        return float(np.linalg.norm(p - (a + t * ab)))

    d1, d2 = p2 - p1, q2 - q1
    cross = d1[0] * d2[1] - d1[1] * d2[0]
    if abs(cross) > 1e-18:
        r = q1 - p1
        t = (r[0] * d2[1] - r[1] * d2[0]) / cross
        u = (r[0] * d1[1] - r[1] * d1[0]) / cross
        if 0.0 <= t <= 1.0 and 0.0 <= u <= 1.0:
            return 0.0
    return min(pt_seg(p1, q1, q2), pt_seg(p2, q1, q2),
               pt_seg(q1, p1, p2), pt_seg(q2, p1, p2))


def _polys_intersect(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis test for convex polygons (n, 2)."""
    for poly1, poly2 in ((a, b), (b, a)):
        for i in range(len(poly1)):
            edge = poly1[(i + 1) % len(poly1)] - poly1[i]
            axis = np.array([-edge[1], edge[0]])
            pa = poly1 @ axis
            pb = poly2 @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


def poly_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Distance between convex polygons; 0 when they overlap."""
    if _polys_intersect(a, b):
        return 0.0
    best = np.inf
    for i in range(len(a)):
        for j in range(len(b)):
            best = min(best, _seg_seg_dist(a[i], a[(i + 1) % len(a)],
                                           b[j], b[(j + 1) % len(b)]))
    return best


def object_footprints(scene: Scene) -> list[np.ndarray]:
    """Ground-plane convex quads (4, 2) of every box of every object."""
    quads = []
    for obj in scene.objects:
        for box in obj.boxes:
            corners = obj.to_world(box.corners())
            planar = corners[:, [0, 2]]
            # box corners project to a parallelogram; take its hull order
            c = planar.mean(axis=0)
            ang = np.arctan2(planar[:, 1] - c[1], planar[:, 0] - c[0])
            hull = planar[np.argsort(ang)]
            # drop duplicate projected corners (top/bottom faces coincide)
            keep = [hull[0]]
            for p in hull[1:]:
                if np.linalg.norm(p - keep[-1]) > 1e-9:
                    keep.append(p)
            quads.append(np.array(keep))
    return quads


def build_nav_grid(scene: Scene, radius: float = 0.3, cell: float = 0.25,
                   margin: float = 1.0) -> NavGrid:
    """Rasterize inflated object footprints over the scene's walkable bounds."""
    quads = object_footprints(scene)
    if scene.bounds_min is not None:
        lo, hi = scene.bounds_min.copy(), scene.bounds_max.copy()
    elif quads:
        pts = np.concatenate(quads)
        lo = pts.min(axis=0) - margin - radius
        hi = pts.max(axis=0) + margin + radius
    else:
        raise DegenerateScene("scene has no objects and no explicit bounds")
    if np.any(hi - lo <= 0):
        raise DegenerateScene(f"walkable bounds are empty: {lo} .. {hi}")

    nx = max(1, int(np.ceil((hi[0] - lo[0]) / cell)))
    nz = max(1, int(np.ceil((hi[1] - lo[1]) / cell)))
    blocked = np.zeros((nz, nx), dtype=bool)
    for quad in quads:
        qlo = quad.min(axis=0) - radius - cell
        qhi = quad.max(axis=0) + radius + cell
        ix0 = max(0, int(np.floor((qlo[0] - lo[0]) / cell)))
        ix1 = min(nx - 1, int(np.ceil((qhi[0] - lo[0]) / cell)))
        iz0 = max(0, int(np.floor((qlo[1] - lo[1]) / cell)))
        iz1 = min(nz - 1, int(np.ceil((qhi[1] - lo[1]) / cell)))
        for iz in range(iz0, iz1 + 1):
            for ix in range(ix0, ix1 + 1):
                if blocked[iz, ix]:
                    continue
                c0 = lo + np.array([ix, iz]) * cell
                square = np.array([c0, c0 + [cell, 0], c0 + [cell, cell], c0 + [0, cell]])
                if poly_distance(square, quad) <= radius:
                    blocked[iz, ix] = True
    return NavGrid(cell=cell, origin=lo, blocked=blocked, radius=radius)


# ---------------------------------------------------------------------------
# search


def _neighbors(grid: NavGrid, c: tuple[int, int]):
    ix, iz = c
    for dx in (-1, 0, 1):
        for dz in (-1, 0, 1):
            if dx == 0 and dz == 0:
                continue
            n = (ix + dx, iz + dz)
            if grid.is_blocked(n):
                continue
            if dx != 0 and dz != 0:
                # no corner cutting: both orthogonal steps must be open
                if grid.is_blocked((ix + dx, iz)) or grid.is_blocked((ix, iz + dz)):
                    continue
            yield n, (SQRT2 if dx != 0 and dz != 0 else 1.0)


def octile(a: tuple[int, int], b: tuple[int, int]) -> float:
    dx, dz = abs(a[0] - b[0]), abs(a[1] - b[1])
    return max(dx, dz) + (SQRT2 - 1.0) * min(dx, dz)


def a_star(grid: NavGrid, start: tuple[int, int], goal: tuple[int, int]
           ) -> list[tuple[int, int]]:
    """Shortest 8-connected cell path; ties by smaller g then cell index."""
    start, goal = tuple(start), tuple(goal)
    if grid.is_blocked(start):
        raise BlockedStart(f"start cell {start} is blocked")
    if grid.is_blocked(goal):
        raise Unreachable(f"goal cell {goal} is blocked")
    g = {start: 0.0}
    parent: dict = {start: None}
    closed = set()
    open_heap = [(octile(start, goal), 0.0, grid.index(start), start)]
    while open_heap:
        f, gc, _, cur = heapq.heappop(open_heap)
        if cur in closed:
            continue
        closed.add(cur)
        if cur == goal:
            path = []
            while cur is not None:
                path.append(cur)
                cur = parent[cur]
            return path[::-1]
        for nb, cost in _neighbors(grid, cur):
            cand = g[cur] + cost
            if cand < g.get(nb, np.inf) - 1e-12:
                g[nb] = cand
                parent[nb] = cur
                heapq.heappush(open_heap, (cand + octile(nb, goal), cand, grid.index(nb), nb))
    raise Unreachable(f"no path from {start} to {goal}")


def raycast_cells(grid: NavGrid, p: np.ndarray, q: np.ndarray):
    """Every cell the segment p->q touches (supercover grid walk)."""
    u = (np.asarray(p, dtype=float) - grid.origin) / grid.cell
    v = (np.asarray(q, dtype=float) - grid.origin) / grid.cell
    ix, iz = int(np.floor(u[0])), int(np.floor(u[1]))
    jx, jz = int(np.floor(v[0])), int(np.floor(v[1]))
    yield (ix, iz)
    d = v - u
    sx = 1 if d[0] > 0 else -1
    sz = 1 if d[1] > 0 else -1
    tdx = np.inf if d[0] == 0 else abs(1.0 / d[0])
    tdz = np.inf if d[1] == 0 else abs(1.0 / d[1])
    # parametric distance to the first x/z gridline crossing
    if d[0] > 0:
        tmx = (np.floor(u[0]) + 1 - u[0]) * tdx
    elif d[0] < 0:
        tmx = (u[0] - np.floor(u[0])) * tdx
    else:
        tmx = np.inf
    if d[1] > 0:
        tmz = (np.floor(u[1]) + 1 - u[1]) * tdz
    elif d[1] < 0:
        tmz = (u[1] - np.floor(u[1])) * tdz
    else:
        tmz = np.inf
    guard = 4 * (abs(jx - ix) + abs(jz - iz) + 2)
    for _ in range(guard):
        if (ix, iz) == (jx, jz):
            return
        if min(tmx, tmz) > 1.0 + 1e-12:
            return  # remaining crossings lie beyond the segment end
        if abs(tmx - tmz) < 1e-12:
            # exact corner crossing: both side cells are touched
            yield (ix + sx, iz)
            yield (ix, iz + sz)
            ix += sx
            iz += sz
            tmx += tdx
            tmz += tdz
        elif tmx < tmz:
            ix += sx
            tmx += tdx
        else:
            iz += sz
            tmz += tdz
        yield (ix, iz)


def line_of_sight(grid: NavGrid, p: np.ndarray, q: np.ndarray) -> bool:
    return not any(grid.is_blocked(c) for c in raycast_cells(grid, p, q))


def simplify(cell_path: list[tuple[int, int]], grid: NavGrid) -> NavPath:
    """Greedy string pulling over the cell centers."""
    pts = [grid.cell_center(c) for c in cell_path]
    if len(pts) <= 2:
        return NavPath(waypoints=pts)
    out = [pts[0]]
    i = 0
    while i < len(pts) - 1:
        k = i + 1
        for j in range(len(pts) - 1, i, -1):
            if line_of_sight(grid, pts[i], pts[j]):
                k = j
                break
        out.append(pts[k])
        i = k
    return NavPath(waypoints=out)


def project_goal_cell(grid: NavGrid, p: np.ndarray) -> tuple[int, int]:
    """Nearest unblocked cell to a world point (goals often sit inside objects)."""
    c = grid.cell_of(p)
    if not grid.is_blocked(c):
        return c
    best, best_d = None, np.inf
    free = np.argwhere(~grid.blocked)
    if len(free) == 0:
        raise Unreachable("every cell in the grid is blocked")
    centers = grid.origin + (free[:, ::-1] + 0.5) * grid.cell
    d = np.linalg.norm(centers - np.asarray(p, dtype=float), axis=1)
    k = int(np.argmin(d))
    return int(free[k, 1]), int(free[k, 0])


def plan_path(scene: Scene, start: np.ndarray, goal_pos: np.ndarray,
              radius: float = 0.3, cell: float = 0.25,
              grid: NavGrid | None = None) -> NavPath:
    """Grid + A* + simplify, with the goal projected to standable ground."""
    if grid is None:
        grid = build_nav_grid(scene, radius=radius, cell=cell)
    start_cell = grid.cell_of(start)
    goal_cell = project_goal_cell(grid, np.asarray(goal_pos, dtype=float))
    cells = a_star(grid, start_cell, goal_cell)
    return simplify(cells, grid)


def next_subgoal(path: NavPath, root_pos: np.ndarray, active_goal: Goal,
                 cursor: int = 0) -> tuple[int, Goal, str]:
    """Advance the waypoint cursor and hand out the current sub-goal.

    Intermediate waypoints become walk goals facing along the incoming
    segment; the last waypoint yields the true interaction goal.
    """
    if not path.waypoints:
        raise ValueError("empty path")
    wps = path.waypoints
    last = len(wps) - 1
    root_pos = np.asarray(root_pos, dtype=float)
    while cursor < last and np.linalg.norm(root_pos - wps[cursor]) < WAYPOINT_RADIUS:
        cursor += 1
    if cursor >= last:
        return last, active_goal, active_goal.action
    w = wps[cursor]
    seg = w - (wps[cursor - 1] if cursor > 0 else root_pos)
    n = np.linalg.norm(seg)
    if n < 1e-9:
        seg, n = w - root_pos, np.linalg.norm(w - root_pos)
    d = seg / n if n > 1e-9 else np.array([0.0, 1.0])
    sub = Goal(np.array([w[0], 0.0, w[1]]), np.array([d[0], 0.0, d[1]]), "walk")
    return cursor, sub, "walk"
