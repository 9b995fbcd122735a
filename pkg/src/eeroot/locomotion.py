"""Grid-map hybrid A* with humanoid primitives, plus a carrot-pose tracker.

Search runs over continuous (x, y, yaw) poses keyed to (cell, heading-bin)
nodes. Primitives are fixed-length arcs (forward and reverse, reverse costed
double) and in-place rotation steps. The heuristic combines an 8-connected
Dijkstra distance field to the goal cell with the arc length needed to turn
through the remaining heading error; cells the field cannot reach are pruned,
which keeps infeasible queries fast.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import binary_dilation

from .config import PlannerParams
from .geometry import RootPose, wrap_yaw
from .world import Scene


class NoPath(RuntimeError):
    pass


class StartBlocked(RuntimeError):
    pass


def _disc_structure(radius: float, resolution: float) -> np.ndarray:
    k = int(math.ceil(radius / resolution))
    ax = np.arange(-k, k + 1) * resolution
    dx, dy = np.meshgrid(ax, ax, indexing="ij")
    return dx * dx + dy * dy <= radius * radius + 1e-12


@dataclass(eq=False)
class GridMap:
    """Occupancy grid over the room. Index [ix, iy]; origin at the lower-left
    corner. ``inflated`` is the Minkowski sum of obstacles (and the region
    outside the map) with the robot footprint disc."""

    resolution: float
    origin: np.ndarray
    occupancy: np.ndarray
    inflation_radius: float
    inflated: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.origin = np.asarray(self.origin, dtype=float).reshape(2)
        self.occupancy = np.asarray(self.occupancy, dtype=bool)
        if self.inflation_radius > 0:
            pad = int(math.ceil(self.inflation_radius / self.resolution))
            padded = np.pad(self.occupancy, pad, constant_values=True)
            padded = binary_dilation(padded, structure=_disc_structure(self.inflation_radius, self.resolution))
            self.inflated = padded[pad:-pad, pad:-pad]
        else:
            self.inflated = self.occupancy.copy()

    @property
    def shape(self) -> tuple[int, int]:
        return self.occupancy.shape

    def cell_of(self, xy) -> tuple[int, int]:
        c = np.floor((np.asarray(xy, dtype=float) - self.origin) / self.resolution).astype(int)
        return int(c[0]), int(c[1])

    def cell_center(self, ix: int, iy: int) -> np.ndarray:
        return self.origin + (np.array([ix, iy]) + 0.5) * self.resolution

    def free_world(self, x: float, y: float) -> bool:
        ix, iy = self.cell_of((x, y))
        nx, ny = self.shape
        if not (0 <= ix < nx and 0 <= iy < ny):
            return False
        return not self.inflated[ix, iy]

    @classmethod
    def from_scene(cls, scene: Scene, params: PlannerParams | None = None) -> "GridMap":
        """Rasterize furniture footprints inside the room bounds. Movable
        boxes are not ground obstacles at desk scale."""
        params = params or PlannerParams()
        xmin, xmax, ymin, ymax = scene.bounds
        res = params.resolution
        nx = int(round((xmax - xmin) / res))
        ny = int(round((ymax - ymin) / res))
        occ = np.zeros((nx, ny), dtype=bool)
        for f in scene.furniture:
            lo = np.floor((f.center - f.half - (xmin, ymin)) / res).astype(int)
            hi = np.ceil((f.center + f.half - (xmin, ymin)) / res).astype(int)
            occ[max(lo[0], 0) : hi[0], max(lo[1], 0) : hi[1]] = True
        return cls(res, np.array([xmin, ymin]), occ, params.footprint_radius)

    @classmethod
    def from_ascii(cls, text: str, resolution: float = 0.05, inflation_radius: float = 0.35) -> "GridMap":
        """'#' occupied, '.' free; the first text row is the top of the map.
        An optional leading 'resolution: R' / 'inflation: R' header overrides
        the defaults."""
        rows = []
        for line in text.splitlines():
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("resolution:"):
                resolution = float(stripped.split(":", 1)[1])
                continue
            if stripped.startswith("inflation:"):
                inflation_radius = float(stripped.split(":", 1)[1])
                continue
            rows.append(stripped)
        ny = len(rows)
        nx = max(len(r) for r in rows)
        occ = np.zeros((nx, ny), dtype=bool)
        for j, row in enumerate(reversed(rows)):
            for i, ch in enumerate(row):
                occ[i, j] = ch == "#"
        return cls(resolution, np.zeros(2), occ, inflation_radius)

    def to_ascii(self) -> str:
        nx, ny = self.shape
        lines = []
        for j in reversed(range(ny)):
            lines.append("".join("#" if self.occupancy[i, j] else "." for i in range(nx)))
        return "\n".join(lines)


@dataclass(frozen=True)
class Waypoint:
    x: float
    y: float
    yaw: float
    direction: str  # forward | reverse | turn

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.yaw)


@dataclass(eq=False)
class PlannedPath:
    waypoints: list[Waypoint]
    samples: np.ndarray          # (N, 3) dense poses, ~1 cm spacing
    arc: np.ndarray              # (N,) cumulative arc length (turns add zero)
    goal: tuple[float, float, float]
    cost: float

    @property
    def length(self) -> float:
        return float(self.arc[-1]) if len(self.arc) else 0.0

    def pose_at(self, s: float) -> tuple[float, float, float]:
        arc = self.arc
        if s <= arc[0]:
            idx = 0
        elif s >= arc[-1]:
            return tuple(self.samples[-1])
        else:
            idx = int(np.searchsorted(arc, s, side="right")) - 1
        x, y, yaw = self.samples[idx]
        if idx + 1 < len(arc) and arc[idx + 1] > arc[idx]:
            frac = (s - arc[idx]) / (arc[idx + 1] - arc[idx])
            if frac > 0.0:
                x2, y2, yaw2 = self.samples[idx + 1]
                x += frac * (x2 - x)
                y += frac * (y2 - y)
                yaw = wrap_yaw(yaw + frac * wrap_yaw(yaw2 - yaw))
        return (float(x), float(y), float(yaw))

    def waypoints_json(self) -> str:
        return json.dumps(
            {
                "cost": round(self.cost, 9),
                "waypoints": [
                    {"x": round(w.x, 9), "y": round(w.y, 9), "yaw": round(w.yaw, 9), "direction": w.direction}
                    for w in self.waypoints
                ],
            },
            indent=2,
        )


class _Primitives:
    """Precomputed local-frame samples and endpoints for the arc primitives."""

    def __init__(self, params: PlannerParams):
        ds = params.collision_sample_step
        n = max(int(round(params.arc_length / ds)), 1)
        kinds, ends, costs, samples = [], [], [], []
        for kappa in params.curvatures:
            for direction in (1.0, -1.0):
                ls = np.arange(1, n + 1) * ds * direction
                if kappa == 0.0:
                    xs, ys = ls, np.zeros_like(ls)
                else:
                    xs = np.sin(kappa * ls) / kappa
                    ys = (1.0 - np.cos(kappa * ls)) / kappa
                samples.append(np.stack([xs, ys], axis=1))
                dyaw = kappa * params.arc_length * direction
                ends.append((xs[-1], ys[-1], dyaw))
                costs.append(params.arc_length * (1.0 if direction > 0 else params.reverse_cost_factor))
                kinds.append("forward" if direction > 0 else "reverse")
        self.samples = np.stack(samples)           # (P, S, 2)
        self.ends = np.array(ends)                 # (P, 3)
        self.costs = np.array(costs)
        self.kinds = kinds
        self.n_samples = n


def _distance_field(grid: GridMap, goal_cell: tuple[int, int]) -> np.ndarray:
    """8-connected Dijkstra distance (meters) to the goal cell on the inflated grid."""
    nx, ny = grid.shape
    dist = np.full((nx, ny), np.inf)
    gx, gy = goal_cell
    if not (0 <= gx < nx and 0 <= gy < ny) or grid.inflated[gx, gy]:
        return dist
    res = grid.resolution
    diag = res * math.sqrt(2.0)
    dist[gx, gy] = 0.0
    pq = [(0.0, gx, gy)]
    inflated = grid.inflated
    while pq:
        d, ix, iy = heapq.heappop(pq)
        if d > dist[ix, iy]:
            continue
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)):
            jx, jy = ix + dx, iy + dy
            if 0 <= jx < nx and 0 <= jy < ny and not inflated[jx, jy]:
                nd = d + (diag if dx and dy else res)
                if nd < dist[jx, jy]:
                    dist[jx, jy] = nd
                    heapq.heappush(pq, (nd, jx, jy))
    return dist


def plan(grid: GridMap, start, goal, params: PlannerParams | None = None) -> PlannedPath:
    """Hybrid A* from start (x, y, yaw) to goal (x, y, yaw).

    Raises StartBlocked when the start cell is occupied on the inflated map
    and NoPath when the goal is unreachable.
    """
    params = params or PlannerParams()
    sx, sy, syaw = float(start[0]), float(start[1]), wrap_yaw(float(start[2]))
    gx, gy, gyaw = float(goal[0]), float(goal[1]), wrap_yaw(float(goal[2]))

    if not grid.free_world(sx, sy):
        raise StartBlocked(f"start cell at ({sx:.2f}, {sy:.2f}) is not traversable")

    pos_ok = math.hypot(gx - sx, gy - sy) <= params.goal_position_tolerance
    if pos_ok and abs(wrap_yaw(gyaw - syaw)) <= params.goal_yaw_tolerance:
        wp = Waypoint(sx, sy, syaw, "forward")
        return PlannedPath([wp], np.array([[sx, sy, syaw]]), np.zeros(1), (gx, gy, gyaw), 0.0)

    field_ = _distance_field(grid, grid.cell_of((gx, gy)))
    start_cell = grid.cell_of((sx, sy))
    if not np.isfinite(field_[start_cell]):
        raise NoPath("goal cell is not reachable on the inflated grid")

    prims = _Primitives(params)
    bin_size = 2.0 * math.pi / params.heading_bins
    max_curv = max(abs(c) for c in params.curvatures if c) or 1.0
    nx, ny = grid.shape
    inflated = grid.inflated
    origin = grid.origin
    res = grid.resolution

    def key_of(x: float, y: float, yaw: float) -> tuple[int, int, int]:
        ix = int((x - origin[0]) // res)
        iy = int((y - origin[1]) // res)
        ib = int(round(yaw / bin_size)) % params.heading_bins
        return ix, iy, ib

    def heuristic(x: float, y: float, yaw: float) -> float:
        ix = min(max(int((x - origin[0]) // res), 0), nx - 1)
        iy = min(max(int((y - origin[1]) // res), 0), ny - 1)
        d = field_[ix, iy]
        return max(float(d), abs(wrap_yaw(gyaw - yaw)) / max_curv)

    start_key = key_of(sx, sy, syaw)
    # nodes: key -> (g, x, y, yaw, parent_key, move); move = ("arc", prim) | ("turn", dyaw)
    nodes: dict = {start_key: (0.0, sx, sy, syaw, None, None)}
    counter = 0
    h0 = heuristic(sx, sy, syaw)
    if not math.isfinite(h0):
        raise NoPath("goal cell is not reachable on the inflated grid")
    open_heap = [(h0, counter, start_key)]
    closed: set = set()

    goal_key = None
    while open_heap:
        _, _, key = heapq.heappop(open_heap)
        if key in closed:
            continue
        closed.add(key)
        g, x, y, yaw, _, _ = nodes[key]
        if (
            math.hypot(gx - x, gy - y) <= params.goal_position_tolerance
            and abs(wrap_yaw(gyaw - yaw)) <= params.goal_yaw_tolerance
        ):
            goal_key = key
            break

        c, s = math.cos(yaw), math.sin(yaw)
        rot = np.array([[c, -s], [s, c]])
        pts = prims.samples @ rot.T
        pts[:, :, 0] += x
        pts[:, :, 1] += y
        cells = np.floor((pts - origin) / res).astype(int)
        in_bounds = (
            (cells[:, :, 0] >= 0) & (cells[:, :, 0] < nx) & (cells[:, :, 1] >= 0) & (cells[:, :, 1] < ny)
        )
        cx = np.clip(cells[:, :, 0], 0, nx - 1)
        cy = np.clip(cells[:, :, 1], 0, ny - 1)
        blocked = inflated[cx, cy] | ~in_bounds
        prim_ok = ~blocked.any(axis=1)

        for p in np.flatnonzero(prim_ok):
            ex, ey, dyaw = prims.ends[p]
            n_x = x + rot[0, 0] * ex + rot[0, 1] * ey
            n_y = y + rot[1, 0] * ex + rot[1, 1] * ey
            n_yaw = wrap_yaw(yaw + dyaw)
            n_g = g + prims.costs[p]
            n_key = key_of(n_x, n_y, n_yaw)
            existing = nodes.get(n_key)
            if existing is not None and existing[0] <= n_g:
                continue
            h = heuristic(n_x, n_y, n_yaw)
            if not math.isfinite(h):
                continue
            closed.discard(n_key)
            nodes[n_key] = (n_g, n_x, n_y, n_yaw, key, ("arc", int(p)))
            counter += 1
            heapq.heappush(open_heap, (n_g + h, counter, n_key))

        for dyaw in (params.rotation_step, -params.rotation_step):
            n_yaw = wrap_yaw(yaw + dyaw)
            n_g = g + params.rotation_cost
            n_key = key_of(x, y, n_yaw)
            existing = nodes.get(n_key)
            if existing is not None and existing[0] <= n_g:
                continue
            closed.discard(n_key)
            nodes[n_key] = (n_g, x, y, n_yaw, key, ("turn", dyaw))
            counter += 1
            heapq.heappush(open_heap, (n_g + heuristic(x, y, n_yaw), counter, n_key))

    if goal_key is None:
        raise NoPath("open set exhausted without reaching the goal")

    # walk parents back to the start
    chain = []
    key = goal_key
    while key is not None:
        g, x, y, yaw, parent, move = nodes[key]
        chain.append((x, y, yaw, move))
        key = parent
    chain.reverse()

    waypoints = []
    sample_rows = [np.array([chain[0][:3]])]
    arc_steps = [np.zeros(1)]
    ds = params.collision_sample_step
    first_kind = "forward"
    for i, (x, y, yaw, move) in enumerate(chain):
        if move is None:
            continue
        px, py, pyaw, _ = chain[i - 1]
        if move[0] == "turn":
            kind = "turn"
            rows = np.array([[x, y, yaw]])
            steps = np.zeros(1)
        else:
            p = move[1]
            kind = prims.kinds[p]
            c0, s0 = math.cos(pyaw), math.sin(pyaw)
            rot = np.array([[c0, -s0], [s0, c0]])
            pts = prims.samples[p] @ rot.T + (px, py)
            yaws = wrap_yaw_array(pyaw + prims.ends[p][2] * np.arange(1, prims.n_samples + 1) / prims.n_samples)
            rows = np.column_stack([pts, yaws])
            steps = np.full(len(rows), ds)
        if i == 1:
            first_kind = kind
        waypoints.append(Waypoint(x, y, yaw, kind))
        sample_rows.append(rows)
        arc_steps.append(steps)

    waypoints.insert(0, Waypoint(chain[0][0], chain[0][1], chain[0][2], first_kind))
    samples = np.vstack(sample_rows)
    arc = np.cumsum(np.concatenate(arc_steps))
    arc -= arc[0]
    total_cost = nodes[goal_key][0]
    return PlannedPath(waypoints, samples, arc, (gx, gy, gyaw), float(total_cost))


def wrap_yaw_array(values: np.ndarray) -> np.ndarray:
    out = np.asarray(values, dtype=float).copy()
    mask = (out <= -math.pi) | (out > math.pi)
    out[mask] = np.pi - (np.pi - out[mask]) % (2.0 * math.pi)
    return out


def track(
    path: PlannedPath,
    root: RootPose,
    lookahead: float = 0.4,
    params: PlannerParams | None = None,
) -> tuple[RootPose, bool]:
    """Carrot-pose tracking: return the root target at the lookahead arc
    distance past the closest point on the path. At the goal (within planner
    tolerances) the exact goal pose is returned with the completion flag set.
    EE targets are never touched here; callers keep their held hand state.
    """
    params = params or PlannerParams()
    gx, gy, gyaw = path.goal
    if (
        math.hypot(gx - root.x, gy - root.y) <= params.goal_position_tolerance
        and abs(wrap_yaw(gyaw - root.yaw)) <= params.goal_yaw_tolerance
    ):
        return RootPose(gx, gy, root.z, gyaw), True

    d = np.hypot(path.samples[:, 0] - root.x, path.samples[:, 1] - root.y)
    idx = int(np.argmin(d))
    target_s = float(path.arc[idx]) + lookahead
    if target_s >= path.length:
        return RootPose(gx, gy, root.z, gyaw), False
    cx, cy, cyaw = path.pose_at(target_s)
    return RootPose(cx, cy, root.z, cyaw), False
