"""Room-scale quasi-static world: furniture, movable boxes, contacts, grasping.

Object physics is rule-based: boxes rest on support surfaces, rigidly follow
the EE midpoint while carried, snap onto surfaces on release, and drop when
the squeeze separation drifts outside the slack band. Contact forces are
linear springs on point penetration (|f| = k_s * depth exactly).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import Config
from .controller import ControllerState
from .geometry import RootPose, wrap_yaw
from .impedance import Aabb, ExternalForce, HalfSpace

FLOOR = "floor"


class GraspFailed(RuntimeError):
    def __init__(self, distance_left: float, distance_right: float):
        super().__init__(
            f"end-effectors out of grasp tolerance (left {distance_left:.3f} m, right {distance_right:.3f} m)"
        )
        self.distance_left = distance_left
        self.distance_right = distance_right


class NotCarried(RuntimeError):
    pass


@dataclass
class Furniture:
    name: str
    center: np.ndarray        # (2,) world xy
    extent: np.ndarray        # (2,) full footprint sizes
    height: float             # support surface z

    def __post_init__(self) -> None:
        self.center = np.asarray(self.center, dtype=float).reshape(2)
        self.extent = np.asarray(self.extent, dtype=float).reshape(2)

    @property
    def half(self) -> np.ndarray:
        return self.extent / 2.0

    def footprint_contains(self, xy) -> bool:
        return bool(np.all(np.abs(np.asarray(xy)[:2] - self.center) <= self.half))

    def solid(self) -> Aabb:
        return Aabb(
            center=np.array([self.center[0], self.center[1], self.height / 2.0]),
            half_extent=np.array([self.half[0], self.half[1], self.height / 2.0]),
            name=self.name,
        )


@dataclass
class BoxObject:
    object_id: str
    extent: np.ndarray = field(default_factory=lambda: np.array([0.25, 0.25, 0.25]))
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))  # center, world
    yaw: float = 0.0
    status: str = "resting"   # resting | carried | fallen
    support: str | None = FLOOR
    # carry bookkeeping (set on grasp)
    carry_offset: np.ndarray | None = None
    carry_yaw_offset: float = 0.0
    grasp_width: float = 0.0

    def __post_init__(self) -> None:
        self.extent = np.asarray(self.extent, dtype=float).reshape(3)
        self.position = np.asarray(self.position, dtype=float).reshape(3)

    @property
    def bottom(self) -> float:
        return float(self.position[2] - self.extent[2] / 2.0)

    def solid(self) -> Aabb:
        return Aabb(self.position.copy(), self.extent / 2.0, name=self.object_id)


@dataclass
class SceneEvent:
    tick: int
    kind: str                 # grasp | place | drop_release | drop_carry
    object_id: str
    detail: str = ""


@dataclass
class Scene:
    bounds: tuple[float, float, float, float] = (-3.0, 3.0, -3.0, 3.0)  # xmin xmax ymin ymax
    furniture: list[Furniture] = field(default_factory=list)
    boxes: list[BoxObject] = field(default_factory=list)
    tick: int = 0
    events: list[SceneEvent] = field(default_factory=list)
    _carry_slack_elapsed: float = 0.0

    def furniture_by_name(self, name: str) -> Furniture | None:
        for f in self.furniture:
            if f.name == name:
                return f
        return None

    def box_by_id(self, object_id: str) -> BoxObject | None:
        for b in self.boxes:
            if b.object_id == object_id:
                return b
        return None

    def carried_box(self) -> BoxObject | None:
        for b in self.boxes:
            if b.status == "carried":
                return b
        return None

    def walls(self) -> list[HalfSpace]:
        xmin, xmax, ymin, ymax = self.bounds
        return [
            HalfSpace((xmin, 0, 0), (1, 0, 0), name="wall_xmin"),
            HalfSpace((xmax, 0, 0), (-1, 0, 0), name="wall_xmax"),
            HalfSpace((0, ymin, 0), (0, 1, 0), name="wall_ymin"),
            HalfSpace((0, ymax, 0), (0, -1, 0), name="wall_ymax"),
        ]

    def support_surfaces(self) -> list[tuple[str, float]]:
        """(name, height) pairs, floor last."""
        return [(f.name, f.height) for f in self.furniture] + [(FLOOR, 0.0)]

    def to_dict(self) -> dict:
        return {
            "bounds": list(self.bounds),
            "furniture": [
                {"name": f.name, "center": f.center.tolist(), "extent": f.extent.tolist(), "height": f.height}
                for f in self.furniture
            ],
            "boxes": [
                {
                    "id": b.object_id,
                    "extent": b.extent.tolist(),
                    "position": b.position.tolist(),
                    "yaw": b.yaw,
                    "status": b.status,
                    "support": b.support,
                }
                for b in self.boxes
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scene":
        scene = cls(bounds=tuple(data.get("bounds", (-3.0, 3.0, -3.0, 3.0))))
        for f in data.get("furniture", []):
            scene.furniture.append(Furniture(f["name"], f["center"], f["extent"], f["height"]))
        for b in data.get("boxes", []):
            scene.boxes.append(
                BoxObject(
                    b["id"],
                    extent=np.asarray(b.get("extent", [0.25, 0.25, 0.25])),
                    position=np.asarray(b["position"]),
                    yaw=b.get("yaw", 0.0),
                    status=b.get("status", "resting"),
                    support=b.get("support", FLOOR),
                )
            )
        return scene


def _midpoint_frame(state: ControllerState, cfg: Config) -> tuple[np.ndarray, float]:
    left, right = state.ee_world(cfg)
    mid = (left.position + right.position) / 2.0
    return mid, state.root.yaw


def contact_forces(scene: Scene, state: ControllerState, cfg: Config) -> tuple[ExternalForce, ExternalForce]:
    """Spring forces on each EE from walls, furniture, and boxes (sum of contacts)."""
    left, right = state.ee_world(cfg)
    k_s = cfg.contact_stiffness
    out = []
    surfaces = scene.walls() + [f.solid() for f in scene.furniture] + [b.solid() for b in scene.boxes]
    for ee in (left.position, right.position):
        total = np.zeros(3)
        deepest = 0.0
        source = None
        for surf in surfaces:
            depth, normal = surf.penetration(ee)
            if depth > 0.0:
                total += k_s * depth * normal
                if depth > deepest:
                    deepest, source = depth, surf.name
        out.append(ExternalForce(total, source=source))
    return out[0], out[1]


def _drop_to_floor(box: BoxObject) -> None:
    box.position = np.array([box.position[0], box.position[1], box.extent[2] / 2.0])
    box.status = "fallen"
    box.support = FLOOR
    box.carry_offset = None


def tick(scene: Scene, state: ControllerState, cfg: Config) -> tuple[ExternalForce, ExternalForce]:
    """Advance the world one control timestep: update the carried object,
    apply the carry-stability rule, and return the contact forces for this tick."""
    carried = scene.carried_box()
    if carried is not None:
        mid, yaw = _midpoint_frame(state, cfg)
        c, s = math.cos(yaw), math.sin(yaw)
        off = carried.carry_offset if carried.carry_offset is not None else np.zeros(3)
        carried.position = mid + np.array([c * off[0] - s * off[1], s * off[0] + c * off[1], off[2]])
        carried.yaw = wrap_yaw(yaw + carried.carry_yaw_offset)

        status = carry_stability(scene, state, cfg)
        if status == "dropped":
            scene.events.append(SceneEvent(scene.tick, "drop_carry", carried.object_id, "separation slack exceeded"))
            _drop_to_floor(carried)

    forces = contact_forces(scene, state, cfg)
    scene.tick += 1
    return forces


def carry_stability(scene: Scene, state: ControllerState, cfg: Config) -> str:
    """'stable' while the EE separation stays within the slack band around the
    grasp separation; 'dropped' once violated longer than carry_slack_time."""
    box = scene.carried_box()
    if box is None:
        return "stable"
    left, right = state.ee_world(cfg)
    separation = float(np.linalg.norm(left.position - right.position))
    target = box.grasp_width - 2.0 * cfg.hands.squeeze_margin
    if abs(separation - target) > cfg.carry_slack:
        scene._carry_slack_elapsed += cfg.timestep
    else:
        scene._carry_slack_elapsed = 0.0
    if scene._carry_slack_elapsed > cfg.carry_slack_time:
        scene._carry_slack_elapsed = 0.0
        return "dropped"
    return "stable"


def grasp_face_centers(box: BoxObject, root: RootPose) -> tuple[np.ndarray, np.ndarray, float]:
    """Left/right lateral face centers as seen from the robot, plus the box
    width along the robot's lateral axis."""
    c, s = math.cos(root.yaw), math.sin(root.yaw)
    lateral = np.array([-s, c, 0.0])  # root-frame +y in world
    half = box.extent / 2.0
    width = 2.0 * abs(lateral[0]) * half[0] + 2.0 * abs(lateral[1]) * half[1]
    center = box.position
    left_face = center + lateral * (width / 2.0)
    right_face = center - lateral * (width / 2.0)
    return left_face, right_face, width


def try_grasp(scene: Scene, state: ControllerState, object_id: str, cfg: Config) -> BoxObject:
    """Attach the box if both EEs are within grasp tolerance of its lateral
    face centers (dual-arm squeeze). Raises GraspFailed / KeyError / ValueError."""
    box = scene.box_by_id(object_id)
    if box is None:
        raise KeyError(f"no object named {object_id!r}")
    if box.status == "carried":
        raise ValueError(f"{object_id} is already carried")
    left, right = state.ee_world(cfg)
    lf, rf, width = grasp_face_centers(box, state.root)
    d_left = float(np.linalg.norm(left.position - lf))
    d_right = float(np.linalg.norm(right.position - rf))
    if d_left > cfg.grasp_tolerance or d_right > cfg.grasp_tolerance:
        raise GraspFailed(d_left, d_right)

    mid, yaw = _midpoint_frame(state, cfg)
    c, s = math.cos(-yaw), math.sin(-yaw)
    rel = box.position - mid
    box.carry_offset = np.array([c * rel[0] - s * rel[1], s * rel[0] + c * rel[1], rel[2]])
    box.carry_yaw_offset = wrap_yaw(box.yaw - yaw)
    box.grasp_width = width
    box.status = "carried"
    box.support = None
    scene._carry_slack_elapsed = 0.0
    scene.events.append(SceneEvent(scene.tick, "grasp", object_id))
    return box


@dataclass(frozen=True)
class PlaceResult:
    placed: bool
    surface: str | None = None


def try_release(scene: Scene, state: ControllerState, object_id: str, cfg: Config) -> PlaceResult:
    """Release a carried box: snap onto a support surface when the bottom is
    within 0.10 m above it and the footprint contains the center; otherwise
    the box drops to the floor (a transport/manipulation failure)."""
    box = scene.box_by_id(object_id)
    if box is None:
        raise KeyError(f"no object named {object_id!r}")
    if box.status != "carried":
        raise NotCarried(f"{object_id} is not carried")

    xy = box.position[:2]
    candidates: list[tuple[float, str]] = []
    for f in scene.furniture:
        if f.footprint_contains(xy) and 0.0 <= box.bottom - f.height <= 0.10:
            candidates.append((f.height, f.name))
    if not candidates and 0.0 <= box.bottom <= 0.10:
        xmin, xmax, ymin, ymax = scene.bounds
        if xmin <= xy[0] <= xmax and ymin <= xy[1] <= ymax:
            candidates.append((0.0, FLOOR))

    box.carry_offset = None
    if candidates:
        height, name = max(candidates)
        box.position = np.array([xy[0], xy[1], height + box.extent[2] / 2.0])
        box.status = "resting"
        box.support = name
        scene.events.append(SceneEvent(scene.tick, "place", object_id, name))
        return PlaceResult(True, name)
    scene.events.append(SceneEvent(scene.tick, "drop_release", object_id))
    _drop_to_floor(box)
    return PlaceResult(False, None)


# --- scenario sampling -----------------------------------------------------

DEFAULT_FURNITURE = (
    ("bed", (0.0, 2.1), (2.0, 1.4)),
    ("sofa", (0.0, -2.2), (1.8, 0.8)),
    ("table", (2.0, 0.0), (1.2, 0.8)),
)
DEFAULT_BOX_SUPPORTS = (("box_1", "table"), ("box_2", "sofa"), ("box_3", "bed"))
BOX_EXTENT = (0.25, 0.25, 0.25)


@dataclass(frozen=True)
class ScenarioSpec:
    """Seeded environment randomization: furniture planar jitter +-0.5 m,
    heights uniform in [0.5, 0.7] m, box jitter +-0.25 m, robot at the room
    center."""

    seed: int = 0
    room: tuple[float, float] = (6.0, 6.0)
    furniture: tuple = DEFAULT_FURNITURE
    box_supports: tuple = DEFAULT_BOX_SUPPORTS
    furniture_jitter: float = 0.5
    height_range: tuple[float, float] = (0.5, 0.7)
    box_jitter: float = 0.25

    def bounds(self) -> tuple[float, float, float, float]:
        return (-self.room[0] / 2, self.room[0] / 2, -self.room[1] / 2, self.room[1] / 2)

    def sample(self) -> Scene:
        rng = np.random.default_rng(self.seed)
        xmin, xmax, ymin, ymax = self.bounds()
        for _ in range(200):
            pieces = []
            ok = True
            for name, center, extent in self.furniture:
                jitter = rng.uniform(-self.furniture_jitter, self.furniture_jitter, size=2)
                height = float(rng.uniform(*self.height_range))
                c = np.asarray(center) + jitter
                half = np.asarray(extent) / 2.0
                c[0] = float(np.clip(c[0], xmin + half[0] + 0.05, xmax - half[0] - 0.05))
                c[1] = float(np.clip(c[1], ymin + half[1] + 0.05, ymax - half[1] - 0.05))
                pieces.append(Furniture(name, c, np.asarray(extent), height))
            # furniture pieces must not overlap (small gap) and must leave the
            # room-center start position free for the robot footprint
            for i in range(len(pieces)):
                for j in range(i + 1, len(pieces)):
                    gap = np.abs(pieces[i].center - pieces[j].center) - (pieces[i].half + pieces[j].half)
                    if gap.max() < 0.30:
                        ok = False
                if np.all(np.abs(pieces[i].center) - pieces[i].half < 0.45):
                    ok = False  # start pose blocked
            if ok:
                break
        else:
            raise RuntimeError(f"could not sample a collision-free scene for seed {self.seed}")

        scene = Scene(bounds=self.bounds(), furniture=pieces)
        for object_id, support in self.box_supports:
            f = scene.furniture_by_name(support)
            extent = np.asarray(BOX_EXTENT)
            if f is None:
                xy = rng.uniform([xmin + 0.5, ymin + 0.5], [xmax - 0.5, ymax - 0.5])
                z = extent[2] / 2.0
                support_name = FLOOR
            else:
                jitter = rng.uniform(-self.box_jitter, self.box_jitter, size=2)
                lo = f.center - f.half + extent[:2] / 2.0 + 0.01
                hi = f.center + f.half - extent[:2] / 2.0 - 0.01
                xy = np.clip(f.center + jitter, lo, hi)
                z = f.height + extent[2] / 2.0
                support_name = f.name
            scene.boxes.append(
                BoxObject(object_id, extent=extent, position=np.array([xy[0], xy[1], z]), support=support_name)
            )
        return scene

    def to_json(self) -> str:
        return json.dumps(
            {
                "seed": self.seed,
                "room": list(self.room),
                "furniture": [[n, list(c), list(e)] for n, c, e in self.furniture],
                "box_supports": [list(pair) for pair in self.box_supports],
                "furniture_jitter": self.furniture_jitter,
                "height_range": list(self.height_range),
                "box_jitter": self.box_jitter,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "ScenarioSpec":
        data = json.loads(text)
        return cls(
            seed=data.get("seed", 0),
            room=tuple(data.get("room", (6.0, 6.0))),
            furniture=tuple((n, tuple(c), tuple(e)) for n, c, e in data.get("furniture", DEFAULT_FURNITURE)),
            box_supports=tuple(tuple(p) for p in data.get("box_supports", DEFAULT_BOX_SUPPORTS)),
            furniture_jitter=data.get("furniture_jitter", 0.5),
            height_range=tuple(data.get("height_range", (0.5, 0.7))),
            box_jitter=data.get("box_jitter", 0.25),
        )

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioSpec":
        return cls.from_json(Path(path).read_text())
