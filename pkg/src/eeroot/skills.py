"""Mid-level skill layer: a typed registry of behaviors that all emit
EE-root command streams at the skill rate.

Skill handlers are generators: each ``yield`` hands the executor one
EeRootCommand to hold until the next skill tick; returning ends the skill
(Succeeded), raising SkillFailure ends it as Failed, and the executor aborts
on timeout. The same SkillRun driver serves the headless executor and the
served tick loop, so every skill's output is consumed by the unmodified
controller in both modes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import world
from .geometry import EeRootCommand, Pose3, RootPose, wrap_yaw
from .hands import HandState
from .locomotion import NoPath, StartBlocked, plan, track
from .session import Session, SkillRecord


class UnknownSkill(KeyError):
    pass


class ParamValidation(ValueError):
    pass


class SafetyViolation(RuntimeError):
    pass


class SkillFailure(RuntimeError):
    """Raised inside a skill handler to end the invocation as Failed."""


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str                  # "number" | "string" | "vector6"
    description: str
    required: bool = True
    minimum: float | None = None
    maximum: float | None = None
    enum: tuple[str, ...] | None = None


@dataclass(frozen=True)
class SkillSpec:
    name: str
    description: str
    params: tuple[ParamSpec, ...]
    requires_locomotion_safe: bool
    handler: object = field(compare=False)

    def json_schema(self) -> dict:
        props = {}
        required = []
        for p in self.params:
            if p.kind == "number":
                entry: dict = {"type": "number", "description": p.description}
                if p.minimum is not None:
                    entry["minimum"] = p.minimum
                if p.maximum is not None:
                    entry["maximum"] = p.maximum
            elif p.kind == "vector6":
                entry = {
                    "type": "array",
                    "items": {"type": "number"},
                    "minItems": 6,
                    "maxItems": 6,
                    "description": p.description,
                }
            else:
                entry = {"type": "string", "description": p.description}
                if p.enum:
                    entry["enum"] = list(p.enum)
            props[p.name] = entry
            if p.required:
                required.append(p.name)
        return {
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": {"type": "object", "properties": props, "required": required},
            },
        }


SKILLS: dict[str, SkillSpec] = {}


def register(spec: SkillSpec) -> SkillSpec:
    if spec.name in SKILLS:
        raise ValueError(f"duplicate skill name {spec.name!r}")
    SKILLS[spec.name] = spec
    return spec


def get_skill(name: str) -> SkillSpec:
    try:
        return SKILLS[name]
    except KeyError:
        raise UnknownSkill(f"unknown skill {name!r}") from None


def tool_schemas() -> list[dict]:
    return [spec.json_schema() for spec in SKILLS.values()]


def validate_params(spec: SkillSpec, params: dict) -> dict:
    if not isinstance(params, dict):
        raise ParamValidation(f"{spec.name}: parameters must be an object")
    known = {p.name for p in spec.params}
    unknown = set(params) - known
    if unknown:
        raise ParamValidation(f"{spec.name}: unknown parameters {sorted(unknown)}")
    out = {}
    for p in spec.params:
        if p.name not in params:
            if p.required:
                raise ParamValidation(f"{spec.name}: missing required parameter {p.name!r}")
            continue
        value = params[p.name]
        if p.kind == "number":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ParamValidation(f"{spec.name}: {p.name} must be a number")
            value = float(value)
            if p.minimum is not None and value < p.minimum:
                raise ParamValidation(f"{spec.name}: {p.name}={value} below minimum {p.minimum}")
            if p.maximum is not None and value > p.maximum:
                raise ParamValidation(f"{spec.name}: {p.name}={value} above maximum {p.maximum}")
        elif p.kind == "vector6":
            try:
                value = [float(v) for v in value]
            except (TypeError, ValueError):
                raise ParamValidation(f"{spec.name}: {p.name} must be a list of 6 numbers") from None
            if len(value) != 6:
                raise ParamValidation(f"{spec.name}: {p.name} must have exactly 6 numbers")
        else:
            if not isinstance(value, str):
                raise ParamValidation(f"{spec.name}: {p.name} must be a string")
            if p.enum and value not in p.enum:
                raise ParamValidation(f"{spec.name}: {p.name}={value!r} not in {list(p.enum)}")
        out[p.name] = value
    return out


@dataclass
class SkillOutcome:
    name: str
    status: str        # succeeded | failed | aborted
    detail: str
    duration_ticks: int
    observation: dict = field(default_factory=dict)

    @property
    def succeeded(self) -> bool:
        return self.status == "succeeded"


class SkillRun:
    """One skill invocation, advanced tick by tick by whoever owns the loop."""

    def __init__(self, session: Session, name: str, params: dict):
        spec = get_skill(name)
        self.params = validate_params(spec, params)
        if spec.requires_locomotion_safe and not session.hand_state.locomotion_safe:
            raise SafetyViolation(
                f"{name} requires a locomotion-safe hand state, current is {session.hand_state.label()}"
            )
        self.session = session
        self.spec = spec
        self.record = SkillRecord(name, dict(self.params), start_tick=session.tick)
        session.skill_log.append(self.record)
        self.gen = spec.handler(session, **self.params)
        self.period = 1.0 / session.cfg.skill_rate
        self.deadline = session.sim_time + session.cfg.skill_timeout
        self.next_cmd_time = session.sim_time
        self.cmd: EeRootCommand | None = None
        self.outcome: SkillOutcome | None = None

    def _finish(self, status: str, detail: str) -> None:
        self.record.status = status
        self.record.detail = detail
        self.record.end_tick = self.session.tick
        self.gen.close()
        self.outcome = SkillOutcome(
            self.spec.name,
            status,
            detail,
            duration_ticks=self.session.tick - self.record.start_tick,
            observation=_terminal_observation(self.session),
        )

    def command_for_tick(self) -> EeRootCommand | None:
        """Command to apply on the next control tick; None once finished."""
        if self.outcome is not None:
            return None
        if self.session.sim_time >= self.deadline:
            self._finish("aborted", "timeout")
            return None
        if self.session.sim_time + 1e-9 >= self.next_cmd_time:
            try:
                self.cmd = next(self.gen)
            except StopIteration as stop:
                self._finish("succeeded", str(stop.value) if stop.value else "")
                return None
            except SkillFailure as exc:
                self._finish("failed", str(exc))
                return None
            self.next_cmd_time += self.period
        return self.cmd


def invoke(session: Session, name: str, params: dict | None = None) -> SkillOutcome:
    """Run a skill to completion on the headless loop."""
    run = SkillRun(session, name, params or {})
    while run.outcome is None:
        cmd = run.command_for_tick()
        if run.outcome is not None:
            break
        session.step(cmd)
    return run.outcome


def _terminal_observation(session: Session) -> dict:
    left, right = session.ee_in_root()
    return {
        "root": [round(v, 4) for v in (session.state.root.x, session.state.root.y,
                                       session.state.root.z, session.state.root.yaw)],
        "ee_left": [round(v, 4) for v in left.position.tolist()],
        "ee_right": [round(v, 4) for v in right.position.tolist()],
        "hand_state": session.hand_state.label(),
        "carried": [b.object_id for b in session.scene.boxes if b.status == "carried"],
    }


# --- motion helpers ---------------------------------------------------------


def _cardinal_facing(from_xy, to_xy) -> tuple[np.ndarray, float]:
    """Unit direction (snapped to a world axis) from from_xy toward to_xy,
    and the yaw facing that way."""
    delta = np.asarray(to_xy, dtype=float) - np.asarray(from_xy, dtype=float)
    if abs(delta[0]) >= abs(delta[1]):
        direction = np.array([math.copysign(1.0, delta[0]) if delta[0] else 1.0, 0.0])
    else:
        direction = np.array([0.0, math.copysign(1.0, delta[1])])
    return direction, math.atan2(direction[1], direction[0])


def _lateral_width(box: world.BoxObject, yaw: float) -> float:
    lat = np.array([-math.sin(yaw), math.cos(yaw)])
    return 2.0 * (abs(lat[0]) * box.extent[0] / 2.0 + abs(lat[1]) * box.extent[1] / 2.0)


def _facing_depth(box: world.BoxObject, direction: np.ndarray) -> float:
    return abs(direction[0]) * box.extent[0] / 2.0 + abs(direction[1]) * box.extent[1] / 2.0


def _drive_root(session: Session, target: RootPose, pos_tol: float = 0.03, yaw_tol: float = 0.05):
    """Yield commands walking the root straight to a nearby target pose."""
    while True:
        hold = session.hold_command()
        yield EeRootCommand(target, hold.ee_left, hold.ee_right)
        root = session.state.root
        if (
            math.hypot(target.x - root.x, target.y - root.y) <= pos_tol
            and abs(target.z - root.z) <= pos_tol
            and abs(wrap_yaw(target.yaw - root.yaw)) <= yaw_tol
        ):
            return


def _drive_hands(session: Session, state: HandState, tol: float = 0.02, root: RootPose | None = None):
    """Yield commands moving the hands to a canonical state at a fixed root."""
    session.hand_state = state
    left, right = state.ee_targets(session.cfg.hands)
    anchor = root or session.state.root
    cmd = EeRootCommand(anchor, left, right)
    while True:
        yield cmd
        if max(session.ee_errors(cmd)) <= tol:
            return


def _settle(session: Session, cmd: EeRootCommand, seconds: float):
    end = session.sim_time + seconds
    while session.sim_time < end:
        yield cmd


# --- built-in skills ---------------------------------------------------------


def _skill_set_hands(session: Session, state: str, width: float | None = None, height: float | None = None):
    try:
        if state.lower() == "grasp":
            if width is None:
                raise ParamValidation("set_hands: grasp requires a width")
            hs = HandState.grasp(width, 0.10 if height is None else height)
        else:
            hs = HandState.parse(state)
    except Exception as exc:
        raise SkillFailure(str(exc))
    yield from _drive_hands(session, hs)
    return f"hands at {hs.label()}"


def _skill_move_to(session: Session, x: float, y: float, yaw: float):
    root = session.state.root
    try:
        path = plan(session.grid_map(), (root.x, root.y, root.yaw), (x, y, yaw), session.cfg.planner)
    except (NoPath, StartBlocked) as exc:
        raise SkillFailure(f"planning failed: {exc}")
    session.active_path = path
    try:
        while True:
            target, done = track(path, session.state.root, params=session.cfg.planner)
            hold = session.hold_command()
            yield EeRootCommand(target, hold.ee_left, hold.ee_right)
            if done:
                return f"reached ({x:.2f}, {y:.2f}, {yaw:.2f})"
    finally:
        session.active_path = None


def _skill_grasp(session: Session, object_id: str):
    scene = session.scene
    cfg = session.cfg
    box = scene.box_by_id(object_id)
    if box is None:
        raise SkillFailure(f"unknown object {object_id!r}")
    if scene.carried_box() is not None:
        raise SkillFailure("hands are already carrying an object")

    yield from _drive_hands(session, HandState.READY)

    direction, yaw = _cardinal_facing(session.state.root.xy, box.position[:2])
    width = _lateral_width(box, yaw)
    depth = _facing_depth(box, direction)
    lim = cfg.root
    root_z = min(max(box.position[2] - 0.10, lim.z_min), lim.z_max)
    height = float(box.position[2] - root_z)

    pre_xy = box.position[:2] - direction * (depth + 0.35)
    yield from _drive_root(session, RootPose(pre_xy[0], pre_xy[1], root_z, yaw), pos_tol=0.04)

    opened = HandState.grasp(width + 0.08, height)
    yield from _drive_hands(session, opened, tol=0.03)

    stance_xy = box.position[:2] - direction * cfg.hands.grasp_x
    stance = RootPose(stance_xy[0], stance_xy[1], root_z, yaw)
    yield from _drive_root(session, stance, pos_tol=0.02, yaw_tol=0.03)

    squeeze = HandState.grasp(width, height)
    session.hand_state = squeeze
    left, right = squeeze.ee_targets(cfg.hands)
    yield from _settle(session, EeRootCommand(stance, left, right), 0.5)

    try:
        world.try_grasp(scene, session.state, object_id, cfg)
    except (world.GraspFailed, ValueError, KeyError) as exc:
        raise SkillFailure(str(exc))

    yield from _drive_hands(session, HandState.HOLD, tol=0.04)
    # back away from the support before any walking starts
    yield from _drive_root(session, RootPose(pre_xy[0], pre_xy[1], 0.70, yaw), pos_tol=0.05)
    return f"grasped {object_id}"


def _skill_place(session: Session, surface_id: str, x: float | None = None, y: float | None = None):
    scene = session.scene
    cfg = session.cfg
    box = scene.carried_box()
    if box is None:
        raise SkillFailure("nothing is carried")

    if surface_id == world.FLOOR:
        height = 0.0
        if x is None or y is None:
            raise SkillFailure("placing on the floor requires explicit x, y")
        target_xy = np.array([x, y])
    else:
        furniture = scene.furniture_by_name(surface_id)
        if furniture is None:
            raise SkillFailure(f"unknown surface {surface_id!r}")
        height = furniture.height
        target_xy = np.array(
            [furniture.center[0] if x is None else x, furniture.center[1] if y is None else y]
        )

    box_z = height + box.extent[2] / 2.0 + 0.05
    direction, yaw = _cardinal_facing(session.state.root.xy, target_xy)
    lim = cfg.root
    root_z = min(max(box_z - 0.10, lim.z_min), lim.z_max)
    carry = HandState.grasp(box.grasp_width, float(box_z - root_z))
    session.hand_state = carry

    stance_xy = target_xy - direction * cfg.hands.grasp_x
    stance = RootPose(stance_xy[0], stance_xy[1], root_z, yaw)
    yield from _drive_root(session, stance, pos_tol=0.02, yaw_tol=0.03)

    left, right = carry.ee_targets(cfg.hands)
    yield from _settle(session, EeRootCommand(stance, left, right), 0.4)

    result = world.try_release(scene, session.state, box.object_id, cfg)
    yield from _drive_hands(session, HandState.READY, tol=0.04)
    retreat_xy = stance_xy - direction * 0.15
    yield from _drive_root(session, RootPose(retreat_xy[0], retreat_xy[1], 0.70, yaw), pos_tol=0.05)
    if not result.placed:
        raise SkillFailure(f"{box.object_id} dropped on release")
    return f"placed {box.object_id} on {result.surface}"


def _skill_ee_goto(session: Session, left: list, right: list):
    target_l = Pose3.from_rotvec(left[:3], left[3:])
    target_r = Pose3.from_rotvec(right[:3], right[3:])
    session.hand_state = HandState.READY  # arms leave canonical states; not locomotion-safe
    cmd = EeRootCommand(session.state.root, target_l, target_r)
    last = math.inf
    stall_since = session.sim_time
    while True:
        yield cmd
        err = max(session.ee_errors(cmd))
        if err <= 0.02:
            return "reached targets"
        if last - err > 1e-4:
            stall_since = session.sim_time
        last = err
        if session.sim_time - stall_since > 1.0:
            return f"settled with residual {err:.3f} m"


def _skill_stub_planner(session: Session, trajectory_file: str):
    path = Path(trajectory_file)
    if not path.exists():
        raise SkillFailure(f"trajectory file not found: {trajectory_file}")
    try:
        entries = json.loads(path.read_text())
        entries = sorted(entries, key=lambda e: float(e["t"]))
        commands = [(float(e["t"]), EeRootCommand.from_vector(e["command"])) for e in entries]
    except (ValueError, KeyError, TypeError) as exc:
        raise SkillFailure(f"bad trajectory file: {exc}")
    if not commands:
        raise SkillFailure("trajectory file is empty")
    session.hand_state = HandState.READY
    start = session.sim_time
    idx = 0
    cmd = commands[0][1]
    while True:
        elapsed = session.sim_time - start
        while idx < len(commands) and commands[idx][0] <= elapsed:
            cmd = commands[idx][1]
            idx += 1
        yield cmd
        if idx >= len(commands) and elapsed >= commands[-1][0] + 0.5:
            return f"replayed {len(commands)} waypoints"


register(
    SkillSpec(
        name="move_to",
        description="Walk the base to a target pose (x, y meters; yaw radians) using the grid planner. "
        "Hands must be in a locomotion-safe state (rest or hold).",
        params=(
            ParamSpec("x", "number", "target x, meters (world frame)"),
            ParamSpec("y", "number", "target y, meters (world frame)"),
            ParamSpec("yaw", "number", "target heading, radians"),
        ),
        requires_locomotion_safe=True,
        handler=_skill_move_to,
    )
)
register(
    SkillSpec(
        name="set_hands",
        description="Move both hands to a canonical state: rest and hold permit walking; "
        "ready and grasp do not.",
        params=(
            ParamSpec("state", "string", "hand state name", enum=("rest", "hold", "ready", "grasp")),
            ParamSpec("width", "number", "grasp: object width, meters", required=False, minimum=0.05, maximum=0.6),
            ParamSpec("height", "number", "grasp: hand height above pelvis, meters", required=False,
                      minimum=-0.3, maximum=0.5),
        ),
        requires_locomotion_safe=False,
        handler=_skill_set_hands,
    )
)
register(
    SkillSpec(
        name="grasp",
        description="Approach a named box and pick it up with a dual-arm squeeze; "
        "ends holding the object in the hold state.",
        params=(ParamSpec("object_id", "string", "id of the box to grasp"),),
        requires_locomotion_safe=False,
        handler=_skill_grasp,
    )
)
register(
    SkillSpec(
        name="place",
        description="Put the carried box down on a named surface ('floor' needs explicit x, y). "
        "Optional x, y choose the spot on the surface.",
        params=(
            ParamSpec("surface_id", "string", "furniture name or 'floor'"),
            ParamSpec("x", "number", "target x on the surface, meters", required=False),
            ParamSpec("y", "number", "target y on the surface, meters", required=False),
        ),
        requires_locomotion_safe=False,
        handler=_skill_place,
    )
)
register(
    SkillSpec(
        name="ee_goto",
        description="Drive both end-effectors to explicit root-frame poses "
        "[x, y, z, rx, ry, rz] (position meters, rotation vector radians).",
        params=(
            ParamSpec("left", "vector6", "left EE pose in the root frame"),
            ParamSpec("right", "vector6", "right EE pose in the root frame"),
        ),
        requires_locomotion_safe=False,
        handler=_skill_ee_goto,
    )
)
register(
    SkillSpec(
        name="stub_planner",
        description="Replay an externally generated EE-root trajectory file "
        "(JSON list of {t, command[16]}); the interface slot for learned planners.",
        params=(ParamSpec("trajectory_file", "string", "path to the trajectory JSON"),),
        requires_locomotion_safe=False,
        handler=_skill_stub_planner,
    )
)


# --- teleoperation -----------------------------------------------------------


@dataclass
class TeleopSession:
    """Held teleop targets; deltas accumulate here and emit commands."""

    left: np.ndarray
    right: np.ndarray
    left_rot: np.ndarray
    right_rot: np.ndarray
    root: RootPose
    mode: str = "independent"  # independent | mirrored

    @classmethod
    def from_session(cls, session: Session, mode: str = "independent") -> "TeleopSession":
        cmd = session.state.command
        return cls(
            left=cmd.ee_left.position.copy(),
            right=cmd.ee_right.position.copy(),
            left_rot=cmd.ee_left.as_rotvec(),
            right_rot=cmd.ee_right.as_rotvec(),
            root=session.state.root,
            mode=mode,
        )

    def command(self) -> EeRootCommand:
        return EeRootCommand(
            self.root,
            Pose3.from_rotvec(self.left, self.left_rot),
            Pose3.from_rotvec(self.right, self.right_rot),
        )


def teleop_map(
    teleop: TeleopSession,
    hand_delta=None,
    hand_delta_right=None,
    root_delta=None,
    mode: str | None = None,
) -> EeRootCommand:
    """Apply teleop deltas and return the resulting command.

    hand_delta is (dx, dy, dz) in the root frame. Mirrored mode applies dx
    and dz to both hands and +dy / -dy to left / right; independent mode
    applies hand_delta to the left (and to the right when no explicit
    right-hand delta is given). root_delta is (forward, strafe, dyaw, dz) in
    the root frame.
    """
    if mode is not None:
        teleop.mode = mode
    if hand_delta is not None:
        d = np.asarray(hand_delta, dtype=float).reshape(3)
        if teleop.mode == "mirrored":
            teleop.left = teleop.left + d
            teleop.right = teleop.right + d * np.array([1.0, -1.0, 1.0])
        else:
            teleop.left = teleop.left + d
            if hand_delta_right is None:
                teleop.right = teleop.right + d
    if hand_delta_right is not None and teleop.mode != "mirrored":
        teleop.right = teleop.right + np.asarray(hand_delta_right, dtype=float).reshape(3)
    if root_delta is not None:
        fwd, strafe, dyaw, dz = (float(v) for v in root_delta)
        c, s = math.cos(teleop.root.yaw), math.sin(teleop.root.yaw)
        teleop.root = RootPose(
            teleop.root.x + c * fwd - s * strafe,
            teleop.root.y + s * fwd + c * strafe,
            teleop.root.z + dz,
            teleop.root.yaw + dyaw,
        )
    return teleop.command()
