"""High-level layer: natural-language instructions to skill sequences.

Backends share one contract: ``begin(instruction, scene)`` then repeated
``decide(observation) -> Decision`` inside the reason-act-observe loop. The
scripted backend is a pure function of (instruction, latest observation);
the LLM backend speaks a chat-completions HTTP interface with the skill
registry exported as tool schemas. Task success is always judged by scene
predicates, never by the backend's own completion claim.
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass, field

import numpy as np
import requests

from . import skills
from .geometry import wrap_yaw
from .session import Session
from .world import FLOOR, BoxObject, Furniture, Scene

LLM_API_KEY_ENV = "EEROOT_LLM_API_KEY"


class BackendUnavailable(RuntimeError):
    pass


class IterationCap(RuntimeError):
    pass


# --- observation -------------------------------------------------------------


@dataclass
class Observation:
    root: tuple[float, float, float, float]
    ee_left: list[float]            # root-frame position
    ee_right: list[float]
    hand_state: str
    locomotion_safe: bool
    objects: list[dict]             # ground-truth poses, labeled as such
    last_skill: dict | None = None

    def to_json(self) -> str:
        payload = {
            "root": [round(v, 3) for v in self.root],
            "ee_left": [round(v, 3) for v in self.ee_left],
            "ee_right": [round(v, 3) for v in self.ee_right],
            "hand_state": self.hand_state,
            "locomotion_safe": self.locomotion_safe,
            "objects": self.objects,
            "last_skill": self.last_skill,
            "object_locations": "simulator ground truth",
        }
        return json.dumps(payload, separators=(",", ":"))


def observe(session: Session, last_skill: dict | None = None) -> Observation:
    left, right = session.ee_in_root()
    root = session.state.root
    return Observation(
        root=(root.x, root.y, root.z, root.yaw),
        ee_left=[round(v, 3) for v in left.position.tolist()],
        ee_right=[round(v, 3) for v in right.position.tolist()],
        hand_state=session.hand_state.label(),
        locomotion_safe=session.hand_state.locomotion_safe,
        objects=[
            {
                "id": b.object_id,
                "position": [round(v, 3) for v in b.position.tolist()],
                "status": b.status,
                "support": b.support,
            }
            for b in session.scene.boxes
        ],
        last_skill=last_skill,
    )


# --- decisions ---------------------------------------------------------------


@dataclass
class Decision:
    kind: str                  # call | done | invalid
    name: str = ""
    params: dict = field(default_factory=dict)
    trace: str = ""


# --- approach geometry (shared with the evaluation harness) ------------------

_SIDES = (np.array([1.0, 0.0]), np.array([-1.0, 0.0]), np.array([0.0, 1.0]), np.array([0.0, -1.0]))


def _pose_blocked(scene: Scene, xy: np.ndarray, margin: float = 0.36) -> bool:
    xmin, xmax, ymin, ymax = scene.bounds
    if not (xmin + 0.2 <= xy[0] <= xmax - 0.2 and ymin + 0.2 <= xy[1] <= ymax - 0.2):
        return True
    for f in scene.furniture:
        if np.all(np.abs(xy - f.center) <= f.half + margin):
            return True
    return False


def approach_pose(scene: Scene, furniture: Furniture, robot_xy, clearance: float = 0.5):
    """Pose 0.5 m off the nearest free edge of a furniture piece, facing it."""
    robot_xy = np.asarray(robot_xy, dtype=float)
    best = None
    fallback = None
    for side in _SIDES:
        offset = float(abs(side[0]) * furniture.half[0] + abs(side[1]) * furniture.half[1])
        xy = furniture.center + side * (offset + clearance)
        yaw = math.atan2(-side[1], -side[0])
        dist = float(np.linalg.norm(xy - robot_xy))
        cand = (dist, tuple(xy), yaw)
        if fallback is None or dist < fallback[0]:
            fallback = cand
        if not _pose_blocked(scene, xy) and (best is None or dist < best[0]):
            best = cand
    _, xy, yaw = best or fallback
    return (xy[0], xy[1], yaw)


def box_approach_pose(scene: Scene, box: BoxObject, robot_xy, clearance: float = 0.5):
    """Pose near a box: off the support-furniture edge closest to the box, or
    a free cardinal spot for a floor box."""
    robot_xy = np.asarray(robot_xy, dtype=float)
    support = scene.furniture_by_name(box.support) if box.support else None
    if support is None:
        return point_approach_pose(scene, box.position[:2], robot_xy, clearance=clearance + 0.05)
    best = None
    fallback = None
    for side in _SIDES:
        half = support.half
        offset = float(abs(side[0]) * half[0] + abs(side[1]) * half[1])
        axis = 0 if side[0] else 1
        other = 1 - axis
        xy = np.empty(2)
        xy[axis] = support.center[axis] + side[axis] * (offset + clearance)
        xy[other] = float(np.clip(box.position[other], support.center[other] - half[other],
                                  support.center[other] + half[other]))
        yaw = math.atan2(box.position[1] - xy[1], box.position[0] - xy[0])
        dist = float(np.linalg.norm(xy - robot_xy)) + float(np.linalg.norm(xy - box.position[:2]))
        cand = (dist, tuple(xy), yaw)
        if fallback is None or dist < fallback[0]:
            fallback = cand
        if not _pose_blocked(scene, xy) and (best is None or dist < best[0]):
            best = cand
    _, xy, yaw = best or fallback
    return (xy[0], xy[1], yaw)


def point_approach_pose(scene: Scene, point_xy, robot_xy, clearance: float = 0.55):
    """Free cardinal pose at a clearance from a floor point, facing it."""
    point_xy = np.asarray(point_xy, dtype=float)
    robot_xy = np.asarray(robot_xy, dtype=float)
    best = None
    fallback = None
    for side in _SIDES:
        xy = point_xy + side * clearance
        yaw = math.atan2(-side[1], -side[0])
        dist = float(np.linalg.norm(xy - robot_xy))
        cand = (dist, tuple(xy), yaw)
        if fallback is None or dist < fallback[0]:
            fallback = cand
        if not _pose_blocked(scene, xy) and (best is None or dist < best[0]):
            best = cand
    _, xy, yaw = best or fallback
    return (xy[0], xy[1], yaw)


def spatial_region(furniture: Furniture, side: str, offset: float = 0.6):
    """Footprint-sized rectangle translated along the furniture's local axis:
    left +y, right -y, front +x, behind -x. Returns (center_xy, half_extent_xy)."""
    axis = {"left": np.array([0.0, 1.0]), "right": np.array([0.0, -1.0]),
            "front": np.array([1.0, 0.0]), "behind": np.array([-1.0, 0.0])}[side]
    return furniture.center + axis * offset, furniture.half.copy()


def region_contains(region, xy) -> bool:
    center, half = region
    return bool(np.all(np.abs(np.asarray(xy, dtype=float) - center) <= half))


def lowest_reachable_box_z(cfg) -> float:
    """Lowest box-center height the hands can hold at the canonical grasp
    reach, with the pelvis at its minimum height (used for floor placements)."""
    shoulder_z = cfg.root.z_min + cfg.arm.shoulder_height
    horizontal = math.hypot(cfg.hands.grasp_x, 0.035)
    drop = math.sqrt(max((cfg.arm.reach - 0.02) ** 2 - horizontal**2, 0.0))
    return shoulder_z - drop


# --- instruction templates ----------------------------------------------------

ARM_PHRASES = ("raise both hands", "put your hands up", "lift both hands", "hands up")
NAV_RE = re.compile(r"^(?:go|walk|move|head(?: over)?) to the (\w+)\.?$")
PICK_RES = (
    re.compile(r"^pick up (the box|box_\d+) from the (\w+) and place it on the (\w+)\.?$"),
    re.compile(r"^grab (the box|box_\d+) from the (\w+) and put it on the (\w+)\.?$"),
    re.compile(r"^take (the box|box_\d+) from the (\w+) to the (\w+)\.?$"),
    re.compile(r"^move (the box|box_\d+) from the (\w+) (?:onto|to) the (\w+)\.?$"),
)
SPATIAL_RE = re.compile(
    r"^(?:place|put) (the box|box_\d+) (?:to the (left|right) of|in (front) of|(behind)) the (\w+)\.?$"
)


@dataclass
class Intent:
    kind: str                   # raise_hands | goto | move_box | place_relative
    box: str | None = None      # "the box" or an explicit id
    source: str | None = None
    target: str | None = None   # furniture name
    side: str | None = None     # spatial relation


def parse_instruction(instruction: str) -> list[Intent]:
    text = instruction.strip().lower()
    parts = [p.strip() for p in re.split(r",? then ", text) if p.strip()]
    intents: list[Intent] = []
    for part in parts:
        if part.rstrip(".") in ARM_PHRASES:
            intents.append(Intent("raise_hands"))
            continue
        m = NAV_RE.match(part)
        if m:
            intents.append(Intent("goto", target=m.group(1)))
            continue
        m = SPATIAL_RE.match(part)
        if m:
            side = m.group(2) or m.group(3) or m.group(4)
            intents.append(Intent("place_relative", box=m.group(1), side=side, target=m.group(5)))
            continue
        matched = False
        for rx in PICK_RES:
            m = rx.match(part)
            if m:
                intents.append(Intent("move_box", box=m.group(1), source=m.group(2), target=m.group(3)))
                matched = True
                break
        if not matched:
            intents.append(Intent("unknown"))
    return intents


# --- scripted backend ---------------------------------------------------------


def _resolve_box(obs: Observation, selector: str | None, source: str | None):
    """Box id for 'the box' / 'box_N': explicit id wins; else the carried box;
    else the box supported by the named source; else the first resting box."""
    if selector and selector != "the box":
        for o in obs.objects:
            if o["id"] == selector:
                return o
        return None
    carried = [o for o in obs.objects if o["status"] == "carried"]
    if carried:
        return carried[0]
    if source:
        on_source = sorted((o for o in obs.objects if o["support"] == source), key=lambda o: o["id"])
        if on_source:
            return on_source[0]
        return None
    resting = sorted((o for o in obs.objects if o["status"] != "carried"), key=lambda o: o["id"])
    return resting[0] if resting else None


class ScriptedBackend:
    """Template-rule planner; decide() is a pure function of the instruction
    and the latest observation (plus static scene geometry)."""

    def __init__(self):
        self.instruction = ""
        self.scene: Scene | None = None
        self.cfg = None

    def begin(self, instruction: str, scene: Scene, cfg) -> None:
        self.instruction = instruction
        self.scene = scene
        self.cfg = cfg

    def decide(self, obs: Observation) -> Decision:
        intents = parse_instruction(self.instruction)
        for intent in intents:
            if intent.kind == "unknown":
                return Decision("done", trace="instruction not recognized")
            if not self._satisfied(intent, obs):
                return self._advance(intent, obs)
        return Decision("done", trace="all goals satisfied")

    # satisfaction ------------------------------------------------------------

    def _satisfied(self, intent: Intent, obs: Observation) -> bool:
        scene = self.scene
        if intent.kind == "raise_hands":
            return obs.hand_state == "ready"
        if intent.kind == "goto":
            f = scene.furniture_by_name(intent.target)
            if f is None:
                return True
            x, y, yaw = approach_pose(scene, f, obs.root[:2])
            return (
                math.hypot(obs.root[0] - x, obs.root[1] - y) <= 0.2
                and abs(wrap_yaw(obs.root[3] - yaw)) <= 0.3
            )
        if intent.kind == "move_box":
            box = _resolve_box(obs, intent.box, intent.source)
            return box is not None and box["status"] != "carried" and box["support"] == intent.target
        if intent.kind == "place_relative":
            f = scene.furniture_by_name(intent.target)
            if f is None:
                return True
            region = spatial_region(f, intent.side)
            box = _resolve_box(obs, intent.box, intent.source)
            return (
                box is not None
                and box["status"] != "carried"
                and box["support"] == FLOOR
                and region_contains(region, box["position"][:2])
            )
        return True

    # next action -------------------------------------------------------------

    def _advance(self, intent: Intent, obs: Observation) -> Decision:
        scene = self.scene
        if intent.kind == "raise_hands":
            return Decision("call", "set_hands", {"state": "ready"}, trace="raising hands to ready")
        if intent.kind == "goto":
            f = scene.furniture_by_name(intent.target)
            if f is None:
                return Decision("done", trace=f"no furniture named {intent.target}")
            x, y, yaw = approach_pose(scene, f, obs.root[:2])
            return self._move_or_tuck(obs, x, y, yaw, f"walking to the {intent.target}")

        if intent.kind in ("move_box", "place_relative"):
            box = _resolve_box(obs, intent.box, intent.source)
            if box is None:
                return Decision("done", trace="no matching box found")
            if box["status"] == "carried":
                return self._deliver(intent, obs, box)
            return self._fetch(obs, box)
        return Decision("done", trace="nothing to do")

    def _move_or_tuck(self, obs: Observation, x: float, y: float, yaw: float, trace: str) -> Decision:
        if not obs.locomotion_safe:
            return Decision("call", "set_hands", {"state": "rest"},
                            trace="tucking hands before walking")
        return Decision("call", "move_to", {"x": round(x, 3), "y": round(y, 3), "yaw": round(yaw, 4)},
                        trace=trace)

    def _fetch(self, obs: Observation, box: dict) -> Decision:
        scene_box = self.scene.box_by_id(box["id"])
        x, y, yaw = box_approach_pose(self.scene, scene_box, obs.root[:2])
        if math.hypot(obs.root[0] - x, obs.root[1] - y) > 0.3:
            return self._move_or_tuck(obs, x, y, yaw, f"walking toward {box['id']}")
        return Decision("call", "grasp", {"object_id": box["id"]}, trace=f"grasping {box['id']}")

    def _deliver(self, intent: Intent, obs: Observation, box: dict) -> Decision:
        scene = self.scene
        if intent.kind == "move_box":
            f = scene.furniture_by_name(intent.target)
            if f is None:
                return Decision("done", trace=f"no furniture named {intent.target}")
            x, y, yaw = approach_pose(scene, f, obs.root[:2])
            if math.hypot(obs.root[0] - x, obs.root[1] - y) > 0.35:
                return self._move_or_tuck(obs, x, y, yaw, f"carrying {box['id']} to the {intent.target}")
            scene_box = scene.box_by_id(box["id"])
            spot = _placement_spot(f, np.asarray(obs.root[:2]), scene_box)
            return Decision(
                "call", "place",
                {"surface_id": f.name, "x": round(float(spot[0]), 3), "y": round(float(spot[1]), 3)},
                trace=f"placing {box['id']} on the {intent.target}",
            )
        # place_relative: put the box down on the floor inside the region
        f = scene.furniture_by_name(intent.target)
        region_center, _ = spatial_region(f, intent.side)
        x, y, yaw = point_approach_pose(scene, region_center, obs.root[:2])
        if math.hypot(obs.root[0] - x, obs.root[1] - y) > 0.35:
            return self._move_or_tuck(obs, x, y, yaw, f"carrying {box['id']} next to the {intent.target}")
        return Decision(
            "call", "place",
            {"surface_id": FLOOR, "x": round(float(region_center[0]), 3), "y": round(float(region_center[1]), 3)},
            trace=f"lowering {box['id']} to the {intent.side} of the {intent.target}",
        )


def _placement_spot(furniture: Furniture, robot_xy: np.ndarray, box: BoxObject) -> np.ndarray:
    """Spot on the surface nearest the robot, inset so the box footprint fits."""
    inset = furniture.half - box.extent[:2] / 2.0 - 0.02
    inset = np.maximum(inset, 0.0)
    return np.clip(robot_xy, furniture.center - inset, furniture.center + inset)


# --- LLM backend --------------------------------------------------------------


class LlmBackend:
    """Chat-completions function-calling client. The endpoint is any server
    speaking the standard /chat/completions JSON shape (a replay server in
    tests). Invalid tool calls are returned to the model as error messages
    for up to three correction rounds, never executed."""

    def __init__(self, endpoint: str, model: str = "default", api_key: str | None = None,
                 timeout: float = 30.0, max_retries: int = 3):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(LLM_API_KEY_ENV, "")
        self.timeout = timeout
        self.max_retries = max_retries
        self.messages: list[dict] = []
        self._pending_tool_id: str | None = None

    def begin(self, instruction: str, scene: Scene, cfg) -> None:
        self.messages = [
            {"role": "system", "content": build_system_prompt(scene)},
            {"role": "user", "content": instruction},
        ]
        self._pending_tool_id = None

    def _post(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {"model": self.model, "messages": self.messages, "tools": skills.tool_schemas()}
        last_error = None
        for _ in range(self.max_retries):
            try:
                resp = requests.post(
                    f"{self.endpoint}/chat/completions", json=body, headers=headers, timeout=self.timeout
                )
                resp.raise_for_status()
                return resp.json()
            except (requests.RequestException, ValueError) as exc:
                last_error = exc
        raise BackendUnavailable(f"LLM endpoint failed after {self.max_retries} attempts: {last_error}")

    def decide(self, obs: Observation) -> Decision:
        if self._pending_tool_id is not None:
            self.messages.append(
                {"role": "tool", "tool_call_id": self._pending_tool_id, "content": obs.to_json()}
            )
            self._pending_tool_id = None
        else:
            self.messages.append({"role": "user", "content": f"Observation: {obs.to_json()}"})

        for _ in range(3):  # correction rounds for malformed calls
            data = self._post()
            try:
                message = data["choices"][0]["message"]
            except (KeyError, IndexError, TypeError):
                raise BackendUnavailable("malformed chat-completions response")
            self.messages.append(message)
            calls = message.get("tool_calls") or []
            if not calls:
                return Decision("done", trace=message.get("content") or "")
            call = calls[0]
            name = call.get("function", {}).get("name", "")
            raw_args = call.get("function", {}).get("arguments", "{}")
            call_id = call.get("id", "call_0")
            try:
                params = json.loads(raw_args) if isinstance(raw_args, str) else dict(raw_args)
                spec = skills.get_skill(name)
                params = skills.validate_params(spec, params)
            except (json.JSONDecodeError, skills.UnknownSkill, skills.ParamValidation) as exc:
                self.messages.append(
                    {"role": "tool", "tool_call_id": call_id, "content": f"error: {exc}"}
                )
                continue
            self._pending_tool_id = call_id
            return Decision("call", name, params, trace=message.get("content") or "")
        return Decision("invalid", trace="tool call failed validation after 3 correction rounds")


# --- system prompt ------------------------------------------------------------

_HAND_TABLE = (
    ("rest", "(0.05, +/-0.28, -0.15)", "yes"),
    ("hold", "(0.25, +/-0.12, 0.10)", "yes"),
    ("ready", "(0.30, +/-0.20, 0.15)", "no"),
    ("grasp", "(0.32, +/-(width/2 - 0.01), height)", "no"),
)


def build_system_prompt(scene: Scene) -> str:
    """Deterministic prompt: frame definition, layout, hand-state safety table,
    the recommended pick-and-place recipe, and the tool schemas."""
    xmin, xmax, ymin, ymax = scene.bounds
    lines = [
        "You are the task manager of a dual-arm humanoid robot in a single room.",
        "Coordinate system: world frame with x forward, y left, z up; units are meters "
        "and radians; yaw is measured counterclockwise from +x. The robot root command is "
        "(x, y, z, yaw); end-effector targets are positions in the robot body frame.",
        f"Room bounds: x in [{xmin:.2f}, {xmax:.2f}], y in [{ymin:.2f}, {ymax:.2f}]. "
        "The robot starts at the room center.",
        "",
        "Furniture (static, with support-surface heights):",
    ]
    for f in scene.furniture:
        lines.append(
            f"- {f.name}: center ({f.center[0]:.2f}, {f.center[1]:.2f}), "
            f"size {f.extent[0]:.2f} x {f.extent[1]:.2f} m, surface height {f.height:.2f} m"
        )
    lines.append("")
    lines.append("Objects (positions are simulator ground truth):")
    for b in scene.boxes:
        lines.append(
            f"- {b.object_id}: position ({b.position[0]:.2f}, {b.position[1]:.2f}, "
            f"{b.position[2]:.2f}), size {b.extent[0]:.2f} m, on {b.support}"
        )
    lines.extend(
        [
            "",
            "Hand states (body-frame left-hand coordinates; right hand mirrors y):",
            "| state | coordinates | walking allowed |",
        ]
    )
    for name, coords, safe in _HAND_TABLE:
        lines.append(f"| {name} | {coords} | {safe} |")
    lines.extend(
        [
            "",
            "Rules: only walk (move_to) while the hands are in a state that allows walking. "
            "Grasping ends holding the object in the hold state, which allows walking.",
            "Recommended pick-and-place sequence: move_to an approach pose about 0.5 m off "
            "the support furniture edge, grasp(object), move_to an approach pose at the "
            "destination, place(surface). Finish by answering without a tool call.",
        ]
    )
    return "\n".join(lines)


# --- task loop ----------------------------------------------------------------


@dataclass
class TaskResult:
    instruction: str
    success: bool | None
    steps: int
    elapsed_sim_time: float
    transcript: list[dict]
    iterations: int
    backend_done: bool
    hit_iteration_cap: bool


def run_task(
    session: Session,
    instruction: str,
    backend,
    max_iterations: int = 40,
    goal=None,
    raise_on_cap: bool = False,
) -> TaskResult:
    """Reason-act-observe loop. ``goal`` is an optional predicate
    ``goal(session) -> bool`` judged by the harness at the end; the backend's
    Done claim never decides success."""
    backend.begin(instruction, session.scene, session.cfg)
    transcript: list[dict] = []
    start_time = session.sim_time
    last_skill: dict | None = None
    steps = 0
    backend_done = False
    iterations = 0

    for iterations in range(1, max_iterations + 1):
        obs = observe(session, last_skill)
        decision = backend.decide(obs)
        entry = {
            "iteration": iterations,
            "decision": decision.kind,
            "skill": decision.name,
            "params": decision.params,
            "trace": decision.trace,
            "observation": json.loads(obs.to_json()),
        }
        transcript.append(entry)
        if decision.kind == "done":
            backend_done = True
            break
        if decision.kind == "invalid":
            last_skill = {"name": decision.name or "?", "status": "rejected", "detail": decision.trace}
            entry["error"] = "invalid_tool_call"
            continue
        start_tick = session.tick
        try:
            outcome = skills.invoke(session, decision.name, decision.params)
        except (skills.UnknownSkill, skills.ParamValidation, skills.SafetyViolation) as exc:
            last_skill = {"name": decision.name, "status": "rejected",
                          "detail": f"{type(exc).__name__}: {exc}"}
            entry["error"] = type(exc).__name__
            continue
        steps += 1
        last_skill = {"name": outcome.name, "status": outcome.status, "detail": outcome.detail}
        entry["outcome"] = dict(last_skill)
        entry["ticks"] = [start_tick, session.tick]

    hit_cap = not backend_done and iterations >= max_iterations
    if hit_cap and raise_on_cap:
        raise IterationCap(f"task did not finish within {max_iterations} iterations")
    success = bool(goal(session)) if goal is not None else None
    return TaskResult(
        instruction=instruction,
        success=success,
        steps=steps,
        elapsed_sim_time=session.sim_time - start_time,
        transcript=transcript,
        iterations=iterations,
        backend_done=backend_done,
        hit_iteration_cap=hit_cap,
    )


# --- failure taxonomy ---------------------------------------------------------

LLM_ERROR = "llm_error"
MANIPULATION_FAILURE = "manipulation_failure"
LOCOMOTION_FAILURE = "locomotion_failure"


def classify_failure(result: TaskResult, scene: Scene, expected_objects=None) -> str | None:
    """Deterministic post-hoc failure category for an unsuccessful task.

    Priority: planner-level errors (unknown skill, invalid params, safety
    violations, wrong target object, premature/absent Done) > manipulation
    (grasp or release errors) > locomotion (drop while a move_to ran).
    Returns None for successful tasks.
    """
    if result.success:
        return None

    grasped = []
    rejected = False
    for entry in result.transcript:
        if entry.get("error"):
            rejected = True
        if entry.get("skill") == "grasp" and entry.get("outcome", {}).get("status") == "succeeded":
            grasped.append(entry.get("params", {}).get("object_id"))
    if rejected:
        return LLM_ERROR
    if expected_objects is not None and any(g not in expected_objects for g in grasped):
        return LLM_ERROR

    move_spans = [
        tuple(entry["ticks"])
        for entry in result.transcript
        if entry.get("skill") == "move_to" and entry.get("ticks")
    ]
    drop_carry = [e for e in scene.events if e.kind == "drop_carry"]
    for event in drop_carry:
        if any(lo <= event.tick <= hi for lo, hi in move_spans):
            return LOCOMOTION_FAILURE

    for entry in result.transcript:
        outcome = entry.get("outcome")
        if not outcome:
            continue
        if outcome["status"] == "failed" and entry.get("skill") in ("grasp", "place"):
            return MANIPULATION_FAILURE
        if outcome["status"] == "aborted" and entry.get("skill") == "move_to":
            return LOCOMOTION_FAILURE
        if outcome["status"] == "aborted":
            return MANIPULATION_FAILURE
    if any(e.kind == "drop_release" for e in scene.events):
        return MANIPULATION_FAILURE
    if drop_carry:
        return LOCOMOTION_FAILURE
    return LLM_ERROR
