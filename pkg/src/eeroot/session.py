"""Single-writer simulation session: one controller, one scene, one clock.

The session owns the 50 Hz loop. Whoever drives it (the headless skill
executor, the evaluation harness, or the served tick loop) calls ``step``
with the latest command; the world update and the controller update share
the same tick snapshot, and everything downstream (skills, task manager,
bridge) reads published state from here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import controller, world
from .config import Config
from .geometry import EeRootCommand, Pose3, RootPose, world_to_ee
from .hands import HandState
from .impedance import ExternalForce
from .locomotion import GridMap


@dataclass
class SkillRecord:
    name: str
    params: dict
    status: str = "running"   # running | succeeded | failed | aborted
    detail: str = ""
    start_tick: int = 0
    end_tick: int = 0


class Session:
    def __init__(self, cfg: Config | None = None, scene: world.Scene | None = None,
                 start: RootPose | None = None):
        self.cfg = cfg or Config()
        self.scene = scene or world.Scene()
        self.state = controller.initial_state(self.cfg, root=start)
        self.hand_state: HandState = HandState.REST
        self.last_forces: tuple[ExternalForce, ExternalForce] = (ExternalForce.zero(), ExternalForce.zero())
        self.skill_log: list[SkillRecord] = []
        self.recorder: Callable[[Session], None] | None = None
        self._grid: GridMap | None = None
        self.active_path = None  # PlannedPath while a locomotion skill runs (for UIs)

    # --- clock -------------------------------------------------------------

    @property
    def tick(self) -> int:
        return self.state.tick

    @property
    def sim_time(self) -> float:
        return self.state.tick * self.cfg.timestep

    # --- stepping ----------------------------------------------------------

    def step(self, cmd: EeRootCommand | None = None) -> None:
        """One control tick: world update and forces first, controller second."""
        forces = world.tick(self.scene, self.state, self.cfg)
        self.last_forces = forces
        self.state = controller.step(self.state, cmd, forces, self.cfg)
        if self.recorder is not None:
            self.recorder(self)

    def run(self, ticks: int, cmd: EeRootCommand | None = None) -> None:
        for _ in range(ticks):
            self.step(cmd)

    def run_seconds(self, seconds: float, cmd: EeRootCommand | None = None) -> None:
        self.run(int(round(seconds / self.cfg.timestep)), cmd)

    # --- queries -----------------------------------------------------------

    def ee_world(self) -> tuple[Pose3, Pose3]:
        return self.state.ee_world(self.cfg)

    def ee_in_root(self) -> tuple[Pose3, Pose3]:
        left, right = self.ee_world()
        return world_to_ee(self.state.root, left), world_to_ee(self.state.root, right)

    def hold_command(self) -> EeRootCommand:
        """Canonical command for the current hand state at the current root."""
        return controller.hold_posture(self.state, self.hand_state, self.cfg)

    def grid_map(self) -> GridMap:
        """Grid built from the static furniture; cached (furniture never moves)."""
        if self._grid is None:
            self._grid = GridMap.from_scene(self.scene, self.cfg.planner)
        return self._grid

    def ee_errors(self, cmd: EeRootCommand) -> tuple[float, float]:
        """Position errors (m) of both EEs against a command's root-frame targets."""
        left, right = self.ee_in_root()
        return (
            float(np.linalg.norm(left.position - cmd.ee_left.position)),
            float(np.linalg.norm(right.position - cmd.ee_right.position)),
        )

    def snapshot(self) -> dict:
        """Plain-data state snapshot (wire `state` payload minus transport fields)."""
        left, right = self.ee_world()
        cmd = self.state.command
        return {
            "tick": self.tick,
            "sim_time": round(self.sim_time, 6),
            "root": {"x": self.state.root.x, "y": self.state.root.y,
                     "z": self.state.root.z, "yaw": self.state.root.yaw},
            "joints": self.state.q.tolist(),
            "ee_left": {"position": left.position.tolist(), "rotvec": left.as_rotvec().tolist()},
            "ee_right": {"position": right.position.tolist(), "rotvec": right.as_rotvec().tolist()},
            "ee_targets": {
                "left": cmd.ee_left.position.tolist(),
                "right": cmd.ee_right.position.tolist(),
            },
            "hand_state": self.hand_state.label(),
            "locomotion_safe": self.hand_state.locomotion_safe,
            "carried": [b.object_id for b in self.scene.boxes if b.status == "carried"],
            "objects": [
                {
                    "id": b.object_id,
                    "position": [round(v, 6) for v in b.position.tolist()],
                    "extent": b.extent.tolist(),
                    "yaw": round(b.yaw, 6),
                    "status": b.status,
                    "support": b.support,
                }
                for b in self.scene.boxes
            ],
            "furniture": [
                {
                    "name": f.name,
                    "center": f.center.tolist(),
                    "extent": f.extent.tolist(),
                    "height": f.height,
                }
                for f in self.scene.furniture
            ],
            "forces": {
                "left": self.last_forces[0].force.tolist(),
                "right": self.last_forces[1].force.tolist(),
            },
        }


def session_from_scenario(spec: world.ScenarioSpec, cfg: Config | None = None) -> Session:
    return Session(cfg=cfg, scene=spec.sample())
