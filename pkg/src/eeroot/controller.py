"""Low-level 50 Hz controller: EE-root commands in, rate-limited motion out.

Per tick: the base tracks the commanded root pose with saturated-P control,
world-frame EE targets are rebuilt from the current root, shifted by the
low-passed compliance offsets, and one damped-least-squares IK step moves
the arm joints. Commands are held zero-order until replaced, so 10-20 Hz
skill streams are consumed safely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .config import ArmGeometry, Config
from .geometry import EeRootCommand, Pose3, RootPose, ee_to_world, wrap_yaw
from .hands import HandState
from .impedance import ExternalForce, OffsetFilter, compliant_offset
from .kinematics import N_JOINTS, NonFiniteInput, RobotModel, dls_ik_step, forward_kinematics


@lru_cache(maxsize=8)
def model_for(geometry: ArmGeometry) -> RobotModel:
    return RobotModel(geometry)


@dataclass(frozen=True, eq=False)
class ControllerState:
    q: np.ndarray                 # 14 arm joint angles
    root: RootPose
    command: EeRootCommand        # held command (zero-order hold)
    offset_left: OffsetFilter
    offset_right: OffsetFilter
    tick: int = 0

    def ee_world(self, cfg: Config) -> tuple[Pose3, Pose3]:
        return forward_kinematics(model_for(cfg.arm), self.root, self.q)


def initial_state(cfg: Config, root: RootPose | None = None,
                  hand_state: HandState = HandState.REST) -> ControllerState:
    root = root or RootPose(0.0, 0.0, 0.7, 0.0)
    left, right = hand_state.ee_targets(cfg.hands)
    cmd = EeRootCommand(root, left, right)
    tau = cfg.offset_time_constant
    return ControllerState(
        q=np.zeros(N_JOINTS),
        root=root,
        command=cmd,
        offset_left=OffsetFilter(tau),
        offset_right=OffsetFilter(tau),
    )


def _validate_command(cmd: EeRootCommand) -> None:
    vec = cmd.to_vector()
    if not np.all(np.isfinite(vec)):
        raise NonFiniteInput("command contains non-finite values")


def _advance_root(root: RootPose, target: RootPose, cfg: Config) -> RootPose:
    dt = cfg.timestep
    lim = cfg.root
    ex, ey = target.x - root.x, target.y - root.y
    vx, vy = lim.p_gain * ex, lim.p_gain * ey
    speed = math.hypot(vx, vy)
    if speed > lim.linear_speed:
        scale = lim.linear_speed / speed
        vx, vy = vx * scale, vy * scale
    vz = max(-lim.vertical_speed, min(lim.vertical_speed, lim.p_gain * (target.z - root.z)))
    eyaw = wrap_yaw(target.yaw - root.yaw)
    vyaw = max(-lim.yaw_rate, min(lim.yaw_rate, lim.p_gain * eyaw))
    return RootPose(
        root.x + vx * dt,
        root.y + vy * dt,
        root.z + vz * dt,
        root.yaw + vyaw * dt,
    ).clamped_z(lim.z_min, lim.z_max)


def step(
    state: ControllerState,
    cmd: EeRootCommand | None,
    forces: tuple[ExternalForce, ExternalForce] | None,
    cfg: Config,
) -> ControllerState:
    """Advance the controller by one timestep. cmd=None re-uses the held
    command; forces default to zero."""
    if cmd is None:
        cmd = state.command
    else:
        _validate_command(cmd)
    if forces is None:
        forces = (ExternalForce.zero(), ExternalForce.zero())

    root = _advance_root(state.root, cmd.root, cfg)

    target_l = ee_to_world(root, cmd.ee_left)
    target_r = ee_to_world(root, cmd.ee_right)

    filt_l = state.offset_left.copy()
    filt_r = state.offset_right.copy()
    off_l = filt_l.update(compliant_offset(forces[0], cfg.gains), cfg.timestep)
    off_r = filt_r.update(compliant_offset(forces[1], cfg.gains), cfg.timestep)
    if off_l.any():
        target_l = Pose3(target_l.position + off_l, target_l.rotation)
    if off_r.any():
        target_r = Pose3(target_r.position + off_r, target_r.rotation)

    model = model_for(cfg.arm)
    _, dq = dls_ik_step(
        model,
        root,
        state.q,
        (target_l, target_r),
        params=cfg.ik,
        max_joint_step=cfg.arm.joint_velocity_limit * cfg.timestep,
    )
    return replace(
        state,
        q=state.q + dq,
        root=root,
        command=cmd,
        offset_left=filt_l,
        offset_right=filt_r,
        tick=state.tick + 1,
    )


def hold_posture(state: ControllerState, named_state: HandState, cfg: Config) -> EeRootCommand:
    """Command for a canonical hand state at the current root pose."""
    left, right = named_state.ee_targets(cfg.hands)
    return EeRootCommand(state.root, left, right)
