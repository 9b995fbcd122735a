"""Runtime configuration: gains, robot geometry, rates, and limits.

Everything here has compiled-in defaults and can be overridden from a JSON
file (see ``load_config``). The JSON mirrors the dataclass nesting, e.g.::

    {"timestep": 0.02, "gains": {"k_p": [150, 150, 120]}, "arm": {"upper_arm": 0.25}}

Matrix-valued gains accept either a single number (isotropic), a 3-list
(diagonal), or a full 3x3 nested list.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np


class SingularGains(ValueError):
    """Stiffness matrix is not symmetric positive-definite."""


def _as_gain_matrix(value) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.eye(3) * float(arr)
    if arr.shape == (3,):
        return np.diag(arr)
    if arr.shape == (3, 3):
        return arr.copy()
    raise ValueError(f"gain must be scalar, 3-vector, or 3x3 matrix, got shape {arr.shape}")


@dataclass(frozen=True, eq=False)
class ImpedanceGains:
    """Task-space stiffness/damping/inertia matrices.

    k_p must be symmetric positive-definite (checked by Cholesky at
    construction). k_d and k_m are carried for completeness; the quasi-static
    controller only consumes k_p.
    """

    k_p: np.ndarray = field(default_factory=lambda: np.eye(3) * 100.0)  # N/m
    k_d: np.ndarray = field(default_factory=lambda: np.eye(3) * 20.0)   # N*s/m
    k_m: np.ndarray = field(default_factory=lambda: np.eye(3))          # kg

    def __post_init__(self) -> None:
        for name in ("k_p", "k_d", "k_m"):
            object.__setattr__(self, name, _as_gain_matrix(getattr(self, name)))
        if not np.allclose(self.k_p, self.k_p.T, atol=1e-9):
            raise SingularGains("k_p must be symmetric")
        try:
            np.linalg.cholesky(self.k_p)
        except np.linalg.LinAlgError as exc:
            raise SingularGains("k_p must be positive-definite") from exc


@dataclass(frozen=True)
class ArmGeometry:
    """Stand-in dual 7-DoF arm geometry (shoulder pitch/roll/yaw, elbow pitch,
    wrist roll/pitch/yaw). At q = 0 each arm extends along +x from its
    shoulder; reach = upper_arm + forearm + wrist_to_ee."""

    shoulder_lateral: float = 0.15   # m, +y for left arm, -y for right
    shoulder_height: float = 0.35    # m above pelvis
    upper_arm: float = 0.22          # m
    forearm: float = 0.20            # m
    wrist_to_ee: float = 0.08        # m
    joint_limit: float = 2.6         # rad, symmetric per joint
    joint_velocity_limit: float = 4.0  # rad/s

    @property
    def reach(self) -> float:
        return self.upper_arm + self.forearm + self.wrist_to_ee


@dataclass(frozen=True)
class IkParams:
    damping: float = 0.05          # DLS lambda
    position_weight: float = 1.0
    orientation_weight: float = 0.5
    max_position_error: float = 0.2   # m, task error clamp per step
    max_orientation_error: float = 0.5  # rad


@dataclass(frozen=True)
class RootLimits:
    linear_speed: float = 0.8    # m/s, planar
    vertical_speed: float = 0.3  # m/s
    yaw_rate: float = 1.5        # rad/s
    p_gain: float = 6.0          # 1/s, saturated-P tracking gain
    z_min: float = 0.40          # m
    z_max: float = 0.80          # m


@dataclass(frozen=True)
class HandCoords:
    """Canonical hand states, root-frame (x, y, z) for the left hand; the
    right hand mirrors y. REST/HOLD permit locomotion, READY/GRASP do not."""

    rest: tuple[float, float, float] = (0.05, 0.28, -0.15)
    hold: tuple[float, float, float] = (0.25, 0.12, 0.10)
    ready: tuple[float, float, float] = (0.30, 0.20, 0.15)
    grasp_x: float = 0.32
    squeeze_margin: float = 0.01  # m, commanded penetration per face


@dataclass(frozen=True)
class PlannerParams:
    resolution: float = 0.05        # m/cell
    footprint_radius: float = 0.35  # m, grid inflation
    arc_length: float = 0.25        # m per motion primitive
    curvatures: tuple[float, ...] = (0.0, 1.0, -1.0, 2.0, -2.0)  # 1/m
    reverse_cost_factor: float = 2.0
    rotation_step: float = np.deg2rad(10.0)  # rad, in-place rotation
    rotation_cost: float = 0.05     # per in-place step
    heading_bins: int = 36
    goal_position_tolerance: float = 0.10  # m
    goal_yaw_tolerance: float = 0.15       # rad
    collision_sample_step: float = 0.01    # m along primitives


@dataclass(frozen=True, eq=False)
class Config:
    timestep: float = 0.02             # s; 50 Hz control
    skill_rate: float = 15.0           # Hz; mid-level command rate
    gains: ImpedanceGains = field(default_factory=ImpedanceGains)
    arm: ArmGeometry = field(default_factory=ArmGeometry)
    ik: IkParams = field(default_factory=IkParams)
    root: RootLimits = field(default_factory=RootLimits)
    hands: HandCoords = field(default_factory=HandCoords)
    planner: PlannerParams = field(default_factory=PlannerParams)
    contact_stiffness: float = 500.0   # k_s, N/m
    offset_time_constant: float = 0.1  # s, low-pass on the compliant offset
    skill_timeout: float = 60.0        # s, per skill invocation
    grasp_tolerance: float = 0.06      # m, EE-to-face-center attach radius
    carry_slack: float = 0.08          # m, separation slack before a drop
    carry_slack_time: float = 0.2      # s, sustained violation before a drop

    def __post_init__(self) -> None:
        if self.timestep <= 0:
            raise ValueError("timestep must be positive")
        if self.skill_rate > 1.0 / self.timestep:
            raise ValueError("skill_rate cannot exceed the control rate")

    @property
    def control_rate(self) -> float:
        return 1.0 / self.timestep


def _build(cls, data: dict):
    kwargs = {}
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    for f in fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        sub = _FIELD_TYPES.get((cls, f.name))
        if sub is not None and isinstance(value, dict):
            kwargs[f.name] = _build(sub, value)
        elif f.name in ("curvatures", "rest", "hold", "ready"):
            kwargs[f.name] = tuple(float(v) for v in value)
        else:
            kwargs[f.name] = value
    return cls(**kwargs)


_FIELD_TYPES = {
    (Config, "gains"): ImpedanceGains,
    (Config, "arm"): ArmGeometry,
    (Config, "ik"): IkParams,
    (Config, "root"): RootLimits,
    (Config, "hands"): HandCoords,
    (Config, "planner"): PlannerParams,
}


def config_from_dict(data: dict) -> Config:
    return _build(Config, data)


def load_config(path: str | Path | None = None) -> Config:
    """Load a Config from a JSON file; None returns the defaults."""
    if path is None:
        return Config()
    with open(path) as fh:
        return config_from_dict(json.load(fh))
