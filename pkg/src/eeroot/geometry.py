"""Pose algebra and the 16-number end-effector/root command encoding.

World frame: x forward, y left, z up. The floating base is commanded as
(x, y, z, yaw); end-effector targets are expressed in the root frame and
rotated into the world by the root yaw only (base pitch/roll are always
zero in this stack).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

COMMAND_DIM = 16  # 4 root + 6 left EE + 6 right EE

_TWO_PI = 2.0 * math.pi


def wrap_yaw(angle: float) -> float:
    """Wrap an angle to (-pi, pi]. Already-wrapped values pass through unchanged."""
    if -math.pi < angle <= math.pi:
        return float(angle)
    return math.pi - (math.pi - angle) % _TWO_PI


def geodesic_angle(a: Rotation, b: Rotation) -> float:
    """Angle of the relative rotation between two orientations, radians in [0, pi]."""
    return float((a * b.inv()).magnitude())


@dataclass(frozen=True, eq=False)
class Pose3:
    """Rigid-body pose: position in meters plus a unit-quaternion orientation.

    Orientations serialize as rotation vectors (axis * angle, radians). A pose
    built from a rotation vector remembers it, so encoding is bit-exact for
    round-trips; poses built any other way compute the vector on demand.
    """

    position: np.ndarray
    rotation: Rotation
    _rotvec: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))

    @staticmethod
    def identity() -> "Pose3":
        return Pose3(np.zeros(3), Rotation.identity())

    @classmethod
    def from_rotvec(cls, position, rotvec) -> "Pose3":
        rv = np.asarray(rotvec, dtype=float).reshape(3).copy()
        return cls(position, Rotation.from_rotvec(rv), rv)

    @classmethod
    def from_quat(cls, position, quat) -> "Pose3":
        """Build from an (x, y, z, w) quaternion; rejects norms off unit by > 1e-9."""
        q = np.asarray(quat, dtype=float).reshape(4)
        norm = float(np.linalg.norm(q))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"quaternion norm {norm} deviates from 1 by more than 1e-9")
        return cls(position, Rotation.from_quat(q / norm))

    @classmethod
    def from_matrix(cls, matrix) -> "Pose3":
        m = np.asarray(matrix, dtype=float)
        return cls(m[:3, 3], Rotation.from_matrix(m[:3, :3]))

    def as_rotvec(self) -> np.ndarray:
        if self._rotvec is not None:
            return self._rotvec.copy()
        return self.rotation.as_rotvec()

    def as_quat(self) -> np.ndarray:
        return self.rotation.as_quat()

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous transform."""
        m = np.eye(4)
        m[:3, :3] = self.rotation.as_matrix()
        m[:3, 3] = self.position
        return m

    def inverse(self) -> "Pose3":
        inv = self.rotation.inv()
        return Pose3(-inv.apply(self.position), inv)

    def apply(self, point) -> np.ndarray:
        """Map a point from this pose's frame into the parent frame."""
        return self.position + self.rotation.apply(np.asarray(point, dtype=float))


def compose(parent: Pose3, child: Pose3) -> Pose3:
    """parent.child frame composition (associative; identity is neutral)."""
    return Pose3(
        parent.position + parent.rotation.apply(child.position),
        parent.rotation * child.rotation,
    )


@dataclass(frozen=True)
class RootPose:
    """Floating-base command: world x, y (m), pelvis height z (m), yaw (rad).

    Yaw is wrapped to (-pi, pi] at construction. z limits are enforced by the
    controller (see Config.root_z_range), not by this value type.
    """

    x: float = 0.0
    y: float = 0.0
    z: float = 0.7
    yaw: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "yaw", wrap_yaw(self.yaw))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def xyz(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def as_pose(self) -> Pose3:
        return Pose3(self.xyz, Rotation.from_euler("z", self.yaw))

    def clamped_z(self, z_min: float, z_max: float) -> "RootPose":
        return RootPose(self.x, self.y, min(max(self.z, z_min), z_max), self.yaw)


def ee_to_world(root: RootPose, ee_in_root: Pose3) -> Pose3:
    """Root-frame EE pose -> world frame (yaw rotation about z, then translate)."""
    rz = Rotation.from_euler("z", root.yaw)
    return Pose3(root.xyz + rz.apply(ee_in_root.position), rz * ee_in_root.rotation)


def world_to_ee(root: RootPose, ee_world: Pose3) -> Pose3:
    """Inverse of ee_to_world."""
    rz_inv = Rotation.from_euler("z", -root.yaw)
    return Pose3(rz_inv.apply(ee_world.position - root.xyz), rz_inv * ee_world.rotation)


@dataclass(frozen=True, eq=False)
class EeRootCommand:
    """The 16-dim task-space command: root pose plus both EE pose targets.

    EE targets live in the root frame; the root target lives in the world
    frame. Flat layout: [x, y, z, yaw, L pos (3), L rotvec (3), R pos (3),
    R rotvec (3)].
    """

    root: RootPose
    ee_left: Pose3
    ee_right: Pose3

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [
                [self.root.x, self.root.y, self.root.z, self.root.yaw],
                self.ee_left.position,
                self.ee_left.as_rotvec(),
                self.ee_right.position,
                self.ee_right.as_rotvec(),
            ]
        )

    @classmethod
    def from_vector(cls, vec) -> "EeRootCommand":
        v = np.asarray(vec, dtype=float).ravel()
        if v.shape != (COMMAND_DIM,):
            raise ValueError(f"EE-root command must have exactly {COMMAND_DIM} numbers, got {v.shape}")
        return cls(
            root=RootPose(v[0], v[1], v[2], v[3]),
            ee_left=Pose3.from_rotvec(v[4:7], v[7:10]),
            ee_right=Pose3.from_rotvec(v[10:13], v[13:16]),
        )

    def with_root(self, root: RootPose) -> "EeRootCommand":
        return EeRootCommand(root, self.ee_left, self.ee_right)

    def with_hands(self, ee_left: Pose3, ee_right: Pose3) -> "EeRootCommand":
        return EeRootCommand(self.root, ee_left, ee_right)
