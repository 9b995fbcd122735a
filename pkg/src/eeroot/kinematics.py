"""Forward kinematics and damped-least-squares IK for the stand-in embodiment.

The model is a kinematic floating base (x, y, z, yaw) carrying two 7-DoF
serial arms (shoulder pitch/roll/yaw, elbow pitch, wrist roll/pitch/yaw).
All joint axes are coordinate axes of the preceding frame, which keeps the
per-joint transforms and the geometric Jacobian cheap enough for a 50 Hz
loop in pure numpy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .config import ArmGeometry, IkParams
from .geometry import Pose3, RootPose

# joint axes per arm: shoulder pitch (y), roll (x), yaw (z), elbow pitch (y),
# wrist roll (x), pitch (y), yaw (z)
_AXES = (1, 0, 2, 1, 0, 1, 2)
ARM_DOF = 7
N_JOINTS = 2 * ARM_DOF
LEFT = slice(0, ARM_DOF)
RIGHT = slice(ARM_DOF, N_JOINTS)


class NonFiniteInput(ValueError):
    """Joint vector or target contains NaN/inf."""


def _axis_rotation(axis: int, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    if axis == 0:
        return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    if axis == 1:
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _yaw_rotation(yaw: float) -> np.ndarray:
    return _axis_rotation(2, yaw)


def rotvec_from_matrix(m: np.ndarray) -> np.ndarray:
    """Rotation vector of a rotation matrix; scipy fallback near angle pi."""
    w = 0.5 * np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])
    s = np.linalg.norm(w)  # sin(angle)
    c = 0.5 * (np.trace(m) - 1.0)  # cos(angle)
    if s < 1e-8:
        if c > 0.0:
            return w  # ~identity; w is already first-order accurate
        return Rotation.from_matrix(m).as_rotvec()
    return w * (math.atan2(s, c) / s)


@dataclass(frozen=True, eq=False)
class RobotModel:
    """Precomputed chain data for both arms. Offsets row i is the fixed
    translation applied before joint i; row 7 is the wrist-to-EE offset."""

    geometry: ArmGeometry = field(default_factory=ArmGeometry)
    offsets_left: np.ndarray = field(init=False, repr=False)
    offsets_right: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        g = self.geometry
        offsets = np.zeros((ARM_DOF + 1, 3))
        offsets[0] = (0.0, g.shoulder_lateral, g.shoulder_height)
        offsets[3] = (g.upper_arm, 0.0, 0.0)
        offsets[4] = (g.forearm, 0.0, 0.0)
        offsets[7] = (g.wrist_to_ee, 0.0, 0.0)
        object.__setattr__(self, "offsets_left", offsets)
        right = offsets.copy()
        right[0, 1] = -g.shoulder_lateral
        object.__setattr__(self, "offsets_right", right)

    @property
    def reach(self) -> float:
        return self.geometry.reach

    @property
    def joint_limits(self) -> tuple[np.ndarray, np.ndarray]:
        lim = self.geometry.joint_limit
        return np.full(N_JOINTS, -lim), np.full(N_JOINTS, lim)

    def shoulder_position(self, root: RootPose, side: str) -> np.ndarray:
        """World-frame shoulder mount position."""
        offsets = self.offsets_left if side == "left" else self.offsets_right
        return root.xyz + _yaw_rotation(root.yaw) @ offsets[0]

    def home_joints(self) -> np.ndarray:
        return np.zeros(N_JOINTS)


def _fk_arm(root_r: np.ndarray, root_p: np.ndarray, offsets: np.ndarray, q: np.ndarray):
    """Chain FK for one arm: joint origins, world joint axes, EE pose arrays."""
    r = root_r
    p = root_p
    origins = np.empty((ARM_DOF + 1, 3))
    axes = np.empty((ARM_DOF, 3))
    for i in range(ARM_DOF):
        off = offsets[i]
        if off[0] != 0.0 or off[1] != 0.0 or off[2] != 0.0:
            p = p + r @ off
        origins[i] = p
        axes[i] = r[:, _AXES[i]]
        r = r @ _axis_rotation(_AXES[i], q[i])
    p = p + r @ offsets[ARM_DOF]
    origins[ARM_DOF] = p
    return origins, axes, p, r


def _fk_both(model: RobotModel, root: RootPose, q: np.ndarray):
    root_r = _yaw_rotation(root.yaw)
    root_p = root.xyz
    left = _fk_arm(root_r, root_p, model.offsets_left, q[LEFT])
    right = _fk_arm(root_r, root_p, model.offsets_right, q[RIGHT])
    return left, right


def forward_kinematics(model: RobotModel, root: RootPose, q: np.ndarray) -> tuple[Pose3, Pose3]:
    """World-frame (left, right) EE poses."""
    q = np.asarray(q, dtype=float)
    (_, _, pl, rl), (_, _, pr, rr) = _fk_both(model, root, q)
    return (
        Pose3(pl, Rotation.from_matrix(rl)),
        Pose3(pr, Rotation.from_matrix(rr)),
    )


def _arm_jacobian(origins: np.ndarray, axes: np.ndarray, ee_p: np.ndarray) -> np.ndarray:
    """6x7 geometric Jacobian for one arm (position rows 0:3, angular 3:6)."""
    jac = np.empty((6, ARM_DOF))
    lever = ee_p - origins[:ARM_DOF]
    jac[0:3] = np.cross(axes, lever).T
    jac[3:6] = axes.T
    return jac


def _root_jacobian(root: RootPose, ee_p: np.ndarray) -> np.ndarray:
    """6x4 Jacobian w.r.t. (root x, y, z, yaw)."""
    jac = np.zeros((6, 4))
    jac[0, 0] = jac[1, 1] = jac[2, 2] = 1.0
    rel = ee_p - root.xyz
    jac[0, 3] = -rel[1]  # z-hat cross rel
    jac[1, 3] = rel[0]
    jac[5, 3] = 1.0
    return jac


def jacobian(model: RobotModel, root: RootPose, q: np.ndarray, side: str) -> np.ndarray:
    """6x11 Jacobian of one EE pose w.r.t. (root x, y, z, yaw) and that arm's joints."""
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)):
        raise NonFiniteInput("joint vector contains non-finite values")
    left, right = _fk_both(model, root, q)
    origins, axes, ee_p, _ = left if side == "left" else right
    return np.hstack([_root_jacobian(root, ee_p), _arm_jacobian(origins, axes, ee_p)])


def _clamped_error(target: Pose3, p: np.ndarray, r: np.ndarray, params: IkParams) -> np.ndarray:
    """Weighted 6-vector task error (position, rotation vector), norm-clamped."""
    e_p = target.position - p
    np_norm = np.linalg.norm(e_p)
    if np_norm > params.max_position_error:
        e_p = e_p * (params.max_position_error / np_norm)
    e_r = rotvec_from_matrix(target.rotation.as_matrix() @ r.T)
    nr = np.linalg.norm(e_r)
    if nr > params.max_orientation_error:
        e_r = e_r * (params.max_orientation_error / nr)
    return np.concatenate([params.position_weight * e_p, params.orientation_weight * e_r])


def dls_ik_step(
    model: RobotModel,
    root: RootPose,
    q: np.ndarray,
    targets: tuple[Pose3, Pose3],
    params: IkParams | None = None,
    damping: float | None = None,
    max_joint_step: float | None = None,
    root_assist: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """One damped-least-squares step toward world-frame (left, right) EE targets.

    Returns (droot, dq): droot is zero unless root_assist is enabled. dq is
    clamped per joint to max_joint_step (default: velocity limit over one
    50 Hz tick) and then to the joint limits.
    """
    params = params or IkParams()
    if damping is None:
        damping = params.damping
    if damping <= 0:
        raise ValueError("damping must be positive")
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)):
        raise NonFiniteInput("joint vector contains non-finite values")
    for t in targets:
        if not (np.all(np.isfinite(t.position)) and np.all(np.isfinite(t.as_quat()))):
            raise NonFiniteInput("target pose contains non-finite values")
    if max_joint_step is None:
        max_joint_step = model.geometry.joint_velocity_limit * 0.02

    w = params.position_weight, params.orientation_weight
    left, right = _fk_both(model, root, q)
    err = np.empty(12)
    err[0:6] = _clamped_error(targets[0], left[2], left[3], params)
    err[6:12] = _clamped_error(targets[1], right[2], right[3], params)

    n_root = 4 if root_assist else 0
    jac = np.zeros((12, n_root + N_JOINTS))
    row_w = np.repeat([w[0], w[1], w[0], w[1]], 3)[:, None]
    if root_assist:
        jac[0:6, 0:4] = _root_jacobian(root, left[2])
        jac[6:12, 0:4] = _root_jacobian(root, right[2])
    jac[0:6, n_root : n_root + ARM_DOF] = _arm_jacobian(left[0], left[1], left[2])
    jac[6:12, n_root + ARM_DOF :] = _arm_jacobian(right[0], right[1], right[2])
    jac *= row_w

    jjt = jac @ jac.T
    jjt[np.diag_indices_from(jjt)] += damping * damping
    delta = jac.T @ np.linalg.solve(jjt, err)

    droot = delta[:n_root] if root_assist else np.zeros(4)
    dq = np.clip(delta[n_root:], -max_joint_step, max_joint_step)
    lo, hi = model.joint_limits
    dq = np.clip(dq, lo - q, hi - q)
    return droot, dq
