"""Compliance model: spring contacts and the impedance-consistent target shift.

Under the quasi-static assumption (zero desired acceleration, velocity
tracking preserved), a constant external force f shifts the tracked target
by K_p^-1 f. Contact forces are linear springs on penetration depth, which
makes the closed-loop wall equilibrium analytic:
penetration = d * k_p / (k_p + k_s) for a target commanded d inside a wall.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ImpedanceGains, SingularGains  # noqa: F401  (SingularGains re-exported)


@dataclass(frozen=True, eq=False)
class ExternalForce:
    """World-frame force on one end-effector, Newtons."""

    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    source: str | None = None

    def __post_init__(self) -> None:
        f = np.asarray(self.force, dtype=float).reshape(3)
        if not np.all(np.isfinite(f)):
            raise ValueError("external force must be finite")
        object.__setattr__(self, "force", f)

    @staticmethod
    def zero() -> "ExternalForce":
        return ExternalForce()

    @property
    def magnitude(self) -> float:
        return float(np.linalg.norm(self.force))


@dataclass(frozen=True, eq=False)
class CompliantTarget:
    x_imp: np.ndarray
    offset: np.ndarray  # K_p^-1 f; velocity follows the reference under the quasi-static assumption


def compliant_offset(f_ext: ExternalForce, gains: ImpedanceGains) -> np.ndarray:
    """K_p^-1 f, computed by linear solve (no explicit inverse)."""
    f = f_ext.force
    if not f.any():
        return np.zeros(3)
    return np.linalg.solve(gains.k_p, f)


def compliant_target(x_ref, f_ext: ExternalForce, gains: ImpedanceGains) -> CompliantTarget:
    """Shift a reference position by the steady-state compliance offset.

    Exact pass-through when the force is zero (bit-for-bit x_ref).
    """
    x_ref = np.asarray(x_ref, dtype=float).reshape(3)
    offset = compliant_offset(f_ext, gains)
    return CompliantTarget(x_ref + offset if offset.any() else x_ref, offset)


@dataclass(frozen=True, eq=False)
class HalfSpace:
    """Planar surface (e.g. a wall face). Points with (p - point) . normal >= 0
    are outside the material; the normal points outward into free space."""

    point: np.ndarray
    normal: np.ndarray
    name: str = "wall"

    def __post_init__(self) -> None:
        n = np.asarray(self.normal, dtype=float).reshape(3)
        object.__setattr__(self, "normal", n / np.linalg.norm(n))
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float).reshape(3))

    def penetration(self, p) -> tuple[float, np.ndarray]:
        depth = -float(np.dot(np.asarray(p, dtype=float) - self.point, self.normal))
        if depth <= 0.0:
            return 0.0, self.normal
        return depth, self.normal


@dataclass(frozen=True, eq=False)
class Aabb:
    """Axis-aligned solid box. Penetration is against the nearest face."""

    center: np.ndarray
    half_extent: np.ndarray
    name: str = "box"

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        object.__setattr__(self, "half_extent", np.asarray(self.half_extent, dtype=float).reshape(3))

    def contains(self, p) -> bool:
        return bool(np.all(np.abs(np.asarray(p) - self.center) < self.half_extent))

    def penetration(self, p) -> tuple[float, np.ndarray]:
        rel = np.asarray(p, dtype=float) - self.center
        depths = self.half_extent - np.abs(rel)
        if np.any(depths <= 0.0):
            return 0.0, np.zeros(3)
        face = int(np.argmin(depths))
        normal = np.zeros(3)
        normal[face] = math.copysign(1.0, rel[face]) if rel[face] != 0.0 else 1.0
        return float(depths[face]), normal


def spring_contact_force(ee_pos, surface, k_s: float) -> ExternalForce:
    """f = k_s * penetration * outward normal; zero when not penetrating."""
    if k_s <= 0:
        raise ValueError("contact stiffness must be positive")
    depth, normal = surface.penetration(ee_pos)
    if depth <= 0.0:
        return ExternalForce.zero()
    return ExternalForce(k_s * depth * normal, source=getattr(surface, "name", None))


@dataclass
class OffsetFilter:
    """First-order low-pass on the compliant offset; bounds jerk on force
    steps without changing the steady-state value. time_constant <= 0 means
    pass-through."""

    time_constant: float = 0.1
    state: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def update(self, target: np.ndarray, dt: float) -> np.ndarray:
        if self.time_constant <= 0.0:
            self.state = np.asarray(target, dtype=float).copy()
        else:
            alpha = 1.0 - math.exp(-dt / self.time_constant)
            self.state = self.state + alpha * (np.asarray(target, dtype=float) - self.state)
        return self.state

    def copy(self) -> "OffsetFilter":
        return OffsetFilter(self.time_constant, self.state.copy())
