"""Canonical hand states (REST / HOLD / READY / GRASP) and their safety flags.

Each state names a pair of root-frame EE targets, mirrored in y. REST and
HOLD keep the arms tucked and permit locomotion; READY and GRASP extend the
arms and do not.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from .config import HandCoords
from .geometry import Pose3


class UnknownState(ValueError):
    """Named hand state does not exist."""


@dataclass(frozen=True)
class HandState:
    kind: str                    # "rest" | "hold" | "ready" | "grasp"
    width: float | None = None   # grasp: commanded object width, m
    height: float | None = None  # grasp: EE height above pelvis, m

    REST: ClassVar["HandState"]
    HOLD: ClassVar["HandState"]
    READY: ClassVar["HandState"]

    @staticmethod
    def grasp(width: float, height: float = 0.10) -> "HandState":
        return HandState("grasp", width=width, height=height)

    @property
    def locomotion_safe(self) -> bool:
        return self.kind in ("rest", "hold")

    def ee_targets(self, coords: HandCoords | None = None) -> tuple[Pose3, Pose3]:
        """Root-frame (left, right) EE poses for this state's canonical coordinates."""
        coords = coords or HandCoords()
        if self.kind == "rest":
            left = np.array(coords.rest)
        elif self.kind == "hold":
            left = np.array(coords.hold)
        elif self.kind == "ready":
            left = np.array(coords.ready)
        elif self.kind == "grasp":
            if self.width is None:
                raise UnknownState("grasp state requires a width")
            half = self.width / 2.0 - coords.squeeze_margin
            left = np.array([coords.grasp_x, half, self.height if self.height is not None else 0.10])
        else:
            raise UnknownState(f"unknown hand state {self.kind!r}")
        right = left * np.array([1.0, -1.0, 1.0])
        zero = np.zeros(3)
        return Pose3.from_rotvec(left, zero), Pose3.from_rotvec(right, zero)

    def label(self) -> str:
        if self.kind == "grasp":
            return f"grasp(width={self.width:.3f})"
        return self.kind

    @staticmethod
    def parse(name: str, **params) -> "HandState":
        key = name.strip().lower()
        if key == "rest":
            return HandState.REST
        if key == "hold":
            return HandState.HOLD
        if key == "ready":
            return HandState.READY
        if key == "grasp":
            return HandState.grasp(**params)
        raise UnknownState(f"unknown hand state {name!r}")


HandState.REST = HandState("rest")
HandState.HOLD = HandState("hold")
HandState.READY = HandState("ready")
