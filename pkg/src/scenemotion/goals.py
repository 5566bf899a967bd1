"""Interaction goal: a position, a unit facing direction, and an action label."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ZeroDirection
from .kinematics import RootTransform


@dataclass(frozen=True)
class Goal:
    position: np.ndarray  # (3,) meters
    direction: np.ndarray  # (3,) unit
    action: str = "sit"

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        d = np.asarray(self.direction, dtype=float).reshape(3)
        n = np.linalg.norm(d)
        if n < 1e-8:
            raise ZeroDirection("goal direction is near zero")
        object.__setattr__(self, "direction", d / n)

    def planar_frame(self) -> RootTransform:
        """Ground-plane frame anchored at the goal, forward = planar direction.

        Falls back to +z when the direction is vertical.
        """
        f = self.direction[[0, 2]]
        n = np.linalg.norm(f)
        if n < 1e-6:
            f = np.array([0.0, 1.0])
        else:
            f = f / n
        return RootTransform(self.position[[0, 2]], f)

    def to_dict(self) -> dict:
        return {
            "position": [float(v) for v in self.position],
            "direction": [float(v) for v in self.direction],
            "action": self.action,
        }

    @staticmethod
    def from_dict(d: dict) -> "Goal":
        return Goal(np.array(d["position"]), np.array(d["direction"]), d.get("action", "sit"))
