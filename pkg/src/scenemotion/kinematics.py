"""Rotation representations, root-ground transforms, and skeleton definitions.

Conventions used throughout the package: the ground plane is x/z with y up,
2D ground vectors are stored as (x, z), and the character root is a 2D
position plus a unit forward direction on that plane. The local root frame
has forward mapped to +z and the right hand side mapped to +x.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRotation, NotARotation

_EPS = 1e-8


def rot6d_to_matrix(r) -> np.ndarray:
    """Decode a 6-value rotation (first two matrix columns) into a 3x3 rotation.

    Gram-Schmidt: normalize the first column, orthogonalize the second
    against it, take the cross product as the third. Scale invariant.
    """
    r = np.asarray(r, dtype=float).reshape(6)
    a1, a2 = r[:3], r[3:]
    n1 = np.linalg.norm(a1)
    if n1 < _EPS:
        raise DegenerateRotation("first column is near zero")
    b1 = a1 / n1
    a2p = a2 - np.dot(b1, a2) * b1
    n2 = np.linalg.norm(a2p)
    if n2 < _EPS:
        raise DegenerateRotation("columns are parallel or second column is near zero")
    b2 = a2p / n2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=1)


def matrix_to_rot6d(m) -> np.ndarray:
    """First two columns of a rotation matrix, checked for orthonormality."""
    m = np.asarray(m, dtype=float).reshape(3, 3)
    if not np.allclose(m.T @ m, np.eye(3), atol=1e-4) or np.linalg.det(m) < 0:
        raise NotARotation("matrix is not orthonormal with det +1")
    return m[:, :2].T.reshape(6).copy()


def yaw_matrix(forward) -> np.ndarray:
    """3x3 world rotation whose +z column is the given ground forward."""
    fx, fz = forward
    # right = (fz, -fx) keeps the frame right-handed with y up
    return np.array([[fz, 0.0, fx], [0.0, 1.0, 0.0], [-fx, 0.0, fz]])


@dataclass(frozen=True)
class RootTransform:
    """Ground-plane rigid transform: 2D position (x, z) and unit forward."""

    position: np.ndarray
    forward: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(2))
        f = np.asarray(self.forward, dtype=float).reshape(2)
        n = np.linalg.norm(f)
        if abs(n - 1.0) > 1e-6:
            if n < _EPS:
                raise DegenerateRotation("forward direction is near zero")
            f = f / n
        object.__setattr__(self, "forward", f)

    @property
    def right(self) -> np.ndarray:
        return np.array([self.forward[1], -self.forward[0]])

    def rotation(self) -> np.ndarray:
        return yaw_matrix(self.forward)


IDENTITY_ROOT = RootTransform(np.zeros(2), np.array([0.0, 1.0]))


def to_root_relative(point, root: RootTransform) -> np.ndarray:
    """Express a world point in the root frame (root at origin, forward -> +z)."""
    p = np.asarray(point, dtype=float)
    d = p[..., [0, 2]] - root.position
    local_x = d @ root.right
    local_z = d @ root.forward
    return np.stack([local_x, p[..., 1], local_z], axis=-1)


def from_root_relative(point, root: RootTransform) -> np.ndarray:
    """Inverse of :func:`to_root_relative`."""
    p = np.asarray(point, dtype=float)
    planar = np.multiply.outer(p[..., 0], root.right) + np.multiply.outer(p[..., 2], root.forward)
    out = np.empty(p.shape)
    out[..., 0] = planar[..., 0] + root.position[0]
    out[..., 1] = p[..., 1]
    out[..., 2] = planar[..., 1] + root.position[1]
    return out


def direction_to_root_relative(direction, root: RootTransform) -> np.ndarray:
    """Rotate a world 3D direction into the root frame (no translation)."""
    d = np.asarray(direction, dtype=float)
    planar = d[..., [0, 2]]
    return np.stack([planar @ root.right, d[..., 1], planar @ root.forward], axis=-1)


def planar_to_frame(point2d, frame: RootTransform) -> np.ndarray:
    """Express a ground point in a 2D frame: (right component, forward component)."""
    d = np.asarray(point2d, dtype=float) - frame.position
    return np.stack([d @ frame.right, d @ frame.forward], axis=-1)


def planar_dir_to_frame(dir2d, frame: RootTransform) -> np.ndarray:
    d = np.asarray(dir2d, dtype=float)
    return np.stack([d @ frame.right, d @ frame.forward], axis=-1)


def root_delta(prev: RootTransform, cur: RootTransform):
    """Express `cur` in `prev`'s frame: (relative position 2D, relative forward 2D)."""
    rel_pos = planar_to_frame(cur.position, prev)
    rel_fwd = planar_dir_to_frame(cur.forward, prev)
    return rel_pos, rel_fwd


def apply_root_delta(prev: RootTransform, rel_pos, rel_fwd) -> RootTransform:
    """Compose `prev` with a delta produced by :func:`root_delta`."""
    rel_pos = np.asarray(rel_pos, dtype=float)
    rel_fwd = np.asarray(rel_fwd, dtype=float)
    pos = prev.position + rel_pos[0] * prev.right + rel_pos[1] * prev.forward
    fwd = rel_fwd[0] * prev.right + rel_fwd[1] * prev.forward
    n = np.linalg.norm(fwd)
    if n < _EPS:
        fwd = prev.forward
    else:
        fwd = fwd / n
    return RootTransform(pos, fwd)


@dataclass
class Skeleton:
    """Stick-figure skeleton: joint names, parent index per joint, rest offsets (m).

    Parent index -1 marks the root (pelvis). `key_joints` maps the five
    contact-relevant joints (pelvis, feet, hands) onto joint indices.
    """

    names: list
    parents: list
    offsets: np.ndarray
    key_joints: dict = field(default_factory=dict)

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, dtype=float).reshape(len(self.names), 3)
        if len(self.parents) != len(self.names):
            raise ValueError("parents and names length mismatch")
        if self.joint_count < 1:
            raise ValueError("skeleton needs at least one joint")
        for i, p in enumerate(self.parents):
            if p >= i and not (i == 0 and p < 0):
                raise ValueError("parent indices must form a tree (parent < child)")

    @property
    def joint_count(self) -> int:
        return len(self.names)

    def rest_positions(self) -> np.ndarray:
        """Joint positions of the rest pose, pelvis at the origin."""
        pos = np.zeros((self.joint_count, 3))
        for i, p in enumerate(self.parents):
            pos[i] = self.offsets[i] if p < 0 else pos[p] + self.offsets[i]
        return pos

    def chain_to(self, joint: int) -> list:
        """Joint indices from the root down to `joint`, inclusive."""
        chain = [joint]
        while self.parents[chain[-1]] >= 0:
            chain.append(self.parents[chain[-1]])
        return chain[::-1]

    def to_json(self) -> str:
        return json.dumps(
            {
                "joints": [
                    {"name": n, "parent": p, "offset": list(map(float, o))}
                    for n, p, o in zip(self.names, self.parents, self.offsets)
                ],
                "keyJoints": self.key_joints,
            },
            indent=1,
        )

    @staticmethod
    def from_json(text: str) -> "Skeleton":
        data = json.loads(text)
        joints = data["joints"]
        return Skeleton(
            names=[j["name"] for j in joints],
            parents=[j["parent"] for j in joints],
            offsets=np.array([j["offset"] for j in joints], dtype=float),
            key_joints=dict(data.get("keyJoints", {})),
        )


def default_skeleton() -> Skeleton:
    """22-joint skeleton (SMPL-like body topology) with meter-scale offsets."""
    rows = [
        ("pelvis", -1, (0.0, 0.95, 0.0)),
        ("l_hip", 0, (0.10, -0.06, 0.0)),
        ("r_hip", 0, (-0.10, -0.06, 0.0)),
        ("spine1", 0, (0.0, 0.12, 0.0)),
        ("l_knee", 1, (0.0, -0.40, 0.0)),
        ("r_knee", 2, (0.0, -0.40, 0.0)),
        ("spine2", 3, (0.0, 0.13, 0.0)),
        ("l_ankle", 4, (0.0, -0.40, 0.0)),
        ("r_ankle", 5, (0.0, -0.40, 0.0)),
        ("spine3", 6, (0.0, 0.13, 0.0)),
        ("l_foot", 7, (0.0, -0.06, 0.12)),
        ("r_foot", 8, (0.0, -0.06, 0.12)),
        ("neck", 9, (0.0, 0.10, 0.0)),
        ("l_collar", 9, (0.07, 0.05, 0.0)),
        ("r_collar", 9, (-0.07, 0.05, 0.0)),
        ("head", 12, (0.0, 0.15, 0.0)),
        ("l_shoulder", 13, (0.12, 0.0, 0.0)),
        ("r_shoulder", 14, (-0.12, 0.0, 0.0)),
        ("l_elbow", 16, (0.06, -0.26, 0.0)),
        ("r_elbow", 17, (-0.06, -0.26, 0.0)),
        ("l_wrist", 18, (0.02, -0.25, 0.0)),
        ("r_wrist", 19, (-0.02, -0.25, 0.0)),
    ]
    return Skeleton(
        names=[s[0] for s in rows],
        parents=[s[1] for s in rows],
        offsets=np.array([s[2] for s in rows]),
        key_joints={"pelvis": 0, "l_foot": 10, "r_foot": 11, "l_hand": 20, "r_hand": 21},
    )


def tiny_skeleton() -> Skeleton:
    """15-joint skeleton used by the fast test preset."""
    rows = [
        ("pelvis", -1, (0.0, 0.90, 0.0)),
        ("l_hip", 0, (0.10, -0.05, 0.0)),
        ("l_knee", 1, (0.0, -0.42, 0.0)),
        ("l_foot", 2, (0.0, -0.43, 0.08)),
        ("r_hip", 0, (-0.10, -0.05, 0.0)),
        ("r_knee", 4, (0.0, -0.42, 0.0)),
        ("r_foot", 5, (0.0, -0.43, 0.08)),
        ("spine", 0, (0.0, 0.30, 0.0)),
        ("head", 7, (0.0, 0.30, 0.0)),
        ("l_shoulder", 7, (0.16, 0.0, 0.0)),
        ("l_elbow", 9, (0.04, -0.28, 0.0)),
        ("l_hand", 10, (0.02, -0.26, 0.0)),
        ("r_shoulder", 7, (-0.16, 0.0, 0.0)),
        ("r_elbow", 12, (-0.04, -0.28, 0.0)),
        ("r_hand", 13, (-0.02, -0.26, 0.0)),
    ]
    return Skeleton(
        names=[s[0] for s in rows],
        parents=[s[1] for s in rows],
        offsets=np.array([s[2] for s in rows]),
        key_joints={"pelvis": 0, "l_foot": 3, "r_foot": 6, "l_hand": 11, "r_hand": 14},
    )
