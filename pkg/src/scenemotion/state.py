"""Per-frame character state record and its flat vector layout.

A state holds joint blocks (positions, 6D rotations, velocities, and the same
joints expressed in the root frame one second ahead), a sampled root
trajectory window (past and future samples around the current frame), goal
blocks for each trajectory sample, and contact labels for five key joints.
Everything is root-relative: joint blocks in the current root frame,
trajectory samples in the previous frame's root, goal trajectory samples in
the goal's own ground frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InsufficientHistory, LengthMismatch, NonIntegerStride
from .goals import Goal
from .kinematics import (
    RootTransform,
    Skeleton,
    direction_to_root_relative,
    matrix_to_rot6d,
    planar_dir_to_frame,
    planar_to_frame,
    to_root_relative,
)

ACTIONS = ("idle", "walk", "run", "sit", "liedown")

N_CONTACTS = 5


@dataclass(frozen=True)
class StateConfig:
    joints: int = 22
    samples: int = 13  # trajectory samples per window, odd so offset 0 is included
    actions: int = 5
    window: float = 1.0  # seconds of trajectory on each side of the current frame
    fps: int = 30

    def validate(self) -> "StateConfig":
        if self.joints < 1:
            raise ValueError(f"need at least one joint, got {self.joints}")
        if self.samples < 1 or self.samples % 2 == 0:
            raise ValueError(f"trajectory sample count must be odd and >= 1, got {self.samples}")
        if self.actions < 1:
            raise ValueError(f"need at least one action, got {self.actions}")
        if self.fps < 1 or self.window <= 0:
            raise ValueError("fps must be >= 1 and window > 0")
        return self

    def to_dict(self) -> dict:
        return {
            "joints": self.joints,
            "samples": self.samples,
            "actions": self.actions,
            "window": self.window,
            "fps": self.fps,
        }

    @staticmethod
    def from_dict(d: dict) -> "StateConfig":
        return StateConfig(
            joints=int(d["joints"]),
            samples=int(d["samples"]),
            actions=int(d["actions"]),
            window=float(d.get("window", 1.0)),
            fps=int(d.get("fps", 30)),
        )


def state_dim(cfg: StateConfig) -> int:
    """Flat width: 15 floats per joint, (14 + 2*actions) per sample, 5 contacts."""
    j, t, na = cfg.joints, cfg.samples, cfg.actions
    return 15 * j + (14 + 2 * na) * t + N_CONTACTS


def field_layout(cfg: StateConfig) -> dict[str, slice]:
    """Slices of each field inside the flat vector, in serialization order."""
    j, t, na = cfg.joints, cfg.samples, cfg.actions
    widths = [
        ("jp", 3 * j),
        ("jr", 6 * j),
        ("jv", 3 * j),
        ("jp_future", 3 * j),
        ("tp", 2 * t),
        ("td", 2 * t),
        ("tp_goal", 2 * t),
        ("td_goal", 2 * t),
        ("ta", na * t),
        ("gp", 3 * t),
        ("gd", 3 * t),
        ("ga", na * t),
        ("contacts", N_CONTACTS),
    ]
    out = {}
    off = 0
    for name, w in widths:
        out[name] = slice(off, off + w)
        off += w
    assert off == state_dim(cfg)
    return out


def window_indices(cfg: StateConfig) -> np.ndarray:
    """Frame offsets of the trajectory samples, symmetric about 0.

    The window spans [-window*fps, +window*fps]; the span must divide evenly
    into samples-1 steps.
    """
    w = int(round(cfg.window * cfg.fps))
    if cfg.samples == 1:
        return np.array([0], dtype=int)
    total = 2 * w
    if total % (cfg.samples - 1) != 0:
        raise NonIntegerStride(
            f"window of {total} frames does not divide into {cfg.samples - 1} steps"
        )
    stride = total // (cfg.samples - 1)
    return np.arange(cfg.samples) * stride - w


@dataclass
class CharacterState:
    jp: np.ndarray  # (j, 3) joint positions, current root frame
    jr: np.ndarray  # (j, 6) joint rotations, 6D, current root frame
    jv: np.ndarray  # (j, 3) joint velocities, current root frame
    jp_future: np.ndarray  # (j, 3) current joints in the root frame 1s ahead
    tp: np.ndarray  # (t, 2) root trajectory positions, previous root frame
    td: np.ndarray  # (t, 2) root trajectory directions, previous root frame
    tp_goal: np.ndarray  # (t, 2) trajectory positions in the goal frame
    td_goal: np.ndarray  # (t, 2) trajectory directions in the goal frame
    ta: np.ndarray  # (t, n_a) action distribution per sample
    gp: np.ndarray  # (t, 3) goal position per sample, current root frame
    gd: np.ndarray  # (t, 3) goal direction per sample, current root frame
    ga: np.ndarray  # (t, n_a) goal action per sample, one-hot
    contacts: np.ndarray  # (5,) pelvis, feet, hands in [0, 1]

    @staticmethod
    def zeros(cfg: StateConfig) -> "CharacterState":
        j, t, na = cfg.joints, cfg.samples, cfg.actions
        return CharacterState(
            jp=np.zeros((j, 3)),
            jr=np.zeros((j, 6)),
            jv=np.zeros((j, 3)),
            jp_future=np.zeros((j, 3)),
            tp=np.zeros((t, 2)),
            td=np.zeros((t, 2)),
            tp_goal=np.zeros((t, 2)),
            td_goal=np.zeros((t, 2)),
            ta=np.zeros((t, na)),
            gp=np.zeros((t, 3)),
            gd=np.zeros((t, 3)),
            ga=np.zeros((t, na)),
            contacts=np.zeros(N_CONTACTS),
        )

    def copy(self) -> "CharacterState":
        return CharacterState(**{k: v.copy() for k, v in self.__dict__.items()})


FIELD_SHAPES = {
    "jp": ("j", 3),
    "jr": ("j", 6),
    "jv": ("j", 3),
    "jp_future": ("j", 3),
    "tp": ("t", 2),
    "td": ("t", 2),
    "tp_goal": ("t", 2),
    "td_goal": ("t", 2),
    "ta": ("t", "na"),
    "gp": ("t", 3),
    "gd": ("t", 3),
    "ga": ("t", "na"),
    "contacts": (N_CONTACTS,),
}


def _field_shape(name: str, cfg: StateConfig) -> tuple:
    dims = {"j": cfg.joints, "t": cfg.samples, "na": cfg.actions}
    return tuple(dims.get(d, d) for d in FIELD_SHAPES[name])


def flatten(state: CharacterState, cfg: StateConfig) -> np.ndarray:
    parts = []
    for name in FIELD_SHAPES:
        arr = np.asarray(getattr(state, name), dtype=float)
        want = _field_shape(name, cfg)
        if arr.shape != want:
            raise LengthMismatch(f"{name} has shape {arr.shape}, expected {want}")
        parts.append(arr.ravel())
    return np.concatenate(parts)


def unflatten(vec: np.ndarray, cfg: StateConfig) -> CharacterState:
    vec = np.asarray(vec, dtype=float).ravel()
    if vec.shape[0] != state_dim(cfg):
        raise LengthMismatch(f"flat state has {vec.shape[0]} values, expected {state_dim(cfg)}")
    layout = field_layout(cfg)
    fields = {
        name: vec[layout[name]].reshape(_field_shape(name, cfg)).copy() for name in FIELD_SHAPES
    }
    return CharacterState(**fields)


def validate_state(state: CharacterState, cfg: StateConfig, atol: float = 1e-4) -> None:
    """Raise on violated structural invariants (unit directions, one-hot ga)."""
    for name in ("td", "td_goal", "gd"):
        rows = getattr(state, name)
        norms = np.linalg.norm(rows, axis=-1)
        if np.any(np.abs(norms - 1.0) > atol):
            raise ValueError(f"{name} rows are not unit length: {norms}")
    ga = state.ga
    if np.any((ga < -atol) | (ga > 1 + atol)) or np.any(np.abs(ga.sum(axis=-1) - 1.0) > atol):
        raise ValueError("ga rows are not one-hot")
    if np.any(np.count_nonzero(ga > 0.5, axis=-1) != 1):
        raise ValueError("ga rows are not one-hot")
    c = state.contacts
    if np.any((c < -atol) | (c > 1 + atol)):
        raise ValueError("contact labels outside [0, 1]")


def one_hot(index: int, n: int) -> np.ndarray:
    if not 0 <= index < n:
        raise ValueError(f"action index {index} out of range [0, {n})")
    v = np.zeros(n)
    v[index] = 1.0
    return v


def action_index(name: str, actions: Sequence[str] = ACTIONS) -> int:
    try:
        return list(actions).index(name)
    except ValueError:
        raise ValueError(f"unknown action {name!r}, expected one of {list(actions)}") from None


@dataclass
class ClipFrame:
    """One recorded frame in world coordinates, before state assembly."""

    root: RootTransform
    joints: np.ndarray  # (j, 3) world positions
    joint_rot: np.ndarray  # (j, 3, 3) world rotation matrices
    action_row: np.ndarray  # (n_a,) soft action distribution at this frame
    scheduled_action: int  # goal-schedule action label at this frame
    contacts: np.ndarray = field(default_factory=lambda: np.zeros(N_CONTACTS))


def _clamp_index(i: int, n: int) -> int:
    return min(max(i, 0), n - 1)


def build_state(frames: Sequence[ClipFrame], i: int, goal: Goal, cfg: StateConfig) -> CharacterState:
    """Assemble the state of frame i from a recorded clip and its goal.

    Requires a full past window plus one extra frame (the trajectory is
    expressed in the previous frame's root); the future side clamps to the
    clip end.
    """
    n = len(frames)
    offsets = window_indices(cfg)
    if i < 1 or i + offsets[0] < 0:
        raise InsufficientHistory(f"frame {i} needs {max(1, -int(offsets[0]))} frames of history")
    if i >= n:
        raise IndexError(f"frame {i} out of range for clip of {n} frames")
    if frames[i].joints.shape != (cfg.joints, 3):
        raise LengthMismatch(
            f"clip has {frames[i].joints.shape[0]} joints, config wants {cfg.joints}"
        )

    cur = frames[i]
    root = cur.root
    prev_root = frames[i - 1].root
    rot = root.rotation()

    jp = to_root_relative(cur.joints, root)
    jr = np.stack([matrix_to_rot6d(rot.T @ cur.joint_rot[k]) for k in range(cfg.joints)])

    lo, hi = _clamp_index(i - 1, n), _clamp_index(i + 1, n)
    vel_world = (frames[hi].joints - frames[lo].joints) * (cfg.fps / (hi - lo))
    jv = direction_to_root_relative(vel_world, root)

    future_root = frames[_clamp_index(i + cfg.fps, n)].root
    jp_future = to_root_relative(cur.joints, future_root)

    gframe = goal.planar_frame()
    t = cfg.samples
    tp = np.zeros((t, 2))
    td = np.zeros((t, 2))
    tpg = np.zeros((t, 2))
    tdg = np.zeros((t, 2))
    ta = np.zeros((t, cfg.actions))
    ga = np.zeros((t, cfg.actions))
    for k, off in enumerate(offsets):
        s = frames[_clamp_index(i + off, n)]
        tp[k] = planar_to_frame(s.root.position, prev_root)
        td[k] = planar_dir_to_frame(s.root.forward, prev_root)
        tpg[k] = planar_to_frame(s.root.position, gframe)
        tdg[k] = planar_dir_to_frame(s.root.forward, gframe)
        ta[k] = s.action_row
        ga[k] = one_hot(s.scheduled_action, cfg.actions)

    gp = np.tile(to_root_relative(goal.position, root), (t, 1))
    gd = np.tile(direction_to_root_relative(goal.direction, root), (t, 1))

    return CharacterState(
        jp=jp, jr=jr, jv=jv, jp_future=jp_future,
        tp=tp, td=td, tp_goal=tpg, td_goal=tdg, ta=ta,
        gp=gp, gd=gd, ga=ga, contacts=np.asarray(cur.contacts, dtype=float).copy(),
    )


def set_goal_fields(state: CharacterState, goal: Goal, root: RootTransform,
                    action_idx: int, cfg: StateConfig) -> CharacterState:
    """Overwrite the goal blocks of a state with a (possibly new) goal.

    Used at generation time when the sub-goal advances along a planned path:
    gp/gd are re-expressed in the given root frame and ga switches to the
    goal's action in every sample row.
    """
    out = state.copy()
    out.gp = np.tile(to_root_relative(goal.position, root), (cfg.samples, 1))
    out.gd = np.tile(direction_to_root_relative(goal.direction, root), (cfg.samples, 1))
    out.ga = np.tile(one_hot(action_idx, cfg.actions), (cfg.samples, 1))
    return out
