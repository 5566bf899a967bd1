"""Clip augmentation: swap or scale the interaction object, keep contacts.

Contacts of five key joints (pelvis, feet, hands) are detected by distance
and speed thresholds against the object surface, projected onto the edited
object, and re-satisfied with a cyclic-coordinate-descent IK pass per limb.
The pelvis is handled by shifting the body vertically. Frames bordering the
edited spans ease in and out over a quarter second.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import LengthMismatch
from .goals import Goal
from .kinematics import Skeleton
from .voxel import Box, SceneObject

KEY_JOINT_NAMES = ("pelvis", "l_foot", "r_foot", "l_hand", "r_hand")

CONTACT_DIST = 0.05  # m
CONTACT_SPEED = 0.15  # m/s
EASE_SECONDS = 0.25


@dataclass
class ContactFrame:
    flags: np.ndarray  # (5,) bool, KEY_JOINT_NAMES order
    points: np.ndarray  # (5, 3) object-frame contact points, valid where flagged

    def any(self) -> bool:
        return bool(self.flags.any())


def nearest_surface_point_obj(obj: SceneObject, p_obj: np.ndarray) -> np.ndarray:
    """Closest point over all box surfaces, everything in the object frame."""
    best, best_d = None, np.inf
    for b in obj.boxes:
        q = b.nearest_surface_point(p_obj)
        d = np.linalg.norm(q - p_obj)
        if d < best_d:
            best, best_d = q, d
    return best


def surface_distance(obj: SceneObject, p_world: np.ndarray) -> float:
    p_obj = obj.to_object(p_world)
    return float(np.linalg.norm(nearest_surface_point_obj(obj, p_obj) - p_obj))


def detect_contacts(joints: np.ndarray, velocities: np.ndarray, skeleton: Skeleton,
                    obj: SceneObject, dist_thresh: float = CONTACT_DIST,
                    speed_thresh: float = CONTACT_SPEED) -> ContactFrame:
    """Key joints close to the surface and nearly still are in contact."""
    flags = np.zeros(len(KEY_JOINT_NAMES), dtype=bool)
    points = np.zeros((len(KEY_JOINT_NAMES), 3))
    for k, name in enumerate(KEY_JOINT_NAMES):
        j = skeleton.key_joints[name]
        p_obj = obj.to_object(joints[j])
        q = nearest_surface_point_obj(obj, p_obj)
        points[k] = q
        dist = np.linalg.norm(q - p_obj)
        speed = np.linalg.norm(velocities[j])
        flags[k] = dist < dist_thresh and speed < speed_thresh
    return ContactFrame(flags=flags, points=points)


def project_contacts(contacts: ContactFrame, new_obj: SceneObject) -> ContactFrame:
    """Re-attach contact points to the nearest surface of the edited object."""
    points = contacts.points.copy()
    for k in range(len(KEY_JOINT_NAMES)):
        if contacts.flags[k]:
            points[k] = nearest_surface_point_obj(new_obj, contacts.points[k])
    return ContactFrame(flags=contacts.flags.copy(), points=points)


# ---------------------------------------------------------------------------
# CCD IK


@dataclass
class IKChain:
    base: np.ndarray  # (3,) fixed world position of the chain base
    offsets: list  # bone vectors parent->child at initialization
    rotations: list  # per-joint local (3, 3), applied cumulatively down the chain

    def __post_init__(self):
        for o in self.offsets:
            if np.linalg.norm(o) <= 0:
                raise LengthMismatch("chain has a zero-length bone")

    @property
    def bone_lengths(self) -> np.ndarray:
        return np.array([np.linalg.norm(o) for o in self.offsets])


def chain_from_positions(points: np.ndarray) -> IKChain:
    points = np.asarray(points, dtype=float)
    offsets = [points[i + 1] - points[i] for i in range(len(points) - 1)]
    return IKChain(base=points[0].copy(), offsets=offsets,
                   rotations=[np.eye(3) for _ in offsets])


def fk_positions(chain: IKChain) -> np.ndarray:
    """(n+1, 3) joint positions from base to effector."""
    pts = [chain.base]
    rot = np.eye(3)
    for r, o in zip(chain.rotations, chain.offsets):
        rot = rot @ r
        pts.append(pts[-1] + rot @ o)
    return np.array(pts)


def _axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    k = np.array([[0, -axis[2], axis[1]],
                  [axis[2], 0, -axis[0]],
                  [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def ccd_ik(chain: IKChain, target: np.ndarray, max_iters: int = 100,
           tol: float = 1e-3, max_step: float = 0.2) -> tuple[IKChain, bool, int]:
    """Classic CCD: sweep joints effector-to-base, each rotating the tail
    toward the target, rotation per joint per sweep clamped to max_step rad.

    Unreachable targets straighten the chain toward the target and come back
    with converged=False.
    """
    target = np.asarray(target, dtype=float)
    chain = IKChain(chain.base.copy(), [o.copy() for o in chain.offsets],
                    [r.copy() for r in chain.rotations])
    pts = fk_positions(chain)
    if np.linalg.norm(pts[-1] - target) <= tol:
        return chain, True, 0
    n = len(chain.offsets)
    for it in range(1, max_iters + 1):
        for k in range(n - 1, -1, -1):
            pivot = pts[k]
            u = pts[-1] - pivot
            v = target - pivot
            nu, nv = np.linalg.norm(u), np.linalg.norm(v)
            if nu < 1e-12 or nv < 1e-12:
                continue
            axis = np.cross(u, v)
            na = np.linalg.norm(axis)
            if na < 1e-14:
                continue
            angle = min(float(np.arctan2(na, u @ v)), max_step)
            q = _axis_angle(axis / na, angle)
            # fold the world-frame rotation into joint k's local rotation
            prefix = np.eye(3)
            for m in range(k):
                prefix = prefix @ chain.rotations[m]
            chain.rotations[k] = prefix.T @ q @ prefix @ chain.rotations[k]
            pts[k + 1:] = pivot + (pts[k + 1:] - pivot) @ q.T
        if np.linalg.norm(pts[-1] - target) <= tol:
            return chain, True, it
    return chain, False, max_iters


# ---------------------------------------------------------------------------
# object edits


@dataclass(frozen=True)
class ObjectEdit:
    kind: str  # "scale" or "switch"
    factors: np.ndarray | None = None  # (3,) per-axis, for scale
    new_object: SceneObject | None = None  # for switch

    @staticmethod
    def scale(factors) -> "ObjectEdit":
        return ObjectEdit("scale", factors=np.asarray(factors, dtype=float).reshape(3))

    @staticmethod
    def switch(obj: SceneObject) -> "ObjectEdit":
        return ObjectEdit("switch", new_object=obj)


def scale_object(obj: SceneObject, factors: np.ndarray) -> SceneObject:
    """Per-axis scale in the object frame (boxes assumed axis-aligned there)."""
    f = np.asarray(factors, dtype=float).reshape(3)
    boxes = [Box(b.center * f, b.half_extents * f, b.yaw) for b in obj.boxes]
    goals = [Goal(g.position * f, g.direction, g.action) for g in obj.goals]
    return SceneObject(id=obj.id, category=obj.category, boxes=boxes,
                       position=obj.position.copy(), yaw=obj.yaw, goals=goals)


def apply_edit(obj: SceneObject, edit: ObjectEdit) -> SceneObject:
    if edit.kind == "scale":
        return scale_object(obj, edit.factors)
    if edit.kind == "switch":
        new = edit.new_object
        return SceneObject(id=obj.id, category=new.category, boxes=new.boxes,
                           position=obj.position.copy(), yaw=obj.yaw, goals=new.goals)
    raise ValueError(f"unknown edit kind {edit.kind!r}")


def limb_chain_indices(skeleton: Skeleton, key_name: str) -> list[int]:
    """Joint indices from the limb attachment (child of a branch joint) out
    to the key joint."""
    children: dict[int, int] = {}
    for c, p in enumerate(skeleton.parents):
        if p >= 0:
            children[p] = children.get(p, 0) + 1
    j = skeleton.key_joints[key_name]
    chain = [j]
    while True:
        p = skeleton.parents[chain[0]]
        if p < 0 or p == 0 or children.get(p, 0) > 1:
            break
        chain.insert(0, p)
    return chain


def _smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3 - 2 * u)


def _contact_spans(flags: np.ndarray) -> list[tuple[int, int]]:
    """Maximal [start, end] runs of frames with any contact."""
    spans = []
    start = None
    for i, f in enumerate(flags):
        if f and start is None:
            start = i
        elif not f and start is not None:
            spans.append((start, i - 1))
            start = None
    if start is not None:
        spans.append((start, len(flags) - 1))
    return spans


def augment_clip(clip, edit: ObjectEdit, rng: np.random.Generator | None = None):
    """Return a copy of a recorded clip with its object edited and contacts kept.

    clip is a dataset.RawClip; the return value is the same type. The object
    is scaled or switched, contact points are projected to the new surface,
    the pelvis is height-shifted, limbs are re-solved with CCD IK, and poses
    ease in and out of the edited spans.
    """
    obj = clip.obj
    if obj is None:
        raise ValueError("clip has no interaction object to edit")
    skel = clip.skeleton
    new_obj = apply_edit(obj, edit)
    n = len(clip.frames)
    fps = clip.fps
    joints = np.stack([f.joints for f in clip.frames])  # (n, j, 3)

    vel = np.zeros_like(joints)
    vel[1:-1] = (joints[2:] - joints[:-2]) * (fps / 2.0)
    if n > 1:
        vel[0] = (joints[1] - joints[0]) * fps
        vel[-1] = (joints[-1] - joints[-2]) * fps

    contacts = [detect_contacts(joints[i], vel[i], skel, obj) for i in range(n)]
    any_contact = np.array([c.any() for c in contacts])
    edited = joints.copy()
    rot_deltas = [dict() for _ in range(n)]  # joint -> (3,3) world rotation applied

    for i in range(n):
        if not any_contact[i]:
            continue
        proj = project_contacts(contacts[i], new_obj)
        targets_world = {}
        for k, name in enumerate(KEY_JOINT_NAMES):
            if proj.flags[k]:
                targets_world[name] = new_obj.to_world(proj.points[k])
        if "pelvis" in targets_world:
            dy = targets_world["pelvis"][1] - edited[i, skel.key_joints["pelvis"], 1]
            edited[i, :, 1] += dy
        for name, target in targets_world.items():
            if name == "pelvis":
                continue
            idx = limb_chain_indices(skel, name)
            if len(idx) < 2:
                continue
            chain = chain_from_positions(edited[i, idx])
            solved, _, _ = ccd_ik(chain, target)
            new_pts = fk_positions(solved)
            old_pts = edited[i, idx].copy()
            edited[i, idx] = new_pts
            for b in range(len(idx) - 1):
                u = old_pts[b + 1] - old_pts[b]
                v = new_pts[b + 1] - new_pts[b]
                rot_deltas[i][idx[b]] = _align_rotation(u, v)

    # ease the pose offset in and out around edited spans
    zone = max(1, int(round(EASE_SECONDS * fps)))
    final = edited.copy()
    weight = np.where(any_contact, 1.0, 0.0)
    for (s, e) in _contact_spans(any_contact):
        for f in range(max(0, s - zone), s):
            w = float(_smoothstep(np.array(1.0 - (s - f) / zone)))
            if w > weight[f]:
                weight[f] = w
                final[f] = joints[f] + w * (edited[s] - joints[s])
        for f in range(e + 1, min(n, e + 1 + zone)):
            w = float(_smoothstep(np.array(1.0 - (f - e) / zone)))
            if w > weight[f]:
                weight[f] = w
                final[f] = joints[f] + w * (edited[e] - joints[e])

    new_frames = []
    for i, frame in enumerate(clip.frames):
        jr = frame.joint_rot.copy()
        for j, dq in rot_deltas[i].items():
            jr[j] = dq @ jr[j]
        new_frames.append(replace(frame, joints=final[i], joint_rot=jr))

    new_goal = clip.goal
    if clip.goal is not None and new_obj.goals:
        wg = new_obj.world_goals()
        dists = [np.linalg.norm(g.position - clip.goal.position) for g in wg]
        g = wg[int(np.argmin(dists))]
        new_goal = Goal(g.position, g.direction, clip.goal.action)

    return replace(clip, frames=new_frames, obj=new_obj, goal=new_goal)


def _align_rotation(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Minimal rotation taking direction u to direction v."""
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < 1e-12 or nv < 1e-12:
        return np.eye(3)
    a, b = u / nu, v / nv
    axis = np.cross(a, b)
    na = np.linalg.norm(axis)
    if na < 1e-12:
        if a @ b > 0:
            return np.eye(3)
        # antiparallel: half-turn about any axis perpendicular to a
        e = np.eye(3)[int(np.argmin(np.abs(a)))]
        n = np.cross(a, e)
        n /= np.linalg.norm(n)
        return 2 * np.outer(n, n) - np.eye(3)
    return _axis_angle(axis / na, float(np.arctan2(na, a @ b)))
