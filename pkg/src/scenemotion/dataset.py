"""Synthetic motion corpus: procedural clips, file formats, statistics.

The generator scripts a stick character that idles, walks or runs along
paths, and sits or lies down on labeled objects. Gait comes from phase
sinusoids with style-seed-dependent amplitudes, so different seeds give
measurably different poses while every frame stays kinematically coherent
with the state features (root-relative joints, trajectory windows, goals,
contacts).

Clip files are one JSON header line plus a raw little-endian float32 payload
of flattened states; round-trips are bit-exact.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptHeader, EmptyDataset, LengthMismatch, NoGoal, SceneMotionError
from .goals import Goal
from .planner import NavPath, next_subgoal, plan_path
from .kinematics import (
    RootTransform,
    Skeleton,
    apply_root_delta,
    from_root_relative,
)
from .state import (
    ACTIONS,
    CharacterState,
    ClipFrame,
    StateConfig,
    action_index,
    build_state,
    flatten,
    state_dim,
    unflatten,
    window_indices,
)
from .voxel import Box, Scene, SceneObject, encode_relative, empty_grid_flat, flatten_grid, voxelize_object

CLIP_FORMAT = "scenemotion-clip"


@dataclass
class RawClip:
    """World-frame recording before state assembly."""

    fps: int
    skeleton: Skeleton
    frames: list[ClipFrame]
    obj: SceneObject | None = None
    goal: Goal | None = None
    # optional per-frame goal presentation (sub-goal view); falls back to goal
    goal_schedule: list[Goal] | None = None


@dataclass
class MotionClip:
    cfg: StateConfig
    fps: int
    flats: np.ndarray  # (F, dim) float32 flattened states
    actions: list[int]  # per-frame scheduled action labels
    initial_root: RootTransform  # root of the frame preceding flats[0]
    obj: SceneObject | None = None
    goal: Goal | None = None

    def __post_init__(self):
        if self.flats.ndim != 2 or self.flats.shape[1] != state_dim(self.cfg):
            raise LengthMismatch(
                f"clip payload {self.flats.shape} does not match dim {state_dim(self.cfg)}"
            )

    def __len__(self) -> int:
        return self.flats.shape[0]

    def states(self) -> list[CharacterState]:
        return [unflatten(row, self.cfg) for row in self.flats.astype(float)]

    def roots(self) -> list[RootTransform]:
        """Per-frame roots recovered by folding the trajectory center deltas."""
        layout_mid = self.cfg.samples // 2
        roots = []
        cur = self.initial_root
        for row in self.flats.astype(float):
            s = unflatten(row, self.cfg)
            cur = apply_root_delta(cur, s.tp[layout_mid], s.td[layout_mid])
            roots.append(cur)
        return roots


def clip_from_raw(raw: RawClip, cfg: StateConfig) -> MotionClip:
    if raw.goal is None:
        raise NoGoal("raw clip carries no goal")
    w = -int(window_indices(cfg)[0])
    first = max(1, w)
    if len(raw.frames) <= first:
        raise LengthMismatch(
            f"clip has {len(raw.frames)} frames, needs more than {first} for one state"
        )

    def goal_at(i: int) -> Goal:
        if raw.goal_schedule is not None:
            return raw.goal_schedule[i]
        return raw.goal

    flats = np.stack([
        flatten(build_state(raw.frames, i, goal_at(i), cfg), cfg)
        for i in range(first, len(raw.frames))
    ]).astype(np.float32)
    return MotionClip(
        cfg=cfg,
        fps=raw.fps,
        flats=flats,
        actions=[raw.frames[i].scheduled_action for i in range(first, len(raw.frames))],
        initial_root=raw.frames[first - 1].root,
        obj=raw.obj,
        goal=raw.goal,
    )


# ---------------------------------------------------------------------------
# clip files


def write_clip(clip: MotionClip, path: str) -> None:
    header = {
        "format": CLIP_FORMAT,
        "version": 1,
        "config": clip.cfg.to_dict(),
        "fps": clip.fps,
        "frameCount": len(clip),
        "actions": [int(a) for a in clip.actions],
        "initialRoot": {
            "position": [float(v) for v in clip.initial_root.position],
            "forward": [float(v) for v in clip.initial_root.forward],
        },
        "object": None if clip.obj is None else clip.obj.to_dict(),
        "goal": None if clip.goal is None else clip.goal.to_dict(),
    }
    payload = np.ascontiguousarray(clip.flats, dtype="<f4").tobytes()
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(json.dumps(header).encode() + b"\n")
        f.write(payload)
    os.replace(tmp, path)


def read_clip(path: str) -> MotionClip:
    with open(path, "rb") as f:
        line = f.readline()
        blob = f.read()
    try:
        header = json.loads(line.decode())
        if header.get("format") != CLIP_FORMAT:
            raise CorruptHeader(f"{path}: not a clip file")
        cfg = StateConfig.from_dict(header["config"])
        frames = int(header["frameCount"])
        actions = [int(a) for a in header["actions"]]
        root = RootTransform(np.array(header["initialRoot"]["position"]),
                             np.array(header["initialRoot"]["forward"]))
        obj = None if header["object"] is None else SceneObject.from_dict(header["object"])
        goal = None if header["goal"] is None else Goal.from_dict(header["goal"])
    except (ValueError, KeyError, TypeError) as e:
        raise CorruptHeader(f"{path}: bad clip header: {e}") from None
    dim = state_dim(cfg)
    if len(blob) != frames * dim * 4:
        raise LengthMismatch(
            f"{path}: payload {len(blob)} bytes, header says {frames}x{dim} floats"
        )
    flats = np.frombuffer(blob, dtype="<f4").reshape(frames, dim).copy()
    if len(actions) != frames:
        raise CorruptHeader(f"{path}: {len(actions)} action labels for {frames} frames")
    return MotionClip(cfg=cfg, fps=int(header["fps"]), flats=flats, actions=actions,
                      initial_root=root, obj=obj, goal=goal)


def compute_stats(clips: list[MotionClip]) -> tuple[np.ndarray, np.ndarray]:
    """Population mean/std over all frames; constant features get std 1."""
    if not clips:
        raise EmptyDataset("no clips")
    rows = np.concatenate([c.flats.astype(float) for c in clips])
    if rows.shape[0] == 0:
        raise EmptyDataset("clips contain no frames")
    mean = rows.mean(axis=0)
    std = rows.std(axis=0)
    std[std < 1e-8] = 1.0
    return mean, std


@dataclass
class DatasetManifest:
    cfg: StateConfig
    fps: int
    clip_files: list[str]
    mean: np.ndarray
    std: np.ndarray
    actions: tuple = ACTIONS

    def save(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump({
                "config": self.cfg.to_dict(),
                "fps": self.fps,
                "clips": self.clip_files,
                "mean": [float(v) for v in self.mean],
                "std": [float(v) for v in self.std],
                "actions": list(self.actions),
            }, f)

    @staticmethod
    def load(path: str) -> "DatasetManifest":
        with open(path) as f:
            try:
                d = json.load(f)
                return DatasetManifest(
                    cfg=StateConfig.from_dict(d["config"]),
                    fps=int(d["fps"]),
                    clip_files=list(d["clips"]),
                    mean=np.array(d["mean"], dtype=float),
                    std=np.array(d["std"], dtype=float),
                    actions=tuple(d["actions"]),
                )
            except (ValueError, KeyError, TypeError) as e:
                raise CorruptHeader(f"{path}: bad manifest: {e}") from None

    def load_clips(self, base_dir: str) -> list[MotionClip]:
        return [read_clip(os.path.join(base_dir, name)) for name in self.clip_files]


# ---------------------------------------------------------------------------
# procedural objects and scenes


def make_chair(rng: np.random.Generator | None = None, oid: str = "chair") -> SceneObject:
    r = rng or np.random.default_rng(0)
    w = 0.22 * r.uniform(0.9, 1.15)
    seat_h = 0.44 * r.uniform(0.9, 1.1)
    depth = 0.22 * r.uniform(0.9, 1.1)
    boxes = [
        Box([0, seat_h - 0.03, 0], [w, 0.03, depth]),
        Box([0, seat_h / 2, 0], [0.06, seat_h / 2, 0.06]),
        Box([0, seat_h + 0.25, -depth + 0.03], [w, 0.25, 0.03]),
    ]
    goals = [Goal([0.0, seat_h, 0.0], [0.0, 0.0, 1.0], "sit")]
    return SceneObject(id=oid, category="chair", boxes=boxes, goals=goals)


def make_armchair(rng: np.random.Generator | None = None, oid: str = "armchair") -> SceneObject:
    r = rng or np.random.default_rng(0)
    base = make_chair(r, oid)
    w = base.boxes[0].half_extents[0]
    seat_h = base.boxes[0].center[1] + 0.03
    arms = [
        Box([s * (w + 0.05), seat_h + 0.08, 0], [0.05, 0.1, base.boxes[0].half_extents[2]])
        for s in (-1, 1)
    ]
    return SceneObject(id=oid, category="armchair", boxes=base.boxes + arms,
                       goals=base.goals)


def make_sofa(rng: np.random.Generator | None = None, oid: str = "sofa") -> SceneObject:
    r = rng or np.random.default_rng(0)
    w = 0.75 * r.uniform(0.9, 1.2)
    seat_h = 0.42 * r.uniform(0.9, 1.1)
    depth = 0.28
    boxes = [
        Box([0, seat_h - 0.05, 0], [w, 0.05, depth]),
        Box([0, seat_h + 0.22, -depth + 0.04], [w, 0.22, 0.04]),
        Box([-(w + 0.06), seat_h + 0.05, 0], [0.06, 0.12, depth]),
        Box([w + 0.06, seat_h + 0.05, 0], [0.06, 0.12, depth]),
    ]
    goals = [
        Goal([-w * 0.55, seat_h, 0.02], [0, 0, 1], "sit"),
        Goal([w * 0.55, seat_h, 0.02], [0, 0, 1], "sit"),
        Goal([0.0, seat_h, 0.0], [1, 0, 0], "liedown"),
    ]
    return SceneObject(id=oid, category="sofa", boxes=boxes, goals=goals)


def make_lsofa(rng: np.random.Generator | None = None, oid: str = "lsofa") -> SceneObject:
    r = rng or np.random.default_rng(0)
    w = 0.8 * r.uniform(0.9, 1.1)
    seat_h = 0.42
    boxes = [
        Box([0, seat_h - 0.05, 0], [w, 0.05, 0.28]),
        Box([w - 0.28, seat_h - 0.05, -w * 0.75], [0.28, 0.05, w * 0.75]),
        Box([0, seat_h + 0.22, -0.24], [w, 0.22, 0.04]),
    ]
    goals = [
        Goal([-w * 0.5, seat_h, 0.02], [0, 0, 1], "sit"),
        Goal([w * 0.35, seat_h, 0.02], [0, 0, 1], "sit"),
        Goal([w - 0.28, seat_h, -w * 0.8], [-1, 0, 0], "sit"),
    ]
    return SceneObject(id=oid, category="lsofa", boxes=boxes, goals=goals)


def make_table(rng: np.random.Generator | None = None, oid: str = "table") -> SceneObject:
    r = rng or np.random.default_rng(0)
    w = 0.55 * r.uniform(0.9, 1.2)
    h = 0.72 * r.uniform(0.95, 1.05)
    d = 0.35 * r.uniform(0.9, 1.1)
    boxes = [Box([0, h - 0.02, 0], [w, 0.02, d])]
    for sx in (-1, 1):
        for sz in (-1, 1):
            boxes.append(Box([sx * (w - 0.04), h / 2, sz * (d - 0.04)],
                             [0.04, h / 2, 0.04]))
    goals = [Goal([0.0, h, d * 0.7], [0, 0, 1], "sit")]
    return SceneObject(id=oid, category="table", boxes=boxes, goals=goals)


def make_bed(rng: np.random.Generator | None = None, oid: str = "bed") -> SceneObject:
    r = rng or np.random.default_rng(0)
    w = 0.5 * r.uniform(0.9, 1.2)
    h = 0.45 * r.uniform(0.9, 1.1)
    length = 1.0 * r.uniform(0.9, 1.15)
    boxes = [Box([0, h / 2, 0], [w, h / 2, length])]
    goals = [
        Goal([0.0, h, 0.0], [0, 0, 1], "liedown"),
        Goal([w * 0.4, h, length * 0.6], [0, 0, 1], "sit"),
    ]
    return SceneObject(id=oid, category="bed", boxes=boxes, goals=goals)


OBJECT_MAKERS = {
    "chair": make_chair,
    "armchair": make_armchair,
    "sofa": make_sofa,
    "lsofa": make_lsofa,
    "table": make_table,
    "bed": make_bed,
}


def make_goal_training_objects(n_per_category: int, seed: int = 0) -> list[SceneObject]:
    rng = np.random.default_rng(seed)
    out = []
    for cat, maker in OBJECT_MAKERS.items():
        for i in range(n_per_category):
            out.append(maker(rng, oid=f"{cat}_{i}"))
    return out


def two_mode_bench(oid: str = "bench") -> SceneObject:
    """Wide bench with two well-separated sit goals, for mode-coverage tests."""
    seat_h = 0.42
    boxes = [
        Box([0, seat_h - 0.04, 0], [1.2, 0.04, 0.25]),
        Box([0, 0.2, 0], [1.1, 0.2, 0.2]),
    ]
    goals = [
        Goal([-0.9, seat_h, 0.0], [0, 0, 1], "sit"),
        Goal([0.9, seat_h, 0.0], [0, 0, 1], "sit"),
    ]
    return SceneObject(id=oid, category="bench", boxes=boxes, goals=goals)


def demo_scene() -> Scene:
    chair = make_chair(np.random.default_rng(1), "chair")
    chair.position = np.array([2.0, 0.0, 2.0])
    chair.yaw = -0.6
    sofa = make_sofa(np.random.default_rng(2), "sofa")
    sofa.position = np.array([-2.2, 0.0, 1.8])
    sofa.yaw = 0.8
    table = make_table(np.random.default_rng(3), "table")
    table.position = np.array([0.3, 0.0, -1.6])
    bed = make_bed(np.random.default_rng(4), "bed")
    bed.position = np.array([-2.4, 0.0, -2.4])
    bed.yaw = np.pi / 2
    return Scene(objects=[chair, sofa, table, bed],
                 bounds_min=np.array([-5.0, -5.0]), bounds_max=np.array([5.0, 5.0]))


def corridor_scene(gap_center: float = 1.2, gap_width: float = 1.4) -> Scene:
    """A wall across the room with one off-axis gap plus a far-side chair."""
    half = gap_width / 2
    z_lo, z_hi = -3.0, 3.0
    wall_a = SceneObject(
        id="wall_a", category="wall",
        boxes=[Box([0, 1.0, 0], [0.15, 1.0, (gap_center - half - z_lo) / 2])],
        position=np.array([3.0, 0.0, (z_lo + gap_center - half) / 2]))
    wall_b = SceneObject(
        id="wall_b", category="wall",
        boxes=[Box([0, 1.0, 0], [0.15, 1.0, (z_hi - gap_center - half) / 2])],
        position=np.array([3.0, 0.0, (gap_center + half + z_hi) / 2]))
    chair = make_chair(np.random.default_rng(7), "chair")
    chair.position = np.array([5.5, 0.0, 0.0])
    chair.yaw = np.pi / 2
    return Scene(objects=[wall_a, wall_b, chair],
                 bounds_min=np.array([-1.0, z_lo]), bounds_max=np.array([7.0, z_hi]))


# ---------------------------------------------------------------------------
# procedural motion


@dataclass
class GaitStyle:
    stride_freq: float = 1.6  # steps per second per leg
    bob: float = 0.02
    sway: float = 0.015
    stride: float = 0.3
    lift: float = 0.08
    arm_swing: float = 0.15
    arm_out: float = 0.02
    lean: float = 0.04
    hold: float = 1.6  # seconds to hold the terminal pose
    jitter: np.ndarray = field(default_factory=lambda: np.zeros((1, 3)))

    @staticmethod
    def from_seed(seed: int, joints: int) -> "GaitStyle":
        r = np.random.default_rng(seed)
        return GaitStyle(
            stride_freq=r.uniform(1.3, 1.9),
            bob=r.uniform(0.012, 0.035),
            sway=r.uniform(0.008, 0.025),
            stride=r.uniform(0.22, 0.38),
            lift=r.uniform(0.05, 0.12),
            arm_swing=r.uniform(0.08, 0.22),
            arm_out=r.uniform(0.0, 0.05),
            lean=r.uniform(0.0, 0.08),
            hold=r.uniform(0.8, 1.4),
            jitter=r.normal(0.0, 0.008, size=(joints, 3)),
        )


def _standing_local(skel: Skeleton, style: GaitStyle, phase: float, gait: float,
                    t: float) -> np.ndarray:
    """Root-relative joint positions for standing/walking; gait in [0,1]
    scales the cycle amplitudes (0 = quiet standing)."""
    local = skel.rest_positions().copy()
    local += style.jitter
    names = {n: i for i, n in enumerate(skel.names)}
    two_pi = 2 * np.pi
    s = np.sin(two_pi * phase)
    c = np.cos(two_pi * phase)
    sway = style.sway * np.sin(two_pi * 0.4 * t) * (1.0 - gait)

    local[:, 0] += sway
    local[:, 1] += gait * style.bob * np.cos(2 * two_pi * phase)

    def move(name, dz, dy=0.0, dx=0.0):
        if name in names:
            i = names[name]
            local[i, 2] += dz
            local[i, 1] += dy
            local[i, 0] += dx

    l_s, r_s = s, -s
    move("l_foot", gait * style.stride * l_s, gait * style.lift * max(0.0, c))
    move("r_foot", gait * style.stride * r_s, gait * style.lift * max(0.0, -c))
    move("l_ankle", gait * style.stride * l_s * 0.9, gait * style.lift * max(0.0, c) * 0.9)
    move("r_ankle", gait * style.stride * r_s * 0.9, gait * style.lift * max(0.0, -c) * 0.9)
    move("l_knee", gait * style.stride * l_s * 0.5, 0.0, 0.0)
    move("r_knee", gait * style.stride * r_s * 0.5, 0.0, 0.0)
    # arms swing against the legs
    for side, sign in (("l", -1.0), ("r", 1.0)):
        arm = sign * s * gait * style.arm_swing
        move(f"{side}_elbow", arm * 0.6, 0.0, (style.arm_out) * (1 if side == "l" else -1))
        move(f"{side}_wrist", arm, 0.0, (style.arm_out * 1.5) * (1 if side == "l" else -1))
        move(f"{side}_hand", arm, 0.0, (style.arm_out * 1.5) * (1 if side == "l" else -1))
    # forward lean with speed
    for name in ("spine1", "spine2", "spine3", "spine", "neck", "head"):
        if name in names:
            local[names[name], 2] += gait * style.lean * local[names[name], 1] * 0.3
    return local


def _seated_world(skel: Skeleton, goal: Goal, style: GaitStyle, lie: bool) -> np.ndarray:
    """Terminal pose joints in world coordinates for a sit or liedown goal."""
    gf = goal.planar_frame()
    fwd = np.array([gf.forward[0], 0.0, gf.forward[1]])
    right = np.array([gf.right[0], 0.0, gf.right[1]])
    up = np.array([0.0, 1.0, 0.0])
    p = np.array([goal.position[0], goal.position[1], goal.position[2]])
    names = {n: i for i, n in enumerate(skel.names)}
    out = np.zeros_like(skel.rest_positions())

    def put(name, pos):
        if name in names:
            out[names[name]] = pos

    if not lie:
        put("pelvis", p + up * 0.02)
        hip_w = 0.09
        put("l_hip", p + right * -hip_w + up * 0.02)
        put("r_hip", p + right * hip_w + up * 0.02)
        knee = p + fwd * 0.38
        put("l_knee", knee + right * -0.1 + up * -0.02)
        put("r_knee", knee + right * 0.1 + up * -0.02)
        put("l_ankle", np.array([knee[0], 0.08, knee[2]]) + fwd * 0.04 + right * -0.1)
        put("r_ankle", np.array([knee[0], 0.08, knee[2]]) + fwd * 0.04 + right * 0.1)
        put("l_foot", np.array([knee[0], 0.03, knee[2]]) + fwd * 0.14 + right * -0.1)
        put("r_foot", np.array([knee[0], 0.03, knee[2]]) + fwd * 0.14 + right * 0.1)
        torso = [("spine1", 0.12), ("spine2", 0.24), ("spine3", 0.36), ("spine", 0.25),
                 ("neck", 0.48), ("head", 0.58)]
        for name, h in torso:
            put(name, p + up * h + fwd * style.lean * 0.3)
        sh_h = 0.42
        for side, sign in (("l", -1.0), ("r", 1.0)):
            put(f"{side}_collar", p + up * sh_h + right * sign * 0.06)
            put(f"{side}_shoulder", p + up * sh_h + right * sign * 0.16)
            put(f"{side}_elbow", p + up * (sh_h - 0.22) + right * sign * 0.18 + fwd * 0.08)
            wrist = p + up * (sh_h - 0.36) + right * sign * 0.14 + fwd * 0.26
            put(f"{side}_wrist", wrist)
            put(f"{side}_hand", wrist + fwd * 0.06)
    else:
        axis = fwd  # head points along the goal direction, body horizontal
        put("pelvis", p + up * 0.03)
        put("l_hip", p + right * -0.09 + up * 0.03)
        put("r_hip", p + right * 0.09 + up * 0.03)
        for side, sign in (("l", -1.0), ("r", 1.0)):
            put(f"{side}_knee", p - axis * 0.42 + right * sign * 0.1 + up * 0.05)
            put(f"{side}_ankle", p - axis * 0.8 + right * sign * 0.1 + up * 0.04)
            put(f"{side}_foot", p - axis * 0.9 + right * sign * 0.1 + up * 0.05)
        torso = [("spine1", 0.14), ("spine2", 0.27), ("spine3", 0.4), ("spine", 0.28),
                 ("neck", 0.5), ("head", 0.62)]
        for name, d in torso:
            put(name, p + axis * d + up * 0.06)
        for side, sign in (("l", -1.0), ("r", 1.0)):
            put(f"{side}_collar", p + axis * 0.4 + right * sign * 0.07 + up * 0.05)
            put(f"{side}_shoulder", p + axis * 0.42 + right * sign * 0.17 + up * 0.05)
            put(f"{side}_elbow", p + axis * 0.2 + right * sign * 0.2 + up * 0.04)
            put(f"{side}_wrist", p + axis * 0.0 + right * sign * 0.19 + up * 0.05)
            put(f"{side}_hand", p - axis * 0.06 + right * sign * 0.19 + up * 0.05)
    return out


def _polyline(points: list[np.ndarray]):
    pts = [np.asarray(p, dtype=float) for p in points]
    segs = [np.linalg.norm(b - a) for a, b in zip(pts, pts[1:])]
    total = float(sum(segs))

    def at(s: float) -> np.ndarray:
        s = min(max(s, 0.0), total)
        for a, b, ln in zip(pts, pts[1:], segs):
            if s <= ln and ln > 1e-12:
                return a + (s / ln) * (b - a)
            s -= ln
        return pts[-1].copy()

    def direction(s: float) -> np.ndarray:
        d = at(min(s + 0.05, total)) - at(max(s - 0.05, 0.0))
        n = np.linalg.norm(d)
        if n < 1e-9:
            for a, b in zip(pts, pts[1:]):
                seg = b - a
                if np.linalg.norm(seg) > 1e-9:
                    return seg / np.linalg.norm(seg)
            return np.array([0.0, 1.0])
        return d / n

    return at, direction, total


def _subgoal_schedule(wps: list, track: np.ndarray, goal: Goal) -> tuple[list[Goal], int | None]:
    """Replay the runtime waypoint presentation over a scripted root track.

    Intermediate waypoints appear as walk sub-goals with the cursor advancing
    on 0.4 m consumption; the last waypoint presents the labeled goal itself.
    Also reports the first frame within 1.5 m of the final waypoint (where the
    runtime starts its action ramp), or None if the track never gets there.
    """
    path = NavPath(waypoints=[np.asarray(w, dtype=float) for w in wps])
    last = path.waypoints[-1]
    sched: list[Goal] = []
    cursor = 0
    ramp_frame: int | None = None
    for i in range(len(track)):
        cursor, sub, _ = next_subgoal(path, track[i], goal, cursor)
        if ramp_frame is None and np.linalg.norm(track[i] - last) <= 1.5:
            ramp_frame = i
        sched.append(sub)
    return sched, ramp_frame


def _round_corners(wps: list, r: float = 0.3, samples: int = 8) -> list:
    """Shortcut interior corners with a quadratic arc (max 0.15 m deviation at
    r=0.3, inside the 0.4 m waypoint consumption radius)."""
    pts = [np.asarray(w, dtype=float) for w in wps]
    if len(pts) < 3:
        return pts
    out = [pts[0]]
    for k in range(1, len(pts) - 1):
        din = pts[k] - pts[k - 1]
        dout = pts[k + 1] - pts[k]
        lin, lout = np.linalg.norm(din), np.linalg.norm(dout)
        ri = min(r, 0.5 * lin, 0.5 * lout)
        if ri < 1e-6 or lin < 1e-9 or lout < 1e-9:
            out.append(pts[k])
            continue
        pin = pts[k] - din / lin * ri
        pout = pts[k] + dout / lout * ri
        for t in np.linspace(0.0, 1.0, samples + 1):
            out.append((1 - t) ** 2 * pin + 2 * (1 - t) * t * pts[k] + t ** 2 * pout)
    out.append(pts[-1])
    return out


def _plan_or_straight(scene: Scene | None, start: np.ndarray, end: np.ndarray) -> list:
    if scene is not None:
        try:
            return plan_path(scene, start, end, radius=0.3, cell=0.25).waypoints
        except SceneMotionError:
            pass
    return [start, end]


def _sample_approach(scene: Scene, stand: np.ndarray, gf, rng) -> tuple[np.ndarray, list]:
    """Pick a reachable start around the stand point; approach from anywhere."""
    if scene.bounds_min is not None:
        lo, hi = scene.bounds_min + 0.5, scene.bounds_max - 0.5
    else:
        lo, hi = stand - 5.0, stand + 5.0
    for _ in range(24):
        ang = rng.uniform(0.0, 2.0 * np.pi)
        rad = rng.uniform(1.2, 4.5)
        cand = stand + rad * np.array([np.cos(ang), np.sin(ang)])
        if not (lo[0] <= cand[0] <= hi[0] and lo[1] <= cand[1] <= hi[1]):
            continue
        try:
            wps = plan_path(scene, cand, stand, radius=0.3, cell=0.25).waypoints
        except SceneMotionError:
            continue
        if rng.uniform() < 0.5:
            wps = _dogleg(scene, cand, stand, ang, rng) or wps
        return cand, wps
    start = stand + gf.forward * rng.uniform(2.0, 3.5) + gf.right * rng.uniform(-1.5, 1.5)
    return start, [start, stand]


def _dogleg(scene: Scene, start: np.ndarray, stand: np.ndarray, ang: float,
            rng) -> list | None:
    """Route through a via point near the stand so late-path corners occur.

    Planner paths often bend right before the stand point; approaches have to
    cover that presentation order (action ramp active while the sub-goal is
    still a waypoint) or the model never sees it.
    """
    side = rng.choice([-1.0, 1.0])
    off = ang + side * rng.uniform(0.7, 1.7)
    via = stand + rng.uniform(0.6, 1.6) * np.array([np.cos(off), np.sin(off)])
    try:
        a = plan_path(scene, start, via, radius=0.3, cell=0.25).waypoints
        b = plan_path(scene, via, stand, radius=0.3, cell=0.25).waypoints
    except SceneMotionError:
        return None
    return a + b[1:]


def _sample_meander(scene: Scene, start: np.ndarray | None, rng) -> list | None:
    """Plan a collision-free stroll between two random points, if possible."""
    if scene.bounds_min is None:
        return None
    lo, hi = scene.bounds_min + 0.5, scene.bounds_max - 0.5
    for _ in range(24):
        a = start if start is not None else rng.uniform(lo, hi)
        b = rng.uniform(lo, hi)
        if np.linalg.norm(b - a) < 3.5:
            continue
        try:
            return plan_path(scene, a, b, radius=0.3, cell=0.25).waypoints
        except SceneMotionError:
            continue
    return None


def _cross_fade_rows(schedule: list[tuple[int, int]], n: int, n_a: int, fps: int,
                     fade: float = 0.5) -> np.ndarray:
    """Continuous per-frame action rows from a piecewise schedule
    [(start_frame, action_index), ...]."""
    rows = np.zeros((n, n_a))
    bounds = [s for s, _ in schedule] + [n]
    for k, (start, act) in enumerate(schedule):
        rows[start:bounds[k + 1], act] = 1.0
    half = max(1, int(round(fade * fps / 2)))
    for k in range(1, len(schedule)):
        b = schedule[k][0]
        prev_a, new_a = schedule[k - 1][1], schedule[k][1]
        if prev_a == new_a:
            continue
        for f in range(max(0, b - half), min(n, b + half)):
            u = (f - (b - half)) / (2 * half)
            rows[f, prev_a] = 1.0 - u
            rows[f, new_a] = u
    return rows / rows.sum(axis=1, keepdims=True)


def _contacts_for(skel: Skeleton, joints: np.ndarray, vel: np.ndarray,
                  seated: float, lying: float) -> np.ndarray:
    c = np.zeros(5)
    for k, name in enumerate(("pelvis", "l_foot", "r_foot", "l_hand", "r_hand")):
        j = skel.key_joints[name]
        if name == "pelvis":
            c[k] = max(seated, lying)
        elif "foot" in name:
            grounded = 1.0 if joints[j, 1] < 0.06 and np.linalg.norm(vel[j]) < 0.6 else 0.0
            c[k] = max(grounded, lying)
        else:
            c[k] = lying
    return c


def generate_raw(kind: str, style_seed: int, scene: Scene | None = None,
                 cfg: StateConfig | None = None, skeleton: Skeleton | None = None,
                 target_id: str | None = None, start: np.ndarray | None = None,
                 speed: float | None = None, duration: float | None = None,
                 path: list | None = None, goal_index: int | None = None) -> RawClip:
    """Script one clip. Deterministic per (kind, styleSeed, scene layout)."""
    if kind not in ACTIONS:
        raise ValueError(f"unknown clip kind {kind!r}")
    cfg = cfg or StateConfig()
    skel = skeleton or _default_skel()
    fps = cfg.fps
    style = GaitStyle.from_seed(style_seed, skel.joint_count)
    rng = np.random.default_rng(style_seed)
    w = -int(window_indices(cfg)[0])
    lead = w + 1

    obj = None
    goal = None
    if kind in ("sit", "liedown"):
        if scene is None:
            raise NoGoal("sit/liedown clips need a scene with a labeled object")
        candidates = scene.objects if target_id is None else [scene.object_by_id(target_id)]
        labeled = []
        for o in candidates:
            for g in o.world_goals():
                if g.action == kind:
                    labeled.append((o, g))
        if not labeled:
            raise NoGoal(f"no labeled {kind} goal in scene")
        pick = goal_index if goal_index is not None else int(rng.integers(len(labeled)))
        obj, goal = labeled[pick % len(labeled)]

    speed = speed if speed is not None else (2.6 if kind == "run" else 1.1)
    a_walk = action_index("walk")
    a_idle = action_index("idle")
    a_kind = action_index(kind if kind in ACTIONS else "walk")

    if kind == "idle":
        n = lead + int(round((duration or 3.0) * fps))
        start = np.zeros(2) if start is None else np.asarray(start, dtype=float)
        fwd = np.array([0.0, 1.0])
        frames = []
        rows = _cross_fade_rows([(0, a_idle)], n, cfg.actions, fps)
        goal = Goal([start[0], 0.0, start[1]], [fwd[0], 0.0, fwd[1]], "idle")
        for i in range(n):
            root = RootTransform(start, fwd)
            local = _standing_local(skel, style, 0.0, 0.0, i / fps)
            joints = from_root_relative(local, root)
            frames.append(_mk_frame(root, joints, skel, rows[i], a_idle))
        _fill_velocity_contacts(frames, skel, fps, np.zeros(len(frames)), np.zeros(len(frames)))
        return RawClip(fps=fps, skeleton=skel, frames=frames, obj=None, goal=goal)

    if kind in ("walk", "run"):
        explicit_start = start is not None
        start = np.zeros(2) if start is None else np.asarray(start, dtype=float)
        if path is None and duration is None and scene is not None:
            path = _sample_meander(scene, start if explicit_start else None, rng)
        if path is None:
            length = speed * (duration or 5.0)
            path = [start, start + np.array([0.0, length])]
        at, dirn, total = _polyline(_round_corners(path))
        n_move = int(round(total / speed * fps))
        n = lead + n_move + 1
        end, enddir = at(total), dirn(total)
        goal = Goal([end[0], 0.0, end[1]], [enddir[0], 0.0, enddir[1]], kind)
        track = np.array([at(max(0.0, i - lead) / fps * speed) for i in range(n)])
        goal_schedule, _ = _subgoal_schedule(path, track, goal)
        frames = []
        rows = _cross_fade_rows([(0, a_idle), (lead, a_kind)], n, cfg.actions, fps)
        for i in range(n):
            s = max(0.0, (i - lead)) / fps * speed
            root = RootTransform(track[i], dirn(s))
            phase = style.stride_freq * max(0.0, i - lead) / fps
            gait = 1.0 if i >= lead else 0.0
            local = _standing_local(skel, style, phase, gait, i / fps)
            joints = from_root_relative(local, root)
            frames.append(_mk_frame(root, joints, skel, rows[i], a_kind))
        _fill_velocity_contacts(frames, skel, fps, np.zeros(len(frames)), np.zeros(len(frames)))
        return RawClip(fps=fps, skeleton=skel, frames=frames, obj=None, goal=goal,
                       goal_schedule=goal_schedule)

    # sit / liedown
    gf = goal.planar_frame()
    stand = gf.position + gf.forward * 0.75
    wps = None
    if start is None:
        start, wps = _sample_approach(scene, stand, gf, rng)
    else:
        start = np.asarray(start, dtype=float)
    if path is None:
        path = wps if wps is not None else _plan_or_straight(scene, start, stand)
    at, dirn, total = _polyline(_round_corners(path))
    # approach with a gentle deceleration into the stand point
    s_vals = [0.0]
    while s_vals[-1] < total - 1e-9:
        remaining = total - s_vals[-1]
        factor = float(np.clip(remaining / 0.9, 0.55, 1.0))
        s_vals.append(min(total, s_vals[-1] + speed * factor / fps))
    n_walk = len(s_vals) - 1
    end_dir = dirn(total)
    a0 = float(np.arctan2(end_dir[1], end_dir[0]))
    a1 = float(np.arctan2(gf.forward[1], gf.forward[0]))
    turn_arc = (a1 - a0 + np.pi) % (2.0 * np.pi) - np.pi
    n_turn = int(round(max(0.5, abs(turn_arc) / np.pi) * fps))
    n_trans = int(round(1.2 * fps))
    n_hold = int(round(style.hold * fps))
    n = lead + n_walk + n_turn + n_trans + n_hold
    trans_start = lead + n_walk + n_turn
    rows = _cross_fade_rows([(0, a_idle), (lead, a_walk), (trans_start, a_kind)],
                            n, cfg.actions, fps)
    # goal presentation replays the runtime waypoint rules over the planned
    # path; the schedule label flips a beat into the runtime's 1 s action ramp
    # (which starts 1.5 m from the final waypoint), so the corpus covers the
    # committed walk-in under both labels; ta only follows at the sit-down
    track = np.array([at(s_vals[min(max(i - lead, 0), n_walk)]) for i in range(n)])
    goal_schedule, ramp_frame = _subgoal_schedule(path, track, goal)
    if ramp_frame is None:
        ramp_frame = max(lead, trans_start - n_turn)
    sched_switch = min(trans_start - 1, ramp_frame + int(rng.uniform(0.2, 0.9) * fps))
    seat_world = _seated_world(skel, goal, style, lie=(kind == "liedown"))
    goal_fwd = gf.forward
    frames = []
    seat_gamma = np.zeros(n)
    lie_gamma = np.zeros(n)
    for i in range(n):
        if i < lead:
            pos, f2, phase, gait = at(0.0), dirn(0.0), 0.0, 0.0
        elif i < lead + n_walk:
            s = s_vals[i - lead]
            pos, f2 = at(s), dirn(s)
            phase = style.stride_freq * s / speed
            gait = 1.0
        else:
            u = min(1.0, (i - lead - n_walk) / max(n_turn, 1))
            pos = at(total)
            ang = a0 + u * turn_arc
            f2 = np.array([np.cos(ang), np.sin(ang)])
            phase, gait = 0.0, 0.0
        g = 0.0
        if i >= trans_start:
            g = min(1.0, (i - trans_start) / max(n_trans, 1))
            g = g * g * (3 - 2 * g)
        stand_local = _standing_local(skel, style, phase, gait, i / fps)
        # the root slides from the stand point onto the goal as the pose blends
        root_pos = (1 - g) * pos + g * gf.position
        root_fwd = f2 if g < 1e-9 else goal_fwd
        root = RootTransform(root_pos, root_fwd)
        joints = from_root_relative(stand_local, root)
        if g > 0.0:
            joints = (1 - g) * joints + g * seat_world
        if kind == "liedown":
            lie_gamma[i] = g
        else:
            seat_gamma[i] = g
        sched = a_walk if i < sched_switch else a_kind
        frames.append(_mk_frame(root, joints, skel, rows[i], sched))
    _fill_velocity_contacts(frames, skel, fps, seat_gamma, lie_gamma)
    return RawClip(fps=fps, skeleton=skel, frames=frames, obj=obj, goal=goal,
                   goal_schedule=goal_schedule)


def _default_skel() -> Skeleton:
    from .kinematics import default_skeleton

    return default_skeleton()


def _mk_frame(root: RootTransform, joints: np.ndarray, skel: Skeleton,
              action_row: np.ndarray, scheduled: int) -> ClipFrame:
    rot = root.rotation()
    jr = np.tile(rot, (skel.joint_count, 1, 1))
    return ClipFrame(root=root, joints=joints, joint_rot=jr,
                     action_row=action_row.copy(), scheduled_action=int(scheduled),
                     contacts=np.zeros(5))


def _fill_velocity_contacts(frames: list[ClipFrame], skel: Skeleton, fps: int,
                            seated: np.ndarray, lying: np.ndarray) -> None:
    n = len(frames)
    joints = np.stack([f.joints for f in frames])
    vel = np.zeros_like(joints)
    if n > 1:
        vel[1:-1] = (joints[2:] - joints[:-2]) * (fps / 2.0)
        vel[0] = (joints[1] - joints[0]) * fps
        vel[-1] = (joints[-1] - joints[-2]) * fps
    for i, f in enumerate(frames):
        f.contacts = _contacts_for(skel, joints[i], vel[i], float(seated[i]), float(lying[i]))


def idle_frames(skeleton: Skeleton, cfg: StateConfig, start: np.ndarray,
                forward: np.ndarray, style_seed: int = 0,
                scheduled: str = "walk") -> list[ClipFrame]:
    """Just enough quiet-standing history to assemble one state (spawn pose)."""
    style = GaitStyle.from_seed(style_seed, skeleton.joint_count)
    w = -int(window_indices(cfg)[0])
    root = RootTransform(np.asarray(start, dtype=float), np.asarray(forward, dtype=float))
    row = np.zeros(cfg.actions)
    row[action_index("idle")] = 1.0
    frames = []
    for i in range(w + 1):
        local = _standing_local(skeleton, style, 0.0, 0.0, i / cfg.fps)
        joints = from_root_relative(local, root)
        frames.append(_mk_frame(root, joints, skeleton, row, action_index(scheduled)))
    _fill_velocity_contacts(frames, skeleton, cfg.fps,
                            np.zeros(len(frames)), np.zeros(len(frames)))
    return frames


def generate_clip(kind: str, style_seed: int, scene: Scene | None = None,
                  cfg: StateConfig | None = None, skeleton: Skeleton | None = None,
                  **kw) -> MotionClip:
    cfg = cfg or StateConfig()
    raw = generate_raw(kind, style_seed, scene, cfg, skeleton, **kw)
    return clip_from_raw(raw, cfg)


# ---------------------------------------------------------------------------
# corpus assembly


def clip_grid_rows(clip: MotionClip) -> np.ndarray:
    """(F, gridDim) root-relative interaction grids along the clip."""
    n = len(clip)
    if clip.obj is None:
        return np.tile(empty_grid_flat(), (n, 1))
    grid = voxelize_object(clip.obj)
    rows = np.zeros((n, empty_grid_flat().shape[0]))
    for i, root in enumerate(clip.roots()):
        rows[i] = flatten_grid(encode_relative(grid, root, clip.obj))
    return rows


def training_windows(clips: list[MotionClip], length: int, stride: int | None = None
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Slice clips into overlapping (flats, grids) windows for rollouts."""
    stride = stride or max(1, length // 2)
    wf, wg = [], []
    for clip in clips:
        if len(clip) < length:
            continue
        grids = clip_grid_rows(clip)
        flats = clip.flats.astype(float)
        for s in range(0, len(clip) - length + 1, stride):
            wf.append(flats[s:s + length])
            wg.append(grids[s:s + length])
    if not wf:
        raise EmptyDataset(f"no clip is at least {length} frames long")
    return np.stack(wf), np.stack(wg)


def generate_dataset(out_dir: str, cfg: StateConfig, skeleton: Skeleton,
                     scene: Scene, counts: dict[str, int], seed: int = 0,
                     augment_copies: int = 0) -> DatasetManifest:
    """Emit a corpus of clips plus manifest with normalization stats."""
    os.makedirs(out_dir, exist_ok=True)
    scene.save(os.path.join(out_dir, "scene.json"))
    clips: list[MotionClip] = []
    names: list[str] = []
    raws: list[RawClip] = []
    k = 0
    for kind, count in counts.items():
        for _ in range(count):
            raw = generate_raw(kind, seed * 1000 + k, scene, cfg, skeleton)
            clips.append(clip_from_raw(raw, cfg))
            names.append(f"clip_{k:03d}_{kind}.smc")
            raws.append(raw)
            k += 1
    if augment_copies:
        from .augment import ObjectEdit, augment_clip

        rng = np.random.default_rng(seed + 17)
        seated = [r for r in raws if r.obj is not None]
        if not seated:
            raise EmptyDataset("augmentation requires at least one sit/liedown clip")
        for _ in range(augment_copies):
            base = seated[int(rng.integers(len(seated)))]
            edit = ObjectEdit.scale(rng.uniform(0.85, 1.25, size=3))
            clips.append(clip_from_raw(augment_clip(base, edit, rng), cfg))
            names.append(f"clip_{k:03d}_aug.smc")
            k += 1
    for clip, name in zip(clips, names):
        write_clip(clip, os.path.join(out_dir, name))
    mean, std = compute_stats(clips)
    manifest = DatasetManifest(cfg=cfg, fps=cfg.fps, clip_files=names, mean=mean, std=std)
    manifest.save(os.path.join(out_dir, "manifest.json"))
    return manifest
