"""Evaluation suite: diversity, distribution distance, goal precision,
execution time, and scene penetration."""

from __future__ import annotations

import csv
import json
import math

import numpy as np

from .errors import DegenerateCovariance, NotExecuted, TooFewFrames, TooFewGoals
from .goals import Goal
from .kinematics import RootTransform
from .state import CharacterState
from .voxel import Scene, yaw_rotation

JOINT_SPHERE_RADIUS = 0.05
PERSIST_SECONDS = 1.0


def pose_features(states: list[CharacterState]) -> np.ndarray:
    """(N, 12j) local pose rows: positions, 6D rotations, velocities."""
    return np.stack([
        np.concatenate([s.jp.ravel(), s.jr.ravel(), s.jv.ravel()]) for s in states
    ])


def feature_subset(states: list[CharacterState]) -> np.ndarray:
    """(N, 12j + 4t) pose rows extended with the goal-frame trajectory."""
    return np.stack([
        np.concatenate([s.jp.ravel(), s.jr.ravel(), s.jv.ravel(),
                        s.tp_goal.ravel(), s.td_goal.ravel()]) for s in states
    ])


def apd(rows: np.ndarray) -> float:
    """Mean squared distance over ordered pairs of feature rows."""
    rows = np.asarray(rows, dtype=float)
    n = rows.shape[0]
    if n < 2:
        raise TooFewFrames(f"APD needs at least 2 rows, got {n}")
    # direct differences: identical rows score exactly 0, no Gram cancellation
    diff = rows[:, None, :] - rows[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    return float(d2.sum() / (n * (n - 1)))


def apd_rollouts(feature_seqs: list[np.ndarray]) -> float:
    """Diversity across N rollouts: APD over runs at each shared frame index,
    averaged over frames. Identical rollouts score exactly 0."""
    if len(feature_seqs) < 2:
        raise TooFewFrames(f"need at least 2 rollouts, got {len(feature_seqs)}")
    horizon = min(f.shape[0] for f in feature_seqs)
    if horizon == 0:
        raise TooFewFrames("a rollout has no frames")
    vals = [apd(np.stack([f[t] for f in feature_seqs])) for t in range(horizon)]
    return float(np.mean(vals))


def apd_goals(goals_per_object: list[list[Goal]]) -> tuple[float, float]:
    """Average pairwise position distance (m) and direction angle (rad),
    pooled over objects and normalized by L*N*(N-1)."""
    if not goals_per_object:
        raise TooFewGoals("no goal sets")
    n = len(goals_per_object[0])
    if n < 2 or any(len(g) != n for g in goals_per_object):
        raise TooFewGoals("each object needs the same N >= 2 sampled goals")
    big_l = len(goals_per_object)
    pos_sum = 0.0
    rot_sum = 0.0
    for goals in goals_per_object:
        p = np.stack([g.position for g in goals])
        d = np.stack([g.direction for g in goals])
        dist = np.linalg.norm(p[:, None, :] - p[None, :, :], axis=-1)
        dots = np.clip(d @ d.T, -1.0, 1.0)
        ang = np.arccos(dots)
        np.fill_diagonal(ang, 0.0)
        pos_sum += dist.sum()
        rot_sum += ang.sum()
    norm = big_l * n * (n - 1)
    return pos_sum / norm, rot_sum / norm


def gaussian_moments(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean/covariance with shrinkage when rows are scarce."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise TooFewFrames("need a (N>=2, D) feature matrix")
    if not np.all(np.isfinite(rows)):
        raise DegenerateCovariance("non-finite feature values")
    mu = rows.mean(axis=0)
    cov = np.cov(rows, rowvar=False)
    cov = np.atleast_2d(cov)
    if rows.shape[0] <= rows.shape[1]:
        cov = cov + 1e-6 * np.eye(cov.shape[0])
    return mu, cov


def _clamped_sqrt_eigs(m: np.ndarray) -> np.ndarray:
    w, _ = np.linalg.eigh((m + m.T) / 2.0)
    tol = 1e-10 * max(1.0, float(np.abs(w).max(initial=0.0)))
    bad = w < -tol
    if np.any(bad):
        raise DegenerateCovariance(
            f"eigenvalue {w[bad].min():.3e} too negative for a covariance product"
        )
    return np.sqrt(np.maximum(w, 0.0))


def frechet_from_moments(mu1: np.ndarray, cov1: np.ndarray,
                         mu2: np.ndarray, cov2: np.ndarray) -> float:
    mu1, mu2 = np.asarray(mu1, dtype=float), np.asarray(mu2, dtype=float)
    cov1 = np.atleast_2d(np.asarray(cov1, dtype=float))
    cov2 = np.atleast_2d(np.asarray(cov2, dtype=float))
    w, v = np.linalg.eigh((cov1 + cov1.T) / 2.0)
    tol = 1e-10 * max(1.0, float(np.abs(w).max(initial=0.0)))
    if np.any(w < -tol):
        raise DegenerateCovariance("first covariance is not PSD")
    root1 = (v * np.sqrt(np.maximum(w, 0.0))) @ v.T
    cross = _clamped_sqrt_eigs(root1 @ cov2 @ root1)
    diff = mu1 - mu2
    val = float(diff @ diff + np.trace(cov1) + np.trace(cov2) - 2.0 * cross.sum())
    return max(val, 0.0)


def frechet_distance(rows_a: np.ndarray, rows_b: np.ndarray) -> float:
    mu1, c1 = gaussian_moments(rows_a)
    mu2, c2 = gaussian_moments(rows_b)
    return frechet_from_moments(mu1, c1, mu2, c2)


def execution_time(action_rows: np.ndarray, target: int, fps: int) -> float:
    """Seconds until `target` becomes the argmax action and stays so for 1 s,
    or inf if that never happens within the rollout."""
    rows = np.asarray(action_rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] == 0:
        return math.inf
    hits = np.argmax(rows, axis=1) == target
    win = int(round(PERSIST_SECONDS * fps))
    for f in range(rows.shape[0] - win + 1):
        if hits[f:f + win].all():
            return f / fps
    return math.inf


def precision(root: RootTransform | None, goal: Goal) -> tuple[float, float]:
    """Planar position error (m) and heading error (deg) at the goal."""
    if root is None:
        raise NotExecuted("no terminal root; action never executed")
    gf = goal.planar_frame()
    pe = float(np.linalg.norm(root.position - gf.position))
    dot = float(np.clip(np.dot(root.forward, gf.forward), -1.0, 1.0))
    re = math.degrees(math.acos(dot))
    return pe, re


def _object_distances(points: np.ndarray, obj) -> np.ndarray:
    """(n,) closest distances from world points to an object's boxes."""
    local = obj.to_object(points)
    best = np.full(points.shape[0], np.inf)
    for box in obj.boxes:
        rel = (local - box.center) @ yaw_rotation(box.yaw)
        q = np.abs(rel) - box.half_extents
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        best = np.minimum(best, outside)
    return best


def penetration_pct(joint_frames: np.ndarray, scene: Scene,
                    target_id: str | None = None,
                    radius: float = JOINT_SPHERE_RADIUS) -> float:
    """Percentage of frames where any joint sphere overlaps a non-target object."""
    frames = np.asarray(joint_frames, dtype=float)
    if frames.ndim != 3 or frames.shape[0] == 0:
        return 0.0
    others = [o for o in scene.objects if o.id != target_id]
    if not others:
        return 0.0
    flat = frames.reshape(-1, 3)
    hit = np.zeros(flat.shape[0], dtype=bool)
    for obj in others:
        hit |= _object_distances(flat, obj) < radius
    per_frame = hit.reshape(frames.shape[0], frames.shape[1]).any(axis=1)
    return 100.0 * float(per_frame.mean())


def save_report(report: dict, path: str) -> None:
    """JSON report; infinities become the string "inf"."""

    def enc(v):
        if isinstance(v, float) and math.isinf(v):
            return "inf"
        if isinstance(v, (np.floating, np.integer)):
            return v.item()
        if isinstance(v, dict):
            return {k: enc(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [enc(x) for x in v]
        return v

    with open(path, "w") as f:
        json.dump(enc(report), f, indent=2, sort_keys=True)


def write_csv_table(rows: list[dict], path: str) -> None:
    """Report table: one row per experiment, union of metric columns."""
    fields: list[str] = []
    for row in rows:
        for k in row:
            if k not in fields:
                fields.append(k)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("inf" if isinstance(v, float) and math.isinf(v) else v)
                             for k, v in row.items()})
