"""Scenes built from yaw-oriented boxes and their voxel occupancy encoding.

An interaction object is a set of boxes in its own frame plus a ground-plane
pose. Objects are summarized for the networks as an 8x8x8 grid over the
object's bounding box: each cell stores its center (relative to the object
center) and a fractional occupancy from subsampled box containment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptHeader, EmptyObject, UnknownObject
from .goals import Goal
from .kinematics import RootTransform, to_root_relative

GRID_RES = 8
GRID_VALUES = 4  # cx, cy, cz, occupancy
GRID_FLAT = GRID_RES ** 3 * GRID_VALUES


def yaw_rotation(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


@dataclass(frozen=True)
class Box:
    center: np.ndarray  # (3,) in the parent frame
    half_extents: np.ndarray  # (3,) positive
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        h = np.asarray(self.half_extents, dtype=float).reshape(3)
        if np.any(h <= 0):
            raise ValueError(f"box half extents must be positive, got {h}")
        object.__setattr__(self, "half_extents", h)

    def contains(self, points: np.ndarray, eps: float = 0.0) -> np.ndarray:
        """Boolean containment for (..., 3) points in the box's parent frame."""
        d = np.asarray(points) - self.center
        local = d @ yaw_rotation(self.yaw)  # p @ R == R^T p rows
        return np.all(np.abs(local) <= self.half_extents + eps, axis=-1)

    def corners(self) -> np.ndarray:
        """(8, 3) corner points in the parent frame."""
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
        return self.center + (signs * self.half_extents) @ yaw_rotation(self.yaw).T

    def nearest_surface_point(self, p: np.ndarray) -> np.ndarray:
        """Closest point on the box surface (not interior) to p, parent frame."""
        rot = yaw_rotation(self.yaw)
        local = rot.T @ (np.asarray(p, dtype=float) - self.center)
        h = self.half_extents
        if np.all(np.abs(local) <= h):
            # inside: push out through the nearest face
            gaps = h - np.abs(local)
            ax = int(np.argmin(gaps))
            q = local.copy()
            q[ax] = h[ax] if local[ax] >= 0 else -h[ax]
        else:
            q = np.clip(local, -h, h)
        return self.center + rot @ q

    def to_dict(self) -> dict:
        return {
            "center": [float(v) for v in self.center],
            "halfExtents": [float(v) for v in self.half_extents],
            "yaw": float(self.yaw),
        }

    @staticmethod
    def from_dict(d: dict) -> "Box":
        return Box(np.array(d["center"]), np.array(d["halfExtents"]), float(d.get("yaw", 0.0)))


@dataclass
class SceneObject:
    id: str
    category: str
    boxes: list[Box]
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))  # world
    yaw: float = 0.0
    goals: list[Goal] = field(default_factory=list)  # object frame

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        if not self.boxes:
            raise EmptyObject(f"object {self.id!r} has no boxes")

    def rotation(self) -> np.ndarray:
        return yaw_rotation(self.yaw)

    def to_world(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation().T + self.position

    def to_object(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points) - self.position) @ self.rotation()

    def dir_to_world(self, d: np.ndarray) -> np.ndarray:
        return np.asarray(d) @ self.rotation().T

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned bounding box of all boxes, object frame."""
        corners = np.concatenate([b.corners() for b in self.boxes])
        return corners.min(axis=0), corners.max(axis=0)

    def center(self) -> np.ndarray:
        lo, hi = self.bounds()
        return (lo + hi) / 2

    def contains(self, points: np.ndarray) -> np.ndarray:
        """World-frame containment against any box."""
        local = self.to_object(points)
        hit = np.zeros(np.asarray(points).shape[:-1], dtype=bool)
        for b in self.boxes:
            hit |= b.contains(local)
        return hit

    def world_goals(self) -> list[Goal]:
        return [
            Goal(self.to_world(g.position), self.dir_to_world(g.direction), g.action)
            for g in self.goals
        ]

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "category": self.category,
            "boxes": [b.to_dict() for b in self.boxes],
            "position": [float(v) for v in self.position],
            "yaw": float(self.yaw),
            "goals": [g.to_dict() for g in self.goals],
        }

    @staticmethod
    def from_dict(d: dict) -> "SceneObject":
        try:
            return SceneObject(
                id=d["id"],
                category=d.get("category", "object"),
                boxes=[Box.from_dict(b) for b in d["boxes"]],
                position=np.array(d.get("position", [0, 0, 0])),
                yaw=float(d.get("yaw", 0.0)),
                goals=[Goal.from_dict(g) for g in d.get("goals", [])],
            )
        except KeyError as e:
            raise CorruptHeader(f"object record is missing {e.args[0]!r}") from None


@dataclass
class Scene:
    objects: list[SceneObject]
    bounds_min: np.ndarray | None = None  # (2,) walkable area on the ground plane
    bounds_max: np.ndarray | None = None

    def __post_init__(self):
        if self.bounds_min is not None:
            self.bounds_min = np.asarray(self.bounds_min, dtype=float).reshape(2)
            self.bounds_max = np.asarray(self.bounds_max, dtype=float).reshape(2)
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate object ids in scene: {ids}")

    def object_by_id(self, oid: str) -> SceneObject:
        for o in self.objects:
            if o.id == oid:
                return o
        raise UnknownObject(f"no object {oid!r} in scene ({[o.id for o in self.objects]})")

    def to_dict(self) -> dict:
        d: dict = {"objects": [o.to_dict() for o in self.objects]}
        if self.bounds_min is not None:
            d["bounds"] = {
                "min": [float(v) for v in self.bounds_min],
                "max": [float(v) for v in self.bounds_max],
            }
        return d

    @staticmethod
    def from_dict(d: dict) -> "Scene":
        b = d.get("bounds")
        return Scene(
            objects=[SceneObject.from_dict(o) for o in d.get("objects", [])],
            bounds_min=None if b is None else np.array(b["min"]),
            bounds_max=None if b is None else np.array(b["max"]),
        )

    def save(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    @staticmethod
    def load(path: str) -> "Scene":
        with open(path) as f:
            try:
                return Scene.from_dict(json.load(f))
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise CorruptHeader(f"bad scene file {path}: {e}") from None


@dataclass
class VoxelGrid:
    centers: np.ndarray  # (res, res, res, 3) in the grid's reference frame
    occupancy: np.ndarray  # (res, res, res) in [0, 1]
    object_center: np.ndarray  # (3,) object-frame point the centers are relative to
    bounds_lo: np.ndarray  # padded grid box, object frame
    bounds_hi: np.ndarray

    @property
    def res(self) -> int:
        return self.centers.shape[0]

    def half_diagonal(self) -> float:
        return float(np.linalg.norm((self.bounds_hi - self.bounds_lo) / 2))


def voxelize_object(obj: SceneObject, res: int = GRID_RES, subsamples: int = 4,
                    pad: float = 0.05) -> VoxelGrid:
    """Occupancy grid over the object's padded bounding box, object frame.

    Each cell's occupancy is the fraction of subsamples^3 interior points
    contained in any box, so partially covered cells get fractional values.
    """
    lo, hi = obj.bounds()
    c = (lo + hi) / 2
    half = (hi - lo) / 2 * (1 + pad)
    half = np.maximum(half, 1e-6)
    lo, hi = c - half, c + half

    edges = [np.linspace(lo[a], hi[a], res + 1) for a in range(3)]
    mids = [(e[:-1] + e[1:]) / 2 for e in edges]
    cx, cy, cz = np.meshgrid(mids[0], mids[1], mids[2], indexing="ij")
    centers = np.stack([cx, cy, cz], axis=-1) - c

    # subsample points at fixed fractions of each cell
    frac = (np.arange(subsamples) + 0.5) / subsamples
    cell = (hi - lo) / res
    occ = np.zeros((res, res, res))
    sub = np.stack(np.meshgrid(frac, frac, frac, indexing="ij"), axis=-1).reshape(-1, 3)
    base = np.stack([cx, cy, cz], axis=-1)  # cell centers, absolute
    pts = base[..., None, :] + (sub - 0.5) * cell  # (res,res,res,S,3)
    flat = pts.reshape(-1, 3)
    inside = np.zeros(flat.shape[0], dtype=bool)
    for b in obj.boxes:
        inside |= b.contains(flat)
    occ = inside.reshape(res, res, res, -1).mean(axis=-1)
    return VoxelGrid(centers=centers, occupancy=occ, object_center=c,
                     bounds_lo=lo, bounds_hi=hi)


def flatten_grid(grid: VoxelGrid) -> np.ndarray:
    """Flat (res^3 * 4,) vector: per cell (cx, cy, cz, occ), x index fastest."""
    cells = np.concatenate([grid.centers, grid.occupancy[..., None]], axis=-1)
    return cells.transpose(2, 1, 0, 3).reshape(-1).copy()


def encode_relative(grid: VoxelGrid, root: RootTransform,
                    obj: SceneObject | None = None) -> VoxelGrid:
    """Grid with cell centers re-expressed in a character root frame.

    When obj is given, the root is a world-frame transform and the grid is
    first placed in the world by the object's pose. Otherwise the root is
    taken to be expressed in the grid's own frame (so an identity root leaves
    the centers untouched). Occupancy does not move with the viewer.
    """
    if obj is not None:
        pts = obj.to_world(grid.centers + grid.object_center)
    else:
        pts = grid.centers
    rel = to_root_relative(pts.reshape(-1, 3), root).reshape(grid.centers.shape)
    return VoxelGrid(centers=rel, occupancy=grid.occupancy,
                     object_center=grid.object_center,
                     bounds_lo=grid.bounds_lo, bounds_hi=grid.bounds_hi)


def empty_grid_flat(res: int = GRID_RES) -> np.ndarray:
    """All-zero grid used when no interaction object is in play."""
    return np.zeros(res ** 3 * GRID_VALUES)
