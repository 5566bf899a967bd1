"""Stochastic scene-aware character motion: goal sampling, path planning,
and autoregressive motion synthesis with a mixture-of-experts decoder."""

from .errors import SceneMotionError
from .goals import Goal
from .kinematics import RootTransform, Skeleton, default_skeleton, tiny_skeleton
from .state import ACTIONS, CharacterState, StateConfig, state_dim
from .voxel import Box, Scene, SceneObject, VoxelGrid, voxelize_object
from .presets import get_preset

__version__ = "0.1.0"

__all__ = [
    "ACTIONS",
    "Box",
    "CharacterState",
    "Goal",
    "RootTransform",
    "Scene",
    "SceneMotionError",
    "SceneObject",
    "Skeleton",
    "StateConfig",
    "VoxelGrid",
    "default_skeleton",
    "get_preset",
    "state_dim",
    "tiny_skeleton",
    "voxelize_object",
    "__version__",
]
