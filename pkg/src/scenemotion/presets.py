"""Named hyperparameter bundles: full-size and a fast test-size preset."""

from __future__ import annotations

from dataclasses import dataclass, field

from .goal_model import GoalArch
from .kinematics import Skeleton, default_skeleton, tiny_skeleton
from .motion_model import MotionArch, ScheduleConfig
from .state import StateConfig


@dataclass(frozen=True)
class RunPreset:
    name: str
    cfg: StateConfig
    motion_arch: MotionArch
    schedule: ScheduleConfig
    goal_arch: GoalArch
    goal_epochs: int
    goal_lr: float
    goal_beta2: float
    datagen_counts: dict = field(default_factory=dict)

    def skeleton(self) -> Skeleton:
        return default_skeleton() if self.cfg.joints == 22 else tiny_skeleton()


def full_preset() -> RunPreset:
    return RunPreset(
        name="full",
        cfg=StateConfig(),
        motion_arch=MotionArch(),
        schedule=ScheduleConfig(),
        goal_arch=GoalArch(),
        goal_epochs=100,
        goal_lr=1e-3,
        goal_beta2=0.5,
        datagen_counts={"idle": 2, "walk": 6, "run": 3, "sit": 10, "liedown": 5},
    )


def tiny_preset() -> RunPreset:
    return RunPreset(
        name="tiny",
        cfg=StateConfig(joints=15, samples=3),
        motion_arch=MotionArch(state_enc=(64, 48), inter_enc=(48, 48), latent=8,
                               gating=(32,), experts=3, pred_hidden=(64, 64)),
        schedule=ScheduleConfig(c1=3, c2=10, rollout=12, epochs=36, beta1=0.1,
                                lr=3e-4, batch_clips=8),
        goal_arch=GoalArch(inter_enc=(64, 64, 16), tail=16, latent=3),
        goal_epochs=60,
        goal_lr=1e-3,
        # 0.5 collapses the 3-d latent on synthetic multi-goal objects; the
        # mode spacing in half-diagonal units is too small to pay that KL price
        goal_beta2=0.01,
        datagen_counts={"idle": 2, "walk": 4, "run": 2, "sit": 12, "liedown": 4},
    )


PRESETS = {"full": full_preset, "tiny": tiny_preset}


def get_preset(name: str) -> RunPreset:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name]()
