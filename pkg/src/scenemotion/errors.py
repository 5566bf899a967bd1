"""Error taxonomy shared by all modules."""


class SceneMotionError(Exception):
    """Base class for all library errors."""


# kinematics
class DegenerateRotation(SceneMotionError):
    pass


class NotARotation(SceneMotionError):
    pass


# state
class LengthMismatch(SceneMotionError):
    pass


class NonIntegerStride(SceneMotionError):
    pass


class InsufficientHistory(SceneMotionError):
    pass


# voxel / scenes
class EmptyObject(SceneMotionError):
    pass


class DegenerateScene(SceneMotionError):
    pass


class UnknownObject(SceneMotionError):
    pass


# networks
class DimMismatch(SceneMotionError):
    pass


class NonFiniteGradient(SceneMotionError):
    pass


class WeightsNotNormalized(SceneMotionError):
    pass


class NonFiniteOutput(SceneMotionError):
    pass


class ZeroDirection(SceneMotionError):
    pass


# planner
class Unreachable(SceneMotionError):
    pass


class BlockedStart(SceneMotionError):
    pass


# dataset / io
class NoGoal(SceneMotionError):
    pass


class CorruptHeader(SceneMotionError):
    pass


class EmptyDataset(SceneMotionError):
    pass


# metrics
class TooFewFrames(SceneMotionError):
    pass


class TooFewGoals(SceneMotionError):
    pass


class DegenerateCovariance(SceneMotionError):
    pass


class NotExecuted(SceneMotionError):
    pass
