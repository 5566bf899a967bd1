import math

import numpy as np
import pytest
import scipy.linalg

from scenemotion.errors import (
    DegenerateCovariance,
    NotExecuted,
    TooFewFrames,
    TooFewGoals,
)
from scenemotion.goals import Goal
from scenemotion.kinematics import RootTransform
from scenemotion.metrics import (
    apd,
    apd_goals,
    apd_rollouts,
    execution_time,
    frechet_distance,
    frechet_from_moments,
    gaussian_moments,
    penetration_pct,
    precision,
)
from scenemotion.voxel import Box, Scene, SceneObject


def test_apd_hand_cases():
    # two rows distance 1 apart: both ordered pairs contribute 1 -> 1.0
    assert abs(apd(np.array([[0.0, 0.0], [1.0, 0.0]])) - 1.0) < 1e-9
    # rows 0, 1, 3 on a line: squared distances 1, 9, 4 sum to 14 over
    # 6 ordered pairs -> 14/3
    assert abs(apd(np.array([[0.0], [1.0], [3.0]])) - 14.0 / 3.0) < 1e-9
    assert apd(np.zeros((5, 3))) == 0.0
    with pytest.raises(TooFewFrames):
        apd(np.zeros((1, 3)))


def test_apd_matches_brute_force():
    rng = np.random.default_rng(41)
    rows = rng.normal(size=(12, 7))
    brute = 0.0
    n = len(rows)
    for i in range(n):
        for j in range(n):
            if i != j:
                brute += float(np.sum((rows[i] - rows[j]) ** 2))
    brute /= n * (n - 1)
    assert np.isclose(apd(rows), brute, rtol=1e-12)


def test_apd_rollouts_zero_for_identical_sequences():
    seq = np.random.default_rng(42).normal(size=(20, 6))
    assert apd_rollouts([seq, seq.copy(), seq.copy()]) == 0.0
    other = seq + 1.0
    assert apd_rollouts([seq, other]) > 0.0
    with pytest.raises(TooFewFrames):
        apd_rollouts([seq])


def test_apd_goals_normalization():
    a = Goal(np.zeros(3), np.array([1.0, 0, 0]))
    b = Goal(np.array([2.0, 0, 0]), np.array([0.0, 1.0, 0]))
    pos, rot = apd_goals([[a, b]])
    assert np.isclose(pos, 2.0)
    assert np.isclose(rot, math.pi / 2)
    with pytest.raises(TooFewGoals):
        apd_goals([[a]])
    with pytest.raises(TooFewGoals):
        apd_goals([])


def test_frechet_identical_sets_is_zero():
    rng = np.random.default_rng(43)
    rows = rng.normal(size=(200, 5))
    assert frechet_distance(rows, rows.copy()) < 1e-6


def test_frechet_one_dimensional_closed_form():
    # N(0,1) vs N(1,1): squared mean gap 1, covariance terms cancel
    val = frechet_from_moments(np.array([0.0]), np.array([[1.0]]),
                               np.array([1.0]), np.array([[1.0]]))
    assert abs(val - 1.0) < 1e-6


def test_frechet_matches_scipy_sqrtm_oracle():
    rng = np.random.default_rng(44)
    for _ in range(10):
        d = 4
        a = rng.normal(size=(d, d))
        b = rng.normal(size=(d, d))
        cov1 = a @ a.T + 0.1 * np.eye(d)
        cov2 = b @ b.T + 0.1 * np.eye(d)
        mu1, mu2 = rng.normal(size=d), rng.normal(size=d)
        got = frechet_from_moments(mu1, cov1, mu2, cov2)
        cross = scipy.linalg.sqrtm(cov1 @ cov2)
        if np.iscomplexobj(cross):
            cross = cross.real
        want = float((mu1 - mu2) @ (mu1 - mu2) + np.trace(cov1) + np.trace(cov2)
                     - 2.0 * np.trace(cross))
        assert np.isclose(got, want, rtol=1e-6, atol=1e-8)


def test_frechet_rejects_bad_covariance():
    with pytest.raises(DegenerateCovariance):
        frechet_from_moments(np.zeros(2), -np.eye(2), np.zeros(2), np.eye(2))
    with pytest.raises(TooFewFrames):
        gaussian_moments(np.zeros((1, 3)))
    with pytest.raises(DegenerateCovariance):
        gaussian_moments(np.array([[np.nan, 0.0], [1.0, 2.0]]))


def test_gaussian_moments_population_semantics():
    rng = np.random.default_rng(45)
    rows = rng.normal(size=(100, 3))
    mu, cov = gaussian_moments(rows)
    assert np.allclose(mu, rows.mean(axis=0))
    assert np.allclose(cov, np.cov(rows, rowvar=False))
    # scarce rows get shrinkage so the product stays PSD
    mu2, cov2 = gaussian_moments(rng.normal(size=(3, 5)))
    assert np.all(np.linalg.eigvalsh(cov2) > 0)


def test_execution_time_first_persistent_window():
    fps = 30
    n_a, target = 5, 3
    rows = np.zeros((120, n_a))
    rows[:, 1] = 1.0  # walk everywhere
    # a 20-frame flicker of the target does not count
    rows[40:60, 1] = 0.0
    rows[40:60, target] = 1.0
    # the real switch at frame 80
    rows[80:, 1] = 0.0
    rows[80:, target] = 1.0
    assert execution_time(rows, target, fps) == 80 / fps
    # never executed
    assert execution_time(rows[:80], target, fps) == math.inf
    assert execution_time(np.zeros((0, n_a)), target, fps) == math.inf
    # exactly one window at the end counts
    rows2 = np.zeros((30, n_a))
    rows2[:, target] = 1.0
    assert execution_time(rows2, target, fps) == 0.0


def test_precision_position_and_heading():
    goal = Goal(np.array([2.0, 0.5, 3.0]), np.array([0.0, 0.0, 1.0]), "sit")
    root = RootTransform(np.array([2.0, 2.0]), np.array([1.0, 0.0]))
    pe, re = precision(root, goal)
    assert np.isclose(pe, 1.0)
    assert np.isclose(re, 90.0)
    exact = RootTransform(np.array([2.0, 3.0]), np.array([0.0, 1.0]))
    pe, re = precision(exact, goal)
    assert pe < 1e-12 and re < 1e-6
    with pytest.raises(NotExecuted):
        precision(None, goal)


def test_penetration_pct_counts_joints_inside():
    obj = SceneObject(id="b", category="box",
                      boxes=[Box(np.array([0.0, 0.5, 0.0]), np.array([0.5, 0.5, 0.5]))])
    scene = Scene([obj])
    inside = np.array([[[0.0, 0.5, 0.0]]])  # (1 frame, 1 joint, 3)
    outside = np.array([[[3.0, 0.5, 0.0]]])
    assert penetration_pct(inside, scene) == 100.0
    assert penetration_pct(outside, scene) == 0.0
    # near-surface joints within the sphere radius count as touching
    graze = np.array([[[0.54, 0.5, 0.0]]])
    assert penetration_pct(graze, scene) == 100.0
    clear = np.array([[[0.56, 0.5, 0.0]]])
    assert penetration_pct(clear, scene) == 0.0
    # frame-level metric: one penetrating frame out of two
    half = np.array([[[0.0, 0.5, 0.0]], [[3.0, 0.5, 0.0]]])
    assert penetration_pct(half, scene) == 50.0
    # the target object itself is exempt
    assert penetration_pct(inside, scene, target_id="b") == 0.0
