"""Deterministic synthetic demonstration generators.

Stand-ins for the handwriting and handover recordings used in the
experiments: a two-stroke letter-'A' scribe (time -> 2D position) and a
minimum-jerk handover (hand position -> end-effector position).  Scales are
chosen so 100-step plans keep consecutive-point gaps safely below the
planner's continuity thresholds.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import PchipInterpolator

from .refdist import Demonstration

# Letter-'A' pen waypoints: up the left leg, down the right leg, back across
# to the bar, then the bar itself.  The bar crosses both legs, giving the two
# self-intersection regions the two-via-point trials rely on.  Sized so that a
# 100-step plan keeps point gaps well below the 0.5 continuity threshold.
_A_WAYPOINTS = np.array(
    [
        [-3.2, -4.8],
        [0.0, 4.8],
        [3.2, -4.8],
        [-2.4, -0.48],
        [2.16, -0.48],
    ]
)

LETTER_A_DEMOS = 10
LETTER_A_SAMPLES = 200

HANDOVER_DEMOS = 5
HANDOVER_SAMPLES = 150

# Handover geometry (metres): the "hand" side travels toward a meeting point,
# the end-effector converges there from the opposite side of the desk.
_HAND_START = np.array([-0.45, -0.35, 0.25])
_HAND_MEET = np.array([0.0, -0.05, 0.35])
_ROBOT_START = np.array([0.40, 0.30, 0.15])
_ROBOT_MEET_OFFSET = np.array([0.0, -0.07, 0.0])


def _knot_times(waypoints: np.ndarray) -> np.ndarray:
    lengths = np.linalg.norm(np.diff(waypoints, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    return cum / cum[-1]


def _smooth_noise(t: np.ndarray, rng: np.random.Generator, amplitude: float, width: float, n_bumps: int) -> np.ndarray:
    centers = rng.uniform(0.0, 1.0, size=n_bumps)
    amps = rng.normal(0.0, amplitude, size=n_bumps)
    return (amps[None, :] * np.exp(-0.5 * ((t[:, None] - centers[None, :]) / width) ** 2)).sum(axis=1)


def _constant_speed(spline, t: np.ndarray) -> np.ndarray:
    """Resample a spline path at uniform arc length over the query times."""
    dense_t = np.linspace(0.0, 1.0, 2000)
    dense = spline(dense_t)
    seg = np.linalg.norm(np.diff(dense, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    arc /= arc[-1]
    return spline(np.interp(t, arc, dense_t))


def make_letter_a_demos(
    seed: int, n_demos: int = LETTER_A_DEMOS, n_samples: int = LETTER_A_SAMPLES
) -> list[Demonstration]:
    """Letter-'A' demonstrations: time t in [0, 1] against 2D pen position.

    The pen moves at constant speed along the stroke, so finite-horizon plans
    sampled from the learned model have near-uniform point spacing.
    """
    rng = np.random.default_rng(seed)
    base_knots = _knot_times(_A_WAYPOINTS)
    t = np.linspace(0.0, 1.0, n_samples)
    demos = []
    for _ in range(n_demos):
        pts = _A_WAYPOINTS + rng.normal(0.0, 0.35, size=_A_WAYPOINTS.shape)
        knots = base_knots + np.concatenate([[0.0], rng.normal(0.0, 0.01, size=3), [0.0]])
        gaps = np.maximum(np.diff(knots), 0.02)  # spline knots must stay increasing
        knots = np.concatenate([[0.0], np.cumsum(gaps)]) / gaps.sum()
        xy = _constant_speed(PchipInterpolator(knots, pts, axis=0), t)
        for dim in range(2):
            xy[:, dim] += _smooth_noise(t, rng, amplitude=0.08, width=0.08, n_bumps=6)
        xy += rng.normal(0.0, 0.02, size=xy.shape)
        demos.append(Demonstration(t[:, None], xy))
    return demos


def _min_jerk(t: np.ndarray) -> np.ndarray:
    return 10 * t**3 - 15 * t**4 + 6 * t**5


def make_handover_demos(
    seed: int, n_demos: int = HANDOVER_DEMOS, n_samples: int = HANDOVER_SAMPLES
) -> list[Demonstration]:
    """Handover demonstrations: 3D hand position against 3D end-effector position."""
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, n_samples)
    profile = _min_jerk(t)[:, None]
    demos = []
    for _ in range(n_demos):
        hand_start = _HAND_START + rng.normal(0.0, 0.02, size=3)
        meet = _HAND_MEET + rng.normal(0.0, 0.012, size=3)
        robot_start = _ROBOT_START + rng.normal(0.0, 0.02, size=3)
        robot_meet = meet + _ROBOT_MEET_OFFSET + rng.normal(0.0, 0.01, size=3)
        hand = hand_start + profile * (meet - hand_start)
        robot = robot_start + profile * (robot_meet - robot_start)
        for dim in range(3):
            hand[:, dim] += _smooth_noise(t, rng, amplitude=0.004, width=0.12, n_bumps=4)
            robot[:, dim] += _smooth_noise(t, rng, amplitude=0.004, width=0.12, n_bumps=4)
        hand += rng.normal(0.0, 0.002, size=hand.shape)
        robot += rng.normal(0.0, 0.002, size=robot.shape)
        demos.append(Demonstration(hand, robot))
    return demos


def nominal_hand_path(n_points: int) -> np.ndarray:
    """Noise-free hand trajectory used as the query grid in the handover task."""
    t = np.linspace(0.0, 1.0, n_points)
    return _HAND_START + _min_jerk(t)[:, None] * (_HAND_MEET - _HAND_START)
