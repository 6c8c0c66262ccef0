"""Short-horizon trajectory prediction from uniformly sampled pose history.

Two predictors share one interface: a constant-velocity extrapolator and a
four-state (x, y, vx, vy) Kalman filter with a white-noise-acceleration
process model.  Features for learned models are expressed in the ego frame of
the newest pose so they are invariant to global translation and rotation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, NumericalFailure
from .geometry import rot2, wrap_angle
from .scene import Pose

HISTORY_STEPS = 30
KF_Q_VAR = 10.0
KF_R_VAR = 0.001
KF_P0_VEL = 1000.0
HEADING_SPEED_MIN = 0.5


@dataclass(frozen=True)
class HistoryWindow:
    """K >= 2 poses of one vehicle at a uniform time step."""

    times: np.ndarray  # (K,)
    positions: np.ndarray  # (K, 2)
    headings: np.ndarray  # (K,)
    speeds: np.ndarray  # (K,)

    def __post_init__(self):
        k = len(self.times)
        if k < 2:
            raise ValueError(f"history window needs >= 2 samples, got {k}")
        diffs = np.diff(self.times)
        if np.any(diffs <= 0) or np.any(np.abs(diffs - diffs[0]) > 1e-6):
            raise ValueError("history window must have a uniform positive dt")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def last_pose(self) -> Pose:
        return Pose(position=self.positions[-1].copy(),
                    heading=float(self.headings[-1]),
                    speed=float(self.speeds[-1]))


def window_from_arrays(times, positions, headings, speeds) -> HistoryWindow:
    return HistoryWindow(times=np.asarray(times, dtype=float),
                         positions=np.asarray(positions, dtype=float),
                         headings=np.asarray(headings, dtype=float),
                         speeds=np.asarray(speeds, dtype=float))


def _velocities(window: HistoryWindow) -> np.ndarray:
    return window.speeds[:, None] * np.stack(
        [np.cos(window.headings), np.sin(window.headings)], axis=1)


def ego_transform(window: HistoryWindow) -> np.ndarray:
    """Feature matrix (K, 5) in the frame of the newest pose.

    Columns are [x', y', vx', vy', heading].  Positions are shifted to the
    newest position and rotated so the newest heading points along +x;
    velocities (speed along heading) get the same rotation.  Headings stay
    global, matching how downstream models consume them.
    """
    rot_t = rot2(float(window.headings[-1])).T
    rel = window.positions - window.positions[-1]
    pos_ego = rel @ rot_t.T
    vel_ego = _velocities(window) @ rot_t.T
    return np.column_stack([pos_ego, vel_ego, window.headings])


def inverse_ego_transform(features: np.ndarray, anchor: Pose) -> np.ndarray:
    """Recover global positions from ego features and the anchor pose."""
    rot = rot2(anchor.heading)
    return features[:, :2] @ rot.T + anchor.position


def cv_predict(window: HistoryWindow, horizon: float) -> Pose:
    """Constant-velocity extrapolation using the last finite difference.

    The returned pose keeps the newest heading; speed is the magnitude of the
    differenced velocity.
    """
    dt = window.dt
    vel = (window.positions[-1] - window.positions[-2]) / dt
    pos = window.positions[-1] + vel * horizon
    return Pose(position=pos, heading=float(window.headings[-1]),
                speed=float(np.hypot(*vel)))


def kf_predict(window: HistoryWindow, horizon: float, q_var: float = KF_Q_VAR,
               r_var: float = KF_R_VAR, p0_vel: float = KF_P0_VEL) -> Pose:
    """Kalman-filter position prediction `horizon` seconds past the window.

    State is (x, y, vx, vy) under a constant-velocity model with
    white-noise-acceleration process covariance scaled by q_var; position
    measurements carry variance r_var.  The initial velocity is unknown
    (variance p0_vel).  Raises NumericalFailure if a covariance stops being
    positive definite.  Predicted heading follows the filtered velocity when
    its magnitude exceeds 0.5 m/s, otherwise the last observed heading.
    """
    dt = window.dt
    f_mat = np.eye(4)
    f_mat[0, 2] = f_mat[1, 3] = dt
    q_block = np.array([[dt ** 4 / 4, dt ** 3 / 2], [dt ** 3 / 2, dt ** 2]]) * q_var
    q_mat = np.zeros((4, 4))
    q_mat[np.ix_([0, 2], [0, 2])] = q_block
    q_mat[np.ix_([1, 3], [1, 3])] = q_block
    h_mat = np.zeros((2, 4))
    h_mat[0, 0] = h_mat[1, 1] = 1.0
    r_mat = np.eye(2) * r_var

    state = np.array([window.positions[0, 0], window.positions[0, 1], 0.0, 0.0])
    cov = np.diag([r_var, r_var, p0_vel, p0_vel])

    def check_pd(mat):
        try:
            np.linalg.cholesky(mat + np.eye(4) * 1e-15)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("filter covariance lost positive definiteness") from exc

    for k in range(1, len(window.times)):
        state = f_mat @ state
        cov = f_mat @ cov @ f_mat.T + q_mat
        innov_cov = h_mat @ cov @ h_mat.T + r_mat
        gain = cov @ h_mat.T @ np.linalg.inv(innov_cov)
        resid = window.positions[k] - h_mat @ state
        state = state + gain @ resid
        joseph = np.eye(4) - gain @ h_mat
        cov = joseph @ cov @ joseph.T + gain @ r_mat @ gain.T
        check_pd(cov)

    pos = state[:2] + state[2:] * horizon
    speed = float(np.hypot(state[2], state[3]))
    if speed > HEADING_SPEED_MIN:
        heading = float(np.arctan2(state[3], state[2]))
    else:
        heading = float(window.headings[-1])
    return Pose(position=pos, heading=wrap_angle(heading), speed=speed)


def predict(window: HistoryWindow, horizon: float, method: str = "kf",
            **kwargs) -> Pose:
    if method == "cv":
        return cv_predict(window, horizon)
    if method == "kf":
        return kf_predict(window, horizon, **kwargs)
    raise ValueError(f"unknown predictor {method!r}")


def fde(predicted, truth) -> float:
    """Mean final displacement error over paired endpoints (meters).

    Accepts either (n, 2) arrays or mappings keyed by vehicle id; mappings
    must share the same key set.
    """
    if isinstance(predicted, dict) or isinstance(truth, dict):
        if not (isinstance(predicted, dict) and isinstance(truth, dict)) \
                or set(predicted) != set(truth):
            raise LengthMismatch("prediction/truth vehicle sets differ")
        keys = sorted(predicted)
        predicted = np.array([np.asarray(predicted[k], dtype=float)[:2]
                              for k in keys])
        truth = np.array([np.asarray(truth[k], dtype=float)[:2] for k in keys])
    predicted = np.atleast_2d(np.asarray(predicted, dtype=float))
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    if predicted.shape != truth.shape:
        raise LengthMismatch(
            f"prediction/truth shapes differ: {predicted.shape} vs {truth.shape}")
    return float(np.mean(np.hypot(*(predicted - truth).T)))
