"""Constant-velocity Kalman filter whose measurement noise comes from per-detection sigma."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import N_VARS, BoxState, Detection, DomainError, UQTrackError

DIM_X = 2 * N_VARS


class FilterDegenerateError(UQTrackError, ArithmeticError):
    pass


@dataclass(frozen=True)
class MotionParams:
    q_pos: float = 1e-2
    q_vel: float = 1e-4
    velocity_var: float = 100.0
    min_extent: float = 1e-3
    max_condition: float = 1e12


DEFAULT_PARAMS = MotionParams()

_F = np.eye(DIM_X)
_F[:N_VARS, N_VARS:] = np.eye(N_VARS)
_H = np.zeros((N_VARS, DIM_X))
_H[:, :N_VARS] = np.eye(N_VARS)


def transition_matrix() -> np.ndarray:
    return _F.copy()


def observation_matrix() -> np.ndarray:
    return _H.copy()


def process_noise(params: MotionParams = DEFAULT_PARAMS) -> np.ndarray:
    return np.diag([params.q_pos] * N_VARS + [params.q_vel] * N_VARS)


@dataclass
class Tracklet:
    track_id: int
    state: np.ndarray
    covariance: np.ndarray
    last_sigma: tuple[float, ...]
    hits: int = 1
    age: int = 0
    time_since_update: int = 0
    last_score: float = 1.0
    extra: dict = field(default_factory=dict, repr=False)

    def copy(self) -> "Tracklet":
        return replace(self, state=self.state.copy(), covariance=self.covariance.copy(), extra=dict(self.extra))


def init_tracklet(d: Detection, track_id: int, params: MotionParams = DEFAULT_PARAMS,
                  position_var=None) -> Tracklet:
    """Start a tracklet at detection ``d`` with zero velocity.

    The position block of the covariance is ``sigma**2`` unless
    ``position_var`` (4 variances) is supplied, as the fixed-noise path does.
    """
    if not isinstance(d, Detection):
        raise DomainError("init_tracklet needs a Detection")
    state = np.zeros(DIM_X)
    state[:N_VARS] = d.mean
    pos_var = np.square(d.sigma) if position_var is None else np.asarray(position_var, float)
    cov = np.diag(np.concatenate([pos_var, np.full(N_VARS, params.velocity_var)]))
    return Tracklet(track_id=track_id, state=state, covariance=cov, last_sigma=tuple(d.sigma),
                    hits=1, age=0, time_since_update=0, last_score=d.score)


def predict(t: Tracklet, params: MotionParams = DEFAULT_PARAMS) -> Tracklet:
    out = t.copy()
    out.state = _F @ t.state
    np.maximum(out.state[2:4], params.min_extent, out=out.state[2:4])
    cov = _F @ t.covariance @ _F.T + process_noise(params)
    out.covariance = 0.5 * (cov + cov.T)
    if t.time_since_update > 0:
        out.hits = 0
    out.age = t.age + 1
    out.time_since_update = t.time_since_update + 1
    return out


def kf_update(t: Tracklet, z, r_diag, params: MotionParams = DEFAULT_PARAMS) -> Tracklet:
    """Kalman measurement update with diagonal measurement noise ``r_diag``."""
    z = np.asarray(z, float)
    R = np.diag(np.asarray(r_diag, float))
    P = t.covariance
    PHt = P[:, :N_VARS]
    S = P[:N_VARS, :N_VARS] + R
    if np.linalg.cond(S) > params.max_condition:
        raise FilterDegenerateError(f"innovation covariance is ill-conditioned for track {t.track_id}")
    K = np.linalg.solve(S, PHt.T).T
    innovation = z - t.state[:N_VARS]
    out = t.copy()
    out.state = t.state + K @ innovation
    np.maximum(out.state[2:4], params.min_extent, out=out.state[2:4])
    # Joseph form keeps P symmetric PSD for extreme R
    A = np.eye(DIM_X) - K @ _H
    cov = A @ P @ A.T + K @ R @ K.T
    out.covariance = 0.5 * (cov + cov.T)
    out.hits = t.hits + 1
    out.time_since_update = 0
    return out


def sdkf_update(t: Tracklet, d: Detection, params: MotionParams = DEFAULT_PARAMS) -> Tracklet:
    out = kf_update(t, d.mean, np.square(d.sigma), params)
    out.last_sigma = tuple(d.sigma)
    out.last_score = d.score
    return out


def fixed_update(t: Tracklet, d: Detection, fixed_r, params: MotionParams = DEFAULT_PARAMS) -> Tracklet:
    """Classical update: constant measurement variance regardless of the detection."""
    out = kf_update(t, d.mean, fixed_r, params)
    out.last_sigma = tuple(d.sigma)
    out.last_score = d.score
    return out


def tracklet_box(t: Tracklet) -> BoxState:
    return BoxState.from_vector(t.state[:N_VARS])
