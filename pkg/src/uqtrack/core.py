"""Shared domain types, box geometry and Gaussian density helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

N_VARS = 4
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class UQTrackError(Exception):
    """Base class for all toolkit errors."""


class InvalidBoxError(UQTrackError, ValueError):
    pass


class DomainError(UQTrackError, ValueError):
    pass


class ShapeError(UQTrackError, ValueError):
    pass


class EmptyInputError(UQTrackError, ValueError):
    pass


class ConfigError(UQTrackError, ValueError):
    pass


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


@dataclass(frozen=True)
class BoxState:
    """Axis-aligned box in the bird's-eye plane, center/extent form (meters)."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not _finite(self.cx, self.cy, self.w, self.h):
            raise InvalidBoxError(f"non-finite box {self!r}")
        if self.w <= 0 or self.h <= 0:
            raise InvalidBoxError(f"non-positive extent in {self!r}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.cx, self.cy, self.w, self.h)

    @classmethod
    def from_vector(cls, v: Sequence[float]) -> "BoxState":
        if len(v) != N_VARS:
            raise ShapeError(f"box vector needs {N_VARS} entries, got {len(v)}")
        return cls(float(v[0]), float(v[1]), float(v[2]), float(v[3]))


@dataclass(frozen=True)
class Detection:
    """One detector output: class probability, per-variable Gaussian (mean, sigma), score."""

    class_prob: float
    mean: tuple[float, float, float, float]
    sigma: tuple[float, float, float, float]
    score: float

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(m) for m in self.mean))
        object.__setattr__(self, "sigma", tuple(float(s) for s in self.sigma))
        if len(self.mean) != N_VARS or len(self.sigma) != N_VARS:
            raise ShapeError("detection mean and sigma need 4 entries each")
        if not _finite(*self.sigma) or any(s <= 0 for s in self.sigma):
            raise DomainError(f"detection sigma must be positive, got {self.sigma}")
        if not (0.0 <= self.class_prob <= 1.0):
            raise DomainError(f"class_prob {self.class_prob} outside [0, 1]")
        if not (0.0 <= self.score <= 1.0):
            raise DomainError(f"score {self.score} outside [0, 1]")
        # raises InvalidBoxError on a bad mean
        BoxState.from_vector(self.mean)

    @property
    def box(self) -> BoxState:
        return BoxState.from_vector(self.mean)


@dataclass(frozen=True)
class GtObject:
    frame: int
    object_id: int
    box: BoxState

    def __post_init__(self):
        if self.frame < 0:
            raise DomainError(f"negative frame index {self.frame}")


@dataclass(frozen=True)
class Scene:
    """Per-frame detection lists plus scene metadata.

    ``frames`` is a tuple of ``(frame_index, tuple_of_detections)`` with
    strictly increasing indices.
    """

    frames: tuple[tuple[int, tuple[Detection, ...]], ...]
    frame_rate: float = 10.0
    field_extent: float = 100.0
    seed: int | None = None
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        frames = tuple((int(f), tuple(dets)) for f, dets in self.frames)
        object.__setattr__(self, "frames", frames)
        idx = [f for f, _ in frames]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise DomainError("scene frame indices must be strictly increasing")

    def __len__(self) -> int:
        return len(self.frames)


def box_corners(box: BoxState) -> tuple[float, float, float, float]:
    """Return ``(x_min, y_min, x_max, y_max)`` for a center/extent box."""
    hw, hh = box.w / 2.0, box.h / 2.0
    return (box.cx - hw, box.cy - hh, box.cx + hw, box.cy + hh)


def corners_to_box(x_min: float, y_min: float, x_max: float, y_max: float) -> BoxState:
    return BoxState((x_min + x_max) / 2.0, (y_min + y_max) / 2.0, x_max - x_min, y_max - y_min)


def gaussian_logpdf(y: float, mu: float, sigma: float) -> float:
    if not sigma > 0 or not _finite(y, mu, sigma):
        raise DomainError(f"gaussian_logpdf needs finite inputs and sigma > 0, got sigma={sigma}")
    z = (y - mu) / sigma
    return -math.log(sigma) - LOG_SQRT_2PI - 0.5 * z * z


def gaussian_logpdf_array(y, mu, sigma) -> np.ndarray:
    """Vectorized ``gaussian_logpdf``; broadcasts its arguments."""
    y, mu, sigma = np.asarray(y, float), np.asarray(mu, float), np.asarray(sigma, float)
    if np.any(sigma <= 0):
        raise DomainError("sigma must be positive")
    z = (y - mu) / sigma
    return -np.log(sigma) - LOG_SQRT_2PI - 0.5 * z * z
