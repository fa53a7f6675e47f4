"""Split conformal calibration of per-variable detection standard deviations.

The score of a matched (detection, truth) pair for variable ``i`` is the
standardized residual ``|y - mean| / sigma``.  The calibrated quantile is the
``ceil((1 - alpha)(M + 1))``-th smallest score, and rectified detections carry
``sigma * q``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    N_VARS,
    DomainError,
    Detection,
    EmptyInputError,
    GtObject,
    ShapeError,
)

log = logging.getLogger(__name__)

QUANTILE_FLOOR = 1e-9


class DegenerateQuantileWarning(UserWarning):
    pass


@dataclass(frozen=True)
class MatchedPair:
    gt_value: float
    pred_mean: float
    pred_sigma: float
    variable_index: int

    def __post_init__(self):
        if not self.pred_sigma > 0:
            raise DomainError(f"pred_sigma must be positive, got {self.pred_sigma}")
        if not 0 <= self.variable_index < N_VARS:
            raise DomainError(f"variable_index {self.variable_index} outside [0, {N_VARS})")


@dataclass(frozen=True)
class QuantileSet:
    alpha: float
    quantiles: tuple[float, ...]
    calibration_count: int
    clamped: tuple[bool, ...] = (False,) * N_VARS

    def __post_init__(self):
        object.__setattr__(self, "quantiles", tuple(float(q) for q in self.quantiles))
        object.__setattr__(self, "clamped", tuple(bool(c) for c in self.clamped))
        if not 0 < self.alpha < 1:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if any(not q > 0 for q in self.quantiles):
            raise DomainError(f"quantiles must be positive, got {self.quantiles}")
        if self.calibration_count < 1:
            raise DomainError("calibration_count must be >= 1")
        if len(self.clamped) != len(self.quantiles):
            raise ShapeError("clamped flags and quantiles differ in length")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "calibration_count": self.calibration_count,
            "quantiles": list(self.quantiles),
            "clamped": list(self.clamped),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "QuantileSet":
        return cls(
            alpha=float(d["alpha"]),
            quantiles=tuple(float(q) for q in d["quantiles"]),
            calibration_count=int(d["calibration_count"]),
            clamped=tuple(bool(c) for c in d.get("clamped", [False] * len(d["quantiles"]))),
        )


def nonconformity_score(gt_value: float, pred_mean: float, pred_sigma: float) -> float:
    if not pred_sigma > 0:
        raise DomainError(f"pred_sigma must be positive, got {pred_sigma}")
    return abs(gt_value - pred_mean) / pred_sigma


def conformal_quantile(scores: Iterable[float], alpha: float) -> tuple[float, bool]:
    """Finite-sample conformal quantile of ``scores``.

    Returns ``(q, clamped)``; ``clamped`` is set when the order-statistic index
    ``ceil((1 - alpha)(M + 1))`` exceeds ``M`` and the maximum score is used.
    """
    s = np.sort(np.asarray(list(scores) if not isinstance(scores, np.ndarray) else scores, float))
    if s.size == 0:
        raise EmptyInputError("conformal_quantile needs at least one score")
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    m = s.size
    # guard against (1-alpha)(M+1) landing a hair above an integer
    k = math.ceil(round((1.0 - alpha) * (m + 1), 9))
    if k > m:
        return float(s[-1]), True
    return float(s[max(k, 1) - 1]), False


def _match_frame(dets: Sequence[Detection], gts: Sequence[GtObject], match_iou: float):
    from .association import hungarian, iou_matrix

    if not dets or not gts:
        return []
    ious = iou_matrix([d.box for d in dets], [g.box for g in gts])
    pairs = hungarian(1.0 - ious)
    return [(dets[r], gts[c]) for r, c in pairs if ious[r, c] >= match_iou]


def collect_matched(
    detections_by_frame: Mapping[int, Sequence[Detection]] | Sequence[tuple[int, Sequence[Detection]]],
    gt: Sequence[GtObject],
    match_iou: float = 0.5,
) -> list[tuple[Detection, GtObject]]:
    """Pair detections with ground truth frame by frame (IoU-gated Hungarian).

    Pairs are returned in frame order, which fixes the score order before
    sorting regardless of how frames were supplied.
    """
    if isinstance(detections_by_frame, Mapping):
        frames = sorted(detections_by_frame.items())
    else:
        frames = sorted(detections_by_frame, key=lambda fd: fd[0])
    gt_by_frame: dict[int, list[GtObject]] = {}
    for g in gt:
        gt_by_frame.setdefault(g.frame, []).append(g)
    out = []
    for frame, dets in frames:
        out.extend(_match_frame(list(dets), gt_by_frame.get(frame, []), match_iou))
    return out


def pair_scores(pairs: Sequence[tuple[Detection, GtObject]]) -> np.ndarray:
    """``(M, 4)`` array of nonconformity scores for matched pairs."""
    if not pairs:
        return np.empty((0, N_VARS))
    mean = np.array([d.mean for d, _ in pairs])
    sigma = np.array([d.sigma for d, _ in pairs])
    truth = np.array([g.box.as_tuple() for _, g in pairs])
    return np.abs(truth - mean) / sigma


def quantiles_from_scores(scores: np.ndarray, alpha: float) -> QuantileSet:
    scores = np.asarray(scores, float)
    if scores.ndim != 2 or scores.shape[0] == 0:
        raise EmptyInputError("no calibration scores")
    qs, flags = [], []
    for i in range(scores.shape[1]):
        q, clamped = conformal_quantile(scores[:, i], alpha)
        if q <= 0:
            warnings.warn(
                f"variable {i}: all calibration scores are zero; flooring quantile at {QUANTILE_FLOOR}",
                DegenerateQuantileWarning,
                stacklevel=2,
            )
            q = QUANTILE_FLOOR
        qs.append(q)
        flags.append(clamped)
    return QuantileSet(alpha=alpha, quantiles=tuple(qs), calibration_count=scores.shape[0], clamped=tuple(flags))


def calibrate(cal_detections, cal_gt: Sequence[GtObject], alpha: float, match_iou: float = 0.5) -> QuantileSet:
    """Calibrate per-variable quantiles on a held-out detection set.

    ``cal_detections`` is a ``Scene``, a mapping ``frame -> detections`` or a
    sequence of ``(frame, detections)``.
    """
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    frames = getattr(cal_detections, "frames", cal_detections)
    if not frames:
        raise EmptyInputError("calibration needs at least one frame")
    pairs = collect_matched(frames, cal_gt, match_iou)
    if not pairs:
        raise EmptyInputError(f"no detection matched any ground truth at IoU >= {match_iou}")
    qset = quantiles_from_scores(pair_scores(pairs), alpha)
    log.info("calibrated on %d matched pairs: q=%s", qset.calibration_count, qset.quantiles)
    return qset


def apply_quantiles(d: Detection, q: QuantileSet) -> Detection:
    if len(d.sigma) != len(q.quantiles):
        raise ShapeError(f"sigma has {len(d.sigma)} entries but {len(q.quantiles)} quantiles given")
    return replace(d, sigma=tuple(s * qi for s, qi in zip(d.sigma, q.quantiles)))


def prediction_interval(pred_mean: float, pred_sigma: float, q: float) -> tuple[float, float]:
    if not pred_sigma > 0:
        raise DomainError(f"pred_sigma must be positive, got {pred_sigma}")
    if q < 0:
        raise DomainError(f"q must be nonnegative, got {q}")
    half = pred_sigma * q
    return (pred_mean - half, pred_mean + half)


def empirical_coverage(test_pairs: Sequence[MatchedPair], q: QuantileSet) -> tuple[float, ...]:
    """Per-variable fraction of truths inside the calibrated interval.

    Variables with no test pairs report ``nan``.
    """
    if not test_pairs:
        raise EmptyInputError("empirical_coverage needs at least one pair")
    hits = [0] * len(q.quantiles)
    counts = [0] * len(q.quantiles)
    for p in test_pairs:
        lo, hi = prediction_interval(p.pred_mean, p.pred_sigma, q.quantiles[p.variable_index])
        counts[p.variable_index] += 1
        hits[p.variable_index] += lo <= p.gt_value <= hi
    return tuple(h / c if c else float("nan") for h, c in zip(hits, counts))


def coverage_arrays(truth: np.ndarray, mean: np.ndarray, sigma: np.ndarray, q: QuantileSet) -> np.ndarray:
    """Array form of :func:`empirical_coverage` for ``(n, I)`` inputs."""
    truth, mean, sigma = (np.asarray(a, float) for a in (truth, mean, sigma))
    if truth.shape[0] == 0:
        raise EmptyInputError("coverage needs at least one row")
    half = sigma * np.asarray(q.quantiles)
    inside = (truth >= mean - half) & (truth <= mean + half)
    return inside.mean(axis=0)


def kl_regression_loss(gt_value: float, pred_mean: float, pred_sigma: float) -> float:
    """Gaussian-vs-Dirac regression loss used to train mean/sigma heads."""
    if not pred_sigma > 0:
        raise DomainError(f"pred_sigma must be positive, got {pred_sigma}")
    e = gt_value - pred_mean
    return e * e / (2.0 * pred_sigma * pred_sigma) + math.log(pred_sigma)
