"""Similarity, optimal assignment and association passes (IoU, ByteTrack-style, NLL recovery)."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import N_VARS, LOG_SQRT_2PI, BoxState, ConfigError, Detection, DomainError, UQTrackError


class InvalidCostError(UQTrackError, ValueError):
    pass


@dataclass
class AssociationResult:
    matched: list[tuple[int, int]] = field(default_factory=list)
    unmatched_detections: list[int] = field(default_factory=list)
    unmatched_tracklets: list[int] = field(default_factory=list)

    def check_partition(self, n_dets: int, n_tracks: int, discarded: Sequence[int] = ()) -> None:
        det_idx = [d for d, _ in self.matched] + list(self.unmatched_detections) + list(discarded)
        trk_idx = [t for _, t in self.matched] + list(self.unmatched_tracklets)
        if sorted(det_idx) != list(range(n_dets)) or sorted(trk_idx) != list(range(n_tracks)):
            raise AssertionError(f"association does not partition indices: {self}")


# --------------------------------------------------------------------------- geometry


def _as_box(b) -> BoxState:
    if isinstance(b, BoxState):
        return b
    if isinstance(b, Detection):
        return b.box
    return BoxState.from_vector(b)


def _corners(boxes: Sequence) -> np.ndarray:
    arr = np.array([_as_box(b).as_tuple() for b in boxes], dtype=float).reshape(-1, 4)
    half = arr[:, 2:] / 2.0
    return np.hstack([arr[:, :2] - half, arr[:, :2] + half])


def iou(a: BoxState, b: BoxState) -> float:
    return float(iou_matrix([a], [b])[0, 0])


def iou_matrix(boxes_a: Sequence, boxes_b: Sequence) -> np.ndarray:
    """Pairwise IoU of axis-aligned boxes, shape ``(len(a), len(b))``."""
    ca, cb = _corners(boxes_a), _corners(boxes_b)
    if len(ca) == 0 or len(cb) == 0:
        return np.zeros((len(ca), len(cb)))
    ix = np.clip(np.minimum(ca[:, None, 2], cb[None, :, 2]) - np.maximum(ca[:, None, 0], cb[None, :, 0]), 0, None)
    iy = np.clip(np.minimum(ca[:, None, 3], cb[None, :, 3]) - np.maximum(ca[:, None, 1], cb[None, :, 1]), 0, None)
    inter = ix * iy
    area_a = (ca[:, 2] - ca[:, 0]) * (ca[:, 3] - ca[:, 1])
    area_b = (cb[:, 2] - cb[:, 0]) * (cb[:, 3] - cb[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.clip(inter / union, 0.0, 1.0)


# --------------------------------------------------------------------------- assignment


def _column_potentials(cost: np.ndarray, col_of: np.ndarray) -> np.ndarray:
    """Dual column potentials certifying optimality of a square assignment.

    Shortest paths over the residual graph of the assignment; any optimal
    assignment then uses only edges with zero reduced cost.
    """
    n = cost.shape[0]
    row_of = np.empty(n, dtype=int)
    row_of[col_of] = np.arange(n)
    # w[a, j]: cost of moving the owner of column a onto column j
    w = cost[row_of, :] - cost[row_of, col_of[row_of]][:, None]
    v = np.zeros(n)
    for _ in range(n):
        nv = np.minimum(v, (v[:, None] + w).min(axis=0))
        if np.array_equal(nv, v):
            break
        v = nv
    return v


def _canonicalize(cost: np.ndarray, col_of: np.ndarray, n_real_rows: int) -> np.ndarray:
    """Rotate an optimal square assignment to the lexicographically smallest optimum."""
    n = cost.shape[0]
    v = _column_potentials(cost, col_of)
    u = cost[np.arange(n), col_of] - v[col_of]
    reduced = cost - u[:, None] - v[None, :]
    tol = 1e-11 * max(1.0, float(np.abs(cost).max()))
    tight = reduced <= tol
    if int(tight.sum()) == n:
        return col_of
    adj = [np.flatnonzero(tight[r]).tolist() for r in range(n)]
    owner = np.empty(n, dtype=int)
    owner[col_of] = np.arange(n)
    col_of = col_of.copy()

    for r in range(n_real_rows):
        target = col_of[r]
        for c in adj[r]:
            if c >= target:
                break
            r2 = owner[c]
            if r2 < r:
                continue
            visited = {c}

            def take(row):
                for col in adj[row]:
                    if col in visited:
                        continue
                    visited.add(col)
                    if col == target or (owner[col] > r and take(owner[col])):
                        col_of[row] = col
                        owner[col] = row
                        return True
                return False

            if take(r2):
                col_of[r] = c
                owner[c] = r
                break
    return col_of


def hungarian(cost) -> list[tuple[int, int]]:
    """Minimum-cost assignment of size ``min(R, C)``.

    Among equal-cost optima the pair list sorted by row is the
    lexicographically smallest one, so results are reproducible under ties.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise InvalidCostError(f"cost must be a 2-D matrix, got shape {cost.shape}")
    if np.isnan(cost).any():
        raise InvalidCostError("cost matrix contains NaN")
    if not np.isfinite(cost).all():
        raise InvalidCostError("cost matrix contains non-finite entries")
    n_rows, n_cols = cost.shape
    if n_rows == 0 or n_cols == 0:
        return []
    n = max(n_rows, n_cols)
    square = np.zeros((n, n))
    square[:n_rows, :n_cols] = cost
    rows, cols = linear_sum_assignment(square)
    col_of = np.empty(n, dtype=int)
    col_of[rows] = cols
    if sys.getrecursionlimit() < 4 * n + 100:
        sys.setrecursionlimit(4 * n + 100)
    col_of = _canonicalize(square, col_of, n_rows)
    return [(r, int(col_of[r])) for r in range(n_rows) if col_of[r] < n_cols]


# --------------------------------------------------------------------------- NLL similarity


def snll(track_pred, d: Detection) -> float:
    """Mean per-variable Gaussian negative log density of a predicted track state under ``d``."""
    y = np.asarray(track_pred, float)[:N_VARS]
    sigma = np.asarray(d.sigma, float)
    if np.any(sigma <= 0):
        raise DomainError("snll needs positive sigma")
    z = (y - np.asarray(d.mean)) / sigma
    return float(np.mean(np.log(sigma) + LOG_SQRT_2PI + 0.5 * z * z))


def snll_matrix(dets: Sequence[Detection], track_preds) -> np.ndarray:
    """``(len(dets), len(track_preds))`` matrix of :func:`snll` values."""
    preds = np.asarray(track_preds, float).reshape(-1, N_VARS) if len(track_preds) else np.empty((0, N_VARS))
    if not dets or preds.shape[0] == 0:
        return np.zeros((len(dets), preds.shape[0]))
    mean = np.array([d.mean for d in dets])
    sigma = np.array([d.sigma for d in dets])
    z = (preds[None, :, :] - mean[:, None, :]) / sigma[:, None, :]
    return np.mean(np.log(sigma)[:, None, :] + LOG_SQRT_2PI + 0.5 * z * z, axis=2)


# --------------------------------------------------------------------------- association passes


def associate_base_sort(dets: Sequence, preds: Sequence, iou_threshold: float = 0.3) -> AssociationResult:
    """IoU association: Hungarian on ``1 - IoU``, pairs below the threshold rejected."""
    if not 0 <= iou_threshold < 1:
        raise ConfigError(f"iou_threshold must lie in [0, 1), got {iou_threshold}")
    n_d, n_t = len(dets), len(preds)
    if n_d == 0 or n_t == 0:
        return AssociationResult([], list(range(n_d)), list(range(n_t)))
    ious = iou_matrix(dets, preds)
    matched = []
    for d, t in hungarian(1.0 - ious):
        if ious[d, t] >= iou_threshold:
            matched.append((d, t))
    md = {d for d, _ in matched}
    mt = {t for _, t in matched}
    return AssociationResult(
        matched,
        [d for d in range(n_d) if d not in md],
        [t for t in range(n_t) if t not in mt],
    )


def associate_base_byte(dets: Sequence[Detection], preds: Sequence, score_high: float = 0.5,
                        score_low: float = 0.1, iou_threshold: float = 0.3) -> AssociationResult:
    """Two-stage association: confident detections first, then low-score ones on leftover tracks.

    Detections scoring below ``score_low`` are dropped, and unmatched
    low-score detections are never reported (they must not start tracks).
    """
    if not 0 <= score_low < score_high <= 1:
        raise ConfigError(f"need 0 <= score_low < score_high <= 1, got {score_low}, {score_high}")
    high = [i for i, d in enumerate(dets) if d.score >= score_high]
    low = [i for i, d in enumerate(dets) if score_low <= d.score < score_high]

    first = associate_base_sort([dets[i] for i in high], preds, iou_threshold)
    matched = [(high[d], t) for d, t in first.matched]
    left_tracks = first.unmatched_tracklets

    second = associate_base_sort([dets[i] for i in low], [preds[t] for t in left_tracks], iou_threshold)
    matched += [(low[d], left_tracks[t]) for d, t in second.matched]
    return AssociationResult(
        sorted(matched),
        [high[d] for d in first.unmatched_detections],
        [left_tracks[t] for t in second.unmatched_tracklets],
    )


def nllai(matched: Sequence[tuple[int, int]], unmatched_dets: Sequence[int], unmatched_tracks: Sequence[int],
          dets: Sequence[Detection], track_preds, tau: float) -> AssociationResult:
    """Recover leftover pairs by Hungarian on the NLL similarity, rejecting pairs above ``tau``.

    ``track_preds[t]`` is the predicted 4-vector of tracklet ``t``; indices in
    the unmatched lists refer to ``dets`` and ``track_preds``.
    """
    matched = list(matched)
    ud, ut = list(unmatched_dets), list(unmatched_tracks)
    if not ud or not ut:
        return AssociationResult(matched, ud, ut)
    sim = snll_matrix([dets[i] for i in ud], np.asarray(track_preds, float)[ut])
    new_pairs = []
    rejected_d, rejected_t = set(), set()
    for r, c in hungarian(sim):
        if sim[r, c] > tau:
            rejected_d.add(ud[r])
            rejected_t.add(ut[c])
        else:
            new_pairs.append((ud[r], ut[c]))
    got_d = {d for d, _ in new_pairs}
    got_t = {t for _, t in new_pairs}
    return AssociationResult(
        matched + new_pairs,
        [d for d in ud if d not in got_d],
        [t for t in ut if t not in got_t],
    )
