"""Tracking accuracy (CLEAR, HOTA, throughput) and uncertainty quality (NLL, CRPS)."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtr

from .association import hungarian, iou_matrix
from .core import LOG_SQRT_2PI, DomainError, EmptyInputError, GtObject, UQTrackError
from .tracker import TrackRecord

# TrackEval's localization grid: 0.05, 0.10, ..., 0.95
HOTA_ALPHAS = np.arange(0.05, 0.99, 0.05)
UNCERTAINTY_THRESHOLDS = (0.5, 0.7)
_INV_SQRT_PI = 1.0 / math.sqrt(math.pi)


class UndefinedMetricError(UQTrackError, ValueError):
    pass


class NoTruePositivesError(UQTrackError, ValueError):
    pass


def _group_gt(gt: Iterable[GtObject]) -> dict[int, list[GtObject]]:
    out: dict[int, list[GtObject]] = defaultdict(list)
    for g in gt:
        out[g.frame].append(g)
    return out


def _group_records(records: Iterable[TrackRecord]) -> dict[int, list[TrackRecord]]:
    out: dict[int, list[TrackRecord]] = defaultdict(list)
    for r in records:
        out[r.frame].append(r)
    return out


def _gated_matches(ious: np.ndarray, threshold: float) -> list[tuple[int, int]]:
    """Max-IoU matching restricted to pairs with IoU >= threshold."""
    if ious.size == 0:
        return []
    valid = ious >= threshold
    if not valid.any():
        return []
    # invalid pairs cost more than any full set of valid ones
    big = ious.shape[0] + ious.shape[1] + 1.0
    cost = np.where(valid, 1.0 - ious, big)
    return [(r, c) for r, c in hungarian(cost) if valid[r, c]]


# --------------------------------------------------------------------------- CLEAR


@dataclass
class ClearResult:
    mota: float
    motp: float
    false_positives: int
    false_negatives: int
    id_switches: int
    matches: int
    gt_count: int


def clear_metrics(gt: Sequence[GtObject], records: Sequence[TrackRecord], iou_threshold: float = 0.5) -> ClearResult:
    if not 0 < iou_threshold < 1:
        raise DomainError(f"iou_threshold must lie in (0, 1), got {iou_threshold}")
    gt_by_frame = _group_gt(gt)
    rec_by_frame = _group_records(records)
    n_gt = sum(len(v) for v in gt_by_frame.values())
    if n_gt == 0:
        raise UndefinedMetricError("MOTA is undefined without ground truth")

    last_match: dict[int, int] = {}
    fp = fn = idsw = matches = 0
    iou_sum = 0.0
    for frame in sorted(set(gt_by_frame) | set(rec_by_frame)):
        gts = gt_by_frame.get(frame, [])
        recs = rec_by_frame.get(frame, [])
        ious = iou_matrix([g.box for g in gts], [r.box for r in recs])
        pairs: list[tuple[int, int]] = []
        used_g, used_r = set(), set()
        rec_index = {r.track_id: j for j, r in enumerate(recs)}
        for i, g in enumerate(gts):
            j = rec_index.get(last_match.get(g.object_id, -1))
            if j is not None and j not in used_r and ious[i, j] >= iou_threshold:
                pairs.append((i, j))
                used_g.add(i)
                used_r.add(j)
        free_g = [i for i in range(len(gts)) if i not in used_g]
        free_r = [j for j in range(len(recs)) if j not in used_r]
        sub = ious[np.ix_(free_g, free_r)] if free_g and free_r else np.zeros((len(free_g), len(free_r)))
        for a, b in _gated_matches(sub, iou_threshold):
            i, j = free_g[a], free_r[b]
            prev = last_match.get(gts[i].object_id)
            if prev is not None and prev != recs[j].track_id:
                idsw += 1
            pairs.append((i, j))
        for i, j in pairs:
            last_match[gts[i].object_id] = recs[j].track_id
            iou_sum += float(ious[i, j])
        matches += len(pairs)
        fn += len(gts) - len(pairs)
        fp += len(recs) - len(pairs)
    mota = 1.0 - (fp + fn + idsw) / n_gt
    motp = float(iou_sum / matches) if matches else 0.0
    return ClearResult(mota, motp, fp, fn, idsw, matches, n_gt)


# --------------------------------------------------------------------------- HOTA


@dataclass
class HotaResult:
    hota: float
    deta: float
    assa: float
    alphas: np.ndarray = field(repr=False)
    hota_alpha: np.ndarray = field(repr=False)
    deta_alpha: np.ndarray = field(repr=False)
    assa_alpha: np.ndarray = field(repr=False)


def hota(gt: Sequence[GtObject], records: Sequence[TrackRecord], alphas=HOTA_ALPHAS) -> HotaResult:
    """HOTA with per-frame max-IoU matching at each localization threshold."""
    gt_by_frame = _group_gt(gt)
    rec_by_frame = _group_records(records)
    n_gt = sum(len(v) for v in gt_by_frame.values())
    n_rec = sum(len(v) for v in rec_by_frame.values())
    if n_gt == 0:
        raise UndefinedMetricError("HOTA is undefined without ground truth")

    gt_id_count: dict[int, int] = defaultdict(int)
    tr_id_count: dict[int, int] = defaultdict(int)
    frames = []
    for frame in sorted(set(gt_by_frame) | set(rec_by_frame)):
        gts = gt_by_frame.get(frame, [])
        recs = rec_by_frame.get(frame, [])
        for g in gts:
            gt_id_count[g.object_id] += 1
        for r in recs:
            tr_id_count[r.track_id] += 1
        frames.append((gts, recs, iou_matrix([g.box for g in gts], [r.box for r in recs])))

    alphas = np.asarray(alphas, float)
    h_a, d_a, a_a = (np.zeros(len(alphas)) for _ in range(3))
    for k, alpha in enumerate(alphas):
        pair_count: dict[tuple[int, int], int] = defaultdict(int)
        tp = 0
        for gts, recs, ious in frames:
            for i, j in _gated_matches(ious, alpha):
                pair_count[(gts[i].object_id, recs[j].track_id)] += 1
                tp += 1
        if tp == 0:
            continue
        deta = tp / (n_gt + n_rec - tp)
        assa = 0.0
        for (g, t), tpa in pair_count.items():
            assa += tpa * tpa / (gt_id_count[g] + tr_id_count[t] - tpa)
        assa /= tp
        d_a[k], a_a[k] = deta, assa
        h_a[k] = math.sqrt(deta * assa)
    return HotaResult(float(h_a.mean()), float(d_a.mean()), float(a_a.mean()), alphas, h_a, d_a, a_a)


# --------------------------------------------------------------------------- uncertainty


def crps_gaussian(mu: float, sigma: float, y: float) -> float:
    """Closed-form CRPS of a Gaussian forecast ``N(mu, sigma**2)`` at observation ``y``."""
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    z = (y - mu) / sigma
    cdf = 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))
    pdf = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return sigma * (z * (2.0 * cdf - 1.0) + 2.0 * pdf - _INV_SQRT_PI)


def crps_gaussian_array(mu, sigma, y) -> np.ndarray:
    mu, sigma, y = (np.asarray(a, float) for a in (mu, sigma, y))
    if np.any(sigma <= 0):
        raise DomainError("sigma must be positive")
    z = (y - mu) / sigma
    pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return sigma * (z * (2.0 * ndtr(z) - 1.0) + 2.0 * pdf - _INV_SQRT_PI)


@dataclass
class UncertaintyResult:
    nll: float
    crps: float
    matched_tp: int


def uncertainty_metrics(gt: Sequence[GtObject], boxed_outputs: Sequence[tuple[int, Sequence[float], Sequence[float]]],
                        iou_threshold: float = 0.5) -> UncertaintyResult:
    """Mean per-variable NLL and CRPS of predicted Gaussians over IoU-matched outputs.

    ``boxed_outputs`` holds ``(frame, mean_4, sigma_4)`` tuples.
    """
    gt_by_frame = _group_gt(gt)
    out_by_frame: dict[int, list] = defaultdict(list)
    for frame, mean, sigma in boxed_outputs:
        out_by_frame[frame].append((tuple(mean), tuple(sigma)))

    truth, mus, sigmas = [], [], []
    for frame in sorted(out_by_frame):
        gts = gt_by_frame.get(frame, [])
        outs = out_by_frame[frame]
        if not gts:
            continue
        ious = iou_matrix([g.box for g in gts], [m for m, _ in outs])
        for i, j in _gated_matches(ious, iou_threshold):
            truth.append(gts[i].box.as_tuple())
            mus.append(outs[j][0])
            sigmas.append(outs[j][1])
    if not truth:
        raise NoTruePositivesError(f"no output matched ground truth at IoU >= {iou_threshold}")
    truth, mus, sigmas = np.array(truth), np.array(mus), np.array(sigmas)
    if np.any(sigmas <= 0):
        raise DomainError("sigma must be positive")
    z = (truth - mus) / sigmas
    nll = float(np.mean(np.log(sigmas) + LOG_SQRT_2PI + 0.5 * z * z))
    crps = float(np.mean(crps_gaussian_array(mus, sigmas, truth)))
    return UncertaintyResult(nll, crps, len(truth))


def throughput(timings: Sequence[float]) -> float:
    if len(timings) == 0:
        raise EmptyInputError("throughput needs at least one timing")
    total = float(sum(timings))
    if total <= 0:
        raise DomainError("total processing time must be positive")
    return len(timings) / total


# --------------------------------------------------------------------------- reports


@dataclass
class EvalReport:
    hota: float | None = None
    deta: float | None = None
    assa: float | None = None
    mota: float | None = None
    motp: float | None = None
    id_switches: int | None = None
    false_positives: int | None = None
    false_negatives: int | None = None
    nll_at: dict = field(default_factory=dict)
    crps_at: dict = field(default_factory=dict)
    matched_tp: dict = field(default_factory=dict)
    fps: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("nll_at", "crps_at", "matched_tp"):
            d[key] = {f"{k:g}": v for k, v in sorted(d[key].items())}
        return d


def _fill_uncertainty(report: EvalReport, gt, boxed, thresholds) -> None:
    for thr in thresholds:
        try:
            u = uncertainty_metrics(gt, boxed, thr)
        except NoTruePositivesError:
            report.nll_at[thr], report.crps_at[thr], report.matched_tp[thr] = None, None, 0
            continue
        report.nll_at[thr], report.crps_at[thr], report.matched_tp[thr] = u.nll, u.crps, u.matched_tp


def evaluate_tracks(gt: Sequence[GtObject], records: Sequence[TrackRecord], timings: Sequence[float] | None = None,
                    mota_iou: float = 0.5, thresholds=UNCERTAINTY_THRESHOLDS) -> EvalReport:
    c = clear_metrics(gt, records, mota_iou)
    h = hota(gt, records)
    rep = EvalReport(hota=h.hota, deta=h.deta, assa=h.assa, mota=c.mota, motp=c.motp,
                     id_switches=c.id_switches, false_positives=c.false_positives, false_negatives=c.false_negatives)
    _fill_uncertainty(rep, gt, [(r.frame, r.box.as_tuple(), r.sigma) for r in records], thresholds)
    if timings:
        rep.fps = throughput(timings)
    return rep


def evaluate_detections(gt: Sequence[GtObject], frames, thresholds=UNCERTAINTY_THRESHOLDS) -> EvalReport:
    """Uncertainty-only report for raw (or calibrated) detections."""
    rep = EvalReport()
    boxed = [(f, d.mean, d.sigma) for f, dets in frames for d in dets]
    _fill_uncertainty(rep, gt, boxed, thresholds)
    return rep
