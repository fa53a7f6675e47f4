"""Plain SORT-style and ByteTrack-style trackers.

These are the reference paths for the toggles-off configuration: a constant
measurement variance, IoU association only, and no sigma rectification.
"""

from __future__ import annotations

from typing import Sequence

from .association import associate_base_byte, associate_base_sort
from .core import Detection
from .motion import fixed_update, init_tracklet, predict, tracklet_box
from .tracker import SequencingError, TrackerConfig, TrackRecord


class BaseTracker:
    def __init__(self, cfg: TrackerConfig, quantiles=None):
        self.cfg = cfg
        self.params = cfg.motion
        self.tracklets = []
        self.frame_count = 0
        self.last_frame = None
        self.count = 0

    def _associate(self, dets, boxes):
        return associate_base_sort(dets, boxes, self.cfg.iou_threshold)

    def _score(self, d: Detection) -> float:
        return d.class_prob

    def step(self, dets: Sequence[Detection], frame: int | None = None) -> list[TrackRecord]:
        if frame is None:
            frame = 0 if self.last_frame is None else self.last_frame + 1
        if self.last_frame is not None and frame <= self.last_frame:
            raise SequencingError(f"frame {frame} after frame {self.last_frame}")
        self.last_frame = frame
        self.frame_count += 1
        dets = list(dets)

        trks = [predict(t, self.params) for t in self.tracklets]
        res = self._associate(dets, [tracklet_box(t) for t in trks])
        for d, t in res.matched:
            trks[t] = fixed_update(trks[t], dets[d], self.cfg.fixed_r, self.params)
            trks[t].last_score = self._score(dets[d])
        trks = [t for t in trks if t.time_since_update <= self.cfg.max_age]
        for d in res.unmatched_detections:
            self.count += 1
            t = init_tracklet(dets[d], self.count, self.params, self.cfg.fixed_r)
            t.last_score = self._score(dets[d])
            trks.append(t)
        self.tracklets = trks

        out = []
        for t in trks:
            if t.time_since_update == 0 and (t.hits >= self.cfg.min_hits or self.frame_count <= self.cfg.min_hits):
                out.append(TrackRecord(frame, t.track_id, tracklet_box(t), tuple(t.last_sigma), t.last_score))
        return sorted(out, key=lambda r: r.track_id)


class SortTracker(BaseTracker):
    pass


class ByteTracker(BaseTracker):
    def _associate(self, dets, boxes):
        c = self.cfg
        return associate_base_byte(dets, boxes, c.score_high, c.score_low, c.iou_threshold)

    def _score(self, d: Detection) -> float:
        return d.score


def baseline_for(cfg: TrackerConfig) -> type[BaseTracker]:
    return SortTracker if cfg.base == "sort" else ByteTracker
