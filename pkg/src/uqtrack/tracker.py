"""Per-frame tracking loop with switchable calibration, sigma-driven filtering and NLL recovery."""

from __future__ import annotations

import time
from dataclasses import dataclass, fields
from typing import Mapping, Sequence

import numpy as np

from .association import associate_base_byte, associate_base_sort, nllai
from .conformal import QuantileSet, apply_quantiles
from .core import N_VARS, BoxState, ConfigError, Detection, Scene, UQTrackError
from .motion import (
    MotionParams,
    Tracklet,
    fixed_update,
    init_tracklet,
    predict,
    sdkf_update,
    tracklet_box,
)

BASES = ("sort", "bytetrack")
DEFAULT_TAU = {"sort": 1000.0, "bytetrack": 80.0}


class SequencingError(UQTrackError, ValueError):
    pass


@dataclass(frozen=True)
class TrackerConfig:
    base: str = "sort"
    use_cp: bool = False
    use_sdkf: bool = False
    use_nllai: bool = False
    tau: float | None = None
    iou_threshold: float = 0.3
    score_high: float = 0.5
    score_low: float = 0.1
    max_age: int = 2
    min_hits: int = 2
    fixed_r: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)
    q_pos: float = 1e-2
    q_vel: float = 1e-4
    velocity_var: float = 100.0

    def __post_init__(self):
        if self.base not in BASES:
            raise ConfigError(f"base must be one of {BASES}, got {self.base!r}")
        if self.tau is None:
            object.__setattr__(self, "tau", DEFAULT_TAU[self.base])
        object.__setattr__(self, "fixed_r", tuple(float(r) for r in self.fixed_r))
        if not np.isfinite(self.tau):
            raise ConfigError("tau must be finite")
        if not 0 <= self.iou_threshold < 1:
            raise ConfigError(f"iou_threshold must lie in [0, 1), got {self.iou_threshold}")
        if not 0 <= self.score_low < self.score_high <= 1:
            raise ConfigError("need 0 <= score_low < score_high <= 1")
        if self.max_age < 1 or self.min_hits < 1:
            raise ConfigError("max_age and min_hits must be >= 1")
        if len(self.fixed_r) != N_VARS or any(r <= 0 for r in self.fixed_r):
            raise ConfigError("fixed_r needs 4 positive variances")

    @classmethod
    def full(cls, base: str = "sort", **kw) -> "TrackerConfig":
        """All three uncertainty components switched on."""
        return cls(base=base, use_cp=True, use_sdkf=True, use_nllai=True, **kw)

    @classmethod
    def from_mapping(cls, m: Mapping) -> "TrackerConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(m) - known
        if unknown:
            raise ConfigError(f"unknown tracker config keys: {sorted(unknown)}")
        kw = dict(m)
        if "fixed_r" in kw:
            kw["fixed_r"] = tuple(kw["fixed_r"])
        return cls(**kw)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["fixed_r"] = list(self.fixed_r)
        return d

    @property
    def motion(self) -> MotionParams:
        return MotionParams(q_pos=self.q_pos, q_vel=self.q_vel, velocity_var=self.velocity_var)


@dataclass(frozen=True)
class TrackRecord:
    frame: int
    track_id: int
    box: BoxState
    sigma: tuple[float, ...]
    score: float


class Tracker:
    """Mutable tracking state for one sequence; not reentrant."""

    def __init__(self, cfg: TrackerConfig, quantiles: QuantileSet | None = None):
        if cfg.use_cp and quantiles is None:
            raise ConfigError("use_cp requires a QuantileSet")
        self.cfg = cfg
        self.quantiles = quantiles
        self.params = cfg.motion
        self.tracklets: list[Tracklet] = []
        self.frame_count = 0
        self.last_frame: int | None = None
        self._next_id = 1

    def _new_id(self) -> int:
        tid = self._next_id
        self._next_id += 1
        return tid

    def step(self, dets: Sequence[Detection], frame: int | None = None) -> list[TrackRecord]:
        cfg = self.cfg
        if frame is None:
            frame = 0 if self.last_frame is None else self.last_frame + 1
        if self.last_frame is not None and frame <= self.last_frame:
            raise SequencingError(f"frame {frame} after frame {self.last_frame}")
        self.last_frame = frame
        self.frame_count += 1

        if cfg.use_cp:
            dets = [apply_quantiles(d, self.quantiles) for d in dets]
        else:
            dets = list(dets)

        tracks = [predict(t, self.params) for t in self.tracklets]
        boxes = [tracklet_box(t) for t in tracks]
        if cfg.base == "sort":
            res = associate_base_sort(dets, boxes, cfg.iou_threshold)
        else:
            res = associate_base_byte(dets, boxes, cfg.score_high, cfg.score_low, cfg.iou_threshold)
        if cfg.use_nllai:
            preds = np.array([t.state[:N_VARS] for t in tracks]).reshape(-1, N_VARS)
            res = nllai(res.matched, res.unmatched_detections, res.unmatched_tracklets, dets, preds, cfg.tau)

        for d_idx, t_idx in res.matched:
            d = dets[d_idx]
            if cfg.use_sdkf:
                t = sdkf_update(tracks[t_idx], d, self.params)
            else:
                t = fixed_update(tracks[t_idx], d, cfg.fixed_r, self.params)
            t.last_score = d.class_prob if cfg.base == "sort" else d.score
            tracks[t_idx] = t

        tracks = [t for t in tracks if t.time_since_update <= cfg.max_age]
        for d_idx in res.unmatched_detections:
            d = dets[d_idx]
            t = init_tracklet(d, self._new_id(), self.params, None if cfg.use_sdkf else cfg.fixed_r)
            t.last_score = d.class_prob if cfg.base == "sort" else d.score
            tracks.append(t)
        self.tracklets = tracks
        return self._emit(frame)

    def _emit(self, frame: int) -> list[TrackRecord]:
        out = []
        warmup = self.frame_count <= self.cfg.min_hits
        for t in self.tracklets:
            if t.time_since_update == 0 and (t.hits >= self.cfg.min_hits or warmup):
                out.append(TrackRecord(frame, t.track_id, tracklet_box(t), tuple(t.last_sigma), t.last_score))
        out.sort(key=lambda r: r.track_id)
        return out


def tracker_new(cfg: TrackerConfig, quantiles: QuantileSet | None = None) -> Tracker:
    return Tracker(cfg, quantiles)


def tracker_step(state: Tracker, dets: Sequence[Detection], frame: int | None = None) -> list[TrackRecord]:
    return state.step(dets, frame)


def run_scene(scene: Scene, cfg: TrackerConfig, quantiles: QuantileSet | None = None,
              tracker_cls=Tracker) -> tuple[list[TrackRecord], list[float]]:
    """Track every frame of ``scene``; returns records and per-frame wall-clock seconds."""
    trk = tracker_cls(cfg, quantiles)
    records: list[TrackRecord] = []
    timings: list[float] = []
    for frame, dets in scene.frames:
        t0 = time.perf_counter()
        out = trk.step(dets, frame)
        timings.append(time.perf_counter() - t0)
        records.extend(out)
    return records, timings
