"""Seeded synthetic scenes: ground-truth trajectories and an emulated uncertainty-aware detector.

Random numbers come from numpy's PCG64 bit generator seeded with
``ScenarioConfig.seed``.  Draw order is fixed: initial object states
(position x, y, heading, speed, width, height per object), then per frame
and per object in id order one uniform (drop test) and four normals
(detection noise), then the clutter count (Poisson) followed by four
uniforms per clutter box, and finally one heading-jitter normal per object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Mapping, Sequence

import numpy as np

from .core import N_VARS, BoxState, ConfigError, Detection, GtObject, Scene

SIGMA_FLOOR = 1e-9
MIN_EXTENT = 1e-3
BASE_SCORE = 0.9
CLUTTER_SCORE = 0.3
HIGH_OCCLUSION_FRACTION = 0.25


@dataclass(frozen=True)
class OcclusionZone:
    box: BoxState
    noise_multiplier: float = 3.0
    drop_prob_in_zone: float = 0.3
    score_penalty: float = 0.5

    def __post_init__(self):
        if self.noise_multiplier < 1:
            raise ConfigError("zone noise_multiplier must be >= 1")
        if not 0 <= self.drop_prob_in_zone <= 1 or not 0 <= self.score_penalty <= 1:
            raise ConfigError("zone probabilities must lie in [0, 1]")

    def contains(self, x: float, y: float) -> bool:
        b = self.box
        return abs(x - b.cx) <= b.w / 2 and abs(y - b.cy) <= b.h / 2

    def to_dict(self) -> dict:
        return {
            "box": list(self.box.as_tuple()),
            "noise_multiplier": self.noise_multiplier,
            "drop_prob_in_zone": self.drop_prob_in_zone,
            "score_penalty": self.score_penalty,
        }

    @classmethod
    def from_mapping(cls, m: Mapping) -> "OcclusionZone":
        return cls(
            box=BoxState.from_vector(m["box"]),
            noise_multiplier=float(m.get("noise_multiplier", 3.0)),
            drop_prob_in_zone=float(m.get("drop_prob_in_zone", 0.3)),
            score_penalty=float(m.get("score_penalty", 0.5)),
        )


@dataclass(frozen=True)
class ScenarioConfig:
    n_objects: int = 20
    n_frames: int = 100
    field_size: float = 100.0
    speed_range: tuple[float, float] = (0.5, 1.5)
    box_size_range: tuple[float, float] = (2.0, 5.0)
    sigma_true_base: tuple[float, ...] = (0.2, 0.2, 0.1, 0.1)
    miscalibration: float = 0.5
    occlusion_zones: tuple[OcclusionZone, ...] = ()
    base_drop_prob: float = 0.05
    clutter_rate: float = 0.5
    heading_jitter: float = 0.05
    frame_rate: float = 10.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "speed_range", tuple(float(v) for v in self.speed_range))
        object.__setattr__(self, "box_size_range", tuple(float(v) for v in self.box_size_range))
        object.__setattr__(self, "sigma_true_base", tuple(float(v) for v in self.sigma_true_base))
        object.__setattr__(self, "occlusion_zones", tuple(
            z if isinstance(z, OcclusionZone) else OcclusionZone.from_mapping(z) for z in self.occlusion_zones))
        if self.n_objects < 1 or self.n_frames < 1:
            raise ConfigError("n_objects and n_frames must be positive")
        if self.field_size <= 0:
            raise ConfigError("field_size must be positive")
        for name in ("speed_range", "box_size_range"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ConfigError(f"{name} must be an ordered nonnegative pair")
        if self.box_size_range[0] <= 0:
            raise ConfigError("box sizes must be positive")
        if len(self.sigma_true_base) != N_VARS or any(s < 0 for s in self.sigma_true_base):
            raise ConfigError("sigma_true_base needs 4 nonnegative entries")
        if not self.miscalibration > 0:
            raise ConfigError("miscalibration must be positive")
        if not 0 <= self.base_drop_prob <= 1:
            raise ConfigError("base_drop_prob must lie in [0, 1]")
        if self.clutter_rate < 0 or self.heading_jitter < 0:
            raise ConfigError("clutter_rate and heading_jitter must be nonnegative")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        for k in ("speed_range", "box_size_range", "sigma_true_base"):
            d[k] = list(d[k])
        d["occlusion_zones"] = [z.to_dict() for z in self.occlusion_zones]
        return d

    @classmethod
    def from_mapping(cls, m: Mapping) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(m) - known
        if unknown:
            raise ConfigError(f"unknown scenario config keys: {sorted(unknown)}")
        kw = dict(m)
        for k in ("speed_range", "box_size_range", "sigma_true_base"):
            if k in kw:
                kw[k] = tuple(kw[k])
        if "occlusion_zones" in kw:
            kw["occlusion_zones"] = tuple(OcclusionZone.from_mapping(z) for z in kw["occlusion_zones"])
        return cls(**kw)


def _zone_effect(zones: Sequence[OcclusionZone], x: float, y: float) -> tuple[float, float, float, bool]:
    mult, drop, penalty, inside = 1.0, 0.0, 0.0, False
    for z in zones:
        if z.contains(x, y):
            inside = True
            mult = max(mult, z.noise_multiplier)
            drop = max(drop, z.drop_prob_in_zone)
            penalty = max(penalty, z.score_penalty)
    return mult, drop, penalty, inside


def generate_scene(cfg: ScenarioConfig) -> tuple[list[GtObject], Scene]:
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    L = cfg.field_size
    n = cfg.n_objects
    init = rng.random((n, 6))
    w = cfg.box_size_range[0] + init[:, 4] * (cfg.box_size_range[1] - cfg.box_size_range[0])
    h = cfg.box_size_range[0] + init[:, 5] * (cfg.box_size_range[1] - cfg.box_size_range[0])
    x = init[:, 0] * L
    y = init[:, 1] * L
    heading = init[:, 2] * 2 * math.pi
    speed = cfg.speed_range[0] + init[:, 3] * (cfg.speed_range[1] - cfg.speed_range[0])
    sigma_base = np.array(cfg.sigma_true_base)
    c = cfg.miscalibration
    clutter_sigma = tuple(np.maximum(c * sigma_base, SIGMA_FLOOR))

    gt: list[GtObject] = []
    frames = []
    for t in range(cfg.n_frames):
        dets = []
        for k in range(n):
            truth = np.array([x[k], y[k], w[k], h[k]])
            gt.append(GtObject(t, k + 1, BoxState.from_vector(truth)))
            mult, zdrop, penalty, inside = _zone_effect(cfg.occlusion_zones, x[k], y[k])
            drop_p = max(cfg.base_drop_prob, zdrop) if inside else cfg.base_drop_prob
            u = rng.random()
            noise = rng.standard_normal(N_VARS)
            if u < drop_p:
                continue
            sigma_eff = sigma_base * mult
            mean = truth + noise * sigma_eff
            mean[2:] = np.maximum(mean[2:], MIN_EXTENT)
            score = min(max(BASE_SCORE - penalty, 0.05), 1.0)
            sigma_rep = np.maximum(c * sigma_eff, SIGMA_FLOOR)
            dets.append(Detection(score, tuple(mean), tuple(sigma_rep), score))
        for _ in range(int(rng.poisson(cfg.clutter_rate))):
            cu = rng.random(4)
            bw = cfg.box_size_range[0] + cu[2] * (cfg.box_size_range[1] - cfg.box_size_range[0])
            bh = cfg.box_size_range[0] + cu[3] * (cfg.box_size_range[1] - cfg.box_size_range[0])
            dets.append(Detection(CLUTTER_SCORE, (cu[0] * L, cu[1] * L, bw, bh), clutter_sigma, CLUTTER_SCORE))
        frames.append((t, tuple(dets)))

        heading = heading + rng.standard_normal(n) * cfg.heading_jitter
        x = x + speed * np.cos(heading)
        y = y + speed * np.sin(heading)
        # reflect off the field walls
        lo_x, hi_x = x < 0, x > L
        x = np.where(lo_x, -x, np.where(hi_x, 2 * L - x, x))
        heading = np.where(lo_x | hi_x, math.pi - heading, heading)
        lo_y, hi_y = y < 0, y > L
        y = np.where(lo_y, -y, np.where(hi_y, 2 * L - y, y))
        heading = np.where(lo_y | hi_y, -heading, heading)

    scene = Scene(tuple(frames), frame_rate=cfg.frame_rate, field_extent=L, seed=cfg.seed)
    return gt, scene


def zone_occupancy(gt: Sequence[GtObject], zones: Sequence[OcclusionZone]) -> dict[int, float]:
    """Fraction of ground-truth objects whose center lies in any zone, per frame."""
    inside: dict[int, int] = {}
    total: dict[int, int] = {}
    for g in gt:
        total[g.frame] = total.get(g.frame, 0) + 1
        hit = any(z.contains(g.box.cx, g.box.cy) for z in zones)
        inside[g.frame] = inside.get(g.frame, 0) + hit
    return {f: inside[f] / total[f] for f in total}


def split_occlusion(gt: Sequence[GtObject], scene: Scene, zones: Sequence[OcclusionZone],
                    threshold: float = HIGH_OCCLUSION_FRACTION):
    """Partition frames into high- and low-occlusion subsets.

    Returns ``((gt_high, scene_high), (gt_low, scene_low))``; a frame is
    high-occlusion when more than ``threshold`` of its objects are in a zone.
    """
    occ = zone_occupancy(gt, zones)
    high_frames = {f for f, v in occ.items() if v > threshold}

    def sub(keep):
        g = [o for o in gt if keep(o.frame)]
        s = Scene(tuple(fd for fd in scene.frames if keep(fd[0])), scene.frame_rate, scene.field_extent, scene.seed)
        return g, s

    return sub(lambda f: f in high_frames), sub(lambda f: f not in high_frames)


def grid_zones(n_zones: int, field_size: float, zone_size: float, noise_multiplier: float = 3.0,
               drop_prob: float = 0.3, score_penalty: float = 0.5) -> tuple[OcclusionZone, ...]:
    """``n_zones`` square zones spread along the field diagonal and anti-diagonal."""
    zones = []
    for k in range(n_zones):
        frac = (k + 1) / (n_zones + 1)
        cx = frac * field_size
        cy = frac * field_size if k % 2 == 0 else (1 - frac) * field_size
        zones.append(OcclusionZone(BoxState(cx, cy, zone_size, zone_size), noise_multiplier, drop_prob, score_penalty))
    return tuple(zones)
