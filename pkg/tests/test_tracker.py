from dataclasses import replace

import numpy as np
import pytest

from uqtrack.baselines import ByteTracker, SortTracker, baseline_for
from uqtrack.conformal import QuantileSet, calibrate
from uqtrack.core import BoxState, ConfigError, Scene
from uqtrack.simgen import ScenarioConfig, generate_scene, grid_zones
from uqtrack.tracker import (
    DEFAULT_TAU,
    SequencingError,
    Tracker,
    TrackerConfig,
    run_scene,
    tracker_new,
    tracker_step,
)

from conftest import det

Q_IDENT = QuantileSet(0.1, (1.0,) * 4, 100)


def test_tracker_new_is_empty_and_isolated():
    a = tracker_new(TrackerConfig())
    b = tracker_new(TrackerConfig())
    assert a.tracklets == [] and a.frame_count == 0
    ra = tracker_step(a, [det((0, 0, 2, 2))])
    rb = tracker_step(b, [det((50, 0, 2, 2))])
    assert [r.track_id for r in ra] == [1] and [r.track_id for r in rb] == [1]


def test_cp_needs_quantiles():
    with pytest.raises(ConfigError):
        tracker_new(TrackerConfig(use_cp=True))


def test_config_defaults_and_validation():
    assert TrackerConfig().tau == DEFAULT_TAU["sort"] == 1000.0
    assert TrackerConfig(base="bytetrack").tau == DEFAULT_TAU["bytetrack"] == 80.0
    assert TrackerConfig(tau=5.0).tau == 5.0
    full = TrackerConfig.full("bytetrack")
    assert full.use_cp and full.use_sdkf and full.use_nllai and full.base == "bytetrack"
    for bad in ({"base": "deepsort"}, {"iou_threshold": 1.0}, {"score_low": 0.6}, {"max_age": 0},
                {"fixed_r": (1, 1, 1)}, {"tau": float("inf")}):
        with pytest.raises(ConfigError):
            TrackerConfig(**bad)
    with pytest.raises(ConfigError):
        TrackerConfig.from_mapping({"use_kalman": True})
    cfg = TrackerConfig(use_sdkf=True, fixed_r=(2, 2, 2, 2))
    assert TrackerConfig.from_mapping(cfg.to_dict()) == cfg


def test_perfect_continuation_keeps_ids():
    trk = Tracker(TrackerConfig())
    dets = [det((0, 0, 2, 2)), det((10, 0, 2, 2)), det((20, 5, 3, 3))]
    prev = trk.step(dets, 0)
    for f in range(1, 6):
        out = trk.step([det(r.box.as_tuple()) for r in prev], f)
        assert [r.track_id for r in out] == [1, 2, 3]
        prev = out
    assert trk._next_id == 4


def test_unmatched_detection_starts_a_new_track():
    trk = Tracker(TrackerConfig())
    trk.step([det((0, 0, 2, 2))], 0)
    out = trk.step([det((0, 0, 2, 2)), det((40, 40, 2, 2))], 1)
    assert [r.track_id for r in out] == [1, 2]


def test_track_deleted_after_max_age_misses():
    cfg = TrackerConfig(max_age=2)
    trk = Tracker(cfg)
    for f in range(3):
        trk.step([det((0, 0, 2, 2))], f)
    for f in range(3, 3 + cfg.max_age):
        trk.step([], f)
        assert len(trk.tracklets) == 1
    trk.step([], 3 + cfg.max_age)
    assert trk.tracklets == []
    trk.step([det((0, 0, 2, 2))], 10)
    assert [t.track_id for t in trk.tracklets] == [2]


def test_frames_must_increase():
    trk = Tracker(TrackerConfig())
    trk.step([], 3)
    with pytest.raises(SequencingError):
        trk.step([], 3)
    assert trk.step([]) == [] and trk.last_frame == 4


def test_empty_scene_gives_no_records():
    assert run_scene(Scene(()), TrackerConfig()) == ([], [])
    recs, times = run_scene(Scene(((0, ()), (1, ()))), TrackerConfig())
    assert recs == [] and len(times) == 2


def test_new_tracks_wait_for_min_hits_after_warmup():
    trk = Tracker(TrackerConfig(min_hits=2))
    for f in range(3):
        trk.step([det((0, 0, 2, 2))], f)
    out = trk.step([det((0, 0, 2, 2)), det((30, 0, 2, 2))], 3)
    assert [r.track_id for r in out] == [1]
    out = trk.step([det((0, 0, 2, 2)), det((30, 0, 2, 2))], 4)
    assert [r.track_id for r in out] == [1, 2]


def test_nllai_recovers_track_that_iou_loses():
    wide = (3.0, 3.0, 0.5, 0.5)
    base_cfg = TrackerConfig(min_hits=1)
    seq = [[det((0, 0, 2, 2), sigma=wide)], [det((0, 0, 2, 2), sigma=wide)], [det((3, 0, 2, 2), sigma=wide)]]
    plain, rec = Tracker(base_cfg), Tracker(replace(base_cfg, use_nllai=True))
    for f, dets in enumerate(seq):
        a, b = plain.step(dets, f), rec.step(dets, f)
    assert [r.track_id for r in a] == [2]
    assert [r.track_id for r in b] == [1]


def test_bytetrack_low_score_detections_never_start_tracks():
    trk = Tracker(TrackerConfig(base="bytetrack", min_hits=1))
    out = trk.step([det((0, 0, 2, 2), score=0.3), det((10, 0, 2, 2), score=0.9)], 0)
    assert [r.box.cx for r in out] == [10.0]
    # but they keep an existing track alive in the second stage
    out = trk.step([det((10.1, 0, 2, 2), score=0.3)], 1)
    assert [r.track_id for r in out] == [1] and out[0].score == 0.3


def test_record_score_follows_base():
    d = det((0, 0, 2, 2), score=0.7, class_prob=0.4)
    assert Tracker(TrackerConfig()).step([d], 0)[0].score == 0.4
    assert Tracker(TrackerConfig(base="bytetrack")).step([d], 0)[0].score == 0.7


def test_sdkf_toggle_changes_filtering_only_through_sigma():
    dets0 = [det((0, 0, 2, 2))]
    dets1 = [det((0.5, 0.2, 2.1, 2.0))]
    a, b = Tracker(TrackerConfig(use_sdkf=True)), Tracker(TrackerConfig())
    for f, ds in enumerate((dets0, dets1)):
        ra, rb = a.step(ds, f), b.step(ds, f)
    # sigma = 1 everywhere equals the fixed R = 1 path
    assert ra == rb


def _scene(seed, **kw):
    cfg = ScenarioConfig(seed=seed, **kw)
    return generate_scene(cfg)


@pytest.mark.parametrize("base", ["sort", "bytetrack"])
@pytest.mark.parametrize("seed", [0, 1])
def test_all_off_equals_reference_trackers(base, seed):
    zones = grid_zones(5, 100.0, 25.0)
    _, scene = _scene(seed, occlusion_zones=zones)
    cfg = TrackerConfig(base=base)
    a, _ = run_scene(scene, cfg)
    b, _ = run_scene(scene, cfg, tracker_cls=baseline_for(cfg))
    assert baseline_for(cfg) is (SortTracker if base == "sort" else ByteTracker)
    assert len(a) > 0 and a == b


def test_cp_alone_changes_sigma_only():
    gt, scene = _scene(0)
    gtc, scc = _scene(100)
    q = calibrate(scc, gtc, 0.1)
    a, _ = run_scene(scene, TrackerConfig())
    b, _ = run_scene(scene, TrackerConfig(use_cp=True), q)
    assert [(r.frame, r.track_id, r.box) for r in a] == [(r.frame, r.track_id, r.box) for r in b]
    for ra, rb in zip(a, b):
        np.testing.assert_allclose(rb.sigma, np.multiply(ra.sigma, q.quantiles))


def test_run_scene_is_deterministic():
    _, scene = _scene(3)
    q = Q_IDENT
    a, _ = run_scene(scene, TrackerConfig.full(), q)
    b, _ = run_scene(scene, TrackerConfig.full(), q)
    assert a == b


def test_full_pipeline_records_are_well_formed():
    _, scene = _scene(4)
    recs, times = run_scene(scene, TrackerConfig.full("bytetrack"), Q_IDENT)
    assert len(times) == len(scene.frames)
    seen = set()
    for r in recs:
        assert (r.frame, r.track_id) not in seen
        seen.add((r.frame, r.track_id))
        assert isinstance(r.box, BoxState) and all(s > 0 for s in r.sigma)
