"""Line-delimited record files, JSON documents, TOML configs and run manifests.

Floats are written with ``repr`` semantics (shortest round-trip decimal), so
reading a file back yields bit-identical values.
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import tomli

from .conformal import QuantileSet
from .core import N_VARS, BoxState, Detection, GtObject, Scene, UQTrackError
from .tracker import TrackRecord


class DataError(UQTrackError):
    """Unreadable, missing or malformed input file."""


def _dumps(obj: Any) -> str:
    return json.dumps(obj, allow_nan=False, ensure_ascii=False, separators=(", ", ": "))


def write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_json(path, obj: Any) -> None:
    write_text(path, json.dumps(obj, allow_nan=False, ensure_ascii=False, indent=2) + "\n")


def read_json(path) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    except json.JSONDecodeError as e:
        raise DataError(f"{path}:{e.lineno}: invalid JSON ({e.msg})") from None


def write_jsonl(path, rows: Iterable[Mapping]) -> None:
    write_text(path, "".join(_dumps(r) + "\n" for r in rows))


def iter_jsonl(path):
    """Yield ``(line_number, record)`` for every non-blank line."""
    try:
        fh = open(path, encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    with fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{n}: invalid JSON ({e.msg})") from None
            if not isinstance(rec, dict):
                raise DataError(f"{path}:{n}: expected a JSON object")
            yield n, rec


def _vec(rec, key, path, n) -> tuple[float, ...]:
    v = rec.get(key)
    if not isinstance(v, list) or len(v) != N_VARS:
        raise DataError(f"{path}:{n}: field {key!r} must be a list of {N_VARS} numbers")
    try:
        out = tuple(float(x) for x in v)
    except (TypeError, ValueError):
        raise DataError(f"{path}:{n}: field {key!r} must be numeric") from None
    if not all(math.isfinite(x) for x in out):
        raise DataError(f"{path}:{n}: field {key!r} must be finite")
    return out


def _int(rec, key, path, n) -> int:
    v = rec.get(key)
    if isinstance(v, bool) or not isinstance(v, int):
        raise DataError(f"{path}:{n}: field {key!r} must be an integer")
    return v


def _num(rec, key, path, n) -> float:
    v = rec.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise DataError(f"{path}:{n}: field {key!r} must be a number")
    return float(v)


# --------------------------------------------------------------------------- detections


def detection_row(frame: int, d: Detection) -> dict:
    return {"frame": frame, "class_prob": d.class_prob, "mean": list(d.mean), "sigma": list(d.sigma), "score": d.score}


def write_detections(path, frames: Iterable[tuple[int, Sequence[Detection]]]) -> None:
    write_jsonl(path, (detection_row(f, d) for f, dets in frames for d in dets))


def read_detections(path, frame_range: tuple[int, int] | None = None) -> Scene:
    """Read a detection file into a :class:`Scene`.

    Frames without detections are filled in as empty frames across the
    contiguous range ``frame_range`` (inclusive) or, by default, the range
    spanned by the file.
    """
    by_frame: dict[int, list[Detection]] = {}
    for n, rec in iter_jsonl(path):
        frame = _int(rec, "frame", path, n)
        try:
            d = Detection(_num(rec, "class_prob", path, n), _vec(rec, "mean", path, n),
                          _vec(rec, "sigma", path, n), _num(rec, "score", path, n))
        except DataError:
            raise
        except UQTrackError as e:
            raise DataError(f"{path}:{n}: {e}") from None
        by_frame.setdefault(frame, []).append(d)
    if frame_range is None:
        if not by_frame:
            return Scene(())
        frame_range = (min(by_frame), max(by_frame))
    lo, hi = frame_range
    stray = [f for f in by_frame if not lo <= f <= hi]
    if stray:
        raise DataError(f"{path}: frame {min(stray)} outside range {lo}..{hi}")
    return Scene(tuple((f, tuple(by_frame.get(f, ()))) for f in range(lo, hi + 1)))


# --------------------------------------------------------------------------- ground truth


def write_gt(path, gt: Iterable[GtObject]) -> None:
    write_jsonl(path, ({"frame": g.frame, "id": g.object_id, "box": list(g.box.as_tuple())} for g in gt))


def read_gt(path) -> list[GtObject]:
    out = []
    for n, rec in iter_jsonl(path):
        try:
            box = BoxState.from_vector(_vec(rec, "box", path, n))
        except DataError:
            raise
        except UQTrackError as e:
            raise DataError(f"{path}:{n}: {e}") from None
        out.append(GtObject(_int(rec, "frame", path, n), _int(rec, "id", path, n), box))
    return out


def gt_frame_range(gt: Sequence[GtObject]) -> tuple[int, int] | None:
    if not gt:
        return None
    frames = [g.frame for g in gt]
    return min(frames), max(frames)


# --------------------------------------------------------------------------- tracks


def write_tracks(path, records: Iterable[TrackRecord]) -> None:
    write_jsonl(path, ({"frame": r.frame, "track_id": r.track_id, "box": list(r.box.as_tuple()),
                        "sigma": list(r.sigma), "score": r.score} for r in records))


def read_tracks(path) -> list[TrackRecord]:
    out = []
    for n, rec in iter_jsonl(path):
        try:
            box = BoxState.from_vector(_vec(rec, "box", path, n))
        except DataError:
            raise
        except UQTrackError as e:
            raise DataError(f"{path}:{n}: {e}") from None
        out.append(TrackRecord(_int(rec, "frame", path, n), _int(rec, "track_id", path, n), box,
                               _vec(rec, "sigma", path, n), _num(rec, "score", path, n)))
    return out


def write_timings(path, frames: Sequence[int], seconds: Sequence[float]) -> None:
    write_jsonl(path, ({"frame": f, "seconds": s} for f, s in zip(frames, seconds)))


def read_timings(path) -> list[float]:
    return [_num(rec, "seconds", path, n) for n, rec in iter_jsonl(path)]


# --------------------------------------------------------------------------- quantiles, configs


def write_quantiles(path, q: QuantileSet) -> None:
    write_json(path, q.to_dict())


def read_quantiles(path) -> QuantileSet:
    doc = read_json(path)
    try:
        return QuantileSet.from_dict(doc)
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"{path}: malformed quantile file ({e})") from None


def read_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    except tomli.TOMLDecodeError as e:
        raise DataError(f"{path}: invalid config ({e})") from None


# --------------------------------------------------------------------------- manifests


def write_manifest(path, command: str, config: str | os.PathLike | None, inputs: Mapping, outputs: Mapping,
                   seed: int | None, duration: float, argv: Sequence[str], version: str) -> None:
    write_json(path, {
        "command": command,
        "argv": list(argv),
        "config": None if config is None else str(config),
        "inputs": {k: str(v) for k, v in inputs.items() if v is not None},
        "outputs": {k: str(v) for k, v in outputs.items()},
        "seed": seed,
        "duration_seconds": duration,
        "version": version,
    })
