import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from uqtrack.core import BoxState, Detection, GtObject  # noqa: E402
from uqtrack.tracker import TrackRecord  # noqa: E402

REPO = Path(__file__).resolve().parents[1]

# (criterion number, passed, detail), filled in by tests/test_acceptance.py
ACCEPTANCE_LINES: list[tuple[int, bool, str]] = []


def det(mean, sigma=(1.0, 1.0, 1.0, 1.0), score=0.9, class_prob=None):
    return Detection(score if class_prob is None else class_prob, tuple(mean), tuple(sigma), score)


def gto(frame, oid, box):
    return GtObject(frame, oid, BoxState(*box))


def rec(frame, tid, box, sigma=(1.0, 1.0, 1.0, 1.0), score=0.9):
    return TrackRecord(frame, tid, BoxState(*box), tuple(sigma), score)


@pytest.fixture
def record_criterion():
    def _record(number: int, passed: bool, detail: str):
        ACCEPTANCE_LINES.append((number, bool(passed), detail))
        print(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_LINES, key=lambda x: x[0]):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
