import math

import pytest

from uavrisk.calibration import KinematicState
from uavrisk.ttc import make_record


def state(ident, pos, vel=(0.0, 0.0), frame=1, category="car"):
    return KinematicState(ident, category, frame, tuple(map(float, pos)), tuple(map(float, vel)), math.hypot(*vel))


def record(id_a, id_b, ttc=None, frame=1, cat_a="car", cat_b="car", pos_a=(0.0, 0.0), pos_b=(1.0, 0.0),
           distance=None, threshold=2.5):
    """TtcRecord with a chosen ttc, built through make_record then overridden."""
    from dataclasses import replace

    rec = make_record(state(id_a, pos_a, frame=frame, category=cat_a),
                      state(id_b, pos_b, frame=frame, category=cat_b), threshold, "projected")
    geom = rec.geometry if distance is None else replace(rec.geometry, distance=distance)
    return replace(rec, geometry=geom, ttc=ttc, critical=ttc is not None and ttc < threshold)


@pytest.fixture
def make_state():
    return state


@pytest.fixture
def make_ttc_record():
    return record


_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record one acceptance criterion's verdict, then assert it."""
    def check(number, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}" + (f" ({detail})" if detail else "")
        _CRITERIA.append(line)
        print(line)
        assert ok, line
    return check


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
