"""End-to-end assessment: annotations -> tracks -> kinematics -> TTC records."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

from .calibration import (
    DEFAULT_FPS, KinematicState, SceneScale, VehicleDims,
    derive_kinematics, estimate_scale, kinematics_by_frame,
)
from .trajectory_io import DEFAULT_CATEGORY_MAP, CategoryMap, Detection, Track, build_tracks, parse_annotations
from .ttc import DEFAULT_RADIUS, DEFAULT_THRESHOLD, TtcRecord, assess_frames

SCHEMA_VERSION = 1
RECORD_HEADER = [
    "frame", "id_a", "id_b", "category_a", "category_b",
    "distance_m", "rel_speed_mps", "closing_speed_mps", "ttc_s", "critical",
]


@dataclass(frozen=True)
class AssessParams:
    fps: float = DEFAULT_FPS
    scale: float | None = None  # m/px; None -> estimate from car boxes
    stride: int = 1
    smooth_window: int = 5
    dims: VehicleDims = VehicleDims()
    threshold: float = DEFAULT_THRESHOLD
    radius: float = DEFAULT_RADIUS
    mode: str = "projected"
    workers: int = 1


@dataclass
class Assessment:
    detections: list[Detection]
    tracks: list[Track]
    scale: SceneScale | None
    states: list[KinematicState] = field(default_factory=list)
    records: list[TtcRecord] = field(default_factory=list)

    @property
    def frame_count(self) -> int:
        return len({d.frame for d in self.detections})

    @property
    def user_count(self) -> int:
        return len(self.tracks)

    @property
    def critical_count(self) -> int:
        return sum(r.critical for r in self.records)


def resolve_scale(tracks: list[Track], params: AssessParams) -> SceneScale:
    if params.scale is not None:
        return SceneScale(params.scale, params.fps, "manual")
    return estimate_scale(tracks, params.dims, params.fps)


def assess_detections(dets: list[Detection], params: AssessParams, category_map: CategoryMap = DEFAULT_CATEGORY_MAP) -> Assessment:
    tracks = build_tracks(dets, category_map)
    if not tracks:
        return Assessment(dets, tracks, None)
    scale = resolve_scale(tracks, params)
    per_track = [derive_kinematics(t, scale, params.stride, params.smooth_window) for t in tracks]
    by_frame = kinematics_by_frame(per_track)
    records = assess_frames(by_frame, params.radius, params.threshold, params.mode, params.workers)
    states = [s for frame_states in by_frame.values() for s in frame_states]
    return Assessment(dets, tracks, scale, states, records)


def assess_text(text: str, params: AssessParams = AssessParams(), category_map: CategoryMap = DEFAULT_CATEGORY_MAP, source=None) -> Assessment:
    return assess_detections(parse_annotations(text, category_map, source=source), params, category_map)


def records_to_csv(records: list[TtcRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RECORD_HEADER)
    for r in records:
        g = r.geometry
        writer.writerow([
            g.frame, g.id_a, g.id_b, r.category_a, r.category_b,
            repr(g.distance), repr(g.rel_speed), repr(g.closing_speed),
            "" if r.ttc is None else repr(r.ttc),
            "true" if r.critical else "false",
        ])
    return buf.getvalue()


@dataclass(frozen=True)
class RecordRow:
    """A TTC record read back from CSV (positions are not serialized)."""

    frame: int
    id_a: int
    id_b: int
    category_a: str
    category_b: str
    distance: float
    rel_speed: float
    closing_speed: float
    ttc: float | None
    critical: bool

    @property
    def key(self) -> tuple[int, int, int]:
        return self.frame, self.id_a, self.id_b


def records_from_csv(text: str) -> list[RecordRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        return []
    if header != RECORD_HEADER:
        raise ValueError(f"unexpected TTC record header {header}")
    rows = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            rows.append(RecordRow(
                int(row[0]), int(row[1]), int(row[2]), row[3], row[4],
                float(row[5]), float(row[6]), float(row[7]),
                float(row[8]) if row[8] else None,
                {"true": True, "false": False}[row[9]],
            ))
        except (ValueError, KeyError, IndexError) as exc:
            raise ValueError(f"line {line_no}: malformed TTC record ({exc})") from None
    return rows


def dump_json(obj) -> str:
    """Canonical JSON text for output files."""
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"
