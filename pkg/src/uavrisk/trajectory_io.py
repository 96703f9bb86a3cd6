"""Annotation parsing and per-identity track assembly.

Input files follow the VisDrone MOT layout, one detection per line::

    frame,id,bb_left,bb_top,bb_width,bb_height,score,category,truncation,occlusion
"""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

CATEGORY_NAMES = frozenset(
    {"pedestrian", "bicycle", "car", "van", "truck", "bus", "motor", "ignored", "other"}
)
VEHICLE_CATEGORIES = frozenset({"car", "van", "truck", "bus", "motor"})

N_FIELDS = 10


class AnnotationParseError(ValueError):
    def __init__(self, line_no: int, message: str, source: str | None = None):
        self.line_no = line_no
        self.source = source
        where = f"{source}:{line_no}" if source else f"line {line_no}"
        super().__init__(f"{where}: {message}")


class DatasetValidationError(ValueError):
    pass


@dataclass(frozen=True)
class CategoryMap:
    """Integer category code -> category name. Unlisted codes map to ``default``."""

    codes: Mapping[int, str]
    default: str = "other"

    def __post_init__(self):
        for code, name in self.codes.items():
            if name not in CATEGORY_NAMES:
                raise ValueError(f"unknown category name {name!r} for code {code}")
        if self.default not in CATEGORY_NAMES:
            raise ValueError(f"unknown default category {self.default!r}")

    def name(self, code: int) -> str:
        return self.codes.get(code, self.default)

    def code_for(self, name: str) -> int:
        """Smallest code carrying ``name``."""
        matches = sorted(c for c, n in self.codes.items() if n == name)
        if not matches:
            raise KeyError(name)
        return matches[0]

    def knows(self, code: int) -> bool:
        return code in self.codes

    def with_overrides(self, entries: Mapping[str, str]) -> "CategoryMap":
        """Apply ``category.<code> = <name>`` config entries; other keys are ignored."""
        codes = dict(self.codes)
        for key, value in entries.items():
            if not key.startswith("category."):
                continue
            try:
                code = int(key.split(".", 1)[1])
            except ValueError:
                raise ValueError(f"bad category key {key!r}") from None
            codes[code] = value.strip()
        return CategoryMap(codes, self.default)


DEFAULT_CATEGORY_MAP = CategoryMap(
    {0: "ignored", 1: "pedestrian", 3: "bicycle", 4: "car", 5: "van", 6: "truck", 9: "bus", 10: "motor"}
)


@dataclass(frozen=True)
class Detection:
    frame: int
    id: int
    bb_left: float
    bb_top: float
    bb_width: float
    bb_height: float
    score: float
    category: int
    truncation: int = 0
    occlusion: int = 0

    @property
    def center(self) -> tuple[float, float]:
        return self.bb_left + self.bb_width / 2, self.bb_top + self.bb_height / 2

    @property
    def box(self) -> tuple[float, float, float, float]:
        return self.bb_left, self.bb_top, self.bb_width, self.bb_height


@dataclass(frozen=True)
class TrackSample:
    frame: int
    center_x: float
    center_y: float
    bb_width: float
    bb_height: float


@dataclass(frozen=True)
class Track:
    id: int
    category: str
    samples: tuple[TrackSample, ...]

    @property
    def frames(self) -> list[int]:
        return [s.frame for s in self.samples]

    def __len__(self):
        return len(self.samples)


@dataclass
class ValidationReport:
    duplicates: list[tuple[int, int]] = field(default_factory=list)
    # (id, frame_before, frame_after, gap)
    gaps: list[tuple[int, int, int, int]] = field(default_factory=list)
    unknown_categories: list[int] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not (self.duplicates or self.gaps or self.unknown_categories)

    def lines(self) -> list[str]:
        out = [f"duplicate detection frame={f} id={i}" for f, i in self.duplicates]
        out += [f"id={i} gap of {g} frames between {a} and {b}" for i, a, b, g in self.gaps]
        out += [f"category code {c} not in category map" for c in self.unknown_categories]
        return out


def _to_int(token: str) -> int:
    value = float(token)
    if not math.isfinite(value) or value != int(value):
        raise ValueError(f"expected an integer, got {token!r}")
    return int(value)


def _parse_line(line: str, line_no: int, source: str | None) -> Detection:
    parts = [p.strip() for p in line.split(",")]
    if len(parts) != N_FIELDS:
        raise AnnotationParseError(line_no, f"expected {N_FIELDS} fields, got {len(parts)}", source)
    try:
        frame, ident = _to_int(parts[0]), _to_int(parts[1])
        left, top, width, height, score = (float(p) for p in parts[2:7])
        category, truncation, occlusion = (_to_int(p) for p in parts[7:10])
    except ValueError as exc:
        raise AnnotationParseError(line_no, f"non-numeric field ({exc})", source) from None
    if not all(math.isfinite(v) for v in (left, top, width, height, score)):
        raise AnnotationParseError(line_no, "non-finite field", source)
    if frame < 1:
        raise AnnotationParseError(line_no, f"frame must be >= 1, got {frame}", source)
    if ident < 0:
        raise AnnotationParseError(line_no, f"id must be >= 0, got {ident}", source)
    if width <= 0 or height <= 0:
        raise AnnotationParseError(line_no, f"box dimensions must be positive, got {width}x{height}", source)
    return Detection(frame, ident, left, top, width, height, score, category, truncation, occlusion)


def parse_annotations(
    text: str,
    category_map: CategoryMap = DEFAULT_CATEGORY_MAP,
    *,
    source: str | None = None,
    check_duplicates: bool = True,
) -> list[Detection]:
    """Parse annotation text into detections, dropping "ignored" categories.

    Blank lines are skipped. Raises AnnotationParseError on a malformed line and
    DatasetValidationError on a repeated (frame, id) pair unless
    ``check_duplicates`` is off.
    """
    dets: list[Detection] = []
    seen: dict[tuple[int, int], int] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        det = _parse_line(line, line_no, source)
        if category_map.name(det.category) == "ignored":
            continue
        key = (det.frame, det.id)
        if check_duplicates and key in seen:
            where = f"{source}:" if source else "line "
            raise DatasetValidationError(
                f"{where}{line_no}: duplicate detection frame={det.frame} id={det.id} "
                f"(first seen at line {seen[key]})"
            )
        seen.setdefault(key, line_no)
        dets.append(det)
    return dets


def _fmt(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def format_annotations(dets: Iterable[Detection]) -> str:
    """Inverse of :func:`parse_annotations`."""
    lines = []
    for d in dets:
        fields = [
            str(d.frame), str(d.id),
            _fmt(d.bb_left), _fmt(d.bb_top), _fmt(d.bb_width), _fmt(d.bb_height),
            _fmt(d.score), str(d.category), str(d.truncation), str(d.occlusion),
        ]
        lines.append(",".join(fields))
    return "\n".join(lines) + ("\n" if lines else "")


def build_tracks(dets: Sequence[Detection], category_map: CategoryMap = DEFAULT_CATEGORY_MAP) -> list[Track]:
    """Group detections by id into frame-sorted tracks, ordered by id.

    The track category is the most frequent category code of the id, ties going
    to the smaller code.
    """
    by_id: dict[int, list[Detection]] = defaultdict(list)
    for d in dets:
        by_id[d.id].append(d)

    tracks = []
    for ident in sorted(by_id):
        group = sorted(by_id[ident], key=lambda d: d.frame)
        counts = Counter(d.category for d in group)
        code = min(counts, key=lambda c: (-counts[c], c))
        samples = tuple(
            TrackSample(d.frame, d.center[0], d.center[1], d.bb_width, d.bb_height) for d in group
        )
        tracks.append(Track(ident, category_map.name(code), samples))
    return tracks


def validate_dataset(
    dets: Sequence[Detection],
    category_map: CategoryMap = DEFAULT_CATEGORY_MAP,
    gap_limit: int = 5,
) -> ValidationReport:
    """Report duplicates, per-id frame gaps larger than ``gap_limit`` and unmapped category codes."""
    report = ValidationReport()
    counts = Counter((d.frame, d.id) for d in dets)
    report.duplicates = sorted(k for k, n in counts.items() if n > 1)

    frames_by_id: dict[int, set[int]] = defaultdict(set)
    for d in dets:
        frames_by_id[d.id].add(d.frame)
    for ident in sorted(frames_by_id):
        frames = sorted(frames_by_id[ident])
        for a, b in zip(frames, frames[1:]):
            if b - a > gap_limit:
                report.gaps.append((ident, a, b, b - a))

    report.unknown_categories = sorted({d.category for d in dets if not category_map.knows(d.category)})
    return report


def read_annotations(path, category_map: CategoryMap = DEFAULT_CATEGORY_MAP) -> list[Detection]:
    with open(path, encoding="utf-8") as fh:
        return parse_annotations(fh.read(), category_map, source=str(path))
