"""Pixel-to-meter scale estimation and per-track kinematics."""
from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import Sequence

from .trajectory_io import Track, TrackSample

DEFAULT_FPS = 30.0


class ScaleEstimationError(ValueError):
    pass


@dataclass(frozen=True)
class SceneScale:
    meters_per_pixel: float
    fps: float = DEFAULT_FPS
    source: str = "manual"

    def __post_init__(self):
        if not self.meters_per_pixel > 0:
            raise ValueError(f"meters_per_pixel must be > 0, got {self.meters_per_pixel}")
        if not self.fps > 0:
            raise ValueError(f"fps must be > 0, got {self.fps}")
        if self.source not in ("estimated", "manual"):
            raise ValueError(f"unknown scale source {self.source!r}")


@dataclass(frozen=True)
class VehicleDims:
    length: float = 4.0
    width: float = 1.7

    def __post_init__(self):
        if not (self.length > self.width > 0):
            raise ValueError(f"need length > width > 0, got {self.length} x {self.width}")


@dataclass(frozen=True)
class KinematicState:
    id: int
    category: str
    frame: int
    position: tuple[float, float]
    velocity: tuple[float, float]
    speed: float


def estimate_scale(tracks: Sequence[Track], dims: VehicleDims = VehicleDims(), fps: float = DEFAULT_FPS) -> SceneScale:
    """Median over car boxes of sqrt(footprint area / box area).

    Matching areas rather than sides keeps the estimate independent of how a
    car is rotated inside its axis-aligned box.
    """
    area = dims.length * dims.width
    candidates = [
        math.sqrt(area / (s.bb_width * s.bb_height))
        for t in tracks
        if t.category == "car"
        for s in t.samples
    ]
    if not candidates:
        raise ScaleEstimationError("no car detections to estimate scale from; pass a manual scale instead")
    return SceneScale(statistics.median(candidates), fps, "estimated")


def to_world(sample: TrackSample, scale: SceneScale) -> tuple[float, float]:
    m = scale.meters_per_pixel
    return sample.center_x * m, sample.center_y * m


def derive_kinematics(track: Track, scale: SceneScale, stride: int = 1, window: int = 5) -> list[KinematicState]:
    """World-frame position, velocity and speed for each sample of ``track``.

    A sample gets a state only if the track also has a sample exactly
    ``stride`` frames earlier. Velocities are finite differences over
    ``stride / fps`` seconds, then averaged over states whose frames lie within
    ``window // 2`` of each other (fewer near the ends and around gaps).
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd number, got {window}")

    dt = stride / scale.fps
    by_frame = {s.frame: s for s in track.samples}
    raw: list[tuple[int, tuple[float, float], tuple[float, float]]] = []
    for s in track.samples:
        prev = by_frame.get(s.frame - stride)
        if prev is None:
            continue
        x, y = to_world(s, scale)
        px, py = to_world(prev, scale)
        raw.append((s.frame, (x, y), ((x - px) / dt, (y - py) / dt)))

    half = window // 2
    states = []
    lo = 0
    hi = 0
    for frame, pos, _ in raw:
        while raw[lo][0] < frame - half:
            lo += 1
        while hi < len(raw) and raw[hi][0] <= frame + half:
            hi += 1
        chunk = raw[lo:hi]
        vx = math.fsum(v[0] for _, _, v in chunk) / len(chunk)
        vy = math.fsum(v[1] for _, _, v in chunk) / len(chunk)
        states.append(KinematicState(track.id, track.category, frame, pos, (vx, vy), math.hypot(vx, vy)))
    return states


def kinematics_by_frame(states_per_track: Sequence[Sequence[KinematicState]]) -> dict[int, list[KinematicState]]:
    """Regroup per-track states into frame -> states sorted by id."""
    frames: dict[int, list[KinematicState]] = {}
    for states in states_per_track:
        for st in states:
            frames.setdefault(st.frame, []).append(st)
    return {f: sorted(frames[f], key=lambda s: s.id) for f in sorted(frames)}
