"""Pairwise time-to-collision under constant-velocity motion.

Two denominators are supported. ``projected`` divides the center distance by
the closing speed (the component of relative velocity along the line of
centers). ``literal`` divides by the full relative speed but still requires the
pair to be closing.
"""
from __future__ import annotations

import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Iterable, Mapping, Sequence

from .calibration import KinematicState

MODES = ("projected", "literal")
DEFAULT_THRESHOLD = 2.5
DEFAULT_RADIUS = 30.0
MOVING_EPS = 1e-6  # m/s
# TTCs are rounded to this many decimals (0.1 ns) so that rounding noise from
# the pixel -> meter conversion cannot move a value across the threshold
TTC_DECIMALS = 10


@dataclass(frozen=True)
class PairGeometry:
    id_a: int
    id_b: int
    frame: int
    pos_a: tuple[float, float]
    pos_b: tuple[float, float]
    distance: float
    rel_velocity: tuple[float, float]
    rel_speed: float
    closing_speed: float  # > 0 while the gap shrinks
    alpha: float  # angle between the two velocities
    theta: float  # angle between rel_velocity and the b->a line of centers

    @property
    def midpoint(self) -> tuple[float, float]:
        return (self.pos_a[0] + self.pos_b[0]) / 2, (self.pos_a[1] + self.pos_b[1]) / 2


@dataclass(frozen=True)
class TtcRecord:
    geometry: PairGeometry
    ttc: float | None
    mode: str
    critical: bool
    category_a: str = "other"
    category_b: str = "other"

    @property
    def frame(self) -> int:
        return self.geometry.frame

    @property
    def key(self) -> tuple[int, int, int]:
        return self.geometry.frame, self.geometry.id_a, self.geometry.id_b


def _angle(u: tuple[float, float], v: tuple[float, float]) -> float:
    """Unsigned angle in [0, pi]; 0 when either vector is zero."""
    cross = u[0] * v[1] - u[1] * v[0]
    dot = u[0] * v[0] + u[1] * v[1]
    return math.atan2(abs(cross), dot)


def pair_geometry(a: KinematicState, b: KinematicState) -> PairGeometry:
    if a.frame != b.frame:
        raise ValueError(f"states from different frames ({a.frame}, {b.frame})")
    if a.id == b.id:
        raise ValueError(f"pair of identical id {a.id}")
    rel = (b.velocity[0] - a.velocity[0], b.velocity[1] - a.velocity[1])
    rel_speed = math.hypot(*rel)
    dx, dy = a.position[0] - b.position[0], a.position[1] - b.position[1]
    distance = math.hypot(dx, dy)
    if distance == 0.0:
        closing, theta = rel_speed, 0.0
    else:
        u = (dx / distance, dy / distance)
        closing = rel[0] * u[0] + rel[1] * u[1]
        theta = _angle(rel, u)
    return PairGeometry(
        id_a=a.id,
        id_b=b.id,
        frame=a.frame,
        pos_a=a.position,
        pos_b=b.position,
        distance=distance,
        rel_velocity=rel,
        rel_speed=rel_speed,
        closing_speed=closing,
        alpha=_angle(a.velocity, b.velocity),
        theta=theta,
    )


def rel_speed_law_of_cosines(speed_a: float, speed_b: float, alpha: float) -> float:
    if speed_a < 0 or speed_b < 0:
        raise ValueError("speeds must be non-negative")
    sq = speed_a * speed_a + speed_b * speed_b - 2.0 * speed_a * speed_b * math.cos(alpha)
    return math.sqrt(max(sq, 0.0))


def time_to_collision(g: PairGeometry, mode: str = "projected", eps: float = MOVING_EPS) -> float | None:
    """Seconds until center coincidence, or None when the pair is not closing."""
    if mode == "projected":
        if g.closing_speed > eps:
            return round(g.distance / g.closing_speed, TTC_DECIMALS)
        return None
    if mode == "literal":
        if g.rel_speed > eps and g.closing_speed > 0:
            return round(g.distance / g.rel_speed, TTC_DECIMALS)
        return None
    raise ValueError(f"unknown ttc mode {mode!r}")


def classify(ttc: float | None, threshold: float = DEFAULT_THRESHOLD) -> bool:
    if not threshold > 0:
        raise ValueError(f"threshold must be > 0, got {threshold}")
    return ttc is not None and ttc < threshold


def make_record(a: KinematicState, b: KinematicState, threshold: float, mode: str) -> TtcRecord:
    if b.id < a.id:
        a, b = b, a
    g = pair_geometry(a, b)
    ttc = time_to_collision(g, mode)
    return TtcRecord(g, ttc, mode, classify(ttc, threshold), a.category, b.category)


class SpatialGrid:
    """Uniform grid bucketing states by cell for radius queries."""

    def __init__(self, cell_size: float):
        if not cell_size > 0:
            raise ValueError(f"cell_size must be > 0, got {cell_size}")
        self.cell_size = cell_size
        self.cells: dict[tuple[int, int], list[KinematicState]] = defaultdict(list)

    def cell_of(self, position: tuple[float, float]) -> tuple[int, int]:
        if math.isinf(self.cell_size):
            return 0, 0
        return math.floor(position[0] / self.cell_size), math.floor(position[1] / self.cell_size)

    def insert(self, state: KinematicState) -> None:
        self.cells[self.cell_of(state.position)].append(state)

    def candidate_pairs(self) -> Iterable[tuple[KinematicState, KinematicState]]:
        """Each unordered pair sharing a 3x3 neighborhood, exactly once."""
        for (cx, cy), members in self.cells.items():
            for i, a in enumerate(members):
                for b in members[i + 1:]:
                    yield a, b
            # half of the 8 neighbours, so each cell pair is visited once
            for ox, oy in ((1, -1), (1, 0), (1, 1), (0, 1)):
                other = self.cells.get((cx + ox, cy + oy))
                if other:
                    for a in members:
                        for b in other:
                            yield a, b


def _within(a: KinematicState, b: KinematicState, radius: float) -> bool:
    return math.hypot(a.position[0] - b.position[0], a.position[1] - b.position[1]) <= radius


def _check_states(states: Sequence[KinematicState]) -> None:
    ids = [s.id for s in states]
    if len(set(ids)) != len(ids):
        raise ValueError("more than one state per id in frame")


def assess_frame(
    states: Sequence[KinematicState],
    radius: float = DEFAULT_RADIUS,
    threshold: float = DEFAULT_THRESHOLD,
    mode: str = "projected",
) -> list[TtcRecord]:
    """One record per pair within ``radius`` meters, sorted by (id_a, id_b)."""
    _check_states(states)
    if mode not in MODES:
        raise ValueError(f"unknown ttc mode {mode!r}")
    grid = SpatialGrid(radius)
    for s in states:
        grid.insert(s)
    records = [make_record(a, b, threshold, mode) for a, b in grid.candidate_pairs() if _within(a, b, radius)]
    records.sort(key=lambda r: (r.geometry.id_a, r.geometry.id_b))
    return records


def assess_frame_brute(
    states: Sequence[KinematicState],
    radius: float = DEFAULT_RADIUS,
    threshold: float = DEFAULT_THRESHOLD,
    mode: str = "projected",
) -> list[TtcRecord]:
    """All-pairs reference for :func:`assess_frame`."""
    _check_states(states)
    ordered = sorted(states, key=lambda s: s.id)
    return [
        make_record(a, b, threshold, mode)
        for i, a in enumerate(ordered)
        for b in ordered[i + 1:]
        if _within(a, b, radius)
    ]


def assess_frames(
    states_by_frame: Mapping[int, Sequence[KinematicState]],
    radius: float = DEFAULT_RADIUS,
    threshold: float = DEFAULT_THRESHOLD,
    mode: str = "projected",
    workers: int = 1,
) -> list[TtcRecord]:
    """Assess every frame; output is in frame order whatever ``workers`` is."""
    frames = sorted(states_by_frame)
    job = partial(assess_frame, radius=radius, threshold=threshold, mode=mode)
    batches = [states_by_frame[f] for f in frames]
    if workers > 1 and len(frames) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, batches, chunksize=max(1, len(batches) // (4 * workers))))
    else:
        results = [job(b) for b in batches]
    return [r for frame_records in results for r in frame_records]
