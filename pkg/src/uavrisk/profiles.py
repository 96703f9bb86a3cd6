"""Macroscopic/microscopic risk profiles, pair-category statistics and heatmaps."""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .trajectory_io import VEHICLE_CATEGORIES
from .ttc import DEFAULT_THRESHOLD, TtcRecord


@dataclass(frozen=True)
class MacroEntry:
    id: int
    category: str
    min_ttc: float
    partner_id: int


@dataclass(frozen=True)
class MacroProfile:
    frame: int
    entries: tuple[MacroEntry, ...]

    def ids(self) -> list[int]:
        return [e.id for e in self.entries]


@dataclass(frozen=True)
class MicroNeighbor:
    partner_id: int
    ttc: float
    distance: float


@dataclass(frozen=True)
class MicroProfile:
    id: int
    frame: int
    neighbors: tuple[MicroNeighbor, ...]


def _is_critical(rec: TtcRecord, threshold: float) -> bool:
    return rec.ttc is not None and rec.ttc < threshold


def _sides(rec: TtcRecord):
    g = rec.geometry
    yield g.id_a, rec.category_a, g.id_b
    yield g.id_b, rec.category_b, g.id_a


def macro_profile(records: Sequence[TtcRecord], threshold: float = DEFAULT_THRESHOLD, frame: int | None = None) -> MacroProfile:
    """Users whose smallest TTC in this frame is critical, sorted by id.

    ``records`` must all belong to one frame; ``frame`` is only needed when
    ``records`` is empty.
    """
    frames = {r.frame for r in records}
    if len(frames) > 1:
        raise ValueError(f"records span several frames: {sorted(frames)}")
    if frame is None:
        frame = frames.pop() if frames else 0

    best: dict[int, tuple[float, int, str]] = {}
    for rec in records:
        if rec.ttc is None:
            continue
        for ident, category, partner in _sides(rec):
            cur = best.get(ident)
            if cur is None or (rec.ttc, partner) < (cur[0], cur[1]):
                best[ident] = (rec.ttc, partner, category)
    entries = tuple(
        MacroEntry(ident, cat, ttc, partner)
        for ident, (ttc, partner, cat) in sorted(best.items())
        if ttc < threshold
    )
    return MacroProfile(frame, entries)


def macro_profiles(records: Iterable[TtcRecord], threshold: float = DEFAULT_THRESHOLD) -> list[MacroProfile]:
    """Per-frame profiles for every frame that has at least one risky user."""
    by_frame: dict[int, list[TtcRecord]] = defaultdict(list)
    for r in records:
        by_frame[r.frame].append(r)
    profiles = (macro_profile(by_frame[f], threshold, f) for f in sorted(by_frame))
    return [p for p in profiles if p.entries]


def micro_profile(records: Iterable[TtcRecord], ident: int, frame: int, threshold: float = DEFAULT_THRESHOLD) -> MicroProfile:
    neighbors = []
    for rec in records:
        if rec.frame != frame or not _is_critical(rec, threshold):
            continue
        g = rec.geometry
        if g.id_a == ident:
            neighbors.append(MicroNeighbor(g.id_b, rec.ttc, g.distance))
        elif g.id_b == ident:
            neighbors.append(MicroNeighbor(g.id_a, rec.ttc, g.distance))
    neighbors.sort(key=lambda n: (n.ttc, n.partner_id))
    return MicroProfile(ident, frame, tuple(neighbors))


@dataclass
class HeatmapGrid:
    origin: tuple[float, float]
    cell_size: float
    cells: dict[tuple[int, int], float] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return math.fsum(self.cells.values())

    def max_cell(self) -> tuple[tuple[int, int], float] | None:
        if not self.cells:
            return None
        # ties -> smallest (i, j), for reproducibility
        return min(self.cells.items(), key=lambda kv: (-kv[1], kv[0]))

    def cell_center(self, ij: tuple[int, int]) -> tuple[float, float]:
        i, j = ij
        return self.origin[0] + (i + 0.5) * self.cell_size, self.origin[1] + (j + 0.5) * self.cell_size

    def add(self, point: tuple[float, float], weight: float) -> None:
        if weight < 0:
            raise ValueError("heatmap weights must be non-negative")
        ij = (
            math.floor((point[0] - self.origin[0]) / self.cell_size),
            math.floor((point[1] - self.origin[1]) / self.cell_size),
        )
        self.cells[ij] = self.cells.get(ij, 0.0) + weight


def accumulate_heatmap(
    records: Iterable[TtcRecord],
    threshold: float = DEFAULT_THRESHOLD,
    cell_size: float = 2.0,
    origin: tuple[float, float] | None = None,
) -> HeatmapGrid:
    """Add ``threshold - ttc`` at the pair midpoint for each critical record.

    The origin defaults to the componentwise minimum midpoint; pass a fixed one
    to merge grids built from separate batches.
    """
    if not cell_size > 0:
        raise ValueError(f"cell_size must be > 0, got {cell_size}")
    hits = [(r.geometry.midpoint, threshold - r.ttc) for r in records if _is_critical(r, threshold)]
    if origin is None:
        if hits:
            origin = (min(p[0] for p, _ in hits), min(p[1] for p, _ in hits))
        else:
            origin = (0.0, 0.0)
    grid = HeatmapGrid(origin, cell_size)
    for point, weight in hits:
        grid.add(point, weight)
    return grid


def pair_label(cat_a: str, cat_b: str) -> str:
    return "-".join(sorted((cat_a, cat_b)))


def _percentages(counts: dict[str, int]) -> dict[str, float]:
    total = sum(counts.values())
    if not total:
        return {}
    return {k: 100.0 * v / total for k, v in sorted(counts.items())}


@dataclass
class PairStats:
    counts: dict[str, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def percentages(self, exclude_car_car: bool = False) -> dict[str, float]:
        view = {k: v for k, v in self.counts.items() if not (exclude_car_car and k == "car-car")}
        return _percentages(view)

    def vehicle_vehicle_share(self) -> float | None:
        """Percent of critical records with both users in a vehicle category."""
        if not self.total:
            return None
        vv = sum(n for k, n in self.counts.items() if all(c in VEHICLE_CATEGORIES for c in k.split("-")))
        return 100.0 * vv / self.total

    def to_dict(self) -> dict:
        return {
            "total_critical": self.total,
            "counts": dict(sorted(self.counts.items())),
            "percent_all": self.percentages(),
            "percent_excluding_car_car": self.percentages(exclude_car_car=True),
            "vehicle_vehicle_percent": self.vehicle_vehicle_share(),
        }


def pair_category_stats(records: Iterable[TtcRecord], threshold: float = DEFAULT_THRESHOLD) -> PairStats:
    counts = Counter(pair_label(r.category_a, r.category_b) for r in records if _is_critical(r, threshold))
    return PairStats(dict(counts))


def heatmap_csv(grid: HeatmapGrid) -> str:
    lines = ["i,j,intensity"]
    lines += [f"{i},{j},{v!r}" for (i, j), v in sorted(grid.cells.items())]
    return "\n".join(lines) + "\n"


def render_heatmap_svg(grid: HeatmapGrid, pixels_per_cell: int = 10, color: str = "#c0392b") -> str:
    """SVG with one rectangle per nonzero cell, opacity = intensity / max intensity."""
    nonzero = {ij: v for ij, v in grid.cells.items() if v > 0}
    if any(not math.isfinite(v) for v in nonzero.values()):
        raise ValueError("heatmap has non-finite intensities")
    if nonzero:
        i0 = min(i for i, _ in nonzero)
        j0 = min(j for _, j in nonzero)
        cols = max(i for i, _ in nonzero) - i0 + 1
        rows = max(j for _, j in nonzero) - j0 + 1
        peak = max(nonzero.values())
    else:
        i0 = j0 = 0
        cols = rows = 1
        peak = 1.0
    w, h = cols * pixels_per_cell, rows * pixels_per_cell
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="white" class="background"/>',
    ]
    for (i, j), v in sorted(nonzero.items()):
        # image y grows downward, as in the source video
        x = (i - i0) * pixels_per_cell
        y = (j - j0) * pixels_per_cell
        out.append(
            f'<rect x="{x}" y="{y}" width="{pixels_per_cell}" height="{pixels_per_cell}" '
            f'fill="{color}" fill-opacity="{v / peak:.6g}" class="cell"/>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
