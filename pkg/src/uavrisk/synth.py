"""Constant-velocity synthetic scenarios and closed-form / numeric TTC oracles."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .trajectory_io import DEFAULT_CATEGORY_MAP, CategoryMap, Detection, format_annotations

# (length along x, width along y) in meters
FOOTPRINTS = {
    "car": (4.0, 1.7),
    "van": (5.0, 2.0),
    "truck": (8.0, 2.5),
    "bus": (12.0, 2.5),
    "motor": (2.0, 0.8),
    "bicycle": (1.8, 0.6),
    "pedestrian": (0.6, 0.6),
    "other": (2.0, 2.0),
}


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class AgentSpec:
    id: int
    category: str
    position: tuple[float, float]  # meters, at start_frame
    velocity: tuple[float, float]  # m/s
    start_frame: int
    end_frame: int

    def __post_init__(self):
        if self.end_frame <= self.start_frame:
            raise ScenarioError(f"agent {self.id}: end_frame must exceed start_frame")
        if self.start_frame < 1:
            raise ScenarioError(f"agent {self.id}: frames start at 1")
        if self.category not in FOOTPRINTS:
            raise ScenarioError(f"agent {self.id}: no footprint for category {self.category!r}")

    def position_at(self, t: float, fps: float) -> tuple[float, float]:
        """Position at absolute time ``t`` seconds (frame f is at f / fps)."""
        dt = t - self.start_frame / fps
        return self.position[0] + self.velocity[0] * dt, self.position[1] + self.velocity[1] * dt


@dataclass(frozen=True)
class ScenarioSpec:
    agents: tuple[AgentSpec, ...]
    fps: float = 30.0
    scale: float = 0.05  # m/px
    noise: float = 0.0  # px, std of center jitter
    seed: int = 0

    def __post_init__(self):
        if not self.scale > 0 or not self.fps > 0:
            raise ScenarioError("scale and fps must be positive")
        if self.noise < 0:
            raise ScenarioError("noise must be non-negative")
        spans: dict[int, list[tuple[int, int]]] = {}
        for a in self.agents:
            for s, e in spans.get(a.id, []):
                if a.start_frame <= e and s <= a.end_frame:
                    raise ScenarioError(f"agent id {a.id} defined twice over overlapping frames")
            spans.setdefault(a.id, []).append((a.start_frame, a.end_frame))

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        agents = tuple(
            AgentSpec(
                int(a["id"]), a.get("category", "car"),
                tuple(map(float, a["position"])), tuple(map(float, a["velocity"])),
                int(a["start_frame"]), int(a["end_frame"]),
            )
            for a in d["agents"]
        )
        return cls(agents, float(d.get("fps", 30.0)), float(d.get("scale", 0.05)),
                   float(d.get("noise", 0.0)), int(d.get("seed", 0)))

    @classmethod
    def from_json(cls, text: str) -> "ScenarioSpec":
        return cls.from_dict(json.loads(text))

    def scaled(self, c: float) -> "ScenarioSpec":
        """Same scene with every length and speed multiplied by ``c``."""
        agents = tuple(
            AgentSpec(a.id, a.category, (a.position[0] * c, a.position[1] * c),
                      (a.velocity[0] * c, a.velocity[1] * c), a.start_frame, a.end_frame)
            for a in self.agents
        )
        return ScenarioSpec(agents, self.fps, self.scale * c, self.noise, self.seed)


@dataclass
class Scenario:
    text: str
    detections: list[Detection]
    # id -> list of (frame, position m, velocity m/s)
    truth: dict[int, list[tuple[int, tuple[float, float], tuple[float, float]]]] = field(default_factory=dict)


def generate_scenario(spec: ScenarioSpec, category_map: CategoryMap = DEFAULT_CATEGORY_MAP) -> Scenario:
    rng = np.random.default_rng(spec.seed)
    rows = []
    truth: dict[int, list] = {}
    for a in spec.agents:
        length, width = FOOTPRINTS[a.category]
        w_px, h_px = length / spec.scale, width / spec.scale
        code = category_map.code_for(a.category)
        for f in range(a.start_frame, a.end_frame + 1):
            x, y = a.position_at(f / spec.fps, spec.fps)
            truth.setdefault(a.id, []).append((f, (x, y), a.velocity))
            rows.append((f, a.id, x / spec.scale, y / spec.scale, w_px, h_px, code))
    rows.sort(key=lambda r: (r[0], r[1]))
    dets = []
    for f, ident, cx, cy, w, h, code in rows:
        if spec.noise > 0:
            cx += rng.normal(0.0, spec.noise)
            cy += rng.normal(0.0, spec.noise)
        dets.append(Detection(f, ident, cx - w / 2, cy - h / 2, w, h, 1.0, code, 0, 0))
    return Scenario(format_annotations(dets), dets, truth)


def analytic_ttc(a: AgentSpec, b: AgentSpec, t: float, fps: float = 30.0) -> float | None:
    """Distance over the rate at which the distance shrinks, at time ``t``.

    For collinear closing pairs this is the exact time until the centers meet.
    """
    pa, pb = a.position_at(t, fps), b.position_at(t, fps)
    dx, dy = pb[0] - pa[0], pb[1] - pa[1]
    dvx, dvy = b.velocity[0] - a.velocity[0], b.velocity[1] - a.velocity[1]
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        return 0.0 if (dvx or dvy) else None
    shrink_rate = -(dx * dvx + dy * dvy) / dist
    if shrink_rate <= 0:
        return None
    return dist / shrink_rate


def brute_force_ttc(
    a: AgentSpec,
    b: AgentSpec,
    t: float,
    fps: float = 30.0,
    dt: float = 1e-3,
    horizon: float = 60.0,
) -> float | None:
    """Step both agents forward by ``dt`` until their centers coincide.

    Coincidence means the distance is within one step of closure
    (``dt`` times the current closing rate). Returns None if that never
    happens within ``horizon`` seconds.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    steps = np.arange(int(math.ceil(horizon / dt)) + 1) * dt
    pa0, pb0 = a.position_at(t, fps), b.position_at(t, fps)
    xa = pa0[0] + a.velocity[0] * steps
    ya = pa0[1] + a.velocity[1] * steps
    xb = pb0[0] + b.velocity[0] * steps
    yb = pb0[1] + b.velocity[1] * steps
    dist = np.hypot(xb - xa, yb - ya)
    closing = np.empty_like(dist)
    closing[1:] = (dist[:-1] - dist[1:]) / dt
    closing[0] = closing[1] if len(dist) > 1 else 0.0
    hit = (closing > 0) & (dist <= dt * closing)
    if not hit.any():
        return None
    return float(steps[int(np.argmax(hit))])
