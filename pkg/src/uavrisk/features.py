"""History-window features for next-step risk prediction.

Each of the ``window`` frames before the target frame contributes ten values:
the studied car's speed, position and critical flag, then the same for its
dangerous neighbor (the partner with the smallest TTC at that frame), then the
pair's TTC and distance. Lag 1 (the frame just before the target) comes first.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .calibration import KinematicState
from .forest import RISKY, SAFE
from .ttc import DEFAULT_THRESHOLD, TtcRecord

WINDOW = 5
STEP_FIELDS = (
    "own_speed", "own_x", "own_y", "own_critical",
    "neighbor_speed", "neighbor_x", "neighbor_y", "neighbor_critical",
    "pair_ttc", "pair_distance",
)
TTC_CAP = 99.0
DISTANCE_CAP = 999.0


class NotACarError(ValueError):
    pass


def feature_names(window: int = WINDOW) -> list[str]:
    return [f"{name}_t-{lag}" for lag in range(1, window + 1) for name in STEP_FIELDS]


@dataclass(frozen=True)
class FeatureVector:
    id: int
    frame: int
    values: np.ndarray
    label: int  # SAFE or RISKY, from the smallest TTC at ``frame``


class RiskHistory:
    """Index of kinematic states and TTC records by (id, frame)."""

    def __init__(self, states: Iterable[KinematicState], records: Iterable[TtcRecord]):
        self.states: dict[tuple[int, int], KinematicState] = {(s.id, s.frame): s for s in states}
        # (id, frame) -> [(ttc, partner, distance)] over present TTCs
        self.pairs: dict[tuple[int, int], list[tuple[float, int, float]]] = defaultdict(list)
        for r in records:
            if r.ttc is None:
                continue
            g = r.geometry
            self.pairs[(g.id_a, g.frame)].append((r.ttc, g.id_b, g.distance))
            self.pairs[(g.id_b, g.frame)].append((r.ttc, g.id_a, g.distance))

    def min_ttc(self, ident: int, frame: int) -> float | None:
        pairs = self.pairs.get((ident, frame))
        return min(pairs)[0] if pairs else None

    def dangerous_neighbor(self, ident: int, frame: int) -> tuple[float, int, float] | None:
        pairs = self.pairs.get((ident, frame))
        return min(pairs) if pairs else None

    def is_critical(self, ident: int, frame: int, threshold: float) -> bool:
        m = self.min_ttc(ident, frame)
        return m is not None and m < threshold

    def candidates(self) -> list[tuple[int, int]]:
        """All (id, frame) with a state, sorted."""
        return sorted(self.states)


def extract_features(
    history: RiskHistory,
    ident: int,
    frame: int,
    window: int = WINDOW,
    threshold: float = DEFAULT_THRESHOLD,
) -> FeatureVector | None:
    """Feature vector for ``ident`` predicting its condition at ``frame``.

    Returns None unless the car has states at ``frame`` and at each of the
    ``window`` frames before it. A step with no closing partner gets sentinel
    neighbor values (own position, zero speed and flags, capped TTC/distance).
    """
    target = history.states.get((ident, frame))
    if target is None:
        return None
    if target.category != "car":
        raise NotACarError(f"id {ident} is a {target.category}, only cars are studied")

    values = []
    for lag in range(1, window + 1):
        f = frame - lag
        own = history.states.get((ident, f))
        if own is None:
            return None
        row = [own.speed, own.position[0], own.position[1], float(history.is_critical(ident, f, threshold))]
        danger = history.dangerous_neighbor(ident, f)
        partner = history.states.get((danger[1], f)) if danger else None
        if danger is None or partner is None:
            row += [0.0, own.position[0], own.position[1], 0.0, TTC_CAP, DISTANCE_CAP]
        else:
            ttc, pid, dist = danger
            row += [
                partner.speed, partner.position[0], partner.position[1],
                float(history.is_critical(pid, f, threshold)),
                min(ttc, TTC_CAP), min(dist, DISTANCE_CAP),
            ]
        values.extend(row)

    label = RISKY if history.is_critical(ident, frame, threshold) else SAFE
    return FeatureVector(ident, frame, np.asarray(values, dtype=float), label)


def build_dataset(
    history: RiskHistory,
    window: int = WINDOW,
    threshold: float = DEFAULT_THRESHOLD,
) -> list[FeatureVector]:
    """Feature vectors for every car state that has a full history window."""
    out = []
    for ident, frame in sorted(history.states, key=lambda k: (k[1], k[0])):
        if history.states[(ident, frame)].category != "car":
            continue
        fv = extract_features(history, ident, frame, window, threshold)
        if fv is not None:
            out.append(fv)
    return out


def stack(samples: Sequence[FeatureVector]) -> tuple[np.ndarray, np.ndarray]:
    if not samples:
        return np.zeros((0, len(STEP_FIELDS) * WINDOW)), np.zeros(0, dtype=int)
    return np.vstack([s.values for s in samples]), np.array([s.label for s in samples], dtype=int)


def holdout_split(n: int, holdout: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded (train_idx, test_idx) split of ``range(n)``."""
    if not 0.0 <= holdout < 1.0:
        raise ValueError(f"holdout must be in [0, 1), got {holdout}")
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(round(n * holdout))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])
