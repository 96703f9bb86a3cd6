import math
import random
import re
from collections import defaultdict

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import record
from uavrisk.profiles import (
    HeatmapGrid, accumulate_heatmap, heatmap_csv, macro_profile, macro_profiles, micro_profile,
    pair_category_stats, render_heatmap_svg,
)


def test_macro_min_rule():
    recs = [record(7, 8, 1.8), record(3, 7, 4.0)]
    prof = macro_profile(recs, 2.5)
    assert [(e.id, e.min_ttc, e.partner_id) for e in prof.entries] == [(7, 1.8, 8), (8, 1.8, 7)]


def test_macro_nothing_critical():
    assert macro_profile([record(1, 2, 2.5), record(2, 3, 9.0)], 2.5).entries == ()


def test_macro_absent_only_excluded():
    prof = macro_profile([record(1, 2, None), record(2, 3, 1.0)], 2.5)
    assert prof.ids() == [2, 3]


def test_macro_partner_tie_goes_to_smaller_id():
    prof = macro_profile([record(5, 9, 1.0), record(2, 5, 1.0)], 2.5)
    assert {e.id: e.partner_id for e in prof.entries}[5] == 2


def test_macro_categories_and_frames():
    recs = [record(1, 2, 1.0, frame=4, cat_a="pedestrian", cat_b="bus")]
    prof = macro_profile(recs)
    assert prof.frame == 4
    assert [(e.id, e.category) for e in prof.entries] == [(1, "pedestrian"), (2, "bus")]
    with pytest.raises(ValueError):
        macro_profile([record(1, 2, 1.0, frame=1), record(1, 2, 1.0, frame=2)])
    assert [p.frame for p in macro_profiles(recs + [record(1, 2, 5.0, frame=6)])] == [4]


def test_micro_profile():
    recs = [record(1, 3, 1.8, distance=4.0), record(1, 9, 4.0)]
    prof = micro_profile(recs, 1, 1, 2.5)
    assert [(n.partner_id, n.ttc, n.distance) for n in prof.neighbors] == [(3, 1.8, 4.0)]


def test_micro_empty_and_unknown():
    assert micro_profile([], 1, 1).neighbors == ()
    assert micro_profile([record(2, 3, 1.0)], 1, 1).neighbors == ()


def test_micro_sorted_by_ttc():
    recs = [record(1, 2, 2.4), record(1, 3, 0.9), record(0, 1, 1.5)]
    assert [n.ttc for n in micro_profile(recs, 1, 1).neighbors] == [0.9, 1.5, 2.4]


def test_heatmap_single_record():
    grid = accumulate_heatmap([record(1, 2, 1.5, pos_a=(10, 10), pos_b=(12, 10))], 2.5, 1.0)
    assert grid.origin == (11.0, 10.0)
    assert grid.cells == {(0, 0): 1.0}


def test_heatmap_empty_and_additive():
    assert accumulate_heatmap([record(1, 2, 3.0)], 2.5, 1.0).cells == {}
    rec = record(1, 2, 1.5, pos_a=(10, 10), pos_b=(12, 10))
    assert accumulate_heatmap([rec, rec], 2.5, 1.0).cells == {(0, 0): 2.0}
    with pytest.raises(ValueError):
        accumulate_heatmap([rec], 2.5, 0.0)


def test_heatmap_fixed_origin_merges():
    recs = [record(1, 2, 1.0, pos_a=(0, 0), pos_b=(4, 0)), record(3, 4, 2.0, pos_a=(10, 3), pos_b=(12, 5))]
    whole = accumulate_heatmap(recs, 2.5, 2.0, origin=(0, 0))
    merged = accumulate_heatmap(recs[:1], 2.5, 2.0, origin=(0, 0))
    for ij, v in accumulate_heatmap(recs[1:], 2.5, 2.0, origin=(0, 0)).cells.items():
        merged.cells[ij] = merged.cells.get(ij, 0.0) + v
    assert merged.cells == whole.cells == {(1, 0): 1.5, (5, 2): 0.5}


def random_records(rng, n, frame_count=3):
    out = []
    for _ in range(n):
        a, b = rng.sample(range(12), 2)
        a, b = min(a, b), max(a, b)
        ttc = None if rng.random() < 0.2 else rng.uniform(0.05, 6.0)
        out.append(record(a, b, ttc, frame=rng.randint(1, frame_count),
                          pos_a=(rng.uniform(0, 50), rng.uniform(0, 50)),
                          pos_b=(rng.uniform(0, 50), rng.uniform(0, 50))))
    # one record per (frame, pair)
    uniq = {}
    for r in out:
        uniq.setdefault(r.key, r)
    return list(uniq.values())


def test_macro_brute_force_recheck():
    rng = random.Random(5)
    for _ in range(50):
        recs = random_records(rng, 40)
        by_frame = defaultdict(list)
        for r in recs:
            by_frame[r.frame].append(r)
        for frame, frs in by_frame.items():
            ttcs = defaultdict(list)
            for r in frs:
                if r.ttc is not None:
                    ttcs[r.geometry.id_a].append(r.ttc)
                    ttcs[r.geometry.id_b].append(r.ttc)
            expected = sorted(i for i, v in ttcs.items() if min(v) < 2.5)
            prof = macro_profile(frs, 2.5)
            assert prof.ids() == expected
            assert all(e.min_ttc == min(ttcs[e.id]) for e in prof.entries)


def test_heatmap_total_and_stats_total():
    rng = random.Random(9)
    recs = random_records(rng, 200)
    crit = [r for r in recs if r.ttc is not None and r.ttc < 2.5]
    grid = accumulate_heatmap(recs, 2.5, 3.0)
    assert grid.total == pytest.approx(math.fsum(2.5 - r.ttc for r in crit), abs=1e-12)
    assert all(v >= 0 for v in grid.cells.values())
    assert pair_category_stats(recs).total == len(crit)


def test_pair_stats_views():
    recs = ([record(i, i + 100, 1.0) for i in range(6)]
            + [record(i, i + 100, 1.0, cat_a="pedestrian") for i in range(10, 12)]
            + [record(i, i + 100, 1.0, cat_a="truck") for i in range(20, 22)]
            + [record(50, 51, 3.0, cat_a="pedestrian")])
    stats = pair_category_stats(recs)
    assert stats.counts == {"car-car": 6, "car-pedestrian": 2, "car-truck": 2}
    assert stats.percentages()["car-car"] == pytest.approx(60.0)
    assert stats.percentages(exclude_car_car=True) == pytest.approx({"car-pedestrian": 50.0, "car-truck": 50.0})
    assert stats.vehicle_vehicle_share() == pytest.approx(80.0)
    d = stats.to_dict()
    assert d["total_critical"] == 10


def test_pair_stats_empty():
    stats = pair_category_stats([])
    assert stats.counts == {} and stats.percentages() == {} and stats.vehicle_vehicle_share() is None


@settings(max_examples=50, deadline=None)
@given(st.dictionaries(st.sampled_from(["car", "van", "bus", "pedestrian", "bicycle", "truck"]),
                       st.integers(1, 30), min_size=1))
def test_pair_stats_percent_sums(mix):
    recs, n = [], 0
    for cat, count in mix.items():
        for _ in range(count):
            recs.append(record(n, n + 1000, 1.0, cat_a=cat))
            n += 1
    stats = pair_category_stats(recs)
    assert sum(stats.percentages().values()) == pytest.approx(100.0, abs=0.1)
    excl = stats.percentages(exclude_car_car=True)
    if excl:
        assert sum(excl.values()) == pytest.approx(100.0, abs=0.1)


def _opacities(svg):
    return [float(x) for x in re.findall(r'fill-opacity="([^"]+)"', svg)]


def test_svg_single_and_two_cells():
    svg = render_heatmap_svg(HeatmapGrid((0, 0), 1.0, {(0, 0): 1.0}))
    assert svg.count('class="cell"') == 1 and _opacities(svg) == [1.0]
    svg = render_heatmap_svg(HeatmapGrid((0, 0), 1.0, {(0, 0): 1.0, (3, 1): 0.5}))
    assert _opacities(svg) == [1.0, 0.5]


def test_svg_empty_grid():
    svg = render_heatmap_svg(HeatmapGrid((0, 0), 1.0))
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert 'class="cell"' not in svg


def test_heatmap_csv():
    csv = heatmap_csv(HeatmapGrid((0, 0), 1.0, {(2, 1): 0.5, (0, 0): 1.0}))
    assert csv == "i,j,intensity\n0,0,1.0\n2,1,0.5\n"
