import json
import math

import pytest

from scenarios import category_mix, head_on, quadrant_conflicts
from uavrisk.cli import OPTIONS, build_parser, main
from uavrisk.pipeline import records_from_csv
from uavrisk.synth import analytic_ttc, generate_scenario


@pytest.fixture
def head_on_file(tmp_path):
    path = tmp_path / "head_on.txt"
    path.write_text(generate_scenario(head_on()).text)
    return path


def run(*argv):
    return main([str(a) for a in argv])


def test_assess_head_on_macro_frames(head_on_file, tmp_path):
    out = tmp_path / "out"
    assert run("assess", head_on_file, "--out", out, "--radius", 100) == 0
    macro = json.loads((out / "macro_profile.json").read_text())
    spec = head_on()
    a, b = spec.agents
    # states start at frame 2: frame 1 has no predecessor for a velocity
    expected = [f for f in range(2, 101)
                if (t := analytic_ttc(a, b, f / spec.fps)) is not None and t < 2.5]
    assert expected[0] == 77
    assert sorted(map(int, macro["frames"])) == expected
    assert macro["schema_version"] == 1
    summary = json.loads((out / "summary.json").read_text())
    assert summary["frames"] == 100 and summary["users"] == 2
    assert summary["critical_records"] == len(expected)
    rows = records_from_csv((out / "ttc_records.csv").read_text())
    assert len(rows) == 99


def test_assess_csv_header(head_on_file, tmp_path):
    run("assess", head_on_file, "--out", tmp_path, "--radius", 10)
    text = (tmp_path / "ttc_records.csv").read_text()
    assert text.splitlines()[0] == ("frame,id_a,id_b,category_a,category_b,distance_m,"
                                    "rel_speed_mps,closing_speed_mps,ttc_s,critical")


def test_receding_ttc_serialized_empty(tmp_path):
    src = tmp_path / "in.txt"
    spec = head_on()
    from uavrisk.synth import AgentSpec, ScenarioSpec
    apart = ScenarioSpec(tuple(AgentSpec(a.id, a.category, a.position, (-a.velocity[0], 0.0), 1, 5)
                               for a in spec.agents))
    src.write_text(generate_scenario(apart).text)
    assert run("assess", src, "--out", tmp_path, "--radius", 1000) == 0
    line = (tmp_path / "ttc_records.csv").read_text().splitlines()[1]
    assert line.endswith(",,false")


def test_empty_input(tmp_path):
    src = tmp_path / "empty.txt"
    src.write_text("")
    assert run("assess", src, "--out", tmp_path) == 0
    assert (tmp_path / "ttc_records.csv").read_text().count("\n") == 1
    assert json.loads((tmp_path / "macro_profile.json").read_text())["frames"] == {}


def test_missing_file(tmp_path, capsys):
    assert run("assess", tmp_path / "nope.txt", "--out", tmp_path) == 1
    assert "nope.txt" in capsys.readouterr().err


def test_parse_error_names_file_and_line(tmp_path, capsys):
    src = tmp_path / "bad.txt"
    src.write_text("1,1,0,0,10,10,1,4,0,0\n1,2,0,0,0,10,1,4,0,0\n")
    assert run("assess", src, "--out", tmp_path) == 1
    assert "bad.txt:2" in capsys.readouterr().err


def test_duplicate_is_validation_exit(tmp_path):
    src = tmp_path / "dup.txt"
    src.write_text("1,1,0,0,80,34,1,4,0,0\n1,1,5,0,80,34,1,4,0,0\n")
    assert run("assess", src, "--out", tmp_path) == 2


def test_no_cars_needs_manual_scale(tmp_path):
    src = tmp_path / "peds.txt"
    src.write_text("1,1,0,0,10,10,1,1,0,0\n2,1,1,0,10,10,1,1,0,0\n")
    assert run("assess", src, "--out", tmp_path) == 2
    assert run("assess", src, "--out", tmp_path, "--scale", 0.05) == 0


def test_unknown_subcommand():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_help_lists_every_flag(capsys):
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices
    seen = set()
    for name, p in sub.items():
        text = p.format_help()
        for opt in OPTIONS:
            if f"--{opt}" in text:
                seen.add(opt)
                assert "default:" in text
    assert seen == set(OPTIONS)


def test_config_precedence(head_on_file, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nradius = 100\nttc_threshold = 2.0\n")
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run("assess", head_on_file, "--out", out1, "--config", cfg) == 0
    s1 = json.loads((out1 / "summary.json").read_text())
    assert s1["radius_m"] == 100 and s1["ttc_threshold_s"] == 2.0
    assert run("assess", head_on_file, "--out", out2, "--config", cfg, "--ttc-threshold", 3) == 0
    assert json.loads((out2 / "summary.json").read_text())["ttc_threshold_s"] == 3.0


def test_config_category_override(tmp_path):
    src = tmp_path / "in.txt"
    src.write_text("1,1,0,0,80,34,1,12,0,0\n2,1,5,0,80,34,1,12,0,0\n")
    cfg = tmp_path / "c.cfg"
    cfg.write_text("category.12 = car\n")
    assert run("assess", src, "--out", tmp_path / "o", "--config", cfg) == 0
    # code 12 maps to "other" without the override, so no car boxes to scale from
    assert run("assess", src, "--out", tmp_path / "p") == 2


def test_bad_config(tmp_path, head_on_file):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("radius = far\n")
    assert run("assess", head_on_file, "--out", tmp_path, "--config", cfg) == 2


def test_profile(head_on_file, tmp_path):
    assert run("profile", head_on_file, "--id", 1, "--out", tmp_path, "--radius", 100) == 0
    micro = json.loads((tmp_path / "micro_1.json").read_text())
    frames = {int(f): v for f, v in micro["frames"].items()}
    assert len(frames) == 99
    assert frames[80][0]["partner_id"] == 2 and frames[80][0]["ttc_s"] < 2.5
    assert frames[50] == []
    assert run("profile", head_on_file, "--id", 1, "--frame", 80, "--out", tmp_path / "one", "--radius", 100) == 0
    one = json.loads((tmp_path / "one" / "micro_1.json").read_text())
    assert list(one["frames"]) == ["80"]


def test_heatmap_peak_in_conflict_quadrant(tmp_path):
    src = tmp_path / "q.txt"
    src.write_text(generate_scenario(quadrant_conflicts()).text)
    assert run("heatmap", src, "--out", tmp_path, "--cell-size", 5) == 0
    meta = json.loads((tmp_path / "heatmap.json").read_text())
    cx, cy = meta["max_cell"]["center_m"]
    assert cx > 100 and cy < 100
    svg = (tmp_path / "heatmap.svg").read_text()
    assert 'fill-opacity="1"' in svg
    assert (tmp_path / "heatmap.csv").read_text().startswith("i,j,intensity\n")


def test_stats_seventy_two_percent(tmp_path):
    src = tmp_path / "mix.txt"
    src.write_text(generate_scenario(category_mix(18, 7)).text)
    assert run("stats", src, "--out", tmp_path) == 0
    stats = json.loads((tmp_path / "pair_stats.json").read_text())
    assert stats["vehicle_vehicle_percent"] == pytest.approx(72.0, abs=0.5)
    assert stats["percent_excluding_car_car"]["car-pedestrian"] > 0


def test_eval_risk_self(head_on_file, tmp_path):
    run("assess", head_on_file, "--out", tmp_path, "--radius", 100)
    csv = tmp_path / "ttc_records.csv"
    assert run("eval-risk", "--gt", csv, "--pred", csv, "--out", tmp_path) == 0
    conf = json.loads((tmp_path / "confusion.json").read_text())
    assert conf["accuracy"] == 1.0 and conf["false_positive_rate"] == 0.0


def test_eval_risk_misaligned(head_on_file, tmp_path):
    run("assess", head_on_file, "--out", tmp_path / "a", "--radius", 100)
    run("assess", head_on_file, "--out", tmp_path / "b", "--radius", 35)
    args = ["eval-risk", "--gt", tmp_path / "a" / "ttc_records.csv", "--pred", tmp_path / "b" / "ttc_records.csv",
            "--out", tmp_path]
    assert run(*args) == 2
    assert run(*args, "--missing-as-safe") == 0


def test_eval_mot(tmp_path, head_on_file):
    assert run("eval-mot", "--gt", head_on_file, "--hyp", head_on_file, "--out", tmp_path) == 0
    mota = json.loads((tmp_path / "mota.json").read_text())
    assert mota["mota"] == 1.0 and mota["gt_count"] == 200
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    assert run("eval-mot", "--gt", empty, "--hyp", head_on_file, "--out", tmp_path) == 2


def test_train_and_predict(tmp_path):
    from uavrisk.synth import AgentSpec, ScenarioSpec
    import random
    rng = random.Random(0)
    agents = []
    for k in range(40):
        y = k * 100.0
        speed = rng.uniform(2, 14)
        agents.append(AgentSpec(2 * k + 1, "car", (0.0, y), (speed, 0.0), 1, 60))
        agents.append(AgentSpec(2 * k + 2, "car", (rng.uniform(30, 60), y), (0.0, 0.0), 1, 60))
    src = tmp_path / "train.txt"
    src.write_text(generate_scenario(ScenarioSpec(tuple(agents))).text)
    out = tmp_path / "model"
    assert run("train", src, "--out", out, "--trees", 20, "--seed", 3, "--show-thresholds") == 0
    model = json.loads((out / "model.json").read_text())
    assert len(model["trees"]) == 20 and model["seed"] == 3
    imp = json.loads((out / "importance.json").read_text())
    assert math.isclose(sum(imp["importances"].values()), 1.0, abs_tol=1e-9)
    assert len(imp["top"]) == 5 and "split_thresholds" in imp
    report = json.loads((out / "train_report.json").read_text())
    assert report["holdout"]["accuracy"] > 0.8
    assert run("predict", src, "--model", out / "model.json", "--out", out) == 0
    preds = json.loads((out / "predictions.json").read_text())["predictions"]
    assert len(preds) == report["samples"]
    agree = sum(p["prediction"] == p["observed"] for p in preds) / len(preds)
    assert agree > 0.8


def test_train_single_class_fails(head_on_file, tmp_path):
    # before frame 77 nothing is risky; with a tiny threshold nothing ever is
    assert run("train", head_on_file, "--out", tmp_path, "--ttc-threshold", 0.01, "--radius", 100) == 2


def test_synth(tmp_path):
    spec = tmp_path / "s.json"
    spec.write_text(json.dumps({"fps": 30, "scale": 0.05, "agents": [
        {"id": 1, "category": "car", "position": [0, 0], "velocity": [7.5, 0], "start_frame": 1, "end_frame": 5}]}))
    assert run("synth", "--spec", spec, "--out", tmp_path) == 0
    lines = (tmp_path / "annotations.txt").read_text().splitlines()
    assert lines[0] == "1,1,-40,-17,80,34,1,4,0,0" and lines[1].startswith("2,1,-35,")
    truth = json.loads((tmp_path / "truth.json").read_text())
    assert len(truth["agents"]["1"]) == 5


def test_outputs_byte_identical(head_on_file, tmp_path):
    for sub in ("a", "b"):
        assert run("assess", head_on_file, "--out", tmp_path / sub, "--radius", 100) == 0
        assert run("heatmap", head_on_file, "--out", tmp_path / sub, "--radius", 100) == 0
    for name in ("ttc_records.csv", "macro_profile.json", "summary.json", "heatmap.csv", "heatmap.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_workers_flag_same_output(head_on_file, tmp_path):
    run("assess", head_on_file, "--out", tmp_path / "a", "--radius", 100)
    run("assess", head_on_file, "--out", tmp_path / "b", "--radius", 100, "--workers", 2)
    assert (tmp_path / "a" / "ttc_records.csv").read_bytes() == (tmp_path / "b" / "ttc_records.csv").read_bytes()


def test_unbounded_radius(head_on_file, tmp_path):
    assert run("assess", head_on_file, "--out", tmp_path, "--radius", "inf") == 0
    assert json.loads((tmp_path / "summary.json").read_text())["radius_m"] is None
