"""Command-line entry point: ``uavrisk <subcommand> [options]``.

Option values resolve as command-line flag, then ``--config`` file, then the
built-in default. The config file is flat ``key = value`` text; keys are the
long flag names without dashes prefix (``ttc-threshold = 2.0``) and
``category.<code> = <name>`` entries override the category map.

Exit codes: 0 success, 1 I/O or parse error, 2 validation or usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import __version__
from .calibration import ScaleEstimationError, VehicleDims
from .evaluation import AlignmentError, UndefinedMetricError, compute_mota, risk_confusion
from .features import RiskHistory, build_dataset, feature_names, holdout_split, stack
from .forest import LABELS, ForestModel, ForestParams, TrainingError, feature_importance, train_forest
from .pipeline import (
    SCHEMA_VERSION, AssessParams, assess_detections, dump_json, records_from_csv, records_to_csv,
)
from .profiles import (
    accumulate_heatmap, heatmap_csv, macro_profiles, micro_profile, pair_category_stats, render_heatmap_svg,
)
from .synth import ScenarioSpec, generate_scenario
from .trajectory_io import (
    DEFAULT_CATEGORY_MAP, AnnotationParseError, DatasetValidationError, read_annotations, validate_dataset,
)

log = logging.getLogger("uavrisk")

# name -> (type, default, help)
OPTIONS = {
    "fps": (float, 30.0, "video frame rate"),
    "scale": (float, None, "manual meters per pixel; estimated from car boxes when unset"),
    "stride": (int, 1, "frames between the two positions of a velocity difference"),
    "smooth-window": (int, 5, "centered moving-average window over velocities, in frames (odd)"),
    "veh-length": (float, 4.0, "assumed car length in meters for scale estimation"),
    "veh-width": (float, 1.7, "assumed car width in meters for scale estimation"),
    "ttc-threshold": (float, 2.5, "TTC below this many seconds is critical"),
    "ttc-mode": (str, "projected", "TTC denominator: projected (closing speed) or literal (relative speed)"),
    "radius": (float, 30.0, "only pairs within this many meters are assessed"),
    "workers": (int, 1, "processes used for per-frame assessment"),
    "gap-limit": (int, 5, "frame gaps above this are reported by validation"),
    "cell-size": (float, 2.0, "heatmap cell size in meters"),
    "trees": (int, 100, "number of trees"),
    "max-depth": (int, 12, "maximum tree depth"),
    "min-leaf": (int, 5, "minimum samples per leaf"),
    "max-features": (int, 8, "features tried per split"),
    "seed": (int, 0, "random seed"),
    "holdout": (float, 0.2, "fraction of samples held out for evaluation"),
    "iou": (float, 0.5, "IoU needed to match a hypothesis to a ground-truth box"),
    "top-k": (int, 5, "number of ranked features reported"),
}

ASSESS_OPTS = ["fps", "scale", "stride", "smooth-window", "veh-length", "veh-width",
               "ttc-threshold", "ttc-mode", "radius", "workers", "gap-limit"]
FOREST_OPTS = ["trees", "max-depth", "min-leaf", "max-features", "seed", "holdout", "top-k"]


class UsageError(Exception):
    pass


def _add_options(parser: argparse.ArgumentParser, names) -> None:
    for name in names:
        typ, default, text = OPTIONS[name]
        kwargs = {"type": typ, "default": None, "help": f"{text} (default: {default})"}
        if name == "ttc-mode":
            kwargs["choices"] = ["projected", "literal"]
        parser.add_argument(f"--{name}", **kwargs)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value config file")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
    common.add_argument("-v", "--verbose", action="store_true", help="log written files and validation warnings")

    parser = argparse.ArgumentParser(prog="uavrisk", description="Trajectory collision-risk assessment.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    def add(name, help_text, opts, inputs="one"):
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        if inputs == "one":
            p.add_argument("input", type=Path, help="annotation file")
        elif inputs == "many":
            p.add_argument("inputs", type=Path, nargs="+", help="annotation files")
        _add_options(p, opts)
        return p

    add("assess", "TTC records, macroscopic profile and run summary", ASSESS_OPTS)
    p = add("profile", "microscopic profile of one road user (plus macroscopic profile)", ASSESS_OPTS)
    p.add_argument("--id", type=int, required=True, help="road user id")
    p.add_argument("--frame", type=int, help="single frame (default: every frame of the user)")
    add("heatmap", "location heatmap of critical interactions", ASSESS_OPTS + ["cell-size"])
    add("stats", "critical-pair counts by road-user category", ASSESS_OPTS)
    p = add("train", "train the next-step risk classifier", ASSESS_OPTS + FOREST_OPTS, inputs="many")
    p.add_argument("--show-thresholds", action="store_true",
                   help="also report learned split thresholds (scene specific)")
    p = add("predict", "predict next-step safe/risky for every car with full history", ASSESS_OPTS)
    p.add_argument("--model", type=Path, required=True, help="model.json from train")
    p = add("eval-mot", "MOTA of hypothesis tracks against ground truth", ["iou"], inputs="none")
    p.add_argument("--gt", type=Path, required=True, help="ground-truth annotation file")
    p.add_argument("--hyp", type=Path, required=True, help="tracker output annotation file")
    p = add("eval-risk", "confusion metrics of critical labels against ground truth", [], inputs="none")
    p.add_argument("--gt", type=Path, required=True, help="ground-truth ttc_records.csv")
    p.add_argument("--pred", type=Path, required=True, help="predicted ttc_records.csv")
    p.add_argument("--missing-as-safe", action="store_true",
                   help="treat pairs present in only one file as safe instead of failing")
    p = add("synth", "generate a synthetic scenario from a JSON spec", [], inputs="none")
    p.add_argument("--spec", type=Path, required=True, help="scenario spec JSON")
    return parser


def read_config(path: Path | None) -> dict[str, str]:
    if path is None:
        return {}
    entries = {}
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{line_no}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        entries[key.replace("_", "-")] = value
    return entries


def resolve(args: argparse.Namespace, config: dict[str, str]) -> dict:
    """Flag > config file > default for every option known to this subcommand."""
    out = {}
    for name, (typ, default, _) in OPTIONS.items():
        attr = name.replace("-", "_")
        if not hasattr(args, attr):
            continue
        value = getattr(args, attr)
        if value is None and name in config:
            try:
                value = typ(config[name])
            except ValueError:
                raise UsageError(f"config value for {name!r} is not a valid {typ.__name__}") from None
        out[name] = default if value is None else value
    return out


def assess_params(opts: dict) -> AssessParams:
    if opts["ttc-mode"] not in ("projected", "literal"):
        raise UsageError(f"ttc-mode must be projected or literal, got {opts['ttc-mode']!r}")
    return AssessParams(
        fps=opts["fps"], scale=opts["scale"], stride=opts["stride"], smooth_window=opts["smooth-window"],
        dims=VehicleDims(opts["veh-length"], opts["veh-width"]),
        threshold=opts["ttc-threshold"], radius=opts["radius"], mode=opts["ttc-mode"],
        workers=opts["workers"],
    )


def _load(path: Path, category_map, opts):
    dets = read_annotations(path, category_map)
    report = validate_dataset(dets, category_map, opts["gap-limit"])
    for line in report.lines():
        log.warning("%s: %s", path, line)
    return assess_detections(dets, assess_params(opts), category_map)


def _write(out: Path, name: str, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text, encoding="utf-8", newline="\n")
    log.info("wrote %s", out / name)


def _macro_json(records, threshold) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "threshold_s": threshold,
        "frames": {
            str(p.frame): [
                {"id": e.id, "category": e.category, "min_ttc_s": e.min_ttc, "partner_id": e.partner_id}
                for e in p.entries
            ]
            for p in macro_profiles(records, threshold)
        },
    }


def cmd_assess(args, opts, category_map) -> int:
    a = _load(args.input, category_map, opts)
    params = assess_params(opts)
    _write(args.out, "ttc_records.csv", records_to_csv(a.records))
    _write(args.out, "macro_profile.json", dump_json(_macro_json(a.records, params.threshold)))
    summary = {
        "schema_version": SCHEMA_VERSION,
        "input": args.input.name,
        "frames": a.frame_count,
        "users": a.user_count,
        "records": len(a.records),
        "critical_records": a.critical_count,
        "scale_m_per_px": a.scale.meters_per_pixel if a.scale else None,
        "scale_source": a.scale.source if a.scale else None,
        "ttc_mode": params.mode,
        "ttc_threshold_s": params.threshold,
        "radius_m": params.radius if math.isfinite(params.radius) else None,
    }
    _write(args.out, "summary.json", dump_json(summary))
    print(f"{a.frame_count} frames, {a.user_count} road users, "
          f"{a.critical_count} critical of {len(a.records)} pair records")
    return 0


def cmd_profile(args, opts, category_map) -> int:
    a = _load(args.input, category_map, opts)
    threshold = opts["ttc-threshold"]
    frames = [args.frame] if args.frame is not None else sorted(s.frame for s in a.states if s.id == args.id)
    by_frame = {}
    for r in a.records:
        by_frame.setdefault(r.frame, []).append(r)
    micro = {}
    for f in frames:
        prof = micro_profile(by_frame.get(f, []), args.id, f, threshold)
        micro[str(f)] = [{"partner_id": n.partner_id, "ttc_s": n.ttc, "distance_m": n.distance} for n in prof.neighbors]
    doc = {"schema_version": SCHEMA_VERSION, "id": args.id, "threshold_s": threshold, "frames": micro}
    _write(args.out, f"micro_{args.id}.json", dump_json(doc))
    _write(args.out, "macro_profile.json", dump_json(_macro_json(a.records, threshold)))
    n_risky = sum(1 for v in micro.values() if v)
    print(f"id {args.id}: critical neighbors in {n_risky} of {len(frames)} frames")
    return 0


def cmd_heatmap(args, opts, category_map) -> int:
    a = _load(args.input, category_map, opts)
    grid = accumulate_heatmap(a.records, opts["ttc-threshold"], opts["cell-size"])
    _write(args.out, "heatmap.csv", heatmap_csv(grid))
    _write(args.out, "heatmap.svg", render_heatmap_svg(grid))
    meta = {
        "schema_version": SCHEMA_VERSION,
        "origin_m": list(grid.origin),
        "cell_size_m": grid.cell_size,
        "total_intensity": grid.total,
    }
    peak = grid.max_cell()
    if peak:
        meta["max_cell"] = {"i": peak[0][0], "j": peak[0][1], "intensity": peak[1],
                            "center_m": list(grid.cell_center(peak[0]))}
    _write(args.out, "heatmap.json", dump_json(meta))
    print(f"{len(grid.cells)} cells, total intensity {grid.total:.3f}")
    return 0


def cmd_stats(args, opts, category_map) -> int:
    a = _load(args.input, category_map, opts)
    stats = pair_category_stats(a.records, opts["ttc-threshold"])
    _write(args.out, "pair_stats.json", dump_json({"schema_version": SCHEMA_VERSION, **stats.to_dict()}))
    share = stats.vehicle_vehicle_share()
    print(f"{stats.total} critical records; vehicle-vehicle "
          + ("n/a" if share is None else f"{share:.1f}%"))
    return 0


def _forest_params(opts) -> ForestParams:
    return ForestParams(opts["trees"], opts["max-depth"], opts["min-leaf"], opts["max-features"])


def _samples(assessment, threshold):
    history = RiskHistory(assessment.states, assessment.records)
    return build_dataset(history, threshold=threshold)


def cmd_train(args, opts, category_map) -> int:
    samples = []
    for path in args.inputs:
        samples += _samples(_load(path, category_map, opts), opts["ttc-threshold"])
    X, y = stack(samples)
    train_idx, test_idx = holdout_split(len(y), opts["holdout"], opts["seed"])
    names = feature_names()
    model = train_forest(X[train_idx], y[train_idx], _forest_params(opts), opts["seed"], names)
    imp = feature_importance(model, opts["top-k"])
    doc = {"schema_version": SCHEMA_VERSION, **imp}
    if args.show_thresholds:
        doc["split_thresholds"] = _split_thresholds(model, [t["index"] for t in imp["top"]])
    _write(args.out, "model.json", dump_json({"schema_version": SCHEMA_VERSION, **model.to_dict()}))
    _write(args.out, "importance.json", dump_json(doc))

    report = {"schema_version": SCHEMA_VERSION, "samples": int(len(y)), "train": int(len(train_idx)),
              "test": int(len(test_idx)), "risky_fraction": float(y.mean()) if len(y) else None}
    if len(test_idx):
        pred = model.predict_many(X[test_idx])
        truth = y[test_idx]
        keys = range(len(truth))
        counts = risk_confusion({k: bool(truth[k]) for k in keys}, {k: bool(pred[k]) for k in keys})
        report["holdout"] = counts.to_dict()
    _write(args.out, "train_report.json", dump_json(report))
    print(f"trained {len(model.trees)} trees on {len(train_idx)} samples; top features: "
          + ", ".join(t["feature"] for t in imp["top"]))
    return 0


def _split_thresholds(model: ForestModel, indices) -> dict:
    found: dict[int, list[float]] = {i: [] for i in indices}
    for tree in model.trees:
        stack_ = [tree.root]
        while stack_:
            node = stack_.pop()
            if node.is_leaf:
                continue
            if node.feature in found:
                found[node.feature].append(node.threshold)
            stack_ += [node.left, node.right]
    names = model.feature_names or [f"f{i}" for i in range(model.n_features)]
    return {names[i]: sorted(v) for i, v in found.items()}


def cmd_predict(args, opts, category_map) -> int:
    model = ForestModel.from_dict(json.loads(args.model.read_text(encoding="utf-8")))
    samples = _samples(_load(args.input, category_map, opts), opts["ttc-threshold"])
    rows = []
    for fv in samples:
        safe, risky = model.votes(fv.values)
        rows.append({"id": fv.id, "frame": fv.frame, "prediction": LABELS[int(risky >= safe)],
                     "risky_votes": risky, "observed": LABELS[fv.label]})
    _write(args.out, "predictions.json", dump_json({"schema_version": SCHEMA_VERSION, "predictions": rows}))
    print(f"{len(rows)} predictions, {sum(r['prediction'] == 'risky' for r in rows)} risky")
    return 0


def cmd_eval_mot(args, opts, category_map) -> int:
    gt = read_annotations(args.gt, category_map)
    hyp = read_annotations(args.hyp, category_map)
    result = compute_mota(gt, hyp, opts["iou"])
    _write(args.out, "mota.json", dump_json({"schema_version": SCHEMA_VERSION, "iou_threshold": opts["iou"],
                                             **result.to_dict()}))
    print(f"MOTA {result.mota:.4f} (FN {result.misses}, FP {result.false_positives}, "
          f"IDSW {result.id_switches}, GT {result.gt_count})")
    return 0


def cmd_eval_risk(args, opts, category_map) -> int:
    gt = {r.key: r.critical for r in records_from_csv(args.gt.read_text(encoding="utf-8"))}
    pred = {r.key: r.critical for r in records_from_csv(args.pred.read_text(encoding="utf-8"))}
    counts = risk_confusion(gt, pred, args.missing_as_safe)
    _write(args.out, "confusion.json", dump_json({"schema_version": SCHEMA_VERSION, **counts.to_dict()}))
    print(f"accuracy {counts.accuracy:.4f}, TPR {counts.tpr:.4f}, FPR {counts.fpr:.4f}")
    return 0


def cmd_synth(args, opts, category_map) -> int:
    spec = ScenarioSpec.from_json(args.spec.read_text(encoding="utf-8"))
    scenario = generate_scenario(spec, category_map)
    _write(args.out, "annotations.txt", scenario.text)
    truth = {
        "schema_version": SCHEMA_VERSION,
        "agents": {
            str(ident): [{"frame": f, "position_m": list(p), "velocity_mps": list(v)} for f, p, v in rows]
            for ident, rows in sorted(scenario.truth.items())
        },
    }
    _write(args.out, "truth.json", dump_json(truth))
    print(f"{len(scenario.detections)} detections for {len(scenario.truth)} agents")
    return 0


COMMANDS = {
    "assess": cmd_assess,
    "profile": cmd_profile,
    "heatmap": cmd_heatmap,
    "stats": cmd_stats,
    "train": cmd_train,
    "predict": cmd_predict,
    "eval-mot": cmd_eval_mot,
    "eval-risk": cmd_eval_risk,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        config = read_config(args.config)
        opts = resolve(args, config)
        category_map = DEFAULT_CATEGORY_MAP.with_overrides(config)
        return COMMANDS[args.command](args, opts, category_map)
    except AnnotationParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DatasetValidationError, ScaleEstimationError, TrainingError, UndefinedMetricError,
            AlignmentError, UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
