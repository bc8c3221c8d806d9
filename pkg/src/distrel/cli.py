"""Command-line front end.

One JSON config drives everything; flags override individual fields. Every
command validates the full config before the first oracle evaluation and
writes a manifest (resolved config + hash + oracle call counts) next to its
outputs so a run can be reproduced exactly.

Exit codes: 0 success, 1 validation error, 2 partial cell failure, 3 runtime
failure.
"""

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from distrel import __version__
from distrel import evaluation as ev
from distrel import models as models_mod
from distrel import oracles as oracles_mod
from distrel import presets
from distrel import rebalance as rebalance_mod
from distrel.distortion import distortion_space
from distrel.sampling import (
    LabeledSet,
    SamplerConfig,
    load_labeled_set,
    run_gp_sampling,
    run_random_sampling,
    save_labeled_set,
)
from distrel.space import SearchSpace

CONFIG_VERSION = 1

_DEFAULTS = {
    "config_version": CONFIG_VERSION,
    "space": "distortion",
    "h": None,
    "h_preset": None,
    "budget": 600,
    "init_count": 20,
    "delta": 0.1,
    "samplers": ["random", "gp"],
    "methods": ["none", "smote"],
    "kinds": ["logistic", "tree", "knn"],
    "seeds": [0, 1, 2, 3, 4],
    "points_per_dim": 4,
    "acquisition_candidates": 2048,
    "refine_steps": 32,
    "budgets": None,
    "thresholds": None,
    "out": "runs/latest",
}

_ORACLE_DEFAULTS_BLOBS = {
    "type": "blobs",
    "n_verification": 200,
    "n_train": 100,
    "n_classes": 2,
    "size": 16,
    "seed": 0,
    "noise": 0.05,
}


class ConfigError(ValueError):
    """Invalid run configuration; maps to exit code 1."""


def _fail(field, message):
    raise ConfigError(f"config field {field!r}: {message}")


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return raw


def resolve_config(raw: dict, overrides: dict = None) -> dict:
    """Merge defaults, file values and CLI overrides; validate everything."""
    unknown = set(raw) - set(_DEFAULTS) - {"oracle"}
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    cfg = dict(_DEFAULTS)
    cfg.update(raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = value

    if cfg.get("config_version") != CONFIG_VERSION:
        _fail("config_version", f"expected {CONFIG_VERSION}, got {cfg.get('config_version')!r}")
    if "oracle" not in cfg or cfg["oracle"] is None:
        _fail("oracle", "missing; give a preset or an oracle spec")

    cfg["space"] = _resolve_space_field(cfg["space"])
    cfg["oracle"] = _resolve_oracle_field(cfg["oracle"])

    if cfg["h"] is None:
        preset = cfg.get("h_preset")
        if preset is None:
            cfg["h"] = presets.BENCHMARK_H
        elif preset in presets.THRESHOLD_PRESETS:
            cfg["h"] = presets.THRESHOLD_PRESETS[preset]
        else:
            _fail("h_preset", f"unknown preset {preset!r}; "
                  f"known: {sorted(presets.THRESHOLD_PRESETS)}")
    if not isinstance(cfg["h"], (int, float)) or not 0.0 <= cfg["h"] <= 1.0:
        _fail("h", f"must be a number in [0, 1], got {cfg['h']!r}")

    if not isinstance(cfg["budget"], int) or cfg["budget"] < 1:
        _fail("budget", f"must be a positive integer, got {cfg['budget']!r}")
    if not isinstance(cfg["init_count"], int) or not 0 < cfg["init_count"] < cfg["budget"]:
        _fail("init_count", f"must be an integer in [1, budget), got {cfg['init_count']!r}")
    if not 0.0 < cfg["delta"] < 1.0:
        _fail("delta", f"must be in (0, 1), got {cfg['delta']!r}")
    if not isinstance(cfg["points_per_dim"], int) or cfg["points_per_dim"] < 2:
        _fail("points_per_dim", f"must be an integer >= 2, got {cfg['points_per_dim']!r}")
    if not isinstance(cfg["acquisition_candidates"], int) or cfg["acquisition_candidates"] < 1:
        _fail("acquisition_candidates", "must be a positive integer")
    if not isinstance(cfg["refine_steps"], int) or cfg["refine_steps"] < 0:
        _fail("refine_steps", "must be a non-negative integer")

    for s in cfg["samplers"]:
        if s not in ev.SAMPLERS:
            _fail("samplers", f"unknown sampler {s!r}; known: {list(ev.SAMPLERS)}")
    for m in cfg["methods"]:
        if m not in rebalance_mod.METHODS:
            _fail("methods", f"unknown method {m!r}; known: {list(rebalance_mod.METHODS)}")
    for k in cfg["kinds"]:
        if k not in models_mod.KINDS:
            _fail("kinds", f"unknown model kind {k!r}; known: {list(models_mod.KINDS)}")
    if not cfg["samplers"]:
        _fail("samplers", "must not be empty")
    if not cfg["kinds"]:
        _fail("kinds", "must not be empty")
    seeds = cfg["seeds"]
    if not isinstance(seeds, list) or not seeds or not all(
        isinstance(s, int) and s >= 0 for s in seeds
    ):
        _fail("seeds", f"must be a non-empty list of unsigned integers, got {seeds!r}")
    if cfg["budgets"] is not None and (
        not isinstance(cfg["budgets"], list)
        or not all(isinstance(b, int) and b > cfg["init_count"] for b in cfg["budgets"])
    ):
        _fail("budgets", "must be a list of integers > init_count")
    if cfg["thresholds"] is not None and (
        not isinstance(cfg["thresholds"], list)
        or not all(isinstance(t, (int, float)) and 0 <= t <= 1 for t in cfg["thresholds"])
    ):
        _fail("thresholds", "must be a list of numbers in [0, 1]")
    return cfg


def _resolve_space_field(value):
    if value == "distortion":
        return "distortion"
    if isinstance(value, dict) and "dims" in value:
        try:
            SearchSpace.from_dict(value)
        except Exception as exc:
            _fail("space", str(exc))
        return value
    _fail("space", f"must be 'distortion' or a dims object, got {value!r}")


def _resolve_oracle_field(value):
    if not isinstance(value, dict):
        _fail("oracle", f"must be an object, got {value!r}")
    value = dict(value)
    if "preset" in value:
        name = value["preset"]
        if name not in presets.ORACLE_PRESETS:
            _fail("oracle.preset", f"unknown preset {name!r}; "
                  f"known: {sorted(presets.ORACLE_PRESETS)}")
        return {"preset": name}
    kind = value.get("kind")
    if kind in ("box", "ellipsoid", "multimodal"):
        return value
    if kind == "classifier":
        dataset = value.get("dataset")
        if not isinstance(dataset, dict) or dataset.get("type") not in ("blobs", "idx"):
            _fail("oracle.dataset", "must be an object with type 'blobs' or 'idx'")
        clf = value.get("classifier", "nearest-centroid")
        if clf not in ("nearest-centroid", "k-nn"):
            _fail("oracle.classifier", f"must be 'nearest-centroid' or 'k-nn', got {clf!r}")
        value["classifier"] = clf
        value.setdefault("rain_seed", 0)
        if dataset["type"] == "idx":
            for need in ("images", "labels"):
                if need not in dataset:
                    _fail(f"oracle.dataset.{need}", "required for idx datasets")
        return value
    _fail("oracle.kind", f"must be box, ellipsoid, multimodal or classifier, got {kind!r}")


def build_space(cfg: dict) -> SearchSpace:
    if cfg["space"] == "distortion":
        return distortion_space()
    return SearchSpace.from_dict(cfg["space"])


def build_oracle(cfg: dict):
    """Construct the configured oracle; runs zero accuracy evaluations."""
    spec = cfg["oracle"]
    space = build_space(cfg)
    if "preset" in spec:
        return oracles_mod.make_synthetic_oracle(
            presets.ORACLE_PRESETS[spec["preset"]](h=cfg["h"])
        )
    kind = spec["kind"]
    if kind == "box":
        return oracles_mod.make_synthetic_oracle(
            oracles_mod.SyntheticOracleSpec(
                kind="box",
                space=space,
                box_lower=np.asarray(spec["lower"], dtype=np.float64),
                box_upper=np.asarray(spec["upper"], dtype=np.float64),
                inside_value=spec.get("inside_value", 0.99),
                outside_value=spec.get("outside_value", 0.5),
            )
        )
    if kind in ("ellipsoid", "multimodal"):
        centers = np.atleast_2d(np.asarray(spec["centers"], dtype=np.float64))
        scales = np.atleast_2d(np.asarray(spec["scales"], dtype=np.float64))
        peaks = np.atleast_1d(np.asarray(spec["peaks"], dtype=np.float64))
        return oracles_mod.make_synthetic_oracle(
            oracles_mod.SyntheticOracleSpec(
                kind=kind, space=space, centers=centers, scales=scales, peaks=peaks
            )
        )
    # classifier oracle
    dataset = spec["dataset"]
    if dataset["type"] == "blobs":
        d = {**_ORACLE_DEFAULTS_BLOBS, **dataset}
        verification = oracles_mod.make_blob_verification_set(
            d["n_verification"], d["n_classes"], d["size"], d["seed"], d["noise"]
        )
        train = oracles_mod.make_blob_verification_set(
            d["n_train"], d["n_classes"], d["size"], d["seed"] + 1, d["noise"]
        )
    else:
        full = oracles_mod.load_idx_verification_set(
            dataset["images"], dataset["labels"]
        )
        n_ver = dataset.get("verification_limit", 200)
        n_train = dataset.get("train_limit", 200)
        if full.n < n_ver + n_train:
            raise ConfigError(
                f"idx dataset has {full.n} images, need {n_ver + n_train}"
            )
        verification = oracles_mod.VerificationSet(
            full.images[:n_ver], full.labels[:n_ver], full.n_classes
        )
        train = oracles_mod.VerificationSet(
            full.images[n_ver : n_ver + n_train],
            full.labels[n_ver : n_ver + n_train],
            full.n_classes,
        )
    classifier = oracles_mod.train_reference_classifier(train, spec["classifier"])
    return oracles_mod.make_classifier_oracle(
        classifier, verification, spec["rain_seed"]
    )


# ---------------------------------------------------------------------------
# Manifest and output plumbing
# ---------------------------------------------------------------------------

def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def _json_safe(cfg: dict) -> dict:
    # the output directory is delivery plumbing, not part of the experiment
    doc = {k: v for k, v in cfg.items() if k != "out"}
    return json.loads(json.dumps(doc))


def write_manifest(out_dir: Path, cfg: dict, command: str, extra: dict = None) -> None:
    doc = {
        "format_version": 1,
        "package_version": __version__,
        "command": command,
        "config": _json_safe(cfg),
        "config_hash": config_hash(_json_safe(cfg)),
    }
    doc.update(extra or {})
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _experiment_kwargs(cfg: dict) -> dict:
    return {
        "budget": cfg["budget"],
        "init_count": cfg["init_count"],
        "delta": cfg["delta"],
        "samplers": tuple(cfg["samplers"]),
        "methods": tuple(cfg["methods"]),
        "kinds": tuple(cfg["kinds"]),
        "seeds": tuple(cfg["seeds"]),
        "points_per_dim": cfg["points_per_dim"],
        "acquisition_candidates": cfg["acquisition_candidates"],
        "refine_steps": cfg["refine_steps"],
    }


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_sample(cfg: dict, workers: int) -> int:
    out = _out_dir(cfg)
    space = build_space(cfg)
    oracle = build_oracle(cfg)
    calls = {}
    for sampler in cfg["samplers"]:
        for seed in cfg["seeds"]:
            wrapped = oracles_mod.caching_oracle(oracle)
            if sampler == "random":
                labeled = run_random_sampling(wrapped, space, cfg["h"], cfg["budget"], seed)
            else:
                labeled = run_gp_sampling(
                    wrapped, space, cfg["h"],
                    SamplerConfig(
                        budget=cfg["budget"],
                        init_count=cfg["init_count"],
                        delta=cfg["delta"],
                        acquisition_candidates=cfg["acquisition_candidates"],
                        refine_steps=cfg["refine_steps"],
                        seed=seed,
                    ),
                )
            name = f"samples_{sampler}_seed{seed}.csv"
            save_labeled_set(out / name, labeled, space)
            calls[f"{sampler}/{seed}"] = wrapped.inner_calls
            print(f"wrote {out / name} ({labeled.n} rows, {labeled.positive_count} positive)")
    write_manifest(out, cfg, "sample", {"oracle_calls": calls})
    return 0


def cmd_rebalance(cfg: dict, data_path: str, method: str) -> int:
    out = _out_dir(cfg)
    space = build_space(cfg)
    if method not in rebalance_mod.METHODS:
        raise ConfigError(
            f"unknown method {method!r}; known: {list(rebalance_mod.METHODS)}"
        )
    labeled = load_labeled_set(data_path, space, cfg["h"])
    result = rebalance_mod.rebalance(labeled, method, space, seed=cfg["seeds"][0])
    name = f"rebalanced_{method}.csv"
    _write_rebalanced_csv(out / name, result, space)
    counts = result.class_counts()
    print(f"wrote {out / name} ({result.n} rows, {counts[0]} negative / {counts[1]} positive)")
    write_manifest(out, cfg, "rebalance", {"method": method, "input": str(data_path)})
    return 0


def _write_rebalanced_csv(path, result, space) -> None:
    import csv as _csv

    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(list(space.names) + ["label", "weight", "is_synthetic"])
        for row, lab, w, syn in zip(
            result.levels, result.labels, result.weights, result.is_synthetic
        ):
            writer.writerow(
                [f"{v:.17g}" for v in row] + [str(int(lab)), f"{w:.17g}", str(int(syn))]
            )


def _read_training_csv(path, space, h):
    """Accept either a sampled LabeledSet CSV or a rebalanced CSV."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if header == list(space.names) + ["accuracy", "label"]:
        labeled = load_labeled_set(path, space, h)
        return rebalance_mod.rebalance(labeled, "none", space)
    if header == list(space.names) + ["label", "weight", "is_synthetic"]:
        import csv as _csv

        with open(path, newline="") as fh:
            reader = _csv.reader(fh)
            next(reader)
            rows = [r for r in reader if r]
        d = space.dim
        levels = np.array([[float(v) for v in r[:d]] for r in rows])
        labels = np.array([int(r[d]) for r in rows], dtype=np.int64)
        weights = np.array([float(r[d + 1]) for r in rows])
        synth = np.array([bool(int(r[d + 2])) for r in rows])
        return rebalance_mod.RebalancedSet(
            levels=levels, labels=labels, weights=weights, is_synthetic=synth,
            parent_index=np.full(len(rows), -1, dtype=np.int64),
            provenance={"method": "loaded", "path": str(path)},
        )
    raise ConfigError(f"unrecognized training CSV header in {path}")


def cmd_train(cfg: dict, data_path: str) -> int:
    out = _out_dir(cfg)
    space = build_space(cfg)
    data = _read_training_csv(data_path, space, cfg["h"])
    for kind in cfg["kinds"]:
        model = models_mod.train(kind, data, space, seed=cfg["seeds"][0])
        name = f"model_{kind}.json"
        models_mod.save_model(out / name, model)
        print(f"wrote {out / name}")
    write_manifest(out, cfg, "train", {"input": str(data_path)})
    return 0


def cmd_evaluate(cfg: dict, model_paths: list, test_set: str) -> int:
    out = _out_dir(cfg)
    space = build_space(cfg)
    if test_set:
        grid = load_labeled_set(test_set, space, cfg["h"])
    else:
        oracle = build_oracle(cfg)
        grid = ev.build_grid_test_set(space, cfg["points_per_dim"], oracle, cfg["h"])
    rows = []
    for path in model_paths:
        model = models_mod.load_model(path)
        metrics = ev.f1_score(model.predict(grid.levels), grid.labels)
        rows.append({"model": str(path), "kind": model.kind, **metrics.as_dict()})
        print(f"{path}: f1={metrics.f1:.4f} precision={metrics.precision:.4f} "
              f"recall={metrics.recall:.4f}")
    with open(out / "evaluation.json", "w") as fh:
        json.dump({"grid_size": grid.n, "grid_positives": grid.positive_count,
                   "results": rows}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_manifest(out, cfg, "evaluate", {"test_set": test_set or "grid"})
    return 0


def cmd_pipeline(cfg: dict, workers: int) -> int:
    out = _out_dir(cfg)
    space = build_space(cfg)
    oracle = build_oracle(cfg)
    report = ev.run_experiment(
        oracle, space, cfg["h"], config=_json_safe(cfg), workers=workers,
        **_experiment_kwargs(cfg),
    )
    report.write_csv(out / "report.csv")
    report.write_json(out / "report.json")
    write_manifest(out, cfg, "pipeline", {
        "oracle_calls": {f"{s}/{seed}": v for (s, seed), v in sorted(report.oracle_calls.items())},
    })
    print(f"wrote {out / 'report.csv'} and {out / 'report.json'}")
    _print_report_summary(report)
    return 2 if report.has_errors else 0


def cmd_sweep_budget(cfg: dict, workers: int) -> int:
    if not cfg["budgets"]:
        raise ConfigError("config field 'budgets' is required for sweep-budget")
    out = _out_dir(cfg)
    space = build_space(cfg)
    oracle = build_oracle(cfg)
    kwargs = _experiment_kwargs(cfg)
    kwargs.pop("budget")
    rows = ev.sweep_budget(
        oracle, space, cfg["h"], cfg["budgets"], config=_json_safe(cfg),
        workers=workers, **kwargs,
    )
    ev.write_sweep_csv(out / "budget_sweep.csv", rows, "budget")
    for budget, report in rows:
        report.write_json(out / f"report_budget{budget}.json")
    write_manifest(out, cfg, "sweep-budget", {"budgets": cfg["budgets"]})
    print(f"wrote {out / 'budget_sweep.csv'}")
    return 2 if any(r.has_errors for _, r in rows) else 0


def cmd_sweep_threshold(cfg: dict, workers: int) -> int:
    thresholds = cfg["thresholds"]
    if not thresholds:
        thresholds = sorted(presets.THRESHOLD_PRESETS.values())
    out = _out_dir(cfg)
    space = build_space(cfg)
    oracle = build_oracle(cfg)
    kwargs = _experiment_kwargs(cfg)
    budget = kwargs.pop("budget")
    rows, audit = ev.sweep_threshold(
        oracle, space, thresholds, budget=budget, config=_json_safe(cfg),
        workers=workers, **kwargs,
    )
    ev.write_sweep_csv(out / "threshold_sweep.csv", rows, "h")
    for h, report in rows:
        report.write_json(out / f"report_h{h:g}.json")
    write_manifest(out, cfg, "sweep-threshold", {"thresholds": thresholds, "audit": audit})
    print(f"wrote {out / 'threshold_sweep.csv'}; "
          f"extra oracle calls during sweep: {audit['extra_calls_during_sweep']}")
    return 2 if any(r.has_errors for _, r in rows) else 0


def cmd_report(path: str) -> int:
    target = Path(path)
    if target.is_dir():
        target = target / "report.json"
    with open(target) as fh:
        doc = json.load(fh)
    print(f"config hash: {doc['config_hash']}")
    print(f"grid: {doc['grid']['size']} points, {doc['grid']['positives']} positive")
    print(f"{'sampler':<8} {'method':<12} {'kind':<9} {'mean F1':>8} {'std':>7} {'cells':>5}")
    for row in doc["aggregates"]:
        print(
            f"{row['sampler']:<8} {row['method']:<12} {row['kind']:<9} "
            f"{row['mean_f1']:>8.4f} {row['std_f1']:>7.4f} {row['cells']:>5}"
        )
    errors = [c for c in doc["cells"] if c["error"]]
    if errors:
        print(f"{len(errors)} failed cells:")
        for c in errors:
            print(f"  {c['sampler']}/{c['method']}/{c['kind']}/seed{c['seed']}: {c['error']}")
    return 0


def _print_report_summary(report) -> None:
    for row in report.aggregate_rows():
        if row["kind"] == "all":
            print(
                f"  {row['sampler']:<8} {row['method']:<12} "
                f"mean F1 over kinds: {row['mean_f1']:.4f}"
            )
    for sampler in sorted({s for s, _ in report.positive_counts}):
        print(f"  {sampler} mean positives: {report.mean_positive_count(sampler):.1f}")


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="distrel",
        description="Predict image-classifier reliability under image distortion.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="replace the config seed list with this single seed")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--workers", type=int, default=1,
                       help="worker threads for independent cells (default serial)")

    common(sub.add_parser("sample", help="run the samplers, write training sets"))
    p = sub.add_parser("rebalance", help="rebalance a sampled training set")
    common(p)
    p.add_argument("--data", required=True, help="training-set CSV")
    p.add_argument("--method", required=True, help="imbalance method name")
    p = sub.add_parser("train", help="train distortion-classifiers on a CSV")
    common(p)
    p.add_argument("--data", required=True, help="training CSV (sampled or rebalanced)")
    p = sub.add_parser("evaluate", help="score saved models on the grid test set")
    common(p)
    p.add_argument("--models", nargs="+", required=True, help="model JSON files")
    p.add_argument("--test-set", default=None, help="optional test-set CSV")
    common(sub.add_parser("pipeline", help="full sample/rebalance/train/evaluate matrix"))
    common(sub.add_parser("sweep-budget", help="pipeline across budget values"))
    common(sub.add_parser("sweep-threshold", help="relabel and re-evaluate across thresholds"))
    p = sub.add_parser("report", help="summarize a report.json")
    p.add_argument("path", help="report.json or a run directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "report":
        try:
            return cmd_report(args.path)
        except FileNotFoundError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1

    overrides = {"out": args.out}
    if args.seed is not None:
        overrides["seeds"] = [args.seed]
    try:
        cfg = resolve_config(load_config(args.config), overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    try:
        if args.command == "sample":
            return cmd_sample(cfg, args.workers)
        if args.command == "rebalance":
            return cmd_rebalance(cfg, args.data, args.method)
        if args.command == "train":
            return cmd_train(cfg, args.data)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.models, args.test_set)
        if args.command == "pipeline":
            return cmd_pipeline(cfg, args.workers)
        if args.command == "sweep-budget":
            return cmd_sweep_budget(cfg, args.workers)
        if args.command == "sweep-threshold":
            return cmd_sweep_threshold(cfg, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
