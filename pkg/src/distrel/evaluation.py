"""Grid test sets, F1 scoring, and the full experiment matrix.

The experiment crosses sampler x imbalance method x model kind over several
seeds, scores every cell on one shared grid test set, and aggregates by
arithmetic mean. Budget and threshold sweeps rerun the matrix along one axis;
the threshold sweep relabels cached accuracies instead of re-querying the
oracle.
"""

import csv
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from distrel import models as models_mod
from distrel import oracles as oracles_mod
from distrel import rebalance as rebalance_mod
from distrel.sampling import LabeledSet, SamplerConfig, run_gp_sampling, run_random_sampling
from distrel.space import SearchSpace

SAMPLERS = ("random", "gp")
REPORT_FORMAT_VERSION = 1
CSV_HEADER = [
    "sampler", "method", "kind", "seed",
    "tp", "fp", "tn", "fn", "precision", "recall", "f1",
]


@dataclass(frozen=True)
class Metrics:
    """Confusion counts plus derived scores for the positive (reliable) class."""

    true_positive: int
    false_positive: int
    true_negative: int
    false_negative: int
    precision: float
    recall: float
    f1: float

    def as_dict(self) -> dict:
        return {
            "tp": self.true_positive,
            "fp": self.false_positive,
            "tn": self.true_negative,
            "fn": self.false_negative,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def f1_score(predictions, truth) -> Metrics:
    """Standard confusion counts; 0/0 ratios resolve to 0."""
    predictions = np.asarray(predictions, dtype=np.int64).reshape(-1)
    truth = np.asarray(truth, dtype=np.int64).reshape(-1)
    if predictions.shape != truth.shape:
        raise ValueError(
            f"length mismatch: {predictions.shape[0]} predictions, "
            f"{truth.shape[0]} truth labels"
        )
    if predictions.size == 0:
        raise ValueError("need at least one prediction")
    tp = int(np.sum((predictions == 1) & (truth == 1)))
    fp = int(np.sum((predictions == 1) & (truth == 0)))
    tn = int(np.sum((predictions == 0) & (truth == 0)))
    fn = int(np.sum((predictions == 0) & (truth == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall
        else 0.0
    )
    return Metrics(tp, fp, tn, fn, precision, recall, f1)


def build_grid_test_set(space: SearchSpace, points_per_dim: int, oracle, h: float) -> LabeledSet:
    """Label the full Cartesian lattice (points_per_dim^d points) with the oracle."""
    levels = space.grid(points_per_dim)
    accs = oracles_mod.evaluate_many(oracle, levels)
    return LabeledSet.from_accuracies(levels, accs, h)


@dataclass(frozen=True)
class CellResult:
    sampler: str
    method: str
    kind: str
    seed: int
    metrics: Metrics = None
    error: str = None

    def key(self) -> tuple:
        return (self.sampler, self.method, self.kind, self.seed)


@dataclass
class ExperimentReport:
    """Everything one experiment run produced, reproducible from config+seeds."""

    cells: list
    positive_counts: dict  # (sampler, seed) -> int
    oracle_calls: dict  # (sampler, seed) -> int
    grid_size: int
    grid_positive_count: int
    seeds: tuple
    config: dict = field(default_factory=dict)

    # -- aggregation ---------------------------------------------------------

    def _f1s(self, sampler, method, kind=None) -> list:
        return [
            c.metrics.f1
            for c in self.cells
            if c.error is None
            and c.sampler == sampler
            and c.method == method
            and (kind is None or c.kind == kind)
        ]

    def mean_f1(self, sampler, method, kind=None) -> float:
        """Mean F1 over seeds (and over kinds when ``kind`` is None)."""
        vals = self._f1s(sampler, method, kind)
        if not vals:
            raise ValueError(f"no successful cells for {(sampler, method, kind)}")
        return float(np.mean(vals))

    def mean_positive_count(self, sampler) -> float:
        vals = [v for (s, _), v in self.positive_counts.items() if s == sampler]
        if not vals:
            raise ValueError(f"no runs recorded for sampler {sampler!r}")
        return float(np.mean(vals))

    @property
    def has_errors(self) -> bool:
        return any(c.error is not None for c in self.cells)

    def sorted_cells(self) -> list:
        return sorted(self.cells, key=lambda c: c.key())

    def aggregate_rows(self) -> list:
        """Mean/std F1 per (sampler, method, kind) plus kind-averaged rows."""
        rows = []
        samplers = sorted({c.sampler for c in self.cells})
        methods = sorted({c.method for c in self.cells})
        kinds = sorted({c.kind for c in self.cells})
        for s in samplers:
            for m in methods:
                for k in kinds + [None]:
                    vals = self._f1s(s, m, k)
                    if not vals:
                        continue
                    rows.append(
                        {
                            "sampler": s,
                            "method": m,
                            "kind": k if k is not None else "all",
                            "mean_f1": float(np.mean(vals)),
                            "std_f1": float(np.std(vals)),
                            "cells": len(vals),
                        }
                    )
        return rows

    # -- serialization ---------------------------------------------------------

    def config_hash(self) -> str:
        blob = json.dumps(self.config, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for c in self.sorted_cells():
                if c.error is not None:
                    continue
                m = c.metrics
                writer.writerow(
                    [
                        c.sampler, c.method, c.kind, c.seed,
                        m.true_positive, m.false_positive,
                        m.true_negative, m.false_negative,
                        f"{m.precision:.10g}", f"{m.recall:.10g}", f"{m.f1:.10g}",
                    ]
                )

    def to_json_dict(self) -> dict:
        def nest(d):
            out = {}
            for (sampler, seed), v in sorted(d.items()):
                out.setdefault(sampler, {})[str(seed)] = v
            return out

        return {
            "format_version": REPORT_FORMAT_VERSION,
            "config": self.config,
            "config_hash": self.config_hash(),
            "seeds": list(self.seeds),
            "grid": {"size": self.grid_size, "positives": self.grid_positive_count},
            "positive_counts": nest(self.positive_counts),
            "oracle_calls": nest(self.oracle_calls),
            "aggregates": self.aggregate_rows(),
            "cells": [
                {
                    "sampler": c.sampler,
                    "method": c.method,
                    "kind": c.kind,
                    "seed": c.seed,
                    "metrics": c.metrics.as_dict() if c.metrics else None,
                    "error": c.error,
                }
                for c in self.sorted_cells()
            ],
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _validate_axes(samplers, methods, kinds):
    for s in samplers:
        if s not in SAMPLERS:
            raise ValueError(f"unknown sampler {s!r}; known: {SAMPLERS}")
    for m in methods:
        if m not in rebalance_mod.METHODS:
            raise ValueError(
                f"unknown imbalance method {m!r}; known: {rebalance_mod.METHODS}"
            )
    for k in kinds:
        if k not in models_mod.KINDS:
            raise ValueError(f"unknown model kind {k!r}; known: {models_mod.KINDS}")


def _run_sampler(sampler, oracle, space, h, seed, budget, init_count, delta,
                 acquisition_candidates, refine_steps):
    wrapped = oracles_mod.caching_oracle(oracle)
    if sampler == "random":
        labeled = run_random_sampling(wrapped, space, h, budget, seed)
    else:
        cfg = SamplerConfig(
            budget=budget,
            init_count=init_count,
            delta=delta,
            acquisition_candidates=acquisition_candidates,
            refine_steps=refine_steps,
            seed=seed,
        )
        labeled = run_gp_sampling(wrapped, space, h, cfg)
    return labeled, wrapped.inner_calls


def _evaluate_cells(train_sets, grid, space, methods, kinds, workers=1):
    """Rebalance/train/score each cell; failures are recorded, not raised."""
    rebalanced = {}
    for (sampler, seed), labeled in sorted(train_sets.items()):
        for method in methods:
            key = (sampler, seed, method)
            try:
                rebalanced[key] = rebalance_mod.rebalance(
                    labeled, method, space, seed=seed
                )
            except Exception as exc:
                rebalanced[key] = exc

    jobs = []
    for (sampler, seed), _ in sorted(train_sets.items()):
        for method in methods:
            for kind in kinds:
                jobs.append((sampler, seed, method, kind))

    def run_cell(job):
        sampler, seed, method, kind = job
        pre = rebalanced[(sampler, seed, method)]
        if isinstance(pre, Exception):
            return CellResult(sampler, method, kind, seed, error=str(pre))
        try:
            model = models_mod.train(kind, pre, space, seed=seed)
            preds = model.predict(grid.levels)
            metrics = f1_score(preds, grid.labels)
            return CellResult(sampler, method, kind, seed, metrics=metrics)
        except Exception as exc:
            return CellResult(sampler, method, kind, seed, error=str(exc))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(run_cell, jobs))
    else:
        cells = [run_cell(j) for j in jobs]
    return cells


def run_experiment(
    oracle,
    space: SearchSpace,
    h: float,
    *,
    budget: int,
    init_count: int = 20,
    delta: float = 0.1,
    samplers=("random", "gp"),
    methods=("none", "smote"),
    kinds=("logistic", "tree", "knn"),
    seeds=(0, 1, 2, 3, 4),
    points_per_dim: int = 4,
    acquisition_candidates: int = 2048,
    refine_steps: int = 32,
    grid: LabeledSet = None,
    config: dict = None,
    workers: int = 1,
) -> ExperimentReport:
    """Run the sampler x method x kind matrix over the given seeds.

    The grid test set is built once (or passed in) and shared by every cell,
    so test labels never depend on what is being evaluated. Cell failures are
    recorded in the report while the other cells proceed.
    """
    _validate_axes(samplers, methods, kinds)
    if grid is None:
        grid = build_grid_test_set(space, points_per_dim, oracle, h)
    elif grid.threshold != h:
        grid = grid.relabeled(h)

    train_sets = {}
    positive_counts = {}
    oracle_calls = {}
    for seed in seeds:
        for sampler in samplers:
            labeled, calls = _run_sampler(
                sampler, oracle, space, h, seed, budget, init_count, delta,
                acquisition_candidates, refine_steps,
            )
            train_sets[(sampler, seed)] = labeled
            positive_counts[(sampler, seed)] = labeled.positive_count
            oracle_calls[(sampler, seed)] = calls

    cells = _evaluate_cells(train_sets, grid, space, methods, kinds, workers)
    return ExperimentReport(
        cells=cells,
        positive_counts=positive_counts,
        oracle_calls=oracle_calls,
        grid_size=grid.n,
        grid_positive_count=grid.positive_count,
        seeds=tuple(seeds),
        config=config or {},
    )


def sweep_budget(oracle, space, h, budgets, *, config: dict = None, **kwargs) -> list:
    """run_experiment per budget, reusing one shared grid; rows keyed by budget."""
    if not budgets:
        raise ValueError("need at least one budget")
    points_per_dim = kwargs.pop("points_per_dim", 4)
    grid = kwargs.pop("grid", None)
    if grid is None:
        grid = build_grid_test_set(space, points_per_dim, oracle, h)
    out = []
    for budget in budgets:
        report = run_experiment(
            oracle, space, h, budget=budget, grid=grid,
            config={**(config or {}), "budget": budget}, **kwargs,
        )
        out.append((int(budget), report))
    return out


def sweep_threshold(oracle, space, h_values, *, budget, config: dict = None, **kwargs) -> tuple:
    """Re-evaluate the matrix at each threshold without new oracle calls.

    Samples once per (sampler, seed) and builds the grid once; every
    threshold then relabels the stored accuracies. Returns (rows, audit)
    where rows are (h, ExperimentReport) pairs and audit proves the oracle
    call count did not grow during the sweep.
    """
    h_values = [float(h) for h in h_values]
    if not h_values:
        raise ValueError("need at least one threshold")
    for h in h_values:
        if not 0.0 <= h <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {h}")

    init_count = kwargs.pop("init_count", 20)
    delta = kwargs.pop("delta", 0.1)
    samplers = kwargs.pop("samplers", ("random", "gp"))
    methods = kwargs.pop("methods", ("none", "smote"))
    kinds = kwargs.pop("kinds", ("logistic", "tree", "knn"))
    seeds = kwargs.pop("seeds", (0, 1, 2, 3, 4))
    points_per_dim = kwargs.pop("points_per_dim", 4)
    acquisition_candidates = kwargs.pop("acquisition_candidates", 2048)
    refine_steps = kwargs.pop("refine_steps", 32)
    workers = kwargs.pop("workers", 1)
    if kwargs:
        raise TypeError(f"unexpected arguments {sorted(kwargs)}")
    _validate_axes(samplers, methods, kinds)

    # sample at the first threshold; the acquisition argmax is invariant to
    # the constant h offset, and labels get recomputed per threshold anyway
    audited = oracles_mod.caching_oracle(oracle)
    h_ref = h_values[0]
    grid = build_grid_test_set(space, points_per_dim, audited, h_ref)
    train_sets = {}
    oracle_calls = {}
    for seed in seeds:
        for sampler in samplers:
            labeled, calls = _run_sampler(
                sampler, audited, space, h_ref, seed, budget, init_count, delta,
                acquisition_candidates, refine_steps,
            )
            train_sets[(sampler, seed)] = labeled
            oracle_calls[(sampler, seed)] = calls
    calls_after_sampling = audited.inner_calls

    rows = []
    for h in h_values:
        relabeled = {k: v.relabeled(h) for k, v in train_sets.items()}
        grid_h = grid.relabeled(h)
        cells = _evaluate_cells(relabeled, grid_h, space, methods, kinds, workers)
        report = ExperimentReport(
            cells=cells,
            positive_counts={k: v.positive_count for k, v in relabeled.items()},
            oracle_calls=dict(oracle_calls),
            grid_size=grid_h.n,
            grid_positive_count=grid_h.positive_count,
            seeds=tuple(seeds),
            config={**(config or {}), "h": h},
        )
        rows.append((h, report))

    audit = {
        "oracle_calls_after_sampling": calls_after_sampling,
        "oracle_calls_after_sweep": audited.inner_calls,
        "extra_calls_during_sweep": audited.inner_calls - calls_after_sampling,
    }
    return rows, audit


def write_sweep_csv(path, rows, key_name: str) -> None:
    """Flatten (key, report) pairs into one CSV with a leading key column."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([key_name] + CSV_HEADER)
        for key, report in rows:
            for c in report.sorted_cells():
                if c.error is not None:
                    continue
                m = c.metrics
                writer.writerow(
                    [
                        key, c.sampler, c.method, c.kind, c.seed,
                        m.true_positive, m.false_positive,
                        m.true_negative, m.false_negative,
                        f"{m.precision:.10g}", f"{m.recall:.10g}", f"{m.f1:.10g}",
                    ]
                )
