"""Build labeled training sets of distortion levels.

Two samplers: plain uniform sampling over the search space, and a
surrogate-guided loop that fits a GP to the accuracies observed so far and
picks the next level by maximizing

    q(c) = beta * sigma(c) + (mu(c) - h)

(the sign of the mean term flips when the minority class sits below the
threshold). beta grows with the iteration count to keep exploring.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from distrel import gp as gpmod
from distrel._kernels import single_threaded_blas
from distrel.space import SearchSpace

DUPLICATE_SUGGESTION_TOL = 1e-9
REFINE_INITIAL_STEP = 0.05  # fraction of each dimension's range


class OracleError(RuntimeError):
    """An accuracy oracle failed; carries the offending distortion level."""

    def __init__(self, message, level=None):
        super().__init__(message)
        self.level = None if level is None else np.asarray(level, dtype=np.float64)


@dataclass(frozen=True)
class LabeledSet:
    """Distortion levels with their measured accuracies and 0/1 labels.

    The accuracy column is retained although only labels feed the downstream
    classifiers: it lets threshold sweeps relabel without new oracle calls.
    """

    levels: np.ndarray
    accuracies: np.ndarray
    labels: np.ndarray
    threshold: float

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=np.float64)
        if levels.ndim != 2:
            levels = levels.reshape(len(levels), -1)
        acc = np.asarray(self.accuracies, dtype=np.float64).reshape(-1)
        lab = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "accuracies", acc)
        object.__setattr__(self, "labels", lab)
        if not (levels.shape[0] == acc.shape[0] == lab.shape[0]):
            raise ValueError("levels, accuracies and labels must have equal length")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {self.threshold}")
        if acc.size and (acc.min() < 0.0 or acc.max() > 1.0):
            raise ValueError("accuracies must lie in [0, 1]")
        expected = (acc >= self.threshold).astype(np.int64)
        if not np.array_equal(lab, expected):
            bad = int(np.flatnonzero(lab != expected)[0])
            raise ValueError(
                f"label invariant violated at row {bad}: accuracy={acc[bad]}, "
                f"threshold={self.threshold}, label={lab[bad]}"
            )

    @classmethod
    def from_accuracies(cls, levels, accuracies, threshold: float) -> "LabeledSet":
        acc = np.asarray(accuracies, dtype=np.float64)
        return cls(
            levels=np.asarray(levels, dtype=np.float64),
            accuracies=acc,
            labels=(acc >= threshold).astype(np.int64),
            threshold=threshold,
        )

    @property
    def n(self) -> int:
        return self.levels.shape[0]

    @property
    def positive_count(self) -> int:
        return int(self.labels.sum())

    def relabeled(self, threshold: float) -> "LabeledSet":
        """Same samples, labels recomputed against a new threshold."""
        return LabeledSet.from_accuracies(self.levels, self.accuracies, threshold)


@dataclass(frozen=True)
class SamplerConfig:
    """Knobs for the GP-guided sampling loop."""

    budget: int
    init_count: int = 20
    delta: float = 0.1
    minority_direction: str = "above"
    acquisition_candidates: int = 2048
    refine_steps: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError(f"budget must be >= 1, got {self.budget}")
        if not 0 < self.init_count < self.budget:
            raise ValueError(
                f"init_count must be in [1, budget), got {self.init_count} "
                f"with budget {self.budget}"
            )
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        if self.minority_direction not in ("above", "below"):
            raise ValueError(
                f"minority_direction must be 'above' or 'below', "
                f"got {self.minority_direction!r}"
            )
        if self.acquisition_candidates < 1:
            raise ValueError("acquisition_candidates must be >= 1")
        if self.refine_steps < 0:
            raise ValueError("refine_steps must be >= 0")


def label_accuracy(accuracy: float, h: float) -> int:
    """1 when accuracy >= h (ties at equality count as reliable), else 0."""
    if not 0.0 <= accuracy <= 1.0:
        raise ValueError(f"accuracy must be in [0, 1], got {accuracy}")
    if not 0.0 <= h <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {h}")
    return int(accuracy >= h)


def beta_coefficient(t: int, d: int, delta: float) -> float:
    """Exploration coefficient 2 * [ln(d * t * pi^2) - ln(6 * delta)].

    Natural log; strictly increasing in both t and d. Any delta > 0 is
    accepted here (the formula is well defined); the sampling loop itself
    restricts delta to (0, 1).
    """
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if not delta > 0.0:
        raise ValueError(f"delta must be > 0, got {delta}")
    return 2.0 * (math.log(d * t * math.pi**2) - math.log(6.0 * delta))


def acquisition(gp, c, h: float, beta: float, direction: str = "above") -> float:
    """Score a single level against the posterior; higher is more promising.

    ``c`` must be in the coordinate system the posterior was fitted in.
    """
    q = _acquisition_batch(gp, np.asarray(c, dtype=np.float64)[None, :], h, beta, direction)
    return float(q[0])


def _acquisition_batch(gp, points, h, beta, direction):
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    if direction not in ("above", "below"):
        raise ValueError(f"direction must be 'above' or 'below', got {direction!r}")
    mean, var = gpmod.predict_batch(gp, points)
    sigma = np.sqrt(var)
    if direction == "above":
        return beta * sigma + (mean - h)
    return beta * sigma + (h - mean)


def _acquisition_fast(gp, z, h, beta, sign):
    """Same scores as ``_acquisition_batch`` minus validation and copies."""
    mean, var = gpmod._predict_raw(gp, z)
    return beta * np.sqrt(var) + sign * (mean - h)


def suggest_next(
    gp,
    space: SearchSpace,
    h: float,
    beta: float,
    cfg: SamplerConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Approximate argmax of the acquisition over the box; returns a raw level.

    Random multistart (``acquisition_candidates`` uniform points) followed by
    coordinate-wise hill climbing: each refinement step probes +-step along
    every axis, moves to the best improving probe, and halves the step.
    Collisions with existing training inputs get nudged by up to 0.5% of each
    range so the next factorization stays well-posed.
    """
    d = space.dim
    sign = 1.0 if cfg.minority_direction == "above" else -1.0
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    z_cand = rng.random((cfg.acquisition_candidates, d))
    q = _acquisition_fast(gp, z_cand, h, beta, sign)
    best = int(np.argmax(q))
    z_best = z_cand[best].copy()
    q_best = q[best]

    step = REFINE_INITIAL_STEP
    rows = np.arange(d)
    for _ in range(cfg.refine_steps):
        probes = np.repeat(z_best[None, :], 2 * d, axis=0)
        probes[2 * rows, rows] = np.minimum(z_best + step, 1.0)
        probes[2 * rows + 1, rows] = np.maximum(z_best - step, 0.0)
        q_probe = _acquisition_fast(gp, probes, h, beta, sign)
        k = int(np.argmax(q_probe))
        if q_probe[k] > q_best:
            z_best = probes[k].copy()
            q_best = q_probe[k]
        step *= 0.5

    for _ in range(100):
        gap = np.min(np.max(np.abs(gp.inputs - z_best), axis=1))
        if gap > DUPLICATE_SUGGESTION_TOL:
            break
        z_best = np.clip(z_best + rng.uniform(-0.005, 0.005, size=d), 0.0, 1.0)
    else:
        raise RuntimeError("could not move suggestion away from existing inputs")
    return space.denormalize(z_best)


class _PairwiseDiffTracker:
    """Incrementally maintained |x_i - x_j| multisets, one per dimension.

    Produces the same lengthscales as ``median_heuristic_lengthscales`` but
    appends only the n-1 new differences per added point instead of rebuilding
    all pairs, which keeps the refit-every-step loop affordable.
    """

    def __init__(self, points: np.ndarray, capacity_points: int):
        points = np.atleast_2d(points)
        n, d = points.shape
        self._points = np.empty((capacity_points, d))
        self._points[:n] = points
        self._n = n
        self._diffs = np.empty((d, capacity_points * (capacity_points - 1) // 2))
        self._m = 0
        iu, ju = np.triu_indices(n, k=1)
        block = np.abs(points[iu] - points[ju]).T
        self._diffs[:, : block.shape[1]] = block
        self._m = block.shape[1]

    def add(self, point: np.ndarray) -> None:
        n = self._n
        block = np.abs(self._points[:n] - point).T
        self._diffs[:, self._m : self._m + n] = block
        self._m += n
        self._points[n] = point
        self._n += 1

    def lengthscales(self) -> np.ndarray:
        if self._n < 2:
            raise ValueError("median heuristic needs at least 2 points")
        med = np.median(self._diffs[:, : self._m], axis=1)
        return np.maximum(med, gpmod.LENGTHSCALE_FLOOR)


def _call_oracle(oracle, level) -> float:
    try:
        value = float(oracle(level))
    except Exception as exc:
        raise OracleError(f"oracle failed at level {level}: {exc}", level) from exc
    if not 0.0 <= value <= 1.0:
        raise OracleError(f"oracle returned {value} outside [0, 1] at {level}", level)
    return value


def run_random_sampling(oracle, space: SearchSpace, h: float, budget: int, seed: int) -> LabeledSet:
    """Label ``budget`` i.i.d. uniform levels; deterministic per seed."""
    if budget < 0:
        raise ValueError(f"budget must be >= 0, got {budget}")
    if not 0.0 <= h <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {h}")
    rng = np.random.default_rng(seed)
    levels = space.sample_uniform(rng, budget)
    accs = np.array([_call_oracle(oracle, lv) for lv in levels], dtype=np.float64)
    return LabeledSet.from_accuracies(levels, accs, h)


def run_gp_sampling(oracle, space: SearchSpace, h: float, cfg: SamplerConfig) -> LabeledSet:
    """GP-guided training-set construction under a fixed evaluation budget.

    Phase 1 draws ``init_count`` uniform levels. Each remaining evaluation
    refits the GP (median-heuristic lengthscales, target-variance signal
    level) on everything observed so far, recomputes beta for the current
    iteration count, and evaluates the acquisition argmax. Initial points
    count against the budget, so total oracle calls equal ``budget``.
    """
    if not 0.0 <= h <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {h}")
    d = space.dim
    rng = np.random.default_rng(cfg.seed)

    z = np.empty((cfg.budget, d))
    z[: cfg.init_count] = rng.random((cfg.init_count, d))
    levels = [space.denormalize(zi) for zi in z[: cfg.init_count]]
    accs = [_call_oracle(oracle, lv) for lv in levels]
    tracker = _PairwiseDiffTracker(z[: cfg.init_count], cfg.budget)

    t = cfg.init_count
    with single_threaded_blas():
        while t < cfg.budget:
            acc_arr = np.asarray(accs, dtype=np.float64)
            if t >= 2:
                lengthscales = tracker.lengthscales()
                signal_variance = max(float(np.var(acc_arr, ddof=1)), 1e-4)
            else:
                lengthscales = np.ones(d)
                signal_variance = 1e-4
            kcfg = gpmod.KernelConfig(lengthscales, signal_variance, jitter=1e-10)
            posterior = gpmod.fit(z[:t], acc_arr, kcfg)
            beta = beta_coefficient(t, d, cfg.delta)
            raw = suggest_next(posterior, space, h, beta, cfg, rng)
            acc = _call_oracle(oracle, raw)
            z[t] = space.normalize(raw)
            tracker.add(z[t])
            levels.append(np.asarray(raw, dtype=np.float64))
            accs.append(acc)
            t += 1

    return LabeledSet.from_accuracies(np.vstack(levels), np.asarray(accs), h)


# ---------------------------------------------------------------------------
# CSV round-trip (one column per dimension, then accuracy, then label)
# ---------------------------------------------------------------------------

def save_labeled_set(path, labeled: LabeledSet, space: SearchSpace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(space.names) + ["accuracy", "label"])
        for row, acc, lab in zip(labeled.levels, labeled.accuracies, labeled.labels):
            writer.writerow(
                [f"{v:.17g}" for v in row] + [f"{acc:.17g}", str(int(lab))]
            )


def load_labeled_set(path, space: SearchSpace, h: float) -> LabeledSet:
    """Read a training-set CSV and check its labels against ``h``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected = list(space.names) + ["accuracy", "label"]
        if header != expected:
            raise ValueError(f"unexpected header {header}, expected {expected}")
        rows = [r for r in reader if r]
    d = space.dim
    levels = np.array([[float(v) for v in r[:d]] for r in rows], dtype=np.float64)
    accs = np.array([float(r[d]) for r in rows], dtype=np.float64)
    labels = np.array([int(r[d + 1]) for r in rows], dtype=np.int64)
    if levels.size == 0:
        levels = levels.reshape(0, d)
    loaded = LabeledSet(levels=levels, accuracies=accs, labels=labels, threshold=h)
    return loaded
