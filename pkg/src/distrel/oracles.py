"""Accuracy oracles: the black-box map from a distortion level to [0, 1].

Three families behind one calling convention (``oracle(level) -> float`` with
an attached ``space``): a real classifier evaluated on a distorted
verification set, closed-form synthetic oracles with known positive-region
volume, and a memoizing wrapper for budget audits. Also ships a tiny
procedural image dataset plus reference classifiers so the full pipeline runs
with no external data, and an IDX reader so an MNIST-style subsample can be
dropped in.
"""

import gzip
import math
import threading
from dataclasses import dataclass

import numpy as np

from distrel import _kernels
from distrel.distortion import distort_set, distortion_space
from distrel.space import SearchSpace


def evaluate_accuracy(oracle, level) -> float:
    """Evaluate an oracle at one level, validating bounds and output range."""
    space = getattr(oracle, "space", None)
    if space is not None:
        level = space.validate_level(level)
    value = float(oracle(level))
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"oracle returned {value} outside [0, 1]")
    return value


def evaluate_many(oracle, levels) -> np.ndarray:
    """Vectorized evaluation when the oracle supports it, else a loop."""
    levels = np.atleast_2d(np.asarray(levels, dtype=np.float64))
    if hasattr(oracle, "evaluate_many"):
        return np.asarray(oracle.evaluate_many(levels), dtype=np.float64)
    return np.array([oracle(lv) for lv in levels], dtype=np.float64)


# ---------------------------------------------------------------------------
# Synthetic oracles
# ---------------------------------------------------------------------------

def _unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


@dataclass(frozen=True)
class SyntheticOracleSpec:
    """Closed-form accuracy surface with a computable positive-region volume.

    kind "box": ``inside_value`` within the axis-aligned sub-box
    [box_lower, box_upper], ``outside_value`` elsewhere.
    kind "ellipsoid" / "multimodal": max over bumps of
    peak_k * exp(-sum_j ((c_j - center_kj) / scale_kj)^2).
    """

    kind: str
    space: SearchSpace
    box_lower: np.ndarray = None
    box_upper: np.ndarray = None
    inside_value: float = 0.99
    outside_value: float = 0.5
    centers: np.ndarray = None
    scales: np.ndarray = None
    peaks: np.ndarray = None

    def __post_init__(self):
        d = self.space.dim
        if self.kind == "box":
            lo = np.asarray(self.box_lower, dtype=np.float64)
            hi = np.asarray(self.box_upper, dtype=np.float64)
            object.__setattr__(self, "box_lower", lo)
            object.__setattr__(self, "box_upper", hi)
            if lo.shape != (d,) or hi.shape != (d,):
                raise ValueError("box bounds must have one entry per dimension")
            if not np.all((lo >= self.space.lowers) & (hi <= self.space.uppers) & (lo < hi)):
                raise ValueError("positive box must sit strictly inside the space")
            for v in (self.inside_value, self.outside_value):
                if not 0.0 <= v <= 1.0:
                    raise ValueError("box values must lie in [0, 1]")
            if self.inside_value <= self.outside_value:
                raise ValueError("inside_value must exceed outside_value")
        elif self.kind in ("ellipsoid", "multimodal"):
            centers = np.atleast_2d(np.asarray(self.centers, dtype=np.float64))
            scales = np.atleast_2d(np.asarray(self.scales, dtype=np.float64))
            peaks = np.atleast_1d(np.asarray(self.peaks, dtype=np.float64))
            object.__setattr__(self, "centers", centers)
            object.__setattr__(self, "scales", scales)
            object.__setattr__(self, "peaks", peaks)
            k = centers.shape[0]
            if self.kind == "ellipsoid" and k != 1:
                raise ValueError("ellipsoid kind takes exactly one bump")
            if centers.shape != (k, d) or scales.shape != (k, d) or peaks.shape != (k,):
                raise ValueError("centers/scales/peaks shapes are inconsistent")
            if not np.all(scales > 0):
                raise ValueError("scales must be > 0")
            if not np.all((peaks > 0) & (peaks <= 1.0)):
                raise ValueError("peaks must lie in (0, 1]")
        else:
            raise ValueError(f"unknown synthetic oracle kind {self.kind!r}")

    # -- accuracy surface ---------------------------------------------------

    def evaluate(self, levels) -> np.ndarray:
        levels = np.atleast_2d(np.asarray(levels, dtype=np.float64))
        if self.kind == "box":
            inside = np.all(
                (levels >= self.box_lower) & (levels <= self.box_upper), axis=1
            )
            return np.where(inside, self.inside_value, self.outside_value)
        acc = np.zeros(levels.shape[0])
        for center, scale, peak in zip(self.centers, self.scales, self.peaks):
            t = (levels - center) / scale
            acc = np.maximum(acc, peak * np.exp(-np.sum(t * t, axis=1)))
        return acc

    # -- positive-region volume ----------------------------------------------

    def positive_fraction(self, h: float, grid_points: int = 13) -> float:
        """Fraction of the box where accuracy >= h.

        Exact for the box kind and for bumps whose level-set ellipsoids sit
        inside the space without touching each other; otherwise falls back to
        a dense-grid estimate with ``grid_points`` per dimension.
        """
        if not 0.0 <= h <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {h}")
        if self.kind == "box":
            if h <= self.outside_value:
                return 1.0
            if h <= self.inside_value:
                return float(
                    np.prod((self.box_upper - self.box_lower) / self.space.ranges)
                )
            return 0.0

        d = self.space.dim
        radii = []
        for peak in self.peaks:
            radii.append(math.sqrt(math.log(peak / h)) if peak >= h and h > 0 else None)
        if h == 0.0:
            return 1.0
        active = [
            (c, s, r)
            for c, s, r in zip(self.centers, self.scales, radii)
            if r is not None
        ]
        if not active:
            return 0.0
        if self._disjoint_and_interior(active):
            vol = sum(
                _unit_ball_volume(d) * float(np.prod(s * r)) for _, s, r in active
            )
            return vol / float(np.prod(self.space.ranges))
        return self._grid_fraction(h, grid_points)

    def _disjoint_and_interior(self, active) -> bool:
        for c, s, r in active:
            lo = c - s * r
            hi = c + s * r
            if np.any(lo < self.space.lowers) or np.any(hi > self.space.uppers):
                return False
        for i in range(len(active)):
            for j in range(i + 1, len(active)):
                ci, si, ri = active[i]
                cj, sj, rj = active[j]
                overlap = np.all(
                    (ci - si * ri <= cj + sj * rj) & (cj - sj * rj <= ci + si * ri)
                )
                if overlap:
                    return False
        return True

    def _grid_fraction(self, h: float, grid_points: int) -> float:
        total = grid_points ** self.space.dim
        positives = 0
        grid = self.space.grid(grid_points)
        for start in range(0, total, 1_000_000):
            chunk = grid[start : start + 1_000_000]
            positives += int(np.sum(self.evaluate(chunk) >= h))
        return positives / total


class SyntheticOracle:
    """Callable wrapper over a :class:`SyntheticOracleSpec`."""

    def __init__(self, spec: SyntheticOracleSpec):
        self.spec = spec
        self.space = spec.space

    def __call__(self, level) -> float:
        level = self.space.validate_level(level)
        return float(self.spec.evaluate(level[None, :])[0])

    def evaluate_many(self, levels) -> np.ndarray:
        levels = np.atleast_2d(np.asarray(levels, dtype=np.float64))
        ok = self.space.contains(levels)
        if not np.all(ok):
            self.space.validate_level(levels[int(np.flatnonzero(~ok)[0])])
        return self.spec.evaluate(levels)


def make_synthetic_oracle(spec: SyntheticOracleSpec) -> SyntheticOracle:
    return SyntheticOracle(spec)


# ---------------------------------------------------------------------------
# Image data and reference classifiers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VerificationSet:
    """Labeled images used to measure a classifier's accuracy."""

    images: np.ndarray  # (n, H, W) or (n, H, W, 3), values in [0, 1]
    labels: np.ndarray  # (n,) class indices
    n_classes: int

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)
        if images.shape[0] != labels.shape[0]:
            raise ValueError("images and labels must have equal length")
        if images.shape[0] < 1:
            raise ValueError("verification set needs at least one image")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise ValueError(
                f"labels must lie in [0, {self.n_classes - 1}], "
                f"got range [{labels.min()}, {labels.max()}]"
            )

    @property
    def n(self) -> int:
        return self.images.shape[0]

    @property
    def image_shape(self) -> tuple:
        return self.images.shape[1:]


def make_blob_verification_set(
    n_images: int, n_classes: int = 2, size: int = 16, seed: int = 0,
    noise: float = 0.05,
) -> VerificationSet:
    """Procedural disc/bar/ring images with class-dependent geometry.

    Classes cycle 0..n_classes-1: disc, horizontal bar, vertical bar, ring.
    Shape centers jitter by up to 1.5 px so the task is not pure memorization.
    """
    if not 2 <= n_classes <= 4:
        raise ValueError(f"n_classes must be in [2, 4], got {n_classes}")
    if n_images < n_classes:
        raise ValueError("need at least one image per class")
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    images = np.empty((n_images, size, size))
    labels = np.empty(n_images, dtype=np.int64)
    for i in range(n_images):
        cls = i % n_classes
        cx = (size - 1) / 2.0 + rng.uniform(-1.5, 1.5)
        cy = (size - 1) / 2.0 + rng.uniform(-1.5, 1.5)
        rad = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
        if cls == 0:
            mask = rad <= size * 0.22
        elif cls == 1:
            mask = (np.abs(yy - cy) <= size * 0.09) & (np.abs(xx - cx) <= size * 0.34)
        elif cls == 2:
            mask = (np.abs(xx - cx) <= size * 0.09) & (np.abs(yy - cy) <= size * 0.34)
        else:
            mask = (rad <= size * 0.30) & (rad >= size * 0.18)
        img = np.where(mask, 0.9, 0.1) + rng.normal(0.0, noise, (size, size))
        images[i] = np.clip(img, 0.0, 1.0)
        labels[i] = cls
    return VerificationSet(images=images, labels=labels, n_classes=n_classes)


class NearestCentroidClassifier:
    """Predicts the class whose mean training image is closest in pixel space."""

    def __init__(self, centroids: np.ndarray, image_shape: tuple):
        self.centroids = centroids
        self.image_shape = tuple(image_shape)

    def predict(self, images) -> np.ndarray:
        flat = self._flatten(images)
        d = _kernels.pairwise_sq_dists(flat, self.centroids)
        return np.argmin(d, axis=1)

    def _flatten(self, images) -> np.ndarray:
        images = np.asarray(images, dtype=np.float64)
        if images.shape[1:] != self.image_shape:
            raise ValueError(
                f"images have shape {images.shape[1:]}, "
                f"classifier was trained on {self.image_shape}"
            )
        return np.ascontiguousarray(images.reshape(images.shape[0], -1))


class KnnImageClassifier:
    """k-nearest-neighbor vote over stored training images.

    Neighbor order breaks distance ties by training index; class-count ties go
    to the lowest class index.
    """

    def __init__(self, train_x, train_y, n_classes, image_shape, k=5):
        self.train_x = train_x
        self.train_y = train_y
        self.n_classes = n_classes
        self.image_shape = tuple(image_shape)
        self.k = k

    def predict(self, images) -> np.ndarray:
        images = np.asarray(images, dtype=np.float64)
        if images.shape[1:] != self.image_shape:
            raise ValueError(
                f"images have shape {images.shape[1:]}, "
                f"classifier was trained on {self.image_shape}"
            )
        flat = np.ascontiguousarray(images.reshape(images.shape[0], -1))
        d = _kernels.pairwise_sq_dists(flat, self.train_x)
        k = min(self.k, self.train_x.shape[0])
        order = np.argsort(d, axis=1, kind="stable")[:, :k]
        out = np.empty(images.shape[0], dtype=np.int64)
        for i in range(images.shape[0]):
            counts = np.bincount(self.train_y[order[i]], minlength=self.n_classes)
            out[i] = int(np.argmax(counts))
        return out


def train_reference_classifier(train: VerificationSet, kind: str):
    """Fit the stand-in image classifier whose reliability gets audited."""
    flat = np.ascontiguousarray(train.images.reshape(train.n, -1))
    counts = np.bincount(train.labels, minlength=train.n_classes)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise ValueError(f"classes {empty.tolist()} have no training examples")
    if kind == "nearest-centroid":
        centroids = np.stack(
            [flat[train.labels == c].mean(axis=0) for c in range(train.n_classes)]
        )
        return NearestCentroidClassifier(centroids, train.image_shape)
    if kind == "k-nn":
        return KnnImageClassifier(
            flat, train.labels, train.n_classes, train.image_shape, k=5
        )
    raise ValueError(f"unknown classifier kind {kind!r}")


class ClassifierOracle:
    """Accuracy of a fixed classifier on the verification set distorted at c.

    The rain seed is fixed per oracle instance (image i always uses
    rain_seed + i), so the oracle is a deterministic function of the level.
    """

    def __init__(self, classifier, verification: VerificationSet, rain_seed: int = 0):
        probe = verification.images[:1]
        classifier.predict(probe)  # raises on shape mismatch
        self.classifier = classifier
        self.verification = verification
        self.rain_seed = rain_seed
        self.space = distortion_space()

    def __call__(self, level) -> float:
        level = self.space.validate_level(level)
        distorted = distort_set(
            list(self.verification.images), level, self.rain_seed
        )
        preds = self.classifier.predict(np.stack(distorted))
        return float(np.mean(preds == self.verification.labels))


def make_classifier_oracle(classifier, verification: VerificationSet, rain_seed: int = 0) -> ClassifierOracle:
    return ClassifierOracle(classifier, verification, rain_seed)


# ---------------------------------------------------------------------------
# Caching wrapper
# ---------------------------------------------------------------------------

class CachingOracle:
    """Memoizes by exact level coordinates; safe under concurrent queries."""

    def __init__(self, inner):
        self.inner = inner
        self.space = getattr(inner, "space", None)
        self._cache = {}
        self._lock = threading.Lock()
        self.inner_calls = 0
        self.queries = 0

    def __call__(self, level) -> float:
        key = tuple(float(v) for v in np.asarray(level, dtype=np.float64))
        with self._lock:
            self.queries += 1
            if key in self._cache:
                return self._cache[key]
        value = float(self.inner(level))
        with self._lock:
            self._cache[key] = value
            self.inner_calls += 1
        return value

    @property
    def cache_size(self) -> int:
        return len(self._cache)


def caching_oracle(inner) -> CachingOracle:
    return CachingOracle(inner)


# ---------------------------------------------------------------------------
# IDX (MNIST binary layout) loading
# ---------------------------------------------------------------------------

def _read_idx(path) -> bytes:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as fh:
        return fh.read()


def load_idx_images(path) -> np.ndarray:
    """Images from an IDX3 file, scaled to [0, 1], shape (n, rows, cols)."""
    raw = _read_idx(path)
    magic = int.from_bytes(raw[0:4], "big")
    if magic != 2051:
        raise ValueError(f"bad IDX image magic {magic}, expected 2051")
    n = int.from_bytes(raw[4:8], "big")
    rows = int.from_bytes(raw[8:12], "big")
    cols = int.from_bytes(raw[12:16], "big")
    data = np.frombuffer(raw, dtype=np.uint8, count=n * rows * cols, offset=16)
    return data.reshape(n, rows, cols).astype(np.float64) / 255.0


def load_idx_labels(path) -> np.ndarray:
    raw = _read_idx(path)
    magic = int.from_bytes(raw[0:4], "big")
    if magic != 2049:
        raise ValueError(f"bad IDX label magic {magic}, expected 2049")
    n = int.from_bytes(raw[4:8], "big")
    return np.frombuffer(raw, dtype=np.uint8, count=n, offset=8).astype(np.int64)


def load_idx_verification_set(images_path, labels_path, limit=None) -> VerificationSet:
    images = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise ValueError(
            f"{images.shape[0]} images but {labels.shape[0]} labels"
        )
    if limit is not None:
        images = images[:limit]
        labels = labels[:limit]
    return VerificationSet(
        images=images, labels=labels, n_classes=int(labels.max()) + 1
    )
