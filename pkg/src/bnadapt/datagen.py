"""Seeded synthetic source data and feature-space corruptions.

Each query owns a contiguous block of feature coordinates; within a block the
class label selects one of C Gaussian cluster centers. That keeps every
query's label decodable from the features by a nearest-centroid rule, so a
trained classifier can reach near-perfect clean accuracy.

Corruptions distort features (never labels) at three severities with
strictly increasing magnitudes, standing in for the pixel-space corruption
suites that full-scale perception benchmarks use.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError

CORRUPTION_KINDS = ("none", "gaussian-noise", "mean-shift", "scale", "saturate-clip")
SEVERITIES = ("easy", "mid", "hard")

# Calibrated once against the default dataset and model so the frozen source
# model loses at least 25 accuracy points at hard severity, then frozen here.
# Magnitudes are corruption strengths and strictly increase with severity;
# scale multiplies features by 1/m and saturate-clip clamps to +/- CLIP_BASE/m,
# so larger magnitudes always corrupt more.
DEFAULT_MAGNITUDES = {
    "gaussian-noise": (0.5, 1.0, 2.0),
    "mean-shift": (1.0, 2.0, 2.5),
    "scale": (2.0, 5.0, 10.0),
    "saturate-clip": (2.0, 4.0, 8.0),
}
CLIP_BASE = 2.0


@dataclass(frozen=True)
class DatasetSpec:
    input_dim: int = 20
    n_classes: int = 5
    n_queries: int = 4
    train_samples: int = 2048
    test_samples: int = 512
    separation: float = 4.0
    seed: int = 7

    def __post_init__(self):
        if self.separation <= 0:
            raise ValueError("separation must be positive")
        if self.input_dim < self.n_queries:
            raise ValueError("need at least one feature per query")


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    severity: str = "hard"
    magnitudes: tuple[float, float, float] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in CORRUPTION_KINDS:
            raise ConfigError(f"unknown corruption kind {self.kind!r}")
        if self.severity not in SEVERITIES:
            raise ConfigError(f"unknown severity {self.severity!r}")
        mags = self.magnitudes
        if mags is None and self.kind != "none":
            mags = DEFAULT_MAGNITUDES[self.kind]
        if mags is not None:
            mags = tuple(float(m) for m in mags)
            if not (mags[0] < mags[1] < mags[2]):
                raise ConfigError("magnitudes must strictly increase easy -> mid -> hard")
        object.__setattr__(self, "magnitudes", mags)

    @property
    def magnitude(self) -> float:
        if self.kind == "none":
            return 0.0
        return self.magnitudes[SEVERITIES.index(self.severity)]


@dataclass
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    centroids: list[np.ndarray] = field(repr=False, default_factory=list)
    blocks: list[np.ndarray] = field(repr=False, default_factory=list)


def _feature_blocks(spec: DatasetSpec) -> list[np.ndarray]:
    return np.array_split(np.arange(spec.input_dim), spec.n_queries)


def _centroids(spec: DatasetSpec) -> list[np.ndarray]:
    """One (classes x block_size) centroid matrix per query, norm = separation.

    When the block has room, centroids are mutually orthogonal so the
    pairwise distance (and with it the achievable accuracy) is controlled by
    ``separation`` alone; otherwise random unit directions are used.
    """
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0]))
    out = []
    for block in _feature_blocks(spec):
        c = rng.standard_normal((spec.n_classes, len(block)))
        if spec.n_classes <= len(block):
            q, _ = np.linalg.qr(c.T)
            c = q.T
        else:
            c /= np.linalg.norm(c, axis=1, keepdims=True)
        out.append(c * spec.separation)
    return out


def _draw(spec: DatasetSpec, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    blocks = _feature_blocks(spec)
    cents = _centroids(spec)
    y = rng.integers(0, spec.n_classes, size=(n, spec.n_queries))
    x = np.empty((n, spec.input_dim))
    for q, block in enumerate(blocks):
        x[:, block] = cents[q][y[:, q]] + rng.standard_normal((n, len(block)))
    return x, y


def gen_dataset(spec: DatasetSpec) -> Dataset:
    """Seeded train and test splits; identical spec gives identical bytes."""
    rng_train = np.random.default_rng(np.random.SeedSequence([spec.seed, 1]))
    rng_test = np.random.default_rng(np.random.SeedSequence([spec.seed, 2]))
    x_train, y_train = _draw(spec, spec.train_samples, rng_train)
    x_test, y_test = _draw(spec, spec.test_samples, rng_test)
    return Dataset(x_train, y_train, x_test, y_test,
                   centroids=_centroids(spec), blocks=_feature_blocks(spec))


def sample_stream(spec: DatasetSpec, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Fresh labeled draw from the source distribution under its own seed.

    Labels are returned for scoring only; adaptation never sees them.
    """
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 3, seed]))
    return _draw(spec, n, rng)


def apply_corruption(x: np.ndarray, spec: CorruptionSpec) -> np.ndarray:
    """Distort features according to kind and severity; labels untouched."""
    x = np.asarray(x, dtype=np.float64)
    if spec.kind == "none":
        return x.copy()
    m = spec.magnitude
    if spec.kind == "gaussian-noise":
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 4]))
        return x + rng.normal(0.0, m, size=x.shape)
    if spec.kind == "mean-shift":
        return x + m
    if spec.kind == "scale":
        return x * (1.0 / m)
    if spec.kind == "saturate-clip":
        bound = CLIP_BASE / m
        return np.clip(x, -bound, bound)
    raise ConfigError(f"unknown corruption kind {spec.kind!r}")


def nearest_centroid_accuracy(ds: Dataset, x: np.ndarray, y: np.ndarray) -> float:
    """Independent decode oracle: per query, pick the closest block centroid."""
    correct = 0
    for q, block in enumerate(ds.blocks):
        d = np.linalg.norm(x[:, None, block] - ds.centroids[q][None, :, :], axis=2)
        correct += int(np.sum(np.argmin(d, axis=1) == y[:, q]))
    return correct / (x.shape[0] * len(ds.blocks))


# ---------------------------------------------------------------------------
# CSV persistence: header of feature columns then one label column per query


def save_split_csv(path, x: np.ndarray, y: np.ndarray) -> None:
    x = np.asarray(x)
    y = np.asarray(y)
    header = [f"f{i}" for i in range(x.shape[1])] + [f"label_q{q}" for q in range(y.shape[1])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row_x, row_y in zip(x, y):
            writer.writerow([repr(float(v)) for v in row_x] + [str(int(v)) for v in row_y])


def load_split_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n_feat = sum(1 for c in header if c.startswith("f"))
        n_lab = len(header) - n_feat
        xs, ys = [], []
        for row in reader:
            xs.append([float(v) for v in row[:n_feat]])
            ys.append([int(v) for v in row[n_feat:]])
    return np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.int64)
