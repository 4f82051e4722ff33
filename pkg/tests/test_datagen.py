import numpy as np
import pytest

import bnadapt as ba
from bnadapt.datagen import (
    CorruptionSpec,
    DatasetSpec,
    apply_corruption,
    gen_dataset,
    load_split_csv,
    nearest_centroid_accuracy,
    sample_stream,
    save_split_csv,
    SEVERITIES,
    DEFAULT_MAGNITUDES,
)
from bnadapt.exceptions import ConfigError


class TestGenDataset:
    def test_same_seed_identical_bytes(self):
        spec = DatasetSpec(train_samples=64, test_samples=32)
        a, b = gen_dataset(spec), gen_dataset(spec)
        assert a.x_train.tobytes() == b.x_train.tobytes()
        assert a.y_train.tobytes() == b.y_train.tobytes()
        assert a.x_test.tobytes() == b.x_test.tobytes()

    def test_large_separation_makes_oracle_near_perfect(self):
        spec = DatasetSpec(train_samples=64, test_samples=400, separation=30.0)
        ds = gen_dataset(spec)
        assert nearest_centroid_accuracy(ds, ds.x_test, ds.y_test) == 1.0

    def test_zero_samples_gives_empty_splits(self):
        ds = gen_dataset(DatasetSpec(train_samples=0, test_samples=0))
        assert ds.x_train.shape == (0, 20)
        assert ds.y_test.shape == (0, 4)

    def test_separation_must_be_positive(self):
        with pytest.raises(ValueError):
            DatasetSpec(separation=0.0)

    def test_streams_differ_by_seed_but_share_centroids(self):
        spec = DatasetSpec()
        x1, _ = sample_stream(spec, 16, seed=1)
        x2, _ = sample_stream(spec, 16, seed=2)
        assert not np.array_equal(x1, x2)
        x1b, y1b = sample_stream(spec, 16, seed=1)
        assert x1.tobytes() == x1b.tobytes()


class TestApplyCorruption:
    def test_none_is_identity(self):
        x = np.random.default_rng(0).normal(size=(8, 5))
        out = apply_corruption(x, CorruptionSpec(kind="none"))
        np.testing.assert_array_equal(out, x)

    def test_gaussian_sigma_zero_is_identity(self):
        x = np.random.default_rng(0).normal(size=(8, 5))
        spec = CorruptionSpec(kind="gaussian-noise", severity="easy",
                              magnitudes=(0.0 + 1e-300, 1.0, 2.0))
        out = apply_corruption(x, spec)
        np.testing.assert_allclose(out, x, atol=1e-290)

    def test_mean_shift_moves_sample_mean_exactly(self):
        x = np.random.default_rng(0).normal(size=(50, 5))
        spec = CorruptionSpec(kind="mean-shift", severity="mid")
        delta = spec.magnitude
        out = apply_corruption(x, spec)
        assert abs(float(np.mean(out - x)) - delta) < 1e-12

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            CorruptionSpec(kind="motion-blur")

    def test_magnitudes_must_strictly_increase(self):
        with pytest.raises(ConfigError):
            CorruptionSpec(kind="mean-shift", magnitudes=(2.0, 1.0, 3.0))

    def test_labels_never_touched(self):
        # corruption takes features only; the API gives it no label access
        x = np.random.default_rng(0).normal(size=(8, 5))
        before = x.copy()
        apply_corruption(x, CorruptionSpec(kind="scale", severity="hard"))
        np.testing.assert_array_equal(x, before)

    def test_corruption_seeded(self):
        x = np.zeros((4, 3))
        s = CorruptionSpec(kind="gaussian-noise", severity="hard", seed=5)
        a = apply_corruption(x, s)
        b = apply_corruption(x, s)
        assert a.tobytes() == b.tobytes()


def domain_gap(x_clean, x_corr):
    """Frechet-style distance between pooled feature moments."""
    mu0, mu1 = x_clean.mean(axis=0), x_corr.mean(axis=0)
    s0, s1 = x_clean.std(axis=0), x_corr.std(axis=0)
    return float(np.sum((mu0 - mu1) ** 2) + np.sum((s0 - s1) ** 2))


@pytest.mark.parametrize("kind", ["gaussian-noise", "mean-shift", "scale", "saturate-clip"])
def test_domain_gap_monotone_in_severity(kind):
    x, _ = sample_stream(DatasetSpec(), 400, seed=3)
    gaps = []
    for sev in SEVERITIES:
        xc = apply_corruption(x, CorruptionSpec(kind=kind, severity=sev, seed=1))
        gaps.append(domain_gap(x, xc))
    assert gaps[0] < gaps[1] < gaps[2]


def test_frozen_model_loses_25_points_at_hard(default_dataset, source_checkpoint):
    ds = default_dataset
    clean = ba.accuracy(ba.forward(source_checkpoint, ds.x_test, "inference"), ds.y_test)
    for kind in DEFAULT_MAGNITUDES:
        xc = apply_corruption(ds.x_test, CorruptionSpec(kind=kind, severity="hard", seed=0))
        acc = ba.accuracy(ba.forward(source_checkpoint, xc, "inference"), ds.y_test)
        assert clean - acc >= 0.25, f"{kind} hard only dropped {clean - acc:.3f}"


class TestCsvRoundtrip:
    def test_roundtrip(self, tmp_path):
        ds = gen_dataset(DatasetSpec(train_samples=20, test_samples=5))
        path = tmp_path / "split.csv"
        save_split_csv(path, ds.x_train, ds.y_train)
        x, y = load_split_csv(path)
        assert x.tobytes() == ds.x_train.tobytes()
        assert y.tobytes() == np.asarray(ds.y_train, dtype=np.int64).tobytes()

    def test_header_layout(self, tmp_path):
        ds = gen_dataset(DatasetSpec(train_samples=2, test_samples=1))
        path = tmp_path / "split.csv"
        save_split_csv(path, ds.x_train, ds.y_train)
        header = path.read_text().splitlines()[0].split(",")
        assert header[:2] == ["f0", "f1"]
        assert header[-4:] == ["label_q0", "label_q1", "label_q2", "label_q3"]
