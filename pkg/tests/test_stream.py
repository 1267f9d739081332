import math
from collections import Counter

import numpy as np
import pytest

from limes.model import LinearModel, adapt_bias, posterior
from limes.stream import (
    DataValidationError,
    GeneratorConfig,
    SplitSpec,
    StreamDataset,
    TimeStepBatch,
    bayes_posterior,
    bayes_predict,
    generate_synthetic,
    generator_from_metadata,
    load_dataset,
    save_dataset,
    split_train_eval,
    subsample_realization,
    true_prior,
)


def small_config(**kw):
    base = dict(steps=6, examples_per_step=40, period=4, seed=3)
    base.update(kw)
    return GeneratorConfig(**base)


def batch_of(n, t=1, d=2, L=3):
    X = np.arange(n * d, dtype=float).reshape(n, d)
    return TimeStepBatch(t, X, np.arange(n) % L)


def rows(batch):
    return Counter((tuple(x), y) for x, y in zip(batch.features.tolist(), batch.labels.tolist()))


class TestTruePrior:
    def test_zero_amplitude_is_uniform(self):
        cfg = GeneratorConfig(prior_amplitudes=[0, 0, 0])
        for t in range(1, 30):
            np.testing.assert_array_equal(true_prior(cfg, t), [1 / 3] * 3)

    def test_periodic_bitwise(self):
        cfg = GeneratorConfig(period=24, prior_amplitudes=[1.3, 0.2, 2.0])
        for t in range(1, 100):
            assert np.array_equal(true_prior(cfg, t), true_prior(cfg, t + 24))
            assert np.all(true_prior(cfg, t) > 0)

    def test_two_class_reference(self):
        cfg = GeneratorConfig(num_classes=2, period=24, prior_amplitudes=[1, 0], prior_phases=[math.pi / 2, 0])
        # sin(2π + π/2) = 1 at t = P, so the prior is the logistic of 1
        expected = 1 / (1 + math.exp(-1))
        np.testing.assert_allclose(true_prior(cfg, 24), [expected, 1 - expected], atol=1e-12)
        np.testing.assert_allclose(true_prior(cfg, 24), [0.731059, 0.268941], atol=1e-6)


class TestGenerator:
    def test_label_frequencies_track_prior(self):
        cfg = GeneratorConfig(steps=3, examples_per_step=100_000, seed=1)
        data = generate_synthetic(cfg)
        for b in data.batches:
            freq = np.bincount(b.labels, minlength=3) / len(b)
            assert np.max(np.abs(freq - true_prior(cfg, b.t))) <= 0.01

    def test_degenerate_noise(self):
        # non-zero means: noise of order 1e-300 is absorbed by rounding
        cfg = small_config(class_stddev=1e-300, class_means=[[1.0, 2.0], [3.0, -1.0], [-2.0, 0.5]])
        data = generate_synthetic(cfg)
        for b in data.batches:
            np.testing.assert_array_equal(b.features, cfg.class_means[b.labels])

    def test_deterministic(self):
        assert generate_synthetic(small_config()) == generate_synthetic(small_config())
        assert generate_synthetic(small_config()) != generate_synthetic(small_config(seed=4))

    def test_class_conditionals_stationary(self):
        cfg = GeneratorConfig(steps=24, examples_per_step=4000, seed=2, class_stddev=0.5)
        data = generate_synthetic(cfg)
        early = [b for b in data.batches if b.t <= 12]
        late = [b for b in data.batches if b.t > 12]
        for y in range(3):
            a = np.concatenate([b.features[b.labels == y] for b in early])
            c = np.concatenate([b.features[b.labels == y] for b in late])
            np.testing.assert_allclose(a.mean(axis=0), cfg.class_means[y], atol=0.03)
            np.testing.assert_allclose(c.mean(axis=0), cfg.class_means[y], atol=0.03)
            np.testing.assert_allclose(a.std(axis=0), 0.5, atol=0.03)

    @pytest.mark.parametrize(
        "kwargs, field",
        [
            (dict(class_stddev=0.0), "class_stddev"),
            (dict(class_stddev=-1.0), "class_stddev"),
            (dict(examples_per_step=2), "examples_per_step"),
            (dict(class_means=[[0, 0]]), "class_means"),
            (dict(num_classes=1), "num_classes"),
        ],
    )
    def test_invalid_config(self, kwargs, field):
        with pytest.raises(ValueError, match=field):
            GeneratorConfig(**kwargs)


class TestBayes:
    def test_symmetric_point(self):
        cfg = GeneratorConfig(prior_amplitudes=[0, 0, 0])
        # the origin is equidistant from the default means on the unit circle
        np.testing.assert_allclose(bayes_posterior(cfg, [0.0, 0.0], 5), [1 / 3] * 3, atol=1e-15)

    def test_far_separated_means(self):
        means = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
        cfg = GeneratorConfig(class_means=means, class_stddev=1.0, prior_amplitudes=[2.0, 2.0, 2.0])
        for t in range(1, 25):
            for k in range(3):
                assert bayes_posterior(cfg, means[k], t)[k] >= 1 - 1e-9

    def test_prior_reweighting_identity(self):
        rng = np.random.default_rng(0)
        cfg = GeneratorConfig(prior_amplitudes=[1.5, 0.5, 2.5])
        for _ in range(200):
            x = rng.normal(size=2)
            t, s = rng.integers(1, 25, size=2)
            p, q = true_prior(cfg, t), true_prior(cfg, s)
            reweighted = bayes_posterior(cfg, x, t) * q / p
            np.testing.assert_allclose(bayes_posterior(cfg, x, s), reweighted / reweighted.sum(), atol=1e-12, rtol=0)

    def test_bayes_is_an_adapted_log_linear_model(self):
        cfg = GeneratorConfig(prior_amplitudes=[1.0, 0.3, 2.0], class_stddev=0.8)
        var = cfg.class_stddev**2
        base = LinearModel(cfg.class_means.T / var, -np.sum(cfg.class_means**2, axis=1) / (2 * var))
        uniform = np.full(3, 1 / 3)
        rng = np.random.default_rng(1)
        for t in range(1, 25):
            model = adapt_bias(base, uniform, true_prior(cfg, t))
            X = rng.normal(size=(20, 2))
            np.testing.assert_allclose(posterior(model, X), bayes_posterior(cfg, X, t), atol=1e-12)
            np.testing.assert_array_equal(np.argmax(posterior(model, X), axis=1), bayes_predict(cfg, X, t))


class TestSplit:
    def test_sizes(self):
        train, ev = split_train_eval(batch_of(10), SplitSpec(0.8, seed=1))
        assert (len(train), len(ev)) == (8, 2)

    @pytest.mark.parametrize("n", [2, 3, 7, 15, 48, 60, 101])
    def test_partition(self, n):
        b = batch_of(n)
        train, ev = split_train_eval(b, SplitSpec(0.8, seed=5))
        assert len(train) == min(math.ceil(round(0.8 * n, 9)), n - 1)
        assert len(ev) >= 1
        assert rows(train) + rows(ev) == rows(b)
        assert train.t == ev.t == b.t

    def test_deterministic(self):
        b = batch_of(30)
        a1, e1 = split_train_eval(b, SplitSpec(seed=9, realization=2))
        a2, e2 = split_train_eval(b, SplitSpec(seed=9, realization=2))
        assert a1 == a2 and e1 == e2
        a3, _ = split_train_eval(b, SplitSpec(seed=9, realization=3))
        assert a3 != a1

    def test_too_small(self):
        with pytest.raises(DataValidationError):
            split_train_eval(batch_of(1), SplitSpec())

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            SplitSpec(1.0)


class TestSubsample:
    def test_identity(self):
        data = generate_synthetic(small_config())
        assert subsample_realization(data, 1, 0) == data

    def test_positions(self):
        data = StreamDataset(3, 2, [batch_of(25)])
        sub = subsample_realization(data, 10, 3)
        np.testing.assert_array_equal(sub.batches[0].features, batch_of(25).features[[3, 13, 23]])

    def test_residue_classes_partition(self):
        data = generate_synthetic(small_config())
        parts = [subsample_realization(data, 10, r) for r in range(10)]
        for i, b in enumerate(data.batches):
            total = Counter()
            for p in parts:
                assert p.batches[i].t == b.t
                total += rows(p.batches[i])
            assert total == rows(b)

    def test_offset_range(self):
        data = generate_synthetic(small_config())
        with pytest.raises(ValueError):
            subsample_realization(data, 10, 10)

    def test_split_of_realization_is_reproducible(self):
        data = generate_synthetic(small_config(examples_per_step=100))
        for r in range(3):
            sub = subsample_realization(data, 10, r)
            for b in sub.batches:
                train, ev = split_train_eval(b, SplitSpec(seed=1, realization=r))
                again = split_train_eval(subsample_realization(data, 10, r).batches[b.t - 1], SplitSpec(seed=1, realization=r))
                assert rows(train) == rows(again[0]) and rows(ev) == rows(again[1])


class TestDatasetIO:
    def test_round_trip(self, tmp_path):
        data = generate_synthetic(small_config())
        save_dataset(data, tmp_path / "d.csv")
        back = load_dataset(tmp_path / "d.csv")
        assert back == data
        assert generator_from_metadata(back).class_stddev == data.metadata["class_stddev"]
        assert (tmp_path / "d.csv").read_text().startswith("t,y,f0,f1\n")

    def test_round_trip_plain(self, tmp_path):
        data = StreamDataset(3, 2, [batch_of(5, t=1), batch_of(4, t=2)], metadata={"period": 2})
        save_dataset(data, tmp_path / "d.csv")
        assert load_dataset(tmp_path / "d.csv") == data
        assert generator_from_metadata(data) is None

    def _write(self, tmp_path, body, manifest="num_classes=3\nfeature_dim=2\n"):
        (tmp_path / "d.csv").write_text(body)
        (tmp_path / "d.manifest").write_text(manifest)
        return tmp_path / "d.csv"

    def test_label_out_of_range(self, tmp_path):
        path = self._write(tmp_path, "t,y,f0,f1\n1,0,0.1,0.2\n1,3,0.1,0.2\n")
        with pytest.raises(DataValidationError, match=r"d.csv:3: label 3"):
            load_dataset(path)

    def test_empty_file(self, tmp_path):
        with pytest.raises(DataValidationError, match="empty"):
            load_dataset(self._write(tmp_path, ""))
        with pytest.raises(DataValidationError, match="no data"):
            load_dataset(self._write(tmp_path, "t,y,f0,f1\n"))

    @pytest.mark.parametrize(
        "body, match",
        [
            ("t,y,f0,f1\n1,0,0.1\n", ":2: expected 4 columns"),
            ("t,y,f0,f1\n1,0,0.1,nan\n", ":2: non-finite"),
            ("t,y,f0,f1\n1,0,0.1,x\n", ":2:"),
            ("t,y,f0,f1\n1,0,0.1,0.2\n3,0,0.1,0.2\n", ":3: time step 3 follows 1"),
            ("t,y,f0,f1\n2,0,0.1,0.2\n1,0,0.1,0.2\n", ":3: time step 1 follows 2"),
            ("t,y,f0\n1,0,0.1\n", ":1: header"),
        ],
    )
    def test_malformed(self, tmp_path, body, match):
        with pytest.raises(DataValidationError, match=match):
            load_dataset(self._write(tmp_path, body))

    def test_missing_manifest_key(self, tmp_path):
        with pytest.raises(DataValidationError, match="feature_dim"):
            load_dataset(self._write(tmp_path, "t,y,f0,f1\n1,0,0,0\n", manifest="num_classes=3\n"))

    def test_non_consecutive_batches(self):
        with pytest.raises(DataValidationError):
            StreamDataset(3, 2, [batch_of(3, t=1), batch_of(3, t=3)])
