"""dataset.py のユニットテスト"""

import csv

import numpy as np
import pytest

from dataset import (
    DatasetStream,
    LabeledSample,
    average_expected_loss,
    class_amplitudes,
    dataset_ensemble,
    empirical_loss,
    export_dataset_csv,
    generate_sample,
    helstrom_povm,
    measurement_expected_loss,
    optimal_expected_loss,
    parity_povm,
    per_sample_expected_loss,
)
from simcore import StateVector


class TestClassAmplitudes:
    def test_class1_on_even_indices(self, rng):
        amps = class_amplitudes(3, rng.random(4), 1)
        assert np.linalg.norm(amps) == pytest.approx(1.0)
        assert np.count_nonzero(amps[1::2]) == 0

    def test_class2_and_3_support(self, rng):
        """φ₂/φ₃ は 2j + [j が偶数] に載る"""
        u = rng.random(4) + 0.1
        for kind in (2, 3):
            amps = class_amplitudes(3, u, kind)
            assert set(np.flatnonzero(amps)) == {1, 2, 5, 6}

    def test_class2_signs(self):
        """φ₂ は j が偶数の成分だけ符号が反転"""
        amps = class_amplitudes(3, np.ones(4), 2)
        assert np.allclose(amps[[1, 2, 5, 6]], 0.5 * np.array([-1, 1, -1, 1]))
        assert np.allclose(class_amplitudes(3, np.ones(4), 3)[[1, 2, 5, 6]], 0.5)


class TestGeneration:
    def test_labels(self, rng):
        for _ in range(20):
            sample = generate_sample(3, rng)
            is_class1 = np.count_nonzero(sample.state.amplitudes[1::2]) == 0
            assert sample.label == (1 if is_class1 else -1)

    def test_class_balance(self, rng):
        """ラベル +1 は約 1/3（4σ）"""
        n = 3000
        positives = sum(generate_sample(3, rng).label == 1 for _ in range(n))
        assert abs(positives - n / 3) <= 4 * np.sqrt(n * (1 / 3) * (2 / 3))

    def test_rejects_single_qubit(self, rng):
        with pytest.raises(ValueError):
            generate_sample(1, rng)

    def test_rejects_bad_label(self):
        with pytest.raises(ValueError):
            LabeledSample(StateVector.basis(2), 0)


class TestDatasetStream:
    def test_replayable(self):
        """同じ (seed, バッチ番号) からは同じバッチ"""
        first = DatasetStream(3, seed=4).batch(2, 10)
        second = DatasetStream(3, seed=4).batch(2, 10)
        assert all(np.array_equal(a.state.amplitudes, b.state.amplitudes) for a, b in zip(first, second))
        assert np.array_equal(first.labels, second.labels)

    def test_batches_differ(self):
        stream = DatasetStream(3, seed=4)
        a = stream.batch(0, 5)
        b = stream.batch(1, 5)
        v = stream.validation_batch(5)
        assert not np.array_equal(a[0].state.amplitudes, b[0].state.amplitudes)
        assert not np.array_equal(a[0].state.amplitudes, v[0].state.amplitudes)

    def test_max_batches(self):
        stream = DatasetStream(3, seed=4, max_batches=2)
        stream.batch(1, 3)
        with pytest.raises(RuntimeError):
            stream.batch(2, 3)

    def test_invalid_arguments(self):
        stream = DatasetStream(3, seed=4)
        with pytest.raises(ValueError):
            stream.batch(-1, 3)
        with pytest.raises(ValueError):
            stream.batch(0, 0)
        with pytest.raises(ValueError):
            DatasetStream(1, seed=0)

    def test_ensemble_weights(self, small_batch):
        ensemble = dataset_ensemble(small_batch)
        assert np.allclose(ensemble.weights, 1 / 8)
        assert list(ensemble.labels) == list(small_batch.labels)

    def test_export_csv(self, tmp_path):
        path = export_dataset_csv(DatasetStream(3, seed=2), 2, 4, tmp_path / "out" / "data.csv")
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
        assert rows[0][:3] == ["batch", "index", "label"]
        assert len(rows[0]) == 3 + 2 * 8
        assert len(rows) == 1 + 2 * 4
        assert rows[5][:2] == ["1", "0"]


class TestPovm:
    def test_parity_three_qubits(self):
        """d=3 はハミング重みが偶数の基底で Λ₊₁"""
        plus = parity_povm(3).operator(1)
        assert np.flatnonzero(np.diag(plus).real).tolist() == [0, 3, 5, 6]

    def test_parity_other_sizes(self):
        plus = parity_povm(4).operator(1)
        assert np.flatnonzero(np.diag(plus).real).tolist() == list(range(0, 16, 2))

    def test_helstrom_attains_bound(self, small_batch, lossfn):
        """Helstrom 測定の平均期待損失は最適損失に一致"""
        povm = helstrom_povm(small_batch)
        assert measurement_expected_loss(povm, small_batch, lossfn) == pytest.approx(
            optimal_expected_loss(small_batch), abs=1e-9
        )


class TestLosses:
    def test_optimal_is_lower_bound(self, q3l3, theta_q3l3, povm3, lossfn, small_batch):
        assert optimal_expected_loss(small_batch) <= average_expected_loss(
            q3l3, theta_q3l3, povm3, small_batch, lossfn
        ) + 1e-12

    def test_average_of_per_sample(self, q3l3, theta_q3l3, povm3, lossfn, small_batch):
        per_sample = [per_sample_expected_loss(q3l3, theta_q3l3, povm3, s, lossfn) for s in small_batch]
        assert average_expected_loss(q3l3, theta_q3l3, povm3, small_batch, lossfn) == pytest.approx(np.mean(per_sample))
        assert all(0.0 <= x <= 1.0 for x in per_sample)

    def test_empirical_matches_expected(self, q3l3, theta_q3l3, povm3, lossfn, small_batch, rng):
        """経験損失の平均が平均期待損失に近い（5σ）"""
        reps = 300
        values = [empirical_loss(q3l3, theta_q3l3, povm3, small_batch, rng) for _ in range(reps)]
        expected = average_expected_loss(q3l3, theta_q3l3, povm3, small_batch, lossfn)
        assert abs(np.mean(values) - expected) <= 5 * 0.5 / np.sqrt(reps * len(small_batch))

    def test_empty_batch(self, q3l3, theta_q3l3, povm3, lossfn):
        with pytest.raises(ValueError):
            average_expected_loss(q3l3, theta_q3l3, povm3, [], lossfn)
        with pytest.raises(ValueError):
            measurement_expected_loss(povm3, [], lossfn)
