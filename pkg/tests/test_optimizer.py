"""optimizer.py のユニットテスト"""

import logging

import numpy as np
import pytest

from dataset import DatasetStream, average_expected_loss, parity_povm
from gradient import SparseGradient
from metric import block_from_outcomes, embed_regularize, min_beta
from optimizer import (
    SAMPLES_PER_ITERATION,
    EnsembleLandscape,
    Landscape,
    OptimizerConfig,
    OptimizerKind,
    _dense_abs,
    _SampleFeed,
    abs_psd_2x2,
    initial_parameters,
    qnscd_step,
    qnscd_step_dense,
    run_2qnscd,
    run_exact_gd,
    run_exact_qngd,
    run_rqsgd,
)
from pqc import CoordPair, Layer, LayeredCircuit


class _Bowl(Landscape):
    """𝓛 = ½|θ|²、F = I"""

    def loss(self, theta):
        return 0.5 * float(theta @ theta)

    def gradient(self, theta):
        return np.array(theta, dtype=float)

    def metric(self, theta):
        return np.eye(len(theta))


class _Degenerate(_Bowl):
    def metric(self, theta):
        return np.diag([1.0, 0.0])


def _config(kind, **kwargs):
    values = {"kind": kind, "learning_rate": 0.05, "steps": 2, "iterations_per_step": 3, "seed": 11}
    values.update(kwargs)
    return OptimizerConfig(**values)


class TestAbsPsd:
    def test_diagonal(self):
        assert np.allclose(abs_psd_2x2(np.diag([-2.0, 3.0])), np.diag([2.0, 3.0]))

    def test_matches_eigendecomposition(self, rng):
        for _ in range(20):
            x = rng.normal(size=(2, 2))
            m = x + x.T
            assert np.allclose(abs_psd_2x2(m), _dense_abs(m), atol=1e-10)

    def test_zero(self):
        assert np.allclose(abs_psd_2x2(np.zeros((2, 2))), 0.0)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            abs_psd_2x2(np.array([[np.nan, 0.0], [0.0, 1.0]]))


class TestQnscdStep:
    def test_isotropic_block(self):
        """Z̃ = (2/(c(c−1)) + 2β/c)I、g = (2/c, −2/c)、η=0.1 → Δ = (−0.1, +0.1)"""
        c, beta = 9, 1.0
        pair = CoordPair(1, 4)
        block = (2 / (c * (c - 1)) + 2 * beta / c) * np.eye(2)
        grad = SparseGradient(pair, (2 / c, -2 / c), c)
        theta = np.zeros(c)
        new = qnscd_step(theta, pair, block, grad, 0.1, beta, c)
        assert new[1] == pytest.approx(-0.1)
        assert new[4] == pytest.approx(0.1)
        assert np.count_nonzero(new[[0, 2, 3, 5, 6, 7, 8]]) == 0

    def test_zero_gradient(self, rng):
        c = 9
        beta = min_beta(c) + 0.01
        pair = CoordPair(0, 5)
        estimate = embed_regularize(block_from_outcomes((1, -1), (1, 1), (-1, 1)), pair, c, beta)
        theta = rng.uniform(0, 2 * np.pi, c)
        new = qnscd_step(theta, pair, estimate.tilde_block(), SparseGradient(pair, (0.0, 0.0), c), 0.1, beta, c)
        assert np.array_equal(new, theta)

    def test_matches_dense_form(self, rng):
        """2×2 形式と c×c 形式の更新が一致"""
        c = 9
        beta = min_beta(c) + 0.01
        for outcomes in [((1, 1), (1, 1), (1, -1)), ((1, -1), (-1, -1), (1, 1)), ((-1, -1), (1, -1), (-1, 1))]:
            pair = CoordPair(2, 7)
            estimate = embed_regularize(block_from_outcomes(*outcomes), pair, c, beta)
            grad = SparseGradient(pair, tuple(rng.choice([-1.0, 0.0, 1.0], size=2)), c)
            theta = rng.uniform(0, 2 * np.pi, c)
            pairwise = qnscd_step(theta, pair, estimate.tilde_block(), grad, 0.03, beta, c)
            dense = qnscd_step_dense(theta, estimate, grad, 0.03)
            assert np.allclose(pairwise, dense, atol=1e-12)

    def test_singular_block(self):
        """正則化ブロックが特異なら β に言及して ValueError"""
        c, beta = 9, 0.3
        pair = CoordPair(0, 1)
        block = (2 * beta / c) * np.eye(2)
        with pytest.raises(ValueError, match="β"):
            qnscd_step(np.zeros(c), pair, block, SparseGradient(pair, (1.0, 1.0), c), 0.1, beta, c)


class TestOptimizerConfig:
    def test_parse_kind(self):
        assert OptimizerKind.parse("6-RQSGD") is OptimizerKind.RQSGD_6
        with pytest.raises(ValueError):
            OptimizerKind.parse("adam")

    def test_is_exact(self):
        assert OptimizerKind.EXACT_QNGD.is_exact
        assert OptimizerKind.EXACT_GD.is_exact
        assert not any(k.is_exact for k in (OptimizerKind.QNSCD_2, OptimizerKind.RQSGD_2, OptimizerKind.RQSGD_6))

    def test_string_kind_normalized(self):
        assert OptimizerConfig(kind="exact-GD").kind is OptimizerKind.EXACT_GD

    def test_batch_size(self):
        assert OptimizerConfig().batch_size == 600

    @pytest.mark.parametrize("kwargs", [
        {"learning_rate": -0.1},
        {"steps": -1},
        {"iterations_per_step": 0},
        {"beta": 0.0},
        {"metric_scale": 0.0},
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            OptimizerConfig(**kwargs)

    def test_default_beta(self):
        assert OptimizerConfig().resolve_beta(9) == pytest.approx(min_beta(9) + 0.01)

    def test_beta_below_threshold(self, caplog):
        """2-QNSCD は閾値以下の β を拒否してエラーログを残す"""
        config = OptimizerConfig(beta=0.5)
        with caplog.at_level(logging.ERROR), pytest.raises(ValueError):
            config.resolve_beta(9)
        assert any(r.levelno == logging.ERROR for r in caplog.records)

    def test_beta_ignored_for_baselines(self):
        assert OptimizerConfig(kind=OptimizerKind.RQSGD_2, beta=0.5).resolve_beta(9) == 0.5


class TestSampleFeed:
    def test_exhaustion(self, small_batch):
        feed = _SampleFeed(small_batch)
        assert len(feed.take(6)) == 6
        with pytest.raises(RuntimeError):
            feed.take(6)


class TestStochasticRuns:
    @pytest.fixture
    def stream(self):
        return DatasetStream(3, seed=5)

    def test_2qnscd_trace_shape(self, q3l3, stream, povm3, lossfn):
        trace = run_2qnscd(q3l3, stream, povm3, lossfn, _config(OptimizerKind.QNSCD_2))
        assert [r.step for r in trace.rows] == [0, 1, 2]
        assert [r.iteration for r in trace.rows] == [0, 3, 6]
        assert [r.samples_consumed for r in trace.rows] == [0, 18, 36]
        assert trace.samples_consumed == 2 * 3 * SAMPLES_PER_ITERATION
        for row in trace.rows:
            assert 0.0 <= row.loss <= 1.0
            assert 0.0 <= row.empirical_loss <= 1.0
            assert 0.0 <= row.optimal_loss <= row.loss + 1e-12

    def test_first_row_uses_initial_parameters(self, q3l3, stream, povm3, lossfn):
        """行0は θ⁽⁰⁾ をバッチ0で評価"""
        config = _config(OptimizerKind.QNSCD_2)
        trace = run_2qnscd(q3l3, stream, povm3, lossfn, config)
        theta0 = initial_parameters(q3l3, config.seed)
        assert np.array_equal(trace.rows[0].theta, theta0)
        expected = average_expected_loss(q3l3, theta0, povm3, stream.batch(0, config.batch_size), lossfn)
        assert trace.rows[0].loss == pytest.approx(expected)

    def test_deterministic(self, q3l3, stream, povm3, lossfn):
        config = _config(OptimizerKind.QNSCD_2)
        first = run_2qnscd(q3l3, stream, povm3, lossfn, config)
        second = run_2qnscd(q3l3, DatasetStream(3, seed=5), povm3, lossfn, config)
        assert np.array_equal(first.path, second.path)
        assert [r.empirical_loss for r in first.rows] == [r.empirical_loss for r in second.rows]

    def test_zero_learning_rate(self, q3l3, stream, povm3, lossfn):
        """η=0 なら θ は動かない"""
        trace = run_2qnscd(q3l3, stream, povm3, lossfn, _config(OptimizerKind.QNSCD_2, learning_rate=0.0))
        assert np.allclose(trace.path, trace.rows[0].theta)

    def test_zero_steps(self, q3l3, stream, povm3, lossfn):
        trace = run_2qnscd(q3l3, stream, povm3, lossfn, _config(OptimizerKind.QNSCD_2, steps=0))
        assert len(trace.rows) == 1
        assert trace.samples_consumed == 0

    def test_trace_iterations(self, q3l3, stream, povm3, lossfn):
        config = _config(OptimizerKind.QNSCD_2, trace_iterations=True)
        trace = run_2qnscd(q3l3, stream, povm3, lossfn, config)
        assert [r.iteration for r in trace.iteration_rows] == [1, 2, 3, 4, 5, 6]
        assert np.array_equal(trace.iteration_rows[-1].theta, trace.final.theta)

    def test_stream_exhausted(self, q3l3, povm3, lossfn):
        """バッチが尽きたら RuntimeError"""
        stream = DatasetStream(3, seed=5, max_batches=1)
        with pytest.raises(RuntimeError):
            run_2qnscd(q3l3, stream, povm3, lossfn, _config(OptimizerKind.QNSCD_2, steps=1))

    def test_same_budget_across_optimizers(self, q3l3, stream, povm3, lossfn):
        """3つの確率的最適化器は同じサンプル数を消費"""
        consumed = {
            run_2qnscd(q3l3, stream, povm3, lossfn, _config(OptimizerKind.QNSCD_2)).samples_consumed,
            run_rqsgd(q3l3, stream, povm3, lossfn, _config(OptimizerKind.RQSGD_2)).samples_consumed,
            run_rqsgd(q3l3, stream, povm3, lossfn, _config(OptimizerKind.RQSGD_6)).samples_consumed,
        }
        assert consumed == {36}

    def test_rqsgd_moves_at_most_two_coordinates(self, q3l3, stream, povm3, lossfn):
        config = _config(OptimizerKind.RQSGD_2, steps=1, iterations_per_step=1, trace_iterations=True)
        trace = run_rqsgd(q3l3, stream, povm3, lossfn, config)
        moved = np.count_nonzero(trace.final.theta - trace.rows[0].theta)
        assert moved <= 2

    def test_rqsgd_rejects_other_kinds(self, q3l3, stream, povm3, lossfn):
        with pytest.raises(ValueError):
            run_rqsgd(q3l3, stream, povm3, lossfn, _config(OptimizerKind.QNSCD_2))

    def test_six_coordinates_need_six_parameters(self, lossfn):
        circuit = LayeredCircuit(num_qubits=2, layers=(Layer(axes=("Y", "Y")), Layer(axes=("Z", "Z"))))
        with pytest.raises(ValueError):
            run_rqsgd(circuit, DatasetStream(2, seed=0), parity_povm(2), lossfn, _config(OptimizerKind.RQSGD_6))


class TestDeterministicRuns:
    def test_identity_metric_matches_gd(self):
        """F = I なら QNGD と GD は同じ軌跡"""
        theta0 = np.array([1.0, -2.0, 0.5])
        qngd = run_exact_qngd(_Bowl(), theta0, 0.1, 5)
        gd = run_exact_gd(_Bowl(), theta0, 0.1, 5)
        assert np.allclose(qngd.path, gd.path)
        assert np.allclose(gd.final.theta, theta0 * 0.9**5)
        assert gd.kind is OptimizerKind.EXACT_GD
        assert qngd.kind is OptimizerKind.EXACT_QNGD

    def test_pseudo_inverse_fallback(self, caplog):
        """特異な計量は警告を出して擬似逆行列で解く"""
        with caplog.at_level(logging.WARNING):
            direction = _Degenerate().natural_direction(np.zeros(2), np.array([1.0, 1.0]))
        assert np.allclose(direction, [1.0, 0.0])
        assert any("擬似逆行列" in r.getMessage() for r in caplog.records)

    def test_ensemble_landscape_gd(self, q3l3, theta_q3l3, povm3, lossfn, small_batch):
        landscape = EnsembleLandscape(q3l3, povm3, small_batch, lossfn)
        trace = run_exact_gd(landscape, theta_q3l3, 0.05, 3)
        assert len(trace.rows) == 4
        assert trace.rows[0].loss == pytest.approx(average_expected_loss(q3l3, theta_q3l3, povm3, small_batch, lossfn))
        assert trace.final.loss <= trace.rows[0].loss + 1e-12
