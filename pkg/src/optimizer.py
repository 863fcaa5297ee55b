"""最適化器 - 2-QNSCD、RQSGD ベースライン、厳密 QNGD / GD

確率的最適化器は1反復あたり6サンプルを消費し、100反復（600サンプル）ごとに1ステップとして記録する。
"""

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterator

import numpy as np
from scipy import linalg as sla

from dataset import (
    Batch,
    DatasetStream,
    LabeledSample,
    average_expected_loss,
    dataset_ensemble,
    empirical_loss,
    optimal_expected_loss,
)
from gradient import (
    LossFunction,
    SparseGradient,
    estimate_coords_gradient,
    estimate_pair_gradient,
    estimate_partial,
    exact_expected_gradient,
)
from metric import MetricEstimate, exact_eqfim, metric_estimate_from_shots, min_beta
from pqc import CoordPair, LayeredCircuit, draw_coord_pair, random_parameters
from simcore import Povm

logger = logging.getLogger(__name__)

SAMPLES_PER_ITERATION = 6
PINV_THRESHOLD = 1e-10
SINGULAR_BLOCK_TOL = 1e-14

# 乱数ストリームのキー
_OPTIMIZER_STREAM = 1
_INIT_STREAM = 2
EVAL_STREAM = 3


class OptimizerKind(str, Enum):
    QNSCD_2 = "2-QNSCD"
    RQSGD_2 = "2-RQSGD"
    RQSGD_6 = "6-RQSGD"
    EXACT_QNGD = "exact-QNGD"
    EXACT_GD = "exact-GD"

    @property
    def is_exact(self) -> bool:
        """厳密な勾配・計量を使う参照用（サンプルを消費しない）"""
        return self in (OptimizerKind.EXACT_QNGD, OptimizerKind.EXACT_GD)

    @classmethod
    def parse(cls, value: "str | OptimizerKind") -> "OptimizerKind":
        try:
            return cls(value)
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise ValueError(f"不明な最適化器です: {value!r} (候補: {choices})") from None


@dataclass(frozen=True)
class OptimizerConfig:
    """最適化の設定"""

    kind: OptimizerKind = OptimizerKind.QNSCD_2
    learning_rate: float = 2.5e-3
    beta: float | None = None
    steps: int = 150
    iterations_per_step: int = 100
    seed: int = 0
    metric_scale: float = 1.0
    trace_iterations: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", OptimizerKind.parse(self.kind))
        if self.learning_rate < 0:
            raise ValueError(f"学習率は非負である必要があります: {self.learning_rate}")
        if self.steps < 0 or self.iterations_per_step <= 0:
            raise ValueError(f"ステップ数が不正です: steps={self.steps}, iterations={self.iterations_per_step}")
        if self.beta is not None and self.beta <= 0:
            raise ValueError(f"β は正である必要があります: {self.beta}")
        if self.metric_scale <= 0:
            raise ValueError(f"計量のスケールは正である必要があります: {self.metric_scale}")

    @property
    def batch_size(self) -> int:
        """N = 6 × 反復数"""
        return SAMPLES_PER_ITERATION * self.iterations_per_step

    def resolve_beta(self, c: int) -> float:
        """β を確定（未指定なら min_beta(c)+0.01）。閾値以下は拒否"""
        threshold = min_beta(c)
        beta = threshold + 0.01 if self.beta is None else self.beta
        if self.kind is OptimizerKind.QNSCD_2 and beta <= threshold:
            logger.error("β=%.4f は閾値 min_beta(%d)=%.4f 以下です", beta, c, threshold)
            raise ValueError(f"β={beta} は min_beta(c={c})={threshold:.4f} より大きくする必要があります")
        return beta


@dataclass
class TraceRow:
    """1ステップ（または1反復）分の記録"""

    step: int
    iteration: int
    theta: np.ndarray
    loss: float
    empirical_loss: float | None = None
    optimal_loss: float | None = None
    samples_consumed: int = 0
    wall_ms: float = 0.0


@dataclass
class TrainingTrace:
    """最適化の軌跡"""

    kind: OptimizerKind
    rows: list[TraceRow] = field(default_factory=list)
    iteration_rows: list[TraceRow] = field(default_factory=list)

    @property
    def final(self) -> TraceRow:
        return self.rows[-1]

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.rows])

    @property
    def path(self) -> np.ndarray:
        return np.array([r.theta for r in self.rows])

    @property
    def samples_consumed(self) -> int:
        return self.rows[-1].samples_consumed if self.rows else 0


# =============================================================================
# 2×2 の更新
# =============================================================================

def abs_psd_2x2(m: np.ndarray) -> np.ndarray:
    """|m| = (mᵀm)^{1/2} の閉形式

    2×2 の半正定値 P について √P = (P + √det(P)·I) / √(tr P + 2√det(P))。
    """
    mat = np.asarray(m, dtype=float)
    if mat.shape != (2, 2) or not np.isfinite(mat).all():
        raise ValueError(f"有限な 2×2 行列が必要です: {mat}")
    p = mat.T @ mat
    s = abs(np.linalg.det(mat))
    t = np.sqrt(np.trace(p) + 2.0 * s)
    if t == 0.0:
        return np.zeros((2, 2))
    root = (p + s * np.eye(2)) / t
    return 0.5 * (root + root.T)


def qnscd_step(
    theta: np.ndarray,
    coord_pair: CoordPair,
    block: np.ndarray,
    sparse_grad: SparseGradient,
    eta: float,
    beta: float,
    c: int,
    scale: float = 1.0,
) -> np.ndarray:
    """2×2 形式の更新: Δ = −η/(c−1) · |Z̃_block − (2β/c)I₂|⁻¹ [g_ap, g_bq]ᵀ

    (c−1) による正規化は内部で行うので、η は c×c 形式と同じ値を渡す。
    """
    regularized = np.asarray(block, dtype=float) - (2.0 * beta / c) * np.eye(2)
    if abs(np.linalg.det(regularized)) < SINGULAR_BLOCK_TOL:
        raise ValueError(f"正則化ブロックが特異です。β={beta} が小さすぎます (min_beta={min_beta(c):.4f})")
    g = np.array(sparse_grad.values, dtype=float)
    delta = np.linalg.solve(abs_psd_2x2(regularized), g)
    new_theta = np.array(theta, dtype=float, copy=True)
    new_theta[[coord_pair.first, coord_pair.second]] -= eta * scale / (c - 1) * delta
    return new_theta


def _dense_abs(m: np.ndarray) -> np.ndarray:
    """対称行列の |m| = V|Λ|Vᵀ"""
    w, v = sla.eigh(m)
    return (v * np.abs(w)) @ v.T


def qnscd_step_dense(
    theta: np.ndarray,
    estimate: MetricEstimate,
    sparse_grad: SparseGradient,
    eta: float,
    scale: float = 1.0,
) -> np.ndarray:
    """c×c 形式の更新: θ′ = θ − η|Z̄|⁻¹ g（照合用）"""
    zbar = estimate.materialize()
    g = sparse_grad.materialize()
    return np.asarray(theta, dtype=float) - eta * scale * np.linalg.solve(_dense_abs(zbar), g)


# =============================================================================
# 確率的最適化ループ
# =============================================================================

class _SampleFeed:
    """バッチからサンプルを順に取り出す"""

    def __init__(self, batch: Batch):
        self._iter: Iterator[LabeledSample] = iter(batch)
        self.consumed = 0

    def take(self, k: int) -> list[LabeledSample]:
        out = []
        for _ in range(k):
            try:
                out.append(next(self._iter))
            except StopIteration:
                raise RuntimeError(f"データストリームが尽きました（消費 {self.consumed} 件）") from None
            self.consumed += 1
        return out


IterationFn = Callable[[np.ndarray, _SampleFeed, np.random.Generator], np.ndarray]


def initial_parameters(circuit: LayeredCircuit, seed: int) -> np.ndarray:
    """θ⁽⁰⁾ ~ U[0,2π)^c（実行シードから決定）"""
    return random_parameters(circuit.num_params, np.random.default_rng([seed, _INIT_STREAM]))


def _evaluate(
    circuit: LayeredCircuit,
    theta: np.ndarray,
    povm: Povm,
    batch: Batch,
    lossfn: LossFunction,
    seed: int,
    step: int,
) -> tuple[float, float, float]:
    """(平均期待損失, 経験損失, 最適損失) を評価。評価用の乱数は学習と独立"""
    eval_rng = np.random.default_rng([seed, EVAL_STREAM, step])
    return (
        average_expected_loss(circuit, theta, povm, batch, lossfn),
        empirical_loss(circuit, theta, povm, batch, eval_rng),
        optimal_expected_loss(batch),
    )


def _run_stochastic(
    circuit: LayeredCircuit,
    stream: DatasetStream,
    povm: Povm,
    lossfn: LossFunction,
    config: OptimizerConfig,
    iteration: IterationFn,
    theta0: np.ndarray | None,
) -> TrainingTrace:
    """行 s は θ⁽ˢ⁾ をバッチ s で評価し、ステップ s はバッチ s を消費して θ⁽ˢ⁺¹⁾ を作る"""
    rng = np.random.default_rng([config.seed, _OPTIMIZER_STREAM])
    theta = initial_parameters(circuit, config.seed) if theta0 is None else np.array(theta0, dtype=float)
    trace = TrainingTrace(kind=config.kind)
    consumed = 0
    started = time.perf_counter()

    def record(step: int, batch: Batch) -> None:
        loss, emp, opt = _evaluate(circuit, theta, povm, batch, lossfn, config.seed, step)
        trace.rows.append(TraceRow(
            step=step,
            iteration=step * config.iterations_per_step,
            theta=theta.copy(),
            loss=loss,
            empirical_loss=emp,
            optimal_loss=opt,
            samples_consumed=consumed,
            wall_ms=(time.perf_counter() - started) * 1000.0,
        ))
        logger.debug("step=%d emp=%.4f avg=%.4f opt=%.4f", step, emp, loss, opt)

    batch = stream.batch(0, config.batch_size)
    record(0, batch)
    for step in range(config.steps):
        feed = _SampleFeed(batch)
        for it in range(config.iterations_per_step):
            theta = iteration(theta, feed, rng)
            consumed += SAMPLES_PER_ITERATION
            if config.trace_iterations:
                row = TraceRow(
                    step=step,
                    iteration=step * config.iterations_per_step + it + 1,
                    theta=theta.copy(),
                    loss=float("nan"),
                    samples_consumed=consumed,
                )
                trace.iteration_rows.append(row)
                logger.debug("iter=%d θ=%s", row.iteration, np.array2string(row.theta, precision=4))
        batch = stream.batch(step + 1, config.batch_size)
        record(step + 1, batch)
    return trace


def run_2qnscd(
    circuit: LayeredCircuit,
    stream: DatasetStream,
    povm: Povm,
    lossfn: LossFunction,
    config: OptimizerConfig,
    theta0: np.ndarray | None = None,
) -> TrainingTrace:
    """2-QNSCD: 1反復で同じ座標ペアに対し勾配（2サンプル）と計量ブロック（4サンプル）を推定"""
    c = circuit.num_params
    beta = config.resolve_beta(c)
    logger.info("2-QNSCD 開始: circuit=%s c=%d η=%g β=%.4f seed=%d", circuit.name, c, config.learning_rate, beta, config.seed)

    def iteration(theta: np.ndarray, feed: _SampleFeed, rng: np.random.Generator) -> np.ndarray:
        pair = draw_coord_pair(c, rng)
        grad = estimate_pair_gradient(circuit, theta, pair, feed.take(2), povm, lossfn, rng)
        estimate = metric_estimate_from_shots(circuit, theta, pair, [s.state for s in feed.take(4)], beta, rng)
        return qnscd_step(theta, pair, estimate.tilde_block(), grad, config.learning_rate, beta, c, config.metric_scale)

    return _run_stochastic(circuit, stream, povm, lossfn, config, iteration, theta0)


def run_rqsgd(
    circuit: LayeredCircuit,
    stream: DatasetStream,
    povm: Povm,
    lossfn: LossFunction,
    config: OptimizerConfig,
    theta0: np.ndarray | None = None,
) -> TrainingTrace:
    """RQSGD: 2座標×3ショット（2-RQSGD）または6座標×1ショット（6-RQSGD）の勾配で θ′ = θ − ηg"""
    c = circuit.num_params
    kind = config.kind
    if kind not in (OptimizerKind.RQSGD_2, OptimizerKind.RQSGD_6):
        raise ValueError(f"RQSGD の種類ではありません: {kind.value}")
    if kind is OptimizerKind.RQSGD_6 and c < 6:
        raise ValueError(f"6-RQSGD には c ≥ 6 が必要です: c={c}")
    logger.info("%s 開始: circuit=%s c=%d η=%g seed=%d", kind.value, circuit.name, c, config.learning_rate, config.seed)

    def pairs_of_two(theta: np.ndarray, feed: _SampleFeed, rng: np.random.Generator) -> np.ndarray:
        pair = draw_coord_pair(c, rng)
        values = []
        for coord in (pair.first, pair.second):
            shots = [estimate_partial(circuit, theta, coord, s, povm, lossfn, rng) for s in feed.take(3)]
            values.append(float(np.mean(shots)))
        grad = SparseGradient(coord_pair=pair, values=(values[0], values[1]), c=c)
        return theta - config.learning_rate * grad.materialize()

    def six_coords(theta: np.ndarray, feed: _SampleFeed, rng: np.random.Generator) -> np.ndarray:
        coords = rng.choice(c, size=SAMPLES_PER_ITERATION, replace=False)
        g = estimate_coords_gradient(circuit, theta, coords, feed.take(SAMPLES_PER_ITERATION), povm, lossfn, rng)
        return theta - config.learning_rate * g

    iteration = pairs_of_two if kind is OptimizerKind.RQSGD_2 else six_coords
    return _run_stochastic(circuit, stream, povm, lossfn, config, iteration, theta0)


# =============================================================================
# 決定論的な参照最適化器
# =============================================================================

class Landscape:
    """微分可能な損失と計量の提供者"""

    def loss(self, theta: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def metric(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def natural_direction(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """F⁻¹∇𝓛。特異な場合は閾値 1e-10 の擬似逆行列に切り替える"""
        f = np.asarray(self.metric(theta), dtype=float)
        w, v = sla.eigh(0.5 * (f + f.T))
        if np.abs(w).min() < PINV_THRESHOLD:
            logger.warning("計量が特異です（最小固有値 %.3e）。擬似逆行列に切り替えます", np.abs(w).min())
            inv_w = np.where(np.abs(w) > PINV_THRESHOLD, 1.0 / np.where(w == 0, 1.0, w), 0.0)
            return (v * inv_w) @ v.T @ grad
        return np.linalg.solve(f, grad)

    def project(self, theta: np.ndarray) -> np.ndarray:
        """定義域への射影（既定は何もしない）"""
        return theta


class EnsembleLandscape(Landscape):
    """固定バッチ上の厳密な損失・勾配・E-QFIM"""

    def __init__(self, circuit: LayeredCircuit, povm: Povm, batch: Batch, lossfn: LossFunction):
        self.circuit = circuit
        self.povm = povm
        self.batch = batch
        self.lossfn = lossfn
        self.ensemble = dataset_ensemble(batch)

    def loss(self, theta: np.ndarray) -> float:
        return average_expected_loss(self.circuit, theta, self.povm, self.batch, self.lossfn)

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        return exact_expected_gradient(self.circuit, theta, self.povm, self.ensemble, self.lossfn)

    def metric(self, theta: np.ndarray) -> np.ndarray:
        return exact_eqfim(self.circuit, theta, self.ensemble)


def _run_deterministic(
    landscape: Landscape,
    theta0: np.ndarray,
    eta: float,
    steps: int,
    kind: OptimizerKind,
    direction: Callable[[np.ndarray, np.ndarray], np.ndarray],
) -> TrainingTrace:
    theta = landscape.project(np.array(theta0, dtype=float))
    trace = TrainingTrace(kind=kind)
    trace.rows.append(TraceRow(step=0, iteration=0, theta=theta.copy(), loss=landscape.loss(theta)))
    for t in range(1, steps + 1):
        grad = landscape.gradient(theta)
        theta = landscape.project(theta - eta * direction(theta, grad))
        trace.rows.append(TraceRow(step=t, iteration=t, theta=theta.copy(), loss=landscape.loss(theta)))
    return trace


def run_exact_qngd(landscape: Landscape, theta0: np.ndarray, eta: float, steps: int) -> TrainingTrace:
    """θ⁽ᵗ⁺¹⁾ = θ⁽ᵗ⁾ − η F(θ⁽ᵗ⁾)⁻¹ ∇𝓛(θ⁽ᵗ⁾)"""
    return _run_deterministic(landscape, theta0, eta, steps, OptimizerKind.EXACT_QNGD, landscape.natural_direction)


def run_exact_gd(landscape: Landscape, theta0: np.ndarray, eta: float, steps: int) -> TrainingTrace:
    """θ⁽ᵗ⁺¹⁾ = θ⁽ᵗ⁾ − η ∇𝓛(θ⁽ᵗ⁾)"""
    return _run_deterministic(landscape, theta0, eta, steps, OptimizerKind.EXACT_GD, lambda _theta, grad: grad)
