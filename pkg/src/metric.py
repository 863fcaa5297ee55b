"""アンサンブル量子フィッシャー情報計量（E-QFIM）

厳密計算（密行列オラクル）と、1ショット測定による不偏推定量
（逐次反交換子測定 → 2×2 ブロック → 正則化埋め込み）を提供する。
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from pqc import CoordPair, LayeredCircuit, forward, forward_range, upsilon
from simcore import DensityMatrix, LabeledEnsemble, StateVector, ensemble_density, measure_pauli

logger = logging.getLogger(__name__)

# min_beta の二分探索
BETA_SEARCH_UPPER = 2.0
BETA_SEARCH_TOL = 1e-5


# =============================================================================
# 厳密な E-QFIM（オラクル）
# =============================================================================

def _upsilons(circuit: LayeredCircuit, theta: np.ndarray) -> list[np.ndarray]:
    return [upsilon(circuit, theta, k) for k in range(circuit.num_params)]


def exact_eqfim(circuit: LayeredCircuit, theta: np.ndarray, ensemble: LabeledEnsemble) -> np.ndarray:
    """F_kl = ½Tr({Υ_k,Υ_l}ρ) − Tr(Υ_kρ)Tr(Υ_lρ)"""
    rho = ensemble_density(ensemble).entries
    ups = _upsilons(circuit, theta)
    means = np.array([np.trace(u @ rho).real for u in ups])
    c = len(ups)
    f = np.empty((c, c))
    for k in range(c):
        for j in range(k, c):
            anti = ups[k] @ ups[j] + ups[j] @ ups[k]
            f[k, j] = f[j, k] = 0.5 * np.trace(anti @ rho).real - means[k] * means[j]
    return f


def exact_eqfim_real_form(circuit: LayeredCircuit, theta: np.ndarray, ensemble: LabeledEnsemble) -> np.ndarray:
    """一般形 Re{Tr(Υ_kΥ_lρ)} − Tr(Υ_kρ)Tr(Υ_lρ)。対称化した形と一致するはず"""
    rho = ensemble_density(ensemble).entries
    ups = _upsilons(circuit, theta)
    means = np.array([np.trace(u @ rho).real for u in ups])
    second = np.array([[np.trace(uk @ ul @ rho).real for ul in ups] for uk in ups])
    return second - np.outer(means, means)


# =============================================================================
# 1ショット推定
# =============================================================================

def _measure_at_layer(
    circuit: LayeredCircuit, theta: np.ndarray, coord: int, state: StateVector, rng: np.random.Generator
) -> int:
    """層 1..a−1 を通した後に σ^a_p を測定"""
    layer, qubit = circuit.locate(coord)
    prepared = forward_range(circuit, theta, state, 1, layer)
    outcome, _ = measure_pauli(prepared, qubit, circuit.axis_of(coord), rng)
    return outcome


def sequential_anticommutator_sample(
    circuit: LayeredCircuit,
    theta: np.ndarray,
    coord_pair: CoordPair,
    sample: StateVector,
    rng: np.random.Generator,
) -> tuple[int, int]:
    """σ^a_p を測定 → 収縮した状態に層 a..b−1 を適用 → σ^b_q を測定。(u, w) を返す"""
    layer_a, qubit_p = circuit.locate(coord_pair.first)
    layer_b, qubit_q = circuit.locate(coord_pair.second)
    state = forward_range(circuit, theta, sample, 1, layer_a)
    u, collapsed = measure_pauli(state, qubit_p, circuit.axis_of(coord_pair.first), rng)
    # a == b のときは間に層を挟まない
    state = forward_range(circuit, theta, collapsed, layer_a, layer_b)
    w, _ = measure_pauli(state, qubit_q, circuit.axis_of(coord_pair.second), rng)
    return u, w


def block_from_outcomes(
    u: Sequence[int], v: Sequence[int], w: Sequence[int]
) -> np.ndarray:
    """測定結果 (u₁,u₂), (v₁,v₂), (w₁,w₂) から 2×2 ブロックを組み立てる"""
    u1, u2 = u
    v1, v2 = v
    w1, w2 = w
    z11 = 0.25 * (1 - u1 * u2)
    z22 = 0.25 * (1 - v1 * v2)
    z12 = 0.125 * (u1 * w1 + u2 * w2) - 0.0625 * (u1 + u2) * (v1 + v2)
    return np.array([[z11, z12], [z12, z22]], dtype=float)


def estimate_block(
    circuit: LayeredCircuit,
    theta: np.ndarray,
    coord_pair: CoordPair,
    samples: Sequence[StateVector],
    rng: np.random.Generator,
) -> np.ndarray:
    """4サンプルから E-QFIM の 2×2 部分行列を不偏推定"""
    if len(samples) < 4:
        raise ValueError(f"サンプルが4つ必要です: {len(samples)}")
    # サンプル1-2: σ^b_q のみ、サンプル3-4: 逐次測定
    v = [_measure_at_layer(circuit, theta, coord_pair.second, s, rng) for s in samples[:2]]
    uw = [sequential_anticommutator_sample(circuit, theta, coord_pair, s, rng) for s in samples[2:4]]
    return block_from_outcomes([x[0] for x in uw], v, [x[1] for x in uw])


@dataclass(frozen=True)
class MetricEstimate:
    """疎な推定量 Z̄(a_p, b_q) と、その活性 2×2 ブロック"""

    coord_pair: CoordPair
    block: np.ndarray
    c: int
    beta: float

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError(f"β は正である必要があります: {self.beta}")
        if self.c <= 2:
            raise ValueError(f"パラメータ数 c は 3 以上が必要です: {self.c}")
        if self.coord_pair.second >= self.c:
            raise ValueError(f"座標が範囲外です: {self.coord_pair} (c={self.c})")
        block = np.asarray(self.block, dtype=float)
        if block.shape != (2, 2) or block[0, 1] != block[1, 0]:
            raise ValueError("ブロックは対称な 2×2 行列である必要があります")
        object.__setattr__(self, "block", block)

    def tilde_block(self) -> np.ndarray:
        """Z̃ の活性ブロック: 対角は z/(c−1) + β、非対角はそのまま"""
        tilde = self.block.copy()
        tilde[0, 0] = self.block[0, 0] / (self.c - 1) + self.beta
        tilde[1, 1] = self.block[1, 1] / (self.c - 1) + self.beta
        return tilde

    def regularized_block(self) -> np.ndarray:
        """Z̃_block − (2β/c)I₂"""
        return self.tilde_block() - (2.0 * self.beta / self.c) * np.eye(2)

    def materialize(self) -> np.ndarray:
        """c×c の Z̄ = (c(c−1)/2)(Z̃ − (2β/c)I)"""
        i, j = self.coord_pair.first, self.coord_pair.second
        tilde = np.zeros((self.c, self.c))
        tilde[np.ix_([i, j], [i, j])] = self.tilde_block()
        scale = self.c * (self.c - 1) / 2.0
        return scale * (tilde - (2.0 * self.beta / self.c) * np.eye(self.c))


def embed_regularize(block: np.ndarray, coord_pair: CoordPair, c: int, beta: float) -> MetricEstimate:
    return MetricEstimate(coord_pair=coord_pair, block=np.asarray(block, dtype=float), c=c, beta=beta)


def metric_estimate_from_shots(
    circuit: LayeredCircuit,
    theta: np.ndarray,
    coord_pair: CoordPair,
    samples: Sequence[StateVector],
    beta: float,
    rng: np.random.Generator,
) -> MetricEstimate:
    """4サンプルの1ショット測定から正則化済みの推定量を作る"""
    block = estimate_block(circuit, theta, coord_pair, samples, rng)
    return embed_regularize(block, coord_pair, circuit.num_params, beta)


# =============================================================================
# 正則化定数の閾値
# =============================================================================

_ALL_OUTCOME_BLOCKS = np.array([
    block_from_outcomes(combo[0:2], combo[2:4], combo[4:6])
    for combo in itertools.product((1, -1), repeat=6)
])


def _min_regularized_eigenvalue(c: int, beta: float) -> float:
    """64 通りの測定結果すべてについて、正則化ブロックの最小固有値"""
    tilde = _ALL_OUTCOME_BLOCKS.copy()
    tilde[:, 0, 0] = tilde[:, 0, 0] / (c - 1) + beta
    tilde[:, 1, 1] = tilde[:, 1, 1] / (c - 1) + beta
    shift = 2.0 * beta / c
    tilde[:, 0, 0] -= shift
    tilde[:, 1, 1] -= shift
    return float(np.linalg.eigvalsh(tilde).min())


def min_beta(c: int) -> float:
    """全測定結果で正則化ブロックが正定値になる最小の β（二分探索）"""
    if c <= 2:
        raise ValueError(f"パラメータ数 c は 3 以上が必要です: {c}")
    lo, hi = 0.0, BETA_SEARCH_UPPER
    while _min_regularized_eigenvalue(c, hi) <= 0:
        hi *= 2.0
    while hi - lo > BETA_SEARCH_TOL:
        mid = 0.5 * (lo + hi)
        if _min_regularized_eigenvalue(c, mid) > 0:
            hi = mid
        else:
            lo = mid
    logger.debug("min_beta(c=%d) = %.6f", c, hi)
    return hi


def beta_sweep(cs: Sequence[int]) -> list[tuple[int, float]]:
    """複数の c について min_beta を並べる"""
    return [(c, min_beta(c)) for c in cs]


# =============================================================================
# アンサンブル忠実度と距離
# =============================================================================

def _ensemble_overlap(
    circuit: LayeredCircuit, theta: np.ndarray, theta_prime: np.ndarray, ensemble: LabeledEnsemble
) -> np.ndarray:
    """各 x について ⟨φ_x(θ)|φ_x(θ′)⟩"""
    return np.array([
        forward(circuit, theta, s).overlap(forward(circuit, theta_prime, s)) for s in ensemble.states
    ])


def ensemble_fidelity(
    circuit: LayeredCircuit, theta: np.ndarray, theta_prime: np.ndarray, ensemble: LabeledEnsemble
) -> float:
    """f_E = |Σ_x Q_X(x)⟨φ_x(θ)|φ_x(θ′)⟩|²"""
    overlaps = _ensemble_overlap(circuit, theta, theta_prime, ensemble)
    return float(min(abs(np.dot(ensemble.weights, overlaps)) ** 2, 1.0))


def average_pure_fidelity(
    circuit: LayeredCircuit, theta: np.ndarray, theta_prime: np.ndarray, ensemble: LabeledEnsemble
) -> float:
    """Σ_x Q_X(x)|⟨φ_x(θ)|φ_x(θ′)⟩|²（f_E 以上）"""
    overlaps = _ensemble_overlap(circuit, theta, theta_prime, ensemble)
    return float(np.dot(ensemble.weights, np.abs(overlaps) ** 2))


def average_pure_root_fidelity(
    circuit: LayeredCircuit, theta: np.ndarray, theta_prime: np.ndarray, ensemble: LabeledEnsemble
) -> float:
    """Σ_x Q_X(x)|⟨φ_x(θ)|φ_x(θ′)⟩|

    √f_E と √f_ρ の間に入る。上側は根忠実度の同時凹性による（二乗した f_ρ では成り立たない）。
    """
    overlaps = _ensemble_overlap(circuit, theta, theta_prime, ensemble)
    return float(np.dot(ensemble.weights, np.abs(overlaps)))


def output_density(circuit: LayeredCircuit, theta: np.ndarray, ensemble: LabeledEnsemble) -> DensityMatrix:
    """ρ(θ) = Σ_x Q_X(x)|φ_x(θ)⟩⟨φ_x(θ)|"""
    states = [forward(circuit, theta, s) for s in ensemble.states]
    return ensemble_density(LabeledEnsemble(ensemble.weights, states, ensemble.labels))


def ensemble_distance(
    circuit: LayeredCircuit, theta: np.ndarray, theta_prime: np.ndarray, ensemble: LabeledEnsemble
) -> float:
    """d_E = (2 − 2√f_E)^{1/2}"""
    overlaps = _ensemble_overlap(circuit, theta, theta_prime, ensemble)
    root_f = min(abs(np.dot(ensemble.weights, overlaps)), 1.0)
    return float(np.sqrt(max(2.0 - 2.0 * root_f, 0.0)))


def same_up_to_global_phase(
    states: Sequence[StateVector], others: Sequence[StateVector], tol: float = 1e-9
) -> bool:
    """対応する状態が共通の大域位相を除いて一致するか

    位相は最初の状態の最大振幅成分で決める。
    """
    if len(states) != len(others):
        return False
    first = states[0].amplitudes
    pivot = int(np.argmax(np.abs(first)))
    ratio = others[0].amplitudes[pivot] / first[pivot]
    if abs(abs(ratio) - 1.0) > tol:
        return False
    for s, o in zip(states, others):
        if not np.allclose(o.amplitudes, ratio * s.amplitudes, atol=tol):
            return False
    return True
