"""勾配 - 厳密なサンプルごとの勾配（オラクル）と1ショット推定量

推定量は補助量子ビットを |+⟩ で最下位ビットに追加し、
補助ビットで制御した回転 e^{±iπσ/4} を挟んで交換子の期待値を測定可能な量に変える。
"""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from dataset import LabeledSample, per_sample_expected_loss
from pqc import CoordPair, LayeredCircuit, forward_range
from simcore import (
    PAULI,
    LabeledEnsemble,
    Povm,
    StateVector,
    apply_1q_inplace,
    apply_pauli_rotation,
    check_hermitian,
    measure_pauli,
    measure_povm,
)

logger = logging.getLogger(__name__)

_PLUS = np.array([1.0, 1.0]) / np.sqrt(2.0)


@dataclass(frozen=True)
class LossFunction:
    """損失表 ℓ(y, ŷ) ≥ 0"""

    labels: tuple
    table: tuple

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float)
        n = len(self.labels)
        if table.shape != (n, n):
            raise ValueError(f"損失表の形状が不正です: {table.shape}")
        if (table < 0).any():
            raise ValueError("損失は非負である必要があります")

    def __call__(self, y, y_hat) -> float:
        return float(self.table[self.labels.index(y)][self.labels.index(y_hat)])

    @property
    def max_value(self) -> float:
        return float(np.max(self.table))

    def observable(self, povm: Povm, y) -> np.ndarray:
        """B_y = Σ_ŷ ℓ(y,ŷ) Λ_ŷ"""
        total = np.zeros_like(povm.operators[0])
        for label, op in zip(povm.labels, povm.operators):
            total = total + self(y, label) * op
        return total


def zero_one_loss(labels: tuple = (1, -1)) -> LossFunction:
    """ℓ(y,y)=0、それ以外は 1"""
    n = len(labels)
    table = tuple(tuple(0.0 if i == j else 1.0 for j in range(n)) for i in range(n))
    return LossFunction(labels=tuple(labels), table=table)


@dataclass(frozen=True)
class SparseGradient:
    """2座標の推定値 (g_ap, g_bq)。展開すると (c/2)(g_ap e_ap + g_bq e_bq)"""

    coord_pair: CoordPair
    values: tuple[float, float]
    c: int

    def materialize(self) -> np.ndarray:
        g = np.zeros(self.c)
        g[self.coord_pair.first] = 0.5 * self.c * self.values[0]
        g[self.coord_pair.second] = 0.5 * self.c * self.values[1]
        return g


# =============================================================================
# 厳密勾配（オラクル）
# =============================================================================

def exact_per_sample_gradient(
    circuit: LayeredCircuit,
    theta: np.ndarray,
    povm: Povm,
    sample: LabeledSample,
    lossfn: LossFunction,
) -> np.ndarray:
    """∂𝓛/∂θ_(a,p) = −(i/2) Tr{B W[σ, Φ^a]W†} = Im⟨φ₀|B|φ₁⟩

    φ₀ = W ψ_a、φ₁ = W σ ψ_a（ψ_a は層 1..a−1 の出力、W は層 a..L）。
    """
    d = circuit.num_qubits
    end = circuit.num_layers + 1
    b_obs = lossfn.observable(povm, sample.label)
    grad = np.zeros(circuit.num_params)
    prefix = sample.state
    for a in range(1, end):
        if a > 1:
            prefix = forward_range(circuit, theta, prefix, a - 1, a)
        phi0 = forward_range(circuit, theta, prefix, a, end).amplitudes
        b_phi0 = b_obs @ phi0
        for p in range(d):
            coord = (a - 1) * d + p
            shifted = prefix.copy()
            apply_1q_inplace(shifted.amplitudes, d, p, PAULI[circuit.axis_of(coord)])
            phi1 = forward_range(circuit, theta, shifted, a, end).amplitudes
            grad[coord] = np.vdot(b_phi0, phi1).imag
    return grad


def exact_expected_gradient(
    circuit: LayeredCircuit,
    theta: np.ndarray,
    povm: Povm,
    ensemble: LabeledEnsemble,
    lossfn: LossFunction,
) -> np.ndarray:
    """∇𝓛 = Σ_x Q_X(x) ∇𝓛(θ, φ_x, y_x)"""
    total = np.zeros(circuit.num_params)
    for weight, state, label in zip(ensemble.weights, ensemble.states, ensemble.labels):
        total += weight * exact_per_sample_gradient(circuit, theta, povm, LabeledSample(state, label), lossfn)
    return total


def parameter_shift_partial(
    circuit: LayeredCircuit,
    theta: np.ndarray,
    coord: int,
    povm: Povm,
    sample: LabeledSample,
    lossfn: LossFunction,
) -> float:
    """パラメータシフト則 ½[𝓛(θ+π/2·e_k) − 𝓛(θ−π/2·e_k)]（照合用）"""
    shift = np.zeros(circuit.num_params)
    shift[coord] = 0.5 * np.pi
    plus = per_sample_expected_loss(circuit, theta + shift, povm, sample, lossfn)
    minus = per_sample_expected_loss(circuit, theta - shift, povm, sample, lossfn)
    return 0.5 * (plus - minus)


# =============================================================================
# 交換子の観測量
# =============================================================================

def commutator_observable_pair(a_op: np.ndarray, b_op: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Tr([A,B]ρ) = 2i·Tr(O V (ρ⊗|+⟩⟨+|) V†) を満たす (O, V)

    O = B⊗|0⟩⟨0| − B⊗|1⟩⟨1|、V = e^{iπA/4}⊗|0⟩⟨0| + e^{−iπA/4}⊗|1⟩⟨1|（補助ビットは右側）。
    """
    a = check_hermitian(a_op, 1e-9)
    b = check_hermitian(b_op, 1e-9)
    if a.shape != b.shape:
        raise ValueError(f"次元が一致しません: {a.shape} vs {b.shape}")
    ident = np.eye(a.shape[0])
    if not np.allclose(a @ a, ident, atol=1e-9, rtol=0.0):
        raise ValueError("A² = I を満たしません")
    p0 = np.diag([1.0, 0.0])
    p1 = np.diag([0.0, 1.0])
    # A² = I なので e^{±iπA/4} = (I ± iA)/√2
    forward_rot = (ident + 1j * a) / np.sqrt(2.0)
    backward_rot = (ident - 1j * a) / np.sqrt(2.0)
    o = np.kron(b, p0) - np.kron(b, p1)
    v = np.kron(forward_rot, p0) + np.kron(backward_rot, p1)
    return o, v


# =============================================================================
# 1ショット推定
# =============================================================================

def estimate_partial(
    circuit: LayeredCircuit,
    theta: np.ndarray,
    coord: int,
    sample: LabeledSample,
    povm: Povm,
    lossfn: LossFunction,
    rng: np.random.Generator,
) -> float:
    """1ショットで ∂𝓛/∂θ_coord を不偏推定: g = (−1)^{1+b} ℓ(y, ŷ)"""
    layer, qubit = circuit.locate(coord)
    axis = circuit.axis_of(coord)
    prefix = forward_range(circuit, theta, sample.state, 1, layer)

    # 補助ビット |0⟩ 側に e^{iπσ/4} = R_σ(−π/2)、|1⟩ 側に R_σ(+π/2)
    branch0 = apply_pauli_rotation(prefix, qubit, axis, -0.5 * np.pi).amplitudes
    branch1 = apply_pauli_rotation(prefix, qubit, axis, 0.5 * np.pi).amplitudes
    extended = StateVector(np.stack([branch0, branch1], axis=1).reshape(-1) * _PLUS[0])

    extended = forward_range(circuit, theta, extended, layer, circuit.num_layers + 1)
    ancilla = extended.num_qubits - 1
    outcome, collapsed = measure_pauli(extended, ancilla, "Z", rng)
    b = 0 if outcome == 1 else 1
    y_hat = measure_povm(collapsed.drop_last_qubit(b), povm, rng)
    return (-1.0) ** (1 + b) * lossfn(sample.label, y_hat)


def estimate_pair_gradient(
    circuit: LayeredCircuit,
    theta: np.ndarray,
    coord_pair: CoordPair,
    samples: Sequence[LabeledSample],
    povm: Povm,
    lossfn: LossFunction,
    rng: np.random.Generator,
) -> SparseGradient:
    """サンプル1で g_ap、サンプル2で g_bq を推定"""
    if len(samples) < 2:
        raise ValueError(f"サンプルが2つ必要です: {len(samples)}")
    g_ap = estimate_partial(circuit, theta, coord_pair.first, samples[0], povm, lossfn, rng)
    g_bq = estimate_partial(circuit, theta, coord_pair.second, samples[1], povm, lossfn, rng)
    return SparseGradient(coord_pair=coord_pair, values=(g_ap, g_bq), c=circuit.num_params)


def estimate_coords_gradient(
    circuit: LayeredCircuit,
    theta: np.ndarray,
    coords: Sequence[int],
    samples: Sequence[LabeledSample],
    povm: Povm,
    lossfn: LossFunction,
    rng: np.random.Generator,
) -> np.ndarray:
    """座標ごとに1ショットずつ推定し (c/k) Σ g_j e_j を返す（6-RQSGD 用）"""
    if len(samples) < len(coords):
        raise ValueError(f"サンプルが足りません: {len(samples)} < {len(coords)}")
    c = circuit.num_params
    g = np.zeros(c)
    for coord, sample in zip(coords, samples):
        g[coord] += estimate_partial(circuit, theta, coord, sample, povm, lossfn, rng)
    return (c / len(coords)) * g
