"""状態ベクトルシミュレータ - 純粋状態の演算・射影測定・POVMサンプリング

ビット順序: 量子ビット 0 が基底インデックスの最上位ビット（big-endian）。
振幅配列を (2,)*n に reshape したときの軸 q が量子ビット q に対応する。
他の全モジュールはこの規約を前提にしている。

密度行列まわりの関数は総当たりの検証用（オラクル）で、学習ループでは使わない。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import linalg as sla

logger = logging.getLogger(__name__)

# 構造的不変条件の許容誤差 / 分解ベースの量の許容誤差
STRUCT_TOL = 1e-10
DECOMP_TOL = 1e-8
# これ未満の射影ノルムは「起こりえない分岐」とみなす
COLLAPSE_TOL = 1e-14

AXES = ("X", "Y", "Z")

IDENTITY_2 = np.eye(2, dtype=complex)
PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# 観測量はエルミート行列（numpy 配列）で表す
HermitianOp = np.ndarray


def check_axis(axis: str) -> str:
    """パウリ軸名を検証して大文字で返す"""
    name = str(axis).upper()
    if name not in PAULI:
        raise ValueError(f"不明なパウリ軸です: {axis!r}")
    return name


def rotation_matrix(axis: str, angle: float) -> np.ndarray:
    """R_σ(angle) = exp(-i·angle·σ/2) の閉形式"""
    if not np.isfinite(angle):
        raise ValueError(f"回転角が有限ではありません: {angle}")
    half = 0.5 * angle
    return np.cos(half) * IDENTITY_2 - 1j * np.sin(half) * PAULI[check_axis(axis)]


def check_hermitian(op: np.ndarray, tol: float = STRUCT_TOL) -> np.ndarray:
    """エルミート性を検証"""
    m = np.asarray(op, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"正方行列ではありません: shape={m.shape}")
    if not np.allclose(m, m.conj().T, atol=tol, rtol=0.0):
        raise ValueError("エルミート行列ではありません")
    return m


def pauli_operator(num_qubits: int, qubit: int, axis: str) -> np.ndarray:
    """I⊗…⊗σ⊗…⊗I の密行列（オラクル用）"""
    if not 0 <= qubit < num_qubits:
        raise ValueError(f"量子ビット番号が範囲外です: {qubit} (n={num_qubits})")
    left = np.eye(2**qubit, dtype=complex)
    right = np.eye(2 ** (num_qubits - qubit - 1), dtype=complex)
    return np.kron(np.kron(left, PAULI[check_axis(axis)]), right)


# =============================================================================
# 状態ベクトル
# =============================================================================

class StateVector:
    """d 量子ビットの正規化された複素振幅"""

    __slots__ = ("num_qubits", "amplitudes")

    def __init__(self, amplitudes: Sequence[complex] | np.ndarray, normalize: bool = False):
        amps = np.array(amplitudes, dtype=complex).reshape(-1)
        dim = amps.shape[0]
        num_qubits = dim.bit_length() - 1
        if dim < 2 or 2**num_qubits != dim:
            raise ValueError(f"振幅の長さが 2^d ではありません: {dim}")
        norm = np.linalg.norm(amps)
        if normalize:
            if norm < COLLAPSE_TOL:
                raise ValueError("ゼロベクトルは正規化できません")
            amps = amps / norm
        elif abs(norm**2 - 1.0) > STRUCT_TOL:
            raise ValueError(f"状態が正規化されていません: ‖ψ‖²={norm**2:.12f}")
        self.num_qubits = num_qubits
        self.amplitudes = amps

    @classmethod
    def basis(cls, num_qubits: int, index: int = 0) -> StateVector:
        """計算基底状態 |index⟩"""
        if not 0 <= index < 2**num_qubits:
            raise ValueError(f"基底インデックスが範囲外です: {index}")
        amps = np.zeros(2**num_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(amps)

    @classmethod
    def plus(cls, num_qubits: int = 1) -> StateVector:
        """|+⟩^⊗n"""
        dim = 2**num_qubits
        return cls(np.full(dim, 1.0 / np.sqrt(dim), dtype=complex))

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def copy(self) -> StateVector:
        new = object.__new__(StateVector)
        new.num_qubits = self.num_qubits
        new.amplitudes = self.amplitudes.copy()
        return new

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def density(self) -> np.ndarray:
        """|ψ⟩⟨ψ|"""
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def overlap(self, other: StateVector) -> complex:
        """⟨self|other⟩"""
        if other.dim != self.dim:
            raise ValueError(f"次元が一致しません: {self.dim} vs {other.dim}")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def with_ancilla(self, ancilla: Sequence[complex]) -> StateVector:
        """最下位ビットに補助量子ビットを追加した ψ⊗ancilla"""
        anc = np.asarray(ancilla, dtype=complex)
        return StateVector(np.kron(self.amplitudes, anc))

    def drop_last_qubit(self, bit: int) -> StateVector:
        """最下位量子ビットが |bit⟩ に確定した積状態から系の状態を取り出す"""
        if self.num_qubits < 2:
            raise ValueError("取り外せる量子ビットがありません")
        part = self.amplitudes.reshape(-1, 2)[:, bit]
        norm = np.linalg.norm(part)
        if norm < COLLAPSE_TOL:
            raise RuntimeError(f"補助量子ビット |{bit}⟩ の成分がありません")
        return StateVector(part / norm)

    def __len__(self) -> int:
        return self.dim

    def __repr__(self) -> str:
        return f"StateVector(num_qubits={self.num_qubits})"


def random_state(num_qubits: int, rng: np.random.Generator) -> StateVector:
    """複素正規分布から一様（Haar）ランダムな純粋状態を生成"""
    dim = 2**num_qubits
    amps = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return StateVector(amps, normalize=True)


class DensityMatrix:
    """密度行列（検証用オラクル）"""

    __slots__ = ("entries",)

    def __init__(self, entries: np.ndarray, tol: float = STRUCT_TOL):
        rho = check_hermitian(entries, tol)
        if abs(np.trace(rho).real - 1.0) > tol:
            raise ValueError(f"トレースが 1 ではありません: {np.trace(rho).real}")
        if np.linalg.eigvalsh(rho).min() < -tol:
            raise ValueError("半正定値ではありません")
        self.entries = rho

    @classmethod
    def from_state(cls, state: StateVector) -> DensityMatrix:
        return cls(state.density())

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


# =============================================================================
# ゲート適用（ホットパスは振幅配列の in-place 更新）
# =============================================================================

def apply_1q_inplace(amps: np.ndarray, num_qubits: int, qubit: int, m: np.ndarray) -> None:
    """1量子ビット行列をストライド演算で in-place 適用"""
    view = amps.reshape(2**qubit, 2, 2 ** (num_qubits - qubit - 1))
    a0 = view[:, 0, :].copy()
    a1 = view[:, 1, :]
    view[:, 0, :] = m[0, 0] * a0 + m[0, 1] * a1
    view[:, 1, :] = m[1, 0] * a0 + m[1, 1] * a1


def apply_cnot_inplace(amps: np.ndarray, num_qubits: int, control: int, target: int) -> None:
    """制御ビットが 1 の部分空間で標的ビットを反転"""
    view = amps.reshape((2,) * num_qubits)
    idx0 = [slice(None)] * num_qubits
    idx0[control] = 1
    idx1 = list(idx0)
    idx0[target] = 0
    idx1[target] = 1
    tmp = view[tuple(idx0)].copy()
    view[tuple(idx0)] = view[tuple(idx1)]
    view[tuple(idx1)] = tmp


def _check_qubits(qubits: Sequence[int], num_qubits: int) -> list[int]:
    targets = [int(q) for q in qubits]
    if len(set(targets)) != len(targets):
        raise ValueError(f"対象量子ビットが重複しています: {targets}")
    for q in targets:
        if not 0 <= q < num_qubits:
            raise ValueError(f"量子ビット番号が範囲外です: {q} (n={num_qubits})")
    return targets


def apply_unitary(state: StateVector, u: np.ndarray, qubits: Sequence[int]) -> StateVector:
    """量子ビット部分集合にユニタリを適用した新しい状態を返す"""
    targets = _check_qubits(qubits, state.num_qubits)
    k = len(targets)
    mat = np.asarray(u, dtype=complex)
    if mat.shape != (2**k, 2**k):
        raise ValueError(f"ゲートの形状が不正です: {mat.shape} (対象 {k} 量子ビット)")
    if not np.allclose(mat.conj().T @ mat, np.eye(2**k), atol=STRUCT_TOL, rtol=0.0):
        raise ValueError("ユニタリ行列ではありません")

    n = state.num_qubits
    out = state.copy()
    if k == 1:
        apply_1q_inplace(out.amplitudes, n, targets[0], mat)
        return out
    psi = state.amplitudes.reshape((2,) * n)
    gate = mat.reshape((2,) * (2 * k))
    moved = np.tensordot(gate, psi, axes=(list(range(k, 2 * k)), targets))
    # tensordot は対象軸を先頭に並べるので元の位置に戻す
    out.amplitudes = np.moveaxis(moved, list(range(k)), targets).reshape(-1).copy()
    return out


def apply_pauli_rotation(state: StateVector, qubit: int, axis: str, angle: float) -> StateVector:
    """exp(-i·angle·σ/2) を1量子ビットに適用"""
    _check_qubits([qubit], state.num_qubits)
    out = state.copy()
    apply_1q_inplace(out.amplitudes, out.num_qubits, qubit, rotation_matrix(axis, angle))
    return out


def apply_cnot(state: StateVector, control: int, target: int) -> StateVector:
    """CNOT(control, target)"""
    _check_qubits([control, target], state.num_qubits)
    out = state.copy()
    apply_cnot_inplace(out.amplitudes, out.num_qubits, control, target)
    return out


# =============================================================================
# 測定
# =============================================================================

def _pauli_projector(axis: str, sign: int) -> np.ndarray:
    return 0.5 * (IDENTITY_2 + sign * PAULI[check_axis(axis)])


def pauli_outcome_probability(state: StateVector, qubit: int, axis: str) -> float:
    """P(outcome=+1) = ⟨ψ|Π₊|ψ⟩"""
    _check_qubits([qubit], state.num_qubits)
    plus = state.amplitudes.copy()
    apply_1q_inplace(plus, state.num_qubits, qubit, _pauli_projector(axis, +1))
    return float(np.vdot(plus, plus).real)


def measure_pauli(
    state: StateVector, qubit: int, axis: str, rng: np.random.Generator
) -> tuple[int, StateVector]:
    """1量子ビットのパウリ射影測定。(±1, 収縮後の状態) を返す"""
    _check_qubits([qubit], state.num_qubits)
    n = state.num_qubits
    plus = state.amplitudes.copy()
    apply_1q_inplace(plus, n, qubit, _pauli_projector(axis, +1))
    p_plus = min(max(float(np.vdot(plus, plus).real), 0.0), 1.0)

    outcome = 1 if rng.random() < p_plus else -1
    if outcome == 1:
        projected = plus
        prob = p_plus
    else:
        projected = state.amplitudes - plus
        prob = float(np.vdot(projected, projected).real)
    if prob < COLLAPSE_TOL:
        raise RuntimeError(f"起こりえない測定分岐です: qubit={qubit}, axis={axis}, outcome={outcome}")
    collapsed = object.__new__(StateVector)
    collapsed.num_qubits = n
    collapsed.amplitudes = projected / np.sqrt(prob)
    return outcome, collapsed


@dataclass
class Povm:
    """POVM {(ラベル, 半正定値演算子)}。要素の和は単位行列"""

    labels: tuple
    operators: tuple
    _diagonal: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.labels = tuple(self.labels)
        self.operators = tuple(np.asarray(op, dtype=complex) for op in self.operators)
        if not self.operators or len(self.labels) != len(self.operators):
            raise ValueError("POVM のラベルと要素の数が一致しません")
        dim = self.operators[0].shape[0]
        total = np.zeros((dim, dim), dtype=complex)
        for label, op in zip(self.labels, self.operators):
            if op.shape != (dim, dim):
                raise ValueError(f"POVM 要素の形状が不正です: {label}")
            check_hermitian(op)
            if np.linalg.eigvalsh(op).min() < -STRUCT_TOL:
                raise ValueError(f"POVM 要素が半正定値ではありません: {label}")
            total += op
        if not np.allclose(total, np.eye(dim), atol=STRUCT_TOL, rtol=0.0):
            raise ValueError("POVM 要素の和が単位行列になりません")
        # 対角 POVM は確率を |ψ|² から直接計算する
        if all(np.count_nonzero(op - np.diag(np.diag(op))) == 0 for op in self.operators):
            self._diagonal = np.array([np.diag(op).real for op in self.operators])

    @property
    def dim(self) -> int:
        return self.operators[0].shape[0]

    def probabilities(self, state: StateVector) -> np.ndarray:
        """ボルン則による各ラベルの確率"""
        if state.dim != self.dim:
            raise ValueError(f"次元が一致しません: state={state.dim}, povm={self.dim}")
        if self._diagonal is not None:
            probs = self._diagonal @ state.probabilities()
        else:
            psi = state.amplitudes
            probs = np.array([np.vdot(psi, op @ psi).real for op in self.operators])
        return np.clip(probs, 0.0, None)

    def operator(self, label) -> np.ndarray:
        return self.operators[self.labels.index(label)]


def measure_povm(state: StateVector, povm: Povm, rng: np.random.Generator):
    """POVM をサンプリングしてラベルを返す"""
    probs = povm.probabilities(state)
    total = probs.sum()
    if abs(total - 1.0) > STRUCT_TOL:
        raise ValueError(f"POVM の確率の和が 1 になりません: {total}")
    index = int(np.searchsorted(np.cumsum(probs), rng.random() * total, side="right"))
    return povm.labels[min(index, len(probs) - 1)]


def expectation(target: Union[StateVector, DensityMatrix, np.ndarray], obs: HermitianOp) -> float:
    """⟨ψ|O|ψ⟩ または Tr(Oρ)"""
    op = check_hermitian(obs)
    if isinstance(target, StateVector):
        if op.shape[0] != target.dim:
            raise ValueError(f"次元が一致しません: state={target.dim}, obs={op.shape[0]}")
        value = np.vdot(target.amplitudes, op @ target.amplitudes)
    else:
        rho = target.entries if isinstance(target, DensityMatrix) else np.asarray(target, dtype=complex)
        if rho.shape != op.shape:
            raise ValueError(f"次元が一致しません: rho={rho.shape}, obs={op.shape}")
        value = np.trace(op @ rho)
    if abs(value.imag) > STRUCT_TOL * max(1.0, abs(value.real)):
        logger.warning("期待値に虚部が残っています: %.3e", value.imag)
    return float(value.real)


# =============================================================================
# アンサンブルと密度行列オラクル
# =============================================================================

@dataclass
class LabeledEnsemble:
    """(確率, 純粋状態, ラベル) の組のリスト"""

    weights: np.ndarray
    states: list
    labels: list

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.states = list(self.states)
        self.labels = list(self.labels)
        if not (len(self.weights) == len(self.states) == len(self.labels)) or not self.states:
            raise ValueError("アンサンブルの要素数が一致しません")
        if (self.weights < 0).any() or abs(self.weights.sum() - 1.0) > STRUCT_TOL:
            raise ValueError(f"確率が正規化されていません: 和={self.weights.sum()}")
        dims = {s.dim for s in self.states}
        if len(dims) != 1:
            raise ValueError(f"状態の次元が揃っていません: {sorted(dims)}")

    @classmethod
    def uniform(cls, states: Sequence[StateVector], labels: Sequence | None = None) -> LabeledEnsemble:
        n = len(states)
        return cls(np.full(n, 1.0 / n), list(states), list(labels) if labels is not None else [None] * n)

    @classmethod
    def random(cls, num_qubits: int, size: int, rng: np.random.Generator) -> LabeledEnsemble:
        """ランダムな重みと Haar 状態からなるアンサンブル（検証用）"""
        if size <= 0:
            raise ValueError(f"要素数は正である必要があります: {size}")
        weights = rng.dirichlet(np.ones(size))
        states = [random_state(num_qubits, rng) for _ in range(size)]
        return cls(weights, states, [None] * size)

    @property
    def num_qubits(self) -> int:
        return self.states[0].num_qubits

    def __len__(self) -> int:
        return len(self.states)

    def sample(self, rng: np.random.Generator) -> tuple[StateVector, object]:
        """Q_X に従って (状態, ラベル) を1つ引く"""
        index = int(rng.choice(len(self.states), p=self.weights))
        return self.states[index], self.labels[index]


def ensemble_density(ensemble: LabeledEnsemble) -> DensityMatrix:
    """ρ = Σ_x Q_X(x)|φ_x⟩⟨φ_x|"""
    amps = np.array([s.amplitudes for s in ensemble.states])
    rho = (amps.T * ensemble.weights) @ amps.conj()
    return DensityMatrix(rho)


def trace_norm(m: np.ndarray) -> float:
    """特異値の和"""
    return float(np.linalg.svd(np.asarray(m, dtype=complex), compute_uv=False).sum())


def trace_norm_hermitian(h: np.ndarray) -> float:
    """エルミート行列の固有値の絶対値の和"""
    return float(np.abs(sla.eigvalsh(check_hermitian(h, DECOMP_TOL))).sum())


def _psd_sqrt(rho: np.ndarray) -> np.ndarray:
    w, v = sla.eigh(rho)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def uhlmann_fidelity(rho1: DensityMatrix, rho2: DensityMatrix) -> float:
    """f_ρ = (Tr√(√ρ₁ ρ₂ √ρ₁))²"""
    if rho1.dim != rho2.dim:
        raise ValueError(f"次元が一致しません: {rho1.dim} vs {rho2.dim}")
    root = _psd_sqrt(rho1.entries)
    inner = root @ rho2.entries @ root
    inner = 0.5 * (inner + inner.conj().T)
    eigs = np.clip(sla.eigvalsh(inner), 0.0, None)
    return float(min(max(np.sqrt(eigs).sum() ** 2, 0.0), 1.0))


def bures_distance(rho1: DensityMatrix, rho2: DensityMatrix) -> float:
    """d_B = √(2 − 2√f_ρ)"""
    f = uhlmann_fidelity(rho1, rho2)
    return float(np.sqrt(max(2.0 - 2.0 * np.sqrt(f), 0.0)))
