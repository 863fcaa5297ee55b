"""合成量子データセットと損失評価

3種類の d 量子ビット状態 φ₁/φ₂/φ₃ を等確率で生成し、φ₁ にラベル +1、それ以外に −1 を付ける。
バッチは (seed, バッチ番号) だけで決まるので、状態ベクトルを保存せずに再生できる。
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from pqc import LayeredCircuit, forward
from simcore import LabeledEnsemble, Povm, StateVector, measure_povm, trace_norm_hermitian

logger = logging.getLogger(__name__)

LABELS = (1, -1)
# 検証用バッチの乱数キー（学習用バッチ番号と衝突しない）
_TRAIN_KEY = 0
_VALIDATION_KEY = 1


@dataclass(frozen=True)
class LabeledSample:
    """ラベル付き純粋状態 (|φ_x⟩, y)"""

    state: StateVector
    label: int

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"ラベルは ±1 である必要があります: {self.label}")


@dataclass(frozen=True)
class Batch:
    """N 個のラベル付きサンプル"""

    samples: tuple[LabeledSample, ...]

    def __post_init__(self):
        if not self.samples:
            raise ValueError("空のバッチです")

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[LabeledSample]:
        return iter(self.samples)

    def __getitem__(self, index: int) -> LabeledSample:
        return self.samples[index]

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples])


# =============================================================================
# データ生成
# =============================================================================

def class_amplitudes(num_qubits: int, u: np.ndarray, kind: int) -> np.ndarray:
    """u を φ_kind（kind ∈ {1,2,3}）の振幅に配置して正規化"""
    dim = 2**num_qubits
    amps = np.zeros(dim, dtype=complex)
    j = np.arange(dim // 2)
    if kind == 1:
        amps[2 * j] = u
    else:
        index = 2 * j + (j % 2 == 0)
        signs = (-1.0) ** ((j % 2) + 1) if kind == 2 else np.ones_like(u)
        amps[index] = signs * u
    return amps / np.linalg.norm(amps)


def generate_sample(num_qubits: int, rng: np.random.Generator) -> LabeledSample:
    """u ~ U[0,1]^{2^{d−1}} と等確率のクラスから1サンプルを生成"""
    if num_qubits < 2:
        raise ValueError(f"量子ビット数は 2 以上が必要です: {num_qubits}")
    u = rng.random(2 ** (num_qubits - 1))
    kind = int(rng.integers(3)) + 1
    amps = class_amplitudes(num_qubits, u, kind)
    return LabeledSample(state=StateVector(amps), label=1 if kind == 1 else -1)


class DatasetStream:
    """(seed, バッチ番号) で再生可能なバッチ列"""

    def __init__(self, num_qubits: int, seed: int, max_batches: int | None = None):
        if num_qubits < 2:
            raise ValueError(f"量子ビット数は 2 以上が必要です: {num_qubits}")
        self.num_qubits = num_qubits
        self.seed = seed
        self.max_batches = max_batches

    def _generate(self, key: Sequence[int], size: int) -> Batch:
        if size <= 0:
            raise ValueError(f"バッチサイズは正である必要があります: {size}")
        rng = np.random.default_rng([self.seed, *key])
        return Batch(tuple(generate_sample(self.num_qubits, rng) for _ in range(size)))

    def batch(self, index: int, size: int) -> Batch:
        """学習用バッチ index"""
        if index < 0:
            raise ValueError(f"バッチ番号が負です: {index}")
        if self.max_batches is not None and index >= self.max_batches:
            raise RuntimeError(f"データストリームが尽きました: batch={index}, max={self.max_batches}")
        return self._generate((_TRAIN_KEY, index), size)

    def validation_batch(self, size: int) -> Batch:
        """学習用とは独立な検証用バッチ"""
        return self._generate((_VALIDATION_KEY,), size)


def dataset_ensemble(batch: Batch) -> LabeledEnsemble:
    """バッチを一様重みのアンサンブルとして扱う"""
    return LabeledEnsemble.uniform([s.state for s in batch], [s.label for s in batch])


def export_dataset_csv(stream: DatasetStream, num_batches: int, batch_size: int, path: Path | str) -> Path:
    """(batch, index, label, 振幅の re/im) を CSV に書き出す"""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    dim = 2**stream.num_qubits
    fieldnames = ["batch", "index", "label"] + [f"{part}{k}" for k in range(dim) for part in ("re", "im")]
    with open(out, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(fieldnames)
        for b in range(num_batches):
            for i, sample in enumerate(stream.batch(b, batch_size)):
                amps = sample.state.amplitudes
                values = [repr(float(x)) for pair in zip(amps.real, amps.imag) for x in pair]
                writer.writerow([b, i, sample.label, *values])
    logger.info("データセットを書き出しました: %s (%d バッチ × %d)", out, num_batches, batch_size)
    return out


# =============================================================================
# 測定 POVM
# =============================================================================

def parity_povm(num_qubits: int) -> Povm:
    """分類用の射影 POVM {Λ₊₁, Λ₋₁}

    d=3 はハミング重みが偶数の基底、それ以外は10進インデックスが偶数の基底で Λ₊₁ を作る。
    """
    dim = 2**num_qubits
    index = np.arange(dim)
    if num_qubits == 3:
        mask = np.array([bin(k).count("1") % 2 == 0 for k in index])
    else:
        mask = index % 2 == 0
    plus = np.diag(mask.astype(float)).astype(complex)
    return Povm(labels=LABELS, operators=(plus, np.eye(dim, dtype=complex) - plus))


def _signed_mean_density(batch: Batch) -> np.ndarray:
    """(1/N) Σ y_j Φ_j"""
    amps = np.array([s.state.amplitudes for s in batch])
    return (amps.T * batch.labels) @ amps.conj() / len(batch)


def helstrom_povm(batch: Batch) -> Povm:
    """(1/N)Σ y_jΦ_j の正の固有空間への射影を Λ₊₁ とする最適測定"""
    gamma = _signed_mean_density(batch)
    w, v = np.linalg.eigh(0.5 * (gamma + gamma.conj().T))
    positive = v[:, w > 0]
    plus = positive @ positive.conj().T
    dim = gamma.shape[0]
    return Povm(labels=LABELS, operators=(plus, np.eye(dim, dtype=complex) - plus))


# =============================================================================
# 損失
# =============================================================================

def _state_expected_loss(state: StateVector, label: int, povm: Povm, lossfn) -> float:
    probs = povm.probabilities(state)
    return float(sum(lossfn(label, y_hat) * p for y_hat, p in zip(povm.labels, probs)))


def per_sample_expected_loss(
    circuit: LayeredCircuit, theta: np.ndarray, povm: Povm, sample: LabeledSample, lossfn
) -> float:
    """𝓛(θ, |φ_x⟩, y) = Σ_ŷ ℓ(y,ŷ) Tr{Λ_ŷ U Φ_x U†}"""
    return _state_expected_loss(forward(circuit, theta, sample.state), sample.label, povm, lossfn)


def measurement_expected_loss(povm: Povm, batch: Sequence[LabeledSample], lossfn) -> float:
    """回路を通さずに POVM だけで測った平均期待損失"""
    if len(batch) == 0:
        raise ValueError("空のバッチです")
    return float(np.mean([_state_expected_loss(s.state, s.label, povm, lossfn) for s in batch]))


def average_expected_loss(
    circuit: LayeredCircuit, theta: np.ndarray, povm: Povm, batch: Sequence[LabeledSample], lossfn
) -> float:
    """サンプルごとの期待損失の算術平均"""
    if len(batch) == 0:
        raise ValueError("空のバッチです")
    return float(np.mean([per_sample_expected_loss(circuit, theta, povm, s, lossfn) for s in batch]))


def empirical_loss(
    circuit: LayeredCircuit, theta: np.ndarray, povm: Povm, batch: Sequence[LabeledSample], rng: np.random.Generator
) -> float:
    """1ショット測定で誤分類した割合"""
    if len(batch) == 0:
        raise ValueError("空のバッチです")
    errors = sum(measure_povm(forward(circuit, theta, s.state), povm, rng) != s.label for s in batch)
    return errors / len(batch)


def optimal_expected_loss(batch: Batch) -> float:
    """Holevo–Helstrom 限界 ½(1 − ‖(1/N)Σ y_jΦ_j‖₁)"""
    return 0.5 * (1.0 - trace_norm_hermitian(_signed_mean_density(batch)))
