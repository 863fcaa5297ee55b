"""層状パラメータ化量子回路 U(θ) = V_L U_L(θ_L)···V_1 U_1(θ_1)

各層は量子ビットごとのパウリ回転軸と、固定エンタングラ（CNOT のリスト）を持つ。
座標 i は (層 a, 量子ビット p) = (i // d + 1, i % d) に対応する（層は 1 始まり）。
"""

import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from simcore import (
    StateVector,
    apply_1q_inplace,
    apply_cnot_inplace,
    check_axis,
    pauli_operator,
    rotation_matrix,
)

logger = logging.getLogger(__name__)

# 組み込み回路の記述ファイル
CIRCUITS_DIR = Path(__file__).parent.parent / "circuits"
BUILTIN_CIRCUITS = ("Q3L3", "Q4L4", "Q5P1", "Q5P2", "Q6P1", "Q6P2")

_LINE_PATTERN = re.compile(r"^\s*axes\s*=\s*([XYZxyz]+)\s*;\s*cnots\s*=\s*(.*?)\s*$")
_PAIR_PATTERN = re.compile(r"\(\s*(\d+)\s*,\s*(\d+)\s*\)")


@dataclass(frozen=True)
class Layer:
    """1層分の回転軸とエンタングラ"""

    axes: tuple[str, ...]
    cnots: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class LayeredCircuit:
    """層状 PQC（構築後は不変）"""

    num_qubits: int
    layers: tuple[Layer, ...]
    name: str = "custom"

    def __post_init__(self):
        if self.num_qubits < 1:
            raise ValueError(f"量子ビット数が不正です: {self.num_qubits}")
        if not self.layers:
            raise ValueError("層が1つもありません")
        for index, layer in enumerate(self.layers, start=1):
            if len(layer.axes) != self.num_qubits:
                raise ValueError(f"層 {index} の回転軸の数が {self.num_qubits} ではありません")
            for axis in layer.axes:
                check_axis(axis)
            for control, target in layer.cnots:
                if control == target:
                    raise ValueError(f"層 {index}: 制御と標的が同じです ({control},{target})")
                if not (0 <= control < self.num_qubits and 0 <= target < self.num_qubits):
                    raise ValueError(f"層 {index}: CNOT の番号が範囲外です ({control},{target})")

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def num_params(self) -> int:
        """c = d × L"""
        return self.num_qubits * self.num_layers

    def locate(self, coord: int) -> tuple[int, int]:
        """座標 → (層 a（1始まり）, 量子ビット p)"""
        if not 0 <= coord < self.num_params:
            raise ValueError(f"座標が範囲外です: {coord} (c={self.num_params})")
        return CoordPair.layer_qubit(coord, self.num_qubits)

    def axis_of(self, coord: int) -> str:
        layer, qubit = self.locate(coord)
        return self.layers[layer - 1].axes[qubit]


@dataclass(frozen=True)
class CoordPair:
    """異なる2座標。first の層 ≤ second の層となるよう正規化済み"""

    first: int
    second: int

    def __post_init__(self):
        if self.first == self.second:
            raise ValueError(f"座標が重複しています: {self.first}")
        # 層→量子ビットの辞書順は平坦化した座標の大小と一致する
        if self.first > self.second:
            raise ValueError(f"座標ペアが正規化されていません: ({self.first}, {self.second})")

    @classmethod
    def of(cls, i: int, j: int) -> "CoordPair":
        return cls(min(i, j), max(i, j))

    @staticmethod
    def layer_qubit(coord: int, num_qubits: int) -> tuple[int, int]:
        """座標 → (層 a（1始まり）, 量子ビット p)"""
        if coord < 0 or num_qubits < 1:
            raise ValueError(f"座標が不正です: coord={coord}, d={num_qubits}")
        return coord // num_qubits + 1, coord % num_qubits


def draw_coord_pair(c: int, rng: np.random.Generator) -> CoordPair:
    """c(c−1) 通りの順序付きペアから一様に引いて正規化"""
    if c < 2:
        raise ValueError(f"パラメータ数が足りません: c={c}")
    i = int(rng.integers(c))
    j = int(rng.integers(c - 1))
    if j >= i:
        j += 1
    return CoordPair.of(i, j)


def random_parameters(c: int, rng: np.random.Generator) -> np.ndarray:
    """θ ~ U[0, 2π)^c"""
    return rng.uniform(0.0, 2.0 * np.pi, size=c)


def _check_theta(circuit: LayeredCircuit, theta: np.ndarray) -> np.ndarray:
    values = np.asarray(theta, dtype=float).reshape(-1)
    if values.shape[0] != circuit.num_params:
        raise ValueError(f"θ の長さが c={circuit.num_params} と一致しません: {values.shape[0]}")
    return values


# =============================================================================
# 回路の評価
# =============================================================================

def forward_range(
    circuit: LayeredCircuit,
    theta: np.ndarray,
    state: StateVector,
    from_layer: int,
    to_layer: int,
) -> StateVector:
    """層 from_layer..to_layer−1 を適用（1 ≤ a ≤ b ≤ L+1）

    状態が回路より多くの量子ビットを持つ場合、末尾の量子ビット（補助ビット）には作用しない。
    """
    values = _check_theta(circuit, theta)
    if not 1 <= from_layer <= to_layer <= circuit.num_layers + 1:
        raise ValueError(f"層の範囲が不正です: [{from_layer}, {to_layer}) (L={circuit.num_layers})")
    if state.num_qubits < circuit.num_qubits:
        raise ValueError(f"状態の量子ビット数が足りません: {state.num_qubits} < {circuit.num_qubits}")

    out = state.copy()
    n = out.num_qubits
    d = circuit.num_qubits
    for a in range(from_layer, to_layer):
        layer = circuit.layers[a - 1]
        angles = values[(a - 1) * d: a * d]
        for qubit, (axis, angle) in enumerate(zip(layer.axes, angles)):
            if angle != 0.0:
                apply_1q_inplace(out.amplitudes, n, qubit, rotation_matrix(axis, angle))
        for control, target in layer.cnots:
            apply_cnot_inplace(out.amplitudes, n, control, target)
    return out


def forward(circuit: LayeredCircuit, theta: np.ndarray, state: StateVector) -> StateVector:
    """U(θ)|state⟩"""
    if state.num_qubits != circuit.num_qubits:
        raise ValueError(f"入力状態の量子ビット数が一致しません: {state.num_qubits} != {circuit.num_qubits}")
    return forward_range(circuit, theta, state, 1, circuit.num_layers + 1)


def dense_unitary(
    circuit: LayeredCircuit,
    theta: np.ndarray,
    from_layer: int = 1,
    to_layer: int | None = None,
) -> np.ndarray:
    """層 from_layer..to_layer−1 の密行列（オラクル用）"""
    stop = circuit.num_layers + 1 if to_layer is None else to_layer
    dim = 2**circuit.num_qubits
    columns = [
        forward_range(circuit, theta, StateVector.basis(circuit.num_qubits, k), from_layer, stop).amplitudes
        for k in range(dim)
    ]
    return np.array(columns).T


def upsilon(circuit: LayeredCircuit, theta: np.ndarray, coord: int) -> np.ndarray:
    """Υ = W†(σ/2)W。W は層 1..a−1 の積"""
    layer, qubit = circuit.locate(coord)
    w = dense_unitary(circuit, theta, 1, layer)
    sigma = pauli_operator(circuit.num_qubits, qubit, circuit.layers[layer - 1].axes[qubit])
    return w.conj().T @ (0.5 * sigma) @ w


# =============================================================================
# 回路記述ファイル
# =============================================================================

def parse_circuit(text: str, name: str = "custom") -> LayeredCircuit:
    """`axes=YZY ; cnots=(c,t)(c,t)` 形式（1行1層、量子ビットは 0 始まり）を読み込む"""
    layers: list[Layer] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        match = _LINE_PATTERN.match(line)
        if match is None:
            raise ValueError(f"{name}: {lineno} 行目の書式が不正です: {raw!r}")
        axes = tuple(match.group(1).upper())
        pairs_text = match.group(2)
        pairs = tuple((int(c), int(t)) for c, t in _PAIR_PATTERN.findall(pairs_text))
        if _PAIR_PATTERN.sub("", pairs_text).strip():
            raise ValueError(f"{name}: {lineno} 行目の CNOT 指定が不正です: {pairs_text!r}")
        layers.append(Layer(axes=axes, cnots=pairs))
    if not layers:
        raise ValueError(f"{name}: 層が定義されていません")
    widths = {len(layer.axes) for layer in layers}
    if len(widths) != 1:
        raise ValueError(f"{name}: 層ごとの量子ビット数が揃っていません: {sorted(widths)}")
    return LayeredCircuit(num_qubits=widths.pop(), layers=tuple(layers), name=name)


def format_circuit(circuit: LayeredCircuit) -> str:
    """parse_circuit と逆向きの書き出し"""
    lines = []
    for layer in circuit.layers:
        cnots = "".join(f"({c},{t})" for c, t in layer.cnots)
        lines.append(f"axes={''.join(layer.axes)} ; cnots={cnots}")
    return "\n".join(lines) + "\n"


def load_circuit_file(path: Path | str) -> LayeredCircuit:
    file_path = Path(path)
    circuit = parse_circuit(file_path.read_text(encoding="utf-8"), name=file_path.stem)
    logger.debug("回路を読み込みました: %s (d=%d, L=%d)", file_path, circuit.num_qubits, circuit.num_layers)
    return circuit


def builtin_circuit(name: str) -> LayeredCircuit:
    """組み込み回路（circuits/<name>.txt）"""
    if name not in BUILTIN_CIRCUITS:
        raise ValueError(f"不明な回路名です: {name!r} (候補: {', '.join(BUILTIN_CIRCUITS)})")
    return load_circuit_file(CIRCUITS_DIR / f"{name}.txt")


def resolve_circuit(name_or_path: str) -> LayeredCircuit:
    """組み込み名またはファイルパスから回路を得る"""
    if name_or_path in BUILTIN_CIRCUITS:
        return builtin_circuit(name_or_path)
    path = Path(name_or_path)
    if not path.exists():
        raise ValueError(f"回路が見つかりません: {name_or_path!r}")
    return load_circuit_file(path)

