"""テスト共通フィクスチャ"""

import sys
from pathlib import Path

# src/ をPythonパスに追加
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

import numpy as np
import pytest

from dataset import DatasetStream, parity_povm
from gradient import zero_one_loss
from pqc import Layer, LayeredCircuit, builtin_circuit, random_parameters
from simcore import LabeledEnsemble


@pytest.fixture
def rng():
    """固定シードの乱数生成器"""
    return np.random.default_rng(20240601)


@pytest.fixture
def q3l3():
    """3 量子ビット・3 層の組み込み回路"""
    return builtin_circuit("Q3L3")


@pytest.fixture
def mixed_circuit():
    """回転軸が混在した 2 量子ビット・3 層の回路"""
    return LayeredCircuit(
        num_qubits=2,
        layers=(
            Layer(axes=("X", "Y"), cnots=((0, 1),)),
            Layer(axes=("Z", "X"), cnots=((1, 0),)),
            Layer(axes=("Y", "Z"), cnots=()),
        ),
        name="mixed",
    )


@pytest.fixture
def theta_q3l3(q3l3, rng):
    return random_parameters(q3l3.num_params, rng)


@pytest.fixture
def random_ensemble(rng):
    """3 量子ビットのランダムなアンサンブル（4 状態）"""
    return LabeledEnsemble.random(3, 4, rng)


@pytest.fixture
def small_batch():
    """3 量子ビットのデータセットから 8 サンプル"""
    return DatasetStream(3, seed=7).batch(0, 8)


@pytest.fixture
def povm3():
    return parity_povm(3)


@pytest.fixture
def lossfn():
    return zero_one_loss()
