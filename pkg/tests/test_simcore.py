"""simcore.py のユニットテスト"""

import numpy as np
import pytest

from simcore import (
    PAULI,
    DensityMatrix,
    LabeledEnsemble,
    Povm,
    StateVector,
    apply_cnot,
    apply_pauli_rotation,
    apply_unitary,
    bures_distance,
    ensemble_density,
    expectation,
    measure_pauli,
    measure_povm,
    pauli_operator,
    pauli_outcome_probability,
    random_state,
    rotation_matrix,
    trace_norm,
    trace_norm_hermitian,
    uhlmann_fidelity,
)


class TestStateVector:
    def test_basis_and_plus(self):
        """基底状態と |+⟩ の振幅"""
        assert np.allclose(StateVector.basis(2, 3).amplitudes, [0, 0, 0, 1])
        assert np.allclose(StateVector.plus(1).amplitudes, [1 / np.sqrt(2)] * 2)

    def test_rejects_unnormalized(self):
        """正規化されていない振幅は拒否"""
        with pytest.raises(ValueError):
            StateVector([1.0, 1.0])

    def test_rejects_bad_length(self):
        """長さが 2^d でなければ拒否"""
        with pytest.raises(ValueError):
            StateVector([1.0, 0.0, 0.0], normalize=True)

    def test_normalize(self):
        state = StateVector([3.0, 4.0], normalize=True)
        assert state.norm_squared() == pytest.approx(1.0)

    def test_with_ancilla_and_drop(self):
        """補助ビットを付けて外すと元に戻る"""
        state = StateVector([0.6, 0.8j])
        extended = state.with_ancilla([0.0, 1.0])
        assert extended.num_qubits == 2
        assert np.allclose(extended.drop_last_qubit(1).amplitudes, state.amplitudes)

    def test_drop_empty_branch(self):
        """存在しない分岐は RuntimeError"""
        extended = StateVector.basis(1, 0).with_ancilla([1.0, 0.0])
        with pytest.raises(RuntimeError):
            extended.drop_last_qubit(1)


class TestGates:
    def test_bit_order_msb(self):
        """量子ビット 0 が最上位ビット"""
        x = rotation_matrix("X", np.pi)
        out = apply_unitary(StateVector.basis(2, 0), x, [0])
        assert abs(out.amplitudes[2]) == pytest.approx(1.0)

    def test_cnot(self):
        """|10⟩ → |11⟩"""
        out = apply_cnot(StateVector.basis(2, 2), 0, 1)
        assert np.allclose(np.abs(out.amplitudes), [0, 0, 0, 1])

    def test_rotation_matches_dense(self, rng):
        """回転の適用が埋め込んだ密行列と一致"""
        state = random_state(3, rng)
        out = apply_pauli_rotation(state, 1, "Y", 0.7)
        dense = np.kron(np.kron(np.eye(2), rotation_matrix("Y", 0.7)), np.eye(2))
        assert np.allclose(out.amplitudes, dense @ state.amplitudes)

    def test_two_qubit_unitary_on_reordered_qubits(self, rng):
        """対象量子ビットの順序が入れ替わっても密行列と一致"""
        state = random_state(3, rng)
        cnot = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
        out = apply_unitary(state, cnot, [2, 0])
        expected = apply_cnot(state, 2, 0)
        assert np.allclose(out.amplitudes, expected.amplitudes)

    def test_rejects_non_unitary(self):
        with pytest.raises(ValueError):
            apply_unitary(StateVector.basis(1), np.array([[1, 1], [0, 1]]), [0])

    def test_rejects_qubit_out_of_range(self):
        with pytest.raises(ValueError):
            apply_pauli_rotation(StateVector.basis(2), 2, "X", 0.1)

    def test_rejects_unknown_axis(self):
        with pytest.raises(ValueError):
            rotation_matrix("W", 0.1)


class TestMeasurement:
    def test_pauli_probability(self):
        """|+⟩ の X 測定は確定、Z 測定は半々"""
        plus = StateVector.plus(1)
        assert pauli_outcome_probability(plus, 0, "X") == pytest.approx(1.0)
        assert pauli_outcome_probability(plus, 0, "Z") == pytest.approx(0.5)

    def test_collapse(self, rng):
        """測定後の状態は測定した固有空間にある"""
        state = random_state(2, rng)
        outcome, collapsed = measure_pauli(state, 1, "Z", rng)
        assert pauli_outcome_probability(collapsed, 1, "Z") == pytest.approx(1.0 if outcome == 1 else 0.0)
        assert collapsed.norm_squared() == pytest.approx(1.0)

    def test_outcome_frequency(self, rng):
        """+1 の頻度が Born 則に従う（4σ）"""
        state = random_state(1, rng)
        p = pauli_outcome_probability(state, 0, "Y")
        n = 20_000
        hits = sum(measure_pauli(state, 0, "Y", rng)[0] == 1 for _ in range(n))
        assert abs(hits / n - p) <= 4 * np.sqrt(p * (1 - p) / n) + 1e-3

    def test_povm_validation(self):
        """和が単位行列でない POVM は拒否"""
        with pytest.raises(ValueError):
            Povm(labels=(0, 1), operators=(np.diag([1, 0]), np.diag([1, 0])))

    def test_povm_sampling(self, rng):
        """確定的な POVM は常に同じラベル"""
        povm = Povm(labels=("a", "b"), operators=(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])))
        assert all(measure_povm(StateVector.basis(1, 1), povm, rng) == "b" for _ in range(50))

    def test_non_diagonal_povm(self):
        """非対角 POVM の確率"""
        plus_proj = 0.5 * np.ones((2, 2))
        povm = Povm(labels=(1, -1), operators=(plus_proj, np.eye(2) - plus_proj))
        assert np.allclose(povm.probabilities(StateVector.plus(1)), [1.0, 0.0])


class TestOracles:
    def test_expectation_forms_agree(self, rng):
        """状態ベクトルと密度行列で期待値が一致"""
        state = random_state(2, rng)
        obs = pauli_operator(2, 0, "X") + 0.5 * pauli_operator(2, 1, "Z")
        assert expectation(state, obs) == pytest.approx(expectation(DensityMatrix.from_state(state), obs))

    def test_pauli_operator_embedding(self):
        assert np.allclose(pauli_operator(2, 1, "Z"), np.kron(np.eye(2), PAULI["Z"]))

    def test_trace_norms_agree(self, rng):
        x = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        h = x + x.conj().T
        assert trace_norm(h) == pytest.approx(trace_norm_hermitian(h), abs=1e-8)

    def test_fidelity_of_identical_states(self, rng):
        rho = DensityMatrix.from_state(random_state(2, rng))
        assert uhlmann_fidelity(rho, rho) == pytest.approx(1.0, abs=1e-6)
        assert bures_distance(rho, rho) == pytest.approx(0.0, abs=1e-3)

    def test_fidelity_of_orthogonal_states(self):
        rho0 = DensityMatrix.from_state(StateVector.basis(1, 0))
        rho1 = DensityMatrix.from_state(StateVector.basis(1, 1))
        assert uhlmann_fidelity(rho0, rho1) == pytest.approx(0.0, abs=1e-12)
        assert bures_distance(rho0, rho1) == pytest.approx(np.sqrt(2.0))


class TestLabeledEnsemble:
    def test_density_trace(self, random_ensemble):
        rho = ensemble_density(random_ensemble)
        assert np.trace(rho.entries).real == pytest.approx(1.0)

    def test_rejects_bad_weights(self):
        with pytest.raises(ValueError):
            LabeledEnsemble([0.5, 0.6], [StateVector.basis(1), StateVector.basis(1, 1)], [1, -1])

    def test_sample_returns_member(self, rng):
        states = [StateVector.basis(1, 0), StateVector.basis(1, 1)]
        ensemble = LabeledEnsemble.uniform(states, ["a", "b"])
        state, label = ensemble.sample(rng)
        assert label in ("a", "b")
        assert state is states[["a", "b"].index(label)]
