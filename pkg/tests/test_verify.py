"""verify.py のユニットテスト（重いスイートは小さい規模で一部だけ）"""

import numpy as np
import pytest

from verify import (
    DEFAULT_SUITES,
    SUITES,
    CheckResult,
    RunningMoments,
    _check,
    check_commutator_identity,
    check_eqfim_forms,
    check_fidelity_sandwich,
    check_gradient_oracles,
    check_sequential_measurement,
    check_trace_norms,
    check_update_equivalence,
    family_z,
    format_report,
    random_circuit,
    run_verify,
)


class TestStatistics:
    def test_family_z_single(self):
        """1成分なら約 3σ"""
        assert family_z(1) == pytest.approx(3.0, abs=0.01)

    def test_family_z_grows(self):
        assert family_z(1) < family_z(10) < family_z(1000)

    def test_running_moments(self, rng):
        values = rng.normal(size=(500, 3))
        moments = RunningMoments((3,))
        for v in values:
            moments.add(v)
        assert np.allclose(moments.mean, values.mean(axis=0))
        assert np.allclose(moments.stderr, values.std(axis=0, ddof=1) / np.sqrt(500))


class TestCheckResult:
    def test_line(self):
        ok = CheckResult("identities", "trace_norms", 1e-12, 1e-8, True, "instances=5")
        assert ok.line().startswith("[PASS] identities/trace_norms:")
        assert ok.line().endswith("(instances=5)")
        bad = CheckResult("geometry", "amari_limit", 0.2, 1e-3, False)
        assert bad.line().startswith("[FAIL]")

    def test_check_logs_failure(self, caplog):
        result = _check("s", "n", 2.0, 1.0)
        assert not result.passed
        assert any(r.levelname == "ERROR" for r in caplog.records)

    def test_explicit_passed(self):
        assert _check("s", "n", 2.0, 1.0, passed=True).passed

    def test_format_report(self):
        results = [CheckResult("a", "x", 0.0, 1.0, True), CheckResult("a", "y", 2.0, 1.0, False)]
        report = format_report(results)
        assert report.splitlines()[-1] == "合計 2 件中 1 件成功、1 件失敗"


class TestChecks:
    def test_random_circuit(self, rng):
        circuit = random_circuit(3, 2, rng)
        assert circuit.num_params == 6
        assert circuit.layers[0].cnots == ((0, 1), (1, 2))

    def test_commutator_identity(self, rng):
        assert check_commutator_identity(rng, 20).passed

    def test_update_equivalence(self, rng):
        assert check_update_equivalence(rng, 20).passed

    def test_eqfim_forms(self, rng):
        assert check_eqfim_forms(rng, 3).passed

    def test_trace_norms(self, rng):
        assert check_trace_norms(rng, 10).passed

    def test_fidelity_sandwich(self, rng):
        """根忠実度の挟み込みと d_B ≤ d_E"""
        result = check_fidelity_sandwich(rng, 200)
        assert result.passed
        assert result.statistic <= 1e-8

    def test_gradient_oracles(self, rng):
        assert all(r.passed for r in check_gradient_oracles(rng))

    def test_sequential_measurement(self, rng):
        assert check_sequential_measurement(rng, 3, 3000).passed


class TestRunVerify:
    def test_suite_registry(self):
        assert set(DEFAULT_SUITES) <= set(SUITES)
        assert "training" not in DEFAULT_SUITES

    def test_unknown_suite(self):
        with pytest.raises(ValueError, match="不明な検証スイート"):
            run_verify(["nope"])

    def test_thresholds(self):
        """min_beta の表と Helstrom 測定は小さい規模でも一致"""
        results = run_verify(["thresholds"], seed=1, scale=0.1)
        by_name = {r.name: r for r in results}
        assert all(by_name[f"min_beta({c})"].passed for c in (9, 16, 30, 36, 48))
        assert by_name["helstrom_povm"].passed
        assert all(r.suite == "thresholds" for r in results)
