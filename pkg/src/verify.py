"""検証スイート - 推定量の不偏性・恒等式・閾値・幾何デモ・学習の受け入れ確認

各チェックは統計量と許容値を報告する。モンテカルロ系のチェックは
複数成分をまとめて判定するので、片側あたり 3σ 相当（両側 0.27%）を
成分数で Bonferroni 補正した z 値を許容値に使う。
"""

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from dataset import (
    DatasetStream,
    LabeledSample,
    average_expected_loss,
    dataset_ensemble,
    helstrom_povm,
    measurement_expected_loss,
    optimal_expected_loss,
    parity_povm,
)
from experiment import run_experiment
from geometry_demo import (
    PolarPoint,
    amari_quadratic_form,
    demo_loss,
    demo_loss_simulated,
    fubini_study_demo_metric,
    fubini_study_oracle,
    min_boundary_distance,
    pl_lhs,
    qgi_quadratic_form,
    quantum_fisher_demo_metric,
    run_demo_suite,
    suboptimality,
)
from gradient import (
    SparseGradient,
    commutator_observable_pair,
    estimate_coords_gradient,
    estimate_pair_gradient,
    exact_expected_gradient,
    exact_per_sample_gradient,
    parameter_shift_partial,
    zero_one_loss,
)
from metric import (
    average_pure_fidelity,
    average_pure_root_fidelity,
    block_from_outcomes,
    embed_regularize,
    ensemble_distance,
    ensemble_fidelity,
    estimate_block,
    exact_eqfim,
    exact_eqfim_real_form,
    min_beta,
    output_density,
    sequential_anticommutator_sample,
)
from optimizer import OptimizerKind, qnscd_step, qnscd_step_dense
from pqc import Layer, LayeredCircuit, builtin_circuit, draw_coord_pair, random_parameters, upsilon
from settings import ExperimentConfig
from simcore import (
    AXES,
    LabeledEnsemble,
    bures_distance,
    random_state,
    trace_norm,
    trace_norm_hermitian,
    uhlmann_fidelity,
)

logger = logging.getLogger(__name__)

FAMILY_ALPHA = 0.0027  # 3σ の両側確率
ABS_FLOOR = 1e-9

PUBLISHED_BETA_THRESHOLDS = {9: 0.643, 16: 0.572, 30: 0.536, 36: 0.5295, 48: 0.5218}
OPTIMAL_ACCURACY_BAND = (0.863, 0.883)


@dataclass(frozen=True)
class CheckResult:
    """1つのチェックの結果"""

    suite: str
    name: str
    statistic: float
    bound: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        text = f"[{mark}] {self.suite}/{self.name}: 統計量={self.statistic:.6g} 許容値={self.bound:.6g}"
        return f"{text} ({self.detail})" if self.detail else text


def _check(suite: str, name: str, statistic: float, bound: float, passed: bool | None = None, detail: str = "") -> CheckResult:
    ok = bool(statistic <= bound) if passed is None else bool(passed)
    result = CheckResult(suite, name, float(statistic), float(bound), ok, detail)
    if ok:
        logger.info("%s", result.line())
    else:
        logger.error("%s", result.line())
    return result


def family_z(family_size: int, alpha: float = FAMILY_ALPHA) -> float:
    """成分数 family_size で補正した両側 z 値（1成分なら約 3.0）"""
    return float(stats.norm.isf(alpha / (2.0 * max(family_size, 1))))


class RunningMoments:
    """配列値サンプルの平均と標準誤差を逐次計算"""

    def __init__(self, shape: tuple[int, ...]):
        self.count = 0
        self.total = np.zeros(shape)
        self.total_sq = np.zeros(shape)

    def add(self, value: np.ndarray) -> None:
        self.count += 1
        self.total += value
        self.total_sq += value * value

    @property
    def mean(self) -> np.ndarray:
        return self.total / self.count

    @property
    def stderr(self) -> np.ndarray:
        var = np.maximum(self.total_sq / self.count - self.mean**2, 0.0) * self.count / max(self.count - 1, 1)
        return np.sqrt(var / self.count)


def _mc_check(suite: str, name: str, moments: RunningMoments, target: np.ndarray) -> CheckResult:
    """全成分が target ± z·SE に入るか"""
    diff = np.abs(moments.mean - np.asarray(target))
    sem = moments.stderr
    z = family_z(diff.size)
    ok = bool(np.all(diff <= z * sem + ABS_FLOOR))
    statistic = float(np.max(diff / np.maximum(sem, ABS_FLOOR)))
    return _check(suite, name, statistic, z, passed=ok, detail=f"draws={moments.count}, 成分数={diff.size}")


def _count(base: int, scale: float, minimum: int = 10) -> int:
    return max(int(base * scale), minimum)


# =============================================================================
# ランダムな問題インスタンス
# =============================================================================

def random_circuit(num_qubits: int, num_layers: int, rng: np.random.Generator) -> LayeredCircuit:
    """ランダムな回転軸と隣接 CNOT を持つ回路"""
    layers = []
    for _ in range(num_layers):
        axes = tuple(str(a) for a in rng.choice(AXES, size=num_qubits))
        cnots = tuple((q, q + 1) for q in range(num_qubits - 1))
        layers.append(Layer(axes=axes, cnots=cnots))
    return LayeredCircuit(num_qubits=num_qubits, layers=tuple(layers), name="random")


def _random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return 0.5 * (x + x.conj().T)


def _random_involution(dim: int, rng: np.random.Generator) -> np.ndarray:
    """A = U diag(±1) U†（A² = I）"""
    u = stats.unitary_group.rvs(dim, random_state=rng)
    signs = rng.choice([-1.0, 1.0], size=dim)
    return (u * signs) @ u.conj().T


def _random_density(dim: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


# =============================================================================
# identities
# =============================================================================

def check_commutator_identity(rng: np.random.Generator, instances: int, suite: str = "identities") -> CheckResult:
    """Tr([A,B]ρ) = 2i·Tr(O V (ρ⊗|+⟩⟨+|) V†)"""
    plus = np.full((2, 2), 0.5)
    worst = 0.0
    for _ in range(instances):
        dim = 2 ** int(rng.integers(1, 4))
        a = _random_involution(dim, rng)
        b = _random_hermitian(dim, rng)
        rho = _random_density(dim, rng)
        o, v = commutator_observable_pair(a, b)
        lhs = np.trace((a @ b - b @ a) @ rho)
        rhs = 2j * np.trace(o @ v @ np.kron(rho, plus) @ v.conj().T)
        worst = max(worst, abs(lhs - rhs))
    return _check(suite, "commutator_identity", worst, 1e-10, detail=f"instances={instances}")


def check_update_equivalence(rng: np.random.Generator, instances: int, suite: str = "identities") -> CheckResult:
    """c×c 形式と 2×2 形式の更新が一致する"""
    betas: dict[int, float] = {}
    worst = 0.0
    for _ in range(instances):
        c = int(rng.integers(3, 13))
        if c not in betas:
            betas[c] = min_beta(c)
        beta = betas[c] + 0.01 + float(rng.random())
        theta = random_parameters(c, rng)
        pair = draw_coord_pair(c, rng)
        outcomes = rng.choice([-1, 1], size=6)
        estimate = embed_regularize(block_from_outcomes(outcomes[0:2], outcomes[2:4], outcomes[4:6]), pair, c, beta)
        grad = SparseGradient(pair, (float(rng.normal()), float(rng.normal())), c)
        eta = float(rng.uniform(1e-3, 1.0))
        two = qnscd_step(theta, pair, estimate.tilde_block(), grad, eta, beta, c)
        dense = qnscd_step_dense(theta, estimate, grad, eta)
        worst = max(worst, float(np.max(np.abs(two - dense))))
    return _check(suite, "update_equivalence", worst, 1e-10, detail=f"instances={instances}")


def check_eqfim_forms(rng: np.random.Generator, instances: int, suite: str = "identities") -> CheckResult:
    worst = 0.0
    for _ in range(instances):
        circuit = random_circuit(int(rng.integers(2, 4)), int(rng.integers(1, 4)), rng)
        theta = random_parameters(circuit.num_params, rng)
        ensemble = LabeledEnsemble.random(circuit.num_qubits, 3, rng)
        diff = exact_eqfim(circuit, theta, ensemble) - exact_eqfim_real_form(circuit, theta, ensemble)
        worst = max(worst, float(np.max(np.abs(diff))))
    return _check(suite, "eqfim_forms", worst, 1e-10, detail=f"instances={instances}")


def check_trace_norms(rng: np.random.Generator, instances: int, suite: str = "identities") -> CheckResult:
    worst = 0.0
    for _ in range(instances):
        h = _random_hermitian(2 ** int(rng.integers(1, 5)), rng)
        worst = max(worst, abs(trace_norm(h) - trace_norm_hermitian(h)))
    return _check(suite, "trace_norms", worst, 1e-8, detail=f"instances={instances}")


def check_fidelity_sandwich(rng: np.random.Generator, instances: int, suite: str = "identities") -> CheckResult:
    """f_E ≤ Σ Q|⟨φ|φ′⟩|²、√f_E ≤ Σ Q|⟨φ|φ′⟩| ≤ √f_ρ、d_B ≤ d_E"""
    worst = -np.inf
    for _ in range(instances):
        circuit = random_circuit(2, 2, rng)
        ensemble = LabeledEnsemble.random(2, int(rng.integers(1, 5)), rng)
        theta = random_parameters(circuit.num_params, rng)
        theta_prime = random_parameters(circuit.num_params, rng)
        f_e = ensemble_fidelity(circuit, theta, theta_prime, ensemble)
        f_avg = average_pure_fidelity(circuit, theta, theta_prime, ensemble)
        root_avg = average_pure_root_fidelity(circuit, theta, theta_prime, ensemble)
        rho = output_density(circuit, theta, ensemble)
        rho_prime = output_density(circuit, theta_prime, ensemble)
        d_b = bures_distance(rho, rho_prime)
        d_e = ensemble_distance(circuit, theta, theta_prime, ensemble)
        worst = max(
            worst,
            f_e - f_avg,
            np.sqrt(f_e) - root_avg,
            root_avg - np.sqrt(uhlmann_fidelity(rho, rho_prime)),
            d_b - d_e,
        )
    return _check(suite, "fidelity_sandwich", worst, 1e-8, detail=f"instances={instances}")


def check_metric_geometry(rng: np.random.Generator, suite: str = "identities", directions: int = 10) -> list[CheckResult]:
    """d_E²(θ−dθ/2, θ+dθ/2) / dθᵀFdθ → 1"""
    circuit = builtin_circuit("Q3L3")
    theta = random_parameters(circuit.num_params, rng)
    ensemble = LabeledEnsemble.random(circuit.num_qubits, 4, rng)
    f = exact_eqfim(circuit, theta, ensemble)
    results = []
    for eps, tol in ((1e-2, 0.05), (1e-3, 0.005)):
        worst = 0.0
        for _ in range(directions):
            u = rng.normal(size=circuit.num_params)
            d_theta = eps * u / np.linalg.norm(u)
            d_e = ensemble_distance(circuit, theta - 0.5 * d_theta, theta + 0.5 * d_theta, ensemble)
            worst = max(worst, abs(d_e**2 / (d_theta @ f @ d_theta) - 1.0))
        results.append(_check(suite, f"metric_geometry(|dθ|={eps:g})", worst, tol, detail=f"directions={directions}"))
    return results


def identities_suite(rng: np.random.Generator, scale: float = 1.0) -> list[CheckResult]:
    n = _count(1000, scale)
    return [
        check_commutator_identity(rng, n),
        check_update_equivalence(rng, n),
        check_eqfim_forms(rng, _count(50, scale)),
        check_trace_norms(rng, _count(200, scale)),
        check_fidelity_sandwich(rng, n),
        *check_metric_geometry(rng),
    ]


# =============================================================================
# unbiasedness
# =============================================================================

def check_sequential_measurement(rng: np.random.Generator, instances: int, shots: int, suite: str = "unbiasedness") -> CheckResult:
    """E[u·w] = 2 Tr({Υ_k,Υ_l}ρ)"""
    zs = []
    for _ in range(instances):
        circuit = random_circuit(2, 2, rng)
        theta = random_parameters(circuit.num_params, rng)
        state = random_state(2, rng)
        pair = draw_coord_pair(circuit.num_params, rng)
        ups_k = upsilon(circuit, theta, pair.first)
        ups_l = upsilon(circuit, theta, pair.second)
        target = 2.0 * np.trace((ups_k @ ups_l + ups_l @ ups_k) @ state.density()).real
        products = np.array([np.prod(sequential_anticommutator_sample(circuit, theta, pair, state, rng)) for _ in range(shots)])
        sem = products.std(ddof=1) / np.sqrt(shots)
        zs.append(abs(products.mean() - target) / max(sem, ABS_FLOOR))
    z = family_z(instances)
    return _check(suite, "sequential_measurement", max(zs), z, detail=f"instances={instances}, shots={shots}")


def _gradient_instance(rng: np.random.Generator, size: int = 8):
    circuit = builtin_circuit("Q3L3")
    theta = random_parameters(circuit.num_params, rng)
    batch = DatasetStream(circuit.num_qubits, int(rng.integers(2**31))).batch(0, size)
    return circuit, theta, batch, parity_povm(circuit.num_qubits), zero_one_loss()


def check_metric_unbiased(rng: np.random.Generator, draws: int, suite: str = "unbiasedness") -> CheckResult:
    """E[Z̄] = F（ペア・サンプル・測定結果すべてについての平均）"""
    circuit = builtin_circuit("Q3L3")
    c = circuit.num_params
    theta = random_parameters(c, rng)
    ensemble = LabeledEnsemble.random(circuit.num_qubits, 4, rng)
    beta = min_beta(c) + 0.01
    moments = RunningMoments((c, c))
    for _ in range(draws):
        pair = draw_coord_pair(c, rng)
        samples = [ensemble.sample(rng)[0] for _ in range(4)]
        block = estimate_block(circuit, theta, pair, samples, rng)
        moments.add(embed_regularize(block, pair, c, beta).materialize())
    return _mc_check(suite, "metric_unbiased", moments, exact_eqfim(circuit, theta, ensemble))


def check_gradient_unbiased(rng: np.random.Generator, draws: int, suite: str = "unbiasedness") -> CheckResult:
    """E[(c/2)(g_ap e_ap + g_bq e_bq)] = ∇𝓛"""
    circuit, theta, batch, povm, lossfn = _gradient_instance(rng)
    ensemble = dataset_ensemble(batch)
    c = circuit.num_params
    moments = RunningMoments((c,))
    for _ in range(draws):
        pair = draw_coord_pair(c, rng)
        samples = [LabeledSample(*ensemble.sample(rng)) for _ in range(2)]
        moments.add(estimate_pair_gradient(circuit, theta, pair, samples, povm, lossfn, rng).materialize())
    return _mc_check(suite, "gradient_unbiased", moments, exact_expected_gradient(circuit, theta, povm, ensemble, lossfn))


def check_six_coordinate_unbiased(rng: np.random.Generator, draws: int, suite: str = "unbiasedness") -> CheckResult:
    circuit, theta, batch, povm, lossfn = _gradient_instance(rng)
    ensemble = dataset_ensemble(batch)
    c = circuit.num_params
    moments = RunningMoments((c,))
    for _ in range(draws):
        coords = rng.choice(c, size=6, replace=False)
        samples = [LabeledSample(*ensemble.sample(rng)) for _ in range(6)]
        moments.add(estimate_coords_gradient(circuit, theta, coords, samples, povm, lossfn, rng))
    return _mc_check(suite, "six_coordinate_unbiased", moments, exact_expected_gradient(circuit, theta, povm, ensemble, lossfn))


def check_gradient_oracles(rng: np.random.Generator, suite: str = "unbiasedness") -> list[CheckResult]:
    """厳密勾配と有限差分・パラメータシフト則の一致"""
    circuit, theta, batch, povm, lossfn = _gradient_instance(rng, size=4)
    ensemble = dataset_ensemble(batch)
    exact = exact_expected_gradient(circuit, theta, povm, ensemble, lossfn)

    h = 1e-5
    fd = np.empty_like(exact)
    for k in range(circuit.num_params):
        step = np.zeros_like(theta)
        step[k] = h
        fd[k] = (average_expected_loss(circuit, theta + step, povm, batch, lossfn)
                 - average_expected_loss(circuit, theta - step, povm, batch, lossfn)) / (2 * h)
    sample = batch[0]
    per_sample = exact_per_sample_gradient(circuit, theta, povm, sample, lossfn)
    shift = np.array([parameter_shift_partial(circuit, theta, k, povm, sample, lossfn) for k in range(circuit.num_params)])
    return [
        _check(suite, "finite_difference", float(np.max(np.abs(exact - fd))), 1e-6),
        _check(suite, "parameter_shift", float(np.max(np.abs(per_sample - shift))), 1e-10),
    ]


def unbiasedness_suite(rng: np.random.Generator, scale: float = 1.0) -> list[CheckResult]:
    return [
        check_sequential_measurement(rng, 20, _count(100_000, scale, 1000)),
        check_metric_unbiased(rng, _count(500_000, scale, 1000)),
        check_gradient_unbiased(rng, _count(500_000, scale, 1000)),
        check_six_coordinate_unbiased(rng, _count(100_000, scale, 1000)),
        *check_gradient_oracles(rng),
    ]


# =============================================================================
# thresholds
# =============================================================================

def thresholds_suite(rng: np.random.Generator, scale: float = 1.0) -> list[CheckResult]:
    results = []
    for c, expected in PUBLISHED_BETA_THRESHOLDS.items():
        value = min_beta(c)
        results.append(_check("thresholds", f"min_beta({c})", abs(value - expected), 1e-3, detail=f"min_beta={value:.4f}"))

    size = _count(10_000, scale, 1000)
    batch = DatasetStream(3, int(rng.integers(2**31))).batch(0, size)
    optimal_loss = optimal_expected_loss(batch)
    accuracy = 1.0 - optimal_loss
    lo, hi = OPTIMAL_ACCURACY_BAND
    results.append(_check(
        "thresholds", "optimal_accuracy", accuracy, hi, passed=lo <= accuracy <= hi,
        detail=f"N={size}, 範囲=[{lo}, {hi}]",
    ))
    achieved = measurement_expected_loss(helstrom_povm(batch), batch, zero_one_loss())
    results.append(_check("thresholds", "helstrom_povm", abs(achieved - optimal_loss), 1e-9))
    return results


# =============================================================================
# geometry
# =============================================================================

def _demo_grid(n_theta: int = 25, n_phi: int = 40) -> list[PolarPoint]:
    return [
        PolarPoint(float(t), float(p))
        for t in np.linspace(0.0, np.pi, n_theta)
        for p in np.linspace(0.5 * np.pi, 1.5 * np.pi, n_phi)
    ]


def geometry_suite(rng: np.random.Generator, scale: float = 1.0) -> list[CheckResult]:
    suite = "geometry"
    grid = _demo_grid()
    loss_err = max(abs(demo_loss(p) - demo_loss_simulated(p)) for p in grid)
    metric_err = max(float(np.max(np.abs(fubini_study_demo_metric(p) - fubini_study_oracle(p)))) for p in grid)
    results = [
        _check(suite, "loss_oracle", loss_err, 1e-10, detail=f"grid={len(grid)}"),
        _check(suite, "fubini_study_oracle", metric_err, 1e-8, detail=f"grid={len(grid)}"),
    ]

    # 鞍点への接近列で ∇ᵀF_Q⁻¹∇ → 1
    worst = 0.0
    for eps in (1e-2, 1e-3, 1e-4):
        for p in (PolarPoint(0.5 * np.pi + eps, 0.5 * np.pi + eps), PolarPoint(0.5 * np.pi + eps, 1.5 * np.pi - eps)):
            worst = max(worst, abs(qgi_quadratic_form(p, quantum_fisher_demo_metric(p)) - 1.0))
    results.append(_check(suite, "qgi_limit_at_saddles", worst, 1e-3))

    worst = 0.0
    for eps in (1e-2, 1e-3, 1e-4):
        for angle in (0.5 * np.pi + eps, -0.5 * np.pi - eps):
            worst = max(worst, abs(amari_quadratic_form(eps, angle) - 1.0))
    results.append(_check(suite, "amari_limit", worst, 1e-3))

    saddle = PolarPoint(0.5 * np.pi, 0.5 * np.pi)
    results.append(_check(
        suite, "pl_violated_at_saddle", pl_lhs(saddle), 1e-12,
        detail=f"𝓛−𝓛*={suboptimality(saddle):.3f}",
    ))

    runs = run_demo_suite()
    qngd_worst = max(r.qngd.losses.min() for r in runs)
    gd_best = min(r.gd.losses.min() for r in runs)
    margin = min(min_boundary_distance(r.qngd) for r in runs)
    results.extend([
        _check(suite, "qngd_converges", qngd_worst, -0.99, detail=f"runs={len(runs)}"),
        _check(suite, "gd_stalls", gd_best, -0.99, passed=gd_best > -0.99, detail=f"GD 最小損失={gd_best:.4f}"),
        _check(suite, "qngd_boundary_margin", margin, 1e-3, passed=margin > 1e-3),
    ])
    return results


# =============================================================================
# training
# =============================================================================

def training_suite(rng: np.random.Generator, scale: float = 1.0) -> list[CheckResult]:
    """3 量子ビットでの 2-QNSCD と 2-RQSGD の比較（長時間）"""
    suite = "training"
    steps = _count(150, scale, 5)
    results = {}
    for kind in (OptimizerKind.QNSCD_2, OptimizerKind.RQSGD_2):
        config = ExperimentConfig(circuit="Q3L3", optimizer=kind.value, steps=steps, seed=0)
        results[kind] = run_experiment(config, write=False)

    def gap(kind: OptimizerKind) -> float:
        final = results[kind].rows[-1]
        return final.average_expected_loss - final.optimal_loss

    qnscd_gap = gap(OptimizerKind.QNSCD_2)
    rqsgd_gap = gap(OptimizerKind.RQSGD_2)
    return [
        _check(suite, "qnscd_near_optimal", qnscd_gap, 0.06, detail=f"steps={steps}"),
        _check(
            suite, "qnscd_beats_rqsgd", rqsgd_gap - qnscd_gap, 0.05, passed=rqsgd_gap - qnscd_gap >= 0.05,
            detail=f"2-RQSGD 差={rqsgd_gap:.4f}",
        ),
    ]


SUITES: dict[str, Callable[[np.random.Generator, float], list[CheckResult]]] = {
    "unbiasedness": unbiasedness_suite,
    "identities": identities_suite,
    "thresholds": thresholds_suite,
    "geometry": geometry_suite,
    "training": training_suite,
}
DEFAULT_SUITES = ("unbiasedness", "identities", "thresholds", "geometry")


def run_verify(suites: Sequence[str] = DEFAULT_SUITES, seed: int = 0, scale: float = 1.0) -> list[CheckResult]:
    """指定したスイートを固定シードで実行"""
    unknown = [s for s in suites if s not in SUITES]
    if unknown:
        raise ValueError(f"不明な検証スイートです: {', '.join(unknown)} (候補: {', '.join(SUITES)})")
    results = []
    for name in suites:
        logger.info("検証スイート開始: %s", name)
        rng = np.random.default_rng([seed, list(SUITES).index(name)])
        results.extend(SUITES[name](rng, scale))
    return results


def format_report(results: Sequence[CheckResult]) -> str:
    lines = [r.line() for r in results]
    failed = sum(not r.passed for r in results)
    lines.append(f"合計 {len(results)} 件中 {len(results) - failed} 件成功、{failed} 件失敗")
    return "\n".join(lines)
