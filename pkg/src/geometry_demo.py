"""1量子ビットの幾何デモ - GD と厳密 QNGD の比較、QGI / PL 不等式の評価

|ψ(θ,φ)⟩ = R_Z(θ) R_Y(φ) |+⟩、損失は 𝓛 = ⟨ψ|σ_X|ψ⟩ = cosθ cosφ。
定義域は 0 ≤ θ ≤ π、π/2 ≤ φ ≤ 3π/2 の閉包で、境界 φ = π/2, 3π/2 では計量が特異になる。
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from optimizer import Landscape, TrainingTrace, run_exact_gd, run_exact_qngd
from simcore import PAULI, StateVector, apply_pauli_rotation, expectation, rotation_matrix

logger = logging.getLogger(__name__)

THETA_BOUNDS = (0.0, np.pi)
PHI_BOUNDS = (0.5 * np.pi, 1.5 * np.pi)
OPTIMAL_LOSS = -1.0
SINGULAR_GUARD = 1e-8
DOMAIN_TOL = 1e-12

DEFAULT_ETA = 0.01
DEFAULT_STEPS = 10_000


@dataclass(frozen=True)
class PolarPoint:
    """(θ, φ) ∈ [0,π] × [π/2, 3π/2]"""

    theta: float
    phi: float

    def __post_init__(self):
        lo, hi = THETA_BOUNDS
        if not lo - DOMAIN_TOL <= self.theta <= hi + DOMAIN_TOL:
            raise ValueError(f"θ が定義域外です: {self.theta}")
        lo, hi = PHI_BOUNDS
        if not lo - DOMAIN_TOL <= self.phi <= hi + DOMAIN_TOL:
            raise ValueError(f"φ が定義域外です: {self.phi}")

    @classmethod
    def from_array(cls, values: np.ndarray) -> "PolarPoint":
        return cls(float(values[0]), float(values[1]))

    def as_array(self) -> np.ndarray:
        return np.array([self.theta, self.phi])

    def boundary_distance(self) -> float:
        """特異境界 φ = π/2, 3π/2 までの距離"""
        return min(self.phi - PHI_BOUNDS[0], PHI_BOUNDS[1] - self.phi)


# =============================================================================
# 状態・損失・計量
# =============================================================================

def demo_state(p: PolarPoint) -> StateVector:
    """シミュレータで |ψ(θ,φ)⟩ を作る"""
    state = apply_pauli_rotation(StateVector.plus(1), 0, "Y", p.phi)
    return apply_pauli_rotation(state, 0, "Z", p.theta)


def demo_loss(p: PolarPoint) -> float:
    return float(np.cos(p.theta) * np.cos(p.phi))


def demo_loss_simulated(p: PolarPoint) -> float:
    """⟨ψ|σ_X|ψ⟩ をシミュレータ経由で計算（照合用）"""
    return expectation(demo_state(p), PAULI["X"])


def demo_gradient(p: PolarPoint) -> np.ndarray:
    """∇𝓛 = (−sinθ cosφ, −cosθ sinφ)"""
    return np.array([
        -np.sin(p.theta) * np.cos(p.phi),
        -np.cos(p.theta) * np.sin(p.phi),
    ])


def fubini_study_demo_metric(p: PolarPoint) -> np.ndarray:
    """F = ¼ diag(cos²φ, 1)"""
    return 0.25 * np.diag([np.cos(p.phi) ** 2, 1.0])


def quantum_fisher_demo_metric(p: PolarPoint) -> np.ndarray:
    """量子フィッシャー情報で正規化した計量 F_Q = 4F"""
    return 4.0 * fubini_study_demo_metric(p)


def fubini_study_oracle(p: PolarPoint) -> np.ndarray:
    """状態の微分から F_ij = Re[⟨∂_iψ|∂_jψ⟩ − ⟨∂_iψ|ψ⟩⟨ψ|∂_jψ⟩] を直接計算"""
    plus = StateVector.plus(1).amplitudes
    rz = rotation_matrix("Z", p.theta)
    ry = rotation_matrix("Y", p.phi)
    psi = rz @ ry @ plus
    d_theta = -0.5j * PAULI["Z"] @ psi
    d_phi = rz @ (-0.5j * PAULI["Y"]) @ ry @ plus
    partials = (d_theta, d_phi)
    f = np.empty((2, 2))
    for i, di in enumerate(partials):
        for j, dj in enumerate(partials):
            f[i, j] = (np.vdot(di, dj) - np.vdot(di, psi) * np.vdot(psi, dj)).real
    return f


# =============================================================================
# QGI / PL 不等式
# =============================================================================

def qgi_quadratic_form(p: PolarPoint, metric: np.ndarray | None = None, gradient: np.ndarray | None = None) -> float:
    """∇𝓛ᵀ F⁻¹ ∇𝓛。計量が厳密に特異な点では定義できない"""
    f = fubini_study_demo_metric(p) if metric is None else np.asarray(metric, dtype=float)
    g = demo_gradient(p) if gradient is None else np.asarray(gradient, dtype=float)
    if np.linalg.det(f) == 0.0:
        raise ValueError(f"計量が特異なので二次形式は定義できません: θ={p.theta}, φ={p.phi}（極限は qgi_quadratic_form_limit）")
    return float(g @ np.linalg.solve(f, g))


def qgi_quadratic_form_limit(p: PolarPoint, metric_scale: float = 1.0) -> float:
    """F = metric_scale·¼diag(cos²φ,1) に対する二次形式の連続延長

    4(sin²θ + cos²θ sin²φ) / metric_scale。F_Q（metric_scale=4）では鞍点で 1 になる。
    """
    return float(4.0 * (np.sin(p.theta) ** 2 + np.cos(p.theta) ** 2 * np.sin(p.phi) ** 2) / metric_scale)


def qgi_lhs(p: PolarPoint, metric: np.ndarray | None = None) -> float:
    """QGI 不等式の左辺 ½∇𝓛ᵀF⁻¹∇𝓛"""
    return 0.5 * qgi_quadratic_form(p, metric)


def pl_lhs(p: PolarPoint) -> float:
    """PL 不等式の左辺 ½‖∇𝓛‖²"""
    g = demo_gradient(p)
    return float(0.5 * g @ g)


def suboptimality(p: PolarPoint) -> float:
    """𝓛 − 𝓛*"""
    return demo_loss(p) - OPTIMAL_LOSS


# 極座標の例: 𝓛(r,ϑ) = ½[(r cosϑ − 1)² + r² sin²ϑ]、F = diag(1, r²)

def amari_loss(r: float, angle: float) -> float:
    return 0.5 * ((r * np.cos(angle) - 1.0) ** 2 + (r * np.sin(angle)) ** 2)


def amari_gradient(r: float, angle: float) -> np.ndarray:
    return np.array([r - np.cos(angle), r * np.sin(angle)])


def amari_metric(r: float, angle: float) -> np.ndarray:
    return np.diag([1.0, r**2])


def amari_quadratic_form(r: float, angle: float) -> float:
    """∇𝓛ᵀF⁻¹∇𝓛。r = 0 では F が特異"""
    f = amari_metric(r, angle)
    if np.linalg.det(f) == 0.0:
        raise ValueError(f"r = {r} では計量が特異です")
    g = amari_gradient(r, angle)
    return float(g @ np.linalg.solve(f, g))


# =============================================================================
# 軌跡
# =============================================================================

class DemoLandscape(Landscape):
    """解析的な損失・勾配・計量と、定義域へのクランプ"""

    def __init__(self):
        self.clamp_events = 0
        self.guard_events = 0

    def loss(self, theta: np.ndarray) -> float:
        return float(np.cos(theta[0]) * np.cos(theta[1]))

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        return np.array([
            -np.sin(theta[0]) * np.cos(theta[1]),
            -np.cos(theta[0]) * np.sin(theta[1]),
        ])

    def metric(self, theta: np.ndarray) -> np.ndarray:
        return 0.25 * np.diag([np.cos(theta[1]) ** 2, 1.0])

    def natural_direction(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """解析的な逆行列 diag(4/cos²φ, 4)。|cosφ| ≤ 1e-8 では φ 成分だけ動かす"""
        cos_phi = np.cos(theta[1])
        if abs(cos_phi) > SINGULAR_GUARD:
            return np.array([4.0 * grad[0] / cos_phi**2, 4.0 * grad[1]])
        self.guard_events += 1
        logger.debug("特異境界の近傍です (φ=%.6f)。φ 方向のみ更新します", theta[1])
        return np.array([0.0, 4.0 * grad[1]])

    def project(self, theta: np.ndarray) -> np.ndarray:
        clamped = np.array([np.clip(theta[0], *THETA_BOUNDS), np.clip(theta[1], *PHI_BOUNDS)])
        if not np.array_equal(clamped, theta):
            self.clamp_events += 1
            logger.debug("定義域にクランプしました: (%.6f, %.6f) → (%.6f, %.6f)", theta[0], theta[1], *clamped)
        return clamped


@dataclass
class DemoRun:
    """1つの初期点に対する GD と QNGD の軌跡"""

    label: str
    initial: PolarPoint
    gd: TrainingTrace
    qngd: TrainingTrace


def run_demo(
    initial: PolarPoint, eta: float = DEFAULT_ETA, steps: int = DEFAULT_STEPS
) -> tuple[TrainingTrace, TrainingTrace]:
    """同じ初期点から GD と厳密 QNGD を走らせて (GD, QNGD) を返す"""
    if eta <= 0 or steps < 0:
        raise ValueError(f"学習率またはステップ数が不正です: η={eta}, steps={steps}")
    gd_landscape = DemoLandscape()
    qngd_landscape = DemoLandscape()
    gd = run_exact_gd(gd_landscape, initial.as_array(), eta, steps)
    qngd = run_exact_qngd(qngd_landscape, initial.as_array(), eta, steps)
    logger.info(
        "デモ (θ₀=%.3f, φ₀=%.3f): GD 最終損失=%.4f, QNGD 最終損失=%.4f, クランプ=%d, 特異ガード=%d",
        initial.theta, initial.phi, gd.final.loss, qngd.final.loss,
        gd_landscape.clamp_events + qngd_landscape.clamp_events, qngd_landscape.guard_events,
    )
    return gd, qngd


def region_points() -> dict[str, list[PolarPoint]]:
    """固定の初期点。𝓡₁ は θ₀ = φ₀ の直線上、𝓡₂ はそれ以外"""
    return {
        "R1": [PolarPoint(v, v) for v in (1.75, 2.0, 2.25, 2.5, 2.75)],
        "R2": [
            PolarPoint(2.5, 2.0),
            PolarPoint(2.9, 2.2),
            PolarPoint(2.2, 1.9),
            PolarPoint(2.5, 4.2),
            PolarPoint(2.8, 4.0),
        ],
    }


def run_demo_suite(eta: float = DEFAULT_ETA, steps: int = DEFAULT_STEPS) -> list[DemoRun]:
    """region_points の全初期点でデモを実行"""
    runs = []
    for region, points in region_points().items():
        for index, point in enumerate(points, start=1):
            gd, qngd = run_demo(point, eta, steps)
            runs.append(DemoRun(label=f"{region}-{index}", initial=point, gd=gd, qngd=qngd))
    return runs


def min_boundary_distance(trace: TrainingTrace) -> float:
    """軌跡全体での特異境界までの最小距離"""
    phis = trace.path[:, 1]
    return float(np.minimum(phis - PHI_BOUNDS[0], PHI_BOUNDS[1] - phis).min())


def export_demo_csv(runs: Sequence[DemoRun], path: Path | str, stride: int = 1) -> Path:
    """(run, iteration, method, theta, phi, loss) を CSV に書き出す"""
    if stride <= 0:
        raise ValueError(f"間引き幅は正である必要があります: {stride}")
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["run", "iteration", "method", "theta", "phi", "loss"])
        for run in runs:
            for trace in (run.gd, run.qngd):
                last = len(trace.rows) - 1
                for i, row in enumerate(trace.rows):
                    if i % stride and i != last:
                        continue
                    writer.writerow([run.label, row.iteration, trace.kind.value, repr(float(row.theta[0])),
                                     repr(float(row.theta[1])), repr(row.loss)])
    logger.info("デモの軌跡を書き出しました: %s (%d 件)", out, len(runs))
    return out
