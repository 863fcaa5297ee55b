"""グラフ生成モジュール - matplotlib で学習曲線とデモ軌跡を PNG にする

CSV が結果の正式な形式で、ここでの描画は確認用。
"""

import io
import logging
import os
import platform
from pathlib import Path
from typing import Sequence

config_dir = Path(__file__).parent.parent / "results" / ".matplotlib"
try:
    config_dir.mkdir(parents=True, exist_ok=True)
    os.environ.setdefault("MPLCONFIGDIR", str(config_dir))
except OSError:
    pass

import matplotlib  # noqa: E402

matplotlib.use('Agg')  # GUIバックエンドを使用しない
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from formatter import ResultRow  # noqa: E402
from geometry_demo import PHI_BOUNDS, THETA_BOUNDS, DemoRun  # noqa: E402

logger = logging.getLogger(__name__)


def _get_japanese_font_families() -> list[str]:
    """OSに応じた日本語フォントファミリーのリストを返す"""
    system = platform.system()
    if system == "Darwin":
        return ["Hiragino Sans", "sans-serif"]
    if system == "Linux":
        return ["Noto Sans CJK JP", "IPAGothic", "sans-serif"]
    if system == "Windows":
        return ["Yu Gothic", "Meiryo", "sans-serif"]
    return ["sans-serif"]


plt.rcParams['font.family'] = _get_japanese_font_families()
plt.rcParams['axes.unicode_minus'] = False

# 最適化器ごとの配色
_COLORS = {
    "2-QNSCD": '#C0392B',
    "2-RQSGD": '#2980B9',
    "6-RQSGD": '#27AE60',
    "exact-QNGD": '#8E44AD',
    "exact-GD": '#7F8C8D',
}


def _setup_chart_style(fig, *axes):
    """白背景・薄いグリッドのスタイル"""
    fig.patch.set_facecolor('white')
    for ax in axes:
        ax.grid(True, alpha=0.3)
        for spine in ("top", "right"):
            ax.spines[spine].set_visible(False)


def _save_chart(fig) -> io.BytesIO:
    """グラフをPNGバイトストリームとして保存"""
    fig.tight_layout()
    buf = io.BytesIO()
    fig.savefig(buf, format='png', dpi=150, facecolor=fig.get_facecolor())
    buf.seek(0)
    plt.close(fig)
    return buf


def _write_png(buf: io.BytesIO, path: Path | str | None) -> io.BytesIO:
    if path is not None:
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_bytes(buf.getvalue())
        buf.seek(0)
        logger.info("グラフを保存しました: %s", out)
    return buf


def render_loss_chart(
    curves: Sequence[tuple[str, Sequence[ResultRow]]],
    title: str = "学習曲線",
    path: Path | str | None = None,
) -> io.BytesIO:
    """
    最適化器ごとの経験損失（破線）と平均期待損失（実線）をステップに対して描く

    Args:
        curves: (ラベル, ResultRow のリスト) の列
        title: グラフタイトル
        path: 指定すれば PNG を書き出す

    Returns:
        PNG画像のバイトストリーム
    """
    if not curves:
        raise ValueError("描画する学習曲線がありません")
    fig, ax = plt.subplots(figsize=(10, 6))
    _setup_chart_style(fig, ax)

    for label, rows in curves:
        steps = [r.step for r in rows]
        color = _COLORS.get(label)
        ax.plot(steps, [r.average_expected_loss for r in rows], '-', color=color, linewidth=2, label=f'{label} 期待損失')
        ax.plot(steps, [r.empirical_loss for r in rows], '--', color=color, alpha=0.6, linewidth=1, label=f'{label} 経験損失')

    # 最適損失はバッチごとに変わるので最初の曲線のものを表示
    first_rows = curves[0][1]
    ax.plot([r.step for r in first_rows], [r.optimal_loss for r in first_rows], ':', color='black', label='最適損失')

    ax.set_xlabel('ステップ（600 サンプル）', fontsize=12)
    ax.set_ylabel('損失', fontsize=12)
    ax.set_ylim(0, 1)
    ax.set_title(title, fontsize=14, fontweight='bold')
    ax.legend(loc='upper right', fontsize=9)

    return _write_png(_save_chart(fig), path)


def render_demo_chart(runs: Sequence[DemoRun], path: Path | str | None = None) -> io.BytesIO:
    """
    幾何デモの軌跡 (θ, φ) を損失の等高線の上に描く

    Args:
        runs: run_demo_suite の結果
        path: 指定すれば PNG を書き出す

    Returns:
        PNG画像のバイトストリーム
    """
    fig, (ax_path, ax_loss) = plt.subplots(1, 2, figsize=(14, 6))
    _setup_chart_style(fig, ax_path, ax_loss)

    theta = np.linspace(*THETA_BOUNDS, 200)
    phi = np.linspace(*PHI_BOUNDS, 200)
    grid_t, grid_p = np.meshgrid(theta, phi, indexing='ij')
    contour = ax_path.contourf(grid_t, grid_p, np.cos(grid_t) * np.cos(grid_p), levels=20, cmap='RdBu_r', alpha=0.6)
    fig.colorbar(contour, ax=ax_path, label='𝓛(θ, φ)')

    for run in runs:
        for trace, style in ((run.gd, '--'), (run.qngd, '-')):
            path_xy = trace.path
            color = _COLORS.get(trace.kind.value)
            ax_path.plot(path_xy[:, 0], path_xy[:, 1], style, color=color, linewidth=1)
            ax_loss.plot(np.arange(len(trace.rows)), trace.losses, style, color=color, linewidth=1, alpha=0.7)
        ax_path.plot(run.initial.theta, run.initial.phi, 'o', color='black', markersize=4)

    ax_path.set_xlabel('θ')
    ax_path.set_ylabel('φ')
    ax_path.set_title('軌跡（実線: QNGD、破線: GD）', fontsize=12)
    ax_loss.set_xscale('symlog')
    ax_loss.set_xlabel('反復')
    ax_loss.set_ylabel('損失')
    ax_loss.set_title('損失の推移', fontsize=12)

    return _write_png(_save_chart(fig), path)
