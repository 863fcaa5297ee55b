"""結果の整形 - 学習曲線 CSV とサマリー表"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from optimizer import TrainingTrace

logger = logging.getLogger(__name__)

CSV_VERSION_LINE = "# qnscd-results v1"
CSV_COLUMNS = ["step", "iter", "emp_loss", "avg_exp_loss", "opt_loss", "samples", "wall_ms"]


@dataclass(frozen=True)
class ResultRow:
    """学習曲線の1行"""

    step: int
    iteration: int
    empirical_loss: float
    average_expected_loss: float
    optimal_loss: float
    samples: int
    wall_ms: float = 0.0

    def __post_init__(self):
        for name in ("empirical_loss", "average_expected_loss", "optimal_loss"):
            value = getattr(self, name)
            if not -1e-9 <= value <= 1.0 + 1e-9:
                raise ValueError(f"{name} が [0,1] の範囲外です: {value}")

    def as_csv_dict(self) -> dict[str, str]:
        return {
            "step": str(self.step),
            "iter": str(self.iteration),
            "emp_loss": repr(float(self.empirical_loss)),
            "avg_exp_loss": repr(float(self.average_expected_loss)),
            "opt_loss": repr(float(self.optimal_loss)),
            "samples": str(self.samples),
            "wall_ms": f"{self.wall_ms:.3f}",
        }


def rows_from_trace(trace: TrainingTrace, record_wall_time: bool = False) -> list[ResultRow]:
    """TrainingTrace の各ステップを ResultRow にする。wall_ms は record_wall_time のときだけ残す"""
    rows = []
    for r in trace.rows:
        if r.empirical_loss is None or r.optimal_loss is None:
            raise ValueError(f"ステップ {r.step} の評価値がありません")
        rows.append(ResultRow(
            step=r.step,
            iteration=r.iteration,
            empirical_loss=r.empirical_loss,
            average_expected_loss=r.loss,
            optimal_loss=r.optimal_loss,
            samples=r.samples_consumed,
            wall_ms=r.wall_ms if record_wall_time else 0.0,
        ))
    return rows


def write_result_csv(rows: Iterable[ResultRow], path: Path | str) -> Path:
    """バージョン行つきの CSV を書き出す"""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as f:
        f.write(CSV_VERSION_LINE + "\n")
        writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row.as_csv_dict())
    logger.info("結果 CSV を書き出しました: %s", out)
    return out


def read_result_csv(path: Path | str) -> list[ResultRow]:
    """write_result_csv の出力を読み戻す"""
    source = Path(path)
    with open(source, newline="", encoding="utf-8") as f:
        first = f.readline().rstrip("\n")
        if first != CSV_VERSION_LINE:
            raise ValueError(f"対応していない CSV 形式です: {first!r} ({source})")
        reader = csv.DictReader(f)
        if reader.fieldnames != CSV_COLUMNS:
            raise ValueError(f"列が一致しません: {reader.fieldnames}")
        return [
            ResultRow(
                step=int(r["step"]),
                iteration=int(r["iter"]),
                empirical_loss=float(r["emp_loss"]),
                average_expected_loss=float(r["avg_exp_loss"]),
                optimal_loss=float(r["opt_loss"]),
                samples=int(r["samples"]),
                wall_ms=float(r["wall_ms"]),
            )
            for r in reader
        ]


# =============================================================================
# サマリー
# =============================================================================

def format_percent(value: float, stderr: float | None = None) -> str:
    """0.846, 0.008 → '84.6 ± 0.8%'"""
    if stderr is None:
        return f"{value * 100:.1f}%"
    return f"{value * 100:.1f} ± {stderr * 100:.1f}%"


def summarize(result) -> str:
    """1回の実験結果の要約（ExperimentResult を受け取る）"""
    config = result.config
    final = result.rows[-1] if result.rows else None
    lines = [
        f"回路: {config.circuit}  最適化器: {config.optimizer}  seed: {config.seed}",
        f"η = {config.learning_rate:g}  β = {result.beta if result.beta is not None else '-'}  "
        f"ステップ数: {config.steps}",
    ]
    if final is not None:
        lines.append(
            f"最終ステップ {final.step}: 経験損失 {final.empirical_loss:.4f} / "
            f"平均期待損失 {final.average_expected_loss:.4f} / 最適損失 {final.optimal_loss:.4f}"
        )
    lines.append(
        f"検証精度: {format_percent(result.validation_accuracy, result.validation_stderr)} "
        f"(最適 {format_percent(result.optimal_accuracy)}, N={config.validation_size})"
    )
    if config.kind.is_exact:
        lines.append(f"消費サンプル数: {result.samples_consumed} (厳密計算)")
    else:
        expected = 6 * config.iterations_per_step * config.steps
        status = "OK" if result.samples_consumed == expected else "NG"
        lines.append(f"消費サンプル数: {result.samples_consumed} (6 × 反復数 = {expected}) [{status}]")
    return "\n".join(lines)


def format_compare_table(results: Sequence) -> str:
    """最適化器ごとの精度比較表"""
    header = ["最適化器", "検証精度", "最適精度", "最終期待損失", "消費サンプル"]
    body = []
    for r in results:
        final_loss = r.rows[-1].average_expected_loss if r.rows else float("nan")
        body.append([
            r.config.optimizer,
            format_percent(r.validation_accuracy, r.validation_stderr),
            format_percent(r.optimal_accuracy),
            f"{final_loss:.4f}",
            str(r.samples_consumed),
        ])
    widths = [max(len(row[i]) for row in [header, *body]) for i in range(len(header))]

    def fmt_row(row: list[str]) -> str:
        return "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()

    lines = [fmt_row(header), fmt_row(["-" * w for w in widths])]
    lines.extend(fmt_row(row) for row in body)
    return "\n".join(lines)
