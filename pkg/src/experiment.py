"""学習実験の実行と比較"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from dataset import DatasetStream, average_expected_loss, empirical_loss, optimal_expected_loss, parity_povm
from formatter import ResultRow, rows_from_trace, write_result_csv
from gradient import zero_one_loss
from optimizer import (
    EVAL_STREAM,
    EnsembleLandscape,
    OptimizerKind,
    TrainingTrace,
    initial_parameters,
    run_2qnscd,
    run_exact_gd,
    run_exact_qngd,
    run_rqsgd,
)
from pqc import resolve_circuit
from settings import ExperimentConfig, save_config

logger = logging.getLogger(__name__)

_STOCHASTIC = (OptimizerKind.QNSCD_2, OptimizerKind.RQSGD_2, OptimizerKind.RQSGD_6)


@dataclass
class ExperimentResult:
    """1回の実験の結果"""

    config: ExperimentConfig
    rows: list[ResultRow]
    trace: TrainingTrace
    beta: float | None
    validation_accuracy: float
    validation_stderr: float
    optimal_accuracy: float
    samples_consumed: int
    wall_seconds: float
    csv_path: Path | None = None


def result_stem(config: ExperimentConfig) -> str:
    return f"{Path(config.circuit).stem}_{config.optimizer}_seed{config.seed}"


def _exact_rows(trace: TrainingTrace, circuit, povm, batch, seed: int, record_wall_time: bool) -> list[ResultRow]:
    """決定論的最適化器の軌跡を固定バッチで評価し直す"""
    optimal = optimal_expected_loss(batch)
    rows = []
    for r in trace.rows:
        rng = np.random.default_rng([seed, EVAL_STREAM, r.step])
        rows.append(ResultRow(
            step=r.step,
            iteration=r.iteration,
            empirical_loss=empirical_loss(circuit, r.theta, povm, batch, rng),
            average_expected_loss=r.loss,
            optimal_loss=optimal,
            samples=0,
            wall_ms=r.wall_ms if record_wall_time else 0.0,
        ))
    return rows


def run_experiment(config: ExperimentConfig, write: bool = True, trace_iterations: bool = False) -> ExperimentResult:
    """設定どおりに学習し、検証精度を評価して CSV を書き出す"""
    started = time.perf_counter()
    circuit = resolve_circuit(config.circuit)
    povm = parity_povm(circuit.num_qubits)
    lossfn = zero_one_loss()
    stream = DatasetStream(circuit.num_qubits, config.seed)
    opt_config = config.optimizer_config(trace_iterations=trace_iterations)
    kind = opt_config.kind
    beta = opt_config.resolve_beta(circuit.num_params) if kind is OptimizerKind.QNSCD_2 else None

    logger.info("実験開始: circuit=%s optimizer=%s seed=%d steps=%d", circuit.name, kind.value, config.seed, config.steps)
    if kind is OptimizerKind.QNSCD_2:
        trace = run_2qnscd(circuit, stream, povm, lossfn, opt_config)
        rows = rows_from_trace(trace, config.record_wall_time)
    elif kind in (OptimizerKind.RQSGD_2, OptimizerKind.RQSGD_6):
        trace = run_rqsgd(circuit, stream, povm, lossfn, opt_config)
        rows = rows_from_trace(trace, config.record_wall_time)
    else:
        batch = stream.batch(0, config.batch_size)
        landscape = EnsembleLandscape(circuit, povm, batch, lossfn)
        runner = run_exact_qngd if kind is OptimizerKind.EXACT_QNGD else run_exact_gd
        trace = runner(landscape, initial_parameters(circuit, config.seed), config.learning_rate, config.steps)
        rows = _exact_rows(trace, circuit, povm, batch, config.seed, config.record_wall_time)

    validation = stream.validation_batch(config.validation_size)
    accuracy = 1.0 - average_expected_loss(circuit, trace.final.theta, povm, validation, lossfn)
    stderr = float(np.sqrt(max(accuracy * (1.0 - accuracy), 0.0) / len(validation)))
    optimal_accuracy = 1.0 - optimal_expected_loss(validation)
    wall = time.perf_counter() - started

    result = ExperimentResult(
        config=config,
        rows=rows,
        trace=trace,
        beta=beta,
        validation_accuracy=accuracy,
        validation_stderr=stderr,
        optimal_accuracy=optimal_accuracy,
        samples_consumed=trace.samples_consumed,
        wall_seconds=wall,
    )
    if write:
        stem = result_stem(config)
        result.csv_path = write_result_csv(rows, config.output_dir / f"{stem}.csv")
        save_config(config, config.output_dir / f"{stem}.conf")
    logger.info(
        "実験終了: circuit=%s optimizer=%s seed=%d 検証精度=%.3f (最適 %.3f) 所要 %.1f 秒",
        circuit.name, kind.value, config.seed, accuracy, optimal_accuracy, wall,
    )
    return result


def check_comparable(configs: Sequence[ExperimentConfig]) -> None:
    """回路・シード・サンプル予算が揃っているかを確認"""
    if not configs:
        raise ValueError("比較する設定がありません")
    base = configs[0]
    for cfg in configs:
        if cfg.kind not in _STOCHASTIC:
            raise ValueError(f"比較できるのは確率的最適化器のみです: {cfg.optimizer}")
        mismatched = [
            name for name in ("circuit", "seed", "steps", "iterations_per_step", "batch_size", "validation_size")
            if getattr(cfg, name) != getattr(base, name)
        ]
        if mismatched:
            raise ValueError(f"比較条件（サンプル予算など）が一致しません: {', '.join(mismatched)}")


def compare(configs: Sequence[ExperimentConfig], workers: int | None = None, write: bool = True) -> list[ExperimentResult]:
    """同じ予算の設定を並列に実行し、入力順に結果を返す"""
    check_comparable(configs)
    with ThreadPoolExecutor(max_workers=workers or len(configs)) as executor:
        results = list(executor.map(lambda cfg: run_experiment(cfg, write=write), configs))
    consumed = {r.samples_consumed for r in results}
    if len(consumed) != 1:
        raise RuntimeError(f"消費サンプル数が一致しません: {sorted(consumed)}")
    return results
