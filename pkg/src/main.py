"""QNSCD Simulator - Main Entry Point"""

import argparse
import logging
import sys
from pathlib import Path

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    datefmt="%Y-%m-%d %H:%M:%S",
)
logger = logging.getLogger(__name__)

# .envファイルの読み込み（存在する場合のみ）
try:
    from dotenv import load_dotenv
    env_path = Path(__file__).parent.parent / ".env"
    if env_path.exists():
        load_dotenv(env_path)
        logger.info(".envファイルを読み込みました: %s", env_path)
except ImportError:
    pass

from chart import render_demo_chart, render_loss_chart  # noqa: E402
from dataset import DatasetStream, export_dataset_csv  # noqa: E402
from experiment import compare, run_experiment  # noqa: E402
from formatter import format_compare_table, read_result_csv, summarize  # noqa: E402
from geometry_demo import DEFAULT_ETA, DEFAULT_STEPS, export_demo_csv, run_demo_suite  # noqa: E402
from metric import beta_sweep  # noqa: E402
from optimizer import OptimizerKind  # noqa: E402
from settings import ExperimentConfig, default_output_dir, load_config  # noqa: E402
from verify import DEFAULT_SUITES, SUITES, format_report, run_verify  # noqa: E402

# ExperimentConfig のフィールドに対応するフラグ
_CONFIG_FLAGS = (
    ("circuit", str, "組み込み回路名（Q3L3 など）または回路ファイルのパス"),
    ("learning_rate", float, "学習率 η"),
    ("beta", float, "正則化定数 β（省略時 min_beta(c)+0.01）"),
    ("steps", int, "ステップ数（1ステップ = 100 反復）"),
    ("iterations_per_step", int, "1ステップあたりの反復数"),
    ("batch_size", int, "バッチサイズ N（= 6 × 反復数）"),
    ("seed", int, "乱数シード"),
    ("validation_size", int, "検証セットのサイズ"),
    ("output_dir", str, "出力ディレクトリ"),
    ("metric_scale", float, "計量推定量の全体スケール"),
)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="key=value 形式の設定ファイル")
    for name, typ, help_text in _CONFIG_FLAGS:
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name, type=typ, default=None, help=help_text)
    parser.add_argument("--record-wall-time", dest="record_wall_time", action="store_true", default=None,
                        help="CSV の wall_ms 列に実測時間を書く（既定は 0 でバイト単位の再現性を保つ）")


def _overrides(args: argparse.Namespace, **extra) -> dict:
    values = {name: getattr(args, name) for name, _, _ in _CONFIG_FLAGS}
    values["record_wall_time"] = args.record_wall_time
    values.update(extra)
    return values


# =============================================================================
# サブコマンド
# =============================================================================

def cmd_train(args: argparse.Namespace) -> bool:
    """1つの設定で学習"""
    config = load_config(args.config, _overrides(args, optimizer=args.optimizer))
    result = run_experiment(config, trace_iterations=args.trace_iterations)
    print(summarize(result))
    if result.csv_path is not None:
        print(f"CSV: {result.csv_path}")
    return True


def cmd_compare(args: argparse.Namespace) -> bool:
    """同じ予算で複数の最適化器を比較"""
    base = load_config(args.config, _overrides(args))
    configs = [
        ExperimentConfig(**{**base.to_dict(), "optimizer": kind}) for kind in args.optimizers
    ]
    results = compare(configs, workers=args.workers)
    print(format_compare_table(results))
    return True


def cmd_verify(args: argparse.Namespace) -> bool:
    """検証スイートを実行"""
    suites = args.suites or list(DEFAULT_SUITES)
    scale = 0.1 if args.quick else args.scale
    results = run_verify(suites, seed=args.seed, scale=scale)
    print(format_report(results))
    return all(r.passed for r in results)


def cmd_dataset_export(args: argparse.Namespace) -> bool:
    """データセットを CSV に書き出す"""
    stream = DatasetStream(args.qubits, args.seed)
    output = args.output or default_output_dir() / f"dataset_q{args.qubits}_seed{args.seed}.csv"
    export_dataset_csv(stream, args.batches, args.batch_size, output)
    print(f"CSV: {output}")
    return True


def cmd_min_beta(args: argparse.Namespace) -> bool:
    """min_beta の表を表示"""
    for c, value in beta_sweep(args.c):
        print(f"c={c:>4d}  min_beta={value:.4f}")
    return True


def cmd_demo(args: argparse.Namespace) -> bool:
    """1量子ビットの幾何デモ"""
    runs = run_demo_suite(args.eta, args.steps)
    output_dir = args.output_dir or default_output_dir()
    export_demo_csv(runs, output_dir / "geometry_demo.csv", stride=args.stride)
    if args.plot:
        render_demo_chart(runs, output_dir / "geometry_demo.png")
    for run in runs:
        print(f"{run.label}: GD 最終損失={run.gd.final.loss:+.4f}  QNGD 最終損失={run.qngd.final.loss:+.4f}")
    return True


def _curve_label(path: Path) -> str:
    """Q3L3_2-QNSCD_seed0.csv → 2-QNSCD"""
    parts = path.stem.split("_")
    return parts[1] if len(parts) >= 3 else path.stem


def cmd_plot(args: argparse.Namespace) -> bool:
    """結果 CSV から学習曲線を描く"""
    curves = [(_curve_label(Path(p)), read_result_csv(p)) for p in args.csv]
    output = args.output or Path(args.csv[0]).with_suffix(".png")
    render_loss_chart(curves, path=output)
    print(f"PNG: {output}")
    return True


# =============================================================================
# メイン
# =============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="QNSCD Simulator - quantum natural stochastic pairwise coordinate descent")
    parser.add_argument("--verbose", action="store_true", help="DEBUG ログを出力")
    sub = parser.add_subparsers(dest="command", required=True)

    kinds = [k.value for k in OptimizerKind]

    p_train = sub.add_parser("train", help="学習を1回実行")
    _add_config_flags(p_train)
    p_train.add_argument("--optimizer", choices=kinds, default=None)
    p_train.add_argument("--trace-iterations", action="store_true", help="反復ごとの θ を DEBUG ログに出す")
    p_train.set_defaults(func=cmd_train)

    p_compare = sub.add_parser("compare", help="最適化器の比較")
    _add_config_flags(p_compare)
    p_compare.add_argument("--optimizers", nargs="+", choices=kinds[:3], default=kinds[:3])
    p_compare.add_argument("--workers", type=int, default=None)
    p_compare.set_defaults(func=cmd_compare)

    p_verify = sub.add_parser("verify", help="検証スイート")
    p_verify.add_argument("suites", nargs="*", help=f"{', '.join(SUITES)} から選択（既定: {' '.join(DEFAULT_SUITES)}）")
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--scale", type=float, default=1.0, help="試行回数の倍率")
    p_verify.add_argument("--quick", action="store_true", help="試行回数を 1/10 にする")
    p_verify.set_defaults(func=cmd_verify)

    p_dataset = sub.add_parser("dataset", help="データセット操作")
    dataset_sub = p_dataset.add_subparsers(dest="dataset_command", required=True)
    p_export = dataset_sub.add_parser("export", help="CSV に書き出す")
    p_export.add_argument("--qubits", type=int, default=3)
    p_export.add_argument("--seed", type=int, default=0)
    p_export.add_argument("--batches", type=int, default=1)
    p_export.add_argument("--batch-size", type=int, default=600)
    p_export.add_argument("--output", type=Path, default=None)
    p_export.set_defaults(func=cmd_dataset_export)

    p_beta = sub.add_parser("min-beta", help="正則化定数の閾値")
    p_beta.add_argument("c", type=int, nargs="+")
    p_beta.set_defaults(func=cmd_min_beta)

    p_demo = sub.add_parser("demo", help="1量子ビットの幾何デモ")
    p_demo.add_argument("--eta", type=float, default=DEFAULT_ETA)
    p_demo.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    p_demo.add_argument("--stride", type=int, default=10, help="CSV の間引き幅")
    p_demo.add_argument("--output-dir", type=Path, default=None)
    p_demo.add_argument("--plot", action="store_true", help="PNG も出力")
    p_demo.set_defaults(func=cmd_demo)

    p_plot = sub.add_parser("plot", help="結果 CSV から学習曲線 PNG を作る")
    p_plot.add_argument("csv", nargs="+", type=Path)
    p_plot.add_argument("--output", type=Path, default=None)
    p_plot.set_defaults(func=cmd_plot)
    return parser


def main(argv: list[str] | None = None):
    """メイン関数"""
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    try:
        success = args.func(args)
    except ValueError as e:
        logger.error("入力エラー: %s", e)
        success = False
    except Exception as e:
        logger.error("予期しないエラー: %s", e, exc_info=True)
        success = False

    sys.exit(0 if success else 1)


if __name__ == "__main__":
    main()
