"""実験設定 - key=value 形式の設定ファイルとコマンドライン上書き"""

import logging
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Mapping

from optimizer import SAMPLES_PER_ITERATION, OptimizerConfig, OptimizerKind

logger = logging.getLogger(__name__)

# 既定の設定ファイル（存在する場合のみ読む）
CONFIG_FILE = Path(__file__).parent.parent / "experiment.conf"
OUTPUT_DIR_ENV = "QNSCD_OUTPUT_DIR"

# デフォルト設定
DEFAULT_CONFIG = {
    "circuit": "Q3L3",
    "optimizer": "2-QNSCD",
    "learning_rate": 2.5e-3,
    "beta": None,  # None なら min_beta(c) + 0.01
    "steps": 150,
    "iterations_per_step": 100,
    "batch_size": 600,
    "seed": 0,
    "validation_size": 1000,
    "output_dir": None,  # None なら環境変数 QNSCD_OUTPUT_DIR、なければ results/
    "record_wall_time": False,
    "metric_scale": 1.0,
}

_TRUE_WORDS = {"true", "1", "yes", "on"}
_FALSE_WORDS = {"false", "0", "no", "off"}
_NONE_WORDS = {"", "none", "null"}


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV) or "results")


@dataclass(frozen=True)
class ExperimentConfig:
    """1回の学習実験の設定"""

    circuit: str = DEFAULT_CONFIG["circuit"]
    optimizer: str = DEFAULT_CONFIG["optimizer"]
    learning_rate: float = DEFAULT_CONFIG["learning_rate"]
    beta: float | None = DEFAULT_CONFIG["beta"]
    steps: int = DEFAULT_CONFIG["steps"]
    iterations_per_step: int = DEFAULT_CONFIG["iterations_per_step"]
    batch_size: int = DEFAULT_CONFIG["batch_size"]
    seed: int = DEFAULT_CONFIG["seed"]
    validation_size: int = DEFAULT_CONFIG["validation_size"]
    output_dir: Path | None = None
    record_wall_time: bool = DEFAULT_CONFIG["record_wall_time"]
    metric_scale: float = DEFAULT_CONFIG["metric_scale"]

    def __post_init__(self):
        kind = OptimizerKind.parse(self.optimizer)
        object.__setattr__(self, "optimizer", kind.value)
        if self.output_dir is None:
            object.__setattr__(self, "output_dir", default_output_dir())
        else:
            object.__setattr__(self, "output_dir", Path(self.output_dir))
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate は非負である必要があります: {self.learning_rate}")
        if self.steps < 0:
            raise ValueError(f"steps は非負である必要があります: {self.steps}")
        for name in ("iterations_per_step", "batch_size", "validation_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} は正である必要があります: {getattr(self, name)}")
        if self.batch_size != SAMPLES_PER_ITERATION * self.iterations_per_step:
            raise ValueError(
                f"batch_size={self.batch_size} は 6 × iterations_per_step="
                f"{SAMPLES_PER_ITERATION * self.iterations_per_step} と一致する必要があります"
            )
        if self.beta is not None and self.beta <= 0:
            raise ValueError(f"beta は正である必要があります: {self.beta}")
        if self.metric_scale <= 0:
            raise ValueError(f"metric_scale は正である必要があります: {self.metric_scale}")

    @property
    def kind(self) -> OptimizerKind:
        return OptimizerKind(self.optimizer)

    def optimizer_config(self, trace_iterations: bool = False) -> OptimizerConfig:
        return OptimizerConfig(
            kind=self.kind,
            learning_rate=self.learning_rate,
            beta=self.beta,
            steps=self.steps,
            iterations_per_step=self.iterations_per_step,
            seed=self.seed,
            metric_scale=self.metric_scale,
            trace_iterations=trace_iterations,
        )

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["output_dir"] = str(self.output_dir)
        return data


# =============================================================================
# 読み込み・保存
# =============================================================================

def _coerce(key: str, raw: Any) -> Any:
    """DEFAULT_CONFIG の型に合わせて値を変換"""
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    default = DEFAULT_CONFIG[key]
    try:
        if key == "beta":
            return None if text.lower() in _NONE_WORDS else float(text)
        if key == "output_dir":
            return None if text.lower() in _NONE_WORDS else Path(text)
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered in _TRUE_WORDS:
                return True
            if lowered in _FALSE_WORDS:
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ValueError(f"設定値を解釈できません: {key}={raw!r}") from None
    return text


def parse_config_text(text: str) -> dict[str, Any]:
    """key=value の行を辞書にする（# 以降はコメント）"""
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ValueError(f"{lineno} 行目: key=value の形式ではありません: {line!r}")
        key, value = (part.strip() for part in body.split("=", 1))
        if key not in DEFAULT_CONFIG:
            raise ValueError(f"{lineno} 行目: 不明な設定キーです: {key}")
        values[key] = _coerce(key, value)
    return values


def load_config(path: Path | str | None = None, overrides: Mapping[str, Any] | None = None) -> ExperimentConfig:
    """設定ファイル → コマンドライン上書きの順に適用して ExperimentConfig を作る"""
    values: dict[str, Any] = {}
    config_path = Path(path) if path is not None else CONFIG_FILE
    if config_path.exists():
        values.update(parse_config_text(config_path.read_text(encoding="utf-8")))
        logger.info("設定ファイルを読み込みました: %s", config_path)
    elif path is not None:
        raise ValueError(f"設定ファイルが見つかりません: {config_path}")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in DEFAULT_CONFIG:
            raise ValueError(f"不明な設定キーです: {key}")
        values[key] = _coerce(key, value)
    return ExperimentConfig(**values)


def format_config(config: ExperimentConfig) -> str:
    """load_config で読み戻せる key=value 形式"""
    lines = []
    for f in fields(config):
        value = getattr(config, f.name)
        if value is None:
            value = "none"
        elif isinstance(value, bool):
            value = str(value).lower()
        lines.append(f"{f.name}={value}")
    return "\n".join(lines) + "\n"


def save_config(config: ExperimentConfig, path: Path | str) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(format_config(config), encoding="utf-8")
    return out
