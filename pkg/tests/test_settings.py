"""settings.py のユニットテスト"""

from pathlib import Path

import pytest

import settings
from optimizer import OptimizerKind
from settings import (
    DEFAULT_CONFIG,
    OUTPUT_DIR_ENV,
    ExperimentConfig,
    default_output_dir,
    format_config,
    load_config,
    parse_config_text,
    save_config,
)


@pytest.fixture(autouse=True)
def _no_config_file(tmp_path, monkeypatch):
    """リポジトリ直下の experiment.conf に影響されないようにする"""
    monkeypatch.setattr(settings, "CONFIG_FILE", tmp_path / "missing.conf")
    monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)


class TestOutputDir:
    def test_default(self):
        assert default_output_dir() == Path("results")

    def test_env_override(self, tmp_path, monkeypatch):
        """環境変数 QNSCD_OUTPUT_DIR で出力先を変えられる"""
        monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "out"))
        assert default_output_dir() == tmp_path / "out"
        assert ExperimentConfig().output_dir == tmp_path / "out"


class TestExperimentConfig:
    def test_defaults(self):
        config = ExperimentConfig()
        assert config.circuit == DEFAULT_CONFIG["circuit"]
        assert config.kind is OptimizerKind.QNSCD_2
        assert config.batch_size == 6 * config.iterations_per_step
        assert config.beta is None

    def test_optimizer_normalized(self):
        config = ExperimentConfig(optimizer=OptimizerKind.RQSGD_6)
        assert config.optimizer == "6-RQSGD"

    @pytest.mark.parametrize("kwargs", [
        {"optimizer": "sgd"},
        {"learning_rate": -1.0},
        {"steps": -1},
        {"validation_size": 0},
        {"batch_size": 500},
        {"iterations_per_step": 10},
        {"beta": -0.5},
        {"metric_scale": 0.0},
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            ExperimentConfig(**kwargs)

    def test_optimizer_config(self):
        config = ExperimentConfig(learning_rate=0.01, beta=0.9, steps=3, iterations_per_step=5, batch_size=30, seed=4)
        opt = config.optimizer_config(trace_iterations=True)
        assert opt.kind is OptimizerKind.QNSCD_2
        assert (opt.learning_rate, opt.beta, opt.steps, opt.iterations_per_step, opt.seed) == (0.01, 0.9, 3, 5, 4)
        assert opt.batch_size == config.batch_size
        assert opt.trace_iterations

    def test_to_dict(self, tmp_path):
        data = ExperimentConfig(output_dir=tmp_path).to_dict()
        assert data["output_dir"] == str(tmp_path)
        assert data["optimizer"] == "2-QNSCD"


class TestParseConfigText:
    def test_types_and_comments(self):
        text = """
        # コメント行
        optimizer = 2-RQSGD
        learning_rate = 0.01   # 行末コメント
        steps=20
        beta = none
        record_wall_time = yes
        """
        values = parse_config_text(text)
        assert values == {
            "optimizer": "2-RQSGD",
            "learning_rate": 0.01,
            "steps": 20,
            "beta": None,
            "record_wall_time": True,
        }

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="不明な設定キー"):
            parse_config_text("momentum=0.9\n")

    def test_missing_equals(self):
        with pytest.raises(ValueError):
            parse_config_text("steps 20\n")

    @pytest.mark.parametrize("line", ["steps=many", "learning_rate=fast", "record_wall_time=maybe"])
    def test_bad_values(self, line):
        with pytest.raises(ValueError, match="解釈できません"):
            parse_config_text(line)


class TestLoadConfig:
    def test_without_file(self):
        assert load_config() == ExperimentConfig()

    def test_missing_explicit_file(self, tmp_path):
        with pytest.raises(ValueError):
            load_config(tmp_path / "nope.conf")

    def test_overrides_win(self, tmp_path):
        """ファイル → 上書きの順に適用し、None の上書きは無視"""
        path = tmp_path / "exp.conf"
        path.write_text("steps=40\nseed=3\n", encoding="utf-8")
        config = load_config(path, {"steps": 5, "seed": None, "learning_rate": "0.02"})
        assert config.steps == 5
        assert config.seed == 3
        assert config.learning_rate == 0.02

    def test_default_file_used(self, tmp_path, monkeypatch):
        path = tmp_path / "experiment.conf"
        path.write_text("circuit=Q4L4\n", encoding="utf-8")
        monkeypatch.setattr(settings, "CONFIG_FILE", path)
        assert load_config().circuit == "Q4L4"

    def test_unknown_override(self):
        with pytest.raises(ValueError):
            load_config(None, {"momentum": 0.9})

    def test_save_and_reload(self, tmp_path):
        """save_config の出力は load_config で同じ設定に戻る"""
        config = ExperimentConfig(
            circuit="Q5P1", optimizer="6-RQSGD", learning_rate=0.003, steps=7, seed=9, output_dir=tmp_path / "res",
        )
        path = save_config(config, tmp_path / "conf" / "run.conf")
        assert load_config(path) == config

    def test_format_none_and_bool(self):
        text = format_config(ExperimentConfig())
        assert "beta=none\n" in text
        assert "record_wall_time=false\n" in text
