import json
import logging

import pytest

from cnnmap.config import Settings, load_settings
from cnnmap.errors import ConfigError
from cnnmap.models import CnnfScale, InputKind
from cnnmap.services.run_logger import configure_logging


class TestLoadSettings:
    def test_defaults(self):
        s = load_settings()
        assert s.epochs == 100
        assert s.batch_size == 16
        assert s.learning_rate == 1e-4
        assert s.momentum == 0.9
        assert s.beta == 250.0
        assert s.scale == CnnfScale.REDUCED
        assert s.input_kind == InputKind.RGB

    def test_precedence(self, tmp_path, monkeypatch):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("EPOCHS=7\nbeta=12.5\nseed=3\n")
        monkeypatch.setenv("CNNMAP_SEED", "9")
        monkeypatch.setenv("CNNMAP_BATCH_SIZE", "4")
        s = load_settings(cfg, epochs=2, beta=None)
        assert s.epochs == 2
        assert s.beta == 12.5
        assert s.seed == 3
        assert s.batch_size == 4

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("epochz=7\n")
        with pytest.raises(ConfigError, match="epochz"):
            load_settings(cfg)

    def test_invalid_value(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("momentum=1.5\n")
        with pytest.raises(ConfigError, match="momentum"):
            load_settings(cfg)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_settings(tmp_path / "nope.cfg")

    def test_log_level_case(self):
        assert load_settings(log_level="debug").log_level == "DEBUG"


class TestIntrinsics:
    def test_dataset_defaults(self):
        s = Settings()
        assert s.tum_intrinsics.fx == 525.0
        assert s.tum_intrinsics.cx == 319.5
        assert s.sevenscenes_intrinsics.fx == 585.0
        assert s.sevenscenes_intrinsics.cy == 240.0

    def test_synthetic_follows_size(self):
        assert Settings().synth_intrinsics.fx == 70.0
        assert Settings().synth_intrinsics.cx == 32.0
        s = Settings(synth_size=128)
        assert s.synth_intrinsics.fx == 140.0
        assert s.synth_intrinsics.cy == 64.0
        assert Settings(synth_fx=50.0).synth_intrinsics.fx == 50.0


class TestLogging:
    def test_json_lines(self, tmp_path):
        path = tmp_path / "logs" / "run.jsonl"
        logger = configure_logging("INFO", path)
        logging.getLogger("cnnmap.services.trainer").info("epoch %d done", 3)
        for handler in logger.handlers:
            handler.flush()
        record = json.loads(path.read_text().splitlines()[-1])
        assert record["message"] == "epoch 3 done"
        assert record["service"] == "cnnmap"
        assert record["source"] == "cnnmap.services.trainer"
        assert record["status"] == "info"
        assert record["timestamp"].endswith("Z")
        configure_logging("INFO")

    def test_reconfigure_replaces_handlers(self):
        configure_logging("INFO")
        logger = configure_logging("WARNING")
        assert len(logger.handlers) == 1
        assert logger.level == logging.WARNING
        configure_logging("INFO")
