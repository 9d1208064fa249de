import os
from unittest.mock import patch

import pytest

from src.utils.config import Settings, get_config, get_settings, setup_environment


class TestSettings:
    """Test the Settings configuration class."""

    def test_default_values(self):
        """Defaults describe a one-day HTLC and ten-second operator ticks."""
        with patch.dict(os.environ, {}, clear=True):
            settings = Settings(_env_file=None)

            assert settings.app_name == "CBDC Interop Simulator"
            assert settings.debug is False
            assert settings.log_level == "INFO"
            assert settings.seed == 7
            assert settings.htlc_timeout_seconds == 86400
            assert settings.batch_interval_seconds == 10
            assert settings.sync_interval_seconds == 10
            assert settings.deadline_batches == 4
            assert settings.finality_depth == 1
            assert settings.max_frame_bytes == 1024 * 1024
            assert settings.scenario_dir == "scenarios"

    def test_environment_variable_override(self):
        """Environment variables override defaults."""
        with patch.dict(os.environ, {
            "CBDC_SEED": "42",
            "HTLC_TIMEOUT_SECONDS": "3600",
            "FINALITY_DEPTH": "3",
            "DEBUG": "true",
        }):
            settings = Settings(_env_file=None)

            assert settings.seed == 42
            assert settings.htlc_timeout_seconds == 3600
            assert settings.finality_depth == 3
            assert settings.debug is True

    def test_derived_windows(self):
        """Deadline and ticket window follow the interval settings."""
        settings = Settings(_env_file=None, batch_interval_seconds=5, deadline_batches=3,
                            htlc_timeout_seconds=100, ticket_window_factor=2)

        assert settings.deadline_seconds == 15
        assert settings.ticket_window_seconds == 200

    def test_with_overrides_skips_none(self):
        """Only non-None overrides replace fields."""
        settings = Settings(_env_file=None)
        changed = settings.with_overrides(htlc_timeout_seconds=600, finality_depth=None)

        assert changed.htlc_timeout_seconds == 600
        assert changed.finality_depth == settings.finality_depth
        assert settings.htlc_timeout_seconds == 86400

    @pytest.mark.parametrize("field,value", [
        ("batch_interval_seconds", 0),
        ("sync_interval_seconds", -1),
        ("htlc_timeout_seconds", 0),
        ("finality_depth", 0),
    ])
    def test_validate_timing_rejects_bad_values(self, field, value):
        """Non-positive intervals and zero finality are refused."""
        settings = Settings(_env_file=None, **{field: value})

        with pytest.raises(ValueError):
            settings.validate_timing()


class TestConfigAccessors:
    """Test the module-level accessors."""

    def test_get_settings_and_get_config_agree(self):
        """Both accessors return the shared instance."""
        assert get_settings() is get_config()

    def test_setup_environment_creates_logs_dir(self, temp_dir):
        """setup_environment validates timing and creates the log directory."""
        logs_dir = temp_dir / "logs"
        with patch("src.utils.config.settings", Settings(_env_file=None, logs_dir=str(logs_dir))):
            setup_environment()

        assert logs_dir.is_dir()
