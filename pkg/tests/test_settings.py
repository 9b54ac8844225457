import os
from importlib import reload
from unittest.mock import patch

import pytest

import config.settings
from config.settings import Settings


class TestSettings:
    def test_settings_with_valid_env(self):
        """Test settings validation with the test environment"""
        assert Settings.validate() is True

    def test_defaults(self):
        """Test default values when the environment is empty"""
        with patch.dict(os.environ, {}, clear=True), patch("dotenv.load_dotenv"):
            reload(config.settings)
            reloaded = config.settings.Settings
            assert reloaded.LOG_LEVEL == "INFO"
            assert reloaded.LOG_DIR == "/tmp/logs"
            assert reloaded.RESULTS_DIR == "results"
            assert reloaded.MAX_WORKERS == 2
            assert reloaded.PLANT_SUBSTEPS == 10
        reload(config.settings)

    def test_custom_values_from_environment(self):
        """Test values are picked up from environment variables"""
        with patch.dict(os.environ, {"MAX_WORKERS": "4", "PLANT_SUBSTEPS": "5", "LOG_LEVEL": "debug"}):
            reload(config.settings)
            reloaded = config.settings.Settings
            assert reloaded.MAX_WORKERS == 4
            assert reloaded.PLANT_SUBSTEPS == 5
            assert reloaded.LOG_LEVEL == "DEBUG"
        reload(config.settings)

    def test_unparseable_integer_falls_back_to_default(self):
        """Test a malformed integer keeps the default"""
        with patch.dict(os.environ, {"MAX_WORKERS": "many"}):
            reload(config.settings)
            assert config.settings.Settings.MAX_WORKERS == 2
        reload(config.settings)

    def test_invalid_settings_rejected(self):
        """Test validation lists every invalid key"""
        with patch.object(Settings, "LOG_LEVEL", "LOUD"), patch.object(Settings, "PLANT_SUBSTEPS", 0):
            with pytest.raises(ValueError) as excinfo:
                Settings.validate()
        assert "LOG_LEVEL" in str(excinfo.value)
        assert "PLANT_SUBSTEPS" in str(excinfo.value)

    def test_reload_config(self):
        """Test reload_config re-reads the environment"""
        with patch.dict(os.environ, {"RESULTS_DIR": "elsewhere"}), patch("config.settings.load_dotenv"):
            assert Settings.reload_config() is True
            assert Settings.get_current_config()["RESULTS_DIR"] == "elsewhere"
        Settings.reload_config()
