"""
Settings loading
"""

import os
import warnings
from unittest.mock import patch

from app.config import Settings


def test_settings_use_config_dict():
    assert "Config" not in vars(Settings)
    assert Settings.model_config["env_file"] == ".env"
    assert Settings.model_config["case_sensitive"] is True


def test_settings_read_environment():
    with patch.dict(os.environ, {"WORKERS": "3", "workers": "9", "LOG_JSON": "false"}):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            loaded = Settings()
    assert loaded.WORKERS == 3
    assert loaded.LOG_JSON is False
